use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::SynthSpec;
use crate::error::{Error, Result};
use crate::segnet::{SegConfig, TrainConfig};
use crate::strategy::{parse_strategy, StageParams, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepMode {
    /// All 16 subsets of the four stages, baseline included.
    #[default]
    Subsets,
    /// Every ordering of one strategy, e.g. `"SR+CN+IN+CE"`.
    Permutations { strategy: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SynthSpec),
    Coco { annotations: PathBuf, images: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SynthSpec::default())
    }
}

/// Everything that determines a sweep's results.
///
/// All randomness derives from `seed`: the synthetic dataset, the split,
/// the network initialization and the batch order each get a named
/// sub-seed (see [`sub_seed`]); seed fields inside the nested configs are
/// overwritten. `jobs` and `cache_dir` only affect speed and are left out
/// of the digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub dataset: DatasetSource,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub model: SegConfig,
    pub train: TrainConfig,
    pub params: StageParams,
    pub seed: u64,
    /// Worker threads; 0 picks the number of CPUs.
    pub jobs: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mode: SweepMode::Subsets,
            dataset: DatasetSource::default(),
            split: [0.6, 0.2, 0.2],
            model: SegConfig::default(),
            train: TrainConfig::default(),
            params: StageParams::default(),
            seed: 0,
            jobs: 0,
            cache_dir: None,
        }
    }
}

/// First eight bytes (little-endian) of `sha256(seed_le || name)`.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.params.validate()?;
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f)) || self.split.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter(format!("split fractions {:?} must be in [0, 1] and sum to at most 1", self.split)));
        }
        if let SweepMode::Permutations { strategy } = &self.mode {
            if parse_strategy(strategy)?.is_empty() {
                return Err(Error::EmptyStrategy);
            }
        }
        Ok(())
    }

    /// The base strategy of a permutation sweep.
    pub fn permutation_base(&self) -> Result<Option<Strategy>> {
        match &self.mode {
            SweepMode::Subsets => Ok(None),
            SweepMode::Permutations { strategy } => Ok(Some(parse_strategy(strategy)?.with_params(self.params.clone())?)),
        }
    }

    /// Copy with every nested seed replaced by its derived sub-seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let DatasetSource::Synthetic(spec) = &mut c.dataset {
            spec.seed = sub_seed(self.seed, "synth");
        }
        c.model.seed = sub_seed(self.seed, "init");
        c.train.seed = sub_seed(self.seed, "shuffle");
        c
    }

    /// Hex SHA-256 of the resolved configuration's canonical JSON (sorted
    /// keys), without `jobs` and `cache_dir`.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self.resolved()).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("jobs");
            map.remove("cache_dir");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}
