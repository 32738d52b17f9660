//! Ordered compositions of preprocessing stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::ipt::{self, ColorParams, MsrParams, ShadowBackend};

/// The four preprocessing stages, ordered canonically SR < CN < IN < CE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageId {
    /// Shadow removal.
    SR,
    /// Colour neutralization (chromatic adaptation).
    CN,
    /// Intensity neutralization (multi-scale retinex).
    IN,
    /// Contrast enhancement (histogram equalization).
    CE,
}

impl StageId {
    pub const ALL: [StageId; 4] = [StageId::SR, StageId::CN, StageId::IN, StageId::CE];

    pub fn code(self) -> &'static str {
        match self {
            StageId::SR => "SR",
            StageId::CN => "CN",
            StageId::IN => "IN",
            StageId::CE => "CE",
        }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for StageId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let code = s.trim();
        StageId::ALL
            .into_iter()
            .find(|st| st.code().eq_ignore_ascii_case(code))
            .ok_or_else(|| Error::UnknownStage(code.to_string()))
    }
}

/// Parameters for every stage; a stage absent from the strategy ignores its
/// entry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StageParams {
    pub shadow: ShadowBackend,
    pub color: ColorParams,
    pub msr: MsrParams,
}

impl StageParams {
    pub fn validate(&self) -> Result<()> {
        self.shadow.validate()?;
        self.color.validate()?;
        self.msr.validate()
    }
}

/// A duplicate-free ordered list of stages plus their parameters. The empty
/// strategy is the no-preprocessing baseline.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Strategy {
    stages: Vec<StageId>,
    #[serde(default)]
    params: StageParams,
}

impl Strategy {
    pub fn baseline() -> Self {
        Self::default()
    }

    pub fn new(stages: Vec<StageId>, params: StageParams) -> Result<Self> {
        for (i, s) in stages.iter().enumerate() {
            if stages[..i].contains(s) {
                return Err(Error::DuplicateStage(*s));
            }
        }
        params.validate()?;
        Ok(Self { stages, params })
    }

    pub fn stages(&self) -> &[StageId] {
        &self.stages
    }

    pub fn params(&self) -> &StageParams {
        &self.params
    }

    pub fn with_params(mut self, params: StageParams) -> Result<Self> {
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    pub fn is_baseline(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Compact code form, `SR+CN`; empty for the baseline.
    pub fn code(&self) -> String {
        self.stages.iter().map(|s| s.code()).collect::<Vec<_>>().join("+")
    }

    /// Table label, `SR + CN`, or `Without IPT` for the baseline.
    pub fn label(&self) -> String {
        if self.is_baseline() {
            "Without IPT".to_string()
        } else {
            self.stages.iter().map(|s| s.code()).collect::<Vec<_>>().join(" + ")
        }
    }

    /// Stable byte encoding of stages and parameters, used for cache keys.
    pub fn canonical_encoding(&self) -> Vec<u8> {
        let mut out = self.code().into_bytes();
        out.push(0);
        out.extend(serde_json::to_vec(&self.params).expect("params serialize"));
        out
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_strategy(s)
    }
}

/// Validates an ordered stage list, attaching default parameters.
pub fn validate_strategy(stages: &[StageId]) -> Result<Strategy> {
    Strategy::new(stages.to_vec(), StageParams::default())
}

/// Parses `SR+CN+IN+CE` style text: case-insensitive codes joined by `+`,
/// whitespace ignored. The empty string is the baseline.
pub fn parse_strategy(text: &str) -> Result<Strategy> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Strategy::baseline());
    }
    let stages = text.split('+').map(str::parse).collect::<Result<Vec<StageId>>>()?;
    validate_strategy(&stages)
}

/// Runs one stage.
pub fn apply_stage(stage: StageId, params: &StageParams, image: &ImageBuffer, image_id: &str) -> Result<ImageBuffer> {
    match stage {
        StageId::SR => ipt::shadow_removal(image, &params.shadow, image_id),
        StageId::CN => ipt::color_neutralize(image, params.color.source, params.color.target),
        StageId::IN => ipt::intensity_neutralize(image, &params.msr),
        StageId::CE => Ok(ipt::contrast_enhance(image)),
    }
}

/// Left-to-right composition of the strategy's stages. `image_id` keys the
/// external shadow backend.
pub fn apply_strategy(strategy: &Strategy, image: &ImageBuffer, image_id: &str) -> Result<ImageBuffer> {
    let mut current = image.clone();
    for &stage in &strategy.stages {
        current = apply_stage(stage, &strategy.params, &current, image_id)?;
    }
    Ok(current)
}
