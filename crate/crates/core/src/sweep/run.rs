use rayon::prelude::*;

use super::cache::PreprocessCache;
use super::config::{sub_seed, DatasetSource, SweepConfig, SweepMode};
use super::enumerate::{enumerate_permutations, enumerate_subsets};
use super::report::{ClassScores, Failure, StrategyResult, SweepReport};
use crate::dataio::{generate_synthetic, load_coco, split, Dataset, SplitCounts};
use crate::error::{Error, Result};
use crate::image::resize;
use crate::mask::ClassId;
use crate::metrics::mean_iou;
use crate::segnet::{build_model, predict_samples, train, Sample};
use crate::strategy::{StageId, Strategy};

struct Splits {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

fn prepare(
    dataset: &Dataset,
    strategy: &Strategy,
    cache: &PreprocessCache,
    side: usize,
) -> Result<Vec<Sample>> {
    dataset
        .items()
        .par_iter()
        .map(|item| {
            let pre = cache.get_or_compute(&item.image, &item.id, strategy)?;
            let (w, h) = (pre.width(), pre.height());
            if (w, h) == (side, side) {
                Sample::new(&pre, &item.masks)
            } else {
                Sample::new(&resize(&pre, side, side)?, &item.masks.resize_nearest(side, side))
            }
        })
        .collect()
}

fn class_iou(preds: &[crate::mask::MaskSet], truths: &[crate::mask::MaskSet], class: ClassId) -> Result<Option<f64>> {
    match mean_iou(preds, truths, &[class]) {
        Ok(m) => Ok(m.per_class[0].iou),
        Err(Error::EmptyEvaluation) => Ok(None),
        Err(e) => Err(e),
    }
}

fn evaluate_strategy(cfg: &SweepConfig, splits: &Splits, strategy: &Strategy, cache: &PreprocessCache) -> Result<StrategyResult> {
    let side = cfg.model.input_side;
    let train_set = prepare(&splits.train, strategy, cache, side)?;
    let val_set = prepare(&splits.val, strategy, cache, side)?;
    let test_set = prepare(&splits.test, strategy, cache, side)?;
    let (model, history) = train(build_model(&cfg.model)?, &train_set, &val_set, &cfg.train)?;

    let preds = predict_samples(&model, &test_set)?;
    let truths: Vec<_> = test_set.iter().map(|s| s.masks.clone()).collect();
    let mut iou = ClassScores::default();
    for class in ClassId::ALL {
        iou.set(class, class_iou(&preds, &truths, class)?);
    }
    Ok(StrategyResult { strategy: strategy.code(), iou, val_best: history.best_val_mean_iou, loss: history.loss_at_best })
}

fn load(cfg: &SweepConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetSource::Synthetic(spec) => generate_synthetic(spec),
        DatasetSource::Coco { annotations, images } => load_coco(annotations, images),
    }
}

/// [`run_sweep_with_cache`] with a cache in `cfg.cache_dir` (or none).
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    run_sweep_with_cache(cfg, &PreprocessCache::new(cfg.cache_dir.clone()))
}

/// Trains and tests one fresh model per strategy, all from the same
/// initialization, on the same split.
///
/// Strategies run in parallel on `cfg.jobs` threads; results are collected
/// by strategy, so the report is identical for any thread count. A
/// strategy that fails (preprocessing error, divergent training, ...) is
/// listed under `failures` and the rest carry on. Configuration, dataset
/// and split errors abort the sweep.
pub fn run_sweep_with_cache(cfg: &SweepConfig, cache: &PreprocessCache) -> Result<SweepReport> {
    cfg.validate()?;
    let digest = cfg.digest();
    let resolved = cfg.resolved();
    let base = resolved.permutation_base()?;
    let strategies = match &base {
        None => enumerate_subsets(&StageId::ALL, &resolved.params),
        Some(s) => enumerate_permutations(s)?,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolved.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {} workers: {e}", resolved.jobs)))?;

    pool.install(|| {
        let dataset = load(&resolved)?;
        let counts = SplitCounts::from_fractions(dataset.len(), resolved.split)?;
        let (train, val, test) = split(dataset, counts, sub_seed(resolved.seed, "split"))?;
        if train.is_empty() || val.is_empty() || test.is_empty() {
            return Err(Error::InsufficientData { needed: 3, available: train.len() + val.len() + test.len() });
        }
        let splits = Splits { train, val, test };

        let outcomes: Vec<(String, Result<StrategyResult>)> = strategies
            .par_iter()
            .map(|s| (s.code(), evaluate_strategy(&resolved, &splits, s, cache)))
            .collect();

        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (code, outcome) in outcomes {
            match outcome {
                Ok(r) => rows.push(r),
                Err(e) => failures.push(Failure { strategy: code, error: e.to_string() }),
            }
        }
        let permutations = matches!(resolved.mode, SweepMode::Permutations { .. });
        let mut report = SweepReport::assemble(digest, rows, failures, permutations);
        report.notes.insert(
            0,
            format!(
                "split {}/{}/{} (train/val/test) over {} strategies",
                splits.train.len(),
                splits.val.len(),
                splits.test.len(),
                strategies.len()
            ),
        );
        if !permutations {
            report.notes.push("SR+IN is not among the 15 reference strategies; it is evaluated for completeness".into());
            if report.baseline.is_none() {
                report.notes.push("the baseline strategy failed, so no deltas are available".into());
            }
        }
        Ok(report)
    })
}
