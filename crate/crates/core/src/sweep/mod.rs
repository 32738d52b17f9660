//! Strategy ablation: enumerate strategies, train and evaluate one model per
//! strategy, and tabulate the per-class effect of each against the
//! no-preprocessing baseline.

mod cache;
mod config;
mod enumerate;
mod report;
mod run;

pub use cache::{cache_key, CacheStats, PreprocessCache};
pub use config::{sub_seed, DatasetSource, SweepConfig, SweepMode};
pub use enumerate::{enumerate_permutations, enumerate_subsets};
pub use report::{
    impact_svg, impact_table, order_spread, report_csv, validate_report, write_outputs, ClassScores, Delta, Failure,
    ImpactTable, StrategyResult, SweepReport,
};
pub use run::{run_sweep, run_sweep_with_cache};
