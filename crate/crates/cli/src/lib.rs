//! `framescope` command-line front end.
//!
//! [`dispatch`] is the whole program; `main` only forwards `std::env::args`
//! and exits with its return value. Exit codes: 0 success, 1 runtime
//! failure (diagnostic on stderr), 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;

use framescope_core::dataio::{generate_synthetic, load_dataset_dir, save_dataset_dir, split, Dataset, SplitCounts, SynthSpec};
use framescope_core::geometry::{rectify_quad, RectifySidecar};
use framescope_core::metrics::{mean_iou, MeanIoU};
use framescope_core::segnet::{build_model, checkpoint, predict_samples, train, Sample};
use framescope_core::sweep::{run_sweep_with_cache, sub_seed, write_outputs, PreprocessCache, SweepConfig, SweepMode, SweepReport};
use framescope_core::{apply_strategy, parse_strategy, resize_canonical, ClassId, Error, ImageBuffer, StageParams, Strategy};

/// Environment variable overriding the preprocessing cache directory.
pub const CACHE_ENV: &str = "FRAMESCOPE_CACHE";

#[derive(Debug, Parser)]
#[command(name = "framescope", version, about = "Window-frame defect preprocessing, segmentation and ablation sweeps")]
struct Cli {
    /// Worker threads (0 = all CPUs). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Perspective-rectify one image from a sidecar or an explicit quad.
    Rectify(RectifyArgs),
    /// Apply a preprocessing strategy to an image or a directory of PNGs.
    Preprocess(PreprocessArgs),
    /// Generate the synthetic defect dataset.
    Synth(SynthArgs),
    /// Train a segmentation model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a trained model on a dataset directory.
    Eval(EvalArgs),
    /// Train and test one model per strategy and write the comparison.
    Sweep(SweepArgs),
    /// Validate a report.json and regenerate its CSV and charts.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct RectifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON sidecar with `src` corners and optional output size.
    #[arg(long, conflicts_with = "quad")]
    sidecar: Option<PathBuf>,
    /// Corners TL,TR,BR,BL as `x,y;x,y;x,y;x,y`.
    #[arg(long, required_unless_present = "sidecar")]
    quad: Option<String>,
    #[arg(long, default_value_t = 500)]
    width: usize,
    #[arg(long, default_value_t = 500)]
    height: usize,
}

#[derive(Debug, Args)]
struct StrategyArgs {
    /// Stage codes joined by '+', e.g. "SR+CN+IN+CE"; empty for none.
    #[arg(long, default_value = "")]
    strategy: String,
    /// JSON file with stage parameters.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// A PNG file or a directory of PNGs.
    #[arg(long)]
    input: PathBuf,
    /// Output PNG (file input) or directory (directory input).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Resize to this square side after preprocessing.
    #[arg(long)]
    resize: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON synthesis spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    side: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration (same layout as a sweep config); flags
    /// override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory (annotations.json + images/).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write; a `.history.json` is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Sweep every ordering of this strategy instead of all subsets.
    #[arg(long)]
    permutations: Option<String>,
    /// Preprocessing cache directory (overrides $FRAMESCOPE_CACHE).
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

type CliResult<T> = Result<T, Error>;

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(serde_json::from_str(&text)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io { path: parent.into(), source: e })?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn pretty(value: &serde_json::Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("json value serializes");
    out.push(b'\n');
    out
}

fn load_strategy(args: &StrategyArgs) -> CliResult<Strategy> {
    let params: StageParams = match &args.params {
        Some(p) => read_json(p)?,
        None => StageParams::default(),
    };
    parse_strategy(&args.strategy)?.with_params(params)
}

fn thread_pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker threads: {e}")))
}

fn parse_quad(text: &str) -> CliResult<[[f64; 2]; 4]> {
    let bad = || Error::InvalidParameter(format!("quad {text:?} must be four `x,y` pairs separated by ';'"));
    let pts: Vec<[f64; 2]> = text
        .split(';')
        .map(|p| {
            let v: Vec<f64> = p.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<CliResult<_>>()?;
            <[f64; 2]>::try_from(v).map_err(|_| bad())
        })
        .collect::<CliResult<_>>()?;
    pts.try_into().map_err(|_| bad())
}

fn rectify(a: &RectifyArgs) -> CliResult<()> {
    let image = ImageBuffer::load_png(&a.input)?;
    let out = match (&a.sidecar, &a.quad) {
        (Some(path), _) => RectifySidecar::load(path)?.apply(&image)?,
        (None, Some(q)) => rectify_quad(&image, parse_quad(q)?, a.width, a.height)?,
        (None, None) => unreachable!("clap requires one of --sidecar / --quad"),
    };
    out.save_png(&a.out)
}

fn image_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn preprocess_one(input: &Path, out: &Path, strategy: &Strategy, resize: Option<usize>) -> CliResult<()> {
    let image = ImageBuffer::load_png(input)?;
    let mut pre = apply_strategy(strategy, &image, &image_id(input))?;
    if let Some(side) = resize {
        pre = resize_canonical(&pre, side)?;
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io { path: parent.into(), source: e })?;
    }
    pre.save_png(out)
}

fn preprocess(a: &PreprocessArgs, jobs: Option<usize>) -> CliResult<()> {
    let strategy = load_strategy(&a.strategy)?;
    if !a.input.is_dir() {
        return preprocess_one(&a.input, &a.out, &strategy, a.resize);
    }
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(&a.input)
        .map_err(|e| Error::Io { path: a.input.clone(), source: e })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    inputs.sort();
    use rayon::prelude::*;
    thread_pool(jobs)?.install(|| {
        inputs.par_iter().try_for_each(|p| {
            let name = p.file_name().expect("read_dir entries have names");
            preprocess_one(p, &a.out.join(name), &strategy, a.resize)
        })
    })
}

fn synth(a: &SynthArgs, cli: &Cli) -> CliResult<()> {
    let mut spec: SynthSpec = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(c) = a.count {
        spec.count = c;
    }
    if let Some(s) = a.side {
        spec.side = s;
    }
    // Same derivation as a sweep, so `synth --seed S` reproduces a sweep's data.
    spec.seed = sub_seed(cli.seed.unwrap_or(spec.seed), "synth");
    let dataset = thread_pool(cli.jobs)?.install(|| generate_synthetic(&spec))?;
    save_dataset_dir(&dataset, &a.out)?;
    eprintln!("wrote {} images to {}", dataset.len(), a.out.display());
    Ok(())
}

/// Defaults < JSON file < flags.
fn run_config(run: &RunArgs, cli: &Cli) -> CliResult<SweepConfig> {
    let mut cfg: SweepConfig = match &run.config {
        Some(p) => read_json(p)?,
        None => SweepConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = run.steps {
        cfg.train.steps = s;
    }
    if let Some(lr) = run.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(b) = run.batch_size {
        cfg.train.batch_size = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn samples(dataset: &Dataset, strategy: &Strategy, side: usize) -> CliResult<Vec<Sample>> {
    use rayon::prelude::*;
    dataset
        .items()
        .par_iter()
        .map(|item| {
            let pre = apply_strategy(strategy, &item.image, &item.id)?;
            let pre = if pre.width() == side && pre.height() == side { pre } else { resize_canonical(&pre, side)? };
            Sample::new(&pre, &item.masks.resize_nearest(side, side))
        })
        .collect()
}

fn iou_json(m: &MeanIoU) -> serde_json::Value {
    let per: serde_json::Map<String, serde_json::Value> =
        ClassId::ALL.iter().map(|&c| (c.key().to_string(), json!(m.class(c).and_then(|x| x.iou)))).collect();
    json!({ "mean": m.mean, "iou": per })
}

fn train_cmd(a: &TrainArgs, cli: &Cli) -> CliResult<()> {
    let cfg = run_config(&a.run, cli)?.resolved();
    let strategy = load_strategy(&a.strategy)?;
    thread_pool(Some(cfg.jobs))?.install(|| {
        let dataset = load_dataset_dir(&a.data)?;
        let counts = SplitCounts::from_fractions(dataset.len(), cfg.split)?;
        let (tr, va, te) = split(dataset, counts, sub_seed(cfg.seed, "split"))?;
        let side = cfg.model.input_side;
        let (tr, va) = (samples(&tr, &strategy, side)?, samples(&va, &strategy, side)?);
        let (model, history) = train(build_model(&cfg.model)?, &tr, &va, &cfg.train)?;
        checkpoint::save(&model, &a.out)?;
        let mut summary = json!({
            "strategy": strategy.code(),
            "best_epoch": history.best_epoch,
            "best_val_mean_iou": history.best_val_mean_iou,
            "loss_at_best": history.loss_at_best,
        });
        if !te.is_empty() {
            let te = samples(&te, &strategy, side)?;
            let truths: Vec<_> = te.iter().map(|s| s.masks.clone()).collect();
            if let Ok(m) = mean_iou(&predict_samples(&model, &te)?, &truths, &ClassId::ALL) {
                summary["test"] = iou_json(&m);
            }
        }
        let mut hist_path = a.out.clone().into_os_string();
        hist_path.push(".history.json");
        write_file(Path::new(&hist_path), &pretty(&serde_json::to_value(&history)?))?;
        print!("{}", String::from_utf8(pretty(&summary)).expect("json is utf-8"));
        Ok(())
    })
}

fn eval_cmd(a: &EvalArgs, jobs: Option<usize>) -> CliResult<()> {
    let model = checkpoint::load(&a.model)?;
    let strategy = load_strategy(&a.strategy)?;
    let result = thread_pool(jobs)?.install(|| -> CliResult<serde_json::Value> {
        let data = samples(&load_dataset_dir(&a.data)?, &strategy, model.config().input_side)?;
        let truths: Vec<_> = data.iter().map(|s| s.masks.clone()).collect();
        Ok(iou_json(&mean_iou(&predict_samples(&model, &data)?, &truths, &ClassId::ALL)?))
    })?;
    match &a.out {
        Some(p) => write_file(p, &pretty(&result)),
        None => {
            print!("{}", String::from_utf8(pretty(&result)).expect("json is utf-8"));
            Ok(())
        }
    }
}

fn sweep_cmd(a: &SweepArgs, cli: &Cli) -> CliResult<()> {
    let mut cfg = run_config(&a.run, cli)?;
    if let Some(s) = &a.permutations {
        cfg.mode = SweepMode::Permutations { strategy: s.clone() };
        cfg.validate()?;
    }
    if let Some(dir) = a.cache.clone().or_else(|| std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)) {
        cfg.cache_dir = Some(dir);
    }
    let cache = PreprocessCache::new(cfg.cache_dir.clone());
    let report = run_sweep_with_cache(&cfg, &cache)?;
    write_outputs(&report, &a.out)?;
    for f in &report.failures {
        eprintln!("strategy {:?} failed: {}", f.strategy, f.error);
    }
    eprintln!("{} strategies evaluated, {} failed; results in {}", report.rows.len(), report.failures.len(), a.out.display());
    Ok(())
}

fn report_cmd(a: &ReportArgs) -> CliResult<()> {
    let bytes = std::fs::read(&a.input).map_err(|e| Error::Io { path: a.input.clone(), source: e })?;
    let report = SweepReport::from_json_bytes(&bytes)?;
    write_outputs(&report, &a.out)?;
    print!("{}", framescope_core::sweep::report_csv(&report));
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Rectify(a) => rectify(a),
        Command::Preprocess(a) => preprocess(a, cli.jobs),
        Command::Synth(a) => synth(a, cli),
        Command::Train(a) => train_cmd(a, cli),
        Command::Eval(a) => eval_cmd(a, cli.jobs),
        Command::Sweep(a) => sweep_cmd(a, cli),
        Command::Report(a) => report_cmd(a),
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
