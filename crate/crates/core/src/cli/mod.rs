//! The `subband` command line: features, train, eval, profile and sweep.

pub mod config;
pub mod sweep;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{Corpus, Split, Task};
use crate::dsp::{FeatureCache, NUM_FRAMES};
use crate::error::Error;
use crate::flops::{count_flops, flops_reduction};
use crate::subband::{
    build_model, paper_layout, uniform_layout, Architecture, ConcatVariant, ModelSpec, PAPER_DROPOUT,
    PAPER_FEATURE_DIM,
};
use crate::train::{evaluate_split, load_checkpoint, save_checkpoint, train, TrainingConfig};

use config::KeyValues;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const DATA_ROOT_ENV: &str = "SUBBAND_DATA_ROOT";
pub const PAPER_KS: [usize; 8] = [8, 16, 24, 32, 40, 48, 56, 64];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "subband", version, about = "Sub-band CNNs for spoken term classification")]
pub struct Cli {
    /// Experiment file of `key = value` lines; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more logging.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Featurize a dataset into a cache file.
    Features {
        #[command(flatten)]
        data: DataArgs,
        /// Cache file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model; writes a checkpoint and metrics CSV.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Directory for model.ckpt, best_dev.ckpt and metrics.csv [default: runs].
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Accuracy of a checkpoint on one split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// train, dev or test [default: test].
        #[arg(long)]
        split: Option<Split>,
        /// Seed for the silence crops of the evaluation set.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-layer FLOPS report, no training.
    Profile {
        #[command(flatten)]
        model: ModelArgs,
        /// Architecture the reduction line compares against.
        #[arg(long)]
        baseline: Option<Architecture>,
        /// Also write the CSV report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trials over architectures and K values; resumable results CSV.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Comma-separated architectures [default: all three].
        #[arg(long, value_delimiter = ',')]
        arch_list: Option<Vec<Architecture>>,
        /// Comma-separated K values [default: 8,16,...,64].
        #[arg(long, value_delimiter = ',')]
        k_list: Option<Vec<usize>>,
        /// Concat variant of the overlapped model.
        #[arg(long)]
        variant: Option<ConcatVariant>,
        /// Band count of the sub-band models [default: 3].
        #[arg(long)]
        bands: Option<usize>,
        /// Seeds per configuration [default: 5].
        #[arg(long)]
        trials: Option<usize>,
        /// Results CSV, rewritten after every row [default: sweep.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// commands, digits or synthetic [default: synthetic].
    #[arg(long)]
    pub task: Option<Task>,
    /// Speech Commands root with per-word folders.
    #[arg(long, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    /// Feature cache reused across runs on real data.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Clips per class for the synthetic task.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Seed of the synthetic task.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// full_band, overlapped_subband or full_plus_nonoverlap [default: overlapped_subband].
    #[arg(long)]
    pub arch: Option<Architecture>,
    /// Number of bands for the sub-band models [default: 3].
    #[arg(long)]
    pub bands: Option<usize>,
    /// Filters per conv layer [default: 8].
    #[arg(long)]
    pub k: Option<usize>,
    /// concat_c_conv1, concat_f_conv1 or concat_conv2 (overlapped only).
    #[arg(long)]
    pub variant: Option<ConcatVariant>,
    /// Dropout rate after each conv block [default: 0.5].
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScheduleArgs {
    /// `paper` (24k + 3k steps) or `desk` (2k + 0.5k).
    #[arg(long)]
    pub schedule: Option<String>,
    /// Seed for init, batch sampling and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total steps, split 24:3 between the two phases.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub steps_phase1: Option<usize>,
    #[arg(long)]
    pub steps_phase2: Option<usize>,
    /// Learning rate of the first phase [default: 0.001].
    #[arg(long)]
    pub lr_phase1: Option<f64>,
    /// Learning rate of the second phase [default: 0.0001].
    #[arg(long)]
    pub lr_phase2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Steps between dev evaluations.
    #[arg(long)]
    pub eval_interval: Option<usize>,
}

const CONFIG_KEYS: &[&str] = &[
    "task", "data_root", "cache", "per_class", "data_seed", "arch", "bands", "k", "variant", "dropout", "schedule",
    "seed", "steps", "steps_phase1", "steps_phase2", "lr_phase1", "lr_phase2", "batch_size", "eval_interval", "out_dir",
    "out", "arch_list", "k_list", "trials", "split", "baseline",
];

/// Resolved dataset selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSource {
    pub task: Task,
    pub root: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub per_class: usize,
    pub data_seed: u64,
}

impl DataSource {
    fn resolve(a: &DataArgs, kv: &KeyValues) -> CliResult<Self> {
        let task = kv.pick(a.task, "task", Task::Synthetic)?;
        let root = kv.pick_opt(a.data_root.clone(), "data_root")?;
        if task != Task::Synthetic {
            match &root {
                None => return Err(usage(format!("--data-root or {DATA_ROOT_ENV} is required for task {task}"))),
                Some(r) if !r.is_dir() => return Err(usage(format!("dataset root {} does not exist", r.display()))),
                _ => {}
            }
        }
        let per_class = kv.pick(a.per_class, "per_class", 50)?;
        if per_class < 2 {
            return Err(usage("--per-class must be at least 2"));
        }
        Ok(Self {
            task,
            root,
            cache: kv.pick_opt(a.cache.clone(), "cache")?,
            per_class,
            data_seed: kv.pick(a.data_seed, "data_seed", 0)?,
        })
    }

    pub fn load(&self) -> CliResult<Corpus> {
        Ok(match (&self.task, &self.root) {
            (Task::Synthetic, _) => Corpus::synthetic(self.per_class, self.data_seed)?,
            (task, Some(root)) => Corpus::load(root, *task, 10.0, 10.0, self.cache.as_deref())?,
            (_, None) => unreachable!("validated in resolve"),
        })
    }
}

/// Builds the model a flag set names, rejecting contradictory combinations.
pub fn model_from(
    arch: Architecture,
    bands: Option<usize>,
    k: usize,
    variant: Option<ConcatVariant>,
    dropout: f64,
) -> CliResult<ModelSpec> {
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(usage(format!("--dropout must lie in [0, 1), got {dropout}")));
    }
    let layout = match arch {
        Architecture::FullBand => {
            if bands.is_some() {
                return Err(usage("--bands does not apply to --arch full_band"));
            }
            None
        }
        Architecture::OverlappedSubband => {
            let b = bands.unwrap_or(3);
            Some(paper_layout(b).map_err(|_| usage(format!("overlapped layouts exist for 2, 3 or 4 bands, got {b}")))?)
        }
        Architecture::FullPlusNonoverlap => {
            let b = bands.unwrap_or(3);
            if b < 2 {
                return Err(usage("full_plus_nonoverlap needs at least 2 bands"));
            }
            Some(uniform_layout(b, PAPER_FEATURE_DIM, 0).map_err(usage)?)
        }
    };
    if arch != Architecture::OverlappedSubband && variant.is_some_and(|v| v != ConcatVariant::default()) {
        return Err(usage(format!("--variant applies only to overlapped_subband, not {arch}")));
    }
    build_model(arch, k, dropout, layout, variant.unwrap_or_default()).map_err(usage)
}

fn resolve_model(m: &ModelArgs, kv: &KeyValues) -> CliResult<ModelSpec> {
    let arch = kv.pick(m.arch, "arch", Architecture::OverlappedSubband)?;
    let bands = kv.pick_opt(m.bands, "bands")?;
    let k = kv.pick(m.k, "k", 8usize)?;
    let variant = kv.pick_opt(m.variant, "variant")?;
    let dropout = kv.pick(m.dropout, "dropout", PAPER_DROPOUT)?;
    model_from(arch, bands, k, variant, dropout)
}

pub fn resolve_schedule(s: &ScheduleArgs, kv: &KeyValues) -> CliResult<TrainingConfig> {
    let base = match kv.pick(s.schedule.clone(), "schedule", "desk".to_owned())?.as_str() {
        "paper" => TrainingConfig::paper(),
        "desk" => TrainingConfig::desk(),
        other => return Err(usage(format!("unknown schedule `{other}` (paper, desk)"))),
    };
    let mut cfg = base.clone();
    if let Some(total) = kv.pick_opt(s.steps, "steps")? {
        cfg.steps_phase1 = total * base.steps_phase1 / base.total_steps().max(1);
        cfg.steps_phase2 = total - cfg.steps_phase1;
    }
    cfg.steps_phase1 = kv.pick(s.steps_phase1, "steps_phase1", cfg.steps_phase1)?;
    cfg.steps_phase2 = kv.pick(s.steps_phase2, "steps_phase2", cfg.steps_phase2)?;
    cfg.lr_phase1 = kv.pick(s.lr_phase1, "lr_phase1", cfg.lr_phase1)?;
    cfg.lr_phase2 = kv.pick(s.lr_phase2, "lr_phase2", cfg.lr_phase2)?;
    cfg.batch_size = kv.pick(s.batch_size, "batch_size", cfg.batch_size)?;
    cfg.eval_interval = kv.pick(s.eval_interval, "eval_interval", cfg.eval_interval)?;
    cfg.seed = kv.pick(s.seed, "seed", cfg.seed)?;
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    crate::dsp::cache::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn cmd_features(data: &DataArgs, out: Option<PathBuf>, kv: &KeyValues, w: &mut dyn Write) -> CliResult<()> {
    let src = DataSource::resolve(data, kv)?;
    let out = kv.pick(out, "out", PathBuf::from("features.sbfc"))?;
    let corpus = match src.task {
        Task::Synthetic => Corpus::synthetic(src.per_class, src.data_seed)?,
        task => Corpus::load(src.root.as_deref().expect("validated"), task, 10.0, 10.0, Some(&out))?,
    };
    let m = corpus.manifest();
    if src.task == Task::Synthetic {
        let mut cache = FeatureCache::new(NUM_FRAMES, crate::dsp::mfcc::NUM_COEFFS);
        for (e, f) in m.entries.iter().zip(corpus.features()) {
            cache.insert(e.path.clone(), f)?;
        }
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        cache.save(&out)?;
    }
    write_file(&out.with_extension("manifest.csv"), &m.to_csv())?;
    let _ = writeln!(w, "wrote {} feature maps to {}", m.len(), out.display());
    for split in Split::ALL {
        let c = m.counts(split);
        let _ = writeln!(w, "{split}: {} ({} keyword, {} unknown, {} silence)", c.total(), c.keyword, c.unknown, c.silence);
    }
    Ok(())
}

fn cmd_train(
    data: &DataArgs,
    model: &ModelArgs,
    schedule: &ScheduleArgs,
    out_dir: Option<PathBuf>,
    kv: &KeyValues,
    w: &mut dyn Write,
) -> CliResult<()> {
    let spec = resolve_model(model, kv)?;
    let cfg = resolve_schedule(schedule, kv)?;
    let src = DataSource::resolve(data, kv)?;
    let out_dir = kv.pick(out_dir, "out_dir", PathBuf::from("runs"))?;
    let corpus = src.load()?;
    let out = train(&spec, &corpus, &cfg)?;
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    save_checkpoint(&out.params, &spec, &out_dir.join("model.ckpt"))?;
    write_file(&out_dir.join("metrics.csv"), &out.log.to_csv())?;
    if let Some((step, acc, params)) = &out.best_dev {
        save_checkpoint(params, &spec, &out_dir.join("best_dev.ckpt"))?;
        let _ = writeln!(w, "best dev accuracy {acc:.4} at step {step}");
    }
    let test = evaluate_split(&spec, &out.params, &corpus, Split::Test, &cfg).ok();
    let _ = writeln!(
        w,
        "{} K={} {} steps in {:.1} s; final dev {}; test {}",
        spec.arch,
        spec.k,
        cfg.total_steps(),
        out.seconds,
        fmt_acc(out.final_dev),
        fmt_acc(test)
    );
    let _ = writeln!(w, "wrote {}", out_dir.display());
    Ok(())
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".into(), |a| format!("{a:.4}"))
}

fn cmd_eval(
    data: &DataArgs,
    checkpoint: &Path,
    split: Option<Split>,
    seed: Option<u64>,
    kv: &KeyValues,
    w: &mut dyn Write,
) -> CliResult<()> {
    let src = DataSource::resolve(data, kv)?;
    let split = kv.pick(split, "split", Split::Test)?;
    let (spec, params) = load_checkpoint(checkpoint)?;
    let corpus = src.load()?;
    let cfg = TrainingConfig {
        seed: kv.pick(seed, "seed", 0)?,
        ..TrainingConfig::default()
    };
    let acc = evaluate_split(&spec, &params, &corpus, split, &cfg)?;
    let _ = writeln!(w, "{split} accuracy {acc:.6}");
    Ok(())
}

fn cmd_profile(
    model: &ModelArgs,
    baseline: Option<Architecture>,
    out: Option<PathBuf>,
    kv: &KeyValues,
    w: &mut dyn Write,
) -> CliResult<()> {
    let spec = resolve_model(model, kv)?;
    let baseline = kv.pick(baseline, "baseline", Architecture::FullBand)?;
    let reference = model_from(baseline, None, spec.k, None, spec.dropout)?;
    let report = count_flops(&spec);
    let reduction = flops_reduction(&reference, &spec)?;
    let mut text = report.to_csv();
    text.push_str(&format!(
        "# flops reduction vs {baseline} K={}: {reduction:.2}% ({} -> {})\n",
        spec.k,
        count_flops(&reference).totals.flops,
        report.totals.flops
    ));
    match kv.pick_opt(out, "out")? {
        Some(path) => {
            write_file(&path, &text)?;
            let _ = writeln!(w, "wrote {}", path.display());
        }
        None => {
            let _ = w.write_all(text.as_bytes());
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name), writing reports to
/// `out`, and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, w: &mut dyn Write) -> CliResult<()> {
    let kv = match &cli.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    kv.check_keys(CONFIG_KEYS)?;
    match cli.command {
        Command::Features { data, out } => cmd_features(&data, out, &kv, w),
        Command::Train {
            data,
            model,
            schedule,
            out_dir,
        } => cmd_train(&data, &model, &schedule, out_dir, &kv, w),
        Command::Eval {
            data,
            checkpoint,
            split,
            seed,
        } => cmd_eval(&data, &checkpoint, split, seed, &kv, w),
        Command::Profile { model, baseline, out } => cmd_profile(&model, baseline, out, &kv, w),
        Command::Sweep {
            data,
            schedule,
            arch_list,
            k_list,
            variant,
            bands,
            trials,
            out,
        } => {
            let plan = sweep::SweepPlan {
                data: DataSource::resolve(&data, &kv)?,
                training: resolve_schedule(&schedule, &kv)?,
                archs: kv.pick_list(arch_list, "arch_list", Architecture::ALL.to_vec())?,
                ks: kv.pick_list(k_list, "k_list", PAPER_KS.to_vec())?,
                variant: kv.pick(variant, "variant", ConcatVariant::default())?,
                bands: kv.pick(bands, "bands", 3)?,
                trials: kv.pick(trials, "trials", 5)?,
                out: kv.pick(out, "out", PathBuf::from("sweep.csv"))?,
            };
            sweep::run_sweep(&plan, w)
        }
    }
}
