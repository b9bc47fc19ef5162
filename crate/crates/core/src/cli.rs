//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::federation::{
    run_fedavg_baseline_with, run_fedrav_with, run_local_baseline_with, write_fedrav_checkpoint, write_models,
    MetricsLog, RoundMetrics,
};
use crate::geo::{
    compute_city_stats, export_rgb, partition, read_structure, write_rgb, write_structure,
};
use crate::gradcheck;
use crate::model::write_model;
use crate::rng::{derive, Stream};
use crate::synth::{self, generate, MANIFEST_FILE};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const RGB_FILE: &str = "rgb.tsv";

#[derive(Debug, Parser)]
#[command(name = "regionfl", version, about = "Region-partitioned personalized federated learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fleet with per-vehicle datasets.
    Synth(Common),
    /// Split the fleet into regions and write the structure file.
    Partition(Common),
    /// Train with FedRAV or a baseline and stream per-round metrics.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides the `mode` of the config file.
        #[arg(long, value_parser = ["fedrav", "fedavg", "local"])]
        mode: Option<String>,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// Negates the analytic gradients; used to test the checker.
        #[arg(long, hide = true)]
        flip_sign: bool,
    },
    /// Write per-vehicle RGB colours from three label categories.
    ExportRgb(Common),
    /// Run whatever the config's `mode` names.
    Run(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `paths.out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    CheckFailed,
}

/// Parses `args`, runs the command and maps the outcome to an exit code:
/// 0 on success, 1 when a check fails or output cannot be written, 2 on
/// usage, configuration and input errors.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 1,
        _ => 2,
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config).map_err(|e| match e {
        Error::Io { path, source } => Error::config(format!("cannot read {}: {source}", path.display())),
        other => other,
    })?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.paths.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::usage("--threads must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::usage(format!("cannot build thread pool: {e}")))?
            .install(f),
    }
}

pub fn run(cli: Cli) -> Result<Status> {
    let (common, mode, trials, flip) = match cli.command {
        Command::Synth(c) => (c, Some(Mode::Synth), None, false),
        Command::Partition(c) => (c, Some(Mode::Partition), None, false),
        Command::ExportRgb(c) => (c, Some(Mode::ExportRgb), None, false),
        Command::Run(c) => (c, None, None, false),
        Command::Gradcheck {
            common,
            trials,
            flip_sign,
        } => (common, Some(Mode::Gradcheck), trials, flip_sign),
        Command::Train { common, mode } => {
            let mode = match mode.as_deref() {
                Some("fedavg") => Some(Mode::Fedavg),
                Some("local") => Some(Mode::Local),
                Some(_) => Some(Mode::Fedrav),
                None => None,
            };
            let cfg = load_config(&common)?;
            let mode = mode.unwrap_or(cfg.mode);
            if !mode.is_training() {
                return Err(Error::usage(format!(
                    "train needs mode fedrav, fedavg or local, config says {mode}"
                )));
            }
            return with_threads(common.threads, || cmd_train(&cfg, mode));
        }
    };
    let mut cfg = load_config(&common)?;
    if let Some(t) = trials {
        cfg.gradcheck.trials = t;
        cfg.validate()?;
    }
    let mode = mode.unwrap_or(cfg.mode);
    with_threads(common.threads, || match mode {
        Mode::Synth => cmd_synth(&cfg),
        Mode::Partition => cmd_partition(&cfg),
        Mode::ExportRgb => cmd_export_rgb(&cfg),
        Mode::Gradcheck => cmd_gradcheck(&cfg, flip),
        training => cmd_train(&cfg, training),
    })
}

/// Input files must exist; their absence is a usage error.
fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::config(format!("{what} {} does not exist", path.display())))
    }
}

pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<Status> {
    let dir = cfg.data_dir()?;
    let out = generate(&cfg.synth)?;
    synth::save(&out, dir)?;
    println!("{}", dir.join(MANIFEST_FILE).display());
    Ok(Status::Ok)
}

fn load_data(cfg: &ExperimentConfig) -> Result<synth::SynthOutput> {
    let dir = cfg.data_dir()?;
    require_file(&dir.join(MANIFEST_FILE), "data manifest")?;
    synth::load(dir)
}

pub fn cmd_partition(cfg: &ExperimentConfig) -> Result<Status> {
    let fleet = load_data(cfg)?.fleet;
    let structure = partition(&fleet, &cfg.partition, &mut derive(cfg.seed, Stream::Partition, &[]))?;
    let path = cfg.structure_path()?;
    write_structure(&path, &structure)?;
    let sizes: Vec<String> = structure.regions.iter().map(|r| r.len().to_string()).collect();
    println!("regions {}", structure.k());
    println!("sizes {}", sizes.join(" "));
    println!("quantization_error {}", structure.quantization_error);
    println!("structure {}", path.display());
    Ok(Status::Ok)
}

pub fn cmd_export_rgb(cfg: &ExperimentConfig) -> Result<Status> {
    let fleet = load_data(cfg)?.fleet;
    let stats = compute_city_stats(&fleet)?;
    let rows = export_rgb(&fleet, &stats, cfg.export.categories)?;
    let path = cfg.out_dir()?.join(RGB_FILE);
    write_rgb(&path, &rows)?;
    println!("{}", path.display());
    Ok(Status::Ok)
}

pub fn cmd_gradcheck(cfg: &ExperimentConfig, flip_sign: bool) -> Result<Status> {
    let report = gradcheck::run(cfg.seed, cfg.gradcheck.trials, flip_sign)?;
    println!("seed {} trials {}", report.seed, report.trials);
    for (name, r) in [("model", report.model), ("hypernet", report.hypernet)] {
        println!(
            "{name} max_rel_error {:.3e} worst_trial {} {}",
            r.max_rel_error,
            r.worst_trial,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    Ok(if report.passed() {
        Status::Ok
    } else {
        Status::CheckFailed
    })
}

struct MetricsSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsSink {
    fn create(path: PathBuf) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
        })
    }

    fn push(&mut self, record: &RoundMetrics) -> Result<()> {
        writeln!(self.out, "{}", record.to_json_line())
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn cmd_train(cfg: &ExperimentConfig, mode: Mode) -> Result<Status> {
    let out_dir = cfg.out_dir()?;
    let structure = if mode == Mode::Fedrav {
        let path = cfg.structure_path()?;
        require_file(&path, "structure file")?;
        Some(read_structure(&path)?)
    } else {
        None
    };
    let data = load_data(cfg)?;
    let mut sink = MetricsSink::create(out_dir.join(METRICS_FILE))?;
    let on_round = |r: &RoundMetrics| sink.push(r);
    let ckpt = out_dir.join(CHECKPOINT_DIR);
    let log: MetricsLog = match (mode, structure) {
        (Mode::Fedrav, Some(structure)) => {
            let (state, log) = run_fedrav_with(&structure, &data.datasets, &cfg.federation, on_round)?;
            write_fedrav_checkpoint(&ckpt, &state)?;
            write_structure(&ckpt.join("structure.tsv"), &structure)?;
            log
        }
        (Mode::Fedavg, _) => {
            let (global, log) = run_fedavg_baseline_with(&data.datasets, &cfg.federation, on_round)?;
            write_model(&ckpt.join("global.txt"), &global)?;
            log
        }
        (Mode::Local, _) => {
            let (models, log) = run_local_baseline_with(&data.datasets, &cfg.federation, on_round)?;
            write_models(&ckpt.join("models"), models.iter().enumerate())?;
            log
        }
        _ => unreachable!("training mode checked by the caller"),
    };
    match log.last() {
        Some(last) => println!(
            "{mode} rounds {} final mean_acc {:.4} std_acc {:.4}",
            log.len(),
            last.mean_acc,
            last.std_acc
        ),
        None => println!("{mode} rounds 0"),
    }
    println!("metrics {}", out_dir.join(METRICS_FILE).display());
    Ok(Status::Ok)
}
