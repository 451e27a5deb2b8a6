//! The `ma3` command line: argument parsing, run directories and exit codes.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint::{checkpoint_to_snapshot, snapshot_to_checkpoint, Checkpoint};
use crate::config::{load_config, parse_config, to_config_text};
use crate::data::{export_png, load_image_directory, make_synthetic, SplitSpec};
use crate::error::{Error, Result};
use crate::gradcheck::{run_gradcheck, Preset};
use crate::trainer::{
    evaluate_sampled, lambda_search, stream_rng, streams, DatasetSpec, EvalResult, LambdaRow, LambdaSearch,
    MetricsRecord, TaskData, TrainConfig, Trainer, COARSE_GRID,
};
use crate::verify::approx_verify;

pub const RUN_DIR_ENV: &str = "MA3_RUN_DIR";

pub mod exit {
    pub const OK: i32 = 0;
    pub const VERIFY_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NON_FINITE: i32 = 3;
    pub const CHECKPOINT_VERSION: i32 = 4;
    pub const GRADCHECK_FAILED: i32 = 5;
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. } => exit::NON_FINITE,
        Error::CheckpointVersion { .. } => exit::CHECKPOINT_VERSION,
        Error::Io(_) => 1,
        _ => exit::CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ma3",
    version,
    about = "Adversarial affine augmentation for few-shot learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one run and write manifest, metrics and checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint without augmentation.
    Eval(EvalArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
    /// Residual scaling of the affine approximation to projection.
    ApproxVerify(VerifyArgs),
    /// Two-stage λ search on the validation split.
    LambdaSearch(SearchArgs),
    /// Write the synthetic glyph dataset as a PNG tree.
    MakeSynth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key = value` config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set episodes=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut overrides = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::config(s.clone(), "expected KEY=VALUE"))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(m) = &self.mode {
            overrides.push(("mode".into(), m.clone()));
        }
        if let Some(l) = &self.lambda {
            overrides.push(("lambda".into(), l.clone()));
        }
        if let Some(s) = self.seed {
            overrides.push(("seed".into(), s.to_string()));
        }
        let config = match &self.config {
            Some(path) => load_config(path, &overrides)?,
            None => parse_config("", &overrides)?,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run name; defaults to `{mode}-seed{seed}`.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `synthetic`, or an image directory whose classes are all evaluated;
    /// defaults to the checkpoint's own dataset.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value_t = 600)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `test` or `val`.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// default, tiny, quick or bug.
    #[arg(long, default_value = "default")]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.04")]
    pub magnitudes: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long, default_value_t = 10.0)]
    pub z0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Coarse grid; defaults to 1e-3,1e-2,1e-1,1,10.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 90)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    #[arg(long, default_value_t = 28)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name) and runs the command,
/// writing reports to `out`. Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Train(a) => {
            let config = a.config.resolve()?;
            let name = a.name.unwrap_or_else(|| default_run_name(&config));
            let outcome = train_run(config, &run_root(), &name)?;
            writeln!(out, "run {}", outcome.dir.display())?;
            if let Some(v) = outcome.val {
                writeln!(out, "val {:.4}±{:.4} {}", v.mean, v.half_width, v.episodes)?;
            }
            writeln!(out, "{}", accuracy_line(&outcome.test, outcome.seed))?;
            Ok(exit::OK)
        }
        Command::Eval(a) => {
            let (result, seed) = eval_checkpoint(&a)?;
            writeln!(out, "{}", accuracy_line(&result, seed))?;
            Ok(exit::OK)
        }
        Command::Gradcheck(a) => {
            let preset = Preset::named(&a.preset)?;
            let report = run_gradcheck(&preset, a.seed);
            write!(out, "{report}")?;
            if report.passed() {
                Ok(exit::OK)
            } else {
                let w = report.worst();
                writeln!(out, "worst component: {} (max_rel_err {:.3e})", w.name, w.max_rel_err)?;
                Ok(exit::GRADCHECK_FAILED)
            }
        }
        Command::ApproxVerify(a) => {
            let report = approx_verify(&a.magnitudes, a.points, a.z0, a.seed)?;
            writeln!(out, "{report}")?;
            Ok(if report.passed() { exit::OK } else { exit::VERIFY_FAILED })
        }
        Command::LambdaSearch(a) => {
            let config = a.config.resolve()?;
            let grid = a.grid.unwrap_or_else(|| COARSE_GRID.to_vec());
            let name = a.name.unwrap_or_else(|| format!("lambda-search-seed{}", config.seed));
            writeln!(out, "{:>5} {:>10} {:>8} {:>8}", "stage", "lambda", "val_acc", "ci")?;
            let search = search_run(config, &grid, &run_root(), &name, |row| {
                let _ = writeln!(out, "{}", format_row(row));
            })?;
            writeln!(out, "best lambda {}", search.best)?;
            Ok(exit::OK)
        }
        Command::MakeSynth(a) => {
            let ds = make_synthetic(a.classes, a.per_class, a.size, a.seed)?;
            export_png(&ds, &a.out)?;
            writeln!(
                out,
                "wrote {} images in {} classes to {}",
                ds.num_images(),
                ds.num_classes(),
                a.out.display()
            )?;
            Ok(exit::OK)
        }
    }
}

/// `$MA3_RUN_DIR`, or `runs` in the working directory.
pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn default_run_name(c: &TrainConfig) -> String {
    format!("{}-seed{}", c.mode.as_str(), c.seed)
}

/// `accuracy mean±ci episodes seed`
pub fn accuracy_line(r: &EvalResult, seed: u64) -> String {
    format!("accuracy {:.4}±{:.4} {} {}", r.mean, r.half_width, r.episodes, seed)
}

fn format_row(r: &LambdaRow) -> String {
    format!("{:>5} {:>10} {:>8.4} {:>8.4}", r.stage, r.lambda, r.val_acc, r.val_ci)
}

/// Hex SHA-256 of a git-style blob header followed by `text`.
pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub config_hash: String,
    pub dataset: String,
    pub version: String,
    pub started_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: &TrainConfig, dataset: &str) -> Self {
        let text = to_config_text(config);
        Self {
            command: command.into(),
            config_hash: content_hash(&text),
            config: text,
            dataset: dataset.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    /// Writes `manifest.json` and the resolved `config.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(self).expect("manifest serialize") + "\n",
        )?;
        fs::write(dir.join("config.txt"), &self.config)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub records: Vec<MetricsRecord>,
    pub val: Option<EvalResult>,
    pub test: EvalResult,
    pub seed: u64,
}

/// One full training run under `root/name`: manifest, `metrics.jsonl`,
/// `{name}-{episode}.ckpt` at every validation point, then the test split.
/// A non-finite loss appends the offending record to the metrics file
/// before the error is returned.
pub fn train_run(config: TrainConfig, root: &Path, name: &str) -> Result<TrainOutcome> {
    config.validate()?;
    let data = TaskData::from_config(&config)?;
    let dir = root.join(name);
    RunManifest::new("train", &config, &data.dataset.source).write(&dir)?;
    let mut metrics = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
    let mut trainer = Trainer::for_task(config.clone(), &data)?;
    let result = trainer.run(&data, |t, rec| {
        writeln!(metrics, "{}", rec.to_json_line())?;
        if rec.val_acc.is_some() {
            let ckpt = snapshot_to_checkpoint(&t.config, rec.episode, &t.classifier, &t.adversary);
            ckpt.save(&dir.join(format!("{name}-{}.ckpt", rec.episode)))?;
        }
        Ok(())
    });
    let records = match result {
        Ok(r) => r,
        Err(e) => {
            if let Error::NonFinite { detail, .. } = &e {
                writeln!(metrics, "{detail}")?;
            }
            metrics.flush()?;
            return Err(e);
        }
    };
    metrics.flush()?;
    let val = records.last().and_then(|r| {
        Some(EvalResult {
            mean: r.val_acc?,
            half_width: r.val_ci?,
            episodes: config.val_episodes,
        })
    });
    let test = trainer.test(&data)?;
    fs::write(
        dir.join("result.json"),
        serde_json::json!({ "val": val, "test": test }).to_string() + "\n",
    )?;
    Ok(TrainOutcome {
        dir,
        records,
        val,
        test,
        seed: config.seed,
    })
}

/// λ search under `root/name`, writing a manifest and one JSON line per
/// evaluated λ to `lambda-search.jsonl`.
pub fn search_run(
    config: TrainConfig,
    grid: &[f64],
    root: &Path,
    name: &str,
    mut on_row: impl FnMut(&LambdaRow),
) -> Result<LambdaSearch> {
    let data = TaskData::from_config(&config)?;
    let dir = root.join(name);
    RunManifest::new("lambda-search", &config, &data.dataset.source).write(&dir)?;
    let mut table = BufWriter::new(File::create(dir.join("lambda-search.jsonl"))?);
    let mut write_err = None;
    let search = lambda_search(&config, &data, grid, |row| {
        if let Err(e) = writeln!(table, "{}", serde_json::to_string(row).expect("row serialize")) {
            write_err.get_or_insert(e);
        }
        on_row(row);
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    writeln!(table, "{}", serde_json::json!({ "best": search.best }))?;
    table.flush()?;
    Ok(search)
}

/// Loads a checkpoint and evaluates it on fixed episodes drawn from `seed`.
/// The checkpoint file is only read.
pub fn eval_checkpoint(a: &EvalArgs) -> Result<(EvalResult, u64)> {
    if a.episodes == 0 {
        return Err(Error::Contract("episodes must be at least 1".into()));
    }
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let snap = checkpoint_to_snapshot(&ckpt)?;
    let config = snap.config;
    let data = match a.dataset.as_deref() {
        None => TaskData::from_config(&config)?,
        Some("synthetic") => TaskData::from_config(&parse_config(
            &to_config_text(&config),
            &[("dataset".into(), "synthetic".into())],
        )?)?,
        // every class of a plain directory is evaluated
        Some(dir) => {
            let invert = match &config.dataset {
                DatasetSpec::Directory { invert, .. } => *invert,
                DatasetSpec::Synthetic { .. } => true,
            };
            let size = config.image_size;
            let ds = load_image_directory(Path::new(dir), size, size, invert, config.k_shot + config.q_query)?;
            let n = ds.num_classes();
            TaskData::new(ds, SplitSpec::sequential(0, 0, n))?
        }
    };
    let (classes, stream) = match a.split.as_str() {
        "test" => (&data.split.test, streams::TEST_EPISODES),
        "val" if a.dataset.as_deref().is_none_or(|d| d == "synthetic") => (&data.split.val, streams::VAL_EPISODES),
        other => return Err(Error::config("split", format!("expected test or val, got `{other}`"))),
    };
    let mut classifier = snap.classifier;
    let mut rng = stream_rng(a.seed, stream);
    let shape = (config.n_way, config.k_shot, config.q_query);
    let result = evaluate_sampled(
        &mut classifier,
        config.head,
        &data.dataset,
        classes,
        shape,
        a.episodes,
        &mut rng,
    )?;
    Ok((result, a.seed))
}
