//! Command-line interface: `synth`, `train`, `mosaic`, `evaluate`, `report`.
//!
//! Every command writes its artifacts under `--out-dir` and finishes with a
//! `manifest.json` listing the resolved flags and a SHA-256 per artifact.
//! Exit codes: 0 success, 1 data or runtime failure, 2 usage error.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{
    chronological_split, load_interactions, ColumnMap, Corpus, Delimiter, InputFormat,
    LabelColumn, SplitCorpus, SplitSpec,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Candidates};
use crate::memory::{mosaic, InitSpec, MRule, MemoryConfig, SeriesSource};
use crate::model::{init_params, LossConfig, ModelParams, DEFAULT_DIM};
use crate::synth::{generate, SynthSpec};
use crate::trainers::{
    test_pair_loss, train_bpr, train_bpr_batch, train_pair_loss, train_saros_b, train_saros_m,
    TrainConfig, TrainTrace, TrainerKind,
};

#[derive(Debug, Parser)]
#[command(name = "saros", version, about = "Sequential pairwise ranking for implicit feedback")]
pub struct Cli {
    /// Seed for initialisation, sampling and synthesis.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads for evaluation, memory analysis and synthesis.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory receiving all artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-factor corpus and its ground truth.
    Synth(SynthArgs),
    /// Train one model and write its checkpoint and loss trace.
    Train(TrainArgs),
    /// Train, drop users with non-stationary series, retrain.
    Mosaic(MosaicArgs),
    /// Rank test items with a checkpoint and score MAP, NDCG and MRR.
    Evaluate(EvaluateArgs),
    /// Merge loss traces and compare runs side by side.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Tsv,
    Csv,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Interaction log: user, item, timestamp, label (or rating).
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long, value_enum, default_value_t = FileFormat::Tsv)]
    pub format: FileFormat,

    /// Zero-based positions of user,item,timestamp,label.
    #[arg(long, default_value = "0,1,2,3")]
    pub columns: String,

    #[arg(long)]
    pub has_header: bool,

    /// Read the label column as a rating; positive when >= threshold.
    #[arg(long)]
    pub rating_threshold: Option<f64>,

    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Latent dimension.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,

    /// L2 weight in the pairwise loss.
    #[arg(long, default_value_t = LossConfig::default().lambda)]
    pub lambda: f64,

    /// Half-width of the uniform initialisation; default 1/sqrt(dim).
    #[arg(long)]
    pub init_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = TrainConfig::default().eta)]
    pub eta: f64,

    #[arg(long, default_value_t = TrainConfig::default().b_min)]
    pub b_min: usize,

    /// Per-epoch cap on block updates; default is the mean block count.
    #[arg(long)]
    pub b_max: Option<usize>,

    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,

    /// Stop after this many seconds even if epochs remain.
    #[arg(long)]
    pub time_budget_secs: Option<f64>,

    /// Record every n-th update in the trace; 0 disables it.
    #[arg(long, default_value_t = 1)]
    pub trace_every: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub optim: OptimArgs,

    /// saros-b, saros-m, bpr or bpr-batch.
    #[arg(long, default_value = "saros-b")]
    pub trainer: TrainerKind,

    #[arg(long, default_value_t = TrainConfig::default().momentum_mu)]
    pub momentum_mu: f64,

    #[arg(long, default_value_t = TrainConfig::default().momentum_alpha)]
    pub momentum_alpha: f64,

    /// Draws per epoch for `bpr`; default is the number of train interactions.
    #[arg(long)]
    pub bpr_samples: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MosaicArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub optim: OptimArgs,

    /// embedding or feedback.
    #[arg(long, default_value = "embedding")]
    pub memory_source: SeriesSource,

    /// Keep users with at least this many stationary series.
    #[arg(long, default_value_t = crate::memory::DEFAULT_KEEP_THRESHOLD)]
    pub keep_threshold: usize,

    /// Frequencies in the regression: sqrt, pow:<p> or a fixed count.
    #[arg(long, default_value = "sqrt")]
    pub m_rule: MRule,

    #[arg(long, default_value_t = crate::memory::DEFAULT_MIN_SERIES_LEN)]
    pub min_series_len: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Comma-separated cutoffs.
    #[arg(long = "k", value_delimiter = ',', default_value = "5,10")]
    pub ks: Vec<usize>,

    /// test: rank the user's test items; all: rank the whole catalogue.
    #[arg(long, default_value = "test")]
    pub candidates: Candidates,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A loss trace as `label=path`; repeat for each run.
    #[arg(long = "trace", value_parser = parse_labeled)]
    pub traces: Vec<(String, PathBuf)>,

    /// A checkpoint as `label=path`, scored on `--input`.
    #[arg(long = "checkpoint", value_parser = parse_labeled, requires = "input")]
    pub checkpoints: Vec<(String, PathBuf)>,

    #[arg(long)]
    pub input: Option<PathBuf>,

    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,

    /// Cutoff for the metric columns.
    #[arg(long = "k", default_value_t = 5)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = SynthSpec::default().n_users)]
    pub users: usize,

    #[arg(long, default_value_t = SynthSpec::default().n_items)]
    pub items: usize,

    #[arg(long, default_value_t = SynthSpec::default().k_true)]
    pub k_true: usize,

    #[arg(long, default_value_t = SynthSpec::default().interactions_per_user)]
    pub interactions_per_user: usize,

    #[arg(long, default_value_t = SynthSpec::default().positive_rate)]
    pub positive_rate: f64,

    #[arg(long, default_value_t = SynthSpec::default().drift_fraction)]
    pub drift_fraction: f64,

    #[arg(long, default_value_t = SynthSpec::default().drift_step)]
    pub drift_step: f64,

    #[arg(long, default_value_t = SynthSpec::default().noise_level)]
    pub noise_level: f64,

    /// Corpus path; defaults to `corpus.tsv` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_labeled(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => {
            Ok((label.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected label=path, got {s:?}")),
    }
}

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
    /// False when the content depends on wall-clock time.
    pub deterministic: bool,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub argv: Vec<String>,
    pub flags: BTreeMap<String, Vec<String>>,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub artifacts: BTreeMap<String, Artifact>,
    pub wall_clock_ms: f64,
}

/// Collects artifacts as they are written and emits the manifest.
struct Run {
    manifest: RunManifest,
    out_dir: PathBuf,
    start: Instant,
}

impl Run {
    fn new(command: &str, cli: &Cli, matches: &ArgMatches) -> Self {
        let mut flags = BTreeMap::new();
        collect_flags(matches, &mut flags);
        if let Some((_, sub)) = matches.subcommand() {
            collect_flags(sub, &mut flags);
        }
        Run {
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION"),
                argv: std::env::args().collect(),
                flags,
                seed: cli.seed,
                inputs: Vec::new(),
                artifacts: BTreeMap::new(),
                wall_clock_ms: 0.0,
            },
            out_dir: cli.out_dir.clone(),
            start: Instant::now(),
        }
    }

    fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write<F>(&mut self, key: &str, path: PathBuf, deterministic: bool, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        write_atomic(&path, body)?;
        let (sha256, bytes) = checksum(&path)?;
        self.manifest.artifacts.insert(
            key.to_string(),
            Artifact {
                path,
                sha256,
                bytes,
                deterministic,
            },
        );
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.wall_clock_ms = self.start.elapsed().as_secs_f64() * 1e3;
        let path = self.path("manifest.json");
        let manifest = &self.manifest;
        write_atomic(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, manifest)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

fn collect_flags(matches: &ArgMatches, out: &mut BTreeMap<String, Vec<String>>) {
    for id in matches.ids() {
        let name = id.as_str();
        // argument groups derived from struct names
        if name.starts_with(char::is_uppercase) {
            continue;
        }
        if let Ok(Some(raw)) = matches.try_get_raw(name) {
            out.insert(
                name.replace('_', "-"),
                raw.map(|v| v.to_string_lossy().into_owned()).collect(),
            );
        }
    }
}

/// Writes to a sibling temporary file and renames it into place.
fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(|e| Error::file(&tmp, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::file(&tmp, e))?;
    w.get_ref().sync_all().map_err(|e| Error::file(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::file(path, e))
}

fn checksum(path: &Path) -> Result<(String, u64)> {
    let data = fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok((hex::encode(Sha256::digest(&data)), data.len() as u64))
}

fn input_format(args: &InputArgs) -> Result<InputFormat> {
    let cols: Vec<usize> = args
        .columns
        .split(',')
        .map(|c| c.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("invalid --columns {:?}", args.columns)))?;
    let [user, item, timestamp, label] = cols[..] else {
        return Err(Error::Config(format!(
            "--columns needs four positions, got {:?}",
            args.columns
        )));
    };
    Ok(InputFormat {
        delimiter: match args.format {
            FileFormat::Tsv => Delimiter::Tab,
            FileFormat::Csv => Delimiter::Comma,
        },
        columns: ColumnMap {
            user,
            item,
            timestamp,
            label,
        },
        label: match args.rating_threshold {
            Some(threshold) => LabelColumn::Rating { threshold },
            None => LabelColumn::Binary,
        },
        has_header: args.has_header,
    })
}

fn load_split(args: &InputArgs) -> Result<(Corpus, SplitCorpus)> {
    let corpus = load_interactions(&args.input, &input_format(args)?)?;
    let split = chronological_split(&corpus, SplitSpec::new(args.train_fraction)?)?;
    Ok((corpus, split))
}

fn train_config(optim: &OptimArgs, seed: u64) -> Result<TrainConfig> {
    let time_budget = match optim.time_budget_secs {
        Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
        Some(s) => {
            return Err(Error::Config(format!(
                "--time-budget-secs must be positive, got {s}"
            )))
        }
        None => None,
    };
    let cfg = TrainConfig {
        eta: optim.eta,
        b_min: optim.b_min,
        b_max: optim.b_max,
        epochs: optim.epochs,
        seed,
        time_budget,
        trace_every: optim.trace_every,
        ..TrainConfig::default()
    };
    Ok(cfg)
}

fn write_params(run: &mut Run, key: &str, name: &str, params: &ModelParams, det: bool) -> Result<()> {
    let path = run.path(name);
    run.write(key, path, det, |w| params.write_checkpoint(w))
}

fn write_trace(run: &mut Run, name: &str, trace: &TrainTrace) -> Result<()> {
    let path = run.path(name);
    run.write("trace", path, false, |w| trace.write_tsv(w))
}

fn cmd_synth(cli: &Cli, args: &SynthArgs, mut run: Run) -> Result<()> {
    let spec = SynthSpec {
        n_users: args.users,
        n_items: args.items,
        k_true: args.k_true,
        interactions_per_user: args.interactions_per_user,
        positive_rate: args.positive_rate,
        drift_fraction: args.drift_fraction,
        drift_step: args.drift_step,
        noise_level: args.noise_level,
        seed: cli.seed,
    };
    let data = generate(&spec)?;
    let corpus_path = args.out.clone().unwrap_or_else(|| run.path("corpus.tsv"));
    run.write("corpus", corpus_path, true, |w| data.corpus.write_tsv(w))?;
    let truth_path = run.path("truth.txt");
    run.write("truth", truth_path, true, |w| data.truth.write(w))?;
    println!(
        "{} interactions, {} users ({} drifting), {} items",
        data.corpus.interactions.len(),
        data.corpus.n_users(),
        data.truth.drifting.iter().filter(|&&d| d).count(),
        data.corpus.n_items()
    );
    run.finish()
}

fn cmd_train(cli: &Cli, args: &TrainArgs, mut run: Run) -> Result<()> {
    run.input(&args.input.input);
    let (_, split) = load_split(&args.input)?;
    let loss = LossConfig::new(args.model.lambda)?;
    let cfg = TrainConfig {
        momentum_mu: args.momentum_mu,
        momentum_alpha: args.momentum_alpha,
        ..train_config(&args.optim, cli.seed)?
    };
    let p0 = init_params(
        split.n_users,
        split.n_items,
        args.model.dim,
        cli.seed,
        args.model.init_scale,
    )?;
    let det = cfg.time_budget.is_none();

    let (params, trace, epochs_run) = match args.trainer {
        TrainerKind::SarosB => {
            let out = train_saros_b(&split, p0, &loss, &cfg)?;
            if let Some(avg) = &out.averaged {
                write_params(&mut run, "averaged_checkpoint", "averaged_checkpoint.txt", avg, det)?;
            }
            (out.params, out.trace, out.epochs_run)
        }
        TrainerKind::SarosM => {
            let out = train_saros_m(&split, p0, &loss, &cfg)?;
            (out.params, out.trace, out.epochs_run)
        }
        TrainerKind::Bpr => {
            let samples = args
                .bpr_samples
                .unwrap_or(split.n_train_interactions() as u64);
            let out = train_bpr(&split, p0, &loss, &cfg, samples)?;
            (out.params, out.trace, out.epochs_run)
        }
        TrainerKind::BprBatch => {
            let out = train_bpr_batch(&split, p0, &loss, &cfg)?;
            (out.params, out.trace, out.epochs_run)
        }
    };
    write_params(&mut run, "checkpoint", "checkpoint.txt", &params, det)?;
    write_trace(&mut run, "trace.tsv", &trace)?;

    println!("trainer      {}", args.trainer.name());
    println!("epochs       {epochs_run}");
    println!("train loss   {:.6}", train_pair_loss(&params, &loss, &split)?);
    match test_pair_loss(&params, &split) {
        Ok(l) => println!("test loss    {l:.6}"),
        Err(e) => println!("test loss    n/a ({e})"),
    }
    run.finish()
}

fn cmd_mosaic(cli: &Cli, args: &MosaicArgs, mut run: Run) -> Result<()> {
    run.input(&args.input.input);
    let (corpus, split) = load_split(&args.input)?;
    let loss = LossConfig::new(args.model.lambda)?;
    let cfg = train_config(&args.optim, cli.seed)?;
    let det = cfg.time_budget.is_none();
    let init = InitSpec {
        k: args.model.dim,
        seed: cli.seed,
        scale: args.model.init_scale,
    };
    let mem = MemoryConfig {
        source: args.memory_source,
        keep_threshold: args.keep_threshold,
        m_rule: args.m_rule,
        min_series_len: args.min_series_len,
    };

    let out = match mosaic(&split, &loss, &cfg, &init, &mem) {
        Ok(out) => out,
        Err(Error::FilteredEmpty { report }) => {
            let path = run.path("memory_report.tsv");
            run.write("memory_report", path, det, |w| report.write_tsv(w))?;
            run.finish()?;
            return Err(Error::FilteredEmpty { report });
        }
        Err(e) => return Err(e),
    };

    let path = run.path("memory_report.tsv");
    run.write("memory_report", path, det, |w| out.report.write_tsv(w))?;
    let keep = out.report.keep_mask(split.n_users);
    let filtered = Corpus {
        interactions: corpus
            .interactions
            .iter()
            .filter(|x| keep[x.user as usize])
            .copied()
            .collect(),
        users: corpus.users.clone(),
        items: corpus.items.clone(),
    };
    let path = run.path("filtered.tsv");
    run.write("filtered_corpus", path, det, |w| filtered.write_tsv(w))?;
    write_params(&mut run, "checkpoint", "checkpoint.txt", out.params(), det)?;
    write_trace(&mut run, "trace.tsv", &out.second_pass.trace)?;

    let dropped: Vec<&str> = out
        .report
        .users
        .iter()
        .filter(|u| !u.keep)
        .filter_map(|u| corpus.users.raw(u.user))
        .collect();
    println!(
        "kept {} of {} users; dropped {}",
        out.report.n_kept(),
        out.report.users.len(),
        dropped.len()
    );
    run.finish()
}

fn cmd_evaluate(args: &EvaluateArgs, mut run: Run) -> Result<()> {
    run.input(&args.input.input);
    run.input(&args.checkpoint);
    let (_, split) = load_split(&args.input)?;
    let file = File::open(&args.checkpoint).map_err(|e| Error::file(&args.checkpoint, e))?;
    let params = ModelParams::read_checkpoint(file)?;
    let report = evaluate(&params, &split, &args.ks, args.candidates)?;
    let path = run.path("eval_per_user.tsv");
    run.write("per_user", path, true, |w| report.write_per_user_tsv(w))?;
    let path = run.path("eval_summary.tsv");
    run.write("summary", path, true, |w| report.write_summary_tsv(w))?;
    println!("{report}");
    run.finish()
}

/// Mean of the last quarter of the trace, a smoothed final loss.
fn tail_mean(losses: &[f64]) -> f64 {
    let n = losses.len();
    let tail = &losses[n - n.div_ceil(4)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn cmd_report(args: &ReportArgs, mut run: Run) -> Result<()> {
    if args.traces.is_empty() && args.checkpoints.is_empty() {
        return Err(Error::Data("no traces given; pass --trace label=path".into()));
    }
    let mut traces = Vec::with_capacity(args.traces.len());
    for (label, path) in &args.traces {
        run.input(path);
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        traces.push((label.as_str(), TrainTrace::read_tsv(file)?));
    }

    if !traces.is_empty() {
        let path = run.path("loss_curves.tsv");
        run.write("loss_curves", path, true, |w| {
            writeln!(w, "label\twall_clock_ms\tepoch\tuser\tblock\tloss")?;
            for (label, trace) in &traces {
                for r in &trace.records {
                    let user = r.user.map_or_else(|| "-".to_string(), |u| u.to_string());
                    writeln!(
                        w,
                        "{label}\t{:.6}\t{}\t{user}\t{}\t{:?}",
                        r.wall_ms, r.epoch, r.block, r.loss
                    )?;
                }
            }
            Ok(())
        })?;

        println!(
            "{:<16} {:>9} {:>7} {:>12} {:>12} {:>12} {:>12}",
            "run", "records", "epochs", "wall_ms", "first_loss", "last_loss", "tail_mean"
        );
        for (label, trace) in &traces {
            let losses = trace.losses();
            let (Some(first), Some(last)) = (trace.records.first(), trace.records.last()) else {
                println!("{label:<16} {:>9}", 0);
                continue;
            };
            println!(
                "{:<16} {:>9} {:>7} {:>12.1} {:>12.6} {:>12.6} {:>12.6}",
                label,
                losses.len(),
                last.epoch + 1,
                last.wall_ms,
                first.loss,
                last.loss,
                tail_mean(&losses)
            );
        }
    }

    if let Some(input) = &args.input {
        run.input(input);
        let corpus = load_interactions(input, &InputFormat::default())?;
        let split = chronological_split(&corpus, SplitSpec::new(args.train_fraction)?)?;
        let k = args.k;
        let col = |name: &str| format!("{name}@{k}");
        println!(
            "\n{:<16} {:>12} {:>10} {:>10} {:>10}",
            "model",
            "test_loss",
            col("MAP"),
            col("NDCG"),
            col("MRR")
        );
        for (label, path) in &args.checkpoints {
            run.input(path);
            let file = File::open(path).map_err(|e| Error::file(path, e))?;
            let params = ModelParams::read_checkpoint(file)?;
            let report = evaluate(&params, &split, &[k], Candidates::Test)?;
            println!(
                "{:<16} {:>12.6} {:>10.4} {:>10.4} {:>10.4}",
                label,
                test_pair_loss(&params, &split)?,
                report.map[0],
                report.ndcg[0],
                report.mrr[0]
            );
        }
    }
    run.finish()
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

/// Parses `std::env::args`, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let (name, _) = matches.subcommand().expect("subcommand is required");
    let run = Run::new(name, &cli, &matches);
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(&cli, a, run),
        Command::Train(a) => cmd_train(&cli, a, run),
        Command::Mosaic(a) => cmd_mosaic(&cli, a, run),
        Command::Evaluate(a) => cmd_evaluate(a, run),
        Command::Report(a) => cmd_report(a, run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
