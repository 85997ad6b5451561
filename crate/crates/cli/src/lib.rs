//! Command-line driver: corpus generation, balanced sampling, training,
//! scoring and reporting.
//!
//! A training run lives in `<out>/<config_name>_seed<seed>/` and holds
//! `config.json`, `inputs.json`, `checkpoint.json`, `train_log.json`,
//! `scores.tsv`, `report.json`, `report.txt` and one
//! `<split>_<task>_confusion.csv` per reported head and split.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use codectrace::corpus::{
    balanced_sample, default_recipes, generate_synthetic_corpus, ingest_manifest, Grouping, Manifest, Split,
    SyntheticCodecRecipe,
};
use codectrace::metrics::{build_report, render_text, EvalReport, ReportInputs};
use codectrace::model::{ConfigFile, ConfigName, FrontendKind, TrainSetup};
use codectrace::scoring::{score_manifest, ScoreFile};
use codectrace::trainer::{fit_with, Checkpoint, EpochRecord, FitOptions};
use codectrace::{CodecRegistry, TaskKind};

#[derive(Debug, Parser)]
#[command(name = "codectrace", version, about = "Codec source tracing experiments")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON training config; command-line flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output location: corpus directory, manifest file or runs directory,
    /// depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic corpus.
    GenCorpus(GenCorpusArgs),
    /// Draw a category-balanced spoof subset of a manifest.
    Sample(SampleArgs),
    /// Train one configuration.
    Train(TrainArgs),
    /// Score a manifest with a run's best checkpoint.
    Score(ScoreArgs),
    /// Compute metrics for a run's scores.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Recipe JSONL; the bundled 12 recipes when omitted.
    #[arg(long)]
    pub recipes: Option<PathBuf>,
    #[arg(long, default_value_t = 1900)]
    pub n_bonafide: usize,
    #[arg(long, default_value_t = 200)]
    pub n_per_codec: usize,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to `registry.jsonl` next to the manifest.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub grouping: Grouping,
    /// Number of spoof entries to keep.
    #[arg(long)]
    pub total: usize,
    /// Restrict sampling to one split; other entries pass through.
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub config_name: Option<ConfigName>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub augment_strength: Option<f64>,
    #[arg(long, default_value = "train")]
    pub train_split: Split,
    #[arg(long, default_value = "dev")]
    pub dev_split: Split,
    /// Do not print per-epoch progress.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Run directory created by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Defaults to the manifest the run was trained on.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Splits to score; all evaluation splits when omitted.
    #[arg(long, value_delimiter = ',')]
    pub splits: Vec<Split>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

/// Manifest and registry a run was trained from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInputs {
    pub manifest: PathBuf,
    pub registry: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenCorpus(a) => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("corpus"));
            let summary = cmd_gen_corpus(a, &out, cli.seed.unwrap_or(0))?;
            print!("{summary}");
        }
        Command::Sample(a) => {
            let out = cli.out.clone().context("sample needs --out <manifest path>")?;
            let summary = cmd_sample(a, &out, cli.seed.unwrap_or(0))?;
            print!("{summary}");
        }
        Command::Train(a) => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
            let setup = resolve_setup(cli.config.as_deref(), cli.seed, a)?;
            let dir = cmd_train(a, &setup, &out)?;
            println!("{}", dir.display());
        }
        Command::Score(a) => {
            let path = cmd_score(a)?;
            println!("{}", path.display());
        }
        Command::Report(a) => {
            let report = cmd_report(a)?;
            print!("{}", render_text(&report));
        }
    }
    Ok(())
}

fn default_registry(manifest: &Path, registry: Option<&Path>) -> PathBuf {
    registry.map(Path::to_path_buf).unwrap_or_else(|| {
        manifest
            .parent()
            .unwrap_or(Path::new("."))
            .join("registry.jsonl")
    })
}

fn load_inputs(manifest: &Path, registry: Option<&Path>) -> Result<(Manifest, CodecRegistry, PathBuf)> {
    let registry_path = default_registry(manifest, registry);
    let reg = CodecRegistry::load(&registry_path)
        .with_context(|| format!("loading registry {}", registry_path.display()))?;
    let m = ingest_manifest(manifest, &reg).with_context(|| format!("loading manifest {}", manifest.display()))?;
    Ok((m, reg, registry_path))
}

/// Count of entries per category of `task`, in class order.
fn histogram(manifest: &Manifest, registry: &CodecRegistry, task: TaskKind) -> Result<BTreeMap<usize, usize>> {
    let mut h = BTreeMap::new();
    for e in &manifest.entries {
        *h.entry(registry.label_of(&e.origin, task)?).or_insert(0) += 1;
    }
    Ok(h)
}

fn format_histograms(manifest: &Manifest, registry: &CodecRegistry, tasks: &[TaskKind]) -> Result<String> {
    let mut out = String::new();
    for &task in tasks {
        let names = codectrace::task_classes(task);
        let h = histogram(manifest, registry, task)?;
        let cells: Vec<String> = names
            .iter()
            .enumerate()
            .map(|(i, n)| format!("{n}={}", h.get(&i).copied().unwrap_or(0)))
            .collect();
        out.push_str(&format!("{task}: {}\n", cells.join(" ")));
    }
    Ok(out)
}

pub fn cmd_gen_corpus(args: &GenCorpusArgs, out: &Path, seed: u64) -> Result<String> {
    ensure!(
        args.n_bonafide > 0 && args.n_per_codec > 0,
        "--n-bonafide and --n-per-codec must be positive"
    );
    let recipes = match &args.recipes {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading recipes {}", p.display()))?;
            SyntheticCodecRecipe::parse_jsonl(&text)?
        }
        None => default_recipes(),
    };
    let g = generate_synthetic_corpus(&recipes, args.n_bonafide, args.n_per_codec, seed, out)?;
    let mut summary = format!(
        "manifest {}\nregistry {}\nentries {}  sha256 {}\n",
        g.manifest_path.display(),
        g.registry_path.display(),
        g.manifest.len(),
        g.manifest.digest()?
    );
    summary.push_str(&format_histograms(&g.manifest, &g.registry, &TaskKind::SOURCE_TRACING)?);
    Ok(summary)
}

pub fn cmd_sample(args: &SampleArgs, out: &Path, seed: u64) -> Result<String> {
    ensure!(args.total > 0, "--total must be positive");
    let (manifest, registry, _) = load_inputs(&args.manifest, args.registry.as_deref())?;
    let sampled = balanced_sample(&manifest, &registry, args.grouping, args.total, args.split, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    sampled.save(out)?;
    let scoped = sampled.filter(|e| !e.origin.is_bonafide() && args.split.is_none_or(|s| e.split == s));
    let mut summary = format!("manifest {}  entries {}\n", out.display(), sampled.len());
    summary.push_str(&format_histograms(&scoped, &registry, &[args.grouping.task()])?);
    Ok(summary)
}

/// Config file fields, then `--seed`, then per-flag overrides.
pub fn resolve_setup(config: Option<&Path>, seed: Option<u64>, args: &TrainArgs) -> Result<TrainSetup> {
    let mut file = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str::<ConfigFile>(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => ConfigFile::default(),
    };
    if let Some(c) = args.config_name {
        if file.config_name.is_some_and(|old| old != c) {
            // Loss weights in the file belong to the other configuration.
            file.lambdas = None;
        }
        file.config_name = Some(c);
    }
    if file.config_name.is_none() {
        bail!("no configuration given: pass --config-name or a config file with config_name");
    }
    file.seed = seed.or(file.seed);
    file.epochs = args.epochs.or(file.epochs);
    file.patience = args.patience.or(file.patience);
    file.learning_rate = args.learning_rate.or(file.learning_rate);
    file.weight_decay = args.weight_decay.or(file.weight_decay);
    file.batch_size = args.batch_size.or(file.batch_size);
    file.d_model = args.d_model.or(file.d_model);
    file.augment_strength = args.augment_strength.or(file.augment_strength);
    let setup = file.resolve()?;
    if setup.frontend == FrontendKind::External {
        bail!("frontend `external` needs an encoder supplied through the library API");
    }
    Ok(setup)
}

pub fn run_dir(out: &Path, setup: &TrainSetup) -> PathBuf {
    out.join(format!("{}_seed{}", setup.config_name, setup.seed))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn absolute(p: &Path) -> PathBuf {
    p.canonicalize().unwrap_or_else(|_| p.to_path_buf())
}

pub fn cmd_train(args: &TrainArgs, setup: &TrainSetup, out: &Path) -> Result<PathBuf> {
    let (manifest, registry, registry_path) = load_inputs(&args.manifest, args.registry.as_deref())?;
    let train = manifest.filter_split(args.train_split);
    let dev = manifest.filter_split(args.dev_split);
    ensure!(!train.is_empty(), "manifest has no `{}` entries", args.train_split);
    ensure!(!dev.is_empty(), "manifest has no `{}` entries", args.dev_split);

    let dir = run_dir(out, setup);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("config.json"), serde_json::to_string_pretty(setup)? + "\n")?;
    let inputs = RunInputs {
        manifest: absolute(&args.manifest),
        registry: absolute(&registry_path),
    };
    write(&dir.join("inputs.json"), serde_json::to_string_pretty(&inputs)? + "\n")?;

    let quiet = args.quiet;
    let mut progress = |r: &EpochRecord| {
        if quiet {
            return;
        }
        let f1: Vec<String> = r.dev.weighted_f1.iter().map(|(t, v)| format!("{t} {v:.2}")).collect();
        let eer = r.dev.eer.map_or(String::new(), |e| format!("  EER {e:.2}%"));
        eprintln!(
            "epoch {:>3}  loss {:.4}{}  F1 [{}]{}",
            r.epoch,
            r.mean_loss,
            eer,
            f1.join(", "),
            if r.improved { "  *" } else { "" }
        );
    };
    let opts = FitOptions {
        encoder: None,
        on_epoch: Some(&mut progress),
    };
    let (checkpoint, log) = fit_with(setup, &train, &dev, &registry, setup.epochs, opts)?;
    checkpoint.save(dir.join("checkpoint.json"))?;
    write(&dir.join("train_log.json"), log.to_json()? + "\n")?;
    Ok(dir)
}

fn read_run_inputs(run: &Path) -> Result<RunInputs> {
    let p = run.join("inputs.json");
    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn run_manifest(run: &Path, manifest: Option<&Path>, registry: Option<&Path>) -> Result<(Manifest, CodecRegistry)> {
    let (m, r, _) = match manifest {
        Some(m) => load_inputs(m, registry)?,
        None => {
            let inputs = read_run_inputs(run)?;
            load_inputs(&inputs.manifest, Some(registry.unwrap_or(&inputs.registry)))?
        }
    };
    Ok((m, r))
}

pub fn cmd_score(args: &ScoreArgs) -> Result<PathBuf> {
    let checkpoint = Checkpoint::load(args.run.join("checkpoint.json"))?;
    let (manifest, _) = run_manifest(&args.run, args.manifest.as_deref(), args.registry.as_deref())?;
    let subset = if args.splits.is_empty() {
        manifest.filter(|e| e.split.is_eval())
    } else {
        manifest.filter(|e| args.splits.contains(&e.split))
    };
    let scores = score_manifest(&checkpoint, &subset)?;
    let path = args.run.join("scores.tsv");
    scores.save(&path)?;
    Ok(path)
}

pub fn cmd_report(args: &ReportArgs) -> Result<EvalReport> {
    let config_path = args.run.join("config.json");
    let text = fs::read_to_string(&config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let setup: TrainSetup = serde_json::from_str(&text)?;
    let scores = ScoreFile::load(args.run.join("scores.tsv"))?;
    let (manifest, registry) = run_manifest(&args.run, args.manifest.as_deref(), args.registry.as_deref())?;
    let report = build_report(&ReportInputs {
        scores: &scores,
        manifest: &manifest,
        registry: &registry,
        setup: &setup,
    })?;
    write(&args.run.join("report.json"), report.to_json()?)?;
    write(&args.run.join("report.txt"), render_text(&report))?;
    for (name, csv) in report.confusion_files() {
        write(&args.run.join(name), csv)?;
    }
    Ok(report)
}
