use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cmek::bench::{emit_report, outer_loo_benchmark};
use cmek::cmek::{fit_weights, select_with_inner, write_selection_csv, PairTable};
use cmek::corpus::{LabeledCorpus, Manifest, Role};
use cmek::synthgen::{write_family, FamilySpec};
use cmek::{Error, GlobalConfig, Result};

#[derive(Parser)]
#[command(
    name = "cmek",
    version,
    about = "Pick source domains for an unlabeled target corpus"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replace the configured seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON list of {name, path, role} entries.
    #[arg(long)]
    manifest: PathBuf,
    /// JSON config; paper defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (falls back to the config's output_dir, then ".").
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise distance features for every ordered pair in the manifest.
    Distances(Common),
    /// Fit weights on the candidates and rank them for the single target.
    Select {
        #[command(flatten)]
        common: Common,
        /// Number of sources to return.
        #[arg(long, default_value_t = 1)]
        n: usize,
    },
    /// Leave-one-out benchmark over every corpus in the manifest.
    Benchmark(Common),
    /// Generate a synthetic domain family.
    Synth {
        /// Family spec: {reference_seed, shifts, template}.
        #[arg(long, alias = "config")]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Loaded {
    cfg: GlobalConfig,
    corpora: Vec<(Role, LabeledCorpus)>,
    out: PathBuf,
}

fn load(common: &Common, seed_override: Option<u64>) -> Result<Loaded> {
    let mut cfg = match &common.config {
        Some(path) => GlobalConfig::load(path)?,
        None => GlobalConfig::default(),
    };
    if let Some(seed) = seed_override {
        cfg = cfg.with_seed(seed);
    }
    let corpora = Manifest::load(&common.manifest)?.load_all()?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok(Loaded { cfg, corpora, out })
}

fn write(path: &Path, content: String) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn cmd_distances(common: &Common, seed: Option<u64>) -> Result<()> {
    let Loaded { cfg, corpora, out } = load(common, seed)?;
    if corpora.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need ≥ 2 corpora, got {}",
            corpora.len()
        )));
    }
    let corpora: Vec<LabeledCorpus> = corpora.into_iter().map(|(_, c)| c).collect();
    let table = PairTable::compute(&corpora, &cfg, false)?;
    write(&out.join("distances.csv"), table.to_csv())
}

fn cmd_select(common: &Common, n: usize, seed: Option<u64>) -> Result<()> {
    let Loaded { cfg, corpora, out } = load(common, seed)?;
    let (targets, candidates): (Vec<_>, Vec<_>) =
        corpora.into_iter().partition(|(r, _)| *r == Role::Target);
    let [(_, target)]: [(Role, LabeledCorpus); 1] = targets.try_into().map_err(|t: Vec<_>| {
        Error::InvalidInput(format!(
            "manifest needs exactly one target, got {}",
            t.len()
        ))
    })?;
    let candidates: Vec<LabeledCorpus> = candidates.into_iter().map(|(_, c)| c).collect();
    if candidates.len() < 3 {
        return Err(Error::InsufficientCandidates(candidates.len()));
    }
    if n == 0 || n > candidates.len() {
        return Err(Error::SelectionSize {
            n,
            max: candidates.len(),
        });
    }
    for c in &candidates {
        c.require_labels(&format!("candidate {}", c.name))?;
    }
    let table = PairTable::compute(&candidates, &cfg, true)?;
    let members: Vec<usize> = (0..candidates.len()).collect();
    let weights = fit_weights(&table.training_pairs(&members)?, cfg.standardize_features)?;
    let inner: Vec<f64> = table
        .inner
        .iter()
        .map(|e| e.map_or(f64::NAN, |e| e.error))
        .collect();
    let ranking = select_with_inner(
        &weights,
        &candidates,
        &inner,
        &target.without_labels(),
        n,
        &cfg,
    )?;
    write_selection_csv(&ranking, &out.join("selection.csv"))?;
    weights.save(&out.join("weights.json"))
}

fn cmd_benchmark(common: &Common, seed: Option<u64>) -> Result<()> {
    let Loaded { cfg, corpora, out } = load(common, seed)?;
    let corpora: Vec<LabeledCorpus> = corpora.into_iter().map(|(_, c)| c).collect();
    let report = outer_loo_benchmark(&corpora, &cfg)?;
    emit_report(&report, &out)?;
    Ok(())
}

fn cmd_synth(spec: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut family = FamilySpec::load(spec)?;
    if let Some(seed) = seed {
        family.reference_seed = seed;
        family.template.seed = seed;
    }
    write_family(&family, out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::InvalidConfig("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let seed = cli.seed_override;
    match &cli.command {
        Command::Distances(common) => cmd_distances(common, seed),
        Command::Select { common, n } => cmd_select(common, *n, seed),
        Command::Benchmark(common) => cmd_benchmark(common, seed),
        Command::Synth { spec, out } => cmd_synth(spec, out, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
