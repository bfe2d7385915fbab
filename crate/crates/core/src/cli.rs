//! Command-line front end. Every file a subcommand writes gets a sibling
//! `<file>.config.json` (or `config.json` in an output directory) holding
//! the fully resolved parameters of the run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{load_corpus_vec, pairs_fingerprint, write_corpus, Creative, Slot};
use crate::error::{Error, Result};
use crate::eval::{run_ablation, AblationConfig};
use crate::features::{diff_phrases, tokenize};
use crate::model::{featurize, train_variant, SolverConfig, TrainConfig, TrainedModel, Variant};
use crate::pipeline::{build_stats, featurize_pairs, match_pairs, prepare_pairs, PipelineConfig};
use crate::rewrite::greedy_match;
use crate::simulate::{simulate_corpus, SimConfig};
use crate::statsdb::StatsDb;

#[derive(Parser, Debug)]
#[command(name = "microbrowse", version, about = "Pairwise ad creative CTR classification with micro-browsing features")]
pub struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a corpus with planted examination and relevance effects.
    GenCorpus(GenCorpusArgs),
    /// Build the feature statistics database from a corpus.
    BuildStats(BuildStatsArgs),
    /// Train one model variant on a corpus and its statistics database.
    Train(TrainArgs),
    /// Cross-validate all six model variants.
    Ablate(AblateArgs),
    /// Score a pair of snippets with a trained model.
    Score(ScoreArgs),
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    /// Laplace smoothing for serve weights and feature odds.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Minimum serve-weight gap for a creative pair to be labeled.
    #[arg(long, default_value_t = 0.05)]
    min_gap: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Minimum rewrite evidence strength for greedy matching.
    #[arg(long, default_value_t = 1.0)]
    match_threshold: f64,
    /// Positions per position-feature bucket.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    position_bucket: u64,
}

impl PipelineArgs {
    fn resolve(&self) -> PipelineConfig {
        PipelineConfig {
            alpha: self.alpha,
            min_gap: self.min_gap,
            seed: self.seed,
            match_threshold: self.match_threshold,
            position_bucket: self.position_bucket as usize,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// L1 penalty on every feature weight.
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    /// Position/relevance alternations of the coupled trainer.
    #[arg(long, default_value_t = 8)]
    max_alternations: usize,
}

impl SolverArgs {
    fn resolve(&self) -> TrainConfig {
        TrainConfig {
            solver: SolverConfig {
                lambda: self.lambda,
                tol: self.tol,
                max_iter: self.max_iter,
                ..SolverConfig::default()
            },
            max_alternations: self.max_alternations,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct GenCorpusArgs {
    /// Simulator configuration (JSON); missing fields take default values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the planted ground truth.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    adgroups: Option<usize>,
    #[arg(long)]
    impressions: Option<u64>,
    /// Base click scale (kappa).
    #[arg(long)]
    click_scale: Option<f64>,
}

#[derive(Args, Debug)]
struct BuildStatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    stats: PathBuf,
    /// M1..M6.
    #[arg(long)]
    variant: Variant,
    #[arg(long)]
    out: PathBuf,
    /// Fail instead of warning when the statistics were built from other pairs.
    #[arg(long)]
    strict_fingerprint: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    k: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    stats: PathBuf,
    /// A line of the left snippet; repeat for each line.
    #[arg(long = "left", required = true)]
    left: Vec<String>,
    /// A line of the right snippet; repeat for each line.
    #[arg(long = "right", required = true)]
    right: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    match_threshold: f64,
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn config_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_config(path: &Path, config: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(config)? + "\n"))
}

#[derive(Serialize)]
struct GenCorpusRun<'a> {
    command: &'static str,
    out: &'a Path,
    truth: Option<&'a Path>,
    simulator: &'a SimConfig,
}

fn gen_corpus(args: &GenCorpusArgs) -> CmdResult {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<SimConfig>(&text)
                .map_err(|e| Failure::Usage(format!("invalid simulator config {}: {e}", path.display())))?
        }
        None => SimConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.adgroups {
        cfg.adgroups = n;
    }
    if let Some(n) = args.impressions {
        cfg.impressions_per_creative = n;
    }
    if let Some(k) = args.click_scale {
        cfg.click_scale = k;
    }
    let out = simulate_corpus(&cfg)?;
    let file = File::create(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_corpus(BufWriter::new(file), &out.groups)?;
    let run = GenCorpusRun {
        command: "gen-corpus",
        out: &args.out,
        truth: args.truth.as_deref(),
        simulator: &cfg,
    };
    if let Some(path) = &args.truth {
        write_config(path, &out.truth)?;
        write_config(&config_path(path), &run)?;
    }
    write_config(&config_path(&args.out), &run)?;
    log::info!("wrote {} adgroups to {}", out.groups.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct BuildStatsRun<'a> {
    command: &'static str,
    corpus: &'a Path,
    out: &'a Path,
    pipeline: &'a PipelineConfig,
    pairs: usize,
}

fn build_stats_cmd(args: &BuildStatsArgs) -> CmdResult {
    let cfg = args.pipeline.resolve();
    let groups = load_corpus_vec(&args.corpus)?;
    let pairs = prepare_pairs(&groups, &cfg)?;
    let (db, _) = build_stats(&pairs, &cfg)?;
    db.save(&args.out)?;
    write_config(
        &config_path(&args.out),
        &BuildStatsRun {
            command: "build-stats",
            corpus: &args.corpus,
            out: &args.out,
            pipeline: &cfg,
            pairs: pairs.len(),
        },
    )?;
    log::info!("{} pairs, {} statistics entries", pairs.len(), db.entries.len());
    Ok(())
}

#[derive(Serialize)]
struct TrainRun<'a> {
    command: &'static str,
    corpus: &'a Path,
    stats: &'a Path,
    out: &'a Path,
    variant: Variant,
    pipeline: &'a PipelineConfig,
    train: &'a TrainConfig,
    pairs: usize,
}

fn train_cmd(args: &TrainArgs) -> CmdResult {
    let cfg = args.pipeline.resolve();
    let train_cfg = args.solver.resolve();
    let groups = load_corpus_vec(&args.corpus)?;
    let db = StatsDb::load(&args.stats)?;
    let pairs = prepare_pairs(&groups, &cfg)?;
    let found = pairs_fingerprint(pairs.iter().map(|p| &p.pair));
    if found != db.fingerprint {
        if args.strict_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: db.fingerprint.clone(),
                found,
            }
            .into());
        }
        log::warn!("statistics database was built from different pairs than the training corpus");
    }
    let matches = match_pairs(&pairs, &db.rewrite_lookup(), cfg.match_threshold);
    let data = featurize_pairs(args.variant, &pairs, &matches, db.scheme);
    let model = train_variant(args.variant, &data, &db, &train_cfg)?;
    model.save(&args.out)?;
    write_config(
        &config_path(&args.out),
        &TrainRun {
            command: "train",
            corpus: &args.corpus,
            stats: &args.stats,
            out: &args.out,
            variant: args.variant,
            pipeline: &cfg,
            train: &train_cfg,
            pairs: pairs.len(),
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct AblateRun<'a> {
    command: &'static str,
    corpus: &'a Path,
    out_dir: &'a Path,
    ablation: &'a AblationConfig,
}

fn ablate_cmd(args: &AblateArgs) -> CmdResult {
    let cfg = AblationConfig {
        k: args.k as usize,
        pipeline: args.pipeline.resolve(),
        train: args.solver.resolve(),
    };
    let groups = load_corpus_vec(&args.corpus)?;
    let report = run_ablation(&groups, &cfg)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let table = report.to_table();
    write_text(&args.out_dir.join("report.txt"), &table)?;
    write_text(&args.out_dir.join("report.csv"), &report.to_csv())?;
    write_text(&args.out_dir.join("positions.csv"), &report.positions_csv())?;
    write_config(
        &args.out_dir.join("config.json"),
        &AblateRun {
            command: "ablate",
            corpus: &args.corpus,
            out_dir: &args.out_dir,
            ablation: &cfg,
        },
    )?;
    print!("{table}");
    Ok(())
}

fn snippet(id: &str, lines: &[String]) -> std::result::Result<Creative, Failure> {
    if lines.iter().all(|l| tokenize(l).is_empty()) {
        return Err(Failure::Usage(format!("{id} snippet has no words")));
    }
    Ok(Creative {
        creative_id: id.into(),
        slot: Slot::Unknown,
        lines: lines.to_vec(),
        impressions: 0,
        clicks: 0,
    })
}

fn score_cmd(args: &ScoreArgs) -> CmdResult {
    let left = snippet("left", &args.left)?;
    let right = snippet("right", &args.right)?;
    let model = TrainedModel::load(&args.model)?;
    let db = StatsDb::load(&args.stats)?;
    if model.meta().fingerprint != db.fingerprint {
        log::warn!("model was trained against a different statistics database");
    }
    let diff = diff_phrases(&left, &right);
    let matched = greedy_match(&diff, &db.rewrite_lookup(), args.match_threshold);
    let x = featurize(&model.spec(), &diff, &matched, db.scheme);
    let score = model.score(&x);
    let label = model.predict(&x);
    let winner = match label {
        crate::corpus::Label::LeftBetter => "left",
        crate::corpus::Label::RightBetter => "right",
    };
    println!("score {score:.6}");
    println!("winner {winner} ({})", label.as_str());
    Ok(())
}

/// Parses arguments and runs a subcommand. Exit code 0 on success, 1 on
/// domain errors, 2 on usage errors.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    let result = match &cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::BuildStats(a) => build_stats_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Score(a) => score_cmd(a),
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
