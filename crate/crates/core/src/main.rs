use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cibflow::analytics::DEFAULT_LEVEL;
use cibflow::engine::enumerate_consistent;
use cibflow::model::{has_errors, StateRefDoc};
use cibflow::pipeline::{
    self, exit_code, invalid, load_spec, read_ensemble_file, read_json, run_pipeline, write_json,
    PipelineConfig, QuantifyInputs, ScreeningDoc, EXIT_INVALID, EXIT_OK,
};
use cibflow::simulate::{DEFAULT_MAX_ITER, DEFAULT_RUNS};
use cibflow::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cibflow",
    version,
    about = "Probabilistic cross-impact balance scenario pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SimArgs {
    /// Monte Carlo runs.
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "CIBFLOW_WORKERS")]
    workers: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Confidence level for the share intervals.
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Check a study spec and print findings.
    Validate {
        #[arg(long)]
        spec: PathBuf,
        /// Also write the findings as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List every consistent scenario of a small study.
    Enumerate {
        #[arg(long)]
        spec: PathBuf,
        /// Largest state space to search.
        #[arg(long, default_value_t = 10_000_000)]
        limit: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Monte Carlo ensemble.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// State-share tables with Wilson intervals.
    Stats {
        #[arg(long)]
        ensemble: PathBuf,
        /// Study spec, for state labels.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Screen pathways and select candidates.
    Screen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        ensemble: PathBuf,
        /// Outcome descriptor id.
        #[arg(long)]
        outcome: String,
        /// Best outcome state, by label or index.
        #[arg(long)]
        best: Option<String>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Screening section as a JSON file; overrides the flags above.
        #[arg(long)]
        screening: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank pathways by persona-weighted scores.
    Mcda {
        #[arg(long)]
        input: PathBuf,
        /// Candidate set the scored pathways must come from.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a candidate pathway into model input tables.
    Quantify {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        translation: PathBuf,
        #[arg(long)]
        identities: Option<PathBuf>,
        /// Candidate id; defaults to the choice recorded in --mcda.
        #[arg(long)]
        pathway: Option<String>,
        /// Ranking written by `mcda`.
        #[arg(long)]
        mcda: Option<PathBuf>,
        /// Ensemble for extreme scenarios.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every enabled stage from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the spec path of the config.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "CIBFLOW_WORKERS")]
        workers: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn usable_spec(path: &Path) -> Result<cibflow::model::StudySpec> {
    let (spec, findings) = load_spec(path)?;
    for f in &findings {
        eprintln!("{f}");
    }
    if has_errors(&findings) {
        return Err(invalid(&findings));
    }
    Ok(spec)
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Validate { spec, out } => {
            let (_, findings) = load_spec(&spec)?;
            for f in &findings {
                println!("{f}");
            }
            if let Some(out) = out {
                write_json(&out, &findings)?;
            }
            if has_errors(&findings) {
                return Ok(EXIT_INVALID);
            }
            println!("ok: {} ({} findings)", spec.display(), findings.len());
        }
        Command::Enumerate { spec, limit, out } => {
            let spec = usable_spec(&spec)?;
            let found = enumerate_consistent(&spec, &spec.cim, limit)?;
            let rows: Vec<_> = found
                .iter()
                .map(|z| serde_json::json!({ "states": z, "labels": spec.describe(z) }))
                .collect();
            match out {
                Some(path) => write_json(&path, &rows)?,
                None => print_json(&rows)?,
            }
        }
        Command::Simulate { spec, sim, out } => {
            let study = usable_spec(&spec)?;
            ensure_dir(&out)?;
            let mut cfg = PipelineConfig::new(&spec);
            cfg.runs = sim.runs;
            cfg.seed = sim.seed;
            cfg.workers = sim.workers;
            cfg.max_iter = sim.max_iter;
            cfg.level = sim.level;
            if cfg.workers == Some(0) {
                return Err(Error::Config("workers must be at least 1".into()));
            }
            let (ensemble, artifacts) = pipeline::simulate_stage(&study, &cfg, &out)?;
            eprintln!(
                "{} runs, {} failed",
                ensemble.run_count,
                ensemble.failed_runs()
            );
            print_json(&artifacts)?;
        }
        Command::Stats {
            ensemble,
            spec,
            level,
            out,
        } => {
            let ensemble = read_ensemble_file(&ensemble)?;
            let spec = spec.map(|p| usable_spec(&p)).transpose()?;
            ensure_dir(&out)?;
            print_json(&pipeline::stats_stage(
                &ensemble,
                spec.as_ref(),
                level,
                &out,
            )?)?;
        }
        Command::Screen {
            spec,
            ensemble,
            outcome,
            best,
            k,
            screening,
            out,
        } => {
            let spec = usable_spec(&spec)?;
            let ensemble = read_ensemble_file(&ensemble)?;
            let doc = match screening {
                Some(path) => read_json::<ScreeningDoc>(&path)?,
                None => {
                    let mut doc = ScreeningDoc::new(outcome);
                    doc.k = k;
                    doc.best_state = best.map(|b| match b.parse() {
                        Ok(i) => StateRefDoc::Index(i),
                        Err(_) => StateRefDoc::Label(b),
                    });
                    doc
                }
            };
            ensure_dir(&out)?;
            let (set, artifacts) = pipeline::screen_stage(&ensemble, &spec, &doc, &out)?;
            for w in &set.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&artifacts)?;
        }
        Command::Mcda {
            input,
            candidates,
            out,
        } => {
            let set = candidates
                .map(|p| read_json::<cibflow::analytics::CandidateSet>(&p))
                .transpose()?;
            ensure_dir(&out)?;
            let (ranking, findings, artifacts) = pipeline::mcda_stage(&input, set.as_ref(), &out)?;
            for f in &findings {
                eprintln!("{f}");
            }
            eprintln!("ranking: {}", ranking.order.join(" > "));
            print_json(&artifacts)?;
        }
        Command::Quantify {
            spec,
            candidates,
            translation,
            identities,
            pathway,
            mcda,
            ensemble,
            out,
        } => {
            let spec = usable_spec(&spec)?;
            let set: cibflow::analytics::CandidateSet = read_json(&candidates)?;
            let pathway_id = match (pathway, mcda) {
                (Some(id), _) => id,
                (None, Some(path)) => read_json::<cibflow::mcda::McdaRanking>(&path)?
                    .chosen()
                    .to_string(),
                (None, None) => {
                    return Err(Error::Config("give --pathway or --mcda".into()));
                }
            };
            let ensemble = ensemble.map(|p| read_ensemble_file(&p)).transpose()?;
            ensure_dir(&out)?;
            let (bundle, artifacts) = pipeline::quantify_stage(
                QuantifyInputs {
                    spec: &spec,
                    candidates: &set,
                    pathway_id: &pathway_id,
                    translation: &translation,
                    identities: identities.as_deref(),
                    ensemble: ensemble.as_ref(),
                },
                &out,
            )?;
            for w in &bundle.extremes.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&artifacts)?;
        }
        Command::Pipeline {
            config,
            spec,
            runs,
            seed,
            workers,
            max_iter,
            level,
            out,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = spec {
                cfg.spec = s;
            }
            cfg.runs = runs.unwrap_or(cfg.runs);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.workers = workers.or(cfg.workers);
            cfg.max_iter = max_iter.unwrap_or(cfg.max_iter);
            cfg.level = level.unwrap_or(cfg.level);
            let out = out.or_else(|| cfg.out.clone()).ok_or_else(|| {
                Error::Config("no output directory: pass --out or set `out`".into())
            })?;
            match run_pipeline(&cfg, &out) {
                Ok(manifest) => {
                    let stages: Vec<&str> =
                        manifest.stages.iter().map(|s| s.stage.as_str()).collect();
                    eprintln!("done: {} -> {}", stages.join(", "), out.display());
                }
                Err(failure) => {
                    eprintln!("error: {failure}");
                    for f in &failure.findings {
                        eprintln!("{f}");
                    }
                    return Ok(failure.exit_code());
                }
            }
        }
    }
    Ok(EXIT_OK)
}
