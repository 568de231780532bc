//! `popsynth` command-line driver.
//!
//! Every subcommand reads an experiment config. Stages can run one at a time
//! (`prepare`, `train`, `sample`, `evaluate`) against a shared output directory,
//! or all at once with `run`; both routes produce the same files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use popsynth::dataset::write_pool_file;
use popsynth::error::ErrorClass;
use popsynth::metrics::EvalReport;
use popsynth::pipeline::{
    self, base_metadata, evaluate_pools, find_method, load_model, read_pools, save_pool, write_evaluation,
    ExperimentConfig, Prepared, MODELS_DIR, REPORT_JSON,
};
use popsynth::rng::derive_seed;
use popsynth::synth::synth_generate;
use popsynth::{Error, Result};

#[derive(Parser)]
#[command(name = "popsynth", version, about = "Synthetic population generation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the configured synthetic population into <out>/population.csv.
    Synth(Common),
    /// Split the population and write the train/validation/test pools.
    Prepare(Common),
    /// Fit one method on a prepared directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
    },
    /// Generate agents from a trained method.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Score every generated pool against the test split.
    Evaluate(Common),
    /// Full pipeline: prepare, fit and sample every method, evaluate.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Re-render report.csv and report.txt from report.json.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    let out = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
    Ok((cfg, out))
}

fn prepared(cfg: &ExperimentConfig, out: &Path) -> Result<Prepared> {
    if out.join(pipeline::SCHEMA_FILE).exists() {
        Prepared::read(out)
    } else {
        let prep = pipeline::prepare(cfg)?;
        prep.write(out)?;
        Ok(prep)
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(common) => {
            let (cfg, out) = load(&common)?;
            let mut spec = cfg
                .synthetic
                .ok_or_else(|| Error::Config("`synth` needs a `synthetic` section in the config".into()))?;
            if let Some(seed) = common.seed {
                spec.set_seed(seed);
            }
            let pool = synth_generate(&spec)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("population_schema.json"), pool.schema.to_json()?)?;
            write_pool_file(&out.join("population.csv"), &pool)?;
            println!("wrote {} agents to {}", pool.len(), out.join("population.csv").display());
        }
        Command::Prepare(common) => {
            let (cfg, out) = load(&common)?;
            let prep = pipeline::prepare(&cfg)?;
            prep.write(&out)?;
            println!(
                "train {} / validation {} / test {} rows in {}",
                prep.train.len(),
                prep.validation.len(),
                prep.test.len(),
                out.display()
            );
        }
        Command::Train { common, method } => {
            let (cfg, out) = load(&common)?;
            let m = find_method(&cfg, &method)?;
            let prep = prepared(&cfg, &out)?;
            let model = pipeline::fit_method(&m, &prep, cfg.exec).map_err(|e| e.in_stage(&format!("method {}", m.name)))?;
            let files = model.artifacts(&m)?;
            let dir = out.join(MODELS_DIR);
            fs::create_dir_all(&dir)?;
            for (file, bytes) in &files {
                fs::write(dir.join(file), bytes)?;
            }
            println!("trained {} ({} artifact files)", m.name, files.len());
        }
        Command::Sample { common, method, count } => {
            let (cfg, out) = load(&common)?;
            let m = find_method(&cfg, &method)?;
            let prep = Prepared::read(&out)?;
            let model = load_model(&m, &prep, &out.join(MODELS_DIR), cfg.exec)?;
            let count = count.unwrap_or(cfg.count);
            if count == 0 {
                return Err(Error::Config("count must be positive".into()));
            }
            let (pool, _) = model
                .sample(count, derive_seed(m.seed, "sample", 0), cfg.exec)
                .map_err(|e| e.in_stage(&format!("method {}", m.name)))?;
            pool.validate()?;
            save_pool(&out, &m.name, &pool)?;
            println!("sampled {} agents from {}", pool.len(), m.name);
        }
        Command::Evaluate(common) => {
            let (cfg, out) = load(&common)?;
            let prep = Prepared::read(&out)?;
            let pools = read_pools(&out, &cfg, prep.schema.clone())?;
            let mut eval = evaluate_pools(&cfg, &prep, &pools, cfg.exec)?;
            eval.report.metadata.extra = base_metadata(&cfg);
            eval.report.metadata.extra.insert("pca_explained_ratio".into(), serde_json::json!(eval.explained_ratio));
            write_evaluation(&out, &eval)?;
            print!("{}", eval.report.to_text());
        }
        Command::Run { common, count } => {
            let (mut cfg, _) = load(&common)?;
            if let Some(c) = count {
                cfg.count = c;
            }
            let result = pipeline::run_pipeline(&cfg)?;
            print!("{}", result.evaluation.report.to_text());
        }
        Command::Report { out } => {
            let report = EvalReport::from_json(&fs::read_to_string(out.join(REPORT_JSON))?)?;
            report.write_csv(fs::File::create(out.join("report.csv"))?)?;
            let text = report.to_text();
            fs::write(out.join("report.txt"), &text)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Divergence => 4,
            })
        }
    }
}
