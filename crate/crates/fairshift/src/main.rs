//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 configuration error, 3 failed certification in
//! `theory`, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairshift::config::Config;
use fairshift::error::Error;
use fairshift::factorworld::io as dataset_io;
use fairshift::harness::compare::{compare, sweep};
use fairshift::harness::runner::{generate_data, run};
use fairshift::harness::theory_cmd::{run_theory, TheoryArgs};
use fairshift::harness::{Method, RunConfig};
use fairshift::metrics::evaluate;
use fairshift::neuralcore::snapshot;
use fairshift::theorylab::worldgen::MuMode;

#[derive(Parser)]
#[command(name = "fairshift", version, about = "Fairness transfer under distribution shifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory root.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scenario's datasets as CSV files.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a single run and persist its artifacts.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Keep the teacher fixed at the first post-warm-up snapshot.
        #[arg(long)]
        no_teacher_update: bool,
        /// Weigh all groups equally instead of inverse confident counts.
        #[arg(long)]
        uniform_group_weights: bool,
        /// Which domains feed consistency training.
        #[arg(long, value_parser = ["both", "source", "target"])]
        consistency_domain: Option<String>,
    },
    /// Run a method comparison over seeds on one scenario.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep (w_fair, w_cons) and emit Pareto points and frontier.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Certify the theory on random finite worlds.
    Theory {
        /// Number of certified worlds to verify.
        #[arg(long, default_value_t = 200)]
        worlds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Teacher error bound (must stay below 1/3).
        #[arg(long, default_value_t = 0.3)]
        alpha: f64,
        /// Expansion constant requirement (must exceed 3).
        #[arg(long, default_value_t = 4.0)]
        cbar: f64,
        /// `min-teacher-error` or `fixed:<value>`.
        #[arg(long, default_value = "min-teacher-error")]
        mu_mode: String,
        /// Random rate tables for the proposition checks.
        #[arg(long, default_value_t = 100)]
        prop_tables: usize,
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a model snapshot on a dataset CSV.
    Eval {
        /// Model snapshot path.
        #[arg(long)]
        snapshot: PathBuf,
        /// Dataset CSV path.
        #[arg(long)]
        data: PathBuf,
        /// Optional JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_file(path)?,
        None => Config::new(),
    };
    if let Some(seed) = common.seed {
        cfg.set("seed", seed);
    }
    let rc = RunConfig::from_config(&cfg)?;
    rc.validate()?;
    Ok(rc)
}

fn methods_and_seeds(common: &CommonArgs, rc: &RunConfig) -> Result<(Vec<Method>, Vec<u64>), Error> {
    let cfg = match &common.config {
        Some(path) => Config::from_file(path)?,
        None => Config::new(),
    };
    let methods: Vec<Method> = cfg
        .str_or("compare.methods", "laftr,laftr+fixmatch,ours-laftr")
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()?;
    let seeds: Vec<u64> = cfg.list_or("seeds", &[0, 1, 2, 3, 4])?;
    let _ = rc;
    Ok((methods, seeds))
}

fn main() -> ExitCode {
    env_logger::init();
    match dispatch() {
        Ok(code) => code,
        Err(Error::Config(msg)) => {
            eprintln!("config error: {}", msg);
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> Result<ExitCode, Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { common } => {
            let rc = load_config(&common)?;
            let data = generate_data(&rc)?;
            let dir = common.out.join("data").join(rc.scenario.to_string());
            std::fs::create_dir_all(&dir)?;
            dataset_io::write_csv(&data.source_train, &dir.join("source_train.csv"))?;
            dataset_io::write_csv(&data.source_test, &dir.join("source_test.csv"))?;
            dataset_io::write_csv(&data.source_val, &dir.join("source_val.csv"))?;
            dataset_io::write_csv(&data.target_train, &dir.join("target_train.csv"))?;
            dataset_io::write_csv(&data.target_test, &dir.join("target_test.csv"))?;
            dataset_io::write_csv(&data.target_val, &dir.join("target_val.csv"))?;
            println!("wrote 6 splits under {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { common, no_teacher_update, uniform_group_weights, consistency_domain } => {
            let mut rc = load_config(&common)?;
            if no_teacher_update {
                rc.no_teacher_update = true;
            }
            if uniform_group_weights {
                rc.uniform_group_weights = true;
            }
            if let Some(cd) = consistency_domain {
                rc.consistency_domain = match cd.as_str() {
                    "source" => fairshift::selftrain::DomainFilter::SourceOnly,
                    "target" => fairshift::selftrain::DomainFilter::TargetOnly,
                    _ => fairshift::selftrain::DomainFilter::Both,
                };
            }
            let record = run(&rc, Some(&common.out))?;
            println!(
                "run {} method={} scenario={} seed={}: selected epoch {}, \
                 source acc {:.2}%, target acc {:.2}%, target odds {:.4}",
                record.config_hash,
                record.method,
                record.scenario,
                record.seed,
                record.selected_epoch,
                record.final_source.accuracy * 100.0,
                record.final_target.accuracy * 100.0,
                record.final_target.delta_odds
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { common } => {
            let rc = load_config(&common)?;
            let (methods, seeds) = methods_and_seeds(&common, &rc)?;
            let (table, _) = compare(&rc, rc.scenario, &methods, &seeds, Some(&common.out))?;
            print!("{}", table.to_csv());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { common } => {
            let rc = load_config(&common)?;
            let cfg = match &common.config {
                Some(path) => Config::from_file(path)?,
                None => Config::new(),
            };
            let w_fair: Vec<f64> = cfg.list_or("sweep.w_fair", &[0.0, 0.5, 1.0, 2.0])?;
            let w_cons: Vec<f64> = cfg.list_or("sweep.w_cons", &[0.0, 0.5, 1.0, 2.0])?;
            let seeds: Vec<u64> = cfg.list_or("seeds", &[0, 1])?;
            let result = sweep(&rc, &w_fair, &w_cons, &seeds, Some(&common.out))?;
            print!("{}", result.frontier_csv());
            Ok(ExitCode::SUCCESS)
        }
        Command::Theory { worlds, seed, alpha, cbar, mu_mode, prop_tables, report } => {
            let args = TheoryArgs {
                worlds,
                seed,
                alpha,
                cbar,
                mu_mode: mu_mode.parse::<MuMode>()?,
                prop_tables,
            };
            let rep = run_theory(&args, report.as_deref())?;
            println!(
                "worlds={} violations={} uncertified={} prop_max_fair_target_odds={:.3e}",
                rep.worlds, rep.bound_violations, rep.uncertified_worlds, rep.subpop_max_target_odds
            );
            if rep.passed() {
                println!("theory certification: PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("theory certification: FAIL");
                Ok(ExitCode::from(3))
            }
        }
        Command::Eval { snapshot: snap_path, data, report } => {
            let net = snapshot::load(&snap_path)?;
            let ds = dataset_io::read_csv(&data)?;
            let domain = ds
                .samples
                .first()
                .map(|s| s.domain.letter().to_string())
                .unwrap_or_else(|| "S".to_string());
            let rep = evaluate(&net, &ds, &domain)?;
            let json = serde_json::to_string_pretty(&rep)? + "\n";
            if let Some(path) = report {
                std::fs::write(&path, &json)?;
            }
            print!("{}", json);
            Ok(ExitCode::SUCCESS)
        }
    }
}
