use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use memes_core::tasks::TASK_NAMES;
use memes_harness::config::{parse_value, ALGORITHM_NAMES};
use memes_harness::correct::{correct_archive, task_by_name};
use memes_harness::sweep::{run_sweep, Axis, Variant};
use memes_harness::{execute, RunConfig};

#[derive(Parser)]
#[command(name = "memes", version, about = "Run MEMES and baseline quality-diversity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        generations: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Output root (overrides the config and MEMES_OUTPUT_ROOT).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Extra `key=value` overrides, e.g. `algorithm.es.sigma=0.05`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Re-evaluate an archive and report corrected metrics.
    Correct {
        /// Archive snapshot, or a run directory (uses its archive_final.json).
        archive: PathBuf,
        /// Task name; defaults to the one recorded in the run's config.json.
        #[arg(long)]
        task: Option<String>,
        /// Re-evaluations per elite.
        #[arg(long, default_value_t = 512)]
        m: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every combination of axis values and variants.
    Sweep {
        config: PathBuf,
        /// `key=v1,v2,...` or `key=lo..hi`; repeatable.
        #[arg(long = "axis", value_name = "KEY=VALUES")]
        axes: Vec<Axis>,
        /// `label:key=v;key=v`; repeatable.
        #[arg(long = "variant", value_name = "LABEL:OVERRIDES")]
        variants: Vec<Variant>,
        /// Collated CSV path.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    ListTasks,
    ListAlgos,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, generations, threads, output, set } => {
            let src = std::fs::read_to_string(&config)?;
            let mut overrides = Vec::new();
            for kv in set {
                let (k, v) =
                    kv.split_once('=').ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got '{kv}'"))?;
                overrides.push((k.trim().to_string(), parse_value(v.trim())));
            }
            let mut push = |k: &str, v: toml::Value| overrides.push((k.to_string(), v));
            if let Some(s) = seed {
                push("seed", toml::Value::Integer(s as i64));
            }
            if let Some(g) = generations {
                push("generations", toml::Value::Integer(g as i64));
            }
            if let Some(t) = threads {
                push("threads", toml::Value::Integer(t as i64));
            }
            let mut cfg = RunConfig::from_toml_str(&src, &config.display().to_string(), &overrides)?;
            if let Some(o) = output {
                cfg.output_dir = o;
                std::env::remove_var(memes_harness::config::OUTPUT_ROOT_ENV);
            }
            let s = execute(&cfg)?;
            println!(
                "{}: {} generations, {} evaluations, qd_score {:.4}, coverage {:.4}, max_fitness {}",
                s.run_id,
                s.generations_completed,
                s.evaluations,
                s.qd_score.unwrap_or(0.0),
                s.coverage.unwrap_or(0.0),
                s.max_fitness.map_or("-".into(), |f| format!("{f:.4}"))
            );
            println!("{}", memes_harness::run_dir(&cfg).display());
        }
        Command::Correct { archive, task, m, seed } => {
            let task = task.as_deref().map(task_by_name).transpose()?;
            let r = correct_archive(&archive, task, m, seed)?;
            println!("metric        original    corrected   loss%");
            println!(
                "qd_score      {:<11.4} {:<11.4} {:.2}",
                r.original.qd_score, r.corrected.qd_score, r.loss_pct.qd_score
            );
            println!(
                "coverage      {:<11.4} {:<11.4} {:.2}",
                r.original.coverage, r.corrected.coverage, r.loss_pct.coverage
            );
            println!(
                "max_fitness   {:<11.4} {:<11.4} {:.2}",
                r.original.max_fitness, r.corrected.max_fitness, r.loss_pct.max_fitness
            );
        }
        Command::Sweep { config, axes, variants, out } => {
            let rows = run_sweep(&config, &axes, &variants, &out)?;
            let failed = rows.iter().filter(|r| !r.complete).count();
            println!("{} runs ({} failed), collated in {}", rows.len(), failed, out.display());
        }
        Command::ListTasks => TASK_NAMES.iter().for_each(|t| println!("{t}")),
        Command::ListAlgos => ALGORITHM_NAMES.iter().for_each(|a| println!("{a}")),
    }
    Ok(())
}
