use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drl_lab::harness::{
    compare_reports, emit_grid, emit_ranking, emit_report, evaluate_final, grid_search, load_checkpoint, resume_experiment,
    run_experiment, stats_block, EvalReport, GridSpec, RunConfig, FINAL_EVAL_EPISODES,
};
use drl_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "drl-lab", version, about = "Train, evaluate and compare reinforcement learning agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent from a run config, then evaluate it and write the report.
    Train {
        config: PathBuf,
        /// Continue from the run's last checkpoint (deep agents only).
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint with frozen parameters.
    Eval {
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = FINAL_EVAL_EPISODES)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a grid search described by a grid spec file.
    Tune { gridspec: PathBuf },
    /// Paired signed-rank test on two runs' final-evaluation rewards.
    Compare { report_a: PathBuf, report_b: PathBuf },
    /// Regenerate reports for every run under a directory and rank them.
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, resume } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.apply_env_override();
            let report = if resume { resume_experiment(&cfg)? } else { run_experiment(&cfg)? };
            if let Some(ep) = report.resumed_from {
                eprintln!("resumed from episode {ep}; the replay memory was not restored");
            }
            println!("run = {}\ndir = {}", report.run_name, cfg.run_dir().display());
            println!("episodes = {}", report.rewards.len());
            if let Some(avg) = report.running_average.last() {
                println!("final_running_avg = {avg}");
            }
            if let Some(stats) = stats_block(&report) {
                print!("{stats}");
            }
        }
        Command::Eval { checkpoint, env, episodes, seed } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let f = evaluate_final(&ckpt.agent, &env, episodes, seed)?;
            println!("checkpoint = {}\nenv = {env}\nepisodes = {episodes}", checkpoint.display());
            match &f.summary {
                Some(s) => {
                    println!("mean = {}\nmedian = {}\nstd = {}", s.mean, s.median, s.std);
                    let show = |v: Option<f64>| v.map_or("absent".to_string(), |x| x.to_string());
                    println!("skewness = {}\nkurtosis = {}", show(s.skewness), show(s.kurtosis));
                }
                None => println!("rewards = {:?}", f.rewards),
            }
            println!("random_mean = {}\nrandom_std = {}", f.random_mean, f.random_std);
        }
        Command::Tune { gridspec } => {
            let mut gs = GridSpec::load(&gridspec)?;
            gs.base.apply_env_override();
            let report = grid_search(&gs)?;
            let dir = gs.base.output_dir.join("tune");
            emit_grid(&report, &dir)?;
            for sweep in &report.sweeps {
                let nominated = sweep.winner.map_or("none".to_string(), |w| sweep.candidates[w].label.clone());
                let failed = sweep.candidates.iter().flat_map(|c| &c.errors).flatten().count();
                println!("{}: best {nominated}{} ({failed} failed runs)", sweep.parameter, if sweep.tie { " (tie)" } else { "" });
            }
            println!("results in {}", dir.display());
        }
        Command::Compare { report_a, report_b } => {
            let a = EvalReport::load(&find_report(&report_a)?)?;
            let b = EvalReport::load(&find_report(&report_b)?)?;
            print!("{}", compare_reports(&a, &b)?.to_text());
        }
        Command::Report { run_dir } => {
            let mut paths = Vec::new();
            collect_reports(&run_dir, 3, &mut paths)?;
            if paths.is_empty() {
                return Err(Error::Config(format!("no *_report.json files under {}", run_dir.display())));
            }
            paths.sort();
            let mut reports = paths.iter().map(|p| EvalReport::load(p)).collect::<Result<Vec<_>>>()?;
            if reports.len() > 1 {
                for f in emit_ranking(&mut reports, &run_dir, "runs")? {
                    println!("{}", f.display());
                }
            }
            for (report, path) in reports.iter().zip(&paths) {
                let dir = path.parent().unwrap_or(Path::new("."));
                emit_report(report, dir)?;
                println!("{} -> {}", report.run_name, dir.display());
            }
        }
    }
    Ok(())
}

/// Accepts a report file or a run directory holding exactly one.
fn find_report(path: &Path) -> Result<PathBuf> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    let mut found = Vec::new();
    collect_reports(path, 1, &mut found)?;
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(Error::Config(format!("no report found at {}", path.display()))),
        _ => Err(Error::Config(format!("{} holds several reports; name one", path.display()))),
    }
}

fn collect_reports(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() && depth > 1 {
            collect_reports(&path, depth - 1, out)?;
        } else if path.to_string_lossy().ends_with("_report.json") {
            out.push(path);
        }
    }
    Ok(())
}
