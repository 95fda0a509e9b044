use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flockrl::config::TrainConfig;
use flockrl::run;
use flockrl::{Error, Result};

/// Train and evaluate DDPG flocking policies.
#[derive(Parser)]
#[command(name = "flockrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a shared policy and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint greedily and write a JSON summary.
    Evaluate(EvaluateArgs),
    /// Tabulate timing and flocking metrics across evaluated runs.
    ScalingReport(ScalingArgs),
    /// Write vehicle, obstacle and waypoint paths of evaluation episodes.
    ExportTrajectory(TrajectoryArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Key/value config file, or a run's manifest.json to repeat that run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario preset applied before the config file.
    #[arg(long, value_parser = flockrl::config::PRESETS)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Extra `key=value` assignments, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run directory; defaults to a name under the output root.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Root for default run directories.
    #[arg(long, env = "FLOCKRL_OUT_ROOT", default_value = "runs")]
    out_root: PathBuf,
    /// Suppress per-episode progress lines.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to `evaluation/` beside the checkpoint.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    /// Run directories, each already evaluated.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrajectoryArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evaluation episode indices.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    episodes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn resolve_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.preset {
        Some(name) => TrainConfig::preset(name)?,
        None => TrainConfig::default(),
    };
    if let Some(path) = &args.config {
        if !path.exists() {
            return Err(Error::Io {
                path: path.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "config file not found"),
            });
        }
        if path.extension().is_some_and(|e| e == "json") {
            cfg = run::load_manifest(path)?.config;
        } else {
            cfg.apply_file(path)?;
        }
    }
    for assignment in &args.overrides {
        cfg.apply_override(assignment)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        cfg.episodes = episodes;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&args)?;
    let dir = args.out_dir.clone().unwrap_or_else(|| {
        let name = args.preset.as_deref().unwrap_or("run");
        args.out_root.join(format!("{name}-seed{}", cfg.seed))
    });
    let every = (cfg.episodes / 50).max(1);
    let quiet = args.quiet;
    let total = cfg.episodes;
    eprintln!(
        "training {} vehicles / {} obstacles for {} episodes into {}",
        cfg.scenario.n_vehicles,
        cfg.scenario.n_obstacles,
        total,
        dir.display()
    );
    let done = run::train_run(&cfg, &dir, |r| {
        if !quiet && ((r.episode + 1) % every == 0 || r.episode + 1 == total) {
            eprintln!(
                "episode {:>6}/{total}  return {:>9.3}  tracking {:.3}  loss {:.4}",
                r.episode + 1,
                r.mean_return(),
                r.stats.tracking_error(),
                r.critic_loss_mean
            );
        }
    })?;
    println!(
        "finished {} episodes, {:.1} ms/episode, final checkpoint {}",
        done.episodes,
        done.mean_episode_ms,
        dir.join(run::FINAL_CHECKPOINT).display()
    );
    Ok(())
}

fn show(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let out = args
        .out_dir
        .unwrap_or_else(|| run::default_evaluation_dir(&args.checkpoint));
    let s = run::evaluate_checkpoint(&args.checkpoint, args.episodes, args.seed, &out)?;
    println!("episodes                      {}", s.episodes);
    println!("tracking error                {:.4}", s.tracking_error);
    println!("min separation to obstacles   {}", show(s.min_obstacle_separation));
    println!("min separation to neighbors   {}", show(s.min_neighbor_separation));
    println!("mean separation to neighbors  {}", show(s.mean_neighbor_separation));
    println!("collision-step fraction       {:.4}", s.collision_step_fraction);
    println!("summary written to {}", out.join("summary.json").display());
    Ok(())
}

fn scaling_report(args: ScalingArgs) -> Result<()> {
    let rows = run::scaling_report(&args.runs)?;
    print!("{}", run::format_scaling_table(&rows));
    if let Some(path) = args.out {
        flockrl::export::write_csv(&path, rows.iter())?;
    }
    Ok(())
}

fn export_trajectory(args: TrajectoryArgs) -> Result<()> {
    let rows = run::export_trajectories(&args.checkpoint, &args.episodes, args.seed, &args.out)?;
    println!("wrote {rows} rows to {}", display(&args.out));
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ScalingReport(a) => scaling_report(a),
        Command::ExportTrajectory(a) => export_trajectory(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
