use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rbgreedy::bench::{run_experiment, ExperimentConfig};
use rbgreedy::fem::thermal_block;

/// Thermal-block reduced basis experiment with the weak batch greedy.
#[derive(Debug, Parser)]
#[command(name = "rbgreedy", version)]
struct Cli {
    /// key = value configuration file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    px: Option<usize>,
    #[arg(long)]
    py: Option<usize>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    train_per_dim: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    /// Comma-separated, e.g. 1,2,4,8
    #[arg(long)]
    batch_sizes: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Precompute every training snapshot and run the theory checks.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the affine operator components as MatrixMarket files into this directory.
    #[arg(long)]
    export_matrices: Option<PathBuf>,
}

fn resolve(cli: &Cli) -> rbgreedy::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = [
        ("px", cli.px.map(|v| v.to_string())),
        ("py", cli.py.map(|v| v.to_string())),
        ("nx", cli.nx.map(|v| v.to_string())),
        ("ny", cli.ny.map(|v| v.to_string())),
        ("train_per_dim", cli.train_per_dim.map(|v| v.to_string())),
        ("test_count", cli.test_count.map(|v| v.to_string())),
        ("batch_sizes", cli.batch_sizes.clone()),
        ("tol", cli.tol.map(|v| v.to_string())),
        ("workers", cli.workers.map(|v| v.to_string())),
        ("seed", cli.seed.map(|v| v.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in overrides {
        if let Some(value) = value {
            config.set(key, &value)?;
        }
    }
    if cli.oracle {
        config.oracle = true;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|config| {
        if let Some(dir) = &cli.export_matrices {
            thermal_block(config.nx, config.ny, config.px, config.py, 1.0)?.export_matrix_market(dir)?;
        }
        let report = run_experiment(&config)?;
        println!("   b  num_ext  num_iter  t_offline[s]  max test err  k*");
        for s in &report.summaries {
            println!(
                "{:>4}  {:>7}  {:>8}  {:>12.3}  {:>12.3e}  {}",
                s.batch_size,
                s.num_ext,
                s.num_iter,
                s.t_offline,
                s.err_final,
                s.k_star.map_or("-".to_string(), |k| k.to_string())
            );
        }
        if let Some(theory) = &report.theory {
            for run in &theory.runs {
                for check in &run.checks {
                    println!(
                        "b={} {:<6} {:<20} {:?} (worst margin {:.3e})",
                        run.batch_size, run.mode, check.name, check.status, check.worst_margin
                    );
                }
            }
        }
        println!("results written to {}", config.out.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
