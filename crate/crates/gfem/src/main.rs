use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use gfem::assembly::solve_neumann;
use gfem::config::ExperimentConfig;
use gfem::norms::error_norms;
use gfem::study::{self, StudyReport, Workspace};
use gfem::{GfemError, Result};

/// Mesh-free GFEM solver for the Neumann Laplace problem and its verification studies.
///
/// Exit status: 0 when every declared check passes, 1 on a violated check,
/// 2 on an infrastructure error (bad config, failed build or solve).
#[derive(Parser, Debug)]
#[command(name = "gfem", version)]
struct Cli {
    /// TOML file with [domain], [pu], [data], [regions] and [study] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the h-ladder, e.g. `0.2,0.1,0.05`.
    #[arg(long, global = true, value_delimiter = ',')]
    ladder: Option<Vec<f64>>,
    /// Override the local polynomial degree m.
    #[arg(long, global = true)]
    degree: Option<usize>,
    /// Override the flat-top ratio σ.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Directory for CSV, JSON and gnuplot output.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Partition-of-unity assumptions and local-space constants on every rung.
    Verify,
    /// Solve once and dump solution samples and coefficients.
    Solve {
        /// Patch diameter; defaults to the last ladder entry.
        #[arg(long)]
        h: Option<f64>,
        /// Sample pitch for the dump; defaults to h/4.
        #[arg(long)]
        pitch: Option<f64>,
    },
    /// Convergence study over the ladder (interior and dual-norm error rates).
    Study,
    /// Discrete-harmonic and interior-estimate ratios over the ladder.
    Interior,
    /// Dual, trace and H¹ norms of the discrete solution over the ladder.
    Stability,
    /// Covering attempts on the cusp domain, which must fail.
    Cusp,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(l) = &cli.ladder {
        cfg.study.ladder = l.clone();
    }
    if let Some(m) = cli.degree {
        cfg.study.degree = m;
    }
    if let Some(s) = cli.sigma {
        cfg.pu.sigma = s;
    }
    if let Some(o) = &cli.output_dir {
        cfg.study.output_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn publish(cfg: &ExperimentConfig, reports: &[StudyReport]) -> Result<bool> {
    for r in reports {
        println!("{}", r.summary());
        if let Some(dir) = &cfg.study.output_dir {
            for f in r.write(dir)? {
                println!("  wrote {}", f.display());
            }
        }
    }
    Ok(reports.iter().all(|r| r.passed()))
}

fn solve(cfg: &ExperimentConfig, h: Option<f64>, pitch: Option<f64>) -> Result<bool> {
    let h = h.or_else(|| cfg.study.ladder.last().copied()).ok_or_else(|| GfemError::Config("no h given".into()))?;
    let ws = Workspace::for_config(cfg)?;
    let space = ws.space(h, cfg.study.degree)?;
    let g = cfg.data.distribution(ws.domain().length());
    let sol = solve_neumann(&space, &g)?;
    println!("h = {h}, degree {}, {} patches, {} dofs", cfg.study.degree, space.covering().len(), space.dofs());
    println!("residual {:.3e}, mean {:.3e}", sol.residual, sol.mean);
    if let Some(u) = cfg.exact_solution(ws.domain()) {
        if cfg.k() == 0 {
            let (l2, semi) = error_norms(&u, &sol.u, None);
            println!("L² error {l2:.4e}, H¹ error {:.4e}", l2.hypot(semi));
        }
    }
    if let Some(dir) = &cfg.study.output_dir {
        std::fs::create_dir_all(dir)?;
        let pts = study::sample_grid(ws.domain(), pitch.unwrap_or(h / 4.0));
        let samples = dir.join("solution_samples.txt");
        sol.u.write_samples(&pts, &mut BufWriter::new(std::fs::File::create(&samples)?))?;
        let coeffs = dir.join("solution_coefficients.txt");
        sol.u.write_coefficients(&mut BufWriter::new(std::fs::File::create(&coeffs)?))?;
        std::fs::write(dir.join("covering.json"), space.covering().to_json()?)?;
        println!("wrote {} and {}", samples.display(), coeffs.display());
    }
    Ok(sol.residual <= 1e-8)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Verify => {
            let ws = Workspace::for_config(&cfg)?;
            let a = study::pu_validity(&cfg, &ws)?;
            let b = study::local_constants(&cfg, &ws)?;
            publish(&cfg, &[a, b])
        }
        Command::Solve { h, pitch } => solve(&cfg, *h, *pitch),
        Command::Study => {
            let ws = Workspace::for_config(&cfg)?;
            publish(&cfg, &[study::run_convergence(&cfg, &ws)?])
        }
        Command::Interior => {
            let ws = Workspace::for_config(&cfg)?;
            publish(&cfg, &[study::run_interior_estimate_check(&cfg, &ws)?])
        }
        Command::Stability => {
            let ws = Workspace::for_config(&cfg)?;
            publish(&cfg, &[study::run_stability_check(&cfg, &ws)?])
        }
        Command::Cusp => {
            let ladder = if cli.ladder.is_some() { cfg.study.ladder.clone() } else { study::CUSP_LADDER.to_vec() };
            publish(&cfg, &[study::cusp_sweep(&ladder, cfg.pu.sigma)?])
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let defaults = format!("Defaults (equivalent config file):\n\n{}", ExperimentConfig::default().to_toml());
    let matches = Cli::command().after_long_help(defaults).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
