//! Experiment front end for the stochastic Maxwell solver kit.
//!
//! Subcommands map one-to-one onto the library's experiments; every run
//! writes its CSV outputs plus a manifest into the output directory. All
//! results are a deterministic function of the configuration and seed.

mod config;
mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{parse_config, CliConfig};
use stomax::diag::fit_slope;
use stomax::ensemble::{
    msconv_study, path_count_sweep, run_ensemble, simulate_path, tangent_residual_series,
};

#[derive(Parser)]
#[command(name = "stomax", version, about = "Stochastic Maxwell structure-preserving solver kit")]
struct Cli {
    /// Key=value configuration file; omitted means all defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the configured Monte-Carlo path count.
    #[arg(long, global = true)]
    paths: Option<u64>,
    /// Also emit SVG charts next to the CSVs.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one sample path and write field snapshots.
    Simulate {
        /// Snapshot cadence in steps; 0 means initial and final states only.
        #[arg(long, default_value_t = 0)]
        snapshot_every: u64,
    },
    /// Ensemble averaged-energy statistics against the predicted growth line.
    Energy,
    /// Ensemble averaged-divergence errors per step.
    Divergence,
    /// Monte-Carlo divergence error versus path count (closed-form oracle).
    Pathsweep,
    /// Mean-square convergence in dt against a common-noise fine reference.
    Msconv {
        /// Coarsest step as a dyadic level k (dt = 2^-k).
        #[arg(long, default_value_t = 4)]
        coarsest: u32,
        /// Finest tested step as a dyadic level.
        #[arg(long, default_value_t = 7)]
        finest: u32,
        /// Reference step as a dyadic level.
        #[arg(long, default_value_t = 9)]
        ref_level: u32,
        /// Start from the zero state so the error is purely stochastic.
        #[arg(long)]
        zero_init: bool,
    },
    /// Multi-symplectic 2-form conservation residuals on a tangent pair.
    Symplectic {
        #[arg(long, default_value_t = 20)]
        steps: u64,
    },
    /// Covariance truncation report: eigenvalues and noise coefficients.
    NoiseInfo,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<CliConfig, String> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(paths) = cli.paths {
        if paths == 0 {
            return Err("key `paths`: invariant P >= 1 violated".into());
        }
        cfg.experiment.paths = paths;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    // re-echo so the manifest reflects the overrides
    cfg = parse_config(&override_echo(&cfg))?;
    Ok(cfg)
}

fn override_echo(cfg: &CliConfig) -> String {
    let mut echo = String::new();
    for line in cfg.echo.lines() {
        let patched = match line.split_once('=') {
            Some(("seed", _)) => format!("seed={}", cfg.experiment.seed),
            Some(("paths", _)) => format!("paths={}", cfg.experiment.paths),
            Some(("out_dir", _)) => format!("out_dir={}", cfg.out_dir.display()),
            _ => line.to_string(),
        };
        echo.push_str(&patched);
        echo.push('\n');
    }
    echo
}

fn run(cli: &Cli) -> Result<(), String> {
    let cfg = load_config(cli)?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    let started = Instant::now();
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let io_err = |e: std::io::Error| format!("write failed: {e}");

    match &cli.command {
        Command::Simulate { snapshot_every } => {
            let mut written = Vec::new();
            simulate_path(&cfg.experiment, 0, *snapshot_every, |step, state| {
                let path = out.join(format!("snapshot_{step:06}.csv"));
                let mut w = std::io::BufWriter::new(
                    fs::File::create(&path).map_err(|e| e.to_string())?,
                );
                state.write_snapshot_csv(&mut w).map_err(|e| e.to_string())?;
                written.push(path);
                Ok::<(), String>(())
            })
            .map_err(|e| e.to_string())?;
            println!("wrote {} snapshots to {}", written.len(), out.display());
            outputs.extend(written);
        }
        Command::Energy => {
            let stats = run_ensemble(&cfg.experiment).map_err(|e| e.to_string())?;
            warnings.extend(stats.warnings.iter().cloned());
            let path = out.join("energy.csv");
            report::write_energy_csv(&path, &stats).map_err(io_err)?;
            outputs.push(path);
            let series: Vec<(f64, f64)> =
                stats.energy.iter().map(|r| (r.time, r.mean_phi)).collect();
            let (slope, _, r2) = fit_slope(&series)?;
            println!(
                "mean energy slope {slope:.6} (predicted {:.6}, r^2 {r2:.4}) over {} paths",
                stats.predicted_rate, cfg.experiment.paths
            );
            if cli.svg {
                let predicted: Vec<(f64, f64)> =
                    stats.energy.iter().map(|r| (r.time, r.predicted)).collect();
                let svg = report::svg_line_chart(
                    "mean energy vs time",
                    &[("mean", &series), ("predicted", &predicted)],
                    false,
                );
                let p = out.join("energy.svg");
                fs::write(&p, svg).map_err(io_err)?;
                outputs.push(p);
            }
        }
        Command::Divergence => {
            let stats = run_ensemble(&cfg.experiment).map_err(|e| e.to_string())?;
            warnings.extend(stats.warnings.iter().cloned());
            let path = out.join("divergence.csv");
            report::write_divergence_csv(&path, &stats).map_err(io_err)?;
            outputs.push(path);
            let max_h = stats.divergence.iter().map(|r| r.err_div_h).fold(0.0, f64::max);
            let max_e = stats.divergence.iter().map(|r| r.err_div_e).fold(0.0, f64::max);
            println!(
                "max Err-Div over {} steps: H {max_h:.3e}, E {max_e:.3e} ({} paths)",
                stats.divergence.len(),
                cfg.experiment.paths
            );
            if cli.svg {
                let h: Vec<(f64, f64)> =
                    stats.divergence.iter().map(|r| (r.time, r.err_div_h)).collect();
                let e: Vec<(f64, f64)> =
                    stats.divergence.iter().map(|r| (r.time, r.err_div_e)).collect();
                let svg = report::svg_line_chart(
                    "divergence error vs time",
                    &[("H", &h), ("E", &e)],
                    false,
                );
                let p = out.join("divergence.svg");
                fs::write(&p, svg).map_err(io_err)?;
                outputs.push(p);
            }
        }
        Command::Pathsweep => {
            let max_p = cfg.experiment.paths;
            if max_p < 10 {
                return Err("pathsweep needs paths >= 10".into());
            }
            let mut p_list = Vec::new();
            let mut p = 10u64;
            while p <= max_p {
                p_list.push(p);
                p = p.saturating_mul(10);
            }
            if *p_list.last().unwrap() != max_p {
                p_list.push(max_p);
            }
            let rows = path_count_sweep(&cfg.experiment, &p_list).map_err(|e| e.to_string())?;
            let path = out.join("pathsweep.csv");
            report::write_pathsweep_csv(&path, &rows).map_err(io_err)?;
            outputs.push(path);
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|&&(_, e)| e > 0.0)
                .map(|&(p, e)| ((p as f64).ln(), e.ln()))
                .collect();
            if pts.len() >= 3 {
                let (slope, _, _) = fit_slope(&pts)?;
                println!("Err-Div vs P log-log slope {slope:.3} over {} checkpoints", rows.len());
            } else {
                println!("Err-Div checkpoints: {rows:?}");
            }
            if cli.svg {
                let series: Vec<(f64, f64)> = rows.iter().map(|&(p, e)| (p as f64, e)).collect();
                let svg =
                    report::svg_line_chart("Err-Div vs path count", &[("Err-Div", &series)], true);
                let p = out.join("pathsweep.svg");
                fs::write(&p, svg).map_err(io_err)?;
                outputs.push(p);
            }
        }
        Command::Msconv { coarsest, finest, ref_level, zero_init } => {
            if finest < coarsest {
                return Err("msconv: finest level must be >= coarsest level".into());
            }
            let levels: Vec<u32> = (*coarsest..=*finest).collect();
            let table = msconv_study(&cfg.experiment, &levels, *ref_level, *zero_init)
                .map_err(|e| e.to_string())?;
            let path = out.join("msconv.csv");
            report::write_msconv_csv(&path, &table).map_err(io_err)?;
            outputs.push(path);
            println!(
                "fitted mean-square order {:.3} (log-log slope of the squared L2 error)",
                table.fitted_order
            );
        }
        Command::Symplectic { steps } => {
            let rows =
                tangent_residual_series(&cfg.experiment, *steps).map_err(|e| e.to_string())?;
            let path = out.join("msymp.csv");
            report::write_msymp_csv(&path, &rows).map_err(io_err)?;
            outputs.push(path);
            let max = rows.iter().map(|&(_, r)| r).fold(0.0, f64::max);
            println!("max 2-form conservation residual {max:.3e} over {} steps", rows.len());
        }
        Command::NoiseInfo => {
            let path = out.join("noise_info.csv");
            report::write_noise_info_csv(&path, &cfg.experiment.basis).map_err(io_err)?;
            outputs.push(path);
            let b = &cfg.experiment.basis;
            println!(
                "truncation {}x{}, Tr(Q) = {:.4}, a(1,1) = {:.4}, a({},{}) = {:.3e}",
                b.trunc_m,
                b.trunc_l,
                b.trace_q(),
                b.coefficient_magnitude(1, 1),
                b.trunc_m,
                b.trunc_l,
                b.coefficient_magnitude(b.trunc_m, b.trunc_l)
            );
        }
    }

    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    let manifest = out.join("manifest.txt");
    report::write_manifest(
        &manifest,
        &cfg.echo,
        started.elapsed().as_secs_f64(),
        &outputs,
        &warnings,
    )
    .map_err(io_err)?;
    Ok(())
}
