//! Flat key=value experiment configuration with `#` comments.
//!
//! An empty file yields the full default configuration; every key overrides
//! one field. Parse errors name the offending key and line.

use std::path::PathBuf;
use std::str::FromStr;

use stomax::ensemble::ExperimentConfig;
use stomax::noise::NoiseMode;
use stomax::{FieldMode, GridSpec, SchemeId, SpectralBasis};

/// Experiment parameters plus the output directory.
#[derive(Clone, Debug)]
pub struct CliConfig {
    pub experiment: ExperimentConfig,
    pub out_dir: PathBuf,
    /// Raw key=value lines, one per documented key, echoing the effective
    /// configuration; reparsing this text reproduces the config exactly.
    pub echo: String,
}

struct Raw {
    scheme: SchemeId,
    nx: usize,
    ny: usize,
    nz: usize,
    lx: f64,
    ly: f64,
    dt: f64,
    t_end: f64,
    lambda1: f64,
    lambda2: f64,
    noise_mode: NoiseMode,
    trunc_m: usize,
    trunc_l: usize,
    paths: u64,
    seed: u64,
    solver_tol: f64,
    mode: FieldMode,
    out_dir: PathBuf,
}

impl Default for Raw {
    fn default() -> Self {
        Self {
            scheme: SchemeId::MethodIII,
            nx: 100,
            ny: 75,
            nz: 1,
            lx: 2.0 / 3.0,
            ly: 0.5,
            dt: 0.001,
            t_end: 1.0,
            lambda1: 0.1,
            lambda2: 0.1,
            noise_mode: NoiseMode::SpaceTime,
            trunc_m: 50,
            trunc_l: 50,
            paths: 100,
            seed: 2026,
            solver_tol: 1e-10,
            mode: FieldMode::Tm,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_field<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("line {line}: key `{key}`: cannot parse `{value}`: {e}"))
}

fn parse_noise_mode(value: &str, line: usize) -> Result<NoiseMode, String> {
    match value {
        "space_time" => Ok(NoiseMode::SpaceTime),
        "time_only" => Ok(NoiseMode::TimeOnly),
        other => Err(format!(
            "line {line}: key `noise_mode`: expected space_time or time_only, got `{other}`"
        )),
    }
}

fn parse_field_mode(value: &str, line: usize) -> Result<FieldMode, String> {
    match value {
        "tm" => Ok(FieldMode::Tm),
        "full3d" => Ok(FieldMode::Full3d),
        other => Err(format!("line {line}: key `mode`: expected tm or full3d, got `{other}`")),
    }
}

/// Parse configuration text. Unknown keys, unparsable values, and violated
/// invariants are errors naming the key and line.
pub fn parse_config(text: &str) -> Result<CliConfig, String> {
    let mut raw = Raw::default();
    for (idx, full_line) in text.lines().enumerate() {
        let n = idx + 1;
        let line = full_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| format!("line {n}: expected key=value, got `{line}`"))?;
        match key {
            "scheme" => {
                raw.scheme = value
                    .parse()
                    .map_err(|e| format!("line {n}: key `scheme`: {e}"))?;
            }
            "nx" => raw.nx = parse_field(key, value, n)?,
            "ny" => raw.ny = parse_field(key, value, n)?,
            "nz" => raw.nz = parse_field(key, value, n)?,
            "lx" => raw.lx = parse_field(key, value, n)?,
            "ly" => raw.ly = parse_field(key, value, n)?,
            "dt" => raw.dt = parse_field(key, value, n)?,
            "t_end" => raw.t_end = parse_field(key, value, n)?,
            "lambda1" => raw.lambda1 = parse_field(key, value, n)?,
            "lambda2" => raw.lambda2 = parse_field(key, value, n)?,
            "noise_mode" => raw.noise_mode = parse_noise_mode(value, n)?,
            "trunc_m" => raw.trunc_m = parse_field(key, value, n)?,
            "trunc_l" => raw.trunc_l = parse_field(key, value, n)?,
            "paths" => raw.paths = parse_field(key, value, n)?,
            "seed" => raw.seed = parse_field(key, value, n)?,
            "solver_tol" => raw.solver_tol = parse_field(key, value, n)?,
            "mode" => raw.mode = parse_field_mode(value, n)?,
            "out_dir" => raw.out_dir = PathBuf::from(value),
            other => return Err(format!("line {n}: unknown key `{other}`")),
        }
    }
    build(raw)
}

fn build(raw: Raw) -> Result<CliConfig, String> {
    if raw.nx < 1 || raw.ny < 1 || raw.nz < 1 {
        return Err("grid counts nx, ny, nz must be >= 1".into());
    }
    if raw.lx <= 0.0 || raw.ly <= 0.0 {
        return Err("domain lengths lx, ly must be positive".into());
    }
    if raw.dt <= 0.0 || !raw.dt.is_finite() {
        return Err("key `dt`: step must be positive and finite".into());
    }
    if raw.t_end <= 0.0 {
        return Err("key `t_end`: horizon must be positive".into());
    }
    let steps = raw.t_end / raw.dt;
    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
        return Err(format!(
            "key `t_end`: {} is not an integral number of steps of dt = {}",
            raw.t_end, raw.dt
        ));
    }
    if raw.paths == 0 {
        return Err("key `paths`: invariant P >= 1 violated".into());
    }
    if raw.trunc_m < 1 || raw.trunc_l < 1 {
        return Err("truncation trunc_m, trunc_l must be >= 1".into());
    }
    if raw.solver_tol <= 0.0 {
        return Err("key `solver_tol`: tolerance must be positive".into());
    }
    if raw.mode == FieldMode::Tm && raw.nz != 1 {
        return Err("key `mode`: tm requires nz = 1".into());
    }
    let grid = GridSpec {
        nx: raw.nx,
        ny: raw.ny,
        nz: raw.nz,
        lx: raw.lx,
        ly: raw.ly,
        lz: 1.0,
    };
    let basis = SpectralBasis {
        lx: raw.lx,
        ly: raw.ly,
        trunc_m: raw.trunc_m,
        trunc_l: raw.trunc_l,
        mode: raw.noise_mode,
    };
    let echo = format!(
        "scheme={}\nnx={}\nny={}\nnz={}\nlx={}\nly={}\ndt={}\nt_end={}\nlambda1={}\nlambda2={}\n\
         noise_mode={}\ntrunc_m={}\ntrunc_l={}\npaths={}\nseed={}\nsolver_tol={}\nmode={}\nout_dir={}\n",
        raw.scheme.name(),
        raw.nx,
        raw.ny,
        raw.nz,
        raw.lx,
        raw.ly,
        raw.dt,
        raw.t_end,
        raw.lambda1,
        raw.lambda2,
        match raw.noise_mode {
            NoiseMode::SpaceTime => "space_time",
            NoiseMode::TimeOnly => "time_only",
        },
        raw.trunc_m,
        raw.trunc_l,
        raw.paths,
        raw.seed,
        raw.solver_tol,
        match raw.mode {
            FieldMode::Tm => "tm",
            FieldMode::Full3d => "full3d",
        },
        raw.out_dir.display(),
    );
    Ok(CliConfig {
        experiment: ExperimentConfig {
            scheme: raw.scheme,
            grid,
            dt: raw.dt,
            t_end: raw.t_end,
            lambda1: raw.lambda1,
            lambda2: raw.lambda2,
            basis,
            mode: raw.mode,
            paths: raw.paths,
            seed: raw.seed,
            solver_tol: raw.solver_tol,
        },
        out_dir: raw.out_dir,
        echo,
    })
}
