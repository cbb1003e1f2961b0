//! CSV, manifest, and SVG emission.
//!
//! Every floating-point value is written with Rust's shortest round-trip
//! formatting, so re-running an experiment with the same config and seed
//! reproduces each CSV byte for byte.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use stomax::ensemble::{ConvergenceTable, EnsembleStats};
use stomax::SpectralBasis;

/// Schema version recorded in the manifest; bump when any CSV column set or
/// order changes.
pub const SCHEMA_VERSION: u32 = 1;

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_energy_csv(path: &Path, stats: &EnsembleStats) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "step,time,mean_phi,var_phi,min_phi,max_phi,predicted_line")?;
    for r in &stats.energy {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.step, r.time, r.mean_phi, r.var_phi, r.min_phi, r.max_phi, r.predicted
        )?;
    }
    w.flush()
}

pub fn write_divergence_csv(path: &Path, stats: &EnsembleStats) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "step,time,err_div_H,err_div_E")?;
    for r in &stats.divergence {
        writeln!(w, "{},{},{},{}", r.step, r.time, r.err_div_h, r.err_div_e)?;
    }
    w.flush()
}

pub fn write_msymp_csv(path: &Path, rows: &[(u64, f64)]) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "step,max_residual")?;
    for (step, r) in rows {
        writeln!(w, "{step},{r}")?;
    }
    w.flush()
}

pub fn write_msconv_csv(path: &Path, table: &ConvergenceTable) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "dt,ms_error,local_order")?;
    for r in &table.rows {
        match r.local_order {
            Some(o) => writeln!(w, "{},{},{}", r.dt, r.ms_error, o)?,
            None => writeln!(w, "{},{},", r.dt, r.ms_error)?,
        }
    }
    w.flush()
}

pub fn write_pathsweep_csv(path: &Path, rows: &[(u64, f64)]) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "paths,err_div")?;
    for (p, e) in rows {
        writeln!(w, "{p},{e}")?;
    }
    w.flush()
}

/// Covariance truncation report: one row per retained mode with its
/// eigenvalue `eta` and noise coefficient magnitude `a`.
pub fn write_noise_info_csv(path: &Path, basis: &SpectralBasis) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "m,l,eta,a")?;
    for m in 1..=basis.trunc_m {
        for l in 1..=basis.trunc_l {
            writeln!(
                w,
                "{m},{l},{},{}",
                basis.eigenvalue(m, l),
                basis.coefficient_magnitude(m, l)
            )?;
        }
    }
    w.flush()
}

pub fn write_manifest(
    path: &Path,
    config_echo: &str,
    wall_seconds: f64,
    outputs: &[PathBuf],
    warnings: &[String],
) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# run manifest")?;
    writeln!(w, "version={}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "schema={SCHEMA_VERSION}")?;
    writeln!(w, "wall_seconds={wall_seconds:.3}")?;
    for o in outputs {
        writeln!(w, "output={}", o.display())?;
    }
    for warning in warnings {
        writeln!(w, "warning={warning}")?;
    }
    writeln!(w, "# effective configuration (reparseable)")?;
    w.write_all(config_echo.as_bytes())?;
    w.flush()
}

/// Minimal self-contained SVG line chart. Each series is a polyline over the
/// shared axes; log-log rescales both axes by log10 (non-positive points are
/// dropped).
pub fn svg_line_chart(
    title: &str,
    series: &[(&str, &[(f64, f64)])],
    log_log: bool,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const MARGIN: f64 = 50.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

    let transform = |p: (f64, f64)| -> Option<(f64, f64)> {
        if log_log {
            if p.0 <= 0.0 || p.1 <= 0.0 {
                return None;
            }
            Some((p.0.log10(), p.1.log10()))
        } else {
            Some(p)
        }
    };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, s)| s.iter().copied().filter_map(transform).collect())
        .collect();
    let all: Vec<(f64, f64)> = pts.iter().flatten().copied().collect();
    if all.is_empty() {
        return format!("<svg xmlns=\"http://www.w3.org/2000/svg\"><text>{title}: no data</text></svg>");
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"15\">{title}</text>\n",
        W / 2.0
    ));
    svg.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" \
         stroke=\"#888\"/>\n",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    ));
    let label = |v: f64| if log_log { format!("1e{v:.2}") } else { format!("{v:.4}") };
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" \
         font-size=\"11\">{}</text>\n\
         <text x=\"12\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n\
         <text x=\"12\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        H - MARGIN + 16.0,
        label(x0),
        W - MARGIN,
        H - MARGIN + 16.0,
        label(x1),
        H - MARGIN,
        label(y0),
        MARGIN + 4.0,
        label(y1),
    ));
    for (i, ((name, _), p)) in series.iter().zip(&pts).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"{color}\">{name}</text>\n",
            path.join(" "),
            MARGIN + 8.0,
            MARGIN + 16.0 + 16.0 * i as f64,
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_chart_contains_series() {
        let a = [(0.0, 0.0), (1.0, 1.0)];
        let b = [(0.0, 1.0), (1.0, 0.0)];
        let svg = svg_line_chart("demo", &[("up", &a), ("down", &b)], false);
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("up") && svg.contains("down"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn svg_log_log_drops_nonpositive_points() {
        let a = [(0.0, 1.0), (10.0, 1.0), (100.0, 0.1)];
        let svg = svg_line_chart("sweep", &[("err", &a)], true);
        // only the two positive-x points survive
        let poly = svg.split("points=\"").nth(1).unwrap();
        let n = poly.split('"').next().unwrap().split_whitespace().count();
        assert_eq!(n, 2);
    }

    #[test]
    fn noise_info_has_full_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("noise.csv");
        let basis = SpectralBasis { trunc_m: 3, trunc_l: 4, ..SpectralBasis::default() };
        write_noise_info_csv(&p, &basis).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1 + 12);
        assert!(text.starts_with("m,l,eta,a\n"));
        assert!(text.contains("1,1,0.5,"));
    }
}
