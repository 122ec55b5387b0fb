//! Artifact emission: CSV files with 17-significant-digit numbers, small
//! hand-rolled SVG line plots, and sha256 content hashes for the run
//! metadata. Identical inputs produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use riccati_rank_core::diagnostics::DiagnosticsFrame;
use riccati_rank_core::kalman::StepMetrics;
use riccati_rank_core::lyapunov::ExponentSample;

use crate::CliError;

/// 17 significant digits round-trips every f64 exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct ArtifactWriter {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::Config(format!("cannot create output dir: {e}")))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("writing {name}: {e}")))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Best-effort removal of everything written so far; used to drop
    /// partial outputs when a run fails.
    pub fn discard_all(&mut self) {
        for path in self.written.drain(..) {
            let _ = fs::remove_file(path);
        }
    }

    /// `(relative name, sha256)` pairs for the metadata artifact list.
    pub fn hashes(&self) -> Result<Vec<(String, String)>, CliError> {
        self.written
            .iter()
            .map(|path| {
                let bytes =
                    fs::read(path).map_err(|e| CliError::Io(format!("hashing {path:?}: {e}")))?;
                let name = path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok((name, hex_digest(&bytes)))
            })
            .collect()
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn diagnostics_csv(frames: &[DiagnosticsFrame], dim: usize) -> String {
    let mut header = String::from("n");
    for j in 1..=dim {
        header.push_str(&format!(",delta_eig_{j}"));
    }
    for j in 1..=dim {
        header.push_str(&format!(",proj_norm_{j}"));
    }
    header.push_str(",restriction_delta,restriction_sigma,eps_rank_delta\n");

    let mut out = header;
    for f in frames {
        out.push_str(&f.step.to_string());
        for v in &f.delta_eigs {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        for v in &f.proj_norms {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        out.push(',');
        out.push_str(&fmt_float(f.restriction_delta));
        out.push(',');
        out.push_str(&fmt_float(f.restriction_sigma));
        out.push(',');
        out.push_str(&f.eps_rank_delta.to_string());
        out.push('\n');
    }
    out
}

pub fn exponents_csv(history: &[ExponentSample], dim: usize) -> String {
    let mut out = String::from("n");
    for j in 1..=dim {
        out.push_str(&format!(",mu_{j}"));
    }
    out.push('\n');
    for sample in history {
        out.push_str(&sample.step.to_string());
        for v in &sample.cumulative {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        out.push('\n');
    }
    out
}

pub fn filter_csv(metrics: &[StepMetrics]) -> String {
    let mut out = String::from("step,sigma_norm,delta_norm,gain_norm,m_norm,gain_residual\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.step,
            fmt_float(m.forecast_norm),
            fmt_float(m.analysis_norm),
            fmt_float(m.gain_norm),
            fmt_float(m.m_norm),
            fmt_float(m.gain_identity_residual),
        ));
    }
    out
}

pub fn autonomous_csv(per_direction: &[f64]) -> String {
    let mut out = String::from("j,proj_norm\n");
    for (j, v) in per_direction.iter().enumerate() {
        out.push_str(&format!("{},{}\n", j + 1, fmt_float(*v)));
    }
    out
}

pub fn jordan_csv(probes: &[riccati_rank_core::JordanBlockProbe]) -> String {
    let mut out = String::from("lambda,k,j,n,measured\n");
    for p in probes {
        for sample in &p.samples {
            for (j, v) in sample.values.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_float(p.magnitude),
                    p.block_size,
                    j + 1,
                    sample.n,
                    fmt_float(*v),
                ));
            }
        }
    }
    out
}

pub fn gramian_csv(per_step: &[(usize, f64)]) -> String {
    let mut out = String::from("n,min_eig\n");
    for (n, v) in per_step {
        out.push_str(&format!("{},{}\n", n, fmt_float(*v)));
    }
    out
}

/// One named series of (x, y) points.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Minimal SVG line plot. With `log_y` the y values are plotted as
/// log10(max(|y|, floor)), which is what the covariance-decay figures
/// need; series names and axis labels are drawn as plain text.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> String {
    const W: f64 = 860.0;
    const H: f64 = 560.0;
    const ML: f64 = 70.0;
    const MR: f64 = 150.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;
    const FLOOR: f64 = 1e-18;

    let transform = |y: f64| if log_y { y.abs().max(FLOOR).log10() } else { y };

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            let ty = transform(y);
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(ty);
            ymax = ymax.max(ty);
        }
    }
    if !xmin.is_finite() || xmin == xmax {
        xmax = xmin + 1.0;
    }
    if !ymin.is_finite() || ymin == ymax {
        ymax = ymin + 1.0;
    }
    let px = |x: f64| ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        W / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n",
        (ML + W - MR) / 2.0,
        H - 12.0
    ));
    let y_title = if log_y { format!("log10 {y_label}") } else { y_label.to_string() };
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_title}</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    ));
    // Ticks: four per axis.
    for k in 0..=4 {
        let x = xmin + (xmax - xmin) * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{:.3}</text>\n",
            px(x),
            H - MB + 16.0,
            x
        ));
        let y = ymin + (ymax - ymin) * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.2}</text>\n",
            ML - 6.0,
            py(y) + 4.0,
            y
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(transform(y))))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        // Legend only for the first few named series to keep plots legible.
        if i < 12 && !s.name.is_empty() {
            let ly = MT + 14.0 * i as f64;
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                W - MR + 8.0,
                W - MR + 28.0
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>\n",
                W - MR + 32.0,
                ly + 3.0,
                s.name
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_has_17_significant_digits() {
        let s = fmt_float(std::f64::consts::PI);
        assert!(s.starts_with("3.1415926535897931"), "{s}");
        let parsed: f64 = s.parse().unwrap();
        assert_eq!(parsed, std::f64::consts::PI);
    }

    #[test]
    fn csv_headers_present() {
        assert!(filter_csv(&[]).starts_with("step,sigma_norm"));
        assert!(autonomous_csv(&[]).starts_with("j,proj_norm"));
        assert!(gramian_csv(&[]).starts_with("n,min_eig"));
    }

    #[test]
    fn svg_plot_is_well_formed() {
        let series = [Series {
            name: "one".into(),
            points: vec![(1.0, 1.0), (2.0, 1e-9), (3.0, 0.0)],
        }];
        let svg = svg_line_plot("t", "n", "value", &series, true);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("polyline"));
    }
}
