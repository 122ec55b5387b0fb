//! Run configuration: a single versioned TOML document describing the
//! experiment, plus the two built-in presets. Explicit matrices are
//! nested row-major arrays.

use serde::{Deserialize, Serialize};

use riccati_rank_core::linalg::Matrix;
use riccati_rank_core::system::{
    Delta0Spec, ExplicitOperators, GeneratorKind, OperatorBounds, SystemSpec,
};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Collapse threshold default for covariance eigenvalues.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Nonaut30,
    Aut30,
    Custom,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Nonaut30 => "nonaut30",
            Experiment::Aut30 => "aut30",
            Experiment::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    /// Steps at which diagnostics frames are recorded; defaults to every
    /// `horizon / 40` steps.
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_emit_svg")]
    pub emit_svg: bool,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub system: SystemConfig,
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_emit_svg() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub horizon: usize,
    pub seed: u64,
    pub generator: GeneratorName,
    #[serde(default)]
    pub spectrum: Option<Vec<f64>>,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub delta0: Delta0Config,
    #[serde(default)]
    pub explicit: Option<ExplicitConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorName {
    RandomBounded,
    RotatedDiagonal,
    Autonomous,
    ExplicitSequence,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub c_a: f64,
    pub c_h: f64,
    pub c_q: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        let b = OperatorBounds::default();
        Self { c_a: b.c_a, c_h: b.c_h, c_q: b.c_q }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Delta0Config {
    #[serde(default)]
    pub kind: Delta0Kind,
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Delta0Kind {
    #[default]
    Identity,
    RandomSpd,
    Explicit,
}

/// Explicit operator sequences as nested row-major arrays; a single
/// matrix means "constant in time".
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitConfig {
    pub a: Vec<Vec<Vec<f64>>>,
    pub h: Vec<Vec<Vec<f64>>>,
    pub q: Vec<Vec<Vec<f64>>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix, CliError> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(CliError::Config(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("{what}: ragged or empty rows")));
    }
    let mut m = Matrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

fn matrices_from(list: &[Vec<Vec<f64>>], what: &str) -> Result<Vec<Matrix>, CliError> {
    list.iter().map(|rows| matrix_from_rows(rows, what)).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.eps > 0.0) {
            return Err(CliError::Config("eps must be positive".into()));
        }
        if let Some(cp) = &self.checkpoints {
            if cp.is_empty() {
                return Err(CliError::Config("checkpoints must not be empty when given".into()));
            }
            if cp.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Config("checkpoints must be strictly increasing".into()));
            }
            if cp[0] < 1 || *cp.last().unwrap() > self.system.horizon {
                return Err(CliError::Config("checkpoints must lie within the horizon".into()));
            }
        }
        // Full system validation happens in the core spec.
        self.to_system_spec()?.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_system_spec(&self) -> Result<SystemSpec, CliError> {
        let sys = &self.system;
        let generator = match sys.generator {
            GeneratorName::RandomBounded => GeneratorKind::RandomBounded,
            GeneratorName::RotatedDiagonal => GeneratorKind::RotatedDiagonal,
            GeneratorName::Autonomous => GeneratorKind::Autonomous,
            GeneratorName::ExplicitSequence => {
                let exp = sys.explicit.as_ref().ok_or_else(|| {
                    CliError::Config("explicit-sequence generator needs [system.explicit]".into())
                })?;
                GeneratorKind::ExplicitSequence(ExplicitOperators {
                    a: matrices_from(&exp.a, "system.explicit.a")?,
                    h: matrices_from(&exp.h, "system.explicit.h")?,
                    q: matrices_from(&exp.q, "system.explicit.q")?,
                })
            }
        };
        let delta0 = match sys.delta0.kind {
            Delta0Kind::Identity => Delta0Spec::Identity,
            Delta0Kind::RandomSpd => Delta0Spec::RandomSpd,
            Delta0Kind::Explicit => {
                let rows = sys.delta0.matrix.as_ref().ok_or_else(|| {
                    CliError::Config("delta0.kind = explicit needs delta0.matrix".into())
                })?;
                Delta0Spec::Explicit(matrix_from_rows(rows, "system.delta0.matrix")?)
            }
        };
        Ok(SystemSpec {
            state_dim: sys.state_dim,
            obs_dim: sys.obs_dim,
            horizon: sys.horizon,
            seed: sys.seed,
            generator,
            bounds: OperatorBounds {
                c_a: sys.bounds.c_a,
                c_h: sys.bounds.c_h,
                c_q: sys.bounds.c_q,
            },
            delta0,
            spectrum: sys.spectrum.clone(),
        })
    }

    /// Checkpoint steps: explicit list or every `horizon/40` steps.
    pub fn checkpoint_steps(&self) -> Vec<usize> {
        if let Some(cp) = &self.checkpoints {
            return cp.clone();
        }
        let horizon = self.system.horizon;
        let stride = (horizon / 40).max(1);
        let mut steps: Vec<usize> = (1..=horizon / stride).map(|k| k * stride).collect();
        if steps.last() != Some(&horizon) {
            steps.push(horizon);
        }
        steps
    }
}

/// Geometrically spaced magnitudes from `hi` down to `lo`.
fn log_spaced(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (lh, ll) = (hi.ln(), lo.ln());
    (0..count)
        .map(|i| (lh + (ll - lh) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Target spectrum with `unstable` magnitudes in [1.02, 1.5] and the rest
/// in [0.3, 0.9]; the gap at the unit circle keeps the classification of
/// every direction unambiguous.
pub fn split_spectrum(dim: usize, unstable: usize) -> Vec<f64> {
    assert!(unstable <= dim);
    let mut s = log_spaced(1.5, 1.02, unstable);
    s.extend(log_spaced(0.9, 0.3, dim - unstable));
    s
}

/// The 30-dimensional non-autonomous preset: rotated-diagonal dynamics
/// with 14 unstable-neutral directions, 10-dimensional observations,
/// 400 steps.
pub fn preset_nonaut30(seed: u64) -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION,
        experiment: Experiment::Nonaut30,
        checkpoints: None,
        eps: DEFAULT_EPS,
        emit_svg: true,
        output_dir: None,
        system: SystemConfig {
            state_dim: 30,
            obs_dim: 10,
            horizon: 400,
            seed,
            generator: GeneratorName::RotatedDiagonal,
            spectrum: Some(split_spectrum(30, 14)),
            bounds: BoundsConfig { c_a: 1.5, c_h: 1.0, c_q: 1.0 },
            delta0: Delta0Config { kind: Delta0Kind::RandomSpd, matrix: None },
            explicit: None,
        },
    }
}

/// The 30-dimensional autonomous preset: constant propagator with 12
/// eigenvalues of magnitude >= 1, run long enough for the analysis
/// covariance to converge.
pub fn preset_aut30(seed: u64) -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION,
        experiment: Experiment::Aut30,
        checkpoints: None,
        eps: DEFAULT_EPS,
        emit_svg: true,
        output_dir: None,
        system: SystemConfig {
            state_dim: 30,
            obs_dim: 15,
            horizon: 600,
            seed,
            generator: GeneratorName::Autonomous,
            spectrum: Some(split_spectrum(30, 12)),
            bounds: BoundsConfig { c_a: 3.0, c_h: 1.0, c_q: 1.0 },
            delta0: Delta0Config { kind: Delta0Kind::RandomSpd, matrix: None },
            explicit: None,
        },
    }
}

pub fn preset(name: &str, seed: u64) -> Result<RunConfig, CliError> {
    match name {
        "nonaut30" => Ok(preset_nonaut30(seed)),
        "aut30" => Ok(preset_aut30(seed)),
        other => Err(CliError::Config(format!(
            "unknown preset '{other}' (available: nonaut30, aut30)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        preset_nonaut30(42).validate().unwrap();
        preset_aut30(42).validate().unwrap();
    }

    #[test]
    fn split_spectrum_counts_and_gap() {
        let s = split_spectrum(30, 14);
        assert_eq!(s.len(), 30);
        assert_eq!(s.iter().filter(|&&v| v >= 1.0).count(), 14);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        assert!(s[13] >= 1.02 && s[14] <= 0.9);
    }

    #[test]
    fn toml_round_trip_and_rejects_bad_documents() {
        let config = preset_nonaut30(7);
        let text = toml::to_string(&config).unwrap();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back.system.seed, 7);
        assert_eq!(back.system.spectrum, config.system.spectrum);

        assert!(RunConfig::parse("schema_version = 99").is_err());
        let bad = text.replace("eps = ", "eps = -");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn explicit_matrices_parse_row_major() {
        let text = r#"
schema_version = 1
experiment = "custom"
eps = 1e-6

[system]
state_dim = 2
obs_dim = 1
horizon = 5
seed = 1
generator = "explicit-sequence"

[system.explicit]
a = [[[2.0, 1.0], [0.0, 0.5]]]
h = [[[1.0, 0.0]]]
q = [[[1.0]]]
"#;
        let config = RunConfig::parse(text).unwrap();
        let spec = config.to_system_spec().unwrap();
        let ops = spec.operators_at(1).unwrap();
        assert_eq!(ops.a[(0, 1)], 1.0);
        assert_eq!(ops.a[(1, 1)], 0.5);
        assert_eq!(ops.h[(0, 0)], 1.0);
    }

    #[test]
    fn default_checkpoints_cover_the_horizon() {
        let config = preset_nonaut30(1);
        let steps = config.checkpoint_steps();
        assert_eq!(steps.len(), 40);
        assert_eq!(*steps.last().unwrap(), 400);
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
    }
}
