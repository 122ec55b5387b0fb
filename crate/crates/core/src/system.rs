//! Linear-Gaussian system definitions and seeded operator generation.
//!
//! A [`SystemSpec`] describes one perfect-model experiment: deterministic
//! dynamics `x_{n+1} = A_{n+1} x_n` observed through
//! `y_{n+1} = H_{n+1} x_{n+1} + noise`, with all operators bounded in
//! operator norm and `A_n` non-singular. Operators are a pure function of
//! `(seed, step)`: every draw lives on its own ChaCha stream, so e.g.
//! changing the observation dimension never perturbs the dynamics.

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    self, ensure_finite, ensure_finite_vec, op_norm, qr_positive, symmetrize, Matrix, Vector,
};

/// Name of the RNG recorded in run metadata.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Candidates for a random `A` are rejected while
/// `sigma_min < SINGULARITY_REJECT * sigma_max`.
pub const SINGULARITY_REJECT: f64 = 1e-6;

/// Attempts before random generation gives up.
const MAX_RESAMPLES: usize = 50;

// Per-step draw slots; stream id = step * SLOT_STRIDE + slot.
const SLOT_STRIDE: u64 = 8;
const SLOT_A: u64 = 0;
const SLOT_A_SCALE: u64 = 1;
const SLOT_H: u64 = 2;
const SLOT_H_SCALE: u64 = 3;
const SLOT_Q: u64 = 4;
const SLOT_ROTATION: u64 = 5;

// Step-independent streams (autonomous operator construction, initial
// covariance) live at the top of the stream space.
const GLOBAL_V_LEFT: u64 = u64::MAX;
const GLOBAL_V_SCALE: u64 = u64::MAX - 1;
const GLOBAL_V_RIGHT: u64 = u64::MAX - 2;
const GLOBAL_SIGNS: u64 = u64::MAX - 3;
const GLOBAL_H: u64 = u64::MAX - 4;
const GLOBAL_H_SCALE: u64 = u64::MAX - 5;
const GLOBAL_Q: u64 = u64::MAX - 6;
const GLOBAL_DELTA0: u64 = u64::MAX - 7;

/// Norm bounds for the generated operator sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorBounds {
    pub c_a: f64,
    pub c_h: f64,
    pub c_q: f64,
}

impl Default for OperatorBounds {
    fn default() -> Self {
        Self { c_a: 2.0, c_h: 1.0, c_q: 1.0 }
    }
}

/// Initial analysis covariance.
#[derive(Debug, Clone)]
pub enum Delta0Spec {
    Identity,
    RandomSpd,
    Explicit(Matrix),
}

/// Explicit operator sequences; a length-1 list means "constant in time".
#[derive(Debug, Clone)]
pub struct ExplicitOperators {
    pub a: Vec<Matrix>,
    pub h: Vec<Matrix>,
    pub q: Vec<Matrix>,
}

/// How the operator sequence is produced.
#[derive(Debug, Clone)]
pub enum GeneratorKind {
    /// Fully random bounded operators, rescaled so `|A_n| = c_A * u` with
    /// `u ~ U(0.5, 1)` and resampled while nearly singular.
    RandomBounded,
    /// `A_n = R_n D R_{n-1}^T` with seeded rotations, `R_0 = I` and
    /// `D = diag(spectrum)`, so the propagator telescopes to `R_n D^n` and
    /// the Lyapunov exponents are exactly `ln |D_jj|`.
    RotatedDiagonal,
    /// Constant `A = V diag(+-spectrum) V^{-1}` with a seeded
    /// well-conditioned `V` (condition number at most 2); `H`, `Q` constant.
    Autonomous,
    /// User-provided matrices.
    ExplicitSequence(ExplicitOperators),
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::RandomBounded => "random-bounded",
            GeneratorKind::RotatedDiagonal => "rotated-diagonal",
            GeneratorKind::Autonomous => "autonomous",
            GeneratorKind::ExplicitSequence(_) => "explicit-sequence",
        }
    }
}

/// Full description of a linear-Gaussian experiment.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub horizon: usize,
    pub seed: u64,
    pub generator: GeneratorKind,
    pub bounds: OperatorBounds,
    pub delta0: Delta0Spec,
    /// Target eigenvalue magnitudes for the constructed generators.
    pub spectrum: Option<Vec<f64>>,
}

/// Operators for one step.
#[derive(Debug, Clone)]
pub struct StepOperators {
    pub step: usize,
    pub a: Matrix,
    pub h: Matrix,
    pub q: Matrix,
}

/// Deterministic truth states plus noisy observations.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `x_0 .. x_N`.
    pub states: Vec<Vector>,
    /// `y_1 .. y_N`.
    pub observations: Vec<Vector>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn step_rng(seed: u64, step: usize, slot: u64) -> ChaCha8Rng {
    stream_rng(seed, (step as u64) * SLOT_STRIDE + slot)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

fn haar_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> Result<Matrix> {
    let g = gaussian_matrix(rng, dim, dim);
    Ok(qr_positive(&g)?.0)
}

/// SPD matrix with norm exactly `bound`: `c (W W^T / q + 0.1 I)`.
fn random_spd(rng: &mut ChaCha8Rng, dim: usize, bound: f64) -> Matrix {
    let w = gaussian_matrix(rng, dim, dim);
    let s = symmetrize(&(&w * w.transpose() / dim as f64)) + Matrix::identity(dim, dim) * 0.1;
    let scale = bound / op_norm(&s);
    s * scale
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.state_dim;
        let q = self.obs_dim;
        if d < 1 {
            return Err(Error::InvalidInput("state dimension must be >= 1".into()));
        }
        if q < 1 || q > d {
            return Err(Error::InvalidInput(format!(
                "observation dimension must satisfy 1 <= q <= d, got q={q}, d={d}"
            )));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidInput("horizon must be >= 1".into()));
        }
        let b = &self.bounds;
        if b.c_a <= 0.0 || b.c_h <= 0.0 || b.c_q <= 0.0 {
            return Err(Error::InvalidInput("operator bounds must be strictly positive".into()));
        }
        match (&self.generator, &self.spectrum) {
            (GeneratorKind::RotatedDiagonal | GeneratorKind::Autonomous, None) => {
                return Err(Error::InvalidInput(format!(
                    "{} generator needs a target spectrum",
                    self.generator.name()
                )));
            }
            (_, Some(spec)) => {
                if spec.len() != d {
                    return Err(Error::InvalidInput(format!(
                        "spectrum length {} does not match state dimension {d}",
                        spec.len()
                    )));
                }
                if spec.iter().any(|&s| s == 0.0 || !s.is_finite()) {
                    return Err(Error::InvalidInput(
                        "spectrum entries must be finite and non-zero".into(),
                    ));
                }
                let max_mag = spec.iter().fold(0.0f64, |m, s| m.max(s.abs()));
                let needed = match self.generator {
                    // V has condition number at most 2 by construction.
                    GeneratorKind::Autonomous => 2.0 * max_mag,
                    _ => max_mag,
                };
                if b.c_a < needed * (1.0 - 1e-12) {
                    return Err(Error::InvalidInput(format!(
                        "norm bound c_A = {} too small for the requested spectrum (needs >= {needed})",
                        b.c_a
                    )));
                }
            }
            _ => {}
        }
        if let GeneratorKind::ExplicitSequence(ops) = &self.generator {
            for (name, list, rows, cols) in [
                ("A", &ops.a, d, d),
                ("H", &ops.h, q, d),
                ("Q", &ops.q, q, q),
            ] {
                if list.is_empty() || (list.len() != 1 && list.len() < self.horizon) {
                    return Err(Error::InvalidInput(format!(
                        "explicit {name} sequence must have length 1 or >= horizon"
                    )));
                }
                for m in list.iter() {
                    if m.nrows() != rows || m.ncols() != cols {
                        return Err(Error::InvalidInput(format!(
                            "explicit {name} has shape {}x{}, expected {rows}x{cols}",
                            m.nrows(),
                            m.ncols()
                        )));
                    }
                    ensure_finite(m, "explicit operator")?;
                }
            }
        }
        if let Delta0Spec::Explicit(m) = &self.delta0 {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::InvalidInput("explicit initial covariance has wrong shape".into()));
            }
            ensure_finite(m, "initial covariance")?;
            let sym_dev = (m - m.transpose()).norm();
            if sym_dev > 1e-10 * m.norm().max(1.0) {
                return Err(Error::InvalidInput("initial covariance must be symmetric".into()));
            }
            if linalg::min_symmetric_eig(&symmetrize(m)) <= 0.0 {
                return Err(Error::InvalidInput(
                    "initial covariance must be strictly positive-definite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Initial analysis covariance as a concrete matrix.
    pub fn delta0_matrix(&self) -> Result<Matrix> {
        self.validate()?;
        Ok(match &self.delta0 {
            Delta0Spec::Identity => Matrix::identity(self.state_dim, self.state_dim),
            Delta0Spec::RandomSpd => {
                let mut rng = stream_rng(self.seed, GLOBAL_DELTA0);
                random_spd(&mut rng, self.state_dim, 1.0)
            }
            Delta0Spec::Explicit(m) => symmetrize(m),
        })
    }

    fn random_a(&self, step: usize) -> Result<Matrix> {
        let d = self.state_dim;
        let mut entries = step_rng(self.seed, step, SLOT_A);
        let mut scales = step_rng(self.seed, step, SLOT_A_SCALE);
        for _ in 0..MAX_RESAMPLES {
            let g = gaussian_matrix(&mut entries, d, d);
            let u: f64 = 0.5 + 0.5 * scales.random::<f64>();
            let sv = linalg::singular_values(&g);
            let smax = sv.first().copied().unwrap_or(0.0);
            let smin = sv.last().copied().unwrap_or(0.0);
            if smax == 0.0 || smin < SINGULARITY_REJECT * smax {
                continue;
            }
            return Ok(g * (self.bounds.c_a * u / smax));
        }
        Err(Error::GenerationFailure {
            step,
            reason: format!("{MAX_RESAMPLES} consecutive near-singular draws for A"),
        })
    }

    fn random_h(&self, seed_streams: (ChaCha8Rng, ChaCha8Rng)) -> Matrix {
        let (mut entries, mut scales) = seed_streams;
        let g = gaussian_matrix(&mut entries, self.obs_dim, self.state_dim);
        let u: f64 = 0.5 + 0.5 * scales.random::<f64>();
        let norm = op_norm(&g);
        g * (self.bounds.c_h * u / norm)
    }

    fn rotation(&self, step: usize) -> Result<Matrix> {
        if step == 0 {
            return Ok(Matrix::identity(self.state_dim, self.state_dim));
        }
        let mut rng = step_rng(self.seed, step, SLOT_ROTATION);
        haar_orthogonal(&mut rng, self.state_dim)
    }

    /// The constant propagator of the autonomous generator.
    pub fn autonomous_a(&self) -> Result<Matrix> {
        let spectrum = self
            .spectrum
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("autonomous generator needs a spectrum".into()))?;
        let d = self.state_dim;
        let left = haar_orthogonal(&mut stream_rng(self.seed, GLOBAL_V_LEFT), d)?;
        let right = haar_orthogonal(&mut stream_rng(self.seed, GLOBAL_V_RIGHT), d)?;
        let mut scale_rng = stream_rng(self.seed, GLOBAL_V_SCALE);
        let dv = Vector::from_fn(d, |_, _| 1.0 + scale_rng.random::<f64>());
        let v = &left * Matrix::from_diagonal(&dv) * right.transpose();

        let mut sign_rng = stream_rng(self.seed, GLOBAL_SIGNS);
        let eigs = Vector::from_fn(d, |i, _| {
            let sign = if sign_rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
            sign * spectrum[i]
        });
        // A = V diag V^{-1} without forming the inverse:
        // A^T solves V^T A^T = diag V^T.
        let vt = v.transpose();
        let rhs = Matrix::from_diagonal(&eigs) * &vt;
        Ok(linalg::solve(&vt, &rhs)?.transpose())
    }

    /// Operators for step `n`, deterministic in `(seed, n)`.
    pub fn operators_at(&self, step: usize) -> Result<StepOperators> {
        self.validate()?;
        if step < 1 || step > self.horizon {
            return Err(Error::InvalidInput(format!(
                "step {step} outside 1..={}",
                self.horizon
            )));
        }
        let ops = match &self.generator {
            GeneratorKind::RandomBounded => StepOperators {
                step,
                a: self.random_a(step)?,
                h: self.random_h((
                    step_rng(self.seed, step, SLOT_H),
                    step_rng(self.seed, step, SLOT_H_SCALE),
                )),
                q: random_spd(
                    &mut step_rng(self.seed, step, SLOT_Q),
                    self.obs_dim,
                    self.bounds.c_q,
                ),
            },
            GeneratorKind::RotatedDiagonal => {
                let spectrum = self.spectrum.as_ref().expect("validated");
                let d_diag = Matrix::from_diagonal(&Vector::from_vec(spectrum.clone()));
                let r_cur = self.rotation(step)?;
                let r_prev = self.rotation(step - 1)?;
                StepOperators {
                    step,
                    a: &r_cur * d_diag * r_prev.transpose(),
                    h: self.random_h((
                        step_rng(self.seed, step, SLOT_H),
                        step_rng(self.seed, step, SLOT_H_SCALE),
                    )),
                    q: random_spd(
                        &mut step_rng(self.seed, step, SLOT_Q),
                        self.obs_dim,
                        self.bounds.c_q,
                    ),
                }
            }
            GeneratorKind::Autonomous => StepOperators {
                step,
                a: self.autonomous_a()?,
                h: self.random_h((
                    stream_rng(self.seed, GLOBAL_H),
                    stream_rng(self.seed, GLOBAL_H_SCALE),
                )),
                q: random_spd(&mut stream_rng(self.seed, GLOBAL_Q), self.obs_dim, self.bounds.c_q),
            },
            GeneratorKind::ExplicitSequence(seq) => {
                let pick = |list: &Vec<Matrix>| -> Matrix {
                    if list.len() == 1 {
                        list[0].clone()
                    } else {
                        list[step - 1].clone()
                    }
                };
                StepOperators { step, a: pick(&seq.a), h: pick(&seq.h), q: pick(&seq.q) }
            }
        };
        #[cfg(debug_assertions)]
        ops.check_invariants(&self.bounds)?;
        Ok(ops)
    }

    /// Deterministic truth trajectory plus observations with noise drawn
    /// `N(0, Q_n)` from `noise_seed`.
    pub fn simulate_truth(&self, x0: &Vector, noise_seed: u64) -> Result<Trajectory> {
        self.validate()?;
        if x0.len() != self.state_dim {
            return Err(Error::InvalidInput(format!(
                "initial state has length {}, expected {}",
                x0.len(),
                self.state_dim
            )));
        }
        ensure_finite_vec(x0, "initial state")?;

        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut observations = Vec::with_capacity(self.horizon);
        states.push(x0.clone());
        let mut x = x0.clone();
        for n in 1..=self.horizon {
            let ops = self.operators_at(n)?;
            x = &ops.a * &x;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBlowup { step: n, what: "truth state".into() });
            }
            let chol = Cholesky::new(ops.q.clone())
                .ok_or(Error::DegenerateInnovation { step: n })?;
            let mut rng = stream_rng(noise_seed, n as u64);
            let z = Vector::from_fn(self.obs_dim, |_, _| rng.sample(StandardNormal));
            let y = &ops.h * &x + chol.l() * z;
            observations.push(y);
            states.push(x.clone());
        }
        Ok(Trajectory { states, observations })
    }

    /// Draw an initial truth state `x0 ~ N(0, Delta_0)`.
    pub fn sample_initial_state(&self, noise_seed: u64) -> Result<Vector> {
        let delta0 = self.delta0_matrix()?;
        let chol = Cholesky::new(delta0)
            .ok_or_else(|| Error::InvalidInput("initial covariance not positive-definite".into()))?;
        let mut rng = stream_rng(noise_seed, 0);
        let z = Vector::from_fn(self.state_dim, |_, _| rng.sample(StandardNormal));
        Ok(chol.l() * z)
    }
}

impl StepOperators {
    /// Shape, boundedness, invertibility and positive-definiteness checks.
    pub fn check_invariants(&self, bounds: &OperatorBounds) -> Result<()> {
        ensure_finite(&self.a, "A")?;
        ensure_finite(&self.h, "H")?;
        ensure_finite(&self.q, "Q")?;
        let slack = 1.0 + 1e-9;
        let sv = linalg::singular_values(&self.a);
        let smin = sv.last().copied().unwrap_or(0.0);
        let smax = sv.first().copied().unwrap_or(0.0);
        if smin <= linalg::TOL_RANK {
            return Err(Error::InvalidInput(format!(
                "A at step {} is numerically singular",
                self.step
            )));
        }
        if smax > bounds.c_a * slack {
            return Err(Error::InvalidInput(format!(
                "|A| = {smax} exceeds bound {}",
                bounds.c_a
            )));
        }
        if op_norm(&self.h) > bounds.c_h * slack {
            return Err(Error::InvalidInput("|H| exceeds its bound".into()));
        }
        if op_norm(&self.q) > bounds.c_q * slack {
            return Err(Error::InvalidInput("|Q| exceeds its bound".into()));
        }
        let qsym = (&self.q - self.q.transpose()).norm();
        if qsym > 1e-12 * self.q.norm().max(1.0) {
            return Err(Error::InvalidInput("Q must be symmetric".into()));
        }
        if linalg::min_symmetric_eig(&self.q) <= 0.0 {
            return Err(Error::InvalidInput("Q must be positive-definite".into()));
        }
        Ok(())
    }
}

/// Convenience constructor for scalar test systems with constant
/// operators `a`, `h` and observation variance `q_var`.
pub fn scalar_system(a: f64, h: f64, q_var: f64, delta0: f64, horizon: usize, seed: u64) -> SystemSpec {
    SystemSpec {
        state_dim: 1,
        obs_dim: 1,
        horizon,
        seed,
        generator: GeneratorKind::ExplicitSequence(ExplicitOperators {
            a: vec![Matrix::from_element(1, 1, a)],
            h: vec![Matrix::from_element(1, 1, h)],
            q: vec![Matrix::from_element(1, 1, q_var)],
        }),
        bounds: OperatorBounds {
            c_a: a.abs().max(1.0),
            c_h: h.abs().max(1.0),
            c_q: q_var.max(1.0),
        },
        delta0: Delta0Spec::Explicit(Matrix::from_element(1, 1, delta0)),
        spectrum: None,
    }
}
