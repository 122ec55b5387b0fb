//! Lyapunov exponents and backward/forward Lyapunov vectors by the QR
//! method, plus direct small-window computations for convergence studies.
//!
//! The QR recursion `Q_n R_n = A_n Q_{n-1}` (positive-diagonal
//! convention, `Q_0 = I`) accumulates per-direction log magnitudes whose
//! averages converge to the Lyapunov exponents; `Q_n` converges to the
//! backward Lyapunov basis. Running the same recursion on `A_n^T` in
//! reversed time order yields the forward basis at time zero. The
//! reported exponents average only the second half of the sweep, which
//! discards the alignment transient of the recursion.

use crate::error::{Error, Result};
use crate::kalman::FACTORIZATION_MAX_STEP;
use crate::linalg::{self, qr_positive, svd, Matrix};
use crate::system::SystemSpec;

/// Exponents above `-NEUTRAL_THRESHOLD` count as non-negative when
/// classifying the unstable-neutral dimension `d0`.
pub const NEUTRAL_THRESHOLD: f64 = 1e-3;

/// Result of a QR-method sweep.
#[derive(Debug, Clone)]
pub struct LyapunovResult {
    /// Tail-half averaged exponents, sorted nonincreasing.
    pub exponents: Vec<f64>,
    /// Cumulative (full-window) averages in the same order.
    pub cumulative: Vec<f64>,
    /// Backward Lyapunov basis estimate `Q_N`, columns ordered like
    /// `exponents`.
    pub backward_basis: Matrix,
    /// Forward Lyapunov basis estimate at time zero, columns ordered by
    /// its own exponent estimates (which converge to the same values).
    pub forward_basis: Matrix,
    /// Number of exponents classified non-negative.
    pub d0: usize,
    /// Per-step cumulative exponent estimates, one row per step, in the
    /// same column order as `exponents`.
    pub history: Vec<ExponentSample>,
}

/// Running exponent estimate after `step` factors.
#[derive(Debug, Clone)]
pub struct ExponentSample {
    pub step: usize,
    pub cumulative: Vec<f64>,
}

/// Spectra of the direct finite-window Oseledets matrices.
#[derive(Debug, Clone)]
pub struct OseledetsSnapshot {
    pub window: usize,
    /// Spectrum of `[(B_{0:n})^T B_{0:n}]^{1/2n}` with eigenvectors `V_n`.
    pub forward: linalg::SortedSpectrum,
    /// Spectrum of `[B_{0:n} (B_{0:n})^T]^{1/2n}` with eigenvectors `U_n`.
    pub backward: linalg::SortedSpectrum,
}

/// Column-wise angles between the QR basis and the direct left singular
/// basis at one checkpoint.
#[derive(Debug, Clone)]
pub struct ConvergenceSample {
    pub step: usize,
    pub angles: Vec<f64>,
}

pub(crate) struct QrSweep {
    pub q: Matrix,
    pub cumulative_log: Vec<f64>,
    pub tail_log: Vec<f64>,
    pub tail_steps: usize,
    pub history: Vec<ExponentSample>,
}

/// Run the QR recursion over `steps` factors produced by `factor_at`
/// (1-based). `tail_from` is the first step included in the tail window.
pub(crate) fn qr_sweep(
    dim: usize,
    steps: usize,
    tail_from: usize,
    record_history: bool,
    mut factor_at: impl FnMut(usize) -> Result<Matrix>,
) -> Result<QrSweep> {
    let mut q = Matrix::identity(dim, dim);
    let mut cumulative = vec![0.0; dim];
    let mut tail = vec![0.0; dim];
    let mut tail_steps = 0usize;
    let mut history = Vec::new();
    for n in 1..=steps {
        let a = factor_at(n)?;
        let (q_next, r) = qr_positive(&(a * &q))?;
        q = q_next;
        for j in 0..dim {
            let l = r[(j, j)].ln();
            cumulative[j] += l;
            if n >= tail_from {
                tail[j] += l;
            }
        }
        if n >= tail_from {
            tail_steps += 1;
        }
        if record_history {
            history.push(ExponentSample {
                step: n,
                cumulative: cumulative.iter().map(|c| c / n as f64).collect(),
            });
        }
    }
    Ok(QrSweep { q, cumulative_log: cumulative, tail_log: tail, tail_steps, history })
}

fn sort_descending(values: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    let sorted = order.iter().map(|&i| values[i]).collect();
    (order, sorted)
}

fn permute_columns(m: &Matrix, order: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for (j, &i) in order.iter().enumerate() {
        out.set_column(j, &m.column(i));
    }
    out
}

/// Lyapunov exponents and bases over `steps` operators of `spec`.
pub fn qr_exponents(spec: &SystemSpec, steps: usize) -> Result<LyapunovResult> {
    spec.validate()?;
    let d = spec.state_dim;
    if steps < d {
        return Err(Error::InvalidInput(format!(
            "need at least d = {d} steps for a full basis, got {steps}"
        )));
    }
    if steps > spec.horizon {
        return Err(Error::InvalidInput(format!(
            "steps {steps} exceeds the spec horizon {}",
            spec.horizon
        )));
    }
    let tail_from = steps / 2 + 1;

    let backward = qr_sweep(d, steps, tail_from, true, |n| Ok(spec.operators_at(n)?.a))?;
    let forward = qr_sweep(d, steps, tail_from, false, |k| {
        Ok(spec.operators_at(steps - k + 1)?.a.transpose())
    })?;

    let tail_n = backward.tail_steps.max(1) as f64;
    let tail_means: Vec<f64> = backward.tail_log.iter().map(|l| l / tail_n).collect();
    let (order, exponents) = sort_descending(&tail_means);
    let cumulative: Vec<f64> = order
        .iter()
        .map(|&i| backward.cumulative_log[i] / steps as f64)
        .collect();
    let backward_basis = permute_columns(&backward.q, &order);
    let history: Vec<ExponentSample> = backward
        .history
        .into_iter()
        .map(|s| ExponentSample {
            step: s.step,
            cumulative: order.iter().map(|&i| s.cumulative[i]).collect(),
        })
        .collect();

    let fwd_tail: Vec<f64> = forward.tail_log.iter().map(|l| l / tail_n).collect();
    let (fwd_order, _) = sort_descending(&fwd_tail);
    let forward_basis = permute_columns(&forward.q, &fwd_order);

    let d0 = exponents.iter().filter(|&&m| m >= -NEUTRAL_THRESHOLD).count();
    Ok(LyapunovResult { exponents, cumulative, backward_basis, forward_basis, d0, history })
}

impl LyapunovResult {
    /// Columns `d0+1 ..= d` of the backward basis: the stable backward
    /// Lyapunov vectors estimate.
    pub fn backward_stable_basis(&self) -> Matrix {
        let d = self.backward_basis.nrows();
        self.backward_basis.columns(self.d0, d - self.d0).into_owned()
    }

    /// Stable columns of the forward basis.
    pub fn forward_stable_basis(&self) -> Matrix {
        let d = self.forward_basis.nrows();
        self.forward_basis.columns(self.d0, d - self.d0).into_owned()
    }
}

/// Dense propagator over the first `window` steps.
pub(crate) fn dense_propagator(spec: &SystemSpec, window: usize) -> Result<Matrix> {
    let mut b = Matrix::identity(spec.state_dim, spec.state_dim);
    for n in 1..=window {
        b = spec.operators_at(n)?.a * b;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { step: n, what: "dense propagator".into() });
        }
    }
    Ok(b)
}

/// Direct finite-window Oseledets matrices from one SVD of the dense
/// propagator: eigenvalues are the `1/n`-th roots of the singular values,
/// shared between the forward and backward windows.
pub fn oseledets_direct(spec: &SystemSpec, window: usize) -> Result<OseledetsSnapshot> {
    spec.validate()?;
    if window < 1 {
        return Err(Error::InvalidInput("window must be >= 1".into()));
    }
    if window > FACTORIZATION_MAX_STEP {
        return Err(Error::OutOfValidatedRange { requested: window, max: FACTORIZATION_MAX_STEP });
    }
    if window > spec.horizon {
        return Err(Error::InvalidInput(format!(
            "window {window} exceeds the spec horizon {}",
            spec.horizon
        )));
    }
    let b = dense_propagator(spec, window)?;
    let factors = svd(&b)?;
    let roots: Vec<f64> = factors
        .singulars
        .iter()
        .map(|s| s.powf(1.0 / window as f64))
        .collect();
    Ok(OseledetsSnapshot {
        window,
        forward: linalg::SortedSpectrum { values: roots.clone(), vectors: factors.right },
        backward: linalg::SortedSpectrum { values: roots, vectors: factors.left },
    })
}

/// Angle between each QR-basis column and the matching left singular
/// column of the dense propagator, at each checkpoint. The envelope of
/// these angles is expected to shrink as the window grows.
pub fn backward_convergence(
    spec: &SystemSpec,
    checkpoints: &[usize],
) -> Result<Vec<ConvergenceSample>> {
    spec.validate()?;
    if checkpoints.is_empty() {
        return Ok(Vec::new());
    }
    let max = *checkpoints.iter().max().unwrap();
    if max > FACTORIZATION_MAX_STEP {
        return Err(Error::OutOfValidatedRange { requested: max, max: FACTORIZATION_MAX_STEP });
    }
    let d = spec.state_dim;
    let mut q = Matrix::identity(d, d);
    let mut samples = Vec::with_capacity(checkpoints.len());
    for n in 1..=max {
        let a = spec.operators_at(n)?.a;
        q = qr_positive(&(a * &q))?.0;
        if checkpoints.contains(&n) {
            let direct = oseledets_direct(spec, n)?;
            let angles = (0..d)
                .map(|j| {
                    let qj = q.column(j);
                    let uj = direct.backward.vectors.column(j);
                    qj.dot(&uj).abs().clamp(0.0, 1.0).acos()
                })
                .collect();
            samples.push(ConvergenceSample { step: n, angles });
        }
    }
    Ok(samples)
}
