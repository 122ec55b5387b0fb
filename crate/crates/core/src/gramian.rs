//! Observability and controllability Gramians over `d`-step windows,
//! with uniform-observability spot checks.
//!
//! The observability Gramian at base step `n` is
//! `sum_{m=0}^{d-1} (B_{n:n+m})^T H_{n+m}^T Q_{n+m}^{-1} H_{n+m} B_{n:n+m}`
//! with `B_{n:n} = I`; the controllability Gramian is
//! `sum_{m=1}^{d} B_{n+m:n+d} F_{n+m} F_{n+m}^T (B_{n+m:n+d})^T`. Both use
//! dense propagator windows of `d` factors, which is safe in double
//! precision for `d <= 30`; larger state dimensions would need scaled
//! accumulation and are rejected.

use crate::error::{Error, Result};
use crate::linalg::{self, solve, symmetrize, Matrix};
use crate::system::SystemSpec;

/// Minimum-eigenvalue threshold for the "observable at n" classification.
pub const OBSERVABILITY_THRESHOLD: f64 = 1e-8;

/// Largest state dimension for which the dense window stays within safe
/// dynamic range (`c_A^d` with the default bounds).
pub const MAX_WINDOW_DIM: usize = 30;

const WINDOW_NORM_GUARD: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramianKind {
    Observability,
    Controllability,
}

/// A Gramian together with its classification data.
#[derive(Debug, Clone)]
pub struct GramianReport {
    pub base_step: usize,
    pub gramian: Matrix,
    pub det: f64,
    pub min_eig: f64,
    pub kind: GramianKind,
}

impl GramianReport {
    pub fn observable(&self) -> bool {
        self.min_eig > OBSERVABILITY_THRESHOLD
    }
}

/// Model-noise coupling `F_n` for the controllability sum. The perfect
/// model uses [`NoiseCoupling::Zero`].
#[derive(Debug, Clone)]
pub enum NoiseCoupling {
    Zero,
    Constant(Matrix),
    Sequence(Vec<Matrix>),
}

impl NoiseCoupling {
    fn at(&self, step: usize, dim: usize) -> Result<Matrix> {
        match self {
            NoiseCoupling::Zero => Ok(Matrix::zeros(dim, dim)),
            NoiseCoupling::Constant(f) => {
                if f.nrows() != dim {
                    return Err(Error::InvalidInput(format!(
                        "noise coupling has {} rows, expected {dim}",
                        f.nrows()
                    )));
                }
                Ok(f.clone())
            }
            NoiseCoupling::Sequence(list) => list
                .get(step - 1)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("no noise coupling for step {step}"))),
        }
    }
}

fn check_window(spec: &SystemSpec, base: usize) -> Result<()> {
    spec.validate()?;
    let d = spec.state_dim;
    if d > MAX_WINDOW_DIM {
        return Err(Error::OutOfValidatedRange { requested: d, max: MAX_WINDOW_DIM });
    }
    if base < 1 || base + d - 1 > spec.horizon {
        return Err(Error::InvalidInput(format!(
            "window [{base}, {}] outside the horizon 1..={}",
            base + d - 1,
            spec.horizon
        )));
    }
    Ok(())
}

fn guard_norm(m: &Matrix, step: usize) -> Result<()> {
    let n = m.norm();
    if !n.is_finite() || n > WINDOW_NORM_GUARD {
        return Err(Error::NumericalBlowup { step, what: "dense Gramian window".into() });
    }
    Ok(())
}

fn report(base_step: usize, gramian: Matrix, kind: GramianKind) -> Result<GramianReport> {
    let gramian = symmetrize(&gramian);
    let det = gramian.clone().lu().determinant();
    let min_eig = linalg::min_symmetric_eig(&gramian);
    Ok(GramianReport { base_step, gramian, det, min_eig, kind })
}

/// Observability Gramian over the window starting at `base`.
pub fn observability_gramian(spec: &SystemSpec, base: usize) -> Result<GramianReport> {
    check_window(spec, base)?;
    let d = spec.state_dim;
    let mut propagator = Matrix::identity(d, d);
    let mut sum = Matrix::zeros(d, d);
    for m in 0..d {
        let ops = spec.operators_at(base + m)?;
        let hp = &ops.h * &propagator;
        // H^T Q^{-1} H contribution via a guarded solve on Q.
        let qinv_hp = solve(&ops.q, &hp)?;
        sum += hp.transpose() * qinv_hp;
        if m + 1 < d {
            propagator = &spec.operators_at(base + m + 1)?.a * propagator;
            guard_norm(&propagator, base + m + 1)?;
        }
    }
    report(base, sum, GramianKind::Observability)
}

/// Controllability Gramian over the window starting at `base`. For the
/// perfect model (`F = 0`) this is identically zero, hence never
/// invertible.
pub fn controllability_gramian(
    spec: &SystemSpec,
    coupling: &NoiseCoupling,
    base: usize,
) -> Result<GramianReport> {
    spec.validate()?;
    let d = spec.state_dim;
    if d > MAX_WINDOW_DIM {
        return Err(Error::OutOfValidatedRange { requested: d, max: MAX_WINDOW_DIM });
    }
    if base + d > spec.horizon {
        return Err(Error::InvalidInput(format!(
            "window [{}, {}] outside the horizon 1..={}",
            base + 1,
            base + d,
            spec.horizon
        )));
    }
    // Walk m = d down to 1 so the propagator B_{n+m:n+d} grows one factor
    // at a time: B_{n+m-1:n+d} = B_{n+m:n+d} A_{n+m}.
    let mut propagator = Matrix::identity(d, d);
    let mut sum = Matrix::zeros(d, d);
    for m in (1..=d).rev() {
        let f = coupling.at(base + m, d)?;
        let bf = &propagator * f;
        sum += &bf * bf.transpose();
        if m > 1 {
            propagator *= spec.operators_at(base + m)?.a;
            guard_norm(&propagator, base + m)?;
        }
    }
    report(base, sum, GramianKind::Controllability)
}

/// Minimum Gramian eigenvalue over the scanned base steps.
#[derive(Debug, Clone)]
pub struct ObservabilityScan {
    pub per_step: Vec<(usize, f64)>,
    pub overall_min: f64,
    /// Set when some scanned step fell below the threshold; finite scans
    /// can falsify uniform observability but never certify it.
    pub warn: bool,
}

/// Evaluate the observability Gramian at each base step and report the
/// running minimum eigenvalue.
pub fn uniform_observability_scan(spec: &SystemSpec, steps: &[usize]) -> Result<ObservabilityScan> {
    let mut per_step = Vec::with_capacity(steps.len());
    let mut overall_min = f64::INFINITY;
    for &n in steps {
        let rep = observability_gramian(spec, n)?;
        overall_min = overall_min.min(rep.min_eig);
        per_step.push((n, rep.min_eig));
    }
    Ok(ObservabilityScan { per_step, overall_min, warn: overall_min <= OBSERVABILITY_THRESHOLD })
}
