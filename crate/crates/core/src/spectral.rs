//! Autonomous-case analysis: invariant subspaces of the transposed
//! propagator, convergence of matrix-power singular values to eigenvalue
//! magnitudes, Jordan-block probes, and the end-to-end check that the
//! filter's asymptotic null space contains the stable space of `A^T`.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::gramian::{observability_gramian, OBSERVABILITY_THRESHOLD};
use crate::kalman::run_filter;
use crate::linalg::{self, ensure_finite, op_norm, qr_positive, svd, Matrix};
use crate::lyapunov::qr_sweep;
use crate::schur::stable_invariant_basis;
use crate::system::{GeneratorKind, SystemSpec};

pub use crate::schur::SPECTRAL_GAP_TOL;

/// Hard cap on matrix-power sweeps; the `1/n`-root converges like
/// `log n / n`, so thousands of steps give percent-level agreement.
pub const POWER_MAX_STEPS: usize = 5000;

/// Powers up to here are computed densely (exact SVD); larger exponents
/// switch to the QR-accumulated route.
pub const DENSE_POWER_MAX: usize = 20;

/// Largest Jordan block size accepted by the probe.
pub const JORDAN_MAX_BLOCK: usize = 6;

/// `1/n`-th roots of the singular values of a matrix power, descending.
#[derive(Debug, Clone)]
pub struct PowerSample {
    pub n: usize,
    pub values: Vec<f64>,
}

/// Orthonormal basis of the invariant subspace of `A^T` belonging to
/// eigenvalues with `|lambda| < alpha`, via ordered real Schur form.
/// Complex pairs are kept together, so the basis is a real span.
/// Magnitudes sitting exactly on the alpha-circle classify with the
/// unstable-neutral side; magnitudes merely near it (within the gap
/// tolerance) are rejected as [`Error::SpectralGapViolation`].
pub fn stable_space(a: &Matrix, alpha: f64) -> Result<Matrix> {
    stable_invariant_basis(&a.transpose(), alpha)
}

/// Spectral summary of a constant propagator.
#[derive(Debug, Clone)]
pub struct AutonomousAnalysis {
    pub a: Matrix,
    /// Eigenvalues sorted descending by magnitude.
    pub eigenvalues: Vec<Complex<f64>>,
    /// `|lambda_j|` in the same order.
    pub eig_mags: Vec<f64>,
    /// Basis of the stable space of `A^T` at radius one.
    pub stable_space_at: Matrix,
    /// Count of eigenvalues with magnitude >= 1.
    pub d0: usize,
}

fn sorted_eigenvalues(a: &Matrix) -> Vec<Complex<f64>> {
    let mut eigs: Vec<Complex<f64>> = a.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|x, y| {
        y.norm()
            .partial_cmp(&x.norm())
            .unwrap()
            .then(y.re.partial_cmp(&x.re).unwrap())
            .then(y.im.partial_cmp(&x.im).unwrap())
    });
    eigs
}

impl AutonomousAnalysis {
    pub fn new(a: &Matrix) -> Result<Self> {
        ensure_finite(a, "autonomous propagator")?;
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidInput("propagator must be square".into()));
        }
        let stable_space_at = stable_space(a, 1.0)?;
        let eigenvalues = sorted_eigenvalues(a);
        let eig_mags: Vec<f64> = eigenvalues.iter().map(|c| c.norm()).collect();
        let d0 = a.nrows() - stable_space_at.ncols();
        Ok(Self { a: a.clone(), eigenvalues, eig_mags, stable_space_at, d0 })
    }
}

fn validate_power_grid(n_values: &[usize]) -> Result<usize> {
    if n_values.is_empty() {
        return Err(Error::InvalidInput("need at least one power".into()));
    }
    let max = *n_values.iter().max().unwrap();
    if n_values.iter().any(|&n| n == 0) {
        return Err(Error::InvalidInput("powers must be >= 1".into()));
    }
    if max > POWER_MAX_STEPS {
        return Err(Error::OutOfValidatedRange { requested: max, max: POWER_MAX_STEPS });
    }
    Ok(max)
}

/// Shared sweep: dense powers with exact SVDs up to [`DENSE_POWER_MAX`],
/// QR-accumulated log magnitudes beyond.
fn power_sweep(a: &Matrix, n_values: &[usize]) -> Result<Vec<PowerSample>> {
    let max_n = validate_power_grid(n_values)?;
    let d = a.nrows();
    let mut q = Matrix::identity(d, d);
    let mut logs = vec![0.0; d];
    let mut dense = Matrix::identity(d, d);
    let mut samples = Vec::with_capacity(n_values.len());
    for n in 1..=max_n {
        let (q_next, r) = qr_positive(&(a * &q))?;
        q = q_next;
        for j in 0..d {
            logs[j] += r[(j, j)].ln();
        }
        if n <= DENSE_POWER_MAX {
            dense = a * &dense;
        }
        if n_values.contains(&n) {
            let mut values: Vec<f64> = if n <= DENSE_POWER_MAX {
                svd(&dense)?
                    .singulars
                    .iter()
                    .map(|s| s.powf(1.0 / n as f64))
                    .collect()
            } else {
                logs.iter().map(|l| (l / n as f64).exp()).collect()
            };
            values.sort_by(|x, y| y.partial_cmp(x).unwrap());
            samples.push(PowerSample { n, values });
        }
    }
    Ok(samples)
}

/// Per-power `[sigma_j(A^n)]^{1/n}`; the values converge to the
/// eigenvalue magnitudes of `A`.
pub fn ef_eigenvalue_convergence(a: &Matrix, n_values: &[usize]) -> Result<Vec<PowerSample>> {
    ensure_finite(a, "power probe input")?;
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("power probe needs a square matrix".into()));
    }
    power_sweep(a, n_values)
}

/// Singular-value roots of powers of one Jordan block.
#[derive(Debug, Clone)]
pub struct JordanBlockProbe {
    pub real: f64,
    pub imag: f64,
    /// `|lambda|`; the singular values of a Jordan-block power depend on
    /// the eigenvalue only through its magnitude.
    pub magnitude: f64,
    pub block_size: usize,
    pub samples: Vec<PowerSample>,
}

fn jordan_block(magnitude: f64, size: usize) -> Matrix {
    let mut j = Matrix::zeros(size, size);
    for i in 0..size {
        j[(i, i)] = magnitude;
        if i + 1 < size {
            j[(i, i + 1)] = 1.0;
        }
    }
    j
}

/// Probe `[sigma_j(J^n)]^{1/n}` for the Jordan block with eigenvalue
/// `re + i*im`. The nilpotent case (`lambda = 0`) is computed densely and
/// is exactly zero once `n` reaches the block size.
pub fn jordan_probe(re: f64, im: f64, block_size: usize, n_values: &[usize]) -> Result<JordanBlockProbe> {
    if block_size == 0 || block_size > JORDAN_MAX_BLOCK {
        return Err(Error::InvalidInput(format!(
            "block size must be in 1..={JORDAN_MAX_BLOCK}"
        )));
    }
    let magnitude = re.hypot(im);
    let j = jordan_block(magnitude, block_size);
    let samples = if magnitude == 0.0 {
        // Dense powers of the nilpotent block are exact in floating point.
        validate_power_grid(n_values)?;
        let mut samples = Vec::with_capacity(n_values.len());
        let mut sorted: Vec<usize> = n_values.to_vec();
        sorted.sort_unstable();
        let mut dense = Matrix::identity(block_size, block_size);
        let mut step = 0usize;
        for &n in &sorted {
            while step < n {
                dense = &j * &dense;
                step += 1;
            }
            let values: Vec<f64> = svd(&dense)?
                .singulars
                .iter()
                .map(|s| if *s == 0.0 { 0.0 } else { s.powf(1.0 / n as f64) })
                .collect();
            samples.push(PowerSample { n, values });
        }
        samples
    } else {
        if !(1e-3..=1e3).contains(&magnitude) {
            return Err(Error::InvalidInput(
                "eigenvalue magnitude must lie in [1e-3, 1e3] (or be zero)".into(),
            ));
        }
        power_sweep(&j, n_values)?
    };
    Ok(JordanBlockProbe { real: re, imag: im, magnitude, block_size, samples })
}

/// Largest principal angle between the QR-method estimate of the stable
/// backward span after `steps` applications of the constant propagator
/// and the stable space of `A^T`; the two coincide in the limit.
pub fn eigenspace_equality_check(a: &Matrix, alpha: f64, steps: usize) -> Result<f64> {
    ensure_finite(a, "eigenspace check input")?;
    let d = a.nrows();
    if d != a.ncols() {
        return Err(Error::InvalidInput("eigenspace check needs a square matrix".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidInput("need at least one step".into()));
    }
    if steps > POWER_MAX_STEPS {
        return Err(Error::OutOfValidatedRange { requested: steps, max: POWER_MAX_STEPS });
    }
    let stable = stable_space(a, alpha)?;
    let k = stable.ncols();
    if k == 0 || k == d {
        return Ok(0.0);
    }
    let tail_from = steps / 2 + 1;
    let sweep = qr_sweep(d, steps, tail_from, false, |_| Ok(a.clone()))?;
    let tail_n = sweep.tail_steps.max(1) as f64;
    let rates: Vec<f64> = sweep.tail_log.iter().map(|l| l / tail_n).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| rates[y].partial_cmp(&rates[x]).unwrap().then(x.cmp(&y)));
    let mut proxy = Matrix::zeros(d, k);
    for (c, &idx) in order[d - k..].iter().enumerate() {
        proxy.set_column(c, &sweep.q.column(idx));
    }
    linalg::max_principal_angle(&proxy, &stable)
}

/// Outcome of the autonomous null-space experiment.
#[derive(Debug, Clone)]
pub struct AutonomousNullspace {
    /// Eigenvalue magnitudes of `A`, descending.
    pub eig_mags: Vec<f64>,
    /// Count of magnitudes >= 1.
    pub d0: usize,
    /// `|Delta_N L_s L_s^T|` for the stable space of `A^T`.
    pub restriction_delta: f64,
    /// Same for the final forecast covariance.
    pub restriction_sigma: f64,
    /// `|Delta_N v_j(A^T)|` per eigendirection, in descending-magnitude
    /// order; complex pairs contribute their orthonormal real-span
    /// columns.
    pub per_direction: Vec<f64>,
    /// Whether `|Delta_N - Delta_{N-1}|` fell below 1e-10; convergence is
    /// observed for generic observable systems but not guaranteed.
    pub converged: bool,
    pub final_step: usize,
}

/// Orthonormal directions of `A^T` grouped by clustered eigenvalues, in
/// descending-magnitude order. Real clusters contribute eigenvectors;
/// complex pairs contribute a real-span pair of columns.
fn transpose_eigen_directions(a: &Matrix, eigenvalues: &[Complex<f64>]) -> Result<Matrix> {
    let d = a.nrows();
    let at = a.transpose();
    let mut columns: Vec<linalg::Vector> = Vec::with_capacity(d);
    let mut consumed = vec![false; eigenvalues.len()];
    let mut idx = 0;
    while idx < eigenvalues.len() {
        if consumed[idx] {
            idx += 1;
            continue;
        }
        let lam = eigenvalues[idx];
        let scale = lam.norm().max(1.0);
        let cluster: Vec<usize> = (idx..eigenvalues.len())
            .filter(|&j| {
                !consumed[j]
                    && (eigenvalues[j] - lam).norm() <= 1e-8 * scale
            })
            .collect();
        let real_cluster = lam.im.abs() <= 1e-9 * scale;
        if real_cluster {
            for &j in &cluster {
                consumed[j] = true;
            }
            let m = &at - Matrix::identity(d, d) * lam.re;
            let factors = svd(&m)?;
            let count = cluster.len();
            for c in 0..count {
                columns.push(factors.right.column(d - 1 - c).into_owned());
            }
        } else {
            // Conjugate partners cluster separately by value; consume the
            // matching conjugates as well.
            let conj = lam.conj();
            let partners: Vec<usize> = (idx..eigenvalues.len())
                .filter(|&j| !consumed[j] && (eigenvalues[j] - conj).norm() <= 1e-8 * scale)
                .collect();
            for &j in cluster.iter().chain(partners.iter()) {
                consumed[j] = true;
            }
            let pairs = cluster.len();
            let m = &at * &at - &at * (2.0 * lam.re) + Matrix::identity(d, d) * lam.norm_sqr();
            let factors = svd(&m)?;
            for c in 0..2 * pairs {
                columns.push(factors.right.column(d - 1 - c).into_owned());
            }
        }
        idx += 1;
    }
    let mut out = Matrix::zeros(d, columns.len());
    for (j, col) in columns.iter().enumerate() {
        out.set_column(j, col);
    }
    Ok(out)
}

/// Run the filter on an autonomous observable system to its horizon and
/// measure the restriction of the final covariances onto the stable space
/// of `A^T`, plus the per-eigendirection profile.
pub fn autonomous_nullspace_check(spec: &SystemSpec) -> Result<AutonomousNullspace> {
    spec.validate()?;
    let constant_a = match &spec.generator {
        GeneratorKind::Autonomous => true,
        GeneratorKind::ExplicitSequence(seq) => seq.a.len() == 1,
        _ => false,
    };
    if !constant_a {
        return Err(Error::InvalidInput(
            "autonomous null-space check needs a constant propagator".into(),
        ));
    }
    let a = spec.operators_at(1)?.a;
    let analysis = AutonomousAnalysis::new(&a)?;

    let obs = observability_gramian(spec, 1)?;
    if obs.min_eig <= OBSERVABILITY_THRESHOLD {
        return Err(Error::InvalidInput(format!(
            "system not observable at the initial window (min eig {:.3e})",
            obs.min_eig
        )));
    }

    let noise_seed = spec.seed ^ 0x9e37_79b9_7f4a_7c15;
    let x0 = spec.sample_initial_state(noise_seed)?;
    let trajectory = spec.simulate_truth(&x0, noise_seed.wrapping_add(1))?;
    let run = run_filter(spec, &trajectory, &[])?;

    let last = run.final_state();
    let delta = &last.analysis_cov;
    let sigma = &last.forecast_cov;
    let converged = if run.states.len() >= 2 {
        let prev = &run.states[run.states.len() - 2].analysis_cov;
        op_norm(&(delta - prev)) <= 1e-10
    } else {
        false
    };

    let directions = transpose_eigen_directions(&a, &analysis.eigenvalues)?;
    let per_direction = (0..directions.ncols())
        .map(|j| (delta * directions.column(j)).norm())
        .collect();

    Ok(AutonomousNullspace {
        eig_mags: analysis.eig_mags.clone(),
        d0: analysis.d0,
        restriction_delta: crate::diagnostics::restriction_norm(delta, &analysis.stable_space_at)?,
        restriction_sigma: crate::diagnostics::restriction_norm(sigma, &analysis.stable_space_at)?,
        per_direction,
        converged,
        final_step: last.step,
    })
}
