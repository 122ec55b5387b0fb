//! The filtering engine: covariance and mean recursions, gain
//! computation, and the stabilized closure products behind the
//! factorized form of the analysis covariance.
//!
//! The analysis covariance admits the closed form
//! `Delta_n = M_n Delta_0 B_{0:n}^T` where
//! `M_n = (I - K_n H_n) A_n M_{n-1}` and `B_{0:n} = A_n ... A_1`.
//! `M_n` stays O(1) for observable systems and is stored densely behind a
//! blowup guard; `B_{0:n}` grows like `c_A^n` and is carried in QR form
//! with per-direction log magnitudes.

use crate::error::{Error, Result};
use crate::linalg::{
    self, op_norm, qr_positive, solve, symmetrize, Matrix, Vector,
};
use crate::system::{StepOperators, SystemSpec, Trajectory};

/// Dense reconstruction of `B_{0:n}` is only trusted up to this step;
/// with `|A_n| <= 2` the product norm may reach `2^n`.
pub const FACTORIZATION_MAX_STEP: usize = 20;

/// Guard bound for `|M_n|`; crossing it signals a non-observable
/// configuration rather than a recoverable state.
pub const M_NORM_GUARD: f64 = 1e8;

/// One filter step: forecast pair, analysis pair, gain.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub step: usize,
    pub forecast_mean: Vector,
    pub forecast_cov: Matrix,
    pub analysis_mean: Vector,
    pub analysis_cov: Matrix,
    pub gain: Matrix,
}

/// Numerically-stabilized running products `M_n` and `B_{0:n}`.
#[derive(Debug, Clone)]
pub struct ClosureAccumulator {
    step: usize,
    m: Matrix,
    b_q: Matrix,
    b_logr: Vec<f64>,
    /// Dense triangular remainder `R_n ... R_1`; frozen once the step
    /// count passes [`FACTORIZATION_MAX_STEP`].
    b_r: Matrix,
}

impl ClosureAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            step: 0,
            m: Matrix::identity(dim, dim),
            b_q: Matrix::identity(dim, dim),
            b_logr: vec![0.0; dim],
            b_r: Matrix::identity(dim, dim),
        }
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Running product `M_n`.
    pub fn m(&self) -> &Matrix {
        &self.m
    }

    /// Orthonormal factor of `B_{0:n}` (the QR-method basis).
    pub fn propagator_basis(&self) -> &Matrix {
        &self.b_q
    }

    /// Accumulated `ln R_jj` per direction.
    pub fn log_magnitudes(&self) -> &[f64] {
        &self.b_logr
    }

    /// Advance both products by one step.
    pub fn advance(&mut self, ops: &StepOperators, gain: &Matrix) -> Result<()> {
        let step = self.step + 1;
        let d = self.m.nrows();
        let ikh = Matrix::identity(d, d) - gain * &ops.h;
        self.m = &ikh * &ops.a * &self.m;
        if self.m.iter().any(|v| !v.is_finite()) || op_norm(&self.m) > M_NORM_GUARD {
            return Err(Error::NumericalBlowup {
                step,
                what: format!("|M_n| exceeded the {M_NORM_GUARD:.0e} guard"),
            });
        }
        let (q, r) = qr_positive(&(&ops.a * &self.b_q))?;
        for j in 0..d {
            self.b_logr[j] += r[(j, j)].ln();
        }
        if step <= FACTORIZATION_MAX_STEP {
            self.b_r = &r * &self.b_r;
        }
        self.b_q = q;
        self.step = step;
        Ok(())
    }

    /// Dense `B_{0:n}`, valid only within the factorization window.
    pub fn dense_propagator(&self) -> Result<Matrix> {
        if self.step > FACTORIZATION_MAX_STEP {
            return Err(Error::OutOfValidatedRange {
                requested: self.step,
                max: FACTORIZATION_MAX_STEP,
            });
        }
        Ok(&self.b_q * &self.b_r)
    }
}

/// Cheap per-checkpoint copy of the closure state.
#[derive(Debug, Clone)]
pub struct ClosureSnapshot {
    pub step: usize,
    pub m: Matrix,
    pub propagator_basis: Matrix,
    pub log_magnitudes: Vec<f64>,
}

/// Per-step scalar health metrics (the CSV emission hook).
#[derive(Debug, Clone, Copy)]
pub struct StepMetrics {
    pub step: usize,
    pub forecast_norm: f64,
    pub analysis_norm: f64,
    pub gain_norm: f64,
    pub m_norm: f64,
    pub gain_identity_residual: f64,
}

/// Output of a full filter run.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub delta0: Matrix,
    pub states: Vec<FilterState>,
    pub metrics: Vec<StepMetrics>,
    pub snapshots: Vec<ClosureSnapshot>,
    pub closure: ClosureAccumulator,
}

impl FilterRun {
    pub fn final_state(&self) -> &FilterState {
        self.states.last().expect("horizon >= 1")
    }
}

/// Forecast update: `x_f = A x_a`, `Sigma = A Delta A^T` (symmetrized).
pub fn forecast(
    prev_mean: &Vector,
    prev_cov: &Matrix,
    ops: &StepOperators,
) -> Result<(Vector, Matrix)> {
    let mean = &ops.a * prev_mean;
    let cov = symmetrize(&(&ops.a * prev_cov * ops.a.transpose()));
    if mean.iter().any(|v| !v.is_finite()) || cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBlowup { step: ops.step, what: "forecast".into() });
    }
    Ok((mean, cov))
}

/// Analysis update. The gain comes from a guarded solve against the
/// innovation covariance; the covariance update uses the Joseph form
/// `(I - K H) Sigma (I - K H)^T + K Q K^T`, which preserves positive
/// semidefiniteness in floating point. The plain form `(I - K H) Sigma`
/// is cross-checked in debug builds.
pub fn analyze(
    forecast_mean: &Vector,
    forecast_cov: &Matrix,
    ops: &StepOperators,
    observation: &Vector,
) -> Result<FilterState> {
    if observation.len() != ops.h.nrows() {
        return Err(Error::InvalidInput(format!(
            "observation has length {}, expected {}",
            observation.len(),
            ops.h.nrows()
        )));
    }
    let innovation_cov = symmetrize(&(&ops.h * forecast_cov * ops.h.transpose() + &ops.q));
    if linalg::min_symmetric_eig(&innovation_cov) <= 0.0 {
        return Err(Error::DegenerateInnovation { step: ops.step });
    }
    // K = Sigma H^T S^{-1}  <=>  K^T = S^{-1} H Sigma.
    let gain = solve(&innovation_cov, &(&ops.h * forecast_cov))?.transpose();

    let d = forecast_cov.nrows();
    let ikh = Matrix::identity(d, d) - &gain * &ops.h;
    let joseph = &ikh * forecast_cov * ikh.transpose() + &gain * &ops.q * gain.transpose();
    let analysis_cov = symmetrize(&joseph);

    #[cfg(debug_assertions)]
    {
        let plain = &ikh * forecast_cov;
        let denom = op_norm(&analysis_cov).max(f64::MIN_POSITIVE);
        debug_assert!(
            op_norm(&(&plain - &analysis_cov)) <= 1e-8 * denom.max(1.0),
            "Joseph and plain covariance updates disagree at step {}",
            ops.step
        );
    }

    let innovation = observation - &ops.h * forecast_mean;
    let analysis_mean = forecast_mean + &gain * innovation;
    Ok(FilterState {
        step: ops.step,
        forecast_mean: forecast_mean.clone(),
        forecast_cov: forecast_cov.clone(),
        analysis_mean,
        analysis_cov,
        gain,
    })
}

/// Residual of the gain identity `K_n = Delta_n H_n^T Q_n^{-1}`,
/// relative to `|K_n|`.
pub fn gain_identity_residual(state: &FilterState, ops: &StepOperators) -> Result<f64> {
    // Delta H^T Q^{-1} = (Q^{-1} H Delta)^T since Q and Delta are symmetric.
    let alt = solve(&ops.q, &(&ops.h * &state.analysis_cov))?.transpose();
    let denom = op_norm(&state.gain).max(f64::MIN_POSITIVE);
    Ok(op_norm(&(&alt - &state.gain)) / denom)
}

/// `M_n Delta_0 B_{0:n}^T`, the factorized analysis covariance; only
/// available while the dense propagator window is valid.
pub fn factorized_delta(acc: &ClosureAccumulator, delta0: &Matrix) -> Result<Matrix> {
    let b = acc.dense_propagator()?;
    Ok(acc.m() * delta0 * b.transpose())
}

fn psd_check(cov: &Matrix, step: usize, what: &str) -> Result<()> {
    let floor = -1e-10 * op_norm(cov).max(1.0);
    if linalg::min_symmetric_eig(cov) < floor {
        return Err(Error::NumericalBlowup {
            step,
            what: format!("{what} lost positive semidefiniteness"),
        });
    }
    Ok(())
}

/// Run the filter over a full trajectory, starting from the zero mean and
/// the spec's initial covariance. Closure snapshots are recorded at the
/// requested steps (plus always at the final step).
pub fn run_filter(
    spec: &SystemSpec,
    trajectory: &Trajectory,
    snapshot_steps: &[usize],
) -> Result<FilterRun> {
    spec.validate()?;
    if trajectory.states.len() != spec.horizon + 1
        || trajectory.observations.len() != spec.horizon
    {
        return Err(Error::InvalidInput(format!(
            "trajectory length mismatch: {} states / {} observations for horizon {}",
            trajectory.states.len(),
            trajectory.observations.len(),
            spec.horizon
        )));
    }
    let delta0 = spec.delta0_matrix()?;
    let mut mean = Vector::zeros(spec.state_dim);
    let mut cov = delta0.clone();
    let mut closure = ClosureAccumulator::new(spec.state_dim);

    let mut states = Vec::with_capacity(spec.horizon);
    let mut metrics = Vec::with_capacity(spec.horizon);
    let mut snapshots = Vec::new();

    for n in 1..=spec.horizon {
        let ops = spec.operators_at(n)?;
        let (x_f, sigma) = forecast(&mean, &cov, &ops)?;
        psd_check(&sigma, n, "forecast covariance")?;
        let state = analyze(&x_f, &sigma, &ops, &trajectory.observations[n - 1])?;
        psd_check(&state.analysis_cov, n, "analysis covariance")?;

        let sigma_norm = op_norm(&sigma);
        let delta_norm = op_norm(&state.analysis_cov);
        if delta_norm > sigma_norm + 1e-9 * (1.0 + sigma_norm) {
            return Err(Error::NumericalBlowup {
                step: n,
                what: "analysis covariance exceeds forecast covariance in norm".into(),
            });
        }

        closure.advance(&ops, &state.gain)?;
        metrics.push(StepMetrics {
            step: n,
            forecast_norm: sigma_norm,
            analysis_norm: delta_norm,
            gain_norm: op_norm(&state.gain),
            m_norm: op_norm(closure.m()),
            gain_identity_residual: gain_identity_residual(&state, &ops)?,
        });
        if snapshot_steps.contains(&n) || n == spec.horizon {
            snapshots.push(ClosureSnapshot {
                step: n,
                m: closure.m().clone(),
                propagator_basis: closure.propagator_basis().clone(),
                log_magnitudes: closure.log_magnitudes().to_vec(),
            });
        }
        mean = state.analysis_mean.clone();
        cov = state.analysis_cov.clone();
        states.push(state);
    }

    Ok(FilterRun { delta0, states, metrics, snapshots, closure })
}

/// Running maximum of a series; a bounded sequence has a flattening
/// running max while unbounded growth keeps raising it.
pub fn running_max(values: &[f64]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    values
        .iter()
        .map(|&v| {
            max = max.max(v);
            max
        })
        .collect()
}

/// Least-squares slope of a series, used by the boundedness checks.
pub fn linear_trend_slope(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean_x = (nf - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / nf;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{
        scalar_system, Delta0Spec, ExplicitOperators, GeneratorKind, OperatorBounds,
    };

    fn run_scalar(a: f64, horizon: usize) -> FilterRun {
        let spec = scalar_system(a, 1.0, 1.0, 1.0, horizon, 7);
        let traj = spec.simulate_truth(&Vector::from_element(1, 0.4), 5).unwrap();
        run_filter(&spec, &traj, &[]).unwrap()
    }

    // Scalar analysis-covariance recursion used as the oracle:
    // Delta' = a^2 Delta / (a^2 Delta + 1) for h = q = 1.
    fn scalar_recursion(a: f64, delta0: f64, steps: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(steps);
        let mut delta = delta0;
        for _ in 0..steps {
            let sigma = a * a * delta;
            delta = sigma / (sigma + 1.0);
            out.push(delta);
        }
        out
    }

    #[test]
    fn scalar_unit_system_matches_harmonic_closed_form() {
        let run = run_scalar(1.0, 100);
        for state in &run.states {
            let expected = 1.0 / (state.step as f64 + 1.0);
            assert!(
                (state.analysis_cov[(0, 0)] - expected).abs() <= 1e-12,
                "step {}: {} vs {}",
                state.step,
                state.analysis_cov[(0, 0)],
                expected
            );
        }
    }

    #[test]
    fn scalar_unstable_system_hits_three_quarters_fixed_point() {
        let run = run_scalar(2.0, 80);
        let oracle = scalar_recursion(2.0, 1.0, 80);
        for (state, want) in run.states.iter().zip(oracle.iter()) {
            assert!((state.analysis_cov[(0, 0)] - want).abs() <= 1e-12);
        }
        assert!((run.states[59].analysis_cov[(0, 0)] - 0.75).abs() <= 1e-10);
    }

    #[test]
    fn zero_observation_operator_passes_forecast_through() {
        let ops = StepOperators {
            step: 1,
            a: Matrix::identity(2, 2),
            h: Matrix::zeros(1, 2),
            q: Matrix::from_element(1, 1, 1.0),
        };
        let sigma = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 0.5]));
        let state = analyze(&Vector::zeros(2), &sigma, &ops, &Vector::zeros(1)).unwrap();
        assert!(op_norm(&state.gain) == 0.0);
        assert!(op_norm(&(&state.analysis_cov - &sigma)) <= 1e-14);
    }

    #[test]
    fn forecast_matches_direct_formula() {
        let ops = StepOperators {
            step: 1,
            a: Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.5])),
            h: Matrix::identity(2, 2),
            q: Matrix::identity(2, 2),
        };
        let (_, sigma) = forecast(&Vector::zeros(2), &Matrix::identity(2, 2), &ops).unwrap();
        assert!((sigma[(0, 0)] - 4.0).abs() <= 1e-14);
        assert!((sigma[(1, 1)] - 0.25).abs() <= 1e-14);

        let identity_ops = StepOperators {
            step: 1,
            a: Matrix::identity(2, 2),
            h: Matrix::identity(2, 2),
            q: Matrix::identity(2, 2),
        };
        let prev = Matrix::from_diagonal(&Vector::from_vec(vec![0.3, 0.9]));
        let (_, sigma) = forecast(&Vector::zeros(2), &prev, &identity_ops).unwrap();
        assert!(op_norm(&(&sigma - &prev)) <= 1e-14);
    }

    #[test]
    fn closure_first_step_matches_definition() {
        let spec = scalar_system(2.0, 1.0, 1.0, 1.0, 3, 1);
        let traj = spec.simulate_truth(&Vector::from_element(1, 1.0), 2).unwrap();
        let run = run_filter(&spec, &traj, &[1]).unwrap();
        let k1 = &run.states[0].gain;
        // M_1 = (I - K_1 H_1) A_1 in the scalar case.
        let expected = (1.0 - k1[(0, 0)]) * 2.0;
        assert!((run.snapshots[0].m[(0, 0)] - expected).abs() <= 1e-14);
    }

    #[test]
    fn identity_dynamics_leave_closure_logs_at_zero() {
        let spec = SystemSpec {
            state_dim: 3,
            obs_dim: 1,
            horizon: 12,
            seed: 4,
            generator: GeneratorKind::ExplicitSequence(ExplicitOperators {
                a: vec![Matrix::identity(3, 3)],
                h: vec![Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0])],
                q: vec![Matrix::from_element(1, 1, 1.0)],
            }),
            bounds: OperatorBounds::default(),
            delta0: Delta0Spec::Identity,
            spectrum: None,
        };
        let traj = spec.simulate_truth(&Vector::zeros(3), 9).unwrap();
        let run = run_filter(&spec, &traj, &[]).unwrap();
        assert!(run.closure.log_magnitudes().iter().all(|&l| l.abs() <= 1e-12));
        assert!(op_norm(&(run.closure.propagator_basis() - Matrix::identity(3, 3))) <= 1e-12);
    }

    #[test]
    fn rotated_diagonal_log_magnitudes_are_exact() {
        let spec = SystemSpec {
            state_dim: 2,
            obs_dim: 1,
            horizon: 30,
            seed: 10,
            generator: GeneratorKind::RotatedDiagonal,
            bounds: OperatorBounds { c_a: 2.0, ..Default::default() },
            delta0: Delta0Spec::Identity,
            spectrum: Some(vec![2.0, 0.5]),
        };
        let traj = spec.simulate_truth(&Vector::zeros(2), 8).unwrap();
        let run = run_filter(&spec, &traj, &[]).unwrap();
        let n = run.closure.step_index() as f64;
        let rates: Vec<f64> = run.closure.log_magnitudes().iter().map(|l| l / n).collect();
        assert!((rates[0] - 2f64.ln()).abs() <= 1e-10, "unstable rate {}", rates[0]);
        assert!((rates[1] + 2f64.ln()).abs() <= 1e-10, "stable rate {}", rates[1]);
    }

    #[test]
    fn factorized_delta_matches_recursion() {
        // Fresh accumulator reproduces Delta_0.
        let acc = ClosureAccumulator::new(2);
        let delta0 = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0]));
        let d = factorized_delta(&acc, &delta0).unwrap();
        assert!(op_norm(&(&d - &delta0)) <= 1e-15);

        // Scalar chain with a = 2 at n = 3.
        let spec = scalar_system(2.0, 1.0, 1.0, 1.0, 3, 2);
        let traj = spec.simulate_truth(&Vector::from_element(1, 1.0), 3).unwrap();
        let run = run_filter(&spec, &traj, &[]).unwrap();
        let expect = run.final_state().analysis_cov.clone();
        let got = factorized_delta(&run.closure, &run.delta0).unwrap();
        assert!((got[(0, 0)] - expect[(0, 0)]).abs() <= 1e-12 * expect[(0, 0)].abs());
    }

    #[test]
    fn factorized_delta_random_system_agrees_with_recursive() {
        let spec = SystemSpec {
            state_dim: 30,
            obs_dim: 10,
            horizon: 10,
            seed: 77,
            generator: GeneratorKind::RandomBounded,
            bounds: OperatorBounds::default(),
            delta0: Delta0Spec::RandomSpd,
            spectrum: None,
        };
        let x0 = spec.sample_initial_state(55).unwrap();
        let traj = spec.simulate_truth(&x0, 56).unwrap();
        let run = run_filter(&spec, &traj, &[]).unwrap();
        let recursive = &run.final_state().analysis_cov;
        let factored = factorized_delta(&run.closure, &run.delta0).unwrap();
        let rel = op_norm(&(&factored - recursive)) / op_norm(recursive);
        assert!(rel <= 1e-8, "factorization drift {rel:.3e}");
    }

    #[test]
    fn factorized_delta_window_is_enforced() {
        let spec = scalar_system(1.0, 1.0, 1.0, 1.0, 25, 2);
        let traj = spec.simulate_truth(&Vector::from_element(1, 0.0), 3).unwrap();
        let run = run_filter(&spec, &traj, &[]).unwrap();
        assert!(matches!(
            factorized_delta(&run.closure, &run.delta0),
            Err(Error::OutOfValidatedRange { .. })
        ));
    }

    #[test]
    fn gain_identity_holds_along_random_run() {
        let spec = SystemSpec {
            state_dim: 6,
            obs_dim: 3,
            horizon: 60,
            seed: 31,
            generator: GeneratorKind::RandomBounded,
            bounds: OperatorBounds::default(),
            delta0: Delta0Spec::Identity,
            spectrum: None,
        };
        let x0 = spec.sample_initial_state(44).unwrap();
        let traj = spec.simulate_truth(&x0, 45).unwrap();
        let run = run_filter(&spec, &traj, &[]).unwrap();
        let worst = run
            .metrics
            .iter()
            .map(|m| m.gain_identity_residual)
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-9, "gain identity residual {worst:.3e}");
    }

    #[test]
    fn analysis_improves_on_forecast_across_seeds() {
        // Monte-Carlo oracle: analysis RMSE beats forecast RMSE on average.
        let mut forecast_total = 0.0;
        let mut analysis_total = 0.0;
        for seed in 0..50u64 {
            let spec = SystemSpec {
                state_dim: 4,
                obs_dim: 2,
                horizon: 40,
                seed,
                generator: GeneratorKind::RotatedDiagonal,
                bounds: OperatorBounds { c_a: 1.3, ..Default::default() },
                delta0: Delta0Spec::Identity,
                spectrum: Some(vec![1.3, 1.05, 0.8, 0.6]),
            };
            let x0 = spec.sample_initial_state(seed + 1000).unwrap();
            let traj = spec.simulate_truth(&x0, seed + 2000).unwrap();
            let run = run_filter(&spec, &traj, &[]).unwrap();
            for state in &run.states {
                let truth = &traj.states[state.step];
                forecast_total += (&state.forecast_mean - truth).norm_squared();
                analysis_total += (&state.analysis_mean - truth).norm_squared();
            }
        }
        assert!(
            analysis_total < forecast_total,
            "analysis RMSE {analysis_total} should beat forecast RMSE {forecast_total}"
        );
    }

    #[test]
    fn trend_slope_detects_flat_and_rising_series() {
        let flat = vec![1.0; 50];
        assert!(linear_trend_slope(&flat).abs() <= 1e-12);
        let rising: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
        assert!((linear_trend_slope(&rising) - 0.1).abs() <= 1e-12);
    }
}
