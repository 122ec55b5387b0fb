//! Per-step metrics that track how the error covariances lose rank and
//! confine their support to the unstable-neutral backward directions:
//! sorted covariance spectra, projections onto the propagator's left
//! singular directions, restriction norms onto the stable backward
//! subspace, and the small-action rank bound used as a property oracle.

use crate::error::{Error, Result};
use crate::kalman::ClosureSnapshot;
use crate::linalg::{self, ensure_finite, op_norm, solve, svd, sym_eig, Matrix};

/// Default threshold below which a covariance eigenvalue counts as
/// collapsed.
pub const DEFAULT_COLLAPSE_EPS: f64 = 1e-6;

/// Theorem metrics at one checkpoint.
#[derive(Debug, Clone)]
pub struct DiagnosticsFrame {
    pub step: usize,
    /// |eigenvalues| of the analysis covariance, descending.
    pub delta_eigs: Vec<f64>,
    /// |eigenvalues| of the forecast covariance, descending.
    pub sigma_eigs: Vec<f64>,
    /// `|Delta u_j|` per basis column, in column (j) order.
    pub proj_norms: Vec<f64>,
    /// `|Delta L_s L_s^T|` for the stable basis `L_s`.
    pub restriction_delta: f64,
    /// Same restriction for the forecast covariance.
    pub restriction_sigma: f64,
    /// Number of analysis-covariance eigenvalues below the collapse
    /// threshold.
    pub eps_rank_delta: usize,
}

/// Dimension of the eps-eigenspace of a symmetric matrix: the count of
/// eigenvalues with `|lambda| < eps`.
pub fn eps_eigenspace_dim(z: &Matrix, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    let spectrum = sym_eig(z)?;
    Ok(spectrum.values.iter().filter(|v| v.abs() < eps).count())
}

/// Rank-bound oracle: if every unit vector of `span(w)` is mapped below
/// `eps` by the symmetric matrix `z` (hypothesis verified here as the
/// largest singular value of `z w`), then the eps-eigenspace of `z` has
/// dimension at least `k = cols(w)`. Returns that comparison; inputs that
/// violate the hypothesis raise [`Error::HypothesisFailed`] instead of
/// returning `false`.
pub fn lemma_subspace_bound_check(z: &Matrix, w: &Matrix, eps: f64) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    ensure_finite(w, "subspace basis")?;
    if w.nrows() != z.nrows() {
        return Err(Error::InvalidInput("basis rows do not match the matrix".into()));
    }
    let sup = op_norm(&(z * w));
    if sup >= eps {
        return Err(Error::HypothesisFailed(format!(
            "sup |Z u| over the subspace is {sup:.3e} >= eps = {eps:.3e}"
        )));
    }
    Ok(eps_eigenspace_dim(z, eps)? >= w.ncols())
}

/// Norms `|Delta u_j|` for each column of `u`, in column order.
pub fn projection_profile(delta: &Matrix, u: &Matrix) -> Result<Vec<f64>> {
    ensure_finite(delta, "covariance")?;
    ensure_finite(u, "basis")?;
    if u.nrows() != delta.ncols() {
        return Err(Error::InvalidInput("basis rows do not match the covariance".into()));
    }
    let product = delta * u;
    Ok((0..u.ncols()).map(|j| product.column(j).norm()).collect())
}

/// Operator norm of `cov * basis * basis^T` for an orthonormal-column
/// `basis`; equals the largest singular value of `cov * basis`. Zero for
/// an empty basis.
pub fn restriction_norm(cov: &Matrix, basis: &Matrix) -> Result<f64> {
    ensure_finite(cov, "covariance")?;
    ensure_finite(basis, "stable basis")?;
    if basis.ncols() == 0 {
        return Ok(0.0);
    }
    if basis.nrows() != cov.ncols() {
        return Err(Error::InvalidInput("basis rows do not match the covariance".into()));
    }
    Ok(op_norm(&(cov * basis)))
}

/// Push the forward-stable basis through `M_n^{-T} Delta_0^{-1}`,
/// orthonormalize, and return the largest principal angle to the
/// backward-stable basis. The angle is expected to shrink as `n` grows.
pub fn stable_map_check(
    m: &Matrix,
    delta0: &Matrix,
    forward_stable: &Matrix,
    backward_stable: &Matrix,
) -> Result<f64> {
    if forward_stable.ncols() == 0 || backward_stable.ncols() == 0 {
        return Ok(0.0);
    }
    let through_delta0 = solve(delta0, forward_stable)?;
    let mapped = solve(&m.transpose(), &through_delta0)?;
    // Orthonormalize the image; an SVD basis tolerates near-collinear
    // images better than QR.
    let factors = svd(&mapped)?;
    let k = factors
        .singulars
        .iter()
        .filter(|&&s| s > 1e-12 * factors.singulars[0].max(f64::MIN_POSITIVE))
        .count();
    let image = factors.left.columns(0, k.max(1)).into_owned();
    linalg::max_principal_angle(&image, backward_stable)
}

/// Assemble the frame for one checkpoint from the covariances, the
/// QR-method propagator basis (standing in for the left singular
/// directions), and the unstable-neutral count `d0`.
pub fn frame_at(
    snapshot: &ClosureSnapshot,
    sigma: &Matrix,
    delta: &Matrix,
    d0: usize,
    eps: f64,
) -> Result<DiagnosticsFrame> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    let d = delta.nrows();
    if d0 > d {
        return Err(Error::InvalidInput(format!("d0 = {d0} exceeds the dimension {d}")));
    }
    let basis = &snapshot.propagator_basis;
    let delta_eigs: Vec<f64> = sym_eig(delta)?.values.iter().map(|v| v.abs()).collect();
    let sigma_eigs: Vec<f64> = sym_eig(sigma)?.values.iter().map(|v| v.abs()).collect();
    let proj_norms = projection_profile(delta, basis)?;
    let stable = basis.columns(d0, d - d0).into_owned();
    let restriction_delta = restriction_norm(delta, &stable)?;
    let restriction_sigma = restriction_norm(sigma, &stable)?;
    let eps_rank_delta = delta_eigs.iter().filter(|&&v| v < eps).count();
    Ok(DiagnosticsFrame {
        step: snapshot.step,
        delta_eigs,
        sigma_eigs,
        proj_norms,
        restriction_delta,
        restriction_sigma,
        eps_rank_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{qr_positive, Vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        let mut m = Matrix::zeros(r, c);
        for j in 0..c {
            for i in 0..r {
                m[(i, j)] = rng.sample(StandardNormal);
            }
        }
        m
    }

    fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
        qr_positive(&gaussian(rng, d, d)).unwrap().0
    }

    #[test]
    fn eps_rank_counts_small_eigenvalues() {
        let z = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 0.1, 0.01]));
        assert_eq!(eps_eigenspace_dim(&z, 0.5).unwrap(), 2);
        assert_eq!(eps_eigenspace_dim(&Matrix::identity(4, 4), 0.5).unwrap(), 0);
        assert!(eps_eigenspace_dim(&z, 0.0).is_err());
    }

    #[test]
    fn eps_rank_survives_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let v = random_orthogonal(&mut rng, 3);
        let z = &v
            * Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0, 1e-9]))
            * v.transpose();
        assert_eq!(eps_eigenspace_dim(&z, 1e-6).unwrap(), 1);
    }

    #[test]
    fn lemma_check_trivial_true_and_hypothesis_failure() {
        let z = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1e-8, 1e-8]));
        let w = Matrix::from_columns(&[
            Vector::from_vec(vec![0.0, 1.0, 0.0]),
            Vector::from_vec(vec![0.0, 0.0, 1.0]),
        ]);
        assert!(lemma_subspace_bound_check(&z, &w, 1e-6).unwrap());

        let w1 = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        match lemma_subspace_bound_check(&Matrix::identity(2, 2), &w1, 0.5) {
            Err(Error::HypothesisFailed(_)) => {}
            other => panic!("expected hypothesis failure, got {other:?}"),
        }
    }

    #[test]
    fn lemma_check_randomized_instances_never_violate() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..50 {
            let d = 3 + (trial % 8);
            let k = 1 + (trial % (d - 1));
            let v = random_orthogonal(&mut rng, d);
            let eps = 1e-6;
            // k small directions below eps/2, the rest O(1).
            let mut eigs = Vector::zeros(d);
            for i in 0..d {
                eigs[i] = if i >= d - k {
                    0.4 * eps * rng.random::<f64>()
                } else {
                    0.5 + rng.random::<f64>()
                };
            }
            let z = &v * Matrix::from_diagonal(&eigs) * v.transpose();
            // Rotate the small eigencolumns among themselves.
            let small = v.columns(d - k, k).into_owned();
            let mix = random_orthogonal(&mut rng, k);
            let w = small * mix;
            assert!(
                lemma_subspace_bound_check(&z, &w, eps).unwrap(),
                "rank bound violated at trial {trial}"
            );
        }
    }

    #[test]
    fn projection_profile_identity_and_diagonal() {
        let delta = Matrix::identity(3, 3);
        let u = Matrix::identity(3, 3);
        assert_eq!(projection_profile(&delta, &u).unwrap(), vec![1.0, 1.0, 1.0]);

        let delta = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
        let norms = projection_profile(&delta, &Matrix::identity(2, 2)).unwrap();
        assert_eq!(norms, vec![1.0, 0.0]);
    }

    #[test]
    fn restriction_norm_cases() {
        // Null space containing the basis gives zero.
        let cov = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let basis = Matrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(restriction_norm(&cov, &basis).unwrap(), 0.0);

        // Identity covariance against any single direction gives one.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_orthogonal(&mut rng, 4);
        let one = q.columns(0, 1).into_owned();
        let r = restriction_norm(&Matrix::identity(4, 4), &one).unwrap();
        assert!((r - 1.0).abs() <= 1e-12);

        // Empty basis.
        assert_eq!(restriction_norm(&Matrix::identity(4, 4), &Matrix::zeros(4, 0)).unwrap(), 0.0);
    }

    #[test]
    fn stable_map_identity_reduces_to_subspace_angle() {
        let fwd = Matrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let bwd = Matrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let angle = stable_map_check(
            &Matrix::identity(3, 3),
            &Matrix::identity(3, 3),
            &fwd,
            &bwd,
        )
        .unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_2).abs() <= 1e-12);
        let same = stable_map_check(
            &Matrix::identity(3, 3),
            &Matrix::identity(3, 3),
            &fwd,
            &fwd,
        )
        .unwrap();
        assert!(same <= 1e-12);
    }
}
