//! Shared numerical linear-algebra kernels and conventions.
//!
//! Matrices are dense, column-major `nalgebra::DMatrix<f64>`. The matrix
//! norm used throughout is the operator norm (largest singular value);
//! eigenvalues and singular values are always reported sorted descending
//! by absolute magnitude.
//!
//! Explicit matrix inversion is never exposed: everything that needs an
//! inverse goes through [`solve`], which carries a condition guard.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative symmetry tolerance accepted by [`sym_eig`].
pub const TOL_SYM: f64 = 1e-10;
/// Relative residual tolerance for eigen reconstruction.
pub const TOL_EIG: f64 = 1e-10;
/// Relative residual tolerance for SVD/QR reconstruction.
pub const TOL_SVD: f64 = 1e-10;
/// Orthonormality tolerance for bases handed to subspace routines.
pub const TOL_ORTH: f64 = 1e-10;
/// Relative residual tolerance for linear solves.
pub const TOL_SOLVE: f64 = 1e-9;
/// Rank threshold for triangular diagonals.
pub const TOL_RANK: f64 = 1e-13;
/// Maximum condition estimate accepted by [`solve`].
pub const COND_MAX: f64 = 1e12;

/// Eigen pairs of a symmetric matrix, sorted descending by |value|.
///
/// Columns of `vectors` are unit norm with the largest-magnitude entry of
/// each column made positive, so repeated decompositions of the same
/// input compare exactly.
#[derive(Debug, Clone)]
pub struct SortedSpectrum {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Singular value decomposition `Z = left * diag(singulars) * right^T`
/// with `singulars` sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub left: Matrix,
    pub singulars: Vec<f64>,
    pub right: Matrix,
}

/// Fails with `InvalidInput` if any entry is NaN or infinite.
pub fn ensure_finite(z: &Matrix, what: &str) -> Result<()> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has non-finite entries")));
    }
    Ok(())
}

pub(crate) fn ensure_finite_vec(v: &Vector, what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Operator norm (largest singular value). Zero for empty matrices.
pub fn op_norm(z: &Matrix) -> f64 {
    singular_values(z).first().copied().unwrap_or(0.0)
}

/// Singular values sorted nonincreasing, via the Jacobi kernel.
pub fn singular_values(z: &Matrix) -> Vec<f64> {
    if z.nrows() == 0 || z.ncols() == 0 {
        return Vec::new();
    }
    jacobi_svd(z, false).expect("Jacobi sweep converges").singulars
}

/// `(Z + Z^T) / 2`.
pub fn symmetrize(z: &Matrix) -> Matrix {
    (z + z.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix (signed).
pub fn min_symmetric_eig(z: &Matrix) -> f64 {
    let eig = z.clone().symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn fix_column_signs(vectors: &mut Matrix) {
    for mut col in vectors.column_iter_mut() {
        let mut idx = 0;
        let mut best = -1.0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                idx = i;
            }
        }
        if col[idx] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Eigen decomposition of a symmetric matrix, sorted descending by
/// absolute eigenvalue. The input is symmetrized first; asymmetry beyond
/// [`TOL_SYM`] (relative) is rejected.
pub fn sym_eig(z: &Matrix) -> Result<SortedSpectrum> {
    ensure_finite(z, "sym_eig input")?;
    if z.nrows() != z.ncols() {
        return Err(Error::InvalidInput(format!(
            "sym_eig needs a square matrix, got {}x{}",
            z.nrows(),
            z.ncols()
        )));
    }
    let scale = z.norm().max(f64::MIN_POSITIVE);
    let asym = (z - z.transpose()).norm() / scale;
    if asym > TOL_SYM {
        return Err(Error::InvalidInput(format!(
            "sym_eig input asymmetric: relative asymmetry {asym:.3e}"
        )));
    }
    let sym = symmetrize(z);
    let eig = sym.symmetric_eigen();

    let d = z.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });

    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(d, d);
    for (j, &i) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(i);
        let norm = col.norm();
        vectors.set_column(j, &(col / norm));
    }
    fix_column_signs(&mut vectors);
    Ok(SortedSpectrum { values, vectors })
}

const JACOBI_MAX_SWEEPS: usize = 60;
const JACOBI_PAIR_TOL: f64 = 1e-15;

/// One-sided Jacobi SVD (Hestenes): orthogonalize the columns of `W = Z`
/// by plane rotations accumulated into `V`; column norms become the
/// singular values and normalized columns the left vectors. Chosen over
/// iterative bidiagonalization for its high relative accuracy and
/// graceful handling of exactly singular inputs.
fn jacobi_svd(z: &Matrix, want_vectors: bool) -> Result<SvdFactors> {
    if z.nrows() < z.ncols() {
        let t = jacobi_svd(&z.transpose(), want_vectors)?;
        return Ok(SvdFactors { left: t.right, singulars: t.singulars, right: t.left });
    }
    let (m, n) = (z.nrows(), z.ncols());
    let mut w = z.clone();
    let mut v = Matrix::identity(n, n);

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 || gamma.abs() <= JACOBI_PAIR_TOL * scale {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                if want_vectors {
                    for i in 0..n {
                        let vp = v[(i, p)];
                        let vq = v[(i, q)];
                        v[(i, p)] = c * vp - s * vq;
                        v[(i, q)] = s * vp + c * vq;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::InvalidInput("Jacobi SVD sweep did not converge".into()));
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));
    let singulars: Vec<f64> = order.iter().map(|&i| norms[i]).collect();

    if !want_vectors {
        return Ok(SvdFactors { left: Matrix::zeros(0, 0), singulars, right: Matrix::zeros(0, 0) });
    }

    let mut left = Matrix::zeros(m, n);
    let mut right = Matrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        right.set_column(j, &v.column(i));
        if norms[i] > 0.0 {
            left.set_column(j, &(w.column(i) / norms[i]));
        }
    }
    // Exactly-zero columns need an orthonormal completion.
    for j in 0..n {
        if singulars[j] > 0.0 {
            continue;
        }
        for candidate in 0..m {
            let mut col = Vector::zeros(m);
            col[candidate] = 1.0;
            // Unfilled zero columns are still zero vectors and contribute
            // nothing to the projections.
            for k in 0..n {
                if k == j {
                    continue;
                }
                let proj = left.column(k).dot(&col);
                col -= left.column(k) * proj;
            }
            let norm = col.norm();
            if norm > 0.5 {
                left.set_column(j, &(col / norm));
                break;
            }
        }
    }
    Ok(SvdFactors { left, singulars, right })
}

/// SVD with factors sorted by nonincreasing singular value.
pub fn svd(z: &Matrix) -> Result<SvdFactors> {
    ensure_finite(z, "svd input")?;
    let factors = jacobi_svd(z, true)?;

    #[cfg(debug_assertions)]
    {
        let recon = &factors.left
            * Matrix::from_diagonal(&Vector::from_vec(factors.singulars.clone()))
            * factors.right.transpose();
        let scale = factors.singulars.first().copied().unwrap_or(0.0);
        debug_assert!(
            (z - recon).norm() <= 1e-10 * scale.max(1.0),
            "svd reconstruction drift"
        );
    }

    Ok(factors)
}

fn check_orthonormal(w: &Matrix, what: &str) -> Result<()> {
    if w.ncols() == 0 {
        return Ok(());
    }
    let gram = w.transpose() * w;
    let eye = Matrix::identity(w.ncols(), w.ncols());
    let dev = (gram - eye).norm();
    // Allow modest accumulation on top of TOL_ORTH for wide bases.
    if dev > TOL_ORTH * (w.ncols() as f64).sqrt().max(1.0) * 10.0 {
        return Err(Error::InvalidInput(format!(
            "{what} does not have orthonormal columns (deviation {dev:.3e})"
        )));
    }
    Ok(())
}

/// Principal angles between the column spans of two orthonormal bases,
/// in radians, nondecreasing. Returns `min(ka, kb)` angles; an empty
/// basis yields an empty list.
///
/// Small angles come from the sine route `sigma((I - Wa Wa^T) Wb)` and
/// large angles from the cosine route `sigma(Wa^T Wb)`; arccos alone
/// cannot resolve angles below about 1e-8.
pub fn principal_angles(wa: &Matrix, wb: &Matrix) -> Result<Vec<f64>> {
    ensure_finite(wa, "principal_angles lhs")?;
    ensure_finite(wb, "principal_angles rhs")?;
    if wa.nrows() != wb.nrows() {
        return Err(Error::InvalidInput(format!(
            "principal_angles row mismatch: {} vs {}",
            wa.nrows(),
            wb.nrows()
        )));
    }
    check_orthonormal(wa, "principal_angles lhs")?;
    check_orthonormal(wb, "principal_angles rhs")?;
    if wa.ncols() == 0 || wb.ncols() == 0 {
        return Ok(Vec::new());
    }
    let cross = wa.transpose() * wb;
    let cosines = singular_values(&cross); // descending
    let residual = wb - wa * &cross;
    let sines = singular_values(&residual); // descending
    let k = wa.ncols().min(wb.ncols());

    let mut angles: Vec<f64> = (0..k)
        .map(|j| {
            let c = cosines[j].clamp(0.0, 1.0);
            // j-th angle ascending pairs with the j-th smallest sine.
            let s = sines[sines.len() - 1 - j].clamp(0.0, 1.0);
            if c * c >= 0.5 {
                s.asin()
            } else {
                c.acos()
            }
        })
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(angles)
}

/// Largest principal angle, 0 when either basis is empty.
pub fn max_principal_angle(wa: &Matrix, wb: &Matrix) -> Result<f64> {
    Ok(principal_angles(wa, wb)?.last().copied().unwrap_or(0.0))
}

/// QR factorization with the sign convention that the diagonal of `R` is
/// strictly positive, which makes the factors unique and the Lyapunov
/// recursions deterministic.
pub fn qr_positive(z: &Matrix) -> Result<(Matrix, Matrix)> {
    ensure_finite(z, "qr input")?;
    let (mut q, mut r) = z.clone().qr().unpack();
    let k = r.nrows().min(r.ncols());
    // Column norms bound the singular values from below up to sqrt(n);
    // cheap stand-in for the operator norm in the rank threshold.
    let scale = (0..z.ncols()).map(|j| z.column(j).norm()).fold(0.0f64, f64::max);
    for j in 0..k {
        let d = r[(j, j)];
        if d.abs() <= TOL_RANK * scale.max(1.0) {
            return Err(Error::RankDeficient { column: j });
        }
        if d < 0.0 {
            for c in j..r.ncols() {
                r[(j, c)] = -r[(j, c)];
            }
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    Ok((q, r))
}

/// Solve `Z X = B` for square `Z` behind a condition guard; the SVD-based
/// condition estimate is rejected above [`COND_MAX`].
pub fn solve(z: &Matrix, b: &Matrix) -> Result<Matrix> {
    ensure_finite(z, "solve lhs")?;
    ensure_finite(b, "solve rhs")?;
    if z.nrows() != z.ncols() {
        return Err(Error::InvalidInput(format!(
            "solve needs a square matrix, got {}x{}",
            z.nrows(),
            z.ncols()
        )));
    }
    if b.nrows() != z.nrows() {
        return Err(Error::InvalidInput(format!(
            "solve rhs has {} rows, expected {}",
            b.nrows(),
            z.nrows()
        )));
    }
    let sv = singular_values(z);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    let estimate = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !estimate.is_finite() || estimate > COND_MAX {
        return Err(Error::IllConditioned { estimate });
    }
    z.clone()
        .lu()
        .solve(b)
        .ok_or(Error::IllConditioned { estimate: f64::INFINITY })
}

/// Solve for a single right-hand-side vector.
pub fn solve_vec(z: &Matrix, b: &Vector) -> Result<Vector> {
    let x = solve(z, &Matrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(Vector::from_column_slice(x.as_slice()))
}
