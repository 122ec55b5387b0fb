//! Ordered real Schur form: computes an orthonormal basis of the
//! invariant subspace belonging to the eigenvalues with magnitude below a
//! split radius, by bubbling diagonal blocks of the quasi-triangular
//! factor with direct adjacent swaps.
//!
//! Complex conjugate pairs are kept together as 2x2 blocks, so the
//! returned basis is the real span of the selected (possibly complex)
//! eigendirections. 2x2 blocks that turn out to have real eigenvalues
//! are split into 1x1 blocks first.

use nalgebra::Schur;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Matrix};

/// Magnitudes inside `(alpha - GAP, alpha + GAP)` are ambiguous to
/// classify, except right on the circle (see [`ON_CIRCLE_TOL`]).
pub const SPECTRAL_GAP_TOL: f64 = 1e-6;

/// Magnitudes within this distance of the split radius are treated as
/// sitting exactly on the circle and classified with the unstable-neutral
/// set, mirroring how neutral Lyapunov exponents count into `d0`.
pub const ON_CIRCLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    size: usize,
    magnitude: f64,
    stable: bool,
}

fn classify(magnitude: f64, alpha: f64) -> Result<bool> {
    let dist = (magnitude - alpha).abs();
    if dist <= ON_CIRCLE_TOL {
        // Exactly neutral: belongs with the unstable-neutral set.
        return Ok(false);
    }
    if dist < SPECTRAL_GAP_TOL {
        return Err(Error::SpectralGapViolation { alpha, gap: dist });
    }
    Ok(magnitude < alpha)
}

fn embed_apply(t: &mut Matrix, q: &mut Matrix, g: &Matrix, offset: usize) {
    let d = t.nrows();
    let w = g.nrows();
    let mut full = Matrix::identity(d, d);
    full.view_mut((offset, offset), (w, w)).copy_from(g);
    *t = full.transpose() * &*t * &full;
    *q = &*q * full;
}

/// Full (square-Q) Householder QR for the tiny swap matrices.
fn full_qr_small(z: &Matrix) -> (Matrix, Matrix) {
    let m = z.nrows();
    let n = z.ncols();
    let mut q = Matrix::identity(m, m);
    let mut r = z.clone();
    for j in 0..n.min(m.saturating_sub(1)) {
        let x = r.view((j, j), (m - j, 1)).into_owned();
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        let mut v = x;
        let sign = if v[(0, 0)] >= 0.0 { 1.0 } else { -1.0 };
        v[(0, 0)] += sign * norm;
        let denom = v.norm_squared();
        if denom == 0.0 {
            continue;
        }
        // r[j.., ..] -= (2/denom) v (v^T r[j.., ..])
        let vt_r = v.transpose() * r.view((j, 0), (m - j, n));
        let update = &v * vt_r * (2.0 / denom);
        let mut rv = r.view_mut((j, 0), (m - j, n));
        rv -= update;
        // q[.., j..] -= (2/denom) (q[.., j..] v) v^T
        let qv = q.view((0, j), (m, m - j)) * &v;
        let update = qv * v.transpose() * (2.0 / denom);
        let mut qv = q.view_mut((0, j), (m, m - j));
        qv -= update;
    }
    (q, r)
}

fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    Matrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

fn vec_of(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.nrows() * m.ncols(), 1);
    let mut idx = 0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out[(idx, 0)] = m[(i, j)];
            idx += 1;
        }
    }
    out
}

/// Swap two adjacent diagonal blocks of sizes `p` and `s` starting at
/// `offset`, updating `t`, `q`.
fn swap_adjacent(t: &mut Matrix, q: &mut Matrix, offset: usize, p: usize, s: usize) -> Result<()> {
    let a11 = t.view((offset, offset), (p, p)).into_owned();
    let a12 = t.view((offset, offset + p), (p, s)).into_owned();
    let a22 = t.view((offset + p, offset + p), (s, s)).into_owned();

    // Invariant subspace of [[A11, A12], [0, A22]] for the eigenvalues of
    // A22 is spanned by [X; I] with A11 X - X A22 = -A12.
    let system = kron(&Matrix::identity(s, s), &a11) - kron(&a22.transpose(), &Matrix::identity(p, p));
    let rhs = -vec_of(&a12);
    let x_vec = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned { estimate: f64::INFINITY })?;
    let mut z = Matrix::zeros(p + s, s);
    let mut idx = 0;
    for j in 0..s {
        for i in 0..p {
            z[(i, j)] = x_vec[(idx, 0)];
            idx += 1;
        }
    }
    for j in 0..s {
        z[(p + j, j)] = 1.0;
    }

    let (g, _) = full_qr_small(&z);
    embed_apply(t, q, &g, offset);

    // Scrub the structurally-zero entries the similarity left as noise.
    for i in s..s + p {
        for j in 0..s {
            t[(offset + i, offset + j)] = 0.0;
        }
    }
    Ok(())
}

/// Rotate a 2x2 block with real eigenvalues into triangular form.
fn split_real_block(t: &mut Matrix, q: &mut Matrix, offset: usize) {
    let a = t[(offset, offset)];
    let b = t[(offset, offset + 1)];
    let c = t[(offset + 1, offset)];
    let dd = t[(offset + 1, offset + 1)];
    let mid = 0.5 * (a + dd);
    let disc = 0.25 * (a - dd) * (a - dd) + b * c;
    debug_assert!(disc >= 0.0, "split_real_block on a complex pair");
    let root = disc.max(0.0).sqrt();
    let lambda = if mid >= 0.0 { mid + root } else { mid - root };

    let cand1 = nalgebra::Vector2::new(b, lambda - a);
    let cand2 = nalgebra::Vector2::new(lambda - dd, c);
    let v = if cand1.norm() >= cand2.norm() { cand1 } else { cand2 };
    let norm = v.norm();
    if norm == 0.0 {
        // Block is already diagonal.
        t[(offset + 1, offset)] = 0.0;
        return;
    }
    let v = v / norm;
    let g = Matrix::from_row_slice(2, 2, &[v[0], -v[1], v[1], v[0]]);
    embed_apply(t, q, &g, offset);
    t[(offset + 1, offset)] = 0.0;
}

fn block_magnitude(t: &Matrix, start: usize, size: usize) -> f64 {
    if size == 1 {
        t[(start, start)].abs()
    } else {
        // Complex pair: |lambda|^2 equals the block determinant.
        let det = t[(start, start)] * t[(start + 1, start + 1)]
            - t[(start, start + 1)] * t[(start + 1, start)];
        det.abs().sqrt()
    }
}

/// Orthonormal basis (d x k) of the invariant subspace of `b` for the
/// eigenvalues with magnitude below `alpha`.
pub(crate) fn stable_invariant_basis(b: &Matrix, alpha: f64) -> Result<Matrix> {
    ensure_finite(b, "ordered Schur input")?;
    if b.nrows() != b.ncols() {
        return Err(Error::InvalidInput("ordered Schur needs a square matrix".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput("split radius must be positive".into()));
    }
    let d = b.nrows();
    let schur = Schur::try_new(b.clone(), 1e-14, 0)
        .ok_or_else(|| Error::InvalidInput("real Schur iteration did not converge".into()))?;
    let (mut q, mut t) = schur.unpack();

    // Anything below the first subdiagonal is structural noise.
    for i in 0..d {
        for j in 0..i.saturating_sub(1) {
            t[(i, j)] = 0.0;
        }
    }

    let scale = t.norm().max(f64::MIN_POSITIVE);
    let mut blocks: Vec<Block> = Vec::new();
    let mut i = 0;
    while i < d {
        let coupled = i + 1 < d && t[(i + 1, i)].abs() > 1e-14 * scale;
        if coupled {
            let a = t[(i, i)];
            let dd = t[(i + 1, i + 1)];
            let disc = 0.25 * (a - dd) * (a - dd) + t[(i, i + 1)] * t[(i + 1, i)];
            if disc >= 0.0 {
                split_real_block(&mut t, &mut q, i);
                continue;
            }
            blocks.push(Block { start: i, size: 2, magnitude: 0.0, stable: false });
            i += 2;
        } else {
            if i + 1 < d {
                t[(i + 1, i)] = 0.0;
            }
            blocks.push(Block { start: i, size: 1, magnitude: 0.0, stable: false });
            i += 1;
        }
    }
    for blk in blocks.iter_mut() {
        blk.magnitude = block_magnitude(&t, blk.start, blk.size);
        blk.stable = classify(blk.magnitude, alpha)?;
    }

    // Bubble stable blocks to the front.
    loop {
        let mut swapped = false;
        for idx in 0..blocks.len().saturating_sub(1) {
            if !blocks[idx].stable && blocks[idx + 1].stable {
                let (p, s) = (blocks[idx].size, blocks[idx + 1].size);
                let offset = blocks[idx].start;
                swap_adjacent(&mut t, &mut q, offset, p, s)?;
                let mut first = blocks[idx + 1];
                let mut second = blocks[idx];
                first.start = offset;
                second.start = offset + first.size;
                blocks[idx] = first;
                blocks[idx + 1] = second;
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }

    let k: usize = blocks.iter().filter(|b| b.stable).map(|b| b.size).sum();
    Ok(q.columns(0, k).into_owned())
}
