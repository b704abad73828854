//! Power iteration and shift power iteration over shared matrices.
//!
//! Eigenvalues, eigenvectors and every intermediate stay secret-shared; the
//! only communication is the constant-size openings inside multiplications
//! and truncations, so the transcript depends on the matrix dimension and
//! iteration counts alone.
//!
//! Each deflation round starts from the first column of the working matrix
//! plus a small public pseudorandom perturbation. The perturbation is added
//! unconditionally: whether the column is degenerate cannot be tested
//! without opening it, and an always-on nudge guarantees a nonzero overlap
//! with the dominant eigenvector either way. Power iteration forgets its
//! starting point, so the converged pair is unaffected.
//!
//! Callers must keep the spectrum bounded away from zero (smallest
//! eigenvalue well above the fixed-point noise floor), otherwise the
//! normalisation of a nearly-null iterate overflows the ring headroom.

use alloc::vec::Vec;

use crate::channel::PartyChannel;
use crate::engine::{MpcEngine, MpcError};
use crate::linalg::Matrix;
use crate::tensor::ShareTensor;
use crate::triple::TripleSource;

/// Iteration budget and magnitude bounds for one eigensolve.
#[derive(Copy, Clone, Debug)]
pub struct IterParams {
    /// Matrix-vector rounds per eigenpair.
    pub iterations: u32,
    /// Public bound on the squared norm of any iterate.
    pub nrm2_bound: f64,
    /// Public floor on the squared norm of any iterate; with unit input
    /// vectors this is the squared spectral floor of the matrix.
    pub nrm2_floor: f64,
    /// Newton rounds inside each inverse square root.
    pub newton_rounds: u32,
}

const PERTURB_SCALE: f64 = 1.0 / 64.0;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Public perturbation for eigenpair `index`, deterministic in the label.
fn perturbation(label: &str, index: usize, d: usize) -> Matrix {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
    }
    h ^= index as u64;
    let mut out = Matrix::zeros(d, 1);
    for j in 0..d {
        h = splitmix(h);
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        out.data[j] = (2.0 * unit - 1.0) * PERTURB_SCALE;
    }
    out
}

fn first_column<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    mat: &ShareTensor,
    label: &str,
    index: usize,
) -> Result<ShareTensor, MpcError> {
    // A column of M can have norm up to sqrt(d) times the spectral bound;
    // a shift by 2 brings the starting iterate back inside the bound that
    // covers all later iterates (which are M times a unit vector).
    let col = eng.trunc(&mat.column(0), 2)?;
    eng.add_public(&col, &perturbation(label, index, mat.rows))
}

/// Normalises `v`, applies the matrix once, and returns `(y, M y)`.
fn iterate_once<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    mat: &ShareTensor,
    v: &ShareTensor,
    params: &IterParams,
) -> Result<(ShareTensor, ShareTensor), MpcError> {
    let nrm2 = eng.inner(v, v)?;
    let zinv = eng.inv_sqrt_bounded(&nrm2, params.nrm2_bound, params.nrm2_floor, params.newton_rounds)?;
    let y = eng.mul_scalar(&zinv, v)?;
    let next = eng.matmul(mat, &y)?;
    Ok((y, next))
}

fn deflate<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    mat: &ShareTensor,
    lambda: &ShareTensor,
    y: &ShareTensor,
) -> Result<ShareTensor, MpcError> {
    let outer = eng.matmul(y, &y.transpose())?;
    let scaled = eng.mul_scalar(lambda, &outer)?;
    eng.sub(mat, &scaled)
}

/// Full eigendecomposition of a shared symmetric d x d matrix by repeated
/// power iteration and deflation. Returns eigenvalue shares (1 x 1 each)
/// and unit eigenvector shares (d x 1 each), in extraction order.
pub fn power_iteration<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    mat: &ShareTensor,
    params: &IterParams,
    label: &str,
) -> Result<(Vec<ShareTensor>, Vec<ShareTensor>), MpcError> {
    let d = mat.rows;
    if mat.cols != d {
        return Err(MpcError::ShapeMismatch);
    }
    let mut work = mat.clone();
    let mut values = Vec::with_capacity(d);
    let mut vectors = Vec::with_capacity(d);
    for i in 0..d {
        let mut v = first_column(eng, &work, label, i)?;
        let mut y = v.clone();
        for _ in 0..params.iterations {
            let (yy, next) = iterate_once(eng, &work, &v, params)?;
            y = yy;
            v = next;
        }
        // Rayleigh quotient: v already holds M y.
        let lambda = eng.inner(&y, &v)?;
        work = deflate(eng, &work, &lambda, &y)?;
        values.push(lambda);
        vectors.push(y);
    }
    Ok((values, vectors))
}

/// Eigendecomposition accelerated by spectral shifts. `last_values` are the
/// (shared) eigenvalue estimates of a previous solve of the same matrix;
/// eigenpair i iterates on `M - alpha I` with `alpha` half the next smaller
/// estimate, which widens the effective eigenvalue gap.
pub fn shift_power_iteration<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    mat: &ShareTensor,
    last_values: &[ShareTensor],
    params: &IterParams,
    label: &str,
) -> Result<(Vec<ShareTensor>, Vec<ShareTensor>), MpcError> {
    let d = mat.rows;
    if mat.cols != d || last_values.len() != d {
        return Err(MpcError::ShapeMismatch);
    }
    let mut work = mat.clone();
    let mut values = Vec::with_capacity(d);
    let mut vectors = Vec::with_capacity(d);
    for i in 0..d {
        // The last pair runs unshifted: the deflated spectrum is {0, lambda_d},
        // and any shift would lift the extracted directions to -alpha, where
        // the perturbation components never decay.
        let alpha = if i + 1 < d {
            Some(eng.scale_pow2(&last_values[i + 1], -1)?)
        } else {
            None
        };
        // Shifted operator: subtract alpha from the diagonal, share-locally.
        let mut shifted = work.clone();
        if let Some(alpha) = &alpha {
            for j in 0..d {
                let cur = shifted.get(j, j);
                shifted.set(j, j, cur - alpha.data[0]);
            }
        }
        let mut v = first_column(eng, &shifted, label, i)?;
        let mut y = v.clone();
        for _ in 0..params.iterations {
            let (yy, next) = iterate_once(eng, &shifted, &v, params)?;
            y = yy;
            v = next;
        }
        let shifted_lambda = eng.inner(&y, &v)?;
        let lambda = match &alpha {
            Some(alpha) => eng.add(&shifted_lambda, alpha)?,
            None => shifted_lambda,
        };
        // Deflation happens on the unshifted matrix.
        work = deflate(eng, &work, &lambda, &y)?;
        values.push(lambda);
        vectors.push(y);
    }
    Ok((values, vectors))
}
