//! Additively shared tensors and the dealer/test-side share algebra.
//!
//! A secret tensor is held as `m` per-party [`ShareTensor`]s whose
//! componentwise ring sum equals the fixed-point encoding of the secret.
//! Any proper subset of shares is uniformly distributed.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use rand_core::RngCore;

use crate::linalg::Matrix;
use crate::ring::{FixedPointCodec, RangeError, RingElement};

/// High-water counter for live ring elements held by an engine.
#[derive(Default)]
pub struct ElementGauge {
    current: AtomicU64,
    peak: AtomicU64,
}

impl ElementGauge {
    pub fn new() -> Arc<ElementGauge> {
        Arc::new(ElementGauge::default())
    }

    fn add(&self, n: u64) {
        let cur = self.current.fetch_add(n, Ordering::Relaxed) + n;
        self.peak.fetch_max(cur, Ordering::Relaxed);
    }

    fn sub(&self, n: u64) {
        self.current.fetch_sub(n, Ordering::Relaxed);
    }

    pub fn current(&self) -> u64 {
        self.current.load(Ordering::Relaxed)
    }

    pub fn peak(&self) -> u64 {
        self.peak.load(Ordering::Relaxed)
    }
}

/// One party's additive share of a secret tensor.
///
/// Shape and scale are public and identical across parties for the same
/// logical secret; only `data` differs.
pub struct ShareTensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<RingElement>,
    gauge: Option<Arc<ElementGauge>>,
}

impl ShareTensor {
    pub fn new(rows: usize, cols: usize, data: Vec<RingElement>) -> ShareTensor {
        assert_eq!(data.len(), rows * cols);
        ShareTensor { rows, cols, data, gauge: None }
    }

    pub fn zeros(rows: usize, cols: usize) -> ShareTensor {
        ShareTensor::new(rows, cols, alloc::vec![RingElement::ZERO; rows * cols])
    }

    pub(crate) fn attach_gauge(&mut self, gauge: Arc<ElementGauge>) {
        if self.gauge.is_none() {
            gauge.add(self.data.len() as u64);
            self.gauge = Some(gauge);
        }
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> RingElement {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: RingElement) {
        self.data[i * self.cols + j] = v;
    }

    /// Column `j` as a fresh (cols x 1) share tensor. Untracked; the engine
    /// re-tracks tensors it hands out.
    pub fn column(&self, j: usize) -> ShareTensor {
        let data = (0..self.rows).map(|i| self.get(i, j)).collect();
        ShareTensor::new(self.rows, 1, data)
    }

    pub fn transpose(&self) -> ShareTensor {
        let mut out = ShareTensor::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out.gauge = None;
        out
    }
}

impl Clone for ShareTensor {
    fn clone(&self) -> ShareTensor {
        if let Some(g) = &self.gauge {
            g.add(self.data.len() as u64);
        }
        ShareTensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.clone(),
            gauge: self.gauge.clone(),
        }
    }
}

impl Drop for ShareTensor {
    fn drop(&mut self) {
        if let Some(g) = &self.gauge {
            g.sub(self.data.len() as u64);
        }
    }
}

impl fmt::Debug for ShareTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ShareTensor({}x{})", self.rows, self.cols)
    }
}

/// Share algebra errors on the dealer/test side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareError {
    ShapeMismatch,
    MissingShare,
    Range,
}

impl fmt::Display for ShareError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShareError::ShapeMismatch => write!(f, "share shapes differ"),
            ShareError::MissingShare => write!(f, "not all party shares present"),
            ShareError::Range => write!(f, "secret outside codec range"),
        }
    }
}

impl From<RangeError> for ShareError {
    fn from(_: RangeError) -> ShareError {
        ShareError::Range
    }
}

/// Splits a plaintext tensor into `m` additive shares: the first `m - 1`
/// are uniform, the last is the encoding minus their sum.
pub fn share_tensor<R: RngCore>(
    secret: &Matrix,
    m: usize,
    codec: &FixedPointCodec,
    rng: &mut R,
) -> Result<Vec<ShareTensor>, ShareError> {
    assert!(m >= 2);
    let mut shares: Vec<ShareTensor> = (0..m)
        .map(|_| ShareTensor::zeros(secret.rows, secret.cols))
        .collect();
    for idx in 0..secret.data.len() {
        let enc = codec.encode(secret.data[idx])?;
        let mut acc = RingElement::ZERO;
        for share in shares.iter_mut().take(m - 1) {
            let r = RingElement(rng.next_u64());
            share.data[idx] = r;
            acc += r;
        }
        shares[m - 1].data[idx] = enc - acc;
    }
    Ok(shares)
}

/// Recombines all party shares into the plaintext tensor.
pub fn reconstruct_tensor(
    shares: &[ShareTensor],
    codec: &FixedPointCodec,
) -> Result<Matrix, ShareError> {
    let first = shares.first().ok_or(ShareError::MissingShare)?;
    let (rows, cols) = first.shape();
    if shares.iter().any(|s| s.shape() != (rows, cols)) {
        return Err(ShareError::ShapeMismatch);
    }
    let mut out = Matrix::zeros(rows, cols);
    for idx in 0..rows * cols {
        let mut acc = RingElement::ZERO;
        for s in shares {
            acc += s.data[idx];
        }
        out.data[idx] = codec.decode(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha12Rng;
    use rand_core::SeedableRng;

    fn codec() -> FixedPointCodec {
        FixedPointCodec::new(20).unwrap()
    }

    #[test]
    fn shares_sum_to_secret_scalar() {
        let c = codec();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let secret = Matrix::from_rows(&[&[5.0]]);
        let shares = share_tensor(&secret, 2, &c, &mut rng).unwrap();
        let enc = c.encode(5.0).unwrap();
        assert_eq!(shares[0].data[0] + shares[1].data[0], enc);
        let back = reconstruct_tensor(&shares, &c).unwrap();
        assert_eq!(back.get(0, 0), 5.0);
    }

    #[test]
    fn zero_matrix_three_parties() {
        let c = codec();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let secret = Matrix::zeros(3, 2);
        let shares = share_tensor(&secret, 3, &c, &mut rng).unwrap();
        for idx in 0..6 {
            let sum = shares[0].data[idx] + shares[1].data[idx] + shares[2].data[idx];
            assert_eq!(sum, RingElement::ZERO);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let c = codec();
        let secret = Matrix::from_rows(&[&[1.0, -2.5], &[0.25, 3.0]]);
        let a = share_tensor(&secret, 3, &c, &mut ChaCha12Rng::seed_from_u64(42), ).unwrap();
        let b = share_tensor(&secret, 3, &c, &mut ChaCha12Rng::seed_from_u64(42), ).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.data, y.data);
        }
    }

    #[test]
    fn reconstruct_counting_block_matrix() {
        // The 4x4 matrix with rows 1..16 survives a share round trip exactly.
        let c = codec();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut data = Vec::new();
        for k in 1..=16 {
            data.push(k as f64);
        }
        let secret = Matrix::from_vec(4, 4, data);
        let shares = share_tensor(&secret, 2, &c, &mut rng).unwrap();
        assert_eq!(reconstruct_tensor(&shares, &c).unwrap(), secret);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let c = codec();
        let shares = alloc::vec![ShareTensor::zeros(2, 2), ShareTensor::zeros(2, 3)];
        assert_eq!(
            reconstruct_tensor(&shares, &c).unwrap_err(),
            ShareError::ShapeMismatch
        );
    }

    #[test]
    fn gauge_tracks_peak() {
        let g = ElementGauge::new();
        let mut t = ShareTensor::zeros(4, 4);
        t.attach_gauge(g.clone());
        assert_eq!(g.current(), 16);
        let t2 = t.clone();
        assert_eq!(g.current(), 32);
        drop(t2);
        drop(t);
        assert_eq!(g.current(), 0);
        assert_eq!(g.peak(), 32);
    }
}
