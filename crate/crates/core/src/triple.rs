//! Dealer-supplied correlated randomness: Beaver matrix triples and
//! truncation pairs.
//!
//! Generation is deterministic in `(seed, index)`: the dealer and any test
//! harness derive triple `index` from a dedicated ChaCha stream, so every
//! party pulling the same index receives consistent shares and repeated runs
//! are bit-identical. Parties consume triples strictly in order.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use crate::ring::RingElement;

/// A Beaver triple for matrix multiplication: shares of uniform `A` (p x q)
/// and `B` (q x r) together with shares of the exact ring product `C = A * B`.
#[derive(Clone, Debug)]
pub struct MatrixTriple {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub a: Vec<RingElement>,
    pub b: Vec<RingElement>,
    pub c: Vec<RingElement>,
}

/// Masked-truncation pair: shares of `mask = hi * 2^shift + lo` with
/// `lo` uniform in `[0, 2^shift)` and `hi` uniform in `[0, 2^(62-shift))`,
/// plus shares of `hi` itself. Keeping `mask < 2^62` leaves headroom so the
/// opened masked value never wraps the ring as an integer.
#[derive(Clone, Debug)]
pub struct TruncPair {
    pub shift: u32,
    pub mask: Vec<RingElement>,
    pub mask_hi: Vec<RingElement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TripleError {
    /// The pre-generated stream ran out.
    Exhausted,
    /// The next record in the stream does not match the request.
    KindMismatch,
    /// Transport or storage failure, with context.
    Source(String),
}

impl fmt::Display for TripleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TripleError::Exhausted => write!(f, "beaver triple stream exhausted"),
            TripleError::KindMismatch => write!(f, "triple record does not match request"),
            TripleError::Source(s) => write!(f, "triple source error: {s}"),
        }
    }
}

/// An elementwise (Hadamard) triple: shares of uniform vectors `a`, `b` and
/// of `c` with `c[i] = a[i] * b[i]` in the ring.
#[derive(Clone, Debug)]
pub struct HadamardTriple {
    pub a: Vec<RingElement>,
    pub b: Vec<RingElement>,
    pub c: Vec<RingElement>,
}

/// Sequential supplier of one party's correlated randomness.
pub trait TripleSource {
    fn matrix_triple(&mut self, p: usize, q: usize, r: usize) -> Result<MatrixTriple, TripleError>;
    fn hadamard_triple(&mut self, count: usize) -> Result<HadamardTriple, TripleError>;
    fn trunc_pair(&mut self, shift: u32, count: usize) -> Result<TruncPair, TripleError>;
}

impl<T: TripleSource + ?Sized> TripleSource for alloc::boxed::Box<T> {
    fn matrix_triple(&mut self, p: usize, q: usize, r: usize) -> Result<MatrixTriple, TripleError> {
        (**self).matrix_triple(p, q, r)
    }

    fn hadamard_triple(&mut self, count: usize) -> Result<HadamardTriple, TripleError> {
        (**self).hadamard_triple(count)
    }

    fn trunc_pair(&mut self, shift: u32, count: usize) -> Result<TruncPair, TripleError> {
        (**self).trunc_pair(shift, count)
    }
}

fn stream_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

fn random_words(rng: &mut ChaCha12Rng, n: usize) -> Vec<RingElement> {
    (0..n).map(|_| RingElement(rng.next_u64())).collect()
}

/// Additively splits `values` into `m` share vectors.
fn split(rng: &mut ChaCha12Rng, values: &[RingElement], m: usize) -> Vec<Vec<RingElement>> {
    let mut shares: Vec<Vec<RingElement>> = (0..m)
        .map(|_| alloc::vec![RingElement::ZERO; values.len()])
        .collect();
    for (idx, &v) in values.iter().enumerate() {
        let mut acc = RingElement::ZERO;
        for share in shares.iter_mut().take(m - 1) {
            let w = RingElement(rng.next_u64());
            share[idx] = w;
            acc += w;
        }
        shares[m - 1][idx] = v - acc;
    }
    shares
}

pub(crate) fn ring_matmul(
    a: &[RingElement],
    b: &[RingElement],
    p: usize,
    q: usize,
    r: usize,
) -> Vec<RingElement> {
    let mut c = alloc::vec![RingElement::ZERO; p * r];
    for i in 0..p {
        for k in 0..q {
            let aik = a[i * q + k];
            for j in 0..r {
                c[i * r + j] += aik * b[k * r + j];
            }
        }
    }
    c
}

/// Generates all `m` parties' shares of matrix triple `index`.
pub fn generate_matrix_triple(
    seed: u64,
    index: u64,
    m: usize,
    p: usize,
    q: usize,
    r: usize,
) -> Vec<MatrixTriple> {
    let mut rng = stream_rng(seed, index);
    let a = random_words(&mut rng, p * q);
    let b = random_words(&mut rng, q * r);
    let c = ring_matmul(&a, &b, p, q, r);
    let a_shares = split(&mut rng, &a, m);
    let b_shares = split(&mut rng, &b, m);
    let c_shares = split(&mut rng, &c, m);
    a_shares
        .into_iter()
        .zip(b_shares)
        .zip(c_shares)
        .map(|((a, b), c)| MatrixTriple { p, q, r, a, b, c })
        .collect()
}

/// Generates all `m` parties' shares of Hadamard triple `index`.
pub fn generate_hadamard_triple(seed: u64, index: u64, m: usize, count: usize) -> Vec<HadamardTriple> {
    let mut rng = stream_rng(seed, index);
    let a = random_words(&mut rng, count);
    let b = random_words(&mut rng, count);
    let c: Vec<RingElement> = a.iter().zip(&b).map(|(&x, &y)| x * y).collect();
    let a_shares = split(&mut rng, &a, m);
    let b_shares = split(&mut rng, &b, m);
    let c_shares = split(&mut rng, &c, m);
    a_shares
        .into_iter()
        .zip(b_shares)
        .zip(c_shares)
        .map(|((a, b), c)| HadamardTriple { a, b, c })
        .collect()
}

/// Generates all `m` parties' shares of truncation pair `index`.
pub fn generate_trunc_pair(
    seed: u64,
    index: u64,
    m: usize,
    shift: u32,
    count: usize,
) -> Vec<TruncPair> {
    assert!(shift < 63);
    let mut rng = stream_rng(seed, index);
    let mut mask = Vec::with_capacity(count);
    let mut hi = Vec::with_capacity(count);
    for _ in 0..count {
        let lo = rng.next_u64() & ((1u64 << shift) - 1);
        let h = rng.next_u64() >> (shift + 2);
        mask.push(RingElement(h << shift | lo));
        hi.push(RingElement(h));
    }
    let mask_shares = split(&mut rng, &mask, m);
    let hi_shares = split(&mut rng, &hi, m);
    mask_shares
        .into_iter()
        .zip(hi_shares)
        .map(|(mask, mask_hi)| TruncPair { shift, mask, mask_hi })
        .collect()
}

/// Request words exchanged with a dealer (or matched against file records).
pub const REQ_MATRIX: u64 = 0;
pub const REQ_TRUNC: u64 = 1;
pub const REQ_HADAMARD: u64 = 2;

/// Serves one dealer request for `party`, advancing nothing: the caller
/// tracks the per-party request counter and passes it as `index`.
pub fn serve_dealer_request(
    seed: u64,
    index: u64,
    m: usize,
    party: usize,
    req: &[u64],
) -> Result<Vec<u64>, TripleError> {
    match req {
        [REQ_MATRIX, p, q, r] => {
            let (p, q, r) = (*p as usize, *q as usize, *r as usize);
            let t = generate_matrix_triple(seed, index, m, p, q, r)
                .swap_remove(party);
            let mut out = Vec::with_capacity(p * q + q * r + p * r);
            out.extend(t.a.iter().map(|e| e.0));
            out.extend(t.b.iter().map(|e| e.0));
            out.extend(t.c.iter().map(|e| e.0));
            Ok(out)
        }
        [REQ_HADAMARD, count] => {
            let t = generate_hadamard_triple(seed, index, m, *count as usize).swap_remove(party);
            let mut out = Vec::with_capacity(3 * t.a.len());
            out.extend(t.a.iter().map(|e| e.0));
            out.extend(t.b.iter().map(|e| e.0));
            out.extend(t.c.iter().map(|e| e.0));
            Ok(out)
        }
        [REQ_TRUNC, shift, count] => {
            let t = generate_trunc_pair(seed, index, m, *shift as u32, *count as usize)
                .swap_remove(party);
            let mut out = Vec::with_capacity(2 * t.mask.len());
            out.extend(t.mask.iter().map(|e| e.0));
            out.extend(t.mask_hi.iter().map(|e| e.0));
            Ok(out)
        }
        _ => Err(TripleError::KindMismatch),
    }
}

/// Blocking request channel to a dealer process or thread.
pub trait DealerLink {
    fn request(&mut self, req: &[u64]) -> Result<Vec<u64>, TripleError>;
}

impl<L: DealerLink + ?Sized> DealerLink for &mut L {
    fn request(&mut self, req: &[u64]) -> Result<Vec<u64>, TripleError> {
        (**self).request(req)
    }
}

/// Triple source backed by a live dealer connection.
pub struct RemoteTripleSource<L: DealerLink> {
    link: L,
}

impl<L: DealerLink> RemoteTripleSource<L> {
    pub fn new(link: L) -> Self {
        RemoteTripleSource { link }
    }
}

impl<L: DealerLink> TripleSource for RemoteTripleSource<L> {
    fn matrix_triple(&mut self, p: usize, q: usize, r: usize) -> Result<MatrixTriple, TripleError> {
        let words = self
            .link
            .request(&[REQ_MATRIX, p as u64, q as u64, r as u64])?;
        if words.len() != p * q + q * r + p * r {
            return Err(TripleError::KindMismatch);
        }
        let a = words[..p * q].iter().map(|&w| RingElement(w)).collect();
        let b = words[p * q..p * q + q * r].iter().map(|&w| RingElement(w)).collect();
        let c = words[p * q + q * r..].iter().map(|&w| RingElement(w)).collect();
        Ok(MatrixTriple { p, q, r, a, b, c })
    }

    fn hadamard_triple(&mut self, count: usize) -> Result<HadamardTriple, TripleError> {
        let words = self.link.request(&[REQ_HADAMARD, count as u64])?;
        if words.len() != 3 * count {
            return Err(TripleError::KindMismatch);
        }
        let a = words[..count].iter().map(|&w| RingElement(w)).collect();
        let b = words[count..2 * count].iter().map(|&w| RingElement(w)).collect();
        let c = words[2 * count..].iter().map(|&w| RingElement(w)).collect();
        Ok(HadamardTriple { a, b, c })
    }

    fn trunc_pair(&mut self, shift: u32, count: usize) -> Result<TruncPair, TripleError> {
        let words = self.link.request(&[REQ_TRUNC, shift as u64, count as u64])?;
        if words.len() != 2 * count {
            return Err(TripleError::KindMismatch);
        }
        let mask = words[..count].iter().map(|&w| RingElement(w)).collect();
        let mask_hi = words[count..].iter().map(|&w| RingElement(w)).collect();
        Ok(TruncPair { shift, mask, mask_hi })
    }
}

/// Dealer-less source that derives each triple locally from the shared seed.
///
/// Every party sees the full triple, so this is for tests and single-machine
/// debugging only; production runs use a dealer.
pub struct SeededTripleSource {
    seed: u64,
    m: usize,
    party: usize,
    counter: u64,
}

impl SeededTripleSource {
    pub fn new(seed: u64, m: usize, party: usize) -> Self {
        SeededTripleSource { seed, m, party, counter: 0 }
    }
}

impl TripleSource for SeededTripleSource {
    fn matrix_triple(&mut self, p: usize, q: usize, r: usize) -> Result<MatrixTriple, TripleError> {
        let idx = self.counter;
        self.counter += 1;
        Ok(generate_matrix_triple(self.seed, idx, self.m, p, q, r).swap_remove(self.party))
    }

    fn hadamard_triple(&mut self, count: usize) -> Result<HadamardTriple, TripleError> {
        let idx = self.counter;
        self.counter += 1;
        Ok(generate_hadamard_triple(self.seed, idx, self.m, count).swap_remove(self.party))
    }

    fn trunc_pair(&mut self, shift: u32, count: usize) -> Result<TruncPair, TripleError> {
        let idx = self.counter;
        self.counter += 1;
        Ok(generate_trunc_pair(self.seed, idx, self.m, shift, count).swap_remove(self.party))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(shares: &[Vec<RingElement>]) -> Vec<RingElement> {
        let mut out = alloc::vec![RingElement::ZERO; shares[0].len()];
        for s in shares {
            for (o, &v) in out.iter_mut().zip(s) {
                *o += v;
            }
        }
        out
    }

    #[test]
    fn scalar_triple_identity() {
        let parties = generate_matrix_triple(9, 0, 2, 1, 1, 1);
        let a = reconstruct(&[parties[0].a.clone(), parties[1].a.clone()]);
        let b = reconstruct(&[parties[0].b.clone(), parties[1].b.clone()]);
        let c = reconstruct(&[parties[0].c.clone(), parties[1].c.clone()]);
        assert_eq!(a[0] * b[0], c[0]);
    }

    #[test]
    fn matrix_triple_product_exact() {
        let parties = generate_matrix_triple(11, 5, 3, 2, 2, 2);
        let a = reconstruct(&[parties[0].a.clone(), parties[1].a.clone(), parties[2].a.clone()]);
        let b = reconstruct(&[parties[0].b.clone(), parties[1].b.clone(), parties[2].b.clone()]);
        let c = reconstruct(&[parties[0].c.clone(), parties[1].c.clone(), parties[2].c.clone()]);
        assert_eq!(ring_matmul(&a, &b, 2, 2, 2), c);
    }

    #[test]
    fn deterministic_per_seed_and_index() {
        let x = generate_matrix_triple(5, 3, 2, 2, 3, 1);
        let y = generate_matrix_triple(5, 3, 2, 2, 3, 1);
        assert_eq!(x[0].a, y[0].a);
        assert_eq!(x[1].c, y[1].c);
        let z = generate_matrix_triple(5, 4, 2, 2, 3, 1);
        assert_ne!(x[0].a, z[0].a);
    }

    #[test]
    fn hadamard_triple_componentwise() {
        let parties = generate_hadamard_triple(21, 4, 3, 5);
        let a = reconstruct(&[parties[0].a.clone(), parties[1].a.clone(), parties[2].a.clone()]);
        let b = reconstruct(&[parties[0].b.clone(), parties[1].b.clone(), parties[2].b.clone()]);
        let c = reconstruct(&[parties[0].c.clone(), parties[1].c.clone(), parties[2].c.clone()]);
        for i in 0..5 {
            assert_eq!(a[i] * b[i], c[i]);
        }
    }

    #[test]
    fn trunc_pair_structure() {
        let f = 20u32;
        let parties = generate_trunc_pair(13, 2, 2, f, 8);
        let mask = reconstruct(&[parties[0].mask.clone(), parties[1].mask.clone()]);
        let hi = reconstruct(&[parties[0].mask_hi.clone(), parties[1].mask_hi.clone()]);
        for (m, h) in mask.iter().zip(&hi) {
            assert_eq!(m.0 >> f, h.0);
            assert!(h.0 < 1u64 << (62 - f));
        }
    }

    #[test]
    fn dealer_request_roundtrip() {
        let words = serve_dealer_request(7, 0, 2, 1, &[REQ_MATRIX, 2, 2, 2]).unwrap();
        assert_eq!(words.len(), 12);
        let direct = generate_matrix_triple(7, 0, 2, 2, 2, 2).swap_remove(1);
        assert_eq!(words[0], direct.a[0].0);
    }
}
