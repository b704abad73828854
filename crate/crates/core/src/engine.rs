//! The m-party computation engine: shared-tensor arithmetic over a channel.
//!
//! Linear operations (add, subtract, public constants) are local. Products
//! use dealer triples and cost one opening round plus one truncation round.
//! Truncation is masked: the scale-2f value is offset into the positive
//! range, blinded with a dealer mask, opened, and shifted in public. The
//! result is within 2 units in the last place of the true quotient and the
//! opened word is statistically independent of the secret up to the masked
//! high bits.
//!
//! Ring-magnitude invariant: every value entering a truncation must satisfy
//! `|signed| < 2^61`. At 20 fractional bits that allows scale-2f products of
//! reals up to about 2^21, which all shipped pipelines respect by bounding
//! and pre-normalising their inputs.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand_chacha::ChaCha12Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::channel::{msg, ChannelError, PartyChannel};
use crate::linalg::Matrix;
use crate::ring::{FixedPointCodec, RangeError, RingElement};
use crate::tensor::{share_tensor, ElementGauge, ShareError, ShareTensor};
use crate::triple::{ring_matmul, TripleError, TripleSource};

/// Magnitude headroom exponent: signed pre-truncation values stay below
/// 2^OFFSET_BITS, so adding the 2^OFFSET_BITS offset and a mask below 2^62
/// never wraps 2^64 as an integer.
const OFFSET_BITS: u32 = 61;

#[derive(Copy, Clone, Debug)]
pub struct EngineConfig {
    pub frac_bits: u32,
    /// Seed for the engine's local share-splitting randomness.
    pub session_seed: u64,
}

impl Default for EngineConfig {
    fn default() -> EngineConfig {
        EngineConfig { frac_bits: 20, session_seed: 0 }
    }
}

/// One group of values opened to every party, in one communication round.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RevealRecord {
    pub subtask_label: String,
    pub shapes: Vec<(usize, usize)>,
    /// Output of an irreversible transform: contributes no equation about
    /// the raw inputs.
    pub irreversible: bool,
    pub timestamp_millis: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MpcError {
    Channel(ChannelError),
    Triple(TripleError),
    Range,
    ShapeMismatch,
    MissingInput,
}

impl core::fmt::Display for MpcError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MpcError::Channel(e) => write!(f, "channel: {e}"),
            MpcError::Triple(e) => write!(f, "triple: {e}"),
            MpcError::Range => write!(f, "value outside fixed-point range"),
            MpcError::ShapeMismatch => write!(f, "tensor shapes incompatible"),
            MpcError::MissingInput => write!(f, "input owner supplied no data"),
        }
    }
}

impl From<ChannelError> for MpcError {
    fn from(e: ChannelError) -> MpcError {
        MpcError::Channel(e)
    }
}

impl From<TripleError> for MpcError {
    fn from(e: TripleError) -> MpcError {
        MpcError::Triple(e)
    }
}

impl From<RangeError> for MpcError {
    fn from(_: RangeError) -> MpcError {
        MpcError::Range
    }
}

impl From<ShareError> for MpcError {
    fn from(e: ShareError) -> MpcError {
        match e {
            ShareError::Range => MpcError::Range,
            _ => MpcError::ShapeMismatch,
        }
    }
}

pub struct MpcEngine<C: PartyChannel, T: TripleSource> {
    channel: C,
    triples: T,
    codec: FixedPointCodec,
    rng: ChaCha12Rng,
    gauge: Arc<ElementGauge>,
    reveal_log: Vec<RevealRecord>,
}

impl<C: PartyChannel, T: TripleSource> MpcEngine<C, T> {
    pub fn new(channel: C, triples: T, config: EngineConfig) -> Result<Self, MpcError> {
        let codec = FixedPointCodec::new(config.frac_bits)?;
        let seed = config
            .session_seed
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(channel.party_id() as u64 + 1));
        Ok(MpcEngine {
            channel,
            triples,
            codec,
            rng: ChaCha12Rng::seed_from_u64(seed),
            gauge: ElementGauge::new(),
            reveal_log: Vec::new(),
        })
    }

    pub fn party(&self) -> usize {
        self.channel.party_id()
    }

    pub fn parties(&self) -> usize {
        self.channel.parties()
    }

    pub fn codec(&self) -> &FixedPointCodec {
        &self.codec
    }

    pub fn gauge(&self) -> &Arc<ElementGauge> {
        &self.gauge
    }

    pub fn reveal_log(&self) -> &[RevealRecord] {
        &self.reveal_log
    }

    pub fn channel_mut(&mut self) -> &mut C {
        &mut self.channel
    }

    fn track(&self, mut t: ShareTensor) -> ShareTensor {
        t.attach_gauge(self.gauge.clone());
        t
    }

    /// Sends `words` to every peer, receives every peer's block, returns the
    /// componentwise ring sum including the local block. One round.
    fn exchange_sum(&mut self, msg_type: u8, words: &[u64]) -> Result<Vec<RingElement>, MpcError> {
        let me = self.party();
        let m = self.parties();
        for peer in 0..m {
            if peer != me {
                self.channel.send(peer, msg_type, words)?;
            }
        }
        let mut acc: Vec<RingElement> = words.iter().map(|&w| RingElement(w)).collect();
        for peer in 0..m {
            if peer == me {
                continue;
            }
            let block = self.channel.recv(peer, msg_type)?;
            if block.len() != acc.len() {
                return Err(MpcError::ShapeMismatch);
            }
            for (a, w) in acc.iter_mut().zip(block) {
                *a += RingElement(w);
            }
        }
        self.channel.mark_round();
        Ok(acc)
    }

    /// Shares `owner`'s plaintext among all parties. Every party passes the
    /// public shape; only the owner passes the data. One round.
    pub fn input(
        &mut self,
        owner: usize,
        rows: usize,
        cols: usize,
        secret: Option<&Matrix>,
    ) -> Result<ShareTensor, MpcError> {
        let me = self.party();
        let m = self.parties();
        let mine = if me == owner {
            let secret = secret.ok_or(MpcError::MissingInput)?;
            if secret.rows != rows || secret.cols != cols {
                return Err(MpcError::ShapeMismatch);
            }
            let mut shares = share_tensor(secret, m, &self.codec, &mut self.rng)?;
            for peer in (0..m).rev() {
                if peer == me {
                    continue;
                }
                let words: Vec<u64> = shares[peer].data.iter().map(|e| e.0).collect();
                self.channel.send(peer, msg::DATA, &words)?;
            }
            shares.swap_remove(me)
        } else {
            let words = self.channel.recv(owner, msg::DATA)?;
            if words.len() != rows * cols {
                return Err(MpcError::ShapeMismatch);
            }
            ShareTensor::new(rows, cols, words.into_iter().map(RingElement).collect())
        };
        self.channel.mark_round();
        Ok(self.track(mine))
    }

    /// A share of a public constant matrix: party 0 holds the encoding.
    pub fn constant(&mut self, value: &Matrix) -> Result<ShareTensor, MpcError> {
        let mut t = ShareTensor::zeros(value.rows, value.cols);
        if self.party() == 0 {
            for (slot, &v) in t.data.iter_mut().zip(&value.data) {
                *slot = self.codec.encode(v)?;
            }
        }
        Ok(self.track(t))
    }

    /// Opens a shared tensor to every party without logging a reveal. One
    /// round.
    pub fn open(&mut self, t: &ShareTensor) -> Result<Matrix, MpcError> {
        let words: Vec<u64> = t.data.iter().map(|e| e.0).collect();
        let sum = self.exchange_sum(msg::DATA, &words)?;
        let data = sum.into_iter().map(|e| self.codec.decode(e)).collect();
        Ok(Matrix::from_vec(t.rows, t.cols, data))
    }

    /// Opens a group of tensors to every party in a single round and logs
    /// one reveal record for the group.
    pub fn reveal_group(
        &mut self,
        label: &str,
        irreversible: bool,
        tensors: &[&ShareTensor],
    ) -> Result<Vec<Matrix>, MpcError> {
        let mut words = Vec::new();
        for t in tensors {
            words.extend(t.data.iter().map(|e| e.0));
        }
        let sum = self.exchange_sum(msg::REVEAL, &words)?;
        let mut out = Vec::with_capacity(tensors.len());
        let mut cursor = 0;
        for t in tensors {
            let data = sum[cursor..cursor + t.numel()]
                .iter()
                .map(|&e| self.codec.decode(e))
                .collect();
            out.push(Matrix::from_vec(t.rows, t.cols, data));
            cursor += t.numel();
        }
        self.reveal_log.push(RevealRecord {
            subtask_label: String::from(label),
            shapes: tensors.iter().map(|t| t.shape()).collect(),
            irreversible,
            timestamp_millis: self.channel.now_millis(),
        });
        Ok(out)
    }

    pub fn add(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor, MpcError> {
        if x.shape() != y.shape() {
            return Err(MpcError::ShapeMismatch);
        }
        let data = x.data.iter().zip(&y.data).map(|(&a, &b)| a + b).collect();
        Ok(self.track(ShareTensor::new(x.rows, x.cols, data)))
    }

    pub fn sub(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor, MpcError> {
        if x.shape() != y.shape() {
            return Err(MpcError::ShapeMismatch);
        }
        let data = x.data.iter().zip(&y.data).map(|(&a, &b)| a - b).collect();
        Ok(self.track(ShareTensor::new(x.rows, x.cols, data)))
    }

    pub fn neg(&mut self, x: &ShareTensor) -> Result<ShareTensor, MpcError> {
        let data = x.data.iter().map(|&a| -a).collect();
        Ok(self.track(ShareTensor::new(x.rows, x.cols, data)))
    }

    /// Adds a public matrix: only party 0 adjusts its share.
    pub fn add_public(&mut self, x: &ShareTensor, value: &Matrix) -> Result<ShareTensor, MpcError> {
        if (value.rows, value.cols) != x.shape() {
            return Err(MpcError::ShapeMismatch);
        }
        let mut out = x.clone();
        if self.party() == 0 {
            for (slot, &v) in out.data.iter_mut().zip(&value.data) {
                *slot += self.codec.encode(v)?;
            }
        }
        Ok(self.track(out))
    }

    /// Adds the same public scalar to every element.
    pub fn add_public_scalar(&mut self, x: &ShareTensor, v: f64) -> Result<ShareTensor, MpcError> {
        let mut out = x.clone();
        if self.party() == 0 {
            let enc = self.codec.encode(v)?;
            for slot in out.data.iter_mut() {
                *slot += enc;
            }
        }
        Ok(self.track(out))
    }

    /// Masked rescale of a shared value by 2^shift. One round.
    ///
    /// Requires `|signed value| < 2^61`. The opened word is the value plus a
    /// dealer mask plus the positive offset, so its low `shift` bits and most
    /// high bits are uniform.
    pub fn trunc(&mut self, x: &ShareTensor, shift: u32) -> Result<ShareTensor, MpcError> {
        assert!(shift > 0 && shift < OFFSET_BITS);
        let n = x.numel();
        let pair = self.triples.trunc_pair(shift, n)?;
        let me = self.party();
        let mut masked: Vec<u64> = Vec::with_capacity(n);
        for i in 0..n {
            let mut w = x.data[i] + pair.mask[i];
            if me == 0 {
                w += RingElement(1u64 << OFFSET_BITS);
            }
            masked.push(w.0);
        }
        let opened = self.exchange_sum(msg::DATA, &masked)?;
        let mut out = ShareTensor::zeros(x.rows, x.cols);
        let correction = RingElement(1u64 << (OFFSET_BITS - shift));
        for i in 0..n {
            out.data[i] = if me == 0 {
                RingElement(opened[i].0 >> shift) - correction - pair.mask_hi[i]
            } else {
                -pair.mask_hi[i]
            };
        }
        Ok(self.track(out))
    }

    /// Elementwise product at scale f. Two rounds (opening + rescale).
    pub fn mul(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor, MpcError> {
        self.mul_with_extra_shift(x, y, 0)
    }

    /// Elementwise product rescaled by `2^(f + extra)`: computes `x * y / 2^extra`.
    pub fn mul_with_extra_shift(
        &mut self,
        x: &ShareTensor,
        y: &ShareTensor,
        extra: u32,
    ) -> Result<ShareTensor, MpcError> {
        if x.shape() != y.shape() {
            return Err(MpcError::ShapeMismatch);
        }
        let n = x.numel();
        let triple = self.triples.hadamard_triple(n)?;
        // One frame opens both difference vectors.
        let mut words: Vec<u64> = Vec::with_capacity(2 * n);
        words.extend((0..n).map(|i| (x.data[i] - triple.a[i]).0));
        words.extend((0..n).map(|i| (y.data[i] - triple.b[i]).0));
        let opened = self.exchange_sum(msg::DATA, &words)?;
        let (e, d) = opened.split_at(n);
        let me = self.party();
        let mut prod = ShareTensor::zeros(x.rows, x.cols);
        for i in 0..n {
            let mut z = triple.c[i] + e[i] * triple.b[i] + triple.a[i] * d[i];
            if me == 0 {
                z += e[i] * d[i];
            }
            prod.data[i] = z;
        }
        self.trunc(&prod, self.codec.frac_bits() + extra)
    }

    /// Matrix product at scale f: `x` is p x q, `y` is q x r. Two rounds.
    pub fn matmul(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor, MpcError> {
        if x.cols != y.rows {
            return Err(MpcError::ShapeMismatch);
        }
        let (p, q, r) = (x.rows, x.cols, y.cols);
        let triple = self.triples.matrix_triple(p, q, r)?;
        let mut words: Vec<u64> = Vec::with_capacity(p * q + q * r);
        words.extend((0..p * q).map(|i| (x.data[i] - triple.a[i]).0));
        words.extend((0..q * r).map(|i| (y.data[i] - triple.b[i]).0));
        let opened = self.exchange_sum(msg::DATA, &words)?;
        let (e, d) = opened.split_at(p * q);
        let eb = ring_matmul(e, &triple.b, p, q, r);
        let ad = ring_matmul(&triple.a, d, p, q, r);
        let mut prod = ShareTensor::zeros(p, r);
        for i in 0..p * r {
            prod.data[i] = triple.c[i] + eb[i] + ad[i];
        }
        if self.party() == 0 {
            let ed = ring_matmul(e, d, p, q, r);
            for i in 0..p * r {
                prod.data[i] += ed[i];
            }
        }
        self.trunc(&prod, self.codec.frac_bits())
    }

    /// Inner product of two equal-length vectors (column or row), a 1 x 1
    /// result. Two rounds.
    pub fn inner(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor, MpcError> {
        if x.numel() != y.numel() {
            return Err(MpcError::ShapeMismatch);
        }
        let row = ShareTensor::new(1, x.numel(), x.data.clone());
        let col = ShareTensor::new(y.numel(), 1, y.data.clone());
        self.matmul(&row, &col)
    }

    /// Shared scalar times shared tensor. Two rounds.
    pub fn mul_scalar(&mut self, s: &ShareTensor, x: &ShareTensor) -> Result<ShareTensor, MpcError> {
        if s.numel() != 1 {
            return Err(MpcError::ShapeMismatch);
        }
        let flat = ShareTensor::new(1, x.numel(), x.data.clone());
        let prod = self.matmul(s, &flat)?;
        Ok(self.track(ShareTensor::new(x.rows, x.cols, prod.data.clone())))
    }

    /// Stacks tensors with equal column counts into one tall tensor.
    pub fn concat_rows(&mut self, parts: &[&ShareTensor]) -> Result<ShareTensor, MpcError> {
        let cols = parts.first().ok_or(MpcError::ShapeMismatch)?.cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(MpcError::ShapeMismatch);
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Ok(self.track(ShareTensor::new(rows, cols, data)))
    }

    /// Column sums of a shared matrix, a local linear operation.
    pub fn column_sums(&mut self, x: &ShareTensor) -> Result<ShareTensor, MpcError> {
        let mut out = ShareTensor::zeros(1, x.cols);
        for i in 0..x.rows {
            for j in 0..x.cols {
                let cur = out.get(0, j);
                out.set(0, j, cur + x.get(i, j));
            }
        }
        Ok(self.track(out))
    }

    /// Subtracts a shared 1 x d row from every row of a shared matrix.
    pub fn sub_row_broadcast(
        &mut self,
        x: &ShareTensor,
        row: &ShareTensor,
    ) -> Result<ShareTensor, MpcError> {
        if row.rows != 1 || row.cols != x.cols {
            return Err(MpcError::ShapeMismatch);
        }
        let mut out = x.clone();
        for i in 0..x.rows {
            for j in 0..x.cols {
                let cur = out.get(i, j);
                out.set(i, j, cur - row.get(0, j));
            }
        }
        Ok(self.track(out))
    }

    /// Multiplies by an exact power of two. Non-negative exponents are free
    /// and exact; negative exponents cost one truncation round.
    pub fn scale_pow2(&mut self, x: &ShareTensor, exp: i32) -> Result<ShareTensor, MpcError> {
        if exp >= 0 {
            let data = x.data.iter().map(|e| e.wrapping_shl_value(exp as u32)).collect();
            Ok(self.track(ShareTensor::new(x.rows, x.cols, data)))
        } else {
            self.trunc(x, (-exp) as u32)
        }
    }

    /// Multiplies by a public real constant. The constant is lifted to an
    /// integer with extra precision bits, applied locally, and the surplus
    /// scale removed with one truncation. `out_mag_bits` must bound
    /// `log2 |value * c|` for every element.
    pub fn scale_public(
        &mut self,
        x: &ShareTensor,
        c: f64,
        out_mag_bits: u32,
    ) -> Result<ShareTensor, MpcError> {
        if c == 0.0 {
            return Ok(self.track(ShareTensor::zeros(x.rows, x.cols)));
        }
        let f = self.codec.frac_bits();
        // frexp: c = fr * 2^e with fr in [0.5, 1).
        let (_, e) = libm::frexp(c);
        // Integer multiplier wants ~21 significant bits; headroom caps the
        // surplus so the scale-(2f+s) intermediate stays below 2^61.
        let wanted = (21 - (f as i32 + e - 1)).max(0) as u32;
        let cap = (OFFSET_BITS as i32 - 1 - 2 * f as i32 - out_mag_bits as i32).max(0) as u32;
        let s = wanted.min(cap);
        let mult = libm::rint(c * libm::exp2((f + s) as f64)) as i64;
        let mult = RingElement(mult as u64);
        let data = x.data.iter().map(|&v| v * mult).collect();
        let scaled = ShareTensor::new(x.rows, x.cols, data);
        self.trunc(&scaled, f + s)
    }

    /// Shared 1/sqrt(x) for a scalar `x` in `[bound/100, bound]`. For wider
    /// domains use [`MpcEngine::inv_sqrt_bounded`] with an explicit floor.
    pub fn inv_sqrt(
        &mut self,
        x: &ShareTensor,
        bound: f64,
        rounds: u32,
    ) -> Result<ShareTensor, MpcError> {
        self.inv_sqrt_bounded(x, bound, bound / 100.0, rounds)
    }

    /// Shared 1/sqrt(x) for a scalar with public range `floor <= x <= bound`.
    ///
    /// Newton's method on w = x / 2^k with z converging to 1/sqrt(w):
    /// z <- z(3 - w z^2)/2, then 1/sqrt(x) = z * 2^(-k/2). The iteration
    /// count must cover the growth phase, about log_1.5(1/sqrt(w_min))
    /// steps, so loose bounds need more rounds.
    ///
    /// The floor sizes two public rescales: the argument is pre-shifted so
    /// the w z^2 intermediate fits the ring headroom, and z itself is kept
    /// scaled down by 2^j whenever its limit 2^(k/2)/sqrt(floor) could push
    /// z^2 past the headroom.
    pub fn inv_sqrt_bounded(
        &mut self,
        x: &ShareTensor,
        bound: f64,
        floor: f64,
        rounds: u32,
    ) -> Result<ShareTensor, MpcError> {
        if x.numel() != 1 {
            return Err(MpcError::ShapeMismatch);
        }
        assert!(bound > 0.0 && floor > 0.0 && floor <= bound);
        let mut k_total: u32 = 0;
        while libm::exp2(k_total as f64) < bound {
            k_total += 2;
        }
        // Pre-shift so scale-2f products of the argument stay small.
        let k = k_total.min(18);
        let pre = k_total - k;
        let xs = if pre > 0 { self.trunc(x, pre)? } else { x.clone() };
        // z never exceeds 2^(k_total/2)/sqrt(floor); keep its stored form
        // below ~2^10 so z^2 at scale 2f stays under 2^61.
        let z_max_log2 = k_total as f64 / 2.0 - 0.5 * libm::log2(floor);
        let j = (libm::ceil(z_max_log2) as i32 - 10).max(0) as u32;
        let init = Matrix::from_rows(&[&[libm::exp2(-(j as f64))]]);
        let mut z = self.constant(&init)?;
        for _ in 0..rounds {
            // q = (z 2^-j)^2, u = x' q, then w z^2 = u * 2^(2j - k).
            let q = self.mul(&z, &z)?;
            let u = self.mul(&xs, &q)?;
            let back = 2 * j as i32 - k as i32;
            let u = if back != 0 { self.scale_pow2(&u, back)? } else { u };
            let neg_u = self.neg(&u)?;
            let s = self.add_public_scalar(&neg_u, 3.0)?;
            z = self.mul_with_extra_shift(&z, &s, 1)?;
        }
        let out_shift = j as i32 - (k_total / 2) as i32;
        if out_shift != 0 {
            z = self.scale_pow2(&z, out_shift)?;
        }
        Ok(z)
    }

    /// Shared sqrt(x) = x * (1/sqrt(x)).
    pub fn sqrt(&mut self, x: &ShareTensor, bound: f64, rounds: u32) -> Result<ShareTensor, MpcError> {
        let inv = self.inv_sqrt(x, bound, rounds)?;
        self.mul(x, &inv)
    }

    /// Shared 1/x = (1/sqrt(x))^2 for positive x.
    pub fn recip(&mut self, x: &ShareTensor, bound: f64, rounds: u32) -> Result<ShareTensor, MpcError> {
        let inv = self.inv_sqrt(x, bound, rounds)?;
        self.mul(&inv, &inv)
    }
}
