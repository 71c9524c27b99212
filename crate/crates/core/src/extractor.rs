//! Toeplitz-hashing randomness extractor (leftover-hash construction) and
//! the certified extraction pipeline tying an entropy budget to an output
//! length.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chsh::DiBudget;
use crate::error::{Error, Result};
use crate::events::EventRecord;
use crate::witness::SdiBudget;

/// A packed bit vector. Bit `i` of the logical string is bit `i % 64` of
/// `words[i / 64]` (LSB-first within each word); bits beyond `len` are
/// kept zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut s = BitString::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b != 0 {
                s.set(i, true);
            }
        }
        s
    }

    /// Interpret bytes MSB-first: bit 0 of the string is the most
    /// significant bit of the first byte.
    pub fn from_bytes_msb(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() * 8 < len {
            return Err(Error::SeedTooShort {
                needed: len,
                got: bytes.len() * 8,
            });
        }
        let mut s = BitString::zeros(len);
        for i in 0..len {
            if bytes[i / 8] >> (7 - i % 8) & 1 == 1 {
                s.set(i, true);
            }
        }
        Ok(s)
    }

    /// Pack to bytes MSB-first (inverse of `from_bytes_msb`); the final
    /// partial byte, if any, is zero-padded at the low end.
    pub fn to_bytes_msb(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; self.len.div_ceil(8)];
        for i in 0..self.len {
            if self.get(i) {
                bytes[i / 8] |= 1 << (7 - i % 8);
            }
        }
        bytes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn iter_bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// XOR with another string of the same length.
    pub fn xor_assign(&mut self, other: &BitString) {
        assert_eq!(self.len, other.len, "length mismatch in xor");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// The word containing bits [start, start+64) of this string, reading
    /// zeros beyond the end.
    fn window_word(&self, start: usize) -> u64 {
        let idx = start / 64;
        let sh = start % 64;
        let lo = self.words.get(idx).copied().unwrap_or(0) >> sh;
        if sh == 0 {
            lo
        } else {
            lo | self.words.get(idx + 1).copied().unwrap_or(0) << (64 - sh)
        }
    }
}

/// Raw-bit serialization of an event log: two bits per event, Alice's
/// outcome then Bob's, in trial order.
pub fn events_to_bits(events: &[EventRecord]) -> BitString {
    let mut s = BitString::zeros(events.len() * 2);
    for (i, ev) in events.iter().enumerate() {
        if ev.a == 1 {
            s.set(2 * i, true);
        }
        if ev.b == 1 {
            s.set(2 * i + 1, true);
        }
    }
    s
}

/// Leftover-hash output length: m = ⌊h_total − 2·log₂(1/ε)⌋, floored at 0.
pub fn output_length(h_total: f64, eps_hash: f64) -> Result<usize> {
    if !(eps_hash > 0.0 && eps_hash < 1.0) {
        return Err(Error::domain(format!(
            "hashing error parameter {eps_hash} outside (0,1)"
        )));
    }
    if !h_total.is_finite() || h_total < 0.0 {
        return Err(Error::domain(format!("entropy budget {h_total} invalid")));
    }
    let m = (h_total - 2.0 * (1.0 / eps_hash).log2()).floor();
    Ok(if m > 0.0 { m as usize } else { 0 })
}

/// Number of seed bits a Toeplitz matrix with `n_in` columns and `m_out`
/// rows consumes.
pub fn seed_bits_needed(n_in: usize, m_out: usize) -> usize {
    if m_out == 0 {
        0
    } else {
        n_in + m_out - 1
    }
}

/// Apply the m_out × n_in Toeplitz matrix defined by `seed` to `input`
/// over GF(2). The seed's first m_out bits fill the first column top to
/// bottom; the remaining bits continue the first row left to right, so
/// entry (i, j) is seed[m_out−1−i+j] read against the reversed-column /
/// forward-row layout.
pub fn toeplitz_extract(input: &BitString, seed: &BitString, m_out: usize) -> Result<BitString> {
    let n_in = input.len();
    if m_out == 0 {
        return Ok(BitString::zeros(0));
    }
    if m_out > n_in {
        return Err(Error::domain(format!(
            "output length {m_out} exceeds input length {n_in}"
        )));
    }
    let needed = seed_bits_needed(n_in, m_out);
    if seed.len() != needed {
        return Err(Error::SeedTooShort {
            needed,
            got: seed.len(),
        });
    }
    // Diagonal-constant layout: row i of the matrix is the length-n window
    // of u starting at offset m_out−1−i, where u is the first column
    // reversed followed by the rest of the first row.
    let mut u = BitString::zeros(needed);
    for i in 0..m_out {
        if seed.get(i) {
            u.set(m_out - 1 - i, true);
        }
    }
    for i in m_out..needed {
        if seed.get(i) {
            u.set(i, true);
        }
    }
    let n_words = n_in.div_ceil(64);
    let mut out = BitString::zeros(m_out);
    for i in 0..m_out {
        let start = m_out - 1 - i;
        let mut acc = 0u64;
        for w in 0..n_words {
            acc ^= u.window_word(start + 64 * w) & input.words[w];
        }
        if acc.count_ones() % 2 == 1 {
            out.set(i, true);
        }
    }
    Ok(out)
}

/// Where the extractor seed comes from.
pub enum SeedSource {
    /// Fixed bytes, consumed MSB-first.
    Bytes(Vec<u8>),
    /// Operating-system randomness.
    Os,
}

impl SeedSource {
    /// Produce exactly `bits` seed bits, plus the raw bytes they came from
    /// (for fingerprinting).
    pub fn take(&self, bits: usize) -> Result<(BitString, Vec<u8>)> {
        let bytes = match self {
            SeedSource::Bytes(b) => b.clone(),
            SeedSource::Os => {
                let mut buf = vec![0u8; bits.div_ceil(8)];
                rand::rngs::OsRng.fill_bytes(&mut buf);
                buf
            }
        };
        let s = BitString::from_bytes_msb(&bytes, bits)?;
        Ok((s, bytes))
    }
}

/// Which certification pipeline produced the entropy budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    DeviceIndependent,
    SemiDeviceIndependent,
}

/// Certified total smooth min-entropy carried into extraction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EntropyBudget {
    pub pipeline: Pipeline,
    pub rate_per_event: f64,
    pub h_total: f64,
    pub n_events: u64,
    pub confidence: f64,
}

impl From<&DiBudget> for EntropyBudget {
    fn from(b: &DiBudget) -> Self {
        EntropyBudget {
            pipeline: Pipeline::DeviceIndependent,
            rate_per_event: b.rate_per_event,
            h_total: b.total_bits as f64,
            n_events: b.n_total,
            confidence: b.confidence,
        }
    }
}

impl From<&SdiBudget> for EntropyBudget {
    fn from(b: &SdiBudget) -> Self {
        EntropyBudget {
            pipeline: Pipeline::SemiDeviceIndependent,
            rate_per_event: b.rate_per_event,
            h_total: b.total_min_entropy_bits,
            n_events: b.n_total,
            confidence: b.confidence,
        }
    }
}

/// Record of a completed extraction run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub pipeline: Pipeline,
    pub n_in: usize,
    pub h_total: f64,
    pub eps_hash: f64,
    pub m_out: usize,
    pub seed_bits: usize,
    pub seed_sha256: String,
    pub output_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// End-to-end extraction: budget → output length → Toeplitz hash, with a
/// report fingerprinting seed and output.
pub fn extract_certified(
    events: &[EventRecord],
    budget: &EntropyBudget,
    eps_hash: f64,
    seed: &SeedSource,
) -> Result<(BitString, ExtractionReport)> {
    let input = events_to_bits(events);
    let mut m_out = output_length(budget.h_total, eps_hash)?;
    let mut note = None;
    if m_out > input.len() {
        // Budgets cannot certify more bits than are present; cap defensively.
        note = Some(format!(
            "output capped at input length {} (budget allowed {m_out})",
            input.len()
        ));
        m_out = input.len();
    }
    if m_out == 0 {
        let report = ExtractionReport {
            pipeline: budget.pipeline,
            n_in: input.len(),
            h_total: budget.h_total,
            eps_hash,
            m_out: 0,
            seed_bits: 0,
            seed_sha256: sha256_hex(&[]),
            output_sha256: sha256_hex(&[]),
            note: Some("entropy budget too small for any output".into()),
        };
        return Ok((BitString::zeros(0), report));
    }
    let needed = seed_bits_needed(input.len(), m_out);
    let (seed_bits, seed_bytes) = seed.take(needed)?;
    let output = toeplitz_extract(&input, &seed_bits, m_out)?;
    let report = ExtractionReport {
        pipeline: budget.pipeline,
        n_in: input.len(),
        h_total: budget.h_total,
        eps_hash,
        m_out,
        seed_bits: needed,
        seed_sha256: sha256_hex(&seed_bytes),
        output_sha256: sha256_hex(&output.to_bytes_msb()),
        note,
    };
    Ok((output, report))
}
