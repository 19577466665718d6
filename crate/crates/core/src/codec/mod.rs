//! Bit encodings of interval evidence and the Reed–Solomon code used by the
//! fuzzy commitment.

pub mod gf;
pub mod rs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::Evidence;

pub use rs::{rs_decode, rs_encode, RsParams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("interval {index} = {value} ms outside encodable range 0..={max}")]
    OutOfRange { index: usize, value: u32, max: u64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("too many errors to decode")]
    DecodeFailure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Faithful,
    Vanilla,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodingParams {
    pub base_ms: u32,
    pub unary_len: u32,
    pub scheme: Scheme,
    pub vanilla_bits: u32,
}

impl Default for EncodingParams {
    fn default() -> Self {
        EncodingParams { base_ms: 10, unary_len: 310, scheme: Scheme::Faithful, vanilla_bits: 12 }
    }
}

impl EncodingParams {
    pub fn faithful(base_ms: u32, unary_len: u32) -> Self {
        EncodingParams { base_ms, unary_len, scheme: Scheme::Faithful, ..Default::default() }
    }

    pub fn vanilla(bits: u32) -> Self {
        EncodingParams { scheme: Scheme::Vanilla, vanilla_bits: bits, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        match self.scheme {
            Scheme::Faithful if self.base_ms == 0 || self.unary_len == 0 => {
                Err(CodecError::BadParams("base and unary length must be at least 1".into()))
            }
            Scheme::Vanilla if self.vanilla_bits == 0 || self.vanilla_bits > 32 => {
                Err(CodecError::BadParams(format!("vanilla_bits {} outside 1..=32", self.vanilla_bits)))
            }
            _ => Ok(()),
        }
    }

    /// Bits produced per interval.
    pub fn segment_len(&self) -> usize {
        match self.scheme {
            Scheme::Faithful => self.unary_len as usize,
            Scheme::Vanilla => self.vanilla_bits as usize,
        }
    }

    /// Largest encodable interval in milliseconds.
    pub fn max_value(&self) -> u64 {
        match self.scheme {
            Scheme::Faithful => self.unary_len as u64 * self.base_ms as u64 + self.base_ms as u64 - 1,
            Scheme::Vanilla => (1u64 << self.vanilla_bits) - 1,
        }
    }
}

/// A fixed-length bit string, one `bool` per bit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitEncoding {
    pub bits: Vec<bool>,
    pub segment_len: usize,
}

impl BitEncoding {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    /// Right-pads with zero bits to `len`.
    pub fn padded(&self, len: usize) -> BitEncoding {
        let mut bits = self.bits.clone();
        if bits.len() < len {
            bits.resize(len, false);
        }
        BitEncoding { bits, segment_len: self.segment_len }
    }

    pub fn xor(&self, other: &BitEncoding) -> Result<BitEncoding, CodecError> {
        if self.len() != other.len() {
            return Err(CodecError::LengthMismatch { left: self.len(), right: other.len() });
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| a ^ b).collect();
        Ok(BitEncoding { bits, segment_len: self.segment_len })
    }

    /// Packs MSB-first into bytes, zero-padding the final byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i))))
            .collect()
    }

    pub fn from_bytes(bytes: &[u8], bit_len: usize, segment_len: usize) -> Result<BitEncoding, CodecError> {
        if bytes.len() != bit_len.div_ceil(8) {
            return Err(CodecError::LengthMismatch { left: bytes.len(), right: bit_len.div_ceil(8) });
        }
        let bits = (0..bit_len).map(|i| bytes[i / 8] >> (7 - i % 8) & 1 == 1).collect();
        Ok(BitEncoding { bits, segment_len })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    /// Splits into `k`-bit symbols MSB-first; length must be a multiple of `k`.
    pub fn to_symbols(&self, k: u32) -> Result<Vec<u16>, CodecError> {
        let k = k as usize;
        if k == 0 || k > 16 || !self.len().is_multiple_of(k) {
            return Err(CodecError::BadParams(format!("{} bits do not split into {k}-bit symbols", self.len())));
        }
        Ok(self.bits.chunks(k).map(|c| c.iter().fold(0u16, |acc, &b| acc << 1 | b as u16)).collect())
    }

    pub fn from_symbols(symbols: &[u16], k: u32, segment_len: usize) -> BitEncoding {
        let mut bits = Vec::with_capacity(symbols.len() * k as usize);
        for &s in symbols {
            for i in (0..k).rev() {
                bits.push(s >> i & 1 == 1);
            }
        }
        BitEncoding { bits, segment_len }
    }
}

pub fn encode_faithful(e: &Evidence, p: &EncodingParams) -> Result<BitEncoding, CodecError> {
    if p.base_ms == 0 || p.unary_len == 0 {
        return Err(CodecError::BadParams("base and unary length must be at least 1".into()));
    }
    let l = p.unary_len as usize;
    let mut bits = Vec::with_capacity(l * e.len());
    for (index, &value) in e.intervals.iter().enumerate() {
        let ones = (value / p.base_ms) as usize;
        if ones > l {
            return Err(CodecError::OutOfRange { index, value, max: p.max_value() });
        }
        bits.extend(std::iter::repeat_n(true, ones));
        bits.extend(std::iter::repeat_n(false, l - ones));
    }
    Ok(BitEncoding { bits, segment_len: l })
}

pub fn encode_vanilla(e: &Evidence, p: &EncodingParams) -> Result<BitEncoding, CodecError> {
    let w = p.vanilla_bits;
    if w == 0 || w > 32 {
        return Err(CodecError::BadParams(format!("vanilla_bits {w} outside 1..=32")));
    }
    let max = (1u64 << w) - 1;
    let mut bits = Vec::with_capacity(w as usize * e.len());
    for (index, &value) in e.intervals.iter().enumerate() {
        if value as u64 > max {
            return Err(CodecError::OutOfRange { index, value, max });
        }
        for i in (0..w).rev() {
            bits.push(value >> i & 1 == 1);
        }
    }
    Ok(BitEncoding { bits, segment_len: w as usize })
}

/// Encodes with whichever scheme `p` selects.
pub fn encode(e: &Evidence, p: &EncodingParams) -> Result<BitEncoding, CodecError> {
    match p.scheme {
        Scheme::Faithful => encode_faithful(e, p),
        Scheme::Vanilla => encode_vanilla(e, p),
    }
}

pub fn hamming(a: &BitEncoding, b: &BitEncoding) -> Result<usize, CodecError> {
    if a.len() != b.len() {
        return Err(CodecError::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(a.bits.iter().zip(&b.bits).filter(|(x, y)| x != y).count())
}

/// Chooses a code for `bit_len` encoded bits correcting `thr` symbols: the
/// smallest symbol width ≥ `min_symbol_bits` whose field holds the codeword.
pub fn rs_params_for(bit_len: usize, thr: usize, min_symbol_bits: u32) -> Result<RsParams, CodecError> {
    for k in min_symbol_bits.max(gf::MIN_BITS)..=gf::MAX_BITS {
        let n = bit_len.div_ceil(k as usize);
        if n < (1usize << k) {
            if n <= 2 * thr {
                return Err(CodecError::BadParams(format!(
                    "{bit_len} bits give {n} symbols, too few to correct {thr}"
                )));
            }
            return RsParams::new(k, n - 2 * thr, n);
        }
    }
    Err(CodecError::BadParams(format!("{bit_len} bits exceed the largest supported code")))
}
