//! Binary activation patterns.
//!
//! A latent ReLU vector of length `d` is reduced to a `d`-bit pattern by
//! zeroing its `floor(d/2)` smallest entries and marking every surviving
//! strictly positive entry with a 1. Bits are packed little-endian into
//! `u64` words; bits beyond `d` in the last word are always zero.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const PATTERN_MAGIC: &[u8; 4] = b"NAPB";
pub const PATTERN_VERSION: u8 = 1;

pub(crate) const fn words_for(dim: usize) -> usize {
    dim.div_ceil(64)
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryPattern {
    dim: usize,
    words: Box<[u64]>,
}

impl BinaryPattern {
    /// All-zero pattern of the given dimension.
    pub fn zeros(dim: usize) -> Self {
        BinaryPattern {
            dim,
            words: vec![0; words_for(dim)].into_boxed_slice(),
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut dim = 0;
        for bit in bits {
            if dim % 64 == 0 {
                words.push(0);
            }
            if bit {
                words[dim / 64] |= 1 << (dim % 64);
            }
            dim += 1;
        }
        BinaryPattern {
            dim,
            words: words.into_boxed_slice(),
        }
    }

    /// Builds a pattern from packed words, rejecting set pad bits.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != words_for(dim) {
            return Err(Error::DimensionMismatch {
                expected: words_for(dim),
                found: words.len(),
            });
        }
        if !dim.is_multiple_of(64) {
            if let Some(last) = words.last() {
                if last >> (dim % 64) != 0 {
                    return Err(Error::Schema(format!(
                        "pattern of dim {dim} has bits set beyond its dimension"
                    )));
                }
            }
        }
        Ok(BinaryPattern {
            dim,
            words: words.into_boxed_slice(),
        })
    }

    /// Parses a string of `0`/`1` characters, bit 0 first.
    pub fn parse_bits(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BinaryPattern::from_bits)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, j: usize) -> bool {
        assert!(j < self.dim, "bit {j} out of range for dim {}", self.dim);
        self.words[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, j: usize, value: bool) {
        assert!(j < self.dim, "bit {j} out of range for dim {}", self.dim);
        if value {
            self.words[j / 64] |= 1 << (j % 64);
        } else {
            self.words[j / 64] &= !(1 << (j % 64));
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn iter_bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.dim).map(|j| self.bit(j))
    }

    /// Lowercase hex of the packed words, word 0 first, each word as 16
    /// big-endian hex digits.
    pub fn to_hex(&self) -> String {
        self.words.iter().map(|w| format!("{w:016x}")).collect()
    }

    pub fn from_hex(dim: usize, hex: &str) -> Result<Self> {
        if hex.len() != words_for(dim) * 16 {
            return Err(Error::Schema(format!(
                "hex pattern has {} digits, expected {} for dim {dim}",
                hex.len(),
                words_for(dim) * 16
            )));
        }
        let words = (0..words_for(dim))
            .map(|i| {
                u64::from_str_radix(&hex[i * 16..(i + 1) * 16], 16)
                    .map_err(|e| Error::Schema(format!("hex pattern: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        BinaryPattern::from_words(dim, words)
    }
}

impl fmt::Display for BinaryPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter_bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BinaryPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryPattern({self})")
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty("activation vector"));
    }
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("activation {j} is not finite")));
    }
    Ok(())
}

/// Zeroes the `floor(d/2)` smallest entries, keeping the rest in place.
/// Among equal values at the cut, lower indices are kept first.
pub fn clip_top_half(values: &[f64]) -> Result<Vec<f64>> {
    check_values(values)?;
    let d = values.len();
    let keep = d - d / 2;
    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort: equal values stay in index order.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut out = vec![0.0; d];
    for &j in &order[..keep] {
        out[j] = values[j];
    }
    Ok(out)
}

/// Bit `j` is set iff `clipped[j] > 0`.
pub fn binarize(clipped: &[f64]) -> Result<BinaryPattern> {
    if clipped.is_empty() {
        return Err(Error::Empty("activation vector"));
    }
    Ok(BinaryPattern::from_bits(clipped.iter().map(|&v| v > 0.0)))
}

pub fn extract_pattern(values: &[f64]) -> Result<BinaryPattern> {
    binarize(&clip_top_half(values)?)
}

pub fn hamming(p: &BinaryPattern, q: &BinaryPattern) -> Result<u32> {
    if p.dim != q.dim {
        return Err(Error::DimensionMismatch {
            expected: p.dim,
            found: q.dim,
        });
    }
    Ok(hamming_words(&p.words, &q.words))
}

#[inline]
pub(crate) fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Encodes patterns in the `NAPB` cache format: magic, version `u8`,
/// dim `u32`, count `u64`, then `ceil(d/64)` little-endian `u64` words each.
pub fn encode_patterns(dim: usize, patterns: &[BinaryPattern]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(17 + patterns.len() * words_for(dim) * 8);
    out.extend_from_slice(PATTERN_MAGIC);
    out.push(PATTERN_VERSION);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(patterns.len() as u64).to_le_bytes());
    for p in patterns {
        if p.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim,
            });
        }
        for w in p.words.iter() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a `NAPB` cache into its dimension and patterns.
pub fn decode_patterns(bytes: &[u8]) -> Result<(usize, Vec<BinaryPattern>)> {
    if bytes.len() < 17 || &bytes[..4] != PATTERN_MAGIC {
        return Err(Error::Schema("missing NAPB header".into()));
    }
    if bytes[4] != PATTERN_VERSION {
        return Err(Error::Schema(format!("unsupported pattern version {}", bytes[4])));
    }
    let dim = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    let n_words = words_for(dim);
    let body = &bytes[17..];
    let expected = (count as u128) * (n_words as u128) * 8;
    if body.len() as u128 != expected {
        return Err(Error::Schema(format!(
            "pattern body is {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let patterns = if n_words == 0 {
        (0..count).map(|_| BinaryPattern::zeros(dim)).collect()
    } else {
        body.chunks_exact(n_words * 8)
            .map(|chunk| {
                let words = chunk
                    .chunks_exact(8)
                    .map(|w| u64::from_le_bytes(w.try_into().unwrap()))
                    .collect();
                BinaryPattern::from_words(dim, words)
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok((dim, patterns))
}

pub fn write_pattern_file(path: &Path, dim: usize, patterns: &[BinaryPattern]) -> Result<()> {
    let bytes = encode_patterns(dim, patterns)?;
    std::fs::write(path, bytes).map_err(|e| Error::from(e).in_file(path))
}

pub fn read_pattern_file(path: &Path) -> Result<(usize, Vec<BinaryPattern>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_patterns(&bytes).map_err(|e| e.in_file(path))
}
