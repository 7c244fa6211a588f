//! Toeplitz-hash randomness extraction and packed bit strings.
//!
//! An `m × n` Toeplitz matrix is fixed by `n + m - 1` seed bits: the first
//! column is `s[0..m]` (top to bottom) and the rest of the first row is
//! `s[m..n+m-1]` (left to right), so
//!
//! ```text
//! T[i][j] = s[i - j]          if i >= j
//!         = s[m - 1 + j - i]  otherwise
//! ```
//!
//! and the output is `T·x` over GF(2). The seed `1, 0, 0, …` with `m = n`
//! gives the identity.
//!
//! Packed file format: an 8-byte big-endian bit count followed by
//! `ceil(count / 8)` bytes, most significant bit first within each byte, with
//! unused trailing bits zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bits packed into 64-bit words, bit `i` at position `i % 64` of word
/// `i / 64`. Unused high bits of the last word are kept zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitString { words: Vec::with_capacity(bits.div_ceil(64)), len: 0 }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut s = BitString::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            s.set(i, b != 0);
        }
        s
    }

    /// Parses a string of `'0'`/`'1'` characters; whitespace is ignored.
    pub fn from_binary_str(text: &str) -> Result<Self> {
        let bits = text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Format(format!("unexpected character {other:?} in bit string"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(BitString::from_bits(&bits))
    }

    pub fn to_binary_string(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, value: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    pub fn append(&mut self, other: &BitString) {
        if self.len.is_multiple_of(64) {
            self.words.extend_from_slice(&other.words);
            self.len += other.len;
        } else {
            for b in other.iter() {
                self.push(b);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// First `len` bits.
    pub fn truncated(&self, len: usize) -> BitString {
        assert!(len <= self.len);
        let mut words = self.words[..len.div_ceil(64)].to_vec();
        if !len.is_multiple_of(64) {
            *words.last_mut().unwrap() &= (1u64 << (len % 64)) - 1;
        }
        BitString { words, len }
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.len != other.len {
            return Err(Error::LengthMismatch(format!("xor of {} and {} bits", self.len, other.len)));
        }
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Ok(BitString { words, len: self.len })
    }

    /// Bits packed most significant first; trailing bits of the last byte are
    /// zero.
    pub fn to_bytes_msb(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len.div_ceil(8)];
        for i in 0..self.len {
            if self.get(i) {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    /// First `len` bits of `bytes`, most significant bit first.
    pub fn from_bytes_msb(bytes: &[u8], len: usize) -> Result<BitString> {
        if len > bytes.len() * 8 {
            return Err(Error::LengthMismatch(format!(
                "{len} bits requested from {} bytes",
                bytes.len()
            )));
        }
        let mut s = BitString::zeros(len);
        for i in 0..len {
            s.set(i, bytes[i / 8] & (0x80 >> (i % 8)) != 0);
        }
        Ok(s)
    }

    /// Hex digits read as bytes, most significant bit first.
    pub fn from_hex(text: &str) -> Result<BitString> {
        let clean: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let clean = clean.strip_prefix("0x").unwrap_or(&clean);
        if !clean.len().is_multiple_of(2) {
            return Err(Error::Format("hex string has an odd number of digits".into()));
        }
        let bytes = (0..clean.len())
            .step_by(2)
            .map(|i| {
                u8::from_str_radix(&clean[i..i + 2], 16)
                    .map_err(|_| Error::Format(format!("invalid hex digits {:?}", &clean[i..i + 2])))
            })
            .collect::<Result<Vec<u8>>>()?;
        BitString::from_bytes_msb(&bytes, bytes.len() * 8)
    }

    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = (self.len as u64).to_be_bytes().to_vec();
        out.extend(self.to_bytes_msb());
        out
    }

    pub fn from_packed(data: &[u8]) -> Result<BitString> {
        if data.len() < 8 {
            return Err(Error::Format("packed data shorter than its 8-byte header".into()));
        }
        let len = u64::from_be_bytes(data[..8].try_into().unwrap());
        let body = &data[8..];
        let len = usize::try_from(len).map_err(|_| Error::Format(format!("bit count {len} too large")))?;
        if body.len() != len.div_ceil(8) {
            return Err(Error::Format(format!(
                "header declares {len} bits but body has {} bytes",
                body.len()
            )));
        }
        BitString::from_bytes_msb(body, len)
    }

    /// 64 bits starting at `offset`, zero-filled past the end.
    fn window(&self, offset: usize) -> u64 {
        let (q, r) = (offset / 64, offset % 64);
        let lo = self.words.get(q).copied().unwrap_or(0);
        if r == 0 {
            lo
        } else {
            let hi = self.words.get(q + 1).copied().unwrap_or(0);
            (lo >> r) | (hi << (64 - r))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub input_length: usize,
    pub output_length: usize,
}

impl ExtractorSpec {
    pub fn new(input_length: usize, output_length: usize) -> Result<Self> {
        let spec = ExtractorSpec { input_length, output_length };
        spec.validate()?;
        Ok(spec)
    }

    pub fn seed_length(&self) -> usize {
        (self.input_length + self.output_length).saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_length > self.input_length {
            return Err(Error::Config(format!(
                "output length {} exceeds input length {}",
                self.output_length, self.input_length
            )));
        }
        Ok(())
    }
}

const ROW_BLOCK: usize = 256;

/// `T·raw` for the Toeplitz matrix defined by `seed`.
pub fn toeplitz_extract(raw: &BitString, seed: &BitString, spec: &ExtractorSpec) -> Result<BitString> {
    spec.validate()?;
    if raw.len() != spec.input_length {
        return Err(Error::LengthMismatch(format!(
            "input has {} bits, spec expects {}",
            raw.len(),
            spec.input_length
        )));
    }
    if seed.len() != spec.seed_length() {
        return Err(Error::LengthMismatch(format!(
            "seed has {} bits, spec expects {}",
            seed.len(),
            spec.seed_length()
        )));
    }
    let m = spec.output_length;
    if m == 0 {
        return Ok(BitString::zeros(0));
    }
    // Row i of T is the window u[m-1-i .. m-1-i+n] of u, where u is the seed
    // with its first m bits reversed.
    let mut u = BitString::zeros(seed.len());
    for k in 0..seed.len() {
        u.set(k, if k < m { seed.get(m - 1 - k) } else { seed.get(k) });
    }
    let row = |i: usize| -> bool {
        let offset = m - 1 - i;
        let mut acc = 0u64;
        for (w, &x) in raw.words.iter().enumerate() {
            acc ^= u.window(offset + 64 * w) & x;
        }
        acc.count_ones() % 2 == 1
    };
    let blocks: Vec<Vec<bool>> = (0..m.div_ceil(ROW_BLOCK))
        .into_par_iter()
        .map(|b| (b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(m)).map(row).collect())
        .collect();
    let mut out = BitString::with_capacity(m);
    for b in blocks.into_iter().flatten() {
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Matrix-vector product built entry by entry from the definition.
    fn naive(raw: &BitString, seed: &BitString, m: usize) -> BitString {
        let n = raw.len();
        let entry = |i: usize, j: usize| if i >= j { seed.get(i - j) } else { seed.get(m - 1 + j - i) };
        let bits: Vec<u8> = (0..m)
            .map(|i| (0..n).filter(|&j| entry(i, j) && raw.get(j)).count() as u8 % 2)
            .collect();
        BitString::from_bits(&bits)
    }

    #[test]
    fn bitstring_basics() {
        let mut s = BitString::default();
        for i in 0..130 {
            s.push(i % 3 == 0);
        }
        assert_eq!(s.len(), 130);
        assert_eq!(s.count_ones(), 44);
        assert!(s.get(129) && !s.get(128));
        let t = s.truncated(65);
        assert_eq!(t.len(), 65);
        assert_eq!(t.count_ones(), 22);
        let mut u = t.clone();
        u.append(&s);
        assert_eq!(u.len(), 195);
        assert_eq!(u.count_ones(), 66);
        assert_eq!(BitString::from_binary_str("1011").unwrap().to_binary_string(), "1011");
        assert!(BitString::from_binary_str("10x1").is_err());
    }

    #[test]
    fn byte_and_packed_formats() {
        let s = BitString::from_binary_str("1000 0001 101").unwrap();
        assert_eq!(s.to_bytes_msb(), vec![0x81, 0xA0]);
        let packed = s.to_packed();
        assert_eq!(&packed[..8], &[0, 0, 0, 0, 0, 0, 0, 11]);
        assert_eq!(BitString::from_packed(&packed).unwrap(), s);
        assert!(BitString::from_packed(&packed[..9]).is_err());
        assert!(BitString::from_packed(&[0; 4]).is_err());
        assert_eq!(BitString::from_hex("81a0").unwrap().truncated(11), s);
        assert_eq!(BitString::from_hex("0x81A0").unwrap().len(), 16);
        assert!(BitString::from_hex("8").is_err());
        assert!(BitString::from_hex("zz").is_err());
    }

    #[test]
    fn empty_output() {
        let spec = ExtractorSpec::new(5, 0).unwrap();
        let out = toeplitz_extract(&BitString::zeros(5), &BitString::zeros(4), &spec).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn identity_seed() {
        let n = 70;
        let spec = ExtractorSpec::new(n, n).unwrap();
        let mut seed = BitString::zeros(spec.seed_length());
        seed.set(0, true);
        let raw = BitString::from_bits(&(0..n).map(|i| (i * 7 % 5 == 1) as u8).collect::<Vec<_>>());
        assert_eq!(toeplitz_extract(&raw, &seed, &spec).unwrap(), raw);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let spec = ExtractorSpec::new(8, 4).unwrap();
        assert_eq!(spec.seed_length(), 11);
        assert!(toeplitz_extract(&BitString::zeros(7), &BitString::zeros(11), &spec).is_err());
        assert!(toeplitz_extract(&BitString::zeros(8), &BitString::zeros(10), &spec).is_err());
        assert!(ExtractorSpec::new(4, 8).is_err());
    }

    #[test]
    fn exhaustive_linearity_small() {
        let spec = ExtractorSpec::new(6, 3).unwrap();
        for s in 0..(1u32 << spec.seed_length()) {
            let seed = BitString::from_bits(&(0..spec.seed_length()).map(|k| (s >> k & 1) as u8).collect::<Vec<_>>());
            let table: Vec<BitString> = (0..64u32)
                .map(|x| {
                    let raw = BitString::from_bits(&(0..6).map(|k| (x >> k & 1) as u8).collect::<Vec<_>>());
                    toeplitz_extract(&raw, &seed, &spec).unwrap()
                })
                .collect();
            for x in 0..64 {
                for y in 0..64 {
                    assert_eq!(table[x ^ y], table[x].xor(&table[y]).unwrap());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn matches_naive_product(n in 1usize..300, frac in 0.0f64..=1.0, bits in proptest::collection::vec(any::<bool>(), 900)) {
            let m = ((n as f64) * frac) as usize;
            let spec = ExtractorSpec::new(n, m).unwrap();
            let raw = BitString::from_bits(&bits[..n].iter().map(|&b| b as u8).collect::<Vec<_>>());
            let seed = BitString::from_bits(&bits[n..n + spec.seed_length()].iter().map(|&b| b as u8).collect::<Vec<_>>());
            let fast = toeplitz_extract(&raw, &seed, &spec).unwrap();
            prop_assert_eq!(fast, naive(&raw, &seed, m));
        }
    }
}
