//! Systematic Reed–Solomon codes over GF(2^k) with consecutive generator
//! roots α^0 … α^(n−m−1), decoded by Berlekamp–Massey, Chien search and
//! Forney's formula.

use serde::{Deserialize, Serialize};

use super::gf::{Field, MAX_BITS, MIN_BITS};
use super::CodecError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RsParams {
    pub symbol_bits: u32,
    pub word_len: usize,
    pub code_len: usize,
}

impl RsParams {
    pub fn new(symbol_bits: u32, word_len: usize, code_len: usize) -> Result<Self, CodecError> {
        let p = RsParams { symbol_bits, word_len, code_len };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if !(MIN_BITS..=MAX_BITS).contains(&self.symbol_bits) {
            return Err(CodecError::BadParams(format!(
                "symbol_bits {} outside {MIN_BITS}..={MAX_BITS}",
                self.symbol_bits
            )));
        }
        if self.word_len == 0 || self.code_len < self.word_len {
            return Err(CodecError::BadParams(format!(
                "need 1 <= m <= n, got m={} n={}",
                self.word_len, self.code_len
            )));
        }
        if self.code_len >= 1usize << self.symbol_bits {
            return Err(CodecError::BadParams(format!(
                "code length {} does not fit GF(2^{})",
                self.code_len, self.symbol_bits
            )));
        }
        Ok(())
    }

    /// Correctable symbol errors ⌊(n − m)/2⌋.
    pub fn thr(&self) -> usize {
        (self.code_len - self.word_len) / 2
    }

    pub fn parity_len(&self) -> usize {
        self.code_len - self.word_len
    }

    fn field(&self) -> &'static Field {
        Field::get(self.symbol_bits)
    }

    fn check_symbols(&self, s: &[u16]) -> Result<(), CodecError> {
        let limit = 1u32 << self.symbol_bits;
        match s.iter().position(|&x| x as u32 >= limit) {
            Some(i) => Err(CodecError::BadParams(format!("symbol {i} exceeds {} bits", self.symbol_bits))),
            None => Ok(()),
        }
    }
}

/// Generator polynomial ∏ (x − α^i), highest degree first, monic.
pub fn generator_poly(f: &Field, parity: usize) -> Vec<u16> {
    let mut g = vec![1u16];
    for i in 0..parity {
        let root = f.alpha_pow(i as i64);
        let mut next = vec![0u16; g.len() + 1];
        for (j, &c) in g.iter().enumerate() {
            next[j] ^= c;
            next[j + 1] ^= f.mul(c, root);
        }
        g = next;
    }
    g
}

pub fn rs_encode(word: &[u16], p: &RsParams) -> Result<Vec<u16>, CodecError> {
    p.validate()?;
    if word.len() != p.word_len {
        return Err(CodecError::LengthMismatch { left: word.len(), right: p.word_len });
    }
    p.check_symbols(word)?;
    let f = p.field();
    let nsym = p.parity_len();
    let g = generator_poly(f, nsym);
    let mut parity = vec![0u16; nsym];
    for &s in word {
        let fb = s ^ parity.first().copied().unwrap_or(0);
        if nsym > 0 {
            parity.rotate_left(1);
            parity[nsym - 1] = 0;
        }
        if fb != 0 {
            for (slot, &gc) in parity.iter_mut().zip(&g[1..]) {
                *slot ^= f.mul(fb, gc);
            }
        }
    }
    let mut out = word.to_vec();
    out.extend(parity);
    Ok(out)
}

/// Syndromes S_i = r(α^i) for the received word, highest degree first.
fn syndromes(f: &Field, received: &[u16], nsym: usize) -> Vec<u16> {
    (0..nsym).map(|i| f.eval_high_first(received, f.alpha_pow(i as i64))).collect()
}

/// Berlekamp–Massey; returns the error locator Λ, lowest degree first.
fn error_locator(f: &Field, s: &[u16]) -> Vec<u16> {
    let mut c = vec![1u16];
    let mut b = vec![1u16];
    let mut l = 0usize;
    let mut shift = 1usize;
    let mut b_disc = 1u16;
    for n in 0..s.len() {
        let mut d = s[n];
        for i in 1..=l.min(c.len() - 1) {
            d ^= f.mul(c[i], s[n - i]);
        }
        if d == 0 {
            shift += 1;
            continue;
        }
        let coef = f.div(d, b_disc);
        let mut next = c.clone();
        if next.len() < b.len() + shift {
            next.resize(b.len() + shift, 0);
        }
        for (i, &bc) in b.iter().enumerate() {
            next[i + shift] ^= f.mul(coef, bc);
        }
        if 2 * l <= n {
            b = std::mem::replace(&mut c, next);
            l = n + 1 - l;
            b_disc = d;
            shift = 1;
        } else {
            c = next;
            shift += 1;
        }
    }
    c.truncate(l + 1);
    c
}

pub fn rs_decode(codeword: &[u16], p: &RsParams) -> Result<Vec<u16>, CodecError> {
    p.validate()?;
    if codeword.len() != p.code_len {
        return Err(CodecError::LengthMismatch { left: codeword.len(), right: p.code_len });
    }
    p.check_symbols(codeword)?;
    let f = p.field();
    let n = p.code_len;
    let nsym = p.parity_len();
    let s = syndromes(f, codeword, nsym);
    if s.iter().all(|&x| x == 0) {
        return Ok(codeword[..p.word_len].to_vec());
    }
    let lambda = error_locator(f, &s);
    let errs = lambda.len() - 1;
    if errs == 0 || errs > p.thr() {
        return Err(CodecError::DecodeFailure);
    }
    // Chien search over degrees 0..n; index = n − 1 − degree.
    let mut degrees = Vec::with_capacity(errs);
    for deg in 0..n {
        if f.eval_low_first(&lambda, f.alpha_pow(-(deg as i64))) == 0 {
            degrees.push(deg);
        }
    }
    if degrees.len() != errs {
        return Err(CodecError::DecodeFailure);
    }
    // Ω(x) = S(x)Λ(x) mod x^nsym
    let mut omega = vec![0u16; nsym];
    for (i, &si) in s.iter().enumerate() {
        for (j, &lj) in lambda.iter().enumerate() {
            if i + j < nsym {
                omega[i + j] ^= f.mul(si, lj);
            }
        }
    }
    // Formal derivative: only odd powers survive in characteristic 2.
    let dlambda: Vec<u16> = (1..lambda.len()).map(|i| if i % 2 == 1 { lambda[i] } else { 0 }).collect();
    let mut fixed = codeword.to_vec();
    for &deg in &degrees {
        let x = f.alpha_pow(deg as i64);
        let x_inv = f.inv(x);
        let denom = f.eval_low_first(&dlambda, x_inv);
        if denom == 0 {
            return Err(CodecError::DecodeFailure);
        }
        let magnitude = f.div(f.mul(x, f.eval_low_first(&omega, x_inv)), denom);
        fixed[n - 1 - deg] ^= magnitude;
    }
    if syndromes(f, &fixed, nsym).iter().any(|&x| x != 0) {
        return Err(CodecError::DecodeFailure);
    }
    Ok(fixed[..p.word_len].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym_distance(a: &[u16], b: &[u16]) -> usize {
        a.iter().zip(b).filter(|(x, y)| x != y).count()
    }

    fn corrupt(rng: &mut ChaCha8Rng, cw: &mut [u16], count: usize, bits: u32) {
        let mut idx: Vec<usize> = (0..cw.len()).collect();
        for i in 0..count {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
            let flip = rng.gen_range(1..(1u32 << bits)) as u16;
            cw[idx[i]] ^= flip;
        }
    }

    #[test]
    fn param_validation() {
        assert!(RsParams::new(8, 16, 32).is_ok());
        assert!(RsParams::new(8, 16, 256).is_err());
        assert!(RsParams::new(8, 33, 32).is_err());
        assert!(RsParams::new(2, 1, 3).is_err());
        assert_eq!(RsParams::new(8, 16, 32).unwrap().thr(), 8);
        assert_eq!(RsParams::new(4, 3, 7).unwrap().thr(), 2);
    }

    #[test]
    fn degenerate_code_is_identity() {
        let p = RsParams::new(8, 5, 5).unwrap();
        let w = vec![1, 2, 3, 4, 250];
        assert_eq!(rs_encode(&w, &p).unwrap(), w);
        assert_eq!(rs_decode(&w, &p).unwrap(), w);
    }

    #[test]
    fn codewords_vanish_at_generator_roots() {
        let p = RsParams::new(8, 16, 32).unwrap();
        let f = Field::get(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: Vec<u16> = (0..16).map(|_| rng.gen_range(0..256)).collect();
        let cw = rs_encode(&w, &p).unwrap();
        assert_eq!(&cw[..16], &w[..]);
        for i in 0..16 {
            let x = f.alpha_pow(i);
            // Independent evaluation by explicit powers.
            let mut acc = 0u16;
            for (j, &c) in cw.iter().enumerate() {
                let deg = (cw.len() - 1 - j) as i64;
                acc ^= f.mul(c, f.alpha_pow(deg * f.log(x) as i64));
            }
            assert_eq!(acc, 0);
        }
    }

    #[test]
    fn corrects_up_to_thr_random_trials() {
        let p = RsParams::new(8, 16, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..1000 {
            let w: Vec<u16> = (0..16).map(|_| rng.gen_range(0..256)).collect();
            let cw = rs_encode(&w, &p).unwrap();
            let mut r = cw.clone();
            let count = if trial % 2 == 0 { p.thr() } else { rng.gen_range(0..=p.thr()) };
            corrupt(&mut rng, &mut r, count, 8);
            let decoded = rs_decode(&r, &p).unwrap();
            assert_eq!(decoded, w);
            assert_eq!(rs_encode(&decoded, &p).unwrap(), cw);
        }
    }

    #[test]
    fn odd_parity_and_wide_symbols() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (k, m, n) in [(9u32, 240usize, 272usize), (8, 201, 233), (5, 10, 21), (12, 30, 45)] {
            let p = RsParams::new(k, m, n).unwrap();
            for _ in 0..20 {
                let w: Vec<u16> = (0..m).map(|_| rng.gen_range(0..(1u32 << k)) as u16).collect();
                let mut r = rs_encode(&w, &p).unwrap();
                corrupt(&mut rng, &mut r, p.thr(), k);
                assert_eq!(rs_decode(&r, &p).unwrap(), w);
            }
        }
    }

    #[test]
    fn tiny_code_exhaustive_against_nearest_codeword() {
        let p = RsParams::new(4, 3, 7).unwrap();
        let mut book = Vec::new();
        for a in 0..16u16 {
            for b in 0..16u16 {
                for c in 0..16u16 {
                    let w = vec![a, b, c];
                    let cw = rs_encode(&w, &p).unwrap();
                    book.push((w, cw));
                }
            }
        }
        // Minimum distance of an MDS code is n − m + 1.
        let zero = rs_encode(&[0, 0, 0], &p).unwrap();
        let dmin = book.iter().filter(|(w, _)| w.iter().any(|&x| x != 0)).map(|(_, cw)| sym_distance(cw, &zero)).min();
        assert_eq!(dmin, Some(5));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3000 {
            let r: Vec<u16> = (0..7).map(|_| rng.gen_range(0..16)).collect();
            let nearest: Vec<&(Vec<u16>, Vec<u16>)> =
                book.iter().filter(|(_, cw)| sym_distance(cw, &r) <= p.thr()).collect();
            match rs_decode(&r, &p) {
                Ok(w) => {
                    assert_eq!(nearest.len(), 1);
                    assert_eq!(&nearest[0].0, &w);
                }
                Err(CodecError::DecodeFailure) => assert!(nearest.is_empty()),
                Err(e) => panic!("unexpected {e}"),
            }
        }
        // Exhaustive single and double errors on one codeword.
        let (w, cw) = &book[1234];
        for i in 0..7 {
            for j in i..7 {
                for e1 in 1..16u16 {
                    let mut r = cw.clone();
                    r[i] ^= e1;
                    if j != i {
                        r[j] ^= 15 - (e1 % 15);
                    }
                    assert_eq!(&rs_decode(&r, &p).unwrap(), w);
                }
            }
        }
    }

    #[test]
    fn beyond_thr_toward_other_codeword_never_returns_original() {
        let p = RsParams::new(4, 3, 7).unwrap();
        let w = vec![5u16, 9, 1];
        let cw = rs_encode(&w, &p).unwrap();
        let other = rs_encode(&[6, 9, 1], &p).unwrap();
        let diff: Vec<usize> = (0..7).filter(|&i| cw[i] != other[i]).collect();
        assert!(diff.len() >= 5);
        let mut r = cw.clone();
        for &i in diff.iter().take(p.thr() + 1) {
            r[i] = other[i];
        }
        if let Ok(got) = rs_decode(&r, &p) {
            assert_ne!(got, w);
        }
    }
}
