//! Binary extension fields GF(2^k) for 3 ≤ k ≤ 16, using log/antilog tables.

use std::sync::OnceLock;

pub const MIN_BITS: u32 = 3;
pub const MAX_BITS: u32 = 16;

/// Primitive reduction polynomials indexed by k, including the x^k term.
const PRIMITIVE_POLYS: [u32; 17] =
    [0, 0, 0, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11D, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443, 0x8003, 0x1100B];

#[derive(Debug)]
pub struct Field {
    bits: u32,
    poly: u32,
    exp: Vec<u16>,
    log: Vec<u16>,
}

static FIELDS: [OnceLock<Field>; 17] = [const { OnceLock::new() }; 17];

impl Field {
    /// Shared table for GF(2^bits). Panics outside the supported range.
    pub fn get(bits: u32) -> &'static Field {
        assert!((MIN_BITS..=MAX_BITS).contains(&bits), "unsupported field size 2^{bits}");
        FIELDS[bits as usize].get_or_init(|| Field::build(bits))
    }

    fn build(bits: u32) -> Field {
        let poly = PRIMITIVE_POLYS[bits as usize];
        let order = (1usize << bits) - 1;
        let mut exp = vec![0u16; 2 * order];
        let mut log = vec![0u16; order + 1];
        let mut x: u32 = 1;
        for (i, slot) in exp.iter_mut().enumerate().take(order) {
            *slot = x as u16;
            assert!(i == 0 || x != 1, "polynomial {poly:#x} is not primitive");
            log[x as usize] = i as u16;
            x <<= 1;
            if x & (1 << bits) != 0 {
                x ^= poly;
            }
        }
        assert_eq!(x, 1, "polynomial {poly:#x} is not primitive");
        for i in order..2 * order {
            exp[i] = exp[i - order];
        }
        Field { bits, poly, exp, log }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn poly(&self) -> u32 {
        self.poly
    }

    /// Multiplicative group order 2^k − 1.
    pub fn order(&self) -> usize {
        (1usize << self.bits) - 1
    }

    pub fn size(&self) -> usize {
        1usize << self.bits
    }

    pub fn mul(&self, a: u16, b: u16) -> u16 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
    }

    pub fn inv(&self, a: u16) -> u16 {
        assert!(a != 0, "zero has no inverse");
        self.exp[self.order() - self.log[a as usize] as usize]
    }

    pub fn div(&self, a: u16, b: u16) -> u16 {
        self.mul(a, self.inv(b))
    }

    /// α^e for any integer exponent, α = x.
    pub fn alpha_pow(&self, e: i64) -> u16 {
        let r = e.rem_euclid(self.order() as i64) as usize;
        self.exp[r]
    }

    pub fn log(&self, a: u16) -> usize {
        assert!(a != 0, "log of zero");
        self.log[a as usize] as usize
    }

    /// Evaluate a polynomial given lowest-degree coefficient first.
    pub fn eval_low_first(&self, coeffs: &[u16], x: u16) -> u16 {
        coeffs.iter().rev().fold(0, |acc, &c| self.mul(acc, x) ^ c)
    }

    /// Evaluate a polynomial given highest-degree coefficient first.
    pub fn eval_high_first(&self, coeffs: &[u16], x: u16) -> u16 {
        coeffs.iter().fold(0, |acc, &c| self.mul(acc, x) ^ c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clmul_reduce(a: u16, b: u16, bits: u32, poly: u32) -> u16 {
        let mut acc: u32 = 0;
        for i in 0..bits {
            if b >> i & 1 == 1 {
                acc ^= (a as u32) << i;
            }
        }
        for i in (bits..2 * bits).rev() {
            if acc >> i & 1 == 1 {
                acc ^= poly << (i - bits);
            }
        }
        acc as u16
    }

    #[test]
    fn every_field_builds() {
        for k in MIN_BITS..=MAX_BITS {
            let f = Field::get(k);
            assert_eq!(f.alpha_pow(f.order() as i64), 1);
            assert_eq!(f.alpha_pow(-1), f.inv(2));
        }
    }

    #[test]
    fn table_mul_matches_carryless() {
        for k in [3, 4, 8] {
            let f = Field::get(k);
            for a in 0..f.size() as u16 {
                for b in 0..f.size() as u16 {
                    assert_eq!(f.mul(a, b), clmul_reduce(a, b, k, f.poly()));
                }
            }
        }
        let f = Field::get(13);
        for (a, b) in [(1234u16, 5678u16), (8191, 8191), (4096, 3)] {
            assert_eq!(f.mul(a, b), clmul_reduce(a, b, 13, f.poly()));
        }
    }

    #[test]
    fn inverses() {
        let f = Field::get(9);
        for a in 1..f.size() as u16 {
            assert_eq!(f.mul(a, f.inv(a)), 1);
        }
    }

    #[test]
    fn evaluation_orders_agree() {
        let f = Field::get(8);
        let p = [3u16, 0, 7, 200];
        let rev: Vec<u16> = p.iter().rev().copied().collect();
        for x in [0u16, 1, 2, 77, 255] {
            assert_eq!(f.eval_low_first(&p, x), f.eval_high_first(&rev, x));
        }
    }
}
