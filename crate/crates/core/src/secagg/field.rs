use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `2^128 − 159`, the largest prime below `2^128`.
pub const DEFAULT_PRIME: u128 = u128::MAX - 158;

/// Element of a prime field, stored reduced into `[0, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u128);

impl FieldElement {
    pub fn value(self) -> u128 {
        self.0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reduction {
    /// `p < 2^64`: products fit in a `u128`.
    Native,
    /// `p = 2^128 − c` with `c < 2^64`.
    Pseudo(u128),
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Modulus {
    p: u128,
    reduction: Reduction,
}

/// 128×128 → 256-bit product as `(hi, lo)`.
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a0, a1) = (a & MASK, a >> 64);
    let (b0, b1) = (b & MASK, b >> 64);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & MASK) + (p10 & MASK);
    let lo = (p00 & MASK) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

impl Modulus {
    fn new(p: u128) -> Self {
        let reduction = if p <= u64::MAX as u128 {
            Reduction::Native
        } else {
            let c = p.wrapping_neg();
            if c <= u64::MAX as u128 {
                Reduction::Pseudo(c)
            } else {
                Reduction::Generic
            }
        };
        Self { p, reduction }
    }

    fn add(&self, a: u128, b: u128) -> u128 {
        let (s, overflow) = a.overflowing_add(b);
        if overflow || s >= self.p {
            s.wrapping_sub(self.p)
        } else {
            s
        }
    }

    fn sub(&self, a: u128, b: u128) -> u128 {
        if a >= b {
            a - b
        } else {
            a.wrapping_sub(b).wrapping_add(self.p)
        }
    }

    fn mul(&self, a: u128, b: u128) -> u128 {
        match self.reduction {
            Reduction::Native => (a * b) % self.p,
            Reduction::Pseudo(c) => {
                // 2^128 ≡ c (mod p), so hi·2^128 + lo ≡ hi·c + lo
                let (mut hi, mut lo) = mul_wide(a, b);
                while hi != 0 {
                    let (h2, l2) = mul_wide(hi, c);
                    let (sum, carry) = lo.overflowing_add(l2);
                    lo = sum;
                    hi = h2 + carry as u128;
                }
                while lo >= self.p {
                    lo -= self.p;
                }
                lo
            }
            Reduction::Generic => {
                let (mut acc, mut base, mut e) = (0u128, a, b);
                while e > 0 {
                    if e & 1 == 1 {
                        acc = self.add(acc, base);
                    }
                    base = self.add(base, base);
                    e >>= 1;
                }
                acc
            }
        }
    }

    fn pow(&self, mut base: u128, mut e: u128) -> u128 {
        let mut acc = 1 % self.p;
        base %= self.p;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }
}

const MR_BASES: [u128; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Miller–Rabin with the first 16 prime bases: exact below 3.3·10²⁴, and
/// a false-positive rate under 4⁻¹⁶ above that.
pub fn is_probable_prime(n: u128) -> bool {
    if n < 2 {
        return false;
    }
    for &b in &MR_BASES {
        if n == b {
            return true;
        }
        if n % b == 0 {
            return false;
        }
    }
    let m = Modulus::new(n);
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'bases: for &a in &MR_BASES {
        let mut x = m.pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = m.mul(x, x);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

/// Arithmetic context for `F_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    modulus: Modulus,
}

impl Default for PrimeField {
    fn default() -> Self {
        Self {
            modulus: Modulus::new(DEFAULT_PRIME),
        }
    }
}

impl PrimeField {
    pub fn new(p: u128) -> Result<Self> {
        if !is_probable_prime(p) {
            return Err(Error::invalid(format!("{p} is not prime")));
        }
        Ok(Self {
            modulus: Modulus::new(p),
        })
    }

    pub fn modulus(&self) -> u128 {
        self.modulus.p
    }

    pub fn bits(&self) -> u32 {
        128 - self.modulus.p.leading_zeros()
    }

    /// Bytes needed to transmit one element.
    pub fn element_bytes(&self) -> usize {
        self.bits().div_ceil(8) as usize
    }

    pub fn elem(&self, v: u128) -> FieldElement {
        FieldElement(v % self.modulus.p)
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement(0)
    }

    pub fn one(&self) -> FieldElement {
        self.elem(1)
    }

    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(self.modulus.add(a.0, b.0))
    }

    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(self.modulus.sub(a.0, b.0))
    }

    pub fn neg(&self, a: FieldElement) -> FieldElement {
        self.sub(self.zero(), a)
    }

    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(self.modulus.mul(a.0, b.0))
    }

    pub fn pow(&self, a: FieldElement, e: u128) -> FieldElement {
        FieldElement(self.modulus.pow(a.0, e))
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a.0 == 0 {
            return Err(Error::invalid("zero has no inverse"));
        }
        Ok(self.pow(a, self.modulus.p - 2))
    }

    /// Uniform element of the field.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.random_range(0..self.modulus.p))
    }
}
