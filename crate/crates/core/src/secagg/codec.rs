use serde::{Deserialize, Serialize};

use super::field::{FieldElement, PrimeField};
use crate::{Error, Result, Scalar};

/// Signed fixed-point encoding into a prime field. Negative values occupy
/// the upper half `(p/2, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    pub fraction_bits: u32,
    pub integer_bits: u32,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        Self {
            fraction_bits: 16,
            integer_bits: 32,
        }
    }
}

impl FixedPointCodec {
    pub fn new(fraction_bits: u32, integer_bits: u32) -> Result<Self> {
        if fraction_bits + integer_bits > 120 {
            return Err(Error::invalid("fixed-point width exceeds 120 bits"));
        }
        Ok(Self {
            fraction_bits,
            integer_bits,
        })
    }

    /// Quantization step `2^-f`.
    pub fn resolution(&self) -> f64 {
        (-(self.fraction_bits as f64)).exp2()
    }

    /// Largest magnitude of a sum of `terms` encoded values, in field units.
    pub fn sum_bound(&self, terms: usize) -> u128 {
        (terms as u128) << (self.fraction_bits + self.integer_bits)
    }

    /// Whether a sum of `terms` values always decodes without wrap-around.
    pub fn fits(&self, terms: usize, field: &PrimeField) -> bool {
        self.sum_bound(terms) < field.modulus() / 2
    }

    pub fn encode<T: Scalar>(&self, x: T, field: &PrimeField) -> Result<FieldElement> {
        let v = x.as_f64();
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("cannot encode {v}")));
        }
        if v.abs() >= (self.integer_bits as f64).exp2() {
            return Err(Error::RangeOverflow {
                value: v,
                bits: self.integer_bits,
            });
        }
        let q = (v * (self.fraction_bits as f64).exp2()).round() as i128;
        if q.unsigned_abs() >= field.modulus() / 2 {
            return Err(Error::RangeOverflow {
                value: v,
                bits: self.integer_bits,
            });
        }
        Ok(if q >= 0 {
            field.elem(q as u128)
        } else {
            field.neg(field.elem(q.unsigned_abs()))
        })
    }

    pub fn decode<T: Scalar>(&self, e: FieldElement, field: &PrimeField) -> T {
        let p = field.modulus();
        let v = e.value();
        let magnitude = if v > p / 2 {
            -((p - v) as f64)
        } else {
            v as f64
        };
        T::of(magnitude * self.resolution())
    }

    pub fn encode_slice<T: Scalar>(
        &self,
        xs: &[T],
        field: &PrimeField,
    ) -> Result<Vec<FieldElement>> {
        xs.iter().map(|&x| self.encode(x, field)).collect()
    }
}
