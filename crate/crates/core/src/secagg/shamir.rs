use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::{FieldElement, PrimeField};
use crate::{Error, Result};

/// Party count, polynomial degree and field of one sharing scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharingParams {
    parties: usize,
    degree: usize,
    field: PrimeField,
}

impl SharingParams {
    /// Requires an honest majority (`2·degree < parties`) and `degree ≥ 1`
    /// unless there is a single party.
    pub fn new(parties: usize, degree: usize, field: PrimeField) -> Result<Self> {
        if parties == 0 {
            return Err(Error::Empty("parties"));
        }
        if 2 * degree >= parties {
            return Err(Error::invalid(format!(
                "degree {degree} needs an honest majority of {parties} parties"
            )));
        }
        if degree == 0 && parties > 1 {
            return Err(Error::invalid("degree 0 shares reveal the secret"));
        }
        if parties as u128 >= field.modulus() {
            return Err(Error::invalid("field too small for the number of parties"));
        }
        Ok(Self {
            parties,
            degree,
            field,
        })
    }

    /// Highest tolerated collusion for `parties` parties: `⌊(ν−1)/2⌋`.
    pub fn for_parties(parties: usize, field: PrimeField) -> Result<Self> {
        Self::new(parties, parties.saturating_sub(1) / 2, field)
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Shares needed to reconstruct.
    pub fn threshold(&self) -> usize {
        self.degree + 1
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }
}

/// Evaluation of the sharing polynomial at `x = index` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretShare {
    pub index: usize,
    pub value: FieldElement,
}

/// Shares `secret` with a fresh random polynomial.
pub fn share<R: Rng + ?Sized>(
    secret: FieldElement,
    params: &SharingParams,
    rng: &mut R,
) -> Vec<SecretShare> {
    let f = params.field();
    let coeffs: Vec<FieldElement> = (0..params.degree()).map(|_| f.random(rng)).collect();
    evaluate_shares(secret, &coeffs, params)
}

/// Shares `secret` with the given non-constant coefficients (lowest first).
pub fn share_with_coefficients(
    secret: FieldElement,
    coefficients: &[FieldElement],
    params: &SharingParams,
) -> Result<Vec<SecretShare>> {
    if coefficients.len() != params.degree() {
        return Err(Error::DimensionMismatch {
            expected: params.degree(),
            got: coefficients.len(),
        });
    }
    Ok(evaluate_shares(secret, coefficients, params))
}

fn evaluate_shares(
    secret: FieldElement,
    coeffs: &[FieldElement],
    params: &SharingParams,
) -> Vec<SecretShare> {
    let f = params.field();
    (1..=params.parties())
        .map(|index| {
            let x = f.elem(index as u128);
            let mut acc = f.zero();
            for &c in coeffs.iter().rev() {
                acc = f.add(f.mul(acc, x), c);
            }
            acc = f.add(f.mul(acc, x), secret);
            SecretShare { index, value: acc }
        })
        .collect()
}

/// Value at `at` of the lowest-degree polynomial through `points`.
fn interpolate_at(
    field: &PrimeField,
    points: &[SecretShare],
    at: FieldElement,
) -> Result<FieldElement> {
    let mut acc = field.zero();
    for (j, pj) in points.iter().enumerate() {
        let xj = field.elem(pj.index as u128);
        let mut num = field.one();
        let mut den = field.one();
        for (k, pk) in points.iter().enumerate() {
            if k == j {
                continue;
            }
            let xk = field.elem(pk.index as u128);
            num = field.mul(num, field.sub(at, xk));
            den = field.mul(den, field.sub(xj, xk));
        }
        let term = field.mul(pj.value, field.mul(num, field.inv(den)?));
        acc = field.add(acc, term);
    }
    Ok(acc)
}

fn validate_indices(shares: &[SecretShare], params: &SharingParams) -> Result<()> {
    let mut seen = vec![false; params.parties() + 1];
    for s in shares {
        if s.index == 0 || s.index > params.parties() {
            return Err(Error::invalid(format!(
                "share index {} out of range",
                s.index
            )));
        }
        if std::mem::replace(&mut seen[s.index], true) {
            return Err(Error::invalid(format!("duplicate share index {}", s.index)));
        }
    }
    Ok(())
}

/// Outcome of a consistency check over redundant shares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TamperCheck {
    Consistent,
    /// Indices of shares off the polynomial fitted to the first `degree + 1`.
    Inconsistent(Vec<usize>),
}

/// Checks that all shares lie on one polynomial of the scheme's degree.
pub fn detect_tampering(shares: &[SecretShare], params: &SharingParams) -> Result<TamperCheck> {
    validate_indices(shares, params)?;
    let t = params.threshold();
    if shares.len() < t {
        return Err(Error::InsufficientShares {
            needed: t,
            got: shares.len(),
        });
    }
    let f = params.field();
    let (base, rest) = shares.split_at(t);
    let mut bad = Vec::new();
    for s in rest {
        if interpolate_at(f, base, f.elem(s.index as u128))? != s.value {
            bad.push(s.index);
        }
    }
    Ok(if bad.is_empty() {
        TamperCheck::Consistent
    } else {
        TamperCheck::Inconsistent(bad)
    })
}

/// Recovers the secret. Extra shares beyond the threshold are checked for
/// consistency and any mismatch aborts with [`Error::Tampered`].
pub fn reconstruct(shares: &[SecretShare], params: &SharingParams) -> Result<FieldElement> {
    if let TamperCheck::Inconsistent(_) = detect_tampering(shares, params)? {
        return Err(Error::Tampered {
            degree: params.degree(),
        });
    }
    interpolate_at(
        params.field(),
        &shares[..params.threshold()],
        params.field().zero(),
    )
}

/// Sharewise `x + a·y`. Purely local, no messages.
pub fn share_linear(
    x: &[SecretShare],
    y: &[SecretShare],
    a: FieldElement,
    params: &SharingParams,
) -> Result<Vec<SecretShare>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let f = params.field();
    x.iter()
        .zip(y)
        .map(|(sx, sy)| {
            if sx.index != sy.index {
                return Err(Error::invalid("share indices do not line up"));
            }
            Ok(SecretShare {
                index: sx.index,
                value: f.add(sx.value, f.mul(a, sy.value)),
            })
        })
        .collect()
}
