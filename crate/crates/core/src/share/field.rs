// SPDX-License-Identifier: Apache-2.0

//! Prime-field arithmetic over `GF(p)` for a runtime-configured 64-bit prime.
//!
//! Every element carries its modulus so that values from two different
//! deployments can never be mixed silently. Products are computed with
//! 128-bit intermediates, so arithmetic is exact for any prime below 2^64.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::ShareError;

/// The Mersenne prime 2^61 - 1, the production modulus.
pub const MERSENNE_61: u64 = (1u64 << 61) - 1;

/// Small prime used by worked examples and fixtures.
pub const FIXTURE_PRIME: u64 = 101;

/// A validated prime modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Modulus(u64);

impl Modulus {
    /// Validates `p` with a deterministic Miller-Rabin test.
    pub fn new(p: u64) -> Result<Self, ShareError> {
        if is_prime(p) {
            Ok(Modulus(p))
        } else {
            Err(ShareError::NotPrime(p))
        }
    }

    pub fn mersenne61() -> Self {
        Modulus(MERSENNE_61)
    }

    pub fn fixture() -> Self {
        Modulus(FIXTURE_PRIME)
    }

    pub fn get(self) -> u64 {
        self.0
    }

    /// Builds an element, reducing `value` mod p.
    pub fn reduce(self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.0,
            modulus: self,
        }
    }

    /// Builds an element only if `value` is already canonical (`< p`).
    pub fn element(self, value: u64) -> Result<FieldElement, ShareError> {
        if value < self.0 {
            Ok(FieldElement {
                value,
                modulus: self,
            })
        } else {
            Err(ShareError::OutOfRange {
                value,
                modulus: self.0,
            })
        }
    }

    pub fn zero(self) -> FieldElement {
        FieldElement {
            value: 0,
            modulus: self,
        }
    }

    pub fn one(self) -> FieldElement {
        FieldElement {
            value: 1,
            modulus: self,
        }
    }
}

impl TryFrom<u64> for Modulus {
    type Error = ShareError;

    fn try_from(p: u64) -> Result<Self, Self::Error> {
        Modulus::new(p)
    }
}

impl From<Modulus> for u64 {
    fn from(m: Modulus) -> u64 {
        m.0
    }
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An element of `GF(p)`, always in canonical form `0 <= value < p`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    modulus: Modulus,
}

impl FieldElement {
    pub fn value(self) -> u64 {
        self.value
    }

    pub fn modulus(self) -> Modulus {
        self.modulus
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    pub fn pow(self, mut exp: u64) -> FieldElement {
        let mut base = self;
        let mut acc = self.modulus.one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(self) -> Result<FieldElement, ShareError> {
        if self.is_zero() {
            return Err(ShareError::ZeroInverse);
        }
        Ok(self.pow(self.modulus.0 - 2))
    }

    /// 8-byte big-endian encoding of the canonical value.
    pub fn to_be_bytes(self) -> [u8; 8] {
        self.value.to_be_bytes()
    }

    fn check_same_field(self, other: FieldElement) {
        assert_eq!(
            self.modulus, other.modulus,
            "field elements from different moduli"
        );
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;

    fn add(self, rhs: FieldElement) -> FieldElement {
        self.check_same_field(rhs);
        let p = self.modulus.0 as u128;
        let sum = (self.value as u128 + rhs.value as u128) % p;
        FieldElement {
            value: sum as u64,
            modulus: self.modulus,
        }
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;

    fn sub(self, rhs: FieldElement) -> FieldElement {
        self + (-rhs)
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;

    fn neg(self) -> FieldElement {
        let value = if self.value == 0 {
            0
        } else {
            self.modulus.0 - self.value
        };
        FieldElement {
            value,
            modulus: self.modulus,
        }
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;

    fn mul(self, rhs: FieldElement) -> FieldElement {
        self.check_same_field(rhs);
        let prod = (self.value as u128 * rhs.value as u128) % self.modulus.0 as u128;
        FieldElement {
            value: prod as u64,
            modulus: self.modulus,
        }
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; these witnesses are exact for all n < 2^64.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &w in &WITNESSES {
        if n == w {
            return true;
        }
        if n.is_multiple_of(w) {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
