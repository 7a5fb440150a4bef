// SPDX-License-Identifier: Apache-2.0

//! Exact arithmetic for the three-share authentication scheme.
//!
//! The bank holds a secret base polynomial `F` with `F(0) = 0`. An ATM with
//! id `a` holds `(a, F(a))`. A user with id `u` holds `(u, F(u) + r)` where
//! `r` is a per-user random value, and the bank keeps the anchor `(0, r)`.
//! When all three parties are genuine, lifting the ATM share by `r` puts all
//! three points on `F + r`, and interpolation recovers it exactly.

pub mod field;
pub mod poly;

pub use field::{FieldElement, Modulus, FIXTURE_PRIME, MERSENNE_61};
pub use poly::{interpolate, sample_base_polynomial, sample_element, Polynomial, SharePoint};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShareError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("duplicate abscissa {0}")]
    DuplicateAbscissa(u64),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("value {value} is not reduced modulo {modulus}")]
    OutOfRange { value: u64, modulus: u64 },
    #[error("share encoding must be 16 bytes, got {0}")]
    BadShareEncoding(usize),
}

/// Intermediate values of the bank-side share check, kept for audit and tests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareCheck {
    /// The ATM share lifted onto the user's polynomial: `(a, y_atm + r)`.
    pub lifted_atm: SharePoint,
    /// Interpolation through user share, lifted ATM share and `(0, r)`.
    pub reconstructed: Polynomial,
    /// `F + r`, the polynomial the user's share was issued from.
    pub expected: Polynomial,
}

impl ShareCheck {
    pub fn matches(&self) -> bool {
        self.reconstructed == self.expected
    }
}

/// Runs the bank-side reconstruction for one user/ATM pair.
///
/// Fails only when two abscissas coincide, which callers treat as a mismatch.
pub fn check_shares(
    base: &Polynomial,
    r_user: FieldElement,
    d_user: SharePoint,
    d_atm: SharePoint,
) -> Result<ShareCheck, ShareError> {
    let modulus = base.modulus();
    let lifted_atm = SharePoint::new(d_atm.x, d_atm.y + r_user);
    let anchor = SharePoint::new(modulus.zero(), r_user);
    let reconstructed = interpolate(d_user, lifted_atm, anchor)?;
    Ok(ShareCheck {
        lifted_atm,
        reconstructed,
        expected: base.shift(r_user),
    })
}
