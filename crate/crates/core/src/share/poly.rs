// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use rand::{Rng, RngCore};

use super::field::{FieldElement, Modulus};
use super::ShareError;

/// A polynomial of degree at most two, stored as `[c0, c1, c2]`.
///
/// The representation is canonical: leading zero coefficients are kept, so
/// two polynomials are equal exactly when their coefficient vectors are.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Polynomial {
    coeffs: [FieldElement; 3],
}

impl Polynomial {
    pub fn new(c0: FieldElement, c1: FieldElement, c2: FieldElement) -> Self {
        assert!(
            c0.modulus() == c1.modulus() && c1.modulus() == c2.modulus(),
            "coefficients from different moduli"
        );
        Polynomial {
            coeffs: [c0, c1, c2],
        }
    }

    /// Builds a polynomial from raw coefficients, rejecting non-canonical values.
    pub fn from_values(modulus: Modulus, coeffs: [u64; 3]) -> Result<Self, ShareError> {
        Ok(Polynomial::new(
            modulus.element(coeffs[0])?,
            modulus.element(coeffs[1])?,
            modulus.element(coeffs[2])?,
        ))
    }

    pub fn coeffs(&self) -> [FieldElement; 3] {
        self.coeffs
    }

    pub fn values(&self) -> [u64; 3] {
        self.coeffs.map(FieldElement::value)
    }

    pub fn modulus(&self) -> Modulus {
        self.coeffs[0].modulus()
    }

    pub fn constant(&self) -> FieldElement {
        self.coeffs[0]
    }

    /// A base polynomial has no constant term and a nonzero quadratic term.
    pub fn is_base(&self) -> bool {
        self.coeffs[0].is_zero() && !self.coeffs[2].is_zero()
    }

    /// Horner evaluation of `c0 + c1 x + c2 x^2`.
    pub fn eval(&self, x: FieldElement) -> FieldElement {
        let [c0, c1, c2] = self.coeffs;
        (c2 * x + c1) * x + c0
    }

    /// Adds `r` to the constant term.
    pub fn shift(&self, r: FieldElement) -> Polynomial {
        let [c0, c1, c2] = self.coeffs;
        Polynomial::new(c0 + r, c1, c2)
    }

    pub fn share_at(&self, x: FieldElement) -> SharePoint {
        SharePoint { x, y: self.eval(x) }
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [c0, c1, c2] = self.values();
        write!(f, "[{c0},{c1},{c2}]")
    }
}

/// A share `(x, y)` on some polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SharePoint {
    pub x: FieldElement,
    pub y: FieldElement,
}

impl SharePoint {
    pub fn new(x: FieldElement, y: FieldElement) -> Self {
        assert_eq!(x.modulus(), y.modulus(), "share coordinates from different moduli");
        SharePoint { x, y }
    }

    /// `x || y`, each 8 bytes big-endian.
    pub fn to_bytes(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&self.x.to_be_bytes());
        out[8..].copy_from_slice(&self.y.to_be_bytes());
        out
    }

    pub fn from_bytes(modulus: Modulus, bytes: &[u8]) -> Result<Self, ShareError> {
        let bytes: &[u8; 16] = bytes
            .try_into()
            .map_err(|_| ShareError::BadShareEncoding(bytes.len()))?;
        let x = u64::from_be_bytes(bytes[..8].try_into().unwrap());
        let y = u64::from_be_bytes(bytes[8..].try_into().unwrap());
        Ok(SharePoint {
            x: modulus.element(x)?,
            y: modulus.element(y)?,
        })
    }
}

/// The unique polynomial of degree at most two through three points with
/// pairwise distinct abscissas (Lagrange form, expanded to coefficients).
pub fn interpolate(p1: SharePoint, p2: SharePoint, p3: SharePoint) -> Result<Polynomial, ShareError> {
    let points = [p1, p2, p3];
    let modulus = p1.x.modulus();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            if a.x == b.x {
                return Err(ShareError::DuplicateAbscissa(a.x.value()));
            }
        }
    }

    let mut c = [modulus.zero(); 3];
    for i in 0..3 {
        let xi = points[i].x;
        let a = points[(i + 1) % 3].x;
        let b = points[(i + 2) % 3].x;
        // L_i(x) = (x - a)(x - b) / ((xi - a)(xi - b))
        let scale = points[i].y * ((xi - a) * (xi - b)).inv()?;
        c[0] = c[0] + scale * a * b;
        c[1] = c[1] - scale * (a + b);
        c[2] = c[2] + scale;
    }
    Ok(Polynomial::new(c[0], c[1], c[2]))
}

/// Samples `[0, c1, c2]` with `c1` uniform in `[0, p)` and `c2` uniform in `[1, p)`.
pub fn sample_base_polynomial<R: RngCore + ?Sized>(modulus: Modulus, rng: &mut R) -> Polynomial {
    let p = modulus.get();
    let c1 = rng.gen_range(0..p);
    let c2 = rng.gen_range(1..p);
    Polynomial::new(modulus.zero(), modulus.reduce(c1), modulus.reduce(c2))
}

/// Uniform element of `[0, p)`.
pub fn sample_element<R: RngCore + ?Sized>(modulus: Modulus, rng: &mut R) -> FieldElement {
    modulus.reduce(rng.gen_range(0..modulus.get()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn fx() -> Modulus {
        Modulus::fixture()
    }

    fn poly(c: [u64; 3]) -> Polynomial {
        Polynomial::from_values(fx(), c).unwrap()
    }

    fn pt(x: u64, y: u64) -> SharePoint {
        SharePoint::new(fx().reduce(x), fx().reduce(y))
    }

    #[test]
    fn eval_examples() {
        assert_eq!(poly([0, 3, 2]).eval(fx().reduce(5)).value(), 2 * 25 + 3 * 5);
        assert_eq!(poly([9, 3, 2]).eval(fx().zero()).value(), 9);
        for x in 0..101 {
            assert!(poly([0, 0, 0]).eval(fx().reduce(x)).is_zero());
        }
    }

    #[test]
    fn shift_examples() {
        let shifted = poly([0, 3, 2]).shift(fx().reduce(7));
        assert_eq!(shifted.values(), [7, 3, 2]);
        assert_eq!(shifted.eval(fx().zero()).value(), 7);
        assert_eq!(poly([4, 3, 2]).shift(fx().zero()), poly([4, 3, 2]));
    }

    #[test]
    fn interpolate_examples() {
        // 7 + 3*5 + 2*25 = 72, 7 + 27 + 162 = 196 = 95 mod 101
        assert_eq!(7 + 3 * 5 + 2 * 25, 72);
        assert_eq!((7 + 3 * 9 + 2 * 81) % 101, 95);
        let got = interpolate(pt(0, 7), pt(5, 72), pt(9, 95)).unwrap();
        assert_eq!(got.values(), [7, 3, 2]);

        let constant = interpolate(pt(0, 42), pt(1, 42), pt(2, 42)).unwrap();
        assert_eq!(constant.values(), [42, 0, 0]);

        assert!(matches!(
            interpolate(pt(0, 7), pt(0, 8), pt(5, 1)),
            Err(ShareError::DuplicateAbscissa(0))
        ));
        assert!(matches!(
            interpolate(pt(3, 7), pt(4, 8), pt(3, 1)),
            Err(ShareError::DuplicateAbscissa(3))
        ));
    }

    #[test]
    fn interpolation_matches_exhaustive_search() {
        // Brute force over every polynomial in GF(101)[x] of degree <= 2.
        let xs = [0u64, 17, 64];
        let target = [7u64, 3, 2];
        let ys: Vec<u64> = xs
            .iter()
            .map(|&x| (target[0] + target[1] * x + target[2] * x * x) % 101)
            .collect();
        let mut found = Vec::new();
        for c0 in 0..101u64 {
            for c1 in 0..101u64 {
                for c2 in 0..101u64 {
                    if xs
                        .iter()
                        .zip(&ys)
                        .all(|(&x, &y)| (c0 + c1 * x + c2 * x * x) % 101 == y)
                    {
                        found.push([c0, c1, c2]);
                    }
                }
            }
        }
        assert_eq!(found, vec![target]);
        let got = interpolate(pt(xs[0], ys[0]), pt(xs[1], ys[1]), pt(xs[2], ys[2])).unwrap();
        assert_eq!(got.values(), found[0]);
    }

    #[test]
    fn base_polynomial_sampling_is_seeded() {
        for seed in [0u64, 1, 42, 9999] {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let p = sample_base_polynomial(Modulus::mersenne61(), &mut rng);
            assert!(p.constant().is_zero());
            assert!(p.is_base());
            assert!(p.eval(Modulus::mersenne61().zero()).is_zero());
        }
        let a = sample_base_polynomial(fx(), &mut ChaCha20Rng::seed_from_u64(42));
        let b = sample_base_polynomial(fx(), &mut ChaCha20Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn share_bytes() {
        let s = pt(9, 95);
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..8], &9u64.to_be_bytes());
        assert_eq!(&bytes[8..], &95u64.to_be_bytes());
        assert_eq!(SharePoint::from_bytes(fx(), &bytes).unwrap(), s);
        assert!(SharePoint::from_bytes(fx(), &bytes[..15]).is_err());
        let mut big = bytes;
        big[15] = 200;
        assert!(SharePoint::from_bytes(fx(), &big).is_err());
    }

    fn field_strategy() -> impl Strategy<Value = Modulus> {
        prop_oneof![Just(Modulus::fixture()), Just(Modulus::mersenne61())]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn interpolation_round_trip(m in field_strategy(), c in any::<[u64; 3]>(), xs in any::<[u64; 3]>()) {
            let p = Polynomial::new(m.reduce(c[0]), m.reduce(c[1]), m.reduce(c[2]));
            let xs = xs.map(|x| m.reduce(x));
            prop_assume!(xs[0] != xs[1] && xs[1] != xs[2] && xs[0] != xs[2]);
            let got = interpolate(p.share_at(xs[0]), p.share_at(xs[1]), p.share_at(xs[2])).unwrap();
            prop_assert_eq!(got, p);
        }

        #[test]
        fn shift_commutes_with_eval(m in field_strategy(), c in any::<[u64; 3]>(), r in any::<u64>(), x in any::<u64>()) {
            let p = Polynomial::new(m.reduce(c[0]), m.reduce(c[1]), m.reduce(c[2]));
            let (r, x) = (m.reduce(r), m.reduce(x));
            prop_assert_eq!(p.shift(r).eval(x), p.eval(x) + r);
        }

        #[test]
        fn shifted_base_reconstructs_r(m in field_strategy(), seed in any::<u64>(), r in any::<u64>(), a in 1u64.., u in 1u64..) {
            let f = sample_base_polynomial(m, &mut ChaCha20Rng::seed_from_u64(seed));
            let (r, a, u) = (m.reduce(r), m.reduce(a), m.reduce(u));
            prop_assume!(!a.is_zero() && !u.is_zero() && a != u);
            let fnew = f.shift(r);
            let got = interpolate(
                fnew.share_at(u),
                SharePoint::new(a, f.eval(a) + r),
                SharePoint::new(m.zero(), r),
            ).unwrap();
            prop_assert_eq!(got.constant(), r);
            prop_assert_eq!(got, fnew);
        }
    }
}
