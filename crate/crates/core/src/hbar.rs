//! Truncated formal power series in ℏ with complex coefficients.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Number of stored ℏ-orders; configured truncations must stay below this.
pub const HBAR_CAP: usize = 8;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `Σ_j c_j ℏ^j` for `j < HBAR_CAP`. Products drop orders beyond the cap;
/// observables truncate further to their configured `h_max`.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct HbarPoly {
    c: [Complex64; HBAR_CAP],
}

impl HbarPoly {
    pub fn zero() -> Self {
        Self { c: [ZERO; HBAR_CAP] }
    }

    pub fn constant(z: Complex64) -> Self {
        Self::monomial(z, 0)
    }

    pub fn real(x: f64) -> Self {
        Self::constant(Complex64::new(x, 0.0))
    }

    /// `z ℏ^j`; zero when `j` is beyond the cap.
    pub fn monomial(z: Complex64, j: usize) -> Self {
        let mut p = Self::zero();
        if j < HBAR_CAP {
            p.c[j] = z;
        }
        p
    }

    pub fn from_coeffs(cs: &[Complex64]) -> Self {
        let mut p = Self::zero();
        for (j, &z) in cs.iter().take(HBAR_CAP).enumerate() {
            p.c[j] = z;
        }
        p
    }

    pub fn coeff(&self, j: usize) -> Complex64 {
        if j < HBAR_CAP {
            self.c[j]
        } else {
            ZERO
        }
    }

    pub fn coeffs(&self) -> &[Complex64; HBAR_CAP] {
        &self.c
    }

    pub fn set_coeff(&mut self, j: usize, z: Complex64) {
        if j < HBAR_CAP {
            self.c[j] = z;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|z| *z == ZERO)
    }

    /// Highest order with a nonzero coefficient.
    pub fn order(&self) -> Option<usize> {
        self.c.iter().rposition(|z| *z != ZERO)
    }

    /// Drops orders above `h_max`.
    pub fn truncate(mut self, h_max: usize) -> Self {
        for z in self.c.iter_mut().skip(h_max + 1) {
            *z = ZERO;
        }
        self
    }

    /// Multiplies by `ℏ^j`.
    pub fn shift(&self, j: usize) -> Self {
        let mut p = Self::zero();
        for i in 0..HBAR_CAP.saturating_sub(j) {
            p.c[i + j] = self.c[i];
        }
        p
    }

    pub fn scale(&self, z: Complex64) -> Self {
        let mut p = *self;
        p.c.iter_mut().for_each(|c| *c *= z);
        p
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (*self - *other).max_abs() <= tol
    }
}

impl Add for HbarPoly {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for HbarPoly {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a += b;
        }
    }
}

impl Sub for HbarPoly {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a -= b;
        }
        self
    }
}

impl Neg for HbarPoly {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.c.iter_mut().for_each(|z| *z = -*z);
        self
    }
}

impl Mul for HbarPoly {
    type Output = Self;
    /// Cauchy product. Each order sums the pairs `(i, n−i)` and `(n−i, i)`
    /// together, so `a * b` and `b * a` agree bit for bit.
    fn mul(self, rhs: Self) -> Self {
        let la = self.order();
        let lb = rhs.order();
        let (Some(la), Some(lb)) = (la, lb) else {
            return Self::zero();
        };
        let mut p = Self::zero();
        for n in 0..HBAR_CAP.min(la + lb + 1) {
            let mut acc = ZERO;
            for i in 0..=n / 2 {
                let j = n - i;
                if i == j {
                    acc += self.c[i] * rhs.c[j];
                } else {
                    acc += self.c[i] * rhs.c[j] + self.c[j] * rhs.c[i];
                }
            }
            p.c[n] = acc;
        }
        p
    }
}

impl fmt::Debug for HbarPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Some(top) = self.order() else {
            return write!(f, "0");
        };
        let parts: Vec<String> = (0..=top)
            .filter(|&j| self.c[j] != ZERO)
            .map(|j| format!("({:.6e}{:+.6e}i)ħ^{j}", self.c[j].re, self.c[j].im))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl Serialize for HbarPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let n = self.order().map_or(0, |o| o + 1);
        let v: Vec<[f64; 2]> = self.c[..n].iter().map(|z| [z.re, z.im]).collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for HbarPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Vec<[f64; 2]> = Vec::deserialize(d)?;
        if v.len() > HBAR_CAP {
            return Err(serde::de::Error::custom("too many ħ orders"));
        }
        let cs: Vec<Complex64> = v.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
        Ok(Self::from_coeffs(&cs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_poly() -> impl Strategy<Value = HbarPoly> {
        proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 0..5).prop_map(|v| {
            let cs: Vec<Complex64> = v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
            HbarPoly::from_coeffs(&cs)
        })
    }

    #[test]
    fn product_of_one_plus_hbar_squared() {
        let p = HbarPoly::from_coeffs(&[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        let q = p * p;
        assert_eq!(q.coeff(0).re, 1.0);
        assert_eq!(q.coeff(1).re, 2.0);
        assert_eq!(q.coeff(2).re, 1.0);
        assert_eq!(q.order(), Some(2));
    }

    #[test]
    fn overflow_is_silent() {
        let top = HbarPoly::monomial(Complex64::new(1.0, 0.0), HBAR_CAP - 1);
        let h = HbarPoly::monomial(Complex64::new(1.0, 0.0), 1);
        assert!((top * h).is_zero());
        assert!(top.shift(1).is_zero());
        assert!(HbarPoly::monomial(Complex64::new(1.0, 0.0), 3).truncate(2).is_zero());
    }

    #[test]
    fn json_round_trip() {
        let p = HbarPoly::from_coeffs(&[Complex64::new(1.0, -2.0), ZERO, Complex64::new(0.5, 0.0)]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[[1.0,-2.0],[0.0,0.0],[0.5,0.0]]");
        let back: HbarPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn multiplication_commutes_bitwise(a in arb_poly(), b in arb_poly()) {
            prop_assert_eq!(a * b, b * a);
        }

        #[test]
        fn multiplication_associates(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
            prop_assert!(((a * b) * c).approx_eq(&(a * (b * c)), 1e-12));
        }

        #[test]
        fn shift_is_multiplication_by_hbar(a in arb_poly(), j in 0usize..4) {
            let h = HbarPoly::monomial(Complex64::new(1.0, 0.0), j);
            prop_assert!((a * h).approx_eq(&a.shift(j), 0.0));
        }
    }
}
