//! Complex numbers over fixed-point reals, componentwise.
//!
//! Rounding discipline: addition/subtraction/negation/conjugation are exact;
//! multiplication rounds each component once (the products `ac−bd`, `ad+bc`
//! are formed exactly in 256-bit integers before a single half-even
//! rounding); division rounds the denominator `|w|²` once and then each
//! quotient component once, for at most two roundings per component. These
//! are the bounds the FFT and sampling error budgets are built from.

use super::fixed::{Fixed, Precision};
use crate::numeric::fixed as fx;
use num_bigint::BigInt;
use std::fmt;

/// A complex value with fixed-point real and imaginary parts (same scale).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexFixed {
    pub re: Fixed,
    pub im: Fixed,
}

impl ComplexFixed {
    pub fn new(re: Fixed, im: Fixed) -> Self {
        debug_assert_eq!(re.precision().bits, im.precision().bits, "mixed precisions");
        ComplexFixed { re, im }
    }

    pub fn zero(prec: Precision) -> Self {
        ComplexFixed { re: Fixed::zero(prec), im: Fixed::zero(prec) }
    }

    pub fn one(prec: Precision) -> Self {
        ComplexFixed { re: Fixed::one(prec), im: Fixed::zero(prec) }
    }

    pub fn from_re(re: Fixed) -> Self {
        let prec = re.precision();
        ComplexFixed { re, im: Fixed::zero(prec) }
    }

    pub fn precision(&self) -> Precision {
        self.re.precision()
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    /// Exact addition.
    pub fn add(&self, rhs: &ComplexFixed) -> ComplexFixed {
        ComplexFixed { re: self.re.add(&rhs.re), im: self.im.add(&rhs.im) }
    }

    /// Exact subtraction.
    pub fn sub(&self, rhs: &ComplexFixed) -> ComplexFixed {
        ComplexFixed { re: self.re.sub(&rhs.re), im: self.im.sub(&rhs.im) }
    }

    /// Exact negation.
    pub fn neg(&self) -> ComplexFixed {
        ComplexFixed { re: self.re.neg(), im: self.im.neg() }
    }

    /// Exact conjugation.
    pub fn conj(&self) -> ComplexFixed {
        ComplexFixed { re: self.re.clone(), im: self.im.neg() }
    }

    /// Product with one half-even rounding per component: the real part is
    /// `round((ac − bd)/2^B)` of the exact 256-bit integer, likewise the
    /// imaginary part for `ad + bc`. Componentwise error ≤ 2^{−B−1}.
    pub fn mul(&self, rhs: &ComplexFixed) -> ComplexFixed {
        let bits = self.re.precision().bits;
        debug_assert_eq!(bits, rhs.re.precision().bits, "mixed precisions");
        if let (Some(a), Some(b), Some(c), Some(d)) = (
            self.re.mantissa_i128(),
            self.im.mantissa_i128(),
            rhs.re.mantissa_i128(),
            rhs.im.mantissa_i128(),
        ) {
            if let (Some(re), Some(im)) =
                (fx::dot2_rhe_i128(a, c, -b, d, bits), fx::dot2_rhe_i128(a, d, b, c, bits))
            {
                let prec = self.re.precision();
                return ComplexFixed {
                    re: Fixed::from_mantissa_i128(re, prec),
                    im: Fixed::from_mantissa_i128(im, prec),
                };
            }
        }
        self.mul_big(rhs)
    }

    /// Arbitrary-size fallback for `mul`, identical rounding semantics.
    fn mul_big(&self, rhs: &ComplexFixed) -> ComplexFixed {
        let bits = self.re.precision().bits;
        let prec = self.re.precision();
        let (a, b) = (self.re.mantissa_big(), self.im.mantissa_big());
        let (c, d) = (rhs.re.mantissa_big(), rhs.im.mantissa_big());
        let scale = BigInt::from(1) << bits;
        let re = fx::div_rhe_big(&(&a * &c - &b * &d), &scale);
        let im = fx::div_rhe_big(&(&a * &d + &b * &c), &scale);
        ComplexFixed {
            re: Fixed::from_mantissa_big(re, prec),
            im: Fixed::from_mantissa_big(im, prec),
        }
    }

    /// `|self|²` with a single half-even rounding.
    pub fn norm_sqr(&self) -> Fixed {
        let bits = self.re.precision().bits;
        let prec = self.re.precision();
        if let (Some(a), Some(b)) = (self.re.mantissa_i128(), self.im.mantissa_i128()) {
            if let Some(v) = fx::dot2_rhe_i128(a, a, b, b, bits) {
                return Fixed::from_mantissa_i128(v, prec);
            }
        }
        let (a, b) = (self.re.mantissa_big(), self.im.mantissa_big());
        let scale = BigInt::from(1) << bits;
        Fixed::from_mantissa_big(fx::div_rhe_big(&(&a * &a + &b * &b), &scale), prec)
    }

    /// Quotient `self / rhs` via `z·conj(w)/|w|²`: the denominator `|w|²` is
    /// rounded once, the numerator components are exact 256-bit integers, and
    /// each component takes one final rounding — at most two roundings per
    /// component in total. The caller must keep `rhs` away from zero (the
    /// decomposition sampler checks its pole guard before dividing).
    pub fn div(&self, rhs: &ComplexFixed) -> ComplexFixed {
        let prec = self.re.precision();
        let den = rhs.norm_sqr();
        assert!(!den.is_zero(), "complex division by zero modulus");
        if let (Some(a), Some(b), Some(c), Some(d), Some(dm)) = (
            self.re.mantissa_i128(),
            self.im.mantissa_i128(),
            rhs.re.mantissa_i128(),
            rhs.im.mantissa_i128(),
            den.mantissa_i128(),
        ) {
            // numerators: z·conj(w) = (ac + bd) + (bc − ad)i, exact
            let (rn, rh, rl) = fx::prod_sum_signed(a, c, b, d);
            let (in_, ih, il) = fx::prod_sum_signed(b, c, -a, d);
            // value = (n·2^{−2B}) / (dm·2^{−B}) = (n/dm)·2^{−B}
            let dm = dm as u128;
            if let (Some(re), Some(im)) = (
                fx::signed_div_rhe_u256(rn, rh, rl, dm),
                fx::signed_div_rhe_u256(in_, ih, il, dm),
            ) {
                return ComplexFixed {
                    re: Fixed::from_mantissa_i128(re, prec),
                    im: Fixed::from_mantissa_i128(im, prec),
                };
            }
        }
        // arbitrary-size fallback, same two-rounding semantics
        let (a, b) = (self.re.mantissa_big(), self.im.mantissa_big());
        let (c, d) = (rhs.re.mantissa_big(), rhs.im.mantissa_big());
        let dm = den.mantissa_big();
        let re = fx::div_rhe_big(&(&a * &c + &b * &d), &dm);
        let im = fx::div_rhe_big(&(&b * &c - &a * &d), &dm);
        ComplexFixed {
            re: Fixed::from_mantissa_big(re, prec),
            im: Fixed::from_mantissa_big(im, prec),
        }
    }

    /// Exact scaling by a machine integer.
    pub fn mul_int(&self, k: i64) -> ComplexFixed {
        ComplexFixed { re: self.re.mul_int(k), im: self.im.mul_int(k) }
    }

    /// Halving with one rounding per component (the per-stage normalization
    /// of the scaled inverse FFT).
    pub fn div2(&self) -> ComplexFixed {
        ComplexFixed { re: self.re.div_pow2(1), im: self.im.div_pow2(1) }
    }

    /// `self · i` (exact component swap).
    pub fn mul_i(&self) -> ComplexFixed {
        ComplexFixed { re: self.im.neg(), im: self.re.clone() }
    }

    /// Upper bound on `|self|` as `|re| + |im|` (exact ℓ¹ proxy, diagnostics
    /// and pole guards).
    pub fn abs_l1(&self) -> Fixed {
        self.re.abs().add(&self.im.abs())
    }
}

impl fmt::Display for ComplexFixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.re, self.im)
    }
}
