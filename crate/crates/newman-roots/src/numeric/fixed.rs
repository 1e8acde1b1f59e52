//! Fixed-point reals: value = `mantissa · 2^{−B}` with a global per-run `B`.
//!
//! Error model: every operation returns a value within one unit in the last
//! place (2^{−B}) of the exact result, using round-half-to-even; addition,
//! subtraction and negation are exact (same scale). Division occurs only by
//! integers and by small integer ratios, implemented as exact integer
//! multiply followed by a single rounded division.
//!
//! Two mantissa backends sit behind one type:
//! - `Small(i128)` — used whenever intermediates fit in 256-bit products;
//!   all multiplications go through exact 128×128→256-bit limb arithmetic
//!   followed by one rounding, so the backend never loses precision.
//! - `Big(BigInt)` — arbitrary size; the same rounding rules.
//!
//! Results are demoted back to `Small` whenever they fit, so pipelines stay
//! on the fast path; the two backends are exactly equivalent (property-tested)
//! because both implement the same single-rounding semantics.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;

/// Global fixed-point scale for one run: values are `mantissa · 2^{−bits}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Precision {
    /// Fractional bits `B`; one ulp is `2^{−bits}`.
    pub bits: u32,
}

impl Precision {
    pub fn new(bits: u32) -> Self {
        assert!(bits >= 2 && bits <= 1 << 20, "unreasonable precision {bits}");
        Precision { bits }
    }
}

/// Mantissa storage: `i128` fast path, `BigInt` fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Mant {
    Small(i128),
    Big(BigInt),
}

/// A fixed-point real number `mantissa · 2^{−bits}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixed {
    mant: Mant,
    bits: u32,
}

/// Keep `Small` products inside 256 bits with room for rounding: mantissas up
/// to 2^126 are held; anything larger is promoted to `Big`.
const SMALL_LIMIT: i128 = 1 << 126;

/// 256-bit unsigned product of two u128 values, as (hi, lo).
#[inline]
pub(crate) fn wide_mul_u128(a: u128, b: u128) -> (u128, u128) {
    let (a1, a0) = ((a >> 64) as u64, a as u64);
    let (b1, b0) = ((b >> 64) as u64, b as u64);
    let ll = (a0 as u128) * (b0 as u128);
    let lh = (a0 as u128) * (b1 as u128);
    let hl = (a1 as u128) * (b0 as u128);
    let hh = (a1 as u128) * (b1 as u128);
    let (mid, mid_carry) = lh.overflowing_add(hl);
    let (lo, lo_carry) = ll.overflowing_add(mid << 64);
    let hi = hh
        .wrapping_add(mid >> 64)
        .wrapping_add((mid_carry as u128) << 64)
        .wrapping_add(lo_carry as u128);
    (hi, lo)
}

/// Round-half-even right shift of the 256-bit value (hi, lo) by `sh` bits
/// (1 ≤ sh ≤ 192). Returns `None` if the result exceeds u128.
#[inline]
pub(crate) fn rhe_shift_u256(hi: u128, lo: u128, sh: u32) -> Option<u128> {
    debug_assert!(sh >= 1 && sh <= 192);
    let (q, rem, half_mask) = if sh <= 127 {
        if hi >> sh != 0 {
            return None;
        }
        let q = (hi << (128 - sh)) | (lo >> sh);
        let rem = lo & ((1u128 << sh) - 1);
        (q, rem, 1u128 << (sh - 1))
    } else if sh == 128 {
        (hi, lo, 1u128 << 127)
    } else {
        // 129..=192: quotient comes from hi only; remainder spans hi's low
        // bits and all of lo. Compare against half = 2^{sh-1}.
        let s = sh - 128;
        let q = hi >> s;
        let rem_hi = hi & ((1u128 << s) - 1);
        // round decision on (rem_hi, lo) vs half = 2^{s-1} in the hi limb
        let half_hi = 1u128 << (s - 1);
        let round_up = match rem_hi.cmp(&half_hi) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => {
                if lo != 0 {
                    true
                } else {
                    q & 1 == 1
                }
            }
        };
        return q.checked_add(round_up as u128);
    };
    let round_up = match rem.cmp(&half_mask) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => q & 1 == 1,
    };
    q.checked_add(round_up as u128)
}

/// Exact product of two i128 values rounded (half-even) down by `sh` bits;
/// `None` when the rounded result does not fit the `Small` mantissa range.
#[inline]
pub(crate) fn mul_rhe_i128(a: i128, b: i128, sh: u32) -> Option<i128> {
    let neg = (a < 0) != (b < 0);
    let (hi, lo) = wide_mul_u128(a.unsigned_abs(), b.unsigned_abs());
    let mag = rhe_shift_u256(hi, lo, sh)?;
    if mag >= SMALL_LIMIT as u128 {
        return None;
    }
    let v = mag as i128;
    Some(if neg { -v } else { v })
}

/// Exact `a·b + c·d` as sign-magnitude 256-bit: `(negative, hi, lo)`.
/// Inputs are bounded by 2^126, so the sum of two 252-bit products cannot
/// overflow 256 bits.
#[inline]
pub(crate) fn prod_sum_signed(a: i128, b: i128, c: i128, d: i128) -> (bool, u128, u128) {
    let s1 = (a < 0) != (b < 0);
    let (h1, l1) = wide_mul_u128(a.unsigned_abs(), b.unsigned_abs());
    let s2 = (c < 0) != (d < 0);
    let (h2, l2) = wide_mul_u128(c.unsigned_abs(), d.unsigned_abs());
    if s1 == s2 {
        let (lo, carry) = l1.overflowing_add(l2);
        let hi = h1 + h2 + carry as u128;
        let neg = s1 && (hi != 0 || lo != 0);
        (neg, hi, lo)
    } else {
        match (h1, l1).cmp(&(h2, l2)) {
            Ordering::Equal => (false, 0, 0),
            Ordering::Greater => {
                let (lo, borrow) = l1.overflowing_sub(l2);
                (s1, h1 - h2 - borrow as u128, lo)
            }
            Ordering::Less => {
                let (lo, borrow) = l2.overflowing_sub(l1);
                (s2, h2 - h1 - borrow as u128, lo)
            }
        }
    }
}

/// `round_half_even((a·b + c·d) / 2^sh)` with exact 256-bit intermediates —
/// the single-rounding kernel behind complex multiplication. `None` when the
/// result leaves the fast-path mantissa range.
#[inline]
pub(crate) fn dot2_rhe_i128(a: i128, b: i128, c: i128, d: i128, sh: u32) -> Option<i128> {
    let (neg, hi, lo) = prod_sum_signed(a, b, c, d);
    let mag = rhe_shift_u256(hi, lo, sh)?;
    if mag >= SMALL_LIMIT as u128 {
        return None;
    }
    let v = mag as i128;
    Some(if neg { -v } else { v })
}

/// Quotient estimate for one Knuth-D step: floor((u2·2^128 + u1·2^64 + u0) /
/// (d1·2^64 + d0)) assuming it fits in u64 and d1 has its top bit set.
#[inline]
fn div3by2_estimate(u2: u64, u1: u64, u0: u64, d1: u64, d0: u64) -> u64 {
    let u21 = ((u2 as u128) << 64) | u1 as u128;
    let mut qhat = if u2 >= d1 { u64::MAX as u128 } else { u21 / d1 as u128 };
    let mut rhat = u21 - qhat * d1 as u128;
    while rhat <= u64::MAX as u128 && qhat * d0 as u128 > ((rhat << 64) | u0 as u128) {
        qhat -= 1;
        rhat += d1 as u128;
    }
    qhat as u64
}

/// One long-division step: `(dividend_hi·2^64·2^64 + rest) / d_norm` where the
/// 192-bit dividend is `(hi64, lo128)`, `d_norm` has its top bit set, and the
/// quotient fits u64 (caller guarantees `dividend < d_norm · 2^64`).
#[inline]
fn div_step_192_by_128(hi64: u64, lo128: u128, d_norm: u128) -> (u64, u128) {
    let d1 = (d_norm >> 64) as u64;
    let d0 = d_norm as u64;
    let u2 = hi64;
    let u1 = (lo128 >> 64) as u64;
    let u0 = lo128 as u64;
    let mut qhat = div3by2_estimate(u2, u1, u0, d1, d0);
    // multiply-subtract with single possible add-back
    let (p_hi, p_lo) = wide_mul_u128(qhat as u128, d_norm);
    let (mut rem_lo, borrow) = lo128.overflowing_sub(p_lo);
    let mut rem_hi = (hi64 as i128) - (p_hi as i128) - borrow as i128;
    if rem_hi < 0 {
        qhat -= 1;
        let (nl, carry) = rem_lo.overflowing_add(d_norm);
        rem_lo = nl;
        rem_hi += carry as i128;
        // rem_hi is now 0; Knuth guarantees one add-back suffices
    }
    debug_assert!(rem_hi == 0 && rem_lo < d_norm);
    (qhat, rem_lo)
}

/// `(quotient, remainder)` of the 256-bit value `(hi, lo)` by `d`, requiring
/// `hi < d` so that the quotient fits in u128. Knuth algorithm D with 64-bit
/// limbs; the `d < 2^64` case chains hardware 128/64 divisions instead.
pub(crate) fn divrem_u256_u128(hi: u128, lo: u128, d: u128) -> (u128, u128) {
    debug_assert!(d > 0 && hi < d);
    if hi == 0 {
        return (lo / d, lo % d);
    }
    if d <= u64::MAX as u128 {
        // hi < d < 2^64: two chained divisions with a running remainder
        let mut rem = hi; // < d
        let limbs = [(lo >> 64) as u64, lo as u64];
        let mut q = [0u64; 2];
        for i in 0..2 {
            let cur = (rem << 64) | limbs[i] as u128;
            q[i] = (cur / d) as u64; // cur < d·2^64 so the quotient fits
            rem = cur % d;
        }
        return (((q[0] as u128) << 64) | q[1] as u128, rem);
    }
    // normalize divisor so its top bit is set
    let s = d.leading_zeros();
    let dn = d << s;
    let hi_n = if s == 0 { hi } else { (hi << s) | (lo >> (128 - s)) };
    let lo_n = lo << s;
    // first quotient limb: dividend (hi_n, top limb of lo_n)
    let (q1, r1) = div_step_192_by_128(
        (hi_n >> 64) as u64,
        (hi_n << 64) | (lo_n >> 64),
        dn,
    );
    // second limb: dividend (r1, bottom limb of lo_n)
    let (q2, r2) = div_step_192_by_128((r1 >> 64) as u64, (r1 << 64) | (lo_n as u64 as u128), dn);
    (((q1 as u128) << 64) | q2 as u128, r2 >> s)
}

/// Round-half-even of the signed 256-bit value `(neg, hi, lo)` divided by the
/// positive `d`; `None` when the quotient leaves the fast-path range.
#[inline]
pub(crate) fn signed_div_rhe_u256(neg: bool, hi: u128, lo: u128, d: u128) -> Option<i128> {
    if hi >= d {
        return None; // quotient would exceed u128
    }
    let (q, r) = divrem_u256_u128(hi, lo, d);
    let round_up = match r.cmp(&(d - r)) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => q & 1 == 1,
    };
    let mag = q.checked_add(round_up as u128)?;
    if mag >= SMALL_LIMIT as u128 {
        return None;
    }
    let v = mag as i128;
    Some(if neg { -v } else { v })
}

/// Round-half-even division of an i128 by a positive divisor.
#[inline]
pub(crate) fn div_rhe_i128(n: i128, d: i128) -> i128 {
    debug_assert!(d > 0);
    let neg = n < 0;
    let un = n.unsigned_abs();
    let ud = d as u128;
    let q = un / ud;
    let r = un % ud;
    let round_up = match (2 * r).cmp(&ud) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => q & 1 == 1,
    };
    let mag = q + round_up as u128;
    let v = mag as i128;
    if neg {
        -v
    } else {
        v
    }
}

/// Round-half-even of `n / d` over BigInt, `d > 0`.
pub(crate) fn div_rhe_big(n: &BigInt, d: &BigInt) -> BigInt {
    debug_assert!(d.is_positive());
    let neg = n.is_negative();
    let un = n.abs();
    let (q, r) = un.div_rem(d);
    let r2: BigInt = &r + &r;
    let round_up = match r2.cmp(d) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => q.is_odd(),
    };
    let mag = if round_up { q + 1 } else { q };
    if neg {
        -mag
    } else {
        mag
    }
}

impl Mant {
    fn to_big(&self) -> BigInt {
        match self {
            Mant::Small(v) => BigInt::from(*v),
            Mant::Big(b) => b.clone(),
        }
    }

    /// Demote to `Small` when the value fits the fast-path range.
    fn normalized(self) -> Mant {
        match self {
            Mant::Big(b) => match b.to_i128() {
                Some(v) if v.abs() < SMALL_LIMIT => Mant::Small(v),
                _ => Mant::Big(b),
            },
            s => s,
        }
    }
}

impl Fixed {
    // ------------------------------------------------------------ constructors

    /// Exact zero at scale `prec`.
    pub fn zero(prec: Precision) -> Self {
        Fixed { mant: Mant::Small(0), bits: prec.bits }
    }

    /// Exact one: mantissa `2^B`.
    pub fn one(prec: Precision) -> Self {
        Fixed::from_int(1, prec)
    }

    /// Exact small integer (mantissa `v · 2^B`).
    pub fn from_int(v: i64, prec: Precision) -> Self {
        if prec.bits <= 60 {
            Fixed { mant: Mant::Small((v as i128) << prec.bits), bits: prec.bits }
        } else {
            let m = BigInt::from(v) << prec.bits;
            Fixed { mant: m.into_mant(), bits: prec.bits }
        }
    }

    /// Construct from a raw mantissa (value = `mant · 2^{−B}`). Exact.
    pub fn from_mantissa_i128(mant: i128, prec: Precision) -> Self {
        Fixed { mant: Mant::Small(mant), bits: prec.bits }
    }

    /// Construct from a raw `BigInt` mantissa. Exact.
    pub fn from_mantissa_big(mant: BigInt, prec: Precision) -> Self {
        Fixed { mant: Mant::Big(mant).normalized(), bits: prec.bits }
    }

    /// Nearest fixed-point value to the rational `p/q` (round-half-even):
    /// `|result − p/q| ≤ 2^{−B−1}`. `q` must be nonzero; signs may sit on
    /// either argument.
    pub fn from_rational(p: &BigInt, q: &BigInt, prec: Precision) -> Self {
        assert!(!q.is_zero(), "rational with zero denominator");
        let (p, q) = if q.is_negative() { (-p, -q) } else { (p.clone(), q.clone()) };
        let num = p << prec.bits;
        let mant = div_rhe_big(&num, &q);
        Fixed { mant: Mant::Big(mant).normalized(), bits: prec.bits }
    }

    /// Convenience wrapper over machine-word rationals.
    pub fn from_ratio(p: i64, q: i64, prec: Precision) -> Self {
        Self::from_rational(&BigInt::from(p), &BigInt::from(q), prec)
    }

    /// Nearest fixed-point value to a dyadic `m·2^e` (half-even; exact when
    /// the dyadic already fits the scale).
    pub fn from_dyadic(d: &crate::numeric::dyadic::Dyadic, prec: Precision) -> Self {
        let e = d.exponent() + prec.bits as i64;
        let mant = if e >= 0 {
            d.mantissa() << e as u64
        } else {
            div_rhe_big(d.mantissa(), &(BigInt::from(1) << (-e) as u64))
        };
        Fixed::from_mantissa_big(mant, prec)
    }

    // ------------------------------------------------------------ accessors

    pub fn precision(&self) -> Precision {
        Precision { bits: self.bits }
    }

    /// Mantissa as `i128` when on the fast path.
    pub fn mantissa_i128(&self) -> Option<i128> {
        match &self.mant {
            Mant::Small(v) => Some(*v),
            Mant::Big(_) => None,
        }
    }

    /// Mantissa as `BigInt` (always available).
    pub fn mantissa_big(&self) -> BigInt {
        self.mant.to_big()
    }

    pub fn is_zero(&self) -> bool {
        match &self.mant {
            Mant::Small(v) => *v == 0,
            Mant::Big(b) => b.is_zero(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match &self.mant {
            Mant::Small(v) => *v < 0,
            Mant::Big(b) => b.is_negative(),
        }
    }

    /// Approximate `f64` value (diagnostics only; never feeds computation).
    pub fn to_f64(&self) -> f64 {
        match &self.mant {
            Mant::Small(v) => *v as f64 / (self.bits as f64).exp2(),
            Mant::Big(b) => {
                // avoid f64 overflow for huge mantissas: check bit length
                let bits = b.bits() as i64;
                if bits <= 900 {
                    b.to_f64().unwrap_or(f64::NAN) / (self.bits as f64).exp2()
                } else {
                    f64::INFINITY * if b.is_negative() { -1.0 } else { 1.0 }
                }
            }
        }
    }

    /// Exact value as a reduced rational string `p/q` (for serialization).
    pub fn to_rational_string(&self) -> String {
        let m = self.mant.to_big();
        if m.is_zero() {
            return "0".to_string();
        }
        // value = m / 2^B; reduce by the power of two dividing m
        let tz = m.trailing_zeros().unwrap_or(0).min(self.bits as u64);
        let p = &m >> tz;
        let shift = self.bits as u64 - tz;
        if shift == 0 {
            format!("{p}")
        } else {
            format!("{}/{}", p, BigInt::from(1) << shift)
        }
    }

    // ------------------------------------------------------------ exact ops

    /// Exact addition (same scale, no rounding).
    pub fn add(&self, rhs: &Fixed) -> Fixed {
        debug_assert_eq!(self.bits, rhs.bits, "mixed precisions");
        let mant = match (&self.mant, &rhs.mant) {
            (Mant::Small(a), Mant::Small(b)) => match a.checked_add(*b) {
                Some(v) if v.abs() < SMALL_LIMIT => Mant::Small(v),
                _ => Mant::Big(BigInt::from(*a) + BigInt::from(*b)),
            },
            (a, b) => Mant::Big(a.to_big() + b.to_big()).normalized(),
        };
        Fixed { mant, bits: self.bits }
    }

    /// Exact subtraction.
    pub fn sub(&self, rhs: &Fixed) -> Fixed {
        self.add(&rhs.neg())
    }

    /// Exact negation.
    pub fn neg(&self) -> Fixed {
        let mant = match &self.mant {
            Mant::Small(v) => Mant::Small(-v),
            Mant::Big(b) => Mant::Big(-b),
        };
        Fixed { mant, bits: self.bits }
    }

    /// Exact absolute value.
    pub fn abs(&self) -> Fixed {
        if self.is_negative() {
            self.neg()
        } else {
            self.clone()
        }
    }

    /// Exact comparison.
    pub fn cmp_fixed(&self, rhs: &Fixed) -> Ordering {
        debug_assert_eq!(self.bits, rhs.bits, "mixed precisions");
        match (&self.mant, &rhs.mant) {
            (Mant::Small(a), Mant::Small(b)) => a.cmp(b),
            (a, b) => a.to_big().cmp(&b.to_big()),
        }
    }

    // ------------------------------------------------------------ rounded ops

    /// Product with one rounding: round-half-even of the exact product.
    pub fn mul(&self, rhs: &Fixed) -> Fixed {
        debug_assert_eq!(self.bits, rhs.bits, "mixed precisions");
        let bits = self.bits;
        let mant = match (&self.mant, &rhs.mant) {
            (Mant::Small(a), Mant::Small(b)) => match mul_rhe_i128(*a, *b, bits) {
                Some(v) => Mant::Small(v),
                None => {
                    let prod = BigInt::from(*a) * BigInt::from(*b);
                    Mant::Big(div_rhe_big(&prod, &(BigInt::from(1) << bits))).normalized()
                }
            },
            (a, b) => {
                let prod = a.to_big() * b.to_big();
                Mant::Big(div_rhe_big(&prod, &(BigInt::from(1) << bits))).normalized()
            }
        };
        Fixed { mant, bits }
    }

    /// Exact multiplication by a machine integer (promotes on overflow).
    pub fn mul_int(&self, k: i64) -> Fixed {
        let mant = match &self.mant {
            Mant::Small(v) => match v.checked_mul(k as i128) {
                Some(m) if m.abs() < SMALL_LIMIT => Mant::Small(m),
                _ => Mant::Big(BigInt::from(*v) * k),
            },
            Mant::Big(b) => Mant::Big(b * k).normalized(),
        };
        Fixed { mant, bits: self.bits }
    }

    /// Division by a positive machine integer, one rounding.
    pub fn div_int(&self, k: i64) -> Fixed {
        assert!(k > 0, "division only by positive integers");
        let mant = match &self.mant {
            Mant::Small(v) => Mant::Small(div_rhe_i128(*v, k as i128)),
            Mant::Big(b) => Mant::Big(div_rhe_big(b, &BigInt::from(k))).normalized(),
        };
        Fixed { mant, bits: self.bits }
    }

    /// `self · num / den` with exact integer intermediates and one rounding
    /// (the `(L+m+1)/(L+m)`-style update). `den > 0`.
    pub fn mul_ratio(&self, num: i64, den: i64) -> Fixed {
        assert!(den > 0, "ratio denominator must be positive");
        let mant = match &self.mant {
            Mant::Small(v) => match v.checked_mul(num as i128) {
                Some(p) => Mant::Small(div_rhe_i128(p, den as i128)),
                None => {
                    let p = BigInt::from(*v) * num;
                    Mant::Big(div_rhe_big(&p, &BigInt::from(den))).normalized()
                }
            },
            Mant::Big(b) => {
                let p = b * num;
                Mant::Big(div_rhe_big(&p, &BigInt::from(den))).normalized()
            }
        };
        Fixed { mant, bits: self.bits }
    }

    /// Quotient `self / rhs` with exact integer intermediates and one
    /// rounding. `rhs` must be nonzero; used on the decomposition sampling
    /// path (complex division goes through this componentwise).
    pub fn div(&self, rhs: &Fixed) -> Fixed {
        debug_assert_eq!(self.bits, rhs.bits, "mixed precisions");
        assert!(!rhs.is_zero(), "fixed-point division by zero");
        let bits = self.bits;
        // (a·2^{-B}) / (b·2^{-B}) = a/b; scale by 2^B and round once.
        let num = self.mant.to_big() << bits;
        let mut den = rhs.mant.to_big();
        let mut num = num;
        if den.is_negative() {
            den = -den;
            num = -num;
        }
        let mant = Mant::Big(div_rhe_big(&num, &den)).normalized();
        Fixed { mant, bits }
    }

    /// Division by `2^sh` with one rounding (half-even).
    pub fn div_pow2(&self, sh: u32) -> Fixed {
        if sh == 0 {
            return self.clone();
        }
        let mant = match &self.mant {
            Mant::Small(v) => {
                let neg = *v < 0;
                let mag = rhe_shift_u256(0, v.unsigned_abs(), sh).expect("shift narrows");
                let m = mag as i128;
                Mant::Small(if neg { -m } else { m })
            }
            Mant::Big(b) => Mant::Big(div_rhe_big(b, &(BigInt::from(1) << sh))).normalized(),
        };
        Fixed { mant, bits: self.bits }
    }

    /// Change scale to `to` with one rounding (half-even) when narrowing;
    /// exact when widening.
    pub fn rescale(&self, to: Precision) -> Fixed {
        if to.bits == self.bits {
            return self.clone();
        }
        if to.bits > self.bits {
            let sh = to.bits - self.bits;
            let mant = match &self.mant {
                Mant::Small(v) => {
                    if v.unsigned_abs().leading_zeros() > sh + 1 {
                        Mant::Small(v << sh)
                    } else {
                        Mant::Big(BigInt::from(*v) << sh)
                    }
                }
                Mant::Big(b) => Mant::Big(b << sh),
            };
            return Fixed { mant, bits: to.bits };
        }
        let sh = self.bits - to.bits;
        let mant = match &self.mant {
            Mant::Small(v) => {
                let neg = *v < 0;
                let mag = rhe_shift_u256(0, v.unsigned_abs(), sh).expect("narrowing fits");
                let m = mag as i128;
                Mant::Small(if neg { -m } else { m })
            }
            Mant::Big(b) => Mant::Big(div_rhe_big(b, &(BigInt::from(1) << sh))).normalized(),
        };
        Fixed { mant, bits: to.bits }
    }
}

trait IntoMant {
    fn into_mant(self) -> Mant;
}
impl IntoMant for BigInt {
    fn into_mant(self) -> Mant {
        Mant::Big(self).normalized()
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_rational_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(bits: u32) -> Precision {
        Precision::new(bits)
    }

    #[test]
    fn half_is_exact() {
        // (1, 2, B) → mantissa 2^{B−1}
        for bits in [8, 32, 70, 88, 200] {
            let x = Fixed::from_ratio(1, 2, p(bits));
            assert_eq!(x.mantissa_big(), BigInt::from(1) << (bits - 1));
        }
    }

    #[test]
    fn third_rounds_to_nearest() {
        // (1, 3, 4) → mantissa 5 (5/16 nearest to 1/3)
        let x = Fixed::from_ratio(1, 3, p(4));
        assert_eq!(x.mantissa_i128(), Some(5));
        // (−1, 3, 4) → −5 by symmetry
        let y = Fixed::from_ratio(-1, 3, p(4));
        assert_eq!(y.mantissa_i128(), Some(-5));
    }

    #[test]
    fn ties_round_to_even() {
        // 1/32 at B=4: mantissa exact 0.5 → rounds to 0 (even), not 1
        let x = Fixed::from_ratio(1, 32, p(4));
        assert_eq!(x.mantissa_i128(), Some(0));
        // 3/32 at B=4: mantissa exact 1.5 → rounds to 2 (even)
        let y = Fixed::from_ratio(3, 32, p(4));
        assert_eq!(y.mantissa_i128(), Some(2));
        // negative ties mirror: −1/32 → 0, −3/32 → −2
        assert_eq!(Fixed::from_ratio(-1, 32, p(4)).mantissa_i128(), Some(0));
        assert_eq!(Fixed::from_ratio(-3, 32, p(4)).mantissa_i128(), Some(-2));
    }

    #[test]
    fn one_has_full_mantissa() {
        let one = Fixed::one(p(88));
        assert_eq!(one.mantissa_big(), BigInt::from(1) << 88);
    }

    #[test]
    fn mul_error_within_one_ulp() {
        // exact check: (1/3)·(1/3) at B=8: mantissas 85·85 = 7225; /256 =
        // 28.22… → 28
        let prec = p(8);
        let third = Fixed::from_ratio(1, 3, prec);
        assert_eq!(third.mantissa_i128(), Some(85));
        let sq = third.mul(&third);
        assert_eq!(sq.mantissa_i128(), Some(28));
    }

    #[test]
    fn rational_string_round_trip() {
        let prec = p(16);
        let x = Fixed::from_ratio(-7, 4, prec); // exactly representable
        assert_eq!(x.to_rational_string(), "-7/4");
        assert_eq!(Fixed::from_int(3, prec).to_rational_string(), "3");
        assert_eq!(Fixed::zero(prec).to_rational_string(), "0");
    }

    #[test]
    fn wide_mul_known_values() {
        assert_eq!(wide_mul_u128(u128::MAX, u128::MAX), (u128::MAX - 1, 1));
        assert_eq!(wide_mul_u128(1 << 100, 1 << 100), (1 << 72, 0));
        assert_eq!(wide_mul_u128(3, 5), (0, 15));
    }

    #[test]
    fn rhe_shift_large_shifts() {
        // shift beyond 128 bits exercises the hi-limb branch
        let v = rhe_shift_u256(1 << 10, 0, 138).unwrap(); // 2^138 >> 138 = 1
        assert_eq!(v, 1);
        // tie at sh=129: value 2^128 → 2^128/2^129 = 0.5 → even → 0
        assert_eq!(rhe_shift_u256(1, 0, 129).unwrap(), 0);
        // value 3·2^128 >> 129 = 1.5 → even → 2
        assert_eq!(rhe_shift_u256(3, 0, 129).unwrap(), 2);
        // sticky: 2^128 + 1 >> 129 = 0.5+ε → 1
        assert_eq!(rhe_shift_u256(1, 1, 129).unwrap(), 1);
    }

    proptest! {
        /// Small and Big backends agree bit-for-bit on multiplication.
        #[test]
        fn backends_agree_on_mul(a in -(1i128<<90)..(1i128<<90),
                                 b in -(1i128<<90)..(1i128<<90),
                                 bits in 8u32..120) {
            let prec = p(bits);
            let xs = Fixed::from_mantissa_i128(a, prec);
            let ys = Fixed::from_mantissa_i128(b, prec);
            let fast = xs.mul(&ys);
            let prod = BigInt::from(a) * BigInt::from(b);
            let slow = div_rhe_big(&prod, &(BigInt::from(1) << bits));
            prop_assert_eq!(fast.mantissa_big(), slow);
        }

        /// mul_ratio equals exact rational arithmetic rounded once.
        #[test]
        fn mul_ratio_single_rounding(a in -(1i128<<100)..(1i128<<100),
                                     num in 1i64..1_000_000,
                                     den in 1i64..1_000_000) {
            let prec = p(64);
            let x = Fixed::from_mantissa_i128(a, prec);
            let got = x.mul_ratio(num, den);
            let exact = BigInt::from(a) * num;
            let want = div_rhe_big(&exact, &BigInt::from(den));
            prop_assert_eq!(got.mantissa_big(), want);
        }

        /// from_rational is within half an ulp of p/q.
        #[test]
        fn from_rational_half_ulp(pn in -100_000i64..100_000, q in 1i64..100_000, bits in 8u32..100) {
            let prec = p(bits);
            let x = Fixed::from_rational(&BigInt::from(pn), &BigInt::from(q), prec);
            // |mant/2^B − p/q| ≤ 2^{−B−1}  ⟺  |2·mant·q − 2·p·2^B| ≤ q·... exact integers:
            let lhs_val = x.mantissa_big() * BigInt::from(2) * BigInt::from(q)
                - BigInt::from(pn) * BigInt::from(2) * (BigInt::from(1) << bits);
            prop_assert!(lhs_val.abs() <= BigInt::from(q));
        }

        /// Knuth-D 256/128 division agrees with BigInt division exactly.
        #[test]
        fn knuth_division_matches_bigint(hi in 0u128..u128::MAX, lo in 0u128..u128::MAX,
                                         d in 1u128..u128::MAX) {
            prop_assume!(hi < d);
            let (q, r) = divrem_u256_u128(hi, lo, d);
            let value = (BigInt::from(hi) << 128) + BigInt::from(lo);
            let dq = &value / BigInt::from(d);
            let dr = &value % BigInt::from(d);
            prop_assert_eq!(BigInt::from(q), dq);
            prop_assert_eq!(BigInt::from(r), dr);
        }

        /// The fused a·b + c·d kernel matches exact BigInt arithmetic.
        #[test]
        fn dot2_matches_bigint(a in -(1i128<<100)..(1i128<<100), b in -(1i128<<100)..(1i128<<100),
                               c in -(1i128<<100)..(1i128<<100), d in -(1i128<<100)..(1i128<<100),
                               sh in 64u32..120) {
            let fast = dot2_rhe_i128(a, b, c, d, sh);
            let exact = BigInt::from(a) * BigInt::from(b) + BigInt::from(c) * BigInt::from(d);
            let want = div_rhe_big(&exact, &(BigInt::from(1) << sh));
            if let Some(v) = fast {
                prop_assert_eq!(BigInt::from(v), want);
            } else {
                // only bails when out of fast-path range
                prop_assert!(want.abs() >= BigInt::from(SMALL_LIMIT));
            }
        }

        /// Signed 256/128 rounding division matches BigInt round-half-even.
        #[test]
        fn signed_div_matches_bigint(a in -(1i128<<110)..(1i128<<110),
                                     b in -(1i128<<110)..(1i128<<110),
                                     d in 1u128..(1u128<<120)) {
            let (neg, hi, lo) = prod_sum_signed(a, b, 0, 0);
            let fast = signed_div_rhe_u256(neg, hi, lo, d);
            let exact = BigInt::from(a) * BigInt::from(b);
            let want = div_rhe_big(&exact, &BigInt::from(d));
            if let Some(v) = fast {
                prop_assert_eq!(BigInt::from(v), want);
            } else {
                prop_assert!(want.abs() >= BigInt::from(SMALL_LIMIT));
            }
        }

        /// div_pow2 is a single half-even rounding.
        #[test]
        fn div_pow2_single_rounding(a in -(1i128<<100)..(1i128<<100), sh in 1u32..80) {
            let prec = p(100);
            let x = Fixed::from_mantissa_i128(a, prec);
            let got = x.div_pow2(sh);
            let want = div_rhe_big(&BigInt::from(a), &(BigInt::from(1) << sh));
            prop_assert_eq!(got.mantissa_big(), want);
        }

        /// div agrees with the rational it represents, to one rounding.
        #[test]
        fn div_single_rounding(a in -(1i128<<80)..(1i128<<80), b in 1i128..(1i128<<80)) {
            let prec = p(72);
            let x = Fixed::from_mantissa_i128(a, prec);
            let y = Fixed::from_mantissa_i128(b, prec);
            let got = x.div(&y);
            let num = BigInt::from(a) << 72;
            let want = div_rhe_big(&num, &BigInt::from(b));
            prop_assert_eq!(got.mantissa_big(), want);
        }
    }
}
