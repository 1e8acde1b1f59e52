//! Dyadic big-floats with directed rounding: value = `m · 2^e`.
//!
//! This is the bounds kernel: it evaluates logarithms, exponentials and huge
//! powers of rationals as *certified enclosures* (`DyInterval`), so that sign
//! decisions on analytic quantities — degree-threshold margins, residual
//! thresholds like `α·e^{−2β}/(2(s−1))`, aliasing and tail bounds — are
//! deterministic and rigorous. Magnitudes reach `2^{±20000}` and beyond,
//! far outside both `f64` and the fixed-point range, hence the explicit
//! exponent field.
//!
//! Every enclosure is conservative: series are evaluated in integer
//! arithmetic at a working scale `2^{−w}` with per-term floor drift counted
//! and added to the upper endpoint (or both endpoints for signed series),
//! plus an explicit tail bound. Interval operations round the lower endpoint
//! toward −∞ and the upper toward +∞. Nothing here is hot: these run a few
//! hundred times per construction, all at setup.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;

/// Rounding direction for directed operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Round {
    /// Toward −∞ (safe lower bound).
    Down,
    /// Toward +∞ (safe upper bound).
    Up,
}

/// A dyadic rational `m · 2^e` with arbitrary-precision mantissa.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dyadic {
    m: BigInt,
    e: i64,
}

/// floor(m / 2^sh) — works for either sign (rounds toward −∞).
pub(crate) fn floor_shift(m: &BigInt, sh: u64) -> BigInt {
    if sh == 0 {
        return m.clone();
    }
    let mag = m.abs() >> sh;
    if m.is_negative() {
        // ceil of magnitude: floor of negative = −ceil(|m|/2^sh)
        let rem_nonzero = (m.abs() & ((BigInt::from(1) << sh) - 1)) != BigInt::zero();
        if rem_nonzero {
            -(mag + 1u32)
        } else {
            -mag
        }
    } else {
        mag
    }
}

/// ceil(m / 2^sh).
pub(crate) fn ceil_shift(m: &BigInt, sh: u64) -> BigInt {
    -floor_shift(&-m, sh)
}

impl Dyadic {
    pub fn new(m: BigInt, e: i64) -> Self {
        Dyadic { m, e }.normalized()
    }

    pub fn zero() -> Self {
        Dyadic { m: BigInt::zero(), e: 0 }
    }

    pub fn one() -> Self {
        Dyadic { m: BigInt::from(1), e: 0 }
    }

    pub fn from_int(v: i64) -> Self {
        Dyadic { m: BigInt::from(v), e: 0 }.normalized()
    }

    pub fn from_bigint(m: BigInt) -> Self {
        Dyadic { m, e: 0 }.normalized()
    }

    /// Strip trailing zero bits of the mantissa into the exponent.
    fn normalized(mut self) -> Self {
        if self.m.is_zero() {
            self.e = 0;
            return self;
        }
        let tz = self.m.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            self.m = &self.m >> tz;
            self.e += tz as i64;
        }
        self
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.m
    }

    pub fn exponent(&self) -> i64 {
        self.e
    }

    pub fn is_zero(&self) -> bool {
        self.m.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.m.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.m.is_positive()
    }

    pub fn neg(&self) -> Dyadic {
        Dyadic { m: -&self.m, e: self.e }
    }

    pub fn abs(&self) -> Dyadic {
        Dyadic { m: self.m.abs(), e: self.e }
    }

    /// Significant bits of the mantissa magnitude.
    pub fn mant_bits(&self) -> u64 {
        self.m.bits()
    }

    /// Exact addition; mantissas are aligned to the smaller exponent.
    pub fn add(&self, rhs: &Dyadic) -> Dyadic {
        if self.m.is_zero() {
            return rhs.clone();
        }
        if rhs.m.is_zero() {
            return self.clone();
        }
        let e = self.e.min(rhs.e);
        let sa = (self.e - e) as u64;
        let sb = (rhs.e - e) as u64;
        assert!(sa < 1 << 26 && sb < 1 << 26, "dyadic alignment out of range");
        let m = (&self.m << sa) + (&rhs.m << sb);
        Dyadic { m, e }.normalized()
    }

    pub fn sub(&self, rhs: &Dyadic) -> Dyadic {
        self.add(&rhs.neg())
    }

    /// Exact multiplication (mantissas grow; round explicitly afterwards).
    pub fn mul_exact(&self, rhs: &Dyadic) -> Dyadic {
        Dyadic { m: &self.m * &rhs.m, e: self.e + rhs.e }.normalized()
    }

    /// Exact multiplication by a machine integer.
    pub fn mul_int(&self, k: i64) -> Dyadic {
        Dyadic { m: &self.m * k, e: self.e }.normalized()
    }

    /// Directed rounding to at most `prec` significant mantissa bits.
    pub fn round_to(&self, prec: u32, r: Round) -> Dyadic {
        let bits = self.m.bits();
        if bits <= prec as u64 {
            return self.clone();
        }
        let sh = bits - prec as u64;
        let m = match r {
            Round::Down => floor_shift(&self.m, sh),
            Round::Up => ceil_shift(&self.m, sh),
        };
        Dyadic { m, e: self.e + sh as i64 }.normalized()
    }

    /// Directed quotient `self / den` to about `prec` significant bits.
    /// `den` must be strictly positive.
    pub fn div_directed(&self, den: &Dyadic, prec: u32, r: Round) -> Dyadic {
        assert!(den.is_positive(), "dyadic division by non-positive value");
        if self.m.is_zero() {
            return Dyadic::zero();
        }
        let nb = self.m.bits() as i64;
        let db = den.m.bits() as i64;
        let sh = (prec as i64 + 2 + (db - nb).max(0)) as u64;
        let num_mag = self.m.abs() << sh;
        let q = &num_mag / den.m.magnitude().to_bigint();
        let exact = &q * den.m.magnitude().to_bigint() == num_mag;
        let m = if self.m.is_negative() {
            match r {
                Round::Down => {
                    if exact {
                        -q
                    } else {
                        -(q + 1u32)
                    }
                }
                Round::Up => -q,
            }
        } else {
            match r {
                Round::Down => q,
                Round::Up => {
                    if exact {
                        q
                    } else {
                        q + 1
                    }
                }
            }
        };
        Dyadic { m, e: self.e - den.e - sh as i64 }.normalized()
    }

    /// Exact comparison of the represented reals.
    pub fn cmp_dyadic(&self, rhs: &Dyadic) -> Ordering {
        match (self.m.sign(), rhs.m.sign()) {
            (num_bigint::Sign::Minus, num_bigint::Sign::NoSign | num_bigint::Sign::Plus) => {
                return Ordering::Less
            }
            (num_bigint::Sign::NoSign | num_bigint::Sign::Plus, num_bigint::Sign::Minus) => {
                if self.m.is_zero() && rhs.m.is_zero() {
                    return Ordering::Equal;
                }
                return Ordering::Greater;
            }
            _ => {}
        }
        if self.m.is_zero() && rhs.m.is_zero() {
            return Ordering::Equal;
        }
        if self.m.is_zero() {
            return if rhs.m.is_positive() { Ordering::Less } else { Ordering::Greater };
        }
        if rhs.m.is_zero() {
            return if self.m.is_positive() { Ordering::Greater } else { Ordering::Less };
        }
        let e = self.e.min(rhs.e);
        let sa = (self.e - e) as u64;
        let sb = (rhs.e - e) as u64;
        assert!(sa < 1 << 26 && sb < 1 << 26, "dyadic comparison out of range");
        (&self.m << sa).cmp(&(&rhs.m << sb))
    }

    /// Exact comparison against the rational `p/q` (`q > 0`).
    pub fn cmp_rational(&self, p: &BigInt, q: &BigInt) -> Ordering {
        assert!(q.is_positive(), "rational comparand needs positive denominator");
        // m·2^e vs p/q ⟺ m·q·2^e vs p
        let lhs = &self.m * q;
        if self.e >= 0 {
            assert!(self.e < 1 << 26, "dyadic comparison out of range");
            (lhs << self.e as u64).cmp(p)
        } else {
            let sh = (-self.e) as u64;
            assert!(sh < 1 << 26, "dyadic comparison out of range");
            lhs.cmp(&(p << sh))
        }
    }

    /// Approximate `f64` value (diagnostics only).
    pub fn to_f64(&self) -> f64 {
        if self.m.is_zero() {
            return 0.0;
        }
        let bits = self.m.bits() as i64;
        let (top, shift) = if bits > 53 {
            (floor_shift(&self.m, (bits - 53) as u64), bits - 53)
        } else {
            (self.m.clone(), 0)
        };
        let t = top.to_f64().unwrap_or(f64::NAN);
        let exp = self.e + shift;
        if exp > 2000 {
            return if t > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        if exp < -2000 {
            // still give an order-of-magnitude via subnormal-safe path
            return t * 0f64.max(0.0) + if t >= 0.0 { 0.0 } else { -0.0 };
        }
        t * (exp as f64).exp2()
    }

    /// Base-2 logarithm estimate (diagnostics only): `log2(|value|)`.
    pub fn log2_approx(&self) -> f64 {
        if self.m.is_zero() {
            return f64::NEG_INFINITY;
        }
        let bits = self.m.bits() as i64;
        let top = floor_shift(&self.m.abs(), (bits - 48).max(0) as u64)
            .to_f64()
            .unwrap_or(f64::NAN);
        top.log2() + ((bits - 48).max(0) as i64 + self.e) as f64
    }

    /// Canonical `"m*2^e"` form (mantissa odd, or `"0"`).
    pub fn to_mant_exp_string(&self) -> String {
        if self.m.is_zero() {
            return "0".to_string();
        }
        format!("{}*2^{}", self.m, self.e)
    }
}

trait ToBigIntExt {
    fn to_bigint(&self) -> BigInt;
}
impl ToBigIntExt for num_bigint::BigUint {
    fn to_bigint(&self) -> BigInt {
        BigInt::from(self.clone())
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_mant_exp_string())
    }
}

/// Parses the canonical `"m*2^e"` form (and bare integers, including `"0"`).
impl std::str::FromStr for Dyadic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once("*2^") {
            None => {
                let m: BigInt = s.parse().map_err(|_| format!("bad dyadic {s:?}"))?;
                Ok(Dyadic::from_bigint(m))
            }
            Some((m_text, e_text)) => {
                let m: BigInt = m_text
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad dyadic mantissa {m_text:?}"))?;
                let e: i64 = e_text
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad dyadic exponent {e_text:?}"))?;
                Ok(Dyadic::new(m, e))
            }
        }
    }
}

/// A closed interval `[lo, hi]` of dyadic rationals with `lo ≤ hi`;
/// every operation produces an enclosure of the exact image.
#[derive(Debug, Clone)]
pub struct DyInterval {
    pub lo: Dyadic,
    pub hi: Dyadic,
}

impl DyInterval {
    pub fn point(d: Dyadic) -> Self {
        DyInterval { lo: d.clone(), hi: d }
    }

    pub fn from_int(v: i64) -> Self {
        Self::point(Dyadic::from_int(v))
    }

    /// Enclosure of the rational `p/q` (any signs, `q ≠ 0`), width ≤ 2^{1−prec}·|p/q|.
    pub fn from_rational(p: &BigInt, q: &BigInt, prec: u32) -> Self {
        assert!(!q.is_zero());
        let (p, q) = if q.is_negative() { (-p, -q) } else { (p.clone(), q.clone()) };
        let n = Dyadic::from_bigint(p);
        let d = Dyadic::from_bigint(q);
        DyInterval {
            lo: n.div_directed(&d, prec, Round::Down),
            hi: n.div_directed(&d, prec, Round::Up),
        }
    }

    pub fn from_ratio(p: i64, q: i64, prec: u32) -> Self {
        Self::from_rational(&BigInt::from(p), &BigInt::from(q), prec)
    }

    fn check(self) -> Self {
        debug_assert!(self.lo.cmp_dyadic(&self.hi) != Ordering::Greater, "inverted interval");
        self
    }

    pub fn add(&self, rhs: &DyInterval) -> DyInterval {
        DyInterval { lo: self.lo.add(&rhs.lo), hi: self.hi.add(&rhs.hi) }.check()
    }

    pub fn sub(&self, rhs: &DyInterval) -> DyInterval {
        DyInterval { lo: self.lo.sub(&rhs.hi), hi: self.hi.sub(&rhs.lo) }.check()
    }

    pub fn neg(&self) -> DyInterval {
        DyInterval { lo: self.hi.neg(), hi: self.lo.neg() }
    }

    /// Product enclosure: all four endpoint products, extremes kept, rounded
    /// outward to `prec` bits.
    pub fn mul(&self, rhs: &DyInterval, prec: u32) -> DyInterval {
        let cands = [
            self.lo.mul_exact(&rhs.lo),
            self.lo.mul_exact(&rhs.hi),
            self.hi.mul_exact(&rhs.lo),
            self.hi.mul_exact(&rhs.hi),
        ];
        let mut lo = cands[0].clone();
        let mut hi = cands[0].clone();
        for c in &cands[1..] {
            if c.cmp_dyadic(&lo) == Ordering::Less {
                lo = c.clone();
            }
            if c.cmp_dyadic(&hi) == Ordering::Greater {
                hi = c.clone();
            }
        }
        DyInterval { lo: lo.round_to(prec, Round::Down), hi: hi.round_to(prec, Round::Up) }.check()
    }

    /// Exact scaling by a machine integer.
    pub fn mul_int(&self, k: i64) -> DyInterval {
        if k >= 0 {
            DyInterval { lo: self.lo.mul_int(k), hi: self.hi.mul_int(k) }
        } else {
            DyInterval { lo: self.hi.mul_int(k), hi: self.lo.mul_int(k) }
        }
        .check()
    }

    /// Quotient enclosure; the denominator interval must be strictly positive.
    pub fn div(&self, rhs: &DyInterval, prec: u32) -> DyInterval {
        assert!(rhs.lo.is_positive(), "interval division requires positive denominator");
        let lo = if !self.lo.is_negative() {
            self.lo.div_directed(&rhs.hi, prec, Round::Down)
        } else {
            self.lo.div_directed(&rhs.lo, prec, Round::Down)
        };
        let hi = if !self.hi.is_negative() {
            self.hi.div_directed(&rhs.lo, prec, Round::Up)
        } else {
            self.hi.div_directed(&rhs.hi, prec, Round::Up)
        };
        DyInterval { lo, hi }.check()
    }

    /// `base^n` for a strictly positive interval, via binary exponentiation
    /// with outward rounding at each step.
    pub fn pow_int(&self, n: u64, prec: u32) -> DyInterval {
        assert!(self.lo.is_positive(), "pow_int requires positive base");
        let mut result = DyInterval::point(Dyadic::one());
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base, prec);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base, prec);
            }
        }
        result.check()
    }

    /// Sign of every point in the interval, if uniform.
    pub fn sign(&self) -> Option<Ordering> {
        if self.lo.is_positive() {
            Some(Ordering::Greater)
        } else if self.hi.is_negative() {
            Some(Ordering::Less)
        } else if self.lo.is_zero() && self.hi.is_zero() {
            Some(Ordering::Equal)
        } else {
            None
        }
    }

    pub fn contains_rational(&self, p: &BigInt, q: &BigInt) -> bool {
        let (p, q) = if q.is_negative() { (-p, -q) } else { (p.clone(), q.clone()) };
        self.lo.cmp_rational(&p, &q) != Ordering::Greater
            && self.hi.cmp_rational(&p, &q) != Ordering::Less
    }

    /// Interval width as a dyadic (exact).
    pub fn width(&self) -> Dyadic {
        self.hi.sub(&self.lo)
    }

    pub fn to_f64(&self) -> f64 {
        // midpoint estimate for diagnostics
        0.5 * (self.lo.to_f64() + self.hi.to_f64())
    }
}

// ---------------------------------------------------------------- series

/// Enclosure of `atanh(num/den)` for `0 ≤ num/den ≤ 2/5`, at working scale
/// `2^{−w}` — units of the returned mantissas are `2^{−w}`.
///
/// Each term `t^{2i+1}/(2i+1)` is computed by iterated floor division, which
/// only under-counts; the compounded drift per term is < 3 units, and the
/// truncated tail is < 2 units (geometric with ratio ≤ 4/25 once the iterate
/// reaches zero), so `[sum, sum + 3T + 8]` units encloses the exact value.
fn atanh_units(num: &BigInt, den: &BigInt, w: u32) -> (BigInt, BigInt) {
    assert!(!num.is_negative() && num * 5 <= den * 2, "atanh argument out of range");
    let scale = BigInt::from(1) << w;
    let p2 = num * num;
    let q2 = den * den;
    let mut cur = (&scale * num) / den;
    let mut sum = BigInt::zero();
    let mut terms: i64 = 0;
    let mut i: i64 = 0;
    while !cur.is_zero() {
        sum += &cur / (2 * i + 1);
        terms += 1;
        cur = (&cur * &p2) / &q2;
        i += 1;
        assert!(i < 4 * w as i64 + 64, "atanh series failed to converge");
    }
    let hi = &sum + 3 * terms + 8;
    (sum, hi)
}

/// Enclosure of `ln 2 = 2·atanh(1/3)` to about `prec` bits.
pub fn ln2_interval(prec: u32) -> DyInterval {
    let w = prec + 32;
    let (lo_u, hi_u) = atanh_units(&BigInt::from(1), &BigInt::from(3), w);
    DyInterval {
        lo: Dyadic::new(lo_u * 2, -(w as i64)),
        hi: Dyadic::new(hi_u * 2, -(w as i64)),
    }
    .check()
}

/// Enclosure of `ln(p/q)` for positive `p/q`, to about `prec` bits.
///
/// Argument reduction: write `p/q = f·2^k` with `f ∈ [1, 2)`; then
/// `ln(p/q) = k·ln2 + 2·atanh((f−1)/(f+1))` with the atanh argument in
/// `[0, 1/3)`.
pub fn ln_rational(p: &BigInt, q: &BigInt, prec: u32) -> DyInterval {
    assert!(p.is_positive() && q.is_positive(), "ln of non-positive rational");
    let w = prec + 32;
    let mut k = p.bits() as i64 - q.bits() as i64;
    // fix up k so that den ≤ num < 2·den where f = num/den = (p/q)·2^{−k}
    let (mut num, mut den) = scaled_pair(p, q, k);
    loop {
        if num < den {
            k -= 1;
            num <<= 1;
        } else if num >= (&den << 1) {
            k += 1;
            den <<= 1;
        } else {
            break;
        }
    }
    let t_num = &num - &den;
    let t_den = &num + &den;
    let (lo_u, hi_u) = atanh_units(&t_num, &t_den, w);
    let frac = DyInterval {
        lo: Dyadic::new(lo_u * 2, -(w as i64)),
        hi: Dyadic::new(hi_u * 2, -(w as i64)),
    };
    if k == 0 {
        return frac.check();
    }
    frac.add(&ln2_interval(prec + 8).mul_int(k)).check()
}

/// `(p·2^{−k}, q)` as integers: shift whichever side keeps both integral.
fn scaled_pair(p: &BigInt, q: &BigInt, k: i64) -> (BigInt, BigInt) {
    if k >= 0 {
        (p.clone(), q << k as u64)
    } else {
        (p << (-k) as u64, q.clone())
    }
}

/// Enclosure of `atan(1/k)` in units of `2^{−w}` (returned as lo/hi unit
/// counts). Alternating series; per-term floor drift < 3 units and the
/// alternating tail is below the first omitted term, giving symmetric slop.
fn atan_recip_units(k: i64, w: u32) -> (BigInt, BigInt) {
    assert!(k >= 2);
    let scale = BigInt::from(1) << w;
    let k2 = BigInt::from(k) * k;
    let mut pow = &scale / k; // k^{−(2i+1)} scaled
    let mut sum = BigInt::zero();
    let mut terms: i64 = 0;
    let mut i: i64 = 0;
    while !pow.is_zero() {
        let term = &pow / (2 * i + 1);
        if i % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        terms += 1;
        pow = &pow / &k2;
        i += 1;
        assert!(i < 4 * w as i64 + 64, "atan series failed to converge");
    }
    let slop = 3 * terms + 8;
    (&sum - slop, &sum + slop)
}

/// Enclosure of π via `π = 16·atan(1/5) − 4·atan(1/239)`.
pub fn pi_interval(prec: u32) -> DyInterval {
    let w = prec + 32;
    let (a5_lo, a5_hi) = atan_recip_units(5, w);
    let (a239_lo, a239_hi) = atan_recip_units(239, w);
    let e = -(w as i64);
    let a5 = DyInterval { lo: Dyadic::new(a5_lo, e), hi: Dyadic::new(a5_hi, e) };
    let a239 = DyInterval { lo: Dyadic::new(a239_lo, e), hi: Dyadic::new(a239_hi, e) };
    a5.mul_int(16).sub(&a239.mul_int(4)).check()
}

/// Enclosure of `√(p/q)` for positive `p/q`, via the integer square root of
/// `⌊p·4^w/q⌋`: if `s = ⌊√n⌋` then `s ≤ √(p/q)·2^w < s+1`.
pub fn sqrt_rational(p: &BigInt, q: &BigInt, prec: u32) -> DyInterval {
    assert!(p.is_positive() && q.is_positive(), "sqrt of non-positive rational");
    let w = (prec + 16) as u64;
    let n = (p << (2 * w)) / q;
    let s = n.sqrt();
    DyInterval {
        lo: Dyadic::new(s.clone(), -(w as i64)),
        hi: Dyadic::new(s + 1, -(w as i64)),
    }
    .check()
}

/// Series enclosure of `e^x` for `|x| ≤ 0.4`, argument given in units of
/// `2^{−w}`; returns `(lo, hi)` unit counts. Terms may alternate in sign,
/// so drift is counted symmetrically.
fn exp_units(x: &BigInt, w: u32) -> (BigInt, BigInt) {
    let scale = BigInt::from(1) << w;
    assert!(x.abs() * 5 <= &scale * 2, "exp series argument out of range");
    let mut cur = scale.clone();
    let mut sum = scale.clone();
    let mut terms: i64 = 0;
    let mut i: i64 = 1;
    while !cur.is_zero() {
        cur = (&cur * x) / (&scale * i);
        sum += &cur;
        terms += 1;
        i += 1;
        assert!(i < 4 * w as i64 + 64, "exp series failed to converge");
    }
    let slop = 3 * terms + 8;
    (&sum - slop, &sum + slop)
}

/// Directed `e^d` for a dyadic `d` of any magnitude: reduce by powers of two
/// (`e^d = 2^k · e^{d − k·ln2}` with `|d − k·ln2| ≤ 0.36`), then run the
/// series on the safe endpoint.
pub fn exp_dyadic(d: &Dyadic, prec: u32, r: Round) -> Dyadic {
    if d.is_zero() {
        return Dyadic::one();
    }
    let est = d.to_f64() / std::f64::consts::LN_2;
    assert!(est.is_finite() && est.abs() < 9e15, "exp argument out of supported range");
    let k = est.round() as i64;
    let ln2 = ln2_interval(prec + 48);
    let g = DyInterval::point(d.clone()).sub(&ln2.mul_int(k));
    let w = prec + 32;
    // scale the chosen endpoint to integer units, erring in the safe direction
    let endpoint = match r {
        Round::Down => &g.lo,
        Round::Up => &g.hi,
    };
    let sh = w as i64 + endpoint.e;
    let x = if sh >= 0 {
        match r {
            Round::Down => floor_shift(&(&endpoint.m << sh as u64), 0),
            Round::Up => &endpoint.m << sh as u64,
        }
    } else {
        match r {
            Round::Down => floor_shift(&endpoint.m, (-sh) as u64),
            Round::Up => ceil_shift(&endpoint.m, (-sh) as u64),
        }
    };
    let (lo_u, hi_u) = exp_units(&x, w);
    match r {
        Round::Down => {
            assert!(lo_u.is_positive(), "exp lower bound collapsed; raise precision");
            Dyadic::new(lo_u, -(w as i64) + k)
        }
        Round::Up => Dyadic::new(hi_u, -(w as i64) + k),
    }
}

/// Enclosure of `e^x` over an interval (monotone: endpoints map to endpoints).
pub fn exp_interval(x: &DyInterval, prec: u32) -> DyInterval {
    DyInterval {
        lo: exp_dyadic(&x.lo, prec, Round::Down),
        hi: exp_dyadic(&x.hi, prec, Round::Up),
    }
    .check()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn big(s: &str) -> BigInt {
        s.parse().unwrap()
    }

    /// `[lo, hi]` must overlap `[digits/10^n, digits/10^n + 10^{−n}]`, i.e.
    /// enclose the constant whose first `n` decimals are `digits`.
    fn assert_encloses_decimal(iv: &DyInterval, digits: &str, frac_len: u32) {
        let p = big(digits);
        let q = BigInt::from(10).pow(frac_len);
        // lo ≤ (p+1)/q and hi ≥ p/q
        assert!(
            iv.lo.cmp_rational(&(&p + 1), &q) != Ordering::Greater,
            "lower endpoint above constant"
        );
        assert!(iv.hi.cmp_rational(&p, &q) != Ordering::Less, "upper endpoint below constant");
    }

    fn assert_width_below(iv: &DyInterval, log2_bound: i64) {
        let w = iv.width();
        assert!(
            w.cmp_dyadic(&Dyadic::new(BigInt::from(1), log2_bound)) == Ordering::Less,
            "interval too wide: width ≈ 2^{}",
            w.log2_approx()
        );
    }

    #[test]
    fn pi_forty_digits() {
        let pi = pi_interval(160);
        assert_encloses_decimal(&pi, "31415926535897932384626433832795028841971", 40);
        assert_width_below(&pi, -150);
    }

    #[test]
    fn ln2_forty_digits() {
        let l = ln2_interval(160);
        assert_encloses_decimal(&l, "6931471805599453094172321214581765680755", 40);
        assert_width_below(&l, -150);
    }

    #[test]
    fn sqrt2_forty_digits() {
        let s = sqrt_rational(&big("2"), &big("1"), 160);
        assert_encloses_decimal(&s, "14142135623730950488016887242096980785696", 40);
        assert_width_below(&s, -150);
    }

    #[test]
    fn ln_of_one_is_zero() {
        let l = ln_rational(&big("1"), &big("1"), 160);
        assert!(l.contains_rational(&BigInt::zero(), &BigInt::from(1)));
        assert_width_below(&l, -150);
    }

    #[test]
    fn ln_ten_digits() {
        // ln 10 = 2.302585092994045684017991454684364207601...
        let l = ln_rational(&big("10"), &big("1"), 160);
        assert_encloses_decimal(&l, "23025850929940456840179914546843642076011", 40);
        assert_width_below(&l, -140);
    }

    #[test]
    fn exp_one_digits() {
        // e = 2.718281828459045235360287471352662497757...
        let e = exp_interval(&DyInterval::from_int(1), 160);
        assert_encloses_decimal(&e, "27182818284590452353602874713526624977572", 40);
        assert_width_below(&e, -140);
    }

    #[test]
    fn exp_minus_1000_between_powers_of_two() {
        // −1000/ln2 ≈ −1442.695: e^{−1000} ∈ (2^{−1443}, 2^{−1442})
        let v = exp_interval(&DyInterval::from_int(-1000), 160);
        let lo_pow = Dyadic::new(BigInt::from(1), -1443);
        let hi_pow = Dyadic::new(BigInt::from(1), -1442);
        assert_eq!(v.lo.cmp_dyadic(&lo_pow), Ordering::Greater);
        assert_eq!(v.hi.cmp_dyadic(&hi_pow), Ordering::Less);
    }

    #[test]
    fn pow_int_exact_power_of_half() {
        let half = DyInterval::from_ratio(1, 2, 160);
        let v = half.pow_int(10, 160);
        assert!(v.contains_rational(&big("1"), &big("1024")));
        assert_width_below(&v, -160);
    }

    #[test]
    fn pow_int_large_exponent_magnitude() {
        // 0.999^{10^6} = e^{10^6·ln 0.999} ≈ e^{−1000.5003} ∈ (2^{−1444}, 2^{−1443})
        let u = DyInterval::from_ratio(999, 1000, 200);
        let v = u.pow_int(1_000_000, 200);
        assert_eq!(v.lo.cmp_dyadic(&Dyadic::new(BigInt::from(1), -1444)), Ordering::Greater);
        assert_eq!(v.hi.cmp_dyadic(&Dyadic::new(BigInt::from(1), -1443)), Ordering::Less);
    }

    #[test]
    fn directed_division_brackets_quotient() {
        let n = Dyadic::from_int(1);
        let d = Dyadic::from_int(3);
        let lo = n.div_directed(&d, 80, Round::Down);
        let hi = n.div_directed(&d, 80, Round::Up);
        assert_eq!(lo.cmp_rational(&big("1"), &big("3")), Ordering::Less);
        assert_eq!(hi.cmp_rational(&big("1"), &big("3")), Ordering::Greater);
        assert!(hi.sub(&lo).cmp_dyadic(&Dyadic::new(BigInt::from(1), -80)) == Ordering::Less);
    }

    #[test]
    fn round_to_is_directed() {
        let v = Dyadic::new(BigInt::from(7), -3); // 0.875
        assert_eq!(v.round_to(2, Round::Down), Dyadic::new(BigInt::from(3), -2));
        assert_eq!(v.round_to(2, Round::Up), Dyadic::new(BigInt::from(1), 0));
        let n = v.neg();
        assert_eq!(n.round_to(2, Round::Down), Dyadic::new(BigInt::from(-1), 0));
        assert_eq!(n.round_to(2, Round::Up), Dyadic::new(BigInt::from(-3), -2));
    }

    #[test]
    fn mant_exp_string_normalizes() {
        assert_eq!(Dyadic::new(BigInt::from(12), -4).to_mant_exp_string(), "3*2^-2");
        assert_eq!(Dyadic::zero().to_mant_exp_string(), "0");
    }

    #[test]
    fn cmp_rational_exact() {
        let v = Dyadic::new(BigInt::from(5), -3);
        assert_eq!(v.cmp_rational(&big("5"), &big("8")), Ordering::Equal);
        assert_eq!(v.cmp_rational(&big("2"), &big("3")), Ordering::Less);
        assert_eq!(v.cmp_rational(&big("1"), &big("2")), Ordering::Greater);
    }

    proptest! {
        /// exp(ln(p/q)) always encloses p/q.
        #[test]
        fn ln_exp_round_trip(p in 1i64..1_000_000, q in 1i64..1_000_000) {
            let l = ln_rational(&BigInt::from(p), &BigInt::from(q), 96);
            let e = exp_interval(&l, 96);
            prop_assert!(e.contains_rational(&BigInt::from(p), &BigInt::from(q)));
        }

        /// from_rational encloses the rational and has tiny width.
        #[test]
        fn from_rational_encloses(p in -1_000_000i64..1_000_000, q in 1i64..1_000_000) {
            let iv = DyInterval::from_rational(&BigInt::from(p), &BigInt::from(q), 96);
            prop_assert!(iv.contains_rational(&BigInt::from(p), &BigInt::from(q)));
        }

        /// Interval multiplication contains the exact rational product.
        #[test]
        fn mul_contains_product(a in -10_000i64..10_000, b in -10_000i64..10_000,
                                qa in 1i64..1000, qb in 1i64..1000) {
            let x = DyInterval::from_rational(&BigInt::from(a), &BigInt::from(qa), 96);
            let y = DyInterval::from_rational(&BigInt::from(b), &BigInt::from(qb), 96);
            let z = x.mul(&y, 96);
            prop_assert!(z.contains_rational(&BigInt::from(a as i128 * b as i128),
                                             &BigInt::from(qa as i128 * qb as i128)));
        }
    }
}
