//! Exact certification of roots.
//!
//! This module turns a finished coefficient sequence into a checkable
//! artifact. It has three jobs:
//!
//! 1. **Assembly** — build `P_n(x) = 1 + Σ ε_k x^k` as exact rationals,
//!    re-checking that every coefficient belongs to its allowed set.
//! 2. **Residual smallness** — evaluate `Q_n(x_j) = 1/L + Σ ε_k x_j^k/(L+k)`
//!    at every target in high-precision fixed point with a certified error
//!    radius, and compare against the rational threshold
//!    `α·e^{−2β}/(2(s−1))` (itself lower-bounded by a directed-rounding
//!    exponential, so the comparison is conservative).
//! 3. **Root bracketing** — certify `≥ r` distinct roots in
//!    `I(α) = [1−2α, 1−α]` by sign changes at exact rational points.
//!
//! Soundness is unconditional: a bracket is emitted only when the two
//! endpoint signs are *certified* — either a fixed-point enclosure of
//! `P_n(x)` excludes zero, or the homogeneous integer `Σ c_k p^k q^{n−k}`
//! is computed exactly. Whatever numeric shortcuts upstream modules take,
//! a valid certificate proves its roots by the intermediate value theorem.
//!
//! Certificates serialize to a stable JSON form (rationals as `"p/q"`
//! strings, fixed-point values as `"m*2^e"` strings); identical inputs
//! produce byte-identical certificates.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::io;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeff_model::CoefficientModel;
use crate::numeric::dyadic::{exp_interval, DyInterval, Dyadic};
use crate::params::{BuildParameters, TargetPoints};
use crate::trap::CoefficientSequence;

/// Everything that can go wrong while assembling, checking, or verifying.
#[derive(Debug, Error)]
pub enum VerifyError {
    /// Coefficient `index` (1-based) is not in its allowed set.
    #[error("coefficient {index} = {value} is outside its allowed set")]
    MembershipViolation { index: u64, value: String },
    /// `|Q_n(x_j)|` plus its error radius is not below the threshold.
    #[error("residual at target {target_index} is {value}, not below {threshold}")]
    SmallnessFailed {
        target_index: usize,
        value: String,
        threshold: String,
    },
    /// Fewer certified sign-change brackets than requested roots.
    #[error("found {found} root brackets, {required} required")]
    NotEnoughRoots { found: usize, required: u32 },
    /// Structural damage: fields inconsistent, unparseable, or out of range.
    #[error("invalid certificate: {detail}")]
    Malformed { detail: String },
}

fn malformed(detail: impl Into<String>) -> VerifyError {
    VerifyError::Malformed { detail: detail.into() }
}

// ---------------------------------------------------------------------------
// Certificate types
// ---------------------------------------------------------------------------

/// Residual measurement at one target: `value ± radius` (both scaled
/// `2^{−frac_bits}`) against the threshold; `margin = threshold − |value|
/// − radius` is positive exactly when the check passes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QMargin {
    pub target_index: usize,
    pub value: Dyadic,
    pub radius: Dyadic,
    pub margin: Dyadic,
    pub passed: bool,
}

/// Summary of the residual check across all targets.
#[derive(Debug, Clone)]
pub struct QReport {
    /// Working fraction bits B′ of the fixed-point evaluation.
    pub frac_bits: u32,
    /// The certified rational lower bound of `α·e^{−2β}/(2(s−1))`.
    pub threshold: BigRational,
    pub margins: Vec<QMargin>,
    /// Enclosure of the analytic residual bound `A·e^{−nα}/(α(L+n))`.
    pub analytic_tail: DyInterval,
    /// True when every measured `|value| − radius` is at most the upper
    /// endpoint of the analytic bound (the measurement never exceeds what
    /// the closed-form estimate allows).
    pub analytic_consistent: bool,
}

/// A root witness: either a proper bracket `a < b` whose endpoint signs
/// are opposite (`sign_a·sign_b = −1`), or a degenerate pair `a = b` with
/// both signs zero recording an exact rational root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bracket {
    pub a: BigRational,
    pub b: BigRational,
    pub sign_a: i8,
    pub sign_b: i8,
}

/// The complete, self-contained artifact: polynomial, targets, residual
/// margins, and root brackets. Verification needs nothing but this (exact
/// polynomial evaluation only — no FFT, no trap replay).
#[derive(Debug, Clone)]
pub struct PolynomialCertificate {
    pub params: BuildParameters,
    /// ε_1..ε_n as indices into the model's allowed sets.
    pub eps: CoefficientSequence,
    pub targets: TargetPoints,
    /// Certified rational lower bound of `α·e^{−2β}/(2(s−1))`.
    pub q_threshold: BigRational,
    /// Filled by [`check_q_smallness`].
    pub q_margins: Vec<QMargin>,
    /// Filled by [`certify`]; sorted by left endpoint, pairwise disjoint
    /// interiors, all inside `I(α)`.
    pub brackets: Vec<Bracket>,
    /// Number of certified distinct roots (= number of brackets).
    pub root_count: usize,
}

impl PolynomialCertificate {
    pub fn degree(&self) -> u64 {
        self.eps.len()
    }

    /// Exact coefficient of `x^k` (k = 0 gives the constant 1).
    pub fn coefficient(&self, k: u64) -> BigRational {
        if k == 0 {
            BigRational::one()
        } else {
            self.eps.value(k)
        }
    }

    /// Streams `k,value` rows for all n+1 coefficients.
    pub fn write_coefficients_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,value")?;
        writeln!(w, "0,1")?;
        for (k, v) in self.eps.iter() {
            writeln!(w, "{},{}", k, v)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Threshold: certified rational lower bound of α·e^{−2β}/(2(s−1))
// ---------------------------------------------------------------------------

fn dyadic_to_rational(d: &Dyadic) -> BigRational {
    let e = d.exponent();
    if e >= 0 {
        BigRational::from_integer(d.mantissa().clone() << e as u64)
    } else {
        BigRational::new(d.mantissa().clone(), BigInt::one() << (-e) as u64)
    }
}

/// Smallest `t` with `r ≤ 2^t`, for positive rational `r`.
fn ceil_log2(r: &BigRational) -> i64 {
    assert!(r.is_positive());
    let p = r.numer();
    let q = r.denom();
    let mut t = p.bits() as i64 - q.bits() as i64;
    // p ≤ q·2^t fails for t too small; walk to the boundary (≤ 2 steps).
    let le = |t: i64| -> bool {
        if t >= 0 {
            *p <= (q << t as u64)
        } else {
            (p << (-t) as u64) <= *q
        }
    };
    while !le(t) {
        t += 1;
    }
    while t > i64::MIN && le(t - 1) {
        t -= 1;
    }
    t
}

/// Certified rational lower bound of the residual threshold
/// `α·e^{−2β}/(2(s−1))`. Requires `s ≥ 2`.
pub fn q_threshold_lower(params: &BuildParameters) -> Result<BigRational, VerifyError> {
    if params.s < 2 {
        return Err(malformed("residual threshold needs s ≥ 2 targets"));
    }
    let e = exp_interval(&params.beta.mul_int(-2), 192);
    if !e.lo.is_positive() {
        return Err(malformed("exponential lower bound collapsed to zero"));
    }
    let factor = params.alpha.clone()
        / BigRational::from_integer(BigInt::from(2 * (params.s as i64 - 1)));
    Ok(dyadic_to_rational(&e.lo) * factor)
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Converts explicit coefficient values ε_1..ε_n into set indices,
/// failing on the first value outside its allowed set.
pub fn coefficients_to_sequence(
    model: &CoefficientModel,
    values: &[BigRational],
) -> Result<CoefficientSequence, VerifyError> {
    let mut indices = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let k = (i + 1) as u64;
        let set = model.allowed(k);
        let idx = set.binary_search(v).map_err(|_| VerifyError::MembershipViolation {
            index: k,
            value: v.to_string(),
        })?;
        indices.push(idx as u8);
    }
    Ok(CoefficientSequence::new(model.clone(), indices))
}

/// Builds the partial certificate: exact coefficient vector (constant term
/// exactly 1), membership re-checked, residual threshold computed. The
/// residual margins and brackets are filled by [`check_q_smallness`] and
/// [`certify`].
pub fn assemble_polynomial(
    params: &BuildParameters,
    targets: &TargetPoints,
    eps: &CoefficientSequence,
) -> Result<PolynomialCertificate, VerifyError> {
    if eps.len() != params.n {
        return Err(malformed(format!(
            "coefficient count {} does not match degree {}",
            eps.len(),
            params.n
        )));
    }
    if eps.model() != &params.model {
        return Err(malformed("coefficient sequence was built for a different model"));
    }
    for (i, &idx) in eps.indices().iter().enumerate() {
        let k = (i + 1) as u64;
        let set = params.model.allowed(k);
        if idx as usize >= set.len() {
            return Err(VerifyError::MembershipViolation {
                index: k,
                value: format!("set index {}", idx),
            });
        }
        // Defense in depth: the stored value must itself be admissible.
        let v = &set[idx as usize];
        if !params.model.is_allowed(k, v) {
            return Err(VerifyError::MembershipViolation { index: k, value: v.to_string() });
        }
    }
    let q_threshold = q_threshold_lower(params)?;
    Ok(PolynomialCertificate {
        params: params.clone(),
        eps: eps.clone(),
        targets: targets.clone(),
        q_threshold,
        q_margins: Vec::new(),
        brackets: Vec::new(),
        root_count: 0,
    })
}

// ---------------------------------------------------------------------------
// Shared integer helpers
// ---------------------------------------------------------------------------

/// Round-half-away-from-zero division by a positive divisor:
/// `sign(a)·⌊(2|a| + d)/(2d)⌋`. Error ≤ 1/2 unit.
fn div_round(a: BigInt, d: &BigInt) -> BigInt {
    debug_assert!(d.is_positive());
    let neg = a.is_negative();
    let mag = ((a.magnitude() << 1u32) + d.magnitude()) / (d.magnitude() << 1u32);
    let q = BigInt::from(mag);
    if neg {
        -q
    } else {
        q
    }
}

fn sign_of(v: &BigInt) -> Ordering {
    match v.sign() {
        Sign::Plus => Ordering::Greater,
        Sign::NoSign => Ordering::Equal,
        Sign::Minus => Ordering::Less,
    }
}

fn sign_i8(o: Ordering) -> i8 {
    match o {
        Ordering::Greater => 1,
        Ordering::Equal => 0,
        Ordering::Less => -1,
    }
}

// ---------------------------------------------------------------------------
// Residual smallness check
// ---------------------------------------------------------------------------

/// Working fraction bits for the residual evaluation: enough that the
/// Horner radius `(n+2)·2^{−B′}` is at most a quarter of the threshold,
/// at least the pipeline precision, rounded up to a limb multiple.
fn q_working_bits(params: &BuildParameters, threshold: &BigRational) -> u32 {
    let budget = BigRational::from_integer(BigInt::from(4 * (params.n + 2))) / threshold.clone();
    let needed = ceil_log2(&budget).max(params.bits as i64).max(128);
    (needed as u32).div_ceil(64) * 64
}

/// Per-coefficient accessor used by both residual and sign evaluation.
/// The fast path serves built-in integer families without touching
/// rationals in the hot loop.
enum CoeffView<'a> {
    /// Set-index sequence whose sets are all small integers.
    SmallInt {
        indices: &'a [u8],
        table: Vec<Vec<i64>>,
        period: usize,
    },
    /// Set-index sequence with general rational sets.
    Rational(&'a CoefficientSequence),
    /// Explicit values ε_1..ε_n (test evaluators).
    #[cfg(test)]
    Values(&'a [BigRational]),
}

impl<'a> CoeffView<'a> {
    fn of_sequence(eps: &'a CoefficientSequence) -> Self {
        let sets = eps.model().sets();
        let ints: Option<Vec<Vec<i64>>> = sets
            .iter()
            .map(|s| {
                s.iter()
                    .map(|v| if v.is_integer() { v.numer().to_i64() } else { None })
                    .collect()
            })
            .collect();
        match ints {
            Some(table) => CoeffView::SmallInt {
                indices: eps.indices(),
                table,
                period: sets.len(),
            },
            None => CoeffView::Rational(eps),
        }
    }

    fn len(&self) -> u64 {
        match self {
            CoeffView::SmallInt { indices, .. } => indices.len() as u64,
            CoeffView::Rational(eps) => eps.len(),
            #[cfg(test)]
            CoeffView::Values(v) => v.len() as u64,
        }
    }

    /// ε_k as a small integer, when the fast path applies.
    fn small(&self, k: u64) -> Option<i64> {
        match self {
            CoeffView::SmallInt { indices, table, period } => {
                let i = (k - 1) as usize;
                Some(table[i % *period][indices[i] as usize])
            }
            _ => None,
        }
    }

    /// ε_k as an exact rational (1-based).
    fn value(&self, k: u64) -> BigRational {
        match self {
            CoeffView::SmallInt { indices, table, period } => {
                let i = (k - 1) as usize;
                BigRational::from_integer(BigInt::from(table[i % *period][indices[i] as usize]))
            }
            CoeffView::Rational(eps) => eps.value(k),
            #[cfg(test)]
            CoeffView::Values(v) => v[(k - 1) as usize].clone(),
        }
    }
}

/// Evaluates `Q_n(x_j)·2^{B′}` at every target by one shared-addend Horner
/// sweep (the per-step addend `round(ε_k·2^{B′}/(L+k))` is computed once
/// and reused for all targets). Per step and target the injected rounding
/// is ≤ 1 unit, so the final radius is `(n+2)` units.
fn q_values_units(
    eps: &CoefficientSequence,
    targets: &TargetPoints,
    l_offset: u64,
    frac_bits: u32,
) -> Result<Vec<BigInt>, VerifyError> {
    let den = targets
        .shared_den
        .to_u64()
        .ok_or_else(|| malformed("target denominator exceeds the u64 evaluation fast path"))?;
    let nums: Vec<u64> = targets
        .numerators
        .iter()
        .map(|p| p.to_u64())
        .collect::<Option<Vec<u64>>>()
        .ok_or_else(|| malformed("target numerator exceeds the u64 evaluation fast path"))?;
    let den_big = BigInt::from(den);
    let pow: BigInt = BigInt::one() << frac_bits;
    let view = CoeffView::of_sequence(eps);
    let n = view.len();
    let mut accs: Vec<BigInt> = vec![BigInt::zero(); nums.len()];
    for k in (1..=n).rev() {
        let weight = BigInt::from(l_offset + k);
        // round(ε_k·2^{B′}/(L+k)), shared across targets
        let addend: Option<BigInt> = match view.small(k) {
            Some(0) => None,
            Some(1) => Some(div_round(pow.clone(), &weight)),
            Some(-1) => Some(-div_round(pow.clone(), &weight)),
            Some(c) => Some(div_round(&pow * c, &weight)),
            None => {
                let c = view.value(k);
                if c.is_zero() {
                    None
                } else {
                    Some(div_round(&pow * c.numer(), &(c.denom() * &weight)))
                }
            }
        };
        for (acc, &num) in accs.iter_mut().zip(nums.iter()) {
            let mut t = div_round(std::mem::take(acc) * num, &den_big);
            if let Some(u) = &addend {
                t += u;
            }
            *acc = t;
        }
    }
    let constant = div_round(pow, &BigInt::from(l_offset));
    Ok(accs
        .into_iter()
        .zip(nums.iter())
        .map(|(acc, &num)| &constant + div_round(acc * num, &den_big))
        .collect())
}

/// Evaluates `Q_n` at every target with a certified radius and fills
/// `cert.q_margins`. Passes iff `|value| + radius < threshold` for all
/// targets; the analytic residual bound `A·e^{−nα}/(α(L+n))` is reported
/// alongside for comparison.
pub fn check_q_smallness(cert: &mut PolynomialCertificate) -> Result<QReport, VerifyError> {
    let params = cert.params.clone();
    let n = cert.eps.len();
    if n != params.n {
        return Err(malformed("certificate degree does not match its parameters"));
    }
    let threshold = cert.q_threshold.clone();
    if !threshold.is_positive() {
        return Err(malformed("residual threshold must be positive"));
    }
    let frac_bits = q_working_bits(&params, &threshold);
    let values = q_values_units(&cert.eps, &cert.targets, params.l_offset, frac_bits)?;

    let thr_units: BigInt =
        (threshold.numer() << frac_bits as u64).div_floor(threshold.denom());
    let radius_units = BigInt::from(n + 2);
    // The working precision guarantees the radius is at most a quarter of
    // the threshold, so a failure is always the value's fault.
    debug_assert!(&radius_units * 4 <= thr_units);

    let mut margins = Vec::with_capacity(values.len());
    let mut first_fail: Option<usize> = None;
    for (j, v) in values.iter().enumerate() {
        let margin_units = &thr_units - v.abs() - &radius_units;
        let passed = margin_units.is_positive();
        if !passed && first_fail.is_none() {
            first_fail = Some(j);
        }
        margins.push(QMargin {
            target_index: j,
            value: Dyadic::new(v.clone(), -(frac_bits as i64)),
            radius: Dyadic::new(radius_units.clone(), -(frac_bits as i64)),
            margin: Dyadic::new(margin_units, -(frac_bits as i64)),
            passed,
        });
    }

    // Analytic residual bound A·e^{−nα}/(α(L+n)) as a certified enclosure.
    let n_alpha = params.alpha.clone() * BigRational::from_integer(BigInt::from(n));
    let y = DyInterval::from_rational(&-n_alpha.numer().clone(), n_alpha.denom(), 192);
    let factor = params.model.abs_bound()
        / (params.alpha.clone() * BigRational::from_integer(BigInt::from(params.l_offset + n)));
    let factor_iv = DyInterval::from_rational(factor.numer(), factor.denom(), 192);
    let analytic_tail = exp_interval(&y, 192).mul(&factor_iv, 192);
    // The measurement must not exceed the closed-form estimate:
    // |value| − radius ≤ upper(tail) at every target.
    let analytic_consistent = values.iter().all(|v| {
        let low = v.abs() - &radius_units;
        analytic_tail.hi.cmp_rational(&low, &(BigInt::one() << frac_bits as u64))
            != Ordering::Less
    });

    cert.q_margins = margins.clone();
    if let Some(j) = first_fail {
        return Err(VerifyError::SmallnessFailed {
            target_index: j,
            value: margins[j].value.to_mant_exp_string(),
            threshold: threshold.to_string(),
        });
    }
    Ok(QReport { frac_bits, threshold, margins, analytic_tail, analytic_consistent })
}

// ---------------------------------------------------------------------------
// Exact sign evaluation of P_n
// ---------------------------------------------------------------------------

/// Certified sign evaluator for `P(x) = c_0 + Σ c_k x^k` at rational points
/// of `[0,1]`. Two fixed-point enclosure rungs decide almost every point;
/// the exact homogeneous integer `Σ c'_k p^k q^{n−k}` settles the rest
/// (including true zeros), so every answer is unconditional.
struct PolyEval<'a> {
    view: CoeffView<'a>,
    n: u64,
    /// Positive common denominator of all coefficients.
    lcm: BigInt,
    /// Constant coefficient (exactly 1 for assembled certificates).
    c0: BigRational,
    /// First enclosure rung, in fraction bits.
    base_bits: u32,
}

impl<'a> PolyEval<'a> {
    fn from_certificate(cert: &'a PolynomialCertificate) -> Self {
        Self::new(
            CoeffView::of_sequence(&cert.eps),
            BigRational::one(),
            cert.params.bits.max(64) + 160,
        )
    }

    /// Evaluator over explicit coefficients c_0..c_n.
    #[cfg(test)]
    fn from_values(c0: BigRational, tail: &'a [BigRational]) -> Self {
        Self::new(CoeffView::Values(tail), c0, 224)
    }

    fn new(view: CoeffView<'a>, c0: BigRational, base_bits: u32) -> Self {
        let n = view.len();
        let mut lcm: BigInt = c0.denom().clone();
        match &view {
            CoeffView::SmallInt { .. } => {}
            CoeffView::Rational(eps) => {
                for set in eps.model().sets() {
                    for v in set {
                        lcm = lcm.lcm(v.denom());
                    }
                }
            }
            #[cfg(test)]
            CoeffView::Values(values) => {
                for v in *values {
                    lcm = lcm.lcm(v.denom());
                }
            }
        }
        PolyEval { view, n, lcm, c0, base_bits }
    }

    /// Integerized coefficient `c_k·lcm` (k = 0 included).
    fn int_coeff(&self, k: u64) -> BigInt {
        if k == 0 {
            return (&self.lcm / self.c0.denom()) * self.c0.numer();
        }
        if let Some(c) = self.view.small(k) {
            return &self.lcm * c;
        }
        let v = self.view.value(k);
        (&self.lcm / v.denom()) * v.numer()
    }

    /// Fixed-point enclosure `P(p/q)·2^F ± (n+2)` by Horner with
    /// round-half-away division (≤ 1 unit injected per step).
    fn eval_fixed(&self, p: &BigInt, q: &BigInt, frac_bits: u32) -> (BigInt, BigInt) {
        let pow: BigInt = BigInt::one() << frac_bits;
        let mut acc = BigInt::zero();
        for k in (1..=self.n).rev() {
            let mut t = div_round(acc * p, q);
            match self.view.small(k) {
                Some(0) => {}
                Some(1) => t += &pow,
                Some(-1) => t -= &pow,
                Some(c) => t += &pow * c,
                None => {
                    let c = self.view.value(k);
                    if !c.is_zero() {
                        t += div_round(&pow * c.numer(), c.denom());
                    }
                }
            }
            acc = t;
        }
        let constant = div_round(&pow * self.c0.numer(), self.c0.denom());
        let value = constant + div_round(acc * p, q);
        (value, BigInt::from(self.n + 2))
    }

    /// Exact homogeneous value `Σ c'_k p^k q^{n−k}` (same sign as `P(p/q)`
    /// for `q > 0`), by divide-and-conquer so the integer products stay
    /// balanced. Returns `(value, p^{len}, q^{len})` per node.
    fn eval_exact(&self, p: &BigInt, q: &BigInt) -> BigInt {
        self.tree(0, self.n + 1, p, q).0
    }

    fn tree(&self, a: u64, b: u64, p: &BigInt, q: &BigInt) -> (BigInt, BigInt, BigInt) {
        let len = b - a;
        if len <= 512 {
            // Chunk Horner, homogeneous in (p, q):
            //   V = Σ_{k=a}^{b−1} c'_k p^{k−a} q^{b−1−k}
            let mut t = self.int_coeff(b - 1);
            let mut qp = BigInt::one();
            for k in (a..b - 1).rev() {
                qp *= q;
                t = t * p + self.int_coeff(k) * &qp;
            }
            let ppow = p.pow(len as u32);
            let qpow = qp * q;
            (t, ppow, qpow)
        } else {
            let mid = a + len / 2;
            let (vl, pl, ql) = self.tree(a, mid, p, q);
            let (vr, pr, qr) = self.tree(mid, b, p, q);
            (vl * &qr + &pl * vr, pl * pr, ql * qr)
        }
    }

    /// Certified sign of `P(x)` for `x ∈ [0,1]`.
    fn sign_at(&self, x: &BigRational) -> Ordering {
        let p = x.numer();
        let q = x.denom();
        assert!(!p.is_negative() && p <= q, "evaluation points must lie in [0,1]");
        for frac_bits in [self.base_bits, self.base_bits.max(2048) * 2] {
            let (v, radius) = self.eval_fixed(p, q, frac_bits);
            if v.abs() > radius {
                return sign_of(&v);
            }
        }
        sign_of(&self.eval_exact(p, q))
    }

    /// Exact rational evaluation (test oracle; quadratic in n).
    #[cfg(test)]
    fn eval_rational(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for k in (1..=self.n).rev() {
            acc = acc * x.clone() + self.view.value(k);
        }
        acc * x.clone() + self.c0.clone()
    }
}

// ---------------------------------------------------------------------------
// Sign changes and root bracketing
// ---------------------------------------------------------------------------

/// Counts adjacent strict sign changes of `P_n` over the grid, evaluating
/// each point exactly. An exact zero is a root in its own right: it splits
/// adjacency, so the two sides are not compared with each other.
pub fn count_sign_changes(cert: &PolynomialCertificate, grid_points: &[BigRational]) -> usize {
    for w in grid_points.windows(2) {
        assert!(w[0] < w[1], "grid points must be strictly increasing");
    }
    let ev = PolyEval::from_certificate(cert);
    let mut changes = 0;
    let mut prev: Option<Ordering> = None;
    for x in grid_points {
        match ev.sign_at(x) {
            Ordering::Equal => prev = None,
            s => {
                if let Some(pv) = prev {
                    if pv != s {
                        changes += 1;
                    }
                }
                prev = Some(s);
            }
        }
    }
    changes
}

/// Sign cache so refinement never evaluates the same point twice.
struct SignMemo<'a, 'b> {
    ev: &'a PolyEval<'b>,
    memo: BTreeMap<BigRational, Ordering>,
}

impl<'a, 'b> SignMemo<'a, 'b> {
    fn sign(&mut self, x: &BigRational) -> Ordering {
        if let Some(s) = self.memo.get(x) {
            return *s;
        }
        let s = self.ev.sign_at(x);
        self.memo.insert(x.clone(), s);
        s
    }
}

fn two() -> BigRational {
    BigRational::from_integer(BigInt::from(2))
}

/// Scans the grid into nonzero-signed nodes plus root witnesses for exact
/// zeros. A zero at `x` is replaced by probes `x ± gap/4` (inward-only at
/// the grid edges); if the probes straddle, they form a proper bracket,
/// otherwise the zero is recorded as a degenerate bracket `[x, x]`.
fn scan_grid(
    memo: &mut SignMemo,
    grid: &[BigRational],
) -> (Vec<(BigRational, Ordering)>, Vec<Bracket>) {
    let mut nodes: Vec<(BigRational, Ordering)> = Vec::with_capacity(grid.len() + 4);
    let mut zero_brackets = Vec::new();
    let four = BigRational::from_integer(BigInt::from(4));
    for (i, x) in grid.iter().enumerate() {
        let s = memo.sign(x);
        if s != Ordering::Equal {
            nodes.push((x.clone(), s));
            continue;
        }
        let left = if i > 0 {
            Some(x - (x - &grid[i - 1]) / four.clone())
        } else {
            None
        };
        let right = if i + 1 < grid.len() {
            Some(x + (&grid[i + 1] - x) / four.clone())
        } else {
            None
        };
        let sl = left.as_ref().map(|p| memo.sign(p));
        let sr = right.as_ref().map(|p| memo.sign(p));
        match (left, sl, right, sr) {
            (Some(a), Some(sa), Some(b), Some(sb))
                if sa != Ordering::Equal && sb != Ordering::Equal && sa != sb =>
            {
                // The probes straddle the zero. Only the nodes are kept:
                // their adjacent pair produces the bracket exactly once.
                nodes.push((a, sa));
                nodes.push((b, sb));
            }
            (l, sl, r, sr) => {
                // Even-multiplicity touch or an edge zero: record the exact
                // root itself; keep any nonzero probes as nodes.
                zero_brackets.push(Bracket {
                    a: x.clone(),
                    b: x.clone(),
                    sign_a: 0,
                    sign_b: 0,
                });
                if let (Some(a), Some(sa)) = (l, sl) {
                    if sa != Ordering::Equal {
                        nodes.push((a, sa));
                    }
                }
                if let (Some(b), Some(sb)) = (r, sr) {
                    if sb != Ordering::Equal {
                        nodes.push((b, sb));
                    }
                }
            }
        }
    }
    (nodes, zero_brackets)
}

/// Collects sign-change brackets over the grid, bisecting equal-sign cells
/// (breadth-first, in interval order) until `need` brackets exist, the
/// queue drains, or every cell reaches depth `d_max`.
fn find_brackets(
    ev: &PolyEval,
    grid: &[BigRational],
    need: usize,
    d_max: u32,
) -> Vec<Bracket> {
    let mut memo = SignMemo { ev, memo: BTreeMap::new() };
    let (nodes, mut brackets) = scan_grid(&mut memo, grid);

    let mut queue: VecDeque<(BigRational, Ordering, BigRational, Ordering, u32)> =
        VecDeque::new();
    for w in nodes.windows(2) {
        let (ref a, sa) = w[0];
        let (ref b, sb) = w[1];
        queue.push_back((a.clone(), sa, b.clone(), sb, 0));
    }

    let eight = BigRational::from_integer(BigInt::from(8));
    while let Some((a, sa, b, sb, depth)) = queue.pop_front() {
        if sa != sb {
            brackets.push(Bracket {
                a: a.clone(),
                b: b.clone(),
                sign_a: sign_i8(sa),
                sign_b: sign_i8(sb),
            });
            continue;
        }
        if brackets.len() >= need || depth >= d_max {
            continue;
        }
        let m = (&a + &b) / two();
        match memo.sign(&m) {
            Ordering::Equal => {
                // Exact zero strictly inside: probe both sides.
                let w = (&b - &a) / eight.clone();
                let lo = &m - &w;
                let hi = &m + &w;
                let sl = memo.sign(&lo);
                let sh = memo.sign(&hi);
                if sl != Ordering::Equal && sh != Ordering::Equal && sl != sh {
                    brackets.push(Bracket {
                        a: lo.clone(),
                        b: hi.clone(),
                        sign_a: sign_i8(sl),
                        sign_b: sign_i8(sh),
                    });
                } else {
                    brackets.push(Bracket { a: m.clone(), b: m.clone(), sign_a: 0, sign_b: 0 });
                }
                if sl != Ordering::Equal {
                    queue.push_back((a, sa, lo, sl, depth + 1));
                }
                if sh != Ordering::Equal {
                    queue.push_back((hi, sh, b, sb, depth + 1));
                }
            }
            sm if sm != sa => {
                // Both halves change sign: two brackets at once.
                brackets.push(Bracket {
                    a: a.clone(),
                    b: m.clone(),
                    sign_a: sign_i8(sa),
                    sign_b: sign_i8(sm),
                });
                brackets.push(Bracket {
                    a: m.clone(),
                    b: b.clone(),
                    sign_a: sign_i8(sm),
                    sign_b: sign_i8(sb),
                });
            }
            sm => {
                queue.push_back((a, sa, m.clone(), sm, depth + 1));
                queue.push_back((m, sm, b, sb, depth + 1));
            }
        }
    }

    brackets.sort_by(|x, y| x.a.cmp(&y.a).then_with(|| x.b.cmp(&y.b)));
    brackets.dedup();
    brackets
}

/// Certifies `≥ r` distinct roots by sign-change brackets on the base grid
/// (the `s` targets plus their midpoints, 2s−1 points), refining equal-sign
/// cells by exact bisection up to depth `d_max`. Fills `brackets` and
/// `root_count`. The residual check must have passed first.
pub fn certify(cert: &mut PolynomialCertificate, d_max: u32) -> Result<(), VerifyError> {
    if cert.q_margins.is_empty() {
        return Err(malformed("residual margins missing: run the residual check first"));
    }
    if cert.q_margins.iter().any(|m| !m.passed) {
        return Err(malformed("residual check failed: refusing to certify roots"));
    }
    let need = cert.params.r as usize;
    let ev = PolyEval::from_certificate(cert);

    let mut grid: Vec<BigRational> = Vec::with_capacity(2 * cert.targets.len());
    for (i, x) in cert.targets.points.iter().enumerate() {
        if i > 0 {
            grid.push((&cert.targets.points[i - 1] + x) / two());
        }
        grid.push(x.clone());
    }

    let brackets = find_brackets(&ev, &grid, need, d_max);
    let found = brackets.len();
    cert.brackets = brackets;
    cert.root_count = found;
    if found < need {
        return Err(VerifyError::NotEnoughRoots { found, required: cert.params.r });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Full certificate verification
// ---------------------------------------------------------------------------

/// What an accepting verification attests.
#[derive(Debug, Clone)]
pub struct VerifySummary {
    pub root_count: usize,
    pub q_frac_bits: u32,
    pub min_q_margin: Dyadic,
    pub threshold: BigRational,
}

/// Re-checks a certificate from scratch: coefficient membership, target
/// consistency, the threshold derivation, every residual margin (re-run,
/// compared bit for bit), and every bracket's endpoint signs by certified
/// evaluation. Needs only the certificate itself.
pub fn verify_certificate(cert: &PolynomialCertificate) -> Result<VerifySummary, VerifyError> {
    let params = &cert.params;
    params
        .model
        .validate()
        .map_err(|e| malformed(format!("coefficient model invalid: {e}")))?;
    if cert.eps.model() != &params.model {
        return Err(malformed("coefficient sequence model differs from parameters"));
    }
    if cert.eps.len() != params.n {
        return Err(malformed(format!(
            "degree {} does not match parameters ({})",
            cert.eps.len(),
            params.n
        )));
    }
    for (i, &idx) in cert.eps.indices().iter().enumerate() {
        let k = (i + 1) as u64;
        let set = params.model.allowed(k);
        if idx as usize >= set.len() {
            return Err(VerifyError::MembershipViolation {
                index: k,
                value: format!("set index {}", idx),
            });
        }
    }

    // Targets must be exactly the canonical rewrap of their own points.
    let rebuilt = TargetPoints::from_rationals(cert.targets.points.clone(), &params.eta)
        .map_err(|e| malformed(format!("targets invalid: {e}")))?;
    if rebuilt != cert.targets {
        return Err(malformed("target denominators are not in canonical form"));
    }
    if cert.targets.len() != params.s as usize {
        return Err(malformed("target count does not match parameters"));
    }

    // The threshold is a pure function of the parameters.
    let fresh_threshold = q_threshold_lower(params)?;
    if fresh_threshold != cert.q_threshold {
        return Err(malformed("stored residual threshold does not match its derivation"));
    }

    // Re-run the residual check and compare margins bit for bit.
    let mut scratch = cert.clone();
    let report = check_q_smallness(&mut scratch)?;
    if scratch.q_margins != cert.q_margins {
        return Err(malformed("stored residual margins do not match re-evaluation"));
    }

    // Brackets: inside I(α), disjoint interiors, certified endpoint signs.
    if cert.root_count != cert.brackets.len() {
        return Err(malformed("root count does not equal the number of brackets"));
    }
    let one = BigRational::one();
    let window_lo = &one - two() * params.alpha.clone();
    let window_hi = &one - params.alpha.clone();
    let ev = PolyEval::from_certificate(cert);
    for (i, br) in cert.brackets.iter().enumerate() {
        if br.a < window_lo || br.b > window_hi {
            return Err(malformed(format!("bracket {i} leaves the root window")));
        }
        if i > 0 && cert.brackets[i - 1].b > br.a {
            return Err(malformed(format!("brackets {} and {i} overlap", i - 1)));
        }
        if br.a == br.b {
            if br.sign_a != 0 || br.sign_b != 0 {
                return Err(malformed(format!("degenerate bracket {i} with nonzero signs")));
            }
            if ev.sign_at(&br.a) != Ordering::Equal {
                return Err(malformed(format!("bracket {i} claims a root that is not one")));
            }
            continue;
        }
        if br.a > br.b {
            return Err(malformed(format!("bracket {i} endpoints out of order")));
        }
        if (br.sign_a as i32) * (br.sign_b as i32) != -1 {
            return Err(malformed(format!("bracket {i} endpoint signs do not oppose")));
        }
        if sign_i8(ev.sign_at(&br.a)) != br.sign_a || sign_i8(ev.sign_at(&br.b)) != br.sign_b {
            return Err(malformed(format!("bracket {i} endpoint signs fail re-evaluation")));
        }
    }
    if cert.root_count < params.r as usize {
        return Err(VerifyError::NotEnoughRoots {
            found: cert.root_count,
            required: params.r,
        });
    }

    let min_q_margin = cert
        .q_margins
        .iter()
        .map(|m| &m.margin)
        .min_by(|a, b| a.cmp_dyadic(b))
        .cloned()
        .unwrap_or_else(Dyadic::zero);
    Ok(VerifySummary {
        root_count: cert.root_count,
        q_frac_bits: report.frac_bits,
        min_q_margin,
        threshold: report.threshold,
    })
}

// ---------------------------------------------------------------------------
// Serialization: stable JSON (rationals "p/q", fixed-point "m*2^e")
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct QMarginWire {
    target: usize,
    value: String,
    radius: String,
    margin: String,
    passed: bool,
}

#[derive(Serialize, Deserialize)]
struct CertificateWire {
    params: BuildParameters,
    degree: u64,
    coefficients: Vec<String>,
    targets: Vec<String>,
    q_threshold: String,
    q_margins: Vec<QMarginWire>,
    brackets: Vec<[String; 2]>,
    bracket_signs: Vec<[i8; 2]>,
    root_count: usize,
}

impl PolynomialCertificate {
    /// Stable, compact JSON; identical certificates serialize to identical
    /// bytes.
    pub fn to_json_string(&self) -> String {
        let mut coefficients = Vec::with_capacity(self.eps.len() as usize + 1);
        coefficients.push("1".to_string());
        for (_, v) in self.eps.iter() {
            coefficients.push(v.to_string());
        }
        let wire = CertificateWire {
            params: self.params.clone(),
            degree: self.eps.len(),
            coefficients,
            targets: self.targets.points.iter().map(|x| x.to_string()).collect(),
            q_threshold: self.q_threshold.to_string(),
            q_margins: self
                .q_margins
                .iter()
                .map(|m| QMarginWire {
                    target: m.target_index,
                    value: m.value.to_mant_exp_string(),
                    radius: m.radius.to_mant_exp_string(),
                    margin: m.margin.to_mant_exp_string(),
                    passed: m.passed,
                })
                .collect(),
            brackets: self
                .brackets
                .iter()
                .map(|b| [b.a.to_string(), b.b.to_string()])
                .collect(),
            bracket_signs: self.brackets.iter().map(|b| [b.sign_a, b.sign_b]).collect(),
            root_count: self.root_count,
        };
        serde_json::to_string(&wire).expect("certificate serialization cannot fail")
    }

    /// Parses and structurally validates a certificate. Values outside
    /// their allowed sets are rejected here; analytic re-verification is
    /// [`verify_certificate`]'s job.
    pub fn from_json_str(text: &str) -> Result<PolynomialCertificate, VerifyError> {
        let wire: CertificateWire = serde_json::from_str(text)
            .map_err(|e| malformed(format!("certificate JSON does not parse: {e}")))?;
        if wire.coefficients.is_empty() {
            return Err(malformed("coefficient list is empty"));
        }
        if wire.coefficients.len() as u64 != wire.degree + 1 {
            return Err(malformed("coefficient count does not match the stated degree"));
        }
        let parse_rat = |s: &str, what: &str| -> Result<BigRational, VerifyError> {
            s.parse::<BigRational>()
                .map_err(|_| malformed(format!("bad rational in {what}: {s:?}")))
        };
        let c0 = parse_rat(&wire.coefficients[0], "coefficients")?;
        if !c0.is_one() {
            return Err(malformed("constant coefficient must be exactly 1"));
        }
        let mut values = Vec::with_capacity(wire.coefficients.len() - 1);
        for s in &wire.coefficients[1..] {
            values.push(parse_rat(s, "coefficients")?);
        }
        let eps = coefficients_to_sequence(&wire.params.model, &values)?;
        let mut points = Vec::with_capacity(wire.targets.len());
        for s in &wire.targets {
            points.push(parse_rat(s, "targets")?);
        }
        let targets = TargetPoints::from_rationals(points, &wire.params.eta)
            .map_err(|e| malformed(format!("targets invalid: {e}")))?;
        let q_threshold = parse_rat(&wire.q_threshold, "q_threshold")?;
        let parse_dy = |s: &str, what: &str| -> Result<Dyadic, VerifyError> {
            s.parse::<Dyadic>().map_err(|e| malformed(format!("bad value in {what}: {e}")))
        };
        let mut q_margins = Vec::with_capacity(wire.q_margins.len());
        for m in &wire.q_margins {
            q_margins.push(QMargin {
                target_index: m.target,
                value: parse_dy(&m.value, "q_margins")?,
                radius: parse_dy(&m.radius, "q_margins")?,
                margin: parse_dy(&m.margin, "q_margins")?,
                passed: m.passed,
            });
        }
        if wire.bracket_signs.len() != wire.brackets.len() {
            return Err(malformed("bracket sign list length differs from brackets"));
        }
        let mut brackets = Vec::with_capacity(wire.brackets.len());
        for (pair, signs) in wire.brackets.iter().zip(wire.bracket_signs.iter()) {
            brackets.push(Bracket {
                a: parse_rat(&pair[0], "brackets")?,
                b: parse_rat(&pair[1], "brackets")?,
                sign_a: signs[0],
                sign_b: signs[1],
            });
        }
        Ok(PolynomialCertificate {
            params: wire.params,
            eps,
            targets,
            q_threshold,
            q_margins,
            brackets,
            root_count: wire.root_count,
        })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
