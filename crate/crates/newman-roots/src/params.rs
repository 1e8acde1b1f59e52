//! Run-parameter selection.
//!
//! Everything the pipeline needs is derived here, exactly, from the family's
//! balance data (window M, magnitude bound A, margin a) and the requested
//! root count r:
//!
//! * the control geometry: window caps Ψ = 3MA+1 and Λ = 3Ψ, the per-step
//!   disturbance budget δ = min(1/(9M), a/(6MΨ)), and the series offset L;
//! * the analytic contour data: target spread η, half-width α = η/(2s),
//!   damping ratio μ = 1 − η/s, damping-factor degree ℓ > 2/δ;
//! * the degree n — the smallest n for which a lower bound on how often the
//!   polynomial must be non-tiny on the target interval (the Jensen-style
//!   budget β) is beaten by the decay of the controlled tail:
//!
//!   ```text
//!     n·α + ln(α(L+n)/A) + ln(α/(2(s−1))) > 2β,
//!     β = C_J/α + L·ln(1/(1−2α)),   C_J = (9π/√2)·ln(4·max(1,A));
//!   ```
//!
//! * the working fixed-point precision B and the sample count N for
//!   coefficient extraction (smallest power of two > n+1 whose wrap-around
//!   aliasing is provably below 2^{−B−4}).
//!
//! Rational quantities are exact `BigRational`s; the transcendental budget β
//! is kept as a certified dyadic enclosure. Degree selection binary-searches
//! a monotone predicate, escalating enclosure precision until the comparison
//! is decisive.

use crate::coeff_model::CoefficientModel;
use crate::numeric::dyadic::{ln_rational, pi_interval, sqrt_rational, DyInterval, Dyadic};
use crate::numeric::Precision;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::cmp::Ordering;

/// Errors from parameter selection.
#[derive(Debug, thiserror::Error)]
pub enum ParamError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("product of target points {product} falls below 1−η = {floor}")]
    ProductTooSmall { product: String, floor: String },
    #[error("degree search could not resolve the sufficiency predicate below precision {0}")]
    DegreeUnresolved(u32),
}

/// User-supplied overrides; anything left `None` is selected automatically.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Target spread η ∈ (0, 1/3); default 1/8.
    pub eta: Option<BigRational>,
    /// Damping-factor degree ℓ; must stay > 2/δ.
    pub ell: Option<u64>,
    /// Number of targets s ≥ 2; default 2r.
    pub s: Option<u32>,
    /// Fixed-point fraction bits B; default 3r + 64.
    pub precision_bits: Option<u32>,
    /// Sample count N; must be a power of two > n+1 with provably small aliasing.
    pub fft_size: Option<u64>,
}

/// The complete, validated parameter set for one construction run.
#[derive(Debug, Clone)]
pub struct BuildParameters {
    pub model: CoefficientModel,
    /// Requested number of certified roots.
    pub r: u32,
    /// Number of target points (default 2r).
    pub s: u32,
    /// Target spread η ∈ (0, 1/3).
    pub eta: BigRational,
    /// Interval half-width α = η/(2s); targets live in [1−2α, 1−α].
    pub alpha: BigRational,
    /// Damping ratio μ = 1 − η/s.
    pub mu: BigRational,
    /// Series offset L (the tail weights are 1/(L+k)).
    pub l_offset: u64,
    /// Polynomial degree.
    pub n: u64,
    /// Per-step disturbance budget δ.
    pub delta: BigRational,
    /// Inner window cap Ψ = 3MA + 1.
    pub psi_bound: BigRational,
    /// Outer window cap Λ = 3Ψ.
    pub lambda_bound: BigRational,
    /// Degree ℓ of the double-zero damping factor (needs ℓ > 2/δ).
    pub g_degree: u64,
    /// Fixed-point fraction bits B.
    pub bits: u32,
    /// Contour sample count N (power of two > n+1).
    pub fft_size: u64,
    /// Certified enclosure of the non-tininess budget β.
    pub beta: DyInterval,
    /// Certified enclosure of the budget constant C_J = (9π/√2)·ln(4·max(1,A)).
    pub jensen_constant: DyInterval,
}

/// The s target points x_j = 1−2α + (j−1)·α/(s−1), exact, with their shared
/// denominator (all evaluation code works on the integer numerators).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetPoints {
    pub points: Vec<BigRational>,
    pub shared_den: BigInt,
    pub numerators: Vec<BigInt>,
}

fn rat_i(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Ceiling of a positive rational as u64.
fn ceil_u64(x: &BigRational) -> u64 {
    debug_assert!(x.is_positive());
    x.ceil().to_integer().to_u64().expect("parameter fits u64")
}

/// Enclosure of C_J = (9π/√2)·ln(4·max(1, A)) = (9π√2/2)·ln(4·max(1, A)).
pub fn jensen_constant(abs_bound: &BigRational, prec: u32) -> DyInterval {
    let pi = pi_interval(prec);
    let rt2 = sqrt_rational(&BigInt::from(2), &BigInt::from(1), prec);
    let coeff = pi.mul(&rt2, prec).mul_int(9).div(&DyInterval::from_int(2), prec);
    let one = rat_i(1);
    let four_a = rat_i(4) * if abs_bound > &one { abs_bound.clone() } else { one };
    let ln_term = ln_rational(four_a.numer(), four_a.denom(), prec);
    coeff.mul(&ln_term, prec)
}

/// Enclosure of β = C_J/α + L·ln(1/(1−2α)).
pub fn beta_interval(
    abs_bound: &BigRational,
    alpha: &BigRational,
    l_offset: u64,
    prec: u32,
) -> DyInterval {
    let jc = jensen_constant(abs_bound, prec);
    let alpha_iv = DyInterval::from_rational(alpha.numer(), alpha.denom(), prec);
    let first = jc.div(&alpha_iv, prec);
    // ln(1/(1−2α)) = ln(q / (q − 2p)) for α = p/q.
    let one_minus = rat_i(1) - rat_i(2) * alpha.clone();
    assert!(one_minus.is_positive(), "α < 1/2 by construction");
    let ln_term = ln_rational(one_minus.denom(), one_minus.numer(), prec);
    first.add(&ln_term.mul_int(l_offset as i64))
}

/// One evaluation of the degree-sufficiency predicate
/// `n·α + ln(α(L+n)/A) + ln(α/(2(s−1))) > 2β` at enclosure precision `prec`.
/// Returns None when the enclosures straddle the boundary.
fn suff_predicate(
    n: u64,
    abs_bound: &BigRational,
    alpha: &BigRational,
    l_offset: u64,
    s: u32,
    prec: u32,
) -> Option<bool> {
    let beta = beta_interval(abs_bound, alpha, l_offset, prec);
    // n·α exactly.
    let n_alpha = alpha * BigRational::from_integer(BigInt::from(n));
    let mut lhs = DyInterval::from_rational(n_alpha.numer(), n_alpha.denom(), prec);
    // ln(α(L+n)/A)
    let t1 = alpha * BigRational::from_integer(BigInt::from(l_offset + n)) / abs_bound.clone();
    lhs = lhs.add(&ln_rational(t1.numer(), t1.denom(), prec));
    // ln(α/(2(s−1)))
    let t2 = alpha / rat_i(2 * (s as i64 - 1));
    lhs = lhs.add(&ln_rational(t2.numer(), t2.denom(), prec));
    let diff = lhs.sub(&beta.mul_int(2));
    match diff.sign() {
        Some(Ordering::Greater) => Some(true),
        Some(_) => Some(false),
        None => None,
    }
}

/// Decides the sufficiency predicate at degree n, escalating precision until
/// the enclosures separate.
pub fn degree_sufficient(
    n: u64,
    abs_bound: &BigRational,
    alpha: &BigRational,
    l_offset: u64,
    s: u32,
) -> Result<bool, ParamError> {
    let mut prec = 192;
    while prec <= 6144 {
        if let Some(ans) = suff_predicate(n, abs_bound, alpha, l_offset, s, prec) {
            return Ok(ans);
        }
        prec *= 2;
    }
    Err(ParamError::DegreeUnresolved(6144))
}

/// Smallest degree n satisfying the sufficiency predicate (monotone in n:
/// the left side grows by at least α per unit of n while β is fixed).
pub fn select_degree(
    abs_bound: &BigRational,
    alpha: &BigRational,
    l_offset: u64,
    s: u32,
) -> Result<u64, ParamError> {
    let holds = |n: u64| degree_sufficient(n, abs_bound, alpha, l_offset, s);
    let mut hi = 1u64 << 10;
    while !holds(hi)? {
        hi = hi
            .checked_mul(2)
            .ok_or_else(|| ParamError::Infeasible("degree search overflow".into()))?;
    }
    let mut lo = 0u64; // predicate is false at 0: lhs → −∞ as its logs dwarf nα
    // Invariant: ¬holds(lo), holds(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Checks the wrap-around aliasing criterion for sample count N:
/// `3^s · (1−η)^{−2} · (2 + 2/ℓ) · (1−α)^N < 2^{−B−4}`.
///
/// The left side is the certified bound on the folded coefficient mass: the
/// sampled product has modulus ≤ 3^s·(1−η)^{−2}·max|G_ℓ| on the circle of
/// radius u = 1−α, and discretizing at N points folds tails in powers of u^N.
pub fn aliasing_small_enough(
    n_samples: u64,
    s: u32,
    eta: &BigRational,
    alpha: &BigRational,
    g_degree: u64,
    bits: u32,
) -> bool {
    let prec = 160;
    let three_s = BigRational::from_integer(BigInt::from(3).pow(s));
    let one_minus_eta = rat_i(1) - eta.clone();
    let g_max = rat_i(2) + rat(2, g_degree as i64);
    let factor = three_s * g_max / (one_minus_eta.clone() * one_minus_eta);
    let u = rat_i(1) - alpha.clone();
    debug_assert!(u.is_positive());
    let u_pow = DyInterval::from_rational(u.numer(), u.denom(), prec).pow_int(n_samples, prec);
    let lhs = DyInterval::from_rational(factor.numer(), factor.denom(), prec).mul(&u_pow, prec);
    let threshold = Dyadic::new(BigInt::one(), -((bits as i64) + 4));
    lhs.hi.cmp_dyadic(&threshold) == Ordering::Less
}

/// Derives and validates the full parameter set.
pub fn select_parameters(
    model: &CoefficientModel,
    r: u32,
    overrides: &Overrides,
) -> Result<BuildParameters, ParamError> {
    if r == 0 {
        return Err(ParamError::Infeasible("need at least one root".into()));
    }
    let s = overrides.s.unwrap_or(2 * r);
    if s < 2 {
        return Err(ParamError::Infeasible(format!("need s ≥ 2 targets, got {s}")));
    }
    if s < r {
        return Err(ParamError::Infeasible(format!(
            "cannot certify {r} roots from {s} targets"
        )));
    }
    let eta = overrides.eta.clone().unwrap_or_else(|| rat(1, 8));
    if !eta.is_positive() || eta >= rat(1, 3) {
        return Err(ParamError::Infeasible(format!("η must lie in (0, 1/3), got {eta}")));
    }

    let window_m = model.balance_window() as i64;
    let abs_bound = model.abs_bound().clone();
    let margin_a = model.balance_margin().clone();

    let alpha = eta.clone() / rat_i(2 * s as i64);
    let mu = rat_i(1) - eta.clone() / rat_i(s as i64);

    let psi_bound = rat_i(3) * rat_i(window_m) * abs_bound.clone() + rat_i(1);
    let lambda_bound = rat_i(3) * psi_bound.clone();
    let delta = (rat_i(1) / rat_i(9 * window_m))
        .min(margin_a.clone() / (rat_i(6 * window_m) * psi_bound.clone()));

    // L: smallest integer at or above all three lower bounds.
    let l_rat = (rat_i(6 * window_m) * psi_bound.clone() / margin_a.clone())
        .max(rat_i(9 * window_m))
        .max(rat_i(2 * s as i64) / eta.clone());
    let l_offset = ceil_u64(&l_rat);

    // ℓ: smallest integer strictly above 2/δ.
    let two_over_delta = rat_i(2) / delta.clone();
    let ell_min = two_over_delta.floor().to_integer().to_u64().unwrap() + 1;
    let g_degree = overrides.ell.unwrap_or(ell_min);
    if BigRational::from_integer(BigInt::from(g_degree)) <= two_over_delta {
        return Err(ParamError::Infeasible(format!(
            "damping degree ℓ = {g_degree} must exceed 2/δ = {two_over_delta}"
        )));
    }

    let bits = overrides.precision_bits.unwrap_or(3 * r + 64);
    if !(32..=1 << 20).contains(&bits) {
        return Err(ParamError::Infeasible(format!(
            "precision must lie in [32, 2^20] bits, got {bits}"
        )));
    }

    // Certified budget β and the degree.
    let beta = beta_interval(&abs_bound, &alpha, l_offset, 192);
    let jensen = jensen_constant(&abs_bound, 192);
    let n = select_degree(&abs_bound, &alpha, l_offset, s)?;

    // N: smallest power of two > n+1 passing the aliasing criterion, unless
    // overridden (the override must still pass).
    let fft_size = match overrides.fft_size {
        Some(forced) => {
            if !forced.is_power_of_two() || forced <= n + 1 {
                return Err(ParamError::Infeasible(format!(
                    "sample count {forced} is not a power of two above n+1 = {}",
                    n + 1
                )));
            }
            if !aliasing_small_enough(forced, s, &eta, &alpha, g_degree, bits) {
                return Err(ParamError::Infeasible(format!(
                    "sample count {forced} does not make aliasing provably < 2^-{}",
                    bits + 4
                )));
            }
            forced
        }
        None => {
            let mut candidate = (n + 2).next_power_of_two();
            let mut tries = 0;
            while !aliasing_small_enough(candidate, s, &eta, &alpha, g_degree, bits) {
                candidate = candidate
                    .checked_mul(2)
                    .ok_or_else(|| ParamError::Infeasible("aliasing never small enough".into()))?;
                tries += 1;
                if tries > 16 {
                    return Err(ParamError::Infeasible(
                        "aliasing criterion failed 16 doublings".into(),
                    ));
                }
            }
            candidate
        }
    };

    let params = BuildParameters {
        model: model.clone(),
        r,
        s,
        eta,
        alpha,
        mu,
        l_offset,
        n,
        delta,
        psi_bound,
        lambda_bound,
        g_degree,
        bits,
        fft_size,
        beta,
        jensen_constant: jensen,
    };
    params.check_consistency()?;
    Ok(params)
}

impl BuildParameters {
    /// Exact consistency checks: every algebraic invariant that does not
    /// require a degree search. Used after selection and after reading a
    /// certificate back from disk.
    pub fn check_consistency(&self) -> Result<(), ParamError> {
        let m = rat_i(self.model.balance_window() as i64);
        let a_bound = self.model.abs_bound().clone();
        let margin = self.model.balance_margin().clone();
        let fail = |msg: String| Err(ParamError::Infeasible(msg));

        if self.alpha != self.eta.clone() / rat_i(2 * self.s as i64) {
            return fail("α ≠ η/(2s)".into());
        }
        if self.mu != rat_i(1) - self.eta.clone() / rat_i(self.s as i64) {
            return fail("μ ≠ 1 − η/s".into());
        }
        if self.psi_bound != rat_i(3) * m.clone() * a_bound.clone() + rat_i(1) {
            return fail("Ψ ≠ 3MA + 1".into());
        }
        if self.lambda_bound != rat_i(3) * self.psi_bound.clone() {
            return fail("Λ ≠ 3Ψ".into());
        }
        let delta_cap =
            (rat_i(1) / (rat_i(9) * m.clone())).min(margin.clone() / (rat_i(6) * m.clone() * self.psi_bound.clone()));
        if self.delta > delta_cap {
            return fail(format!("δ = {} exceeds cap {delta_cap}", self.delta));
        }
        let l_rat = BigRational::from_integer(BigInt::from(self.l_offset));
        let l_floor = (rat_i(6) * m.clone() * self.psi_bound.clone() / margin)
            .max(rat_i(9) * m.clone())
            .max(rat_i(2 * self.s as i64) / self.eta.clone());
        if l_rat < l_floor {
            return fail(format!("L = {} below its floor {l_floor}", self.l_offset));
        }
        if BigRational::from_integer(BigInt::from(self.g_degree)) <= rat_i(2) / self.delta.clone() {
            return fail("ℓ ≤ 2/δ".into());
        }
        if !self.fft_size.is_power_of_two() || self.fft_size <= self.n + 1 {
            return fail(format!(
                "N = {} is not a power of two above n+1",
                self.fft_size
            ));
        }
        // Contraction margin: 1 − (L+1)/L·μ ≥ α (equivalently L ≥ 2s/η keeps
        // the per-step growth factor strictly inside the damping).
        let growth = rat_i(self.l_offset as i64 + 1) * self.mu.clone() / rat_i(self.l_offset as i64);
        if rat_i(1) - growth < self.alpha {
            return fail("growth×damping margin below α".into());
        }
        // Trap geometry: the outer cap re-entered from anywhere the inner cap
        // allows. Exact rational inequalities.
        if self.mu.clone() * self.lambda_bound.clone() - self.psi_bound.clone() < self.psi_bound {
            return fail("μΛ − Ψ < Ψ".into());
        }
        let drift = (rat_i(1) / rat_i(self.l_offset as i64) + self.delta.clone())
            * self.lambda_bound.clone()
            + a_bound;
        if drift > self.psi_bound.clone() / m {
            return fail("(1/L + δ)Λ + A > Ψ/M".into());
        }
        Ok(())
    }

    pub fn precision(&self) -> Precision {
        Precision::new(self.bits)
    }

    /// The interval I(α) = [1−2α, 1−α] that must contain every certified root.
    pub fn root_interval(&self) -> (BigRational, BigRational) {
        (
            rat_i(1) - rat_i(2) * self.alpha.clone(),
            rat_i(1) - self.alpha.clone(),
        )
    }
}

/// Builds the s target points and certifies Π x_j ≥ 1−η exactly.
pub fn target_points(params: &BuildParameters) -> Result<TargetPoints, ParamError> {
    let s = params.s as i64;
    let alpha = &params.alpha;
    let mut points = Vec::with_capacity(params.s as usize);
    for j in 1..=s {
        // x_j = 1 − 2α + (j−1)·α/(s−1)
        let x = rat_i(1) - rat_i(2) * alpha.clone()
            + rat_i(j - 1) * alpha.clone() / rat_i(s - 1);
        points.push(x);
    }
    TargetPoints::from_rationals(points, &params.eta)
}

impl TargetPoints {
    /// Wraps an explicit strictly-increasing list of targets in (0, 1),
    /// checking the product floor Π x_j ≥ 1−η.
    pub fn from_rationals(
        points: Vec<BigRational>,
        eta: &BigRational,
    ) -> Result<TargetPoints, ParamError> {
        assert!(!points.is_empty());
        let one = rat_i(1);
        let mut product = rat_i(1);
        for (i, x) in points.iter().enumerate() {
            assert!(x.is_positive() && *x < one, "targets must lie in (0,1)");
            if i > 0 {
                assert!(points[i - 1] < *x, "targets must be strictly increasing");
            }
            product *= x.clone();
        }
        let floor = one - eta.clone();
        if product < floor {
            return Err(ParamError::ProductTooSmall {
                product: product.to_string(),
                floor: floor.to_string(),
            });
        }
        let mut shared_den = BigInt::one();
        for x in &points {
            shared_den = shared_den.lcm(x.denom());
        }
        let numerators = points
            .iter()
            .map(|x| x.numer() * (&shared_den / x.denom()))
            .collect();
        Ok(TargetPoints {
            points,
            shared_den,
            numerators,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Serialization: rationals as "p/q" strings, dyadics as "m*2^e" strings.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ParamsWire {
    model: CoefficientModel,
    r: u32,
    s: u32,
    eta: String,
    alpha: String,
    mu: String,
    l_offset: u64,
    n: u64,
    delta: String,
    psi_bound: String,
    lambda_bound: String,
    g_degree: u64,
    bits: u32,
    fft_size: u64,
    beta_lo: String,
    beta_hi: String,
    jensen_lo: String,
    jensen_hi: String,
}

impl Serialize for BuildParameters {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ParamsWire {
            model: self.model.clone(),
            r: self.r,
            s: self.s,
            eta: self.eta.to_string(),
            alpha: self.alpha.to_string(),
            mu: self.mu.to_string(),
            l_offset: self.l_offset,
            n: self.n,
            delta: self.delta.to_string(),
            psi_bound: self.psi_bound.to_string(),
            lambda_bound: self.lambda_bound.to_string(),
            g_degree: self.g_degree,
            bits: self.bits,
            fft_size: self.fft_size,
            beta_lo: self.beta.lo.to_mant_exp_string(),
            beta_hi: self.beta.hi.to_mant_exp_string(),
            jensen_lo: self.jensen_constant.lo.to_mant_exp_string(),
            jensen_hi: self.jensen_constant.hi.to_mant_exp_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BuildParameters {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let w = ParamsWire::deserialize(deserializer)?;
        let rational = |t: &str| -> Result<BigRational, D::Error> {
            t.parse()
                .map_err(|_| D::Error::custom(format!("bad rational {t:?}")))
        };
        let dyadic = |t: &str| -> Result<Dyadic, D::Error> {
            t.parse().map_err(D::Error::custom)
        };
        let params = BuildParameters {
            model: w.model,
            r: w.r,
            s: w.s,
            eta: rational(&w.eta)?,
            alpha: rational(&w.alpha)?,
            mu: rational(&w.mu)?,
            l_offset: w.l_offset,
            n: w.n,
            delta: rational(&w.delta)?,
            psi_bound: rational(&w.psi_bound)?,
            lambda_bound: rational(&w.lambda_bound)?,
            g_degree: w.g_degree,
            bits: w.bits,
            fft_size: w.fft_size,
            beta: DyInterval {
                lo: dyadic(&w.beta_lo)?,
                hi: dyadic(&w.beta_hi)?,
            },
            jensen_constant: DyInterval {
                lo: dyadic(&w.jensen_lo)?,
                hi: dyadic(&w.jensen_hi)?,
            },
        };
        params.check_consistency().map_err(D::Error::custom)?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_encloses_decimal(iv: &DyInterval, digits: &str, scale: u32, tol_ulps: i64) {
        // digits is an integer string representing digits·10^{−scale}.
        let p: BigInt = digits.parse().unwrap();
        let q = BigInt::from(10u32).pow(scale);
        let lo_ok = iv.lo.cmp_rational(&(&p + BigInt::from(tol_ulps)), &q) != Ordering::Greater;
        let hi_ok = iv.hi.cmp_rational(&(&p - BigInt::from(tol_ulps)), &q) != Ordering::Less;
        let tight = iv
            .width()
            .cmp_rational(&BigInt::from(2 * tol_ulps + 1), &q)
            == Ordering::Less;
        assert!(
            lo_ok && hi_ok && tight,
            "enclosure [{}, {}] does not match {digits}e-{scale}",
            iv.lo.to_f64(),
            iv.hi.to_f64()
        );
    }

    #[test]
    fn littlewood_constants_match_hand_values() {
        let model = CoefficientModel::littlewood();
        let p = select_parameters(&model, 2, &Overrides::default()).unwrap();
        assert_eq!(p.psi_bound, rat_i(4));
        assert_eq!(p.lambda_bound, rat_i(12));
        assert_eq!(p.delta, rat(1, 24));
        assert_eq!(p.g_degree, 49); // smallest integer > 2/(1/24) = 48
        assert_eq!(p.l_offset, 64); // max(24, 9, 2s/η = 64)
        assert_eq!(p.bits, 70);
        assert_eq!(p.eta, rat(1, 8));
        assert_eq!(p.alpha, rat(1, 64)); // η/(2s) with s = 4
        assert_eq!(p.mu, rat(31, 32));
    }

    #[test]
    fn newman_constants_match_hand_values() {
        let model = CoefficientModel::newman();
        let p = select_parameters(&model, 2, &Overrides::default()).unwrap();
        assert_eq!(p.psi_bound, rat_i(7));
        assert_eq!(p.lambda_bound, rat_i(21));
        assert_eq!(p.delta, rat(1, 84));
        assert_eq!(p.g_degree, 169);
        assert_eq!(p.l_offset, 84); // 6·2·7/1 = 84 dominates 2s/η = 64
    }

    #[test]
    fn alpha_tracks_r_one() {
        let model = CoefficientModel::littlewood();
        let p = select_parameters(&model, 1, &Overrides::default()).unwrap();
        assert_eq!(p.s, 2);
        assert_eq!(p.alpha, p.eta.clone() / rat_i(4));
    }

    #[test]
    fn degrees_match_independent_search() {
        // Smallest n with nα + ln(α(L+n)/A) + ln(α/(2(s−1))) > 2β, computed
        // independently with 50-digit interval arithmetic and frozen.
        let lw = CoefficientModel::littlewood();
        for (r, want) in [(2u32, 227_169u64), (4, 908_543), (6, 2_044_051), (8, 3_633_682)] {
            let p = select_parameters(&lw, r, &Overrides::default()).unwrap();
            assert_eq!(p.n, want, "littlewood r={r}");
            assert_eq!(p.fft_size, (want + 2).next_power_of_two(), "N is first pow2 > n+1");
        }
        let nm = CoefficientModel::newman();
        let p = select_parameters(&nm, 2, &Overrides::default()).unwrap();
        assert_eq!(p.n, 227_250);
    }

    #[test]
    fn degree_is_boundary_sharp() {
        let model = CoefficientModel::littlewood();
        let p = select_parameters(&model, 2, &Overrides::default()).unwrap();
        let a = model.abs_bound().clone();
        assert!(degree_sufficient(p.n, &a, &p.alpha, p.l_offset, p.s).unwrap());
        assert!(!degree_sufficient(p.n - 1, &a, &p.alpha, p.l_offset, p.s).unwrap());
    }

    #[test]
    fn beta_matches_frozen_enclosures() {
        // 36-decimal values from an independent 50-digit computation.
        let lw = CoefficientModel::littlewood();
        let p4 = select_parameters(&lw, 4, &Overrides::default()).unwrap();
        assert_encloses_decimal(
            &p4.beta,
            "3549682482719917560313391513335564275812",
            36,
            2,
        );
        let p6 = select_parameters(&lw, 6, &Overrides::default()).unwrap();
        assert_encloses_decimal(
            &p6.beta,
            "5323510529116514337640788626989945920677",
            36,
            2,
        );
        let p8 = select_parameters(&lw, 8, &Overrides::default()).unwrap();
        assert_encloses_decimal(
            &p8.beta,
            "7097341239486014122038785466614838071531",
            36,
            2,
        );
        let nm = CoefficientModel::newman();
        let p2 = select_parameters(&nm, 2, &Overrides::default()).unwrap();
        assert_encloses_decimal(
            &p2.beta,
            "1776500237172422618663000275685165281571",
            36,
            2,
        );
    }

    #[test]
    fn target_points_match_examples() {
        // s = 2, α = 1/100 (η = 1/25): the two points are 1−2α and 1−α.
        let model = CoefficientModel::littlewood();
        let p = select_parameters(
            &model,
            1,
            &Overrides {
                eta: Some(rat(1, 25)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(p.alpha, rat(1, 100));
        let t = target_points(&p).unwrap();
        assert_eq!(t.points, vec![rat(49, 50), rat(99, 100)]);

        // s = 4: consecutive targets are α/3 apart.
        let p4 = select_parameters(&model, 2, &Overrides::default()).unwrap();
        let t4 = target_points(&p4).unwrap();
        assert_eq!(t4.len(), 4);
        let gap = t4.points[1].clone() - t4.points[0].clone();
        assert_eq!(gap, p4.alpha.clone() / rat_i(3));
        // Shared denominator reproduces every point.
        for (x, num) in t4.points.iter().zip(&t4.numerators) {
            assert_eq!(
                x,
                &BigRational::new(num.clone(), t4.shared_den.clone())
            );
        }
    }

    #[test]
    fn target_product_floor_is_checked() {
        // Artificially tiny points violate Π x_j ≥ 1−η.
        let err = TargetPoints::from_rationals(vec![rat(1, 2), rat(3, 4)], &rat(1, 8));
        assert!(matches!(err, Err(ParamError::ProductTooSmall { .. })));
    }

    #[test]
    fn safety_inequalities_hold_for_builtins() {
        for model in [
            CoefficientModel::littlewood(),
            CoefficientModel::newman(),
            CoefficientModel::height1(),
        ] {
            for r in [1u32, 2, 4] {
                let p = select_parameters(&model, r, &Overrides::default()).unwrap();
                // μΛ − Ψ ≥ Ψ and ((1/L)+δ)Λ + A ≤ Ψ/M re-checked explicitly.
                assert!(
                    p.mu.clone() * p.lambda_bound.clone() - p.psi_bound.clone() >= p.psi_bound
                );
                let m = rat_i(model.balance_window() as i64);
                let drift = (rat_i(1) / rat_i(p.l_offset as i64) + p.delta.clone())
                    * p.lambda_bound.clone()
                    + model.abs_bound().clone();
                assert!(drift <= p.psi_bound.clone() / m);
            }
        }
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let model = CoefficientModel::littlewood();
        let bad_eta = select_parameters(
            &model,
            2,
            &Overrides {
                eta: Some(rat(1, 3)),
                ..Default::default()
            },
        );
        assert!(matches!(bad_eta, Err(ParamError::Infeasible(_))));

        let bad_ell = select_parameters(
            &model,
            2,
            &Overrides {
                ell: Some(48), // 2/δ = 48 exactly: not strictly above
                ..Default::default()
            },
        );
        assert!(matches!(bad_ell, Err(ParamError::Infeasible(_))));

        let bad_n = select_parameters(
            &model,
            2,
            &Overrides {
                fft_size: Some(100_000), // not a power of two
                ..Default::default()
            },
        );
        assert!(matches!(bad_n, Err(ParamError::Infeasible(_))));
    }

    #[test]
    fn params_serialization_round_trip() {
        let model = CoefficientModel::littlewood();
        let p = select_parameters(&model, 2, &Overrides::default()).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: BuildParameters = serde_json::from_str(&json).unwrap();
        assert_eq!(back.n, p.n);
        assert_eq!(back.alpha, p.alpha);
        assert_eq!(back.fft_size, p.fft_size);
        assert_eq!(back.beta.lo.cmp_dyadic(&p.beta.lo), Ordering::Equal);
        // A second serialization is byte-identical (determinism).
        assert_eq!(json, serde_json::to_string(&back).unwrap());
    }

    #[test]
    fn retry_ladder_parameters_stay_feasible() {
        // The construct retry policy halves η and doubles ℓ; both remain
        // acceptable overrides for several rungs.
        let model = CoefficientModel::littlewood();
        let mut eta = rat(1, 8);
        let mut ell = 49u64;
        for _ in 0..3 {
            let p = select_parameters(
                &model,
                2,
                &Overrides {
                    eta: Some(eta.clone()),
                    ell: Some(ell),
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(p.eta, eta);
            assert_eq!(p.g_degree, ell);
            eta /= rat_i(2);
            ell *= 2;
        }
    }
}
