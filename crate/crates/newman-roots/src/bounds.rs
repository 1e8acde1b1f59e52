//! The classical converse: an upper bound on how many roots any admissible
//! polynomial can have in `(0, 1]`.
//!
//! Construction: with `ℓ = ⌈√n⌉`, the averaged Chebyshev sum
//!
//! ```text
//! q₀(t) = (1 + 2·Σ_{j=1}^ℓ T_j(t)) / (2ℓ+1)
//! ```
//!
//! is a normalized Dirichlet kernel: `q₀(1) = 1`, all `ℓ` roots real in
//! `[−1, 1]`. Rescaled to `q₁(t) = q₀(1 − 2t/n)`, its values at the integers
//! `1..n` decay like `|q₁(k)| ≤ 1/(2√k)`, so a small power `v = v(A)` makes
//! `Σ_{k=1}^n |q₁(k)|^v < 1/A`. The damping polynomial `q = q₁^v` (degree
//! `m = v·ℓ`) then caps the number of roots of any coefficient-bounded
//! polynomial at `m`: certificates from the construction pipeline are
//! cross-checked against `root_count ≤ v(A)·⌈√n⌉`.
//!
//! Everything here is exact rational arithmetic. The only non-rational
//! ingredient — realness of the kernel roots — is certified by counting
//! sign alternations of `q₀` at `ℓ+1` near-extremal points, evaluated in
//! fixed point with an explicit error radius.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

/// Exact power sums are evaluated term by term up to this degree; beyond,
/// the certified closed-form bound `2^{1−v}` (valid for every `n`) stands in.
pub const EXACT_SUM_CAP: u64 = 4096;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("degree must be at least 1")]
    DegreeZero,
    #[error("coefficient bound must be positive, got {0}")]
    NonPositiveBound(String),
    #[error("power sum {sum} is not below 1/A = {inverse_bound} even at v = {v}")]
    SumCheckFailed {
        v: u32,
        sum: String,
        inverse_bound: String,
    },
    #[error("sign alternation of the kernel could not be certified at point {index}")]
    RealnessUnverified { index: u64 },
}

/// The damping polynomial data: kernel degree, power, exact coefficients
/// of the rescaled kernel, and the certified power-sum bound.
#[derive(Debug, Clone)]
pub struct DampingPolynomial {
    /// Degree this was built for.
    pub n: u64,
    /// Kernel degree ℓ = ⌈√n⌉.
    pub ell: u64,
    /// Power v = v(A): smallest integer ≥ 4 with 2^{1−v} < 1/A (raised
    /// further if the exact sum check ever demanded it).
    pub v: u32,
    /// Exact coefficients of q₁(t) = q₀(1 − 2t/n), ascending degree,
    /// length ℓ+1; q₁(0) = 1 exactly.
    pub q1_coeffs: Vec<BigRational>,
    /// Certified upper bound of Σ_{k=1}^n |q₁(k)|^v, strictly below 1/A.
    pub sum_check: BigRational,
    /// True when `sum_check` is the exact sum (n ≤ EXACT_SUM_CAP).
    pub sum_is_exact: bool,
    /// Root-count bound m = v·ℓ.
    pub m: u64,
}

/// Smallest `s` with `s² ≥ n`.
fn ceil_sqrt(n: u64) -> u64 {
    let mut s = (n as f64).sqrt().round() as u64;
    while (s as u128) * (s as u128) < n as u128 {
        s += 1;
    }
    while s > 0 && ((s - 1) as u128) * ((s - 1) as u128) >= n as u128 {
        s -= 1;
    }
    s
}

fn rat_i(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Integer coefficient rows of the Chebyshev polynomials, rolled two at a
/// time through `T_{j+1} = 2t·T_j − T_{j−1}`, accumulating the numerator of
/// `(2ℓ+1)·q₀ = 1 + 2Σ T_j`. Returns ascending integer coefficients.
fn kernel_numerator_coeffs(ell: u64) -> Vec<BigInt> {
    let len = ell as usize + 1;
    let mut sum = vec![BigInt::zero(); len];
    sum[0] = BigInt::one(); // the constant 1
    let mut prev = vec![BigInt::zero(); len]; // T_0
    prev[0] = BigInt::one();
    let mut cur = vec![BigInt::zero(); len]; // T_1
    if len > 1 {
        cur[1] = BigInt::one();
    }
    for j in 1..=ell as usize {
        for (s, c) in sum.iter_mut().zip(cur.iter()) {
            *s += c << 1u32;
        }
        if j == ell as usize {
            break;
        }
        // next = 2t·cur − prev
        let mut next = vec![BigInt::zero(); len];
        for i in 0..len - 1 {
            if !cur[i].is_zero() {
                next[i + 1] = &cur[i] << 1u32;
            }
        }
        for (nx, pv) in next.iter_mut().zip(prev.iter()) {
            *nx -= pv;
        }
        prev = std::mem::replace(&mut cur, next);
    }
    sum
}

/// Exact ascending coefficients of q₀(t) = (1 + 2Σ_{j=1}^ℓ T_j(t))/(2ℓ+1).
pub fn kernel_coeffs(ell: u64) -> Vec<BigRational> {
    assert!(ell >= 1);
    let den = BigInt::from(2 * ell + 1);
    kernel_numerator_coeffs(ell)
        .into_iter()
        .map(|c| BigRational::new(c, den.clone()))
        .collect()
}

/// Certifies that q₀ has ℓ real roots in [−1, 1] by exhibiting ℓ sign
/// alternations at ℓ+1 points near the Chebyshev extrema `cos(iπ/ℓ)`.
/// Points are dyadic (denominator 2^30, chosen with float cosine — the
/// choice needs no precision, only the evaluation); values are computed
/// by the Chebyshev recurrence in fixed point with a certified radius.
fn certify_real_roots(ell: u64) -> Result<(), BoundsError> {
    const POINT_BITS: u32 = 30;
    const FRAC: u32 = 92;
    let one_units: i128 = 1 << FRAC;
    let mut last_sign: Option<bool> = None;
    for i in 0..=ell {
        let angle = std::f64::consts::PI * i as f64 / ell as f64;
        let t_num = ((angle.cos() * (1u64 << POINT_BITS) as f64).round() as i128)
            .clamp(-(1 << POINT_BITS), 1 << POINT_BITS);
        // T_j(t) in units of 2^{−FRAC}; |T_j| ≤ 1 keeps everything in range.
        let mut prev: i128 = one_units; // T_0
        let mut cur: i128 = t_num << (FRAC - POINT_BITS); // T_1
        let mut value = one_units + 2 * cur; // 1 + 2T_1
        for _ in 2..=ell {
            // T_{j+1} = 2t·T_j − T_{j−1}, one floor-shift rounding per step.
            let next = ((t_num * cur) >> (POINT_BITS - 1)) - prev;
            prev = cur;
            cur = next;
            value += 2 * cur;
        }
        // Accumulated rounding: each step injects ≤ 1 unit, propagated by
        // the recurrence with polynomial growth ≤ (steps)²; the summed
        // radius stays below steps³. A generous integer bound:
        let radius: i128 = (ell as i128 + 2).pow(3);
        if value.abs() <= radius {
            return Err(BoundsError::RealnessUnverified { index: i });
        }
        let sign = value > 0;
        if let Some(prev_sign) = last_sign {
            if prev_sign == sign {
                return Err(BoundsError::RealnessUnverified { index: i });
            }
        }
        last_sign = Some(sign);
    }
    Ok(())
}

/// Ascending coefficients of q₁(t) = q₀(1 − 2t/n): substitute the linear
/// map into the kernel, expanding `(1 − 2t/n)^i` incrementally.
fn rescale_coeffs(q0: &[BigRational], n: u64) -> Vec<BigRational> {
    let len = q0.len();
    let mut out = vec![BigRational::zero(); len];
    // pow holds (1 − 2t/n)^i, ascending, degree i.
    let mut pow = vec![BigRational::zero(); len];
    pow[0] = BigRational::one();
    let slope = rat_i(-2) / rat_i(n as i64);
    for (i, c) in q0.iter().enumerate() {
        if i > 0 {
            // pow ← pow·(1 + slope·t)
            for j in (0..=i).rev() {
                let carry = if j > 0 {
                    pow[j - 1].clone() * slope.clone()
                } else {
                    BigRational::zero()
                };
                pow[j] = pow[j].clone() + carry;
            }
        }
        if c.is_zero() {
            continue;
        }
        for (o, p) in out.iter_mut().zip(pow.iter()).take(i + 1) {
            *o += c * p;
        }
    }
    out
}

/// Exact q₁(k) by Horner over the exact coefficients.
fn q1_at_integer(q1: &[BigRational], k: u64) -> BigRational {
    let x = rat_i(k as i64);
    let mut acc = BigRational::zero();
    for c in q1.iter().rev() {
        acc = acc * x.clone() + c;
    }
    acc
}

/// Smallest v ≥ 4 with 2^{1−v} < 1/A.
fn initial_power(a_bound: &BigRational) -> u32 {
    let mut v = 4u32;
    let inverse = BigRational::one() / a_bound;
    loop {
        let two_pow = BigRational::new(BigInt::one(), BigInt::one() << (v - 1) as u64);
        if two_pow < inverse {
            return v;
        }
        v += 1;
    }
}

/// Builds the damping data for degree `n` and coefficient bound `A`:
/// exact kernel, certified realness, power selection, and the power-sum
/// check `Σ_{k=1}^n |q₁(k)|^v < 1/A` (exact up to `EXACT_SUM_CAP`, the
/// closed-form bound `2^{1−v}` beyond).
pub fn build_damping(n: u64, a_bound: &BigRational) -> Result<DampingPolynomial, BoundsError> {
    if n == 0 {
        return Err(BoundsError::DegreeZero);
    }
    if !a_bound.is_positive() {
        return Err(BoundsError::NonPositiveBound(a_bound.to_string()));
    }
    let ell = ceil_sqrt(n);
    let q0 = kernel_coeffs(ell);
    certify_real_roots(ell)?;
    let q1_coeffs = rescale_coeffs(&q0, n);
    assert!(q1_coeffs[0].is_one(), "rescaled kernel must be 1 at 0");

    let inverse_bound = BigRational::one() / a_bound;
    let mut v = initial_power(a_bound);
    let (sum_check, sum_is_exact) = if n <= EXACT_SUM_CAP {
        let values: Vec<BigRational> =
            (1..=n).map(|k| q1_at_integer(&q1_coeffs, k).abs()).collect();
        // The closed-form argument guarantees the first v works; the retry
        // ladder is defensive and bounded.
        let start = v;
        loop {
            let mut sum = BigRational::zero();
            for val in &values {
                let mut term = BigRational::one();
                for _ in 0..v {
                    term *= val;
                }
                sum += term;
            }
            if sum < inverse_bound {
                break (sum, true);
            }
            v += 1;
            if v > start + 16 {
                return Err(BoundsError::SumCheckFailed {
                    v,
                    sum: sum.to_string(),
                    inverse_bound: inverse_bound.to_string(),
                });
            }
        }
    } else {
        // Σ |q₁(k)|^v ≤ 2^{−v}·Σ k^{−v/2} ≤ 2^{1−v} via |q₁(k)| ≤ 1/(2√k);
        // the power choice makes this strictly below 1/A already.
        let bound = BigRational::new(BigInt::one(), BigInt::one() << (v - 1) as u64);
        debug_assert!(bound < inverse_bound);
        (bound, false)
    };

    Ok(DampingPolynomial {
        n,
        ell,
        v,
        q1_coeffs,
        sum_check,
        sum_is_exact,
        m: v as u64 * ell,
    })
}

/// The root-count cap `m = v(A)·⌈√n⌉`: any polynomial of degree ≤ n with
/// constant term 1 and coefficients bounded by A has at most `m` roots in
/// `(0, 1]`.
pub fn upper_bound(n: u64, a_bound: &BigRational) -> u64 {
    initial_power(a_bound) as u64 * ceil_sqrt(n)
}

/// JSON report for the CLI: `{"n":…, "A":"p/q", "v":…, "m":…, "sum_check":"p/q"}`.
#[derive(Serialize)]
pub struct BoundReport {
    pub n: u64,
    #[serde(rename = "A")]
    pub a: String,
    pub v: u32,
    pub m: u64,
    pub sum_check: String,
    pub sum_is_exact: bool,
}

impl BoundReport {
    pub fn from_damping(dp: &DampingPolynomial, a_bound: &BigRational) -> Self {
        BoundReport {
            n: dp.n,
            a: a_bound.to_string(),
            v: dp.v,
            m: dp.m,
            sum_check: dp.sum_check.to_string(),
            sum_is_exact: dp.sum_is_exact,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn kernel_coefficients_match_hand_tables() {
        // ℓ=1: (1+2t)/3
        assert_eq!(kernel_coeffs(1), vec![rat(1, 3), rat(2, 3)]);
        // ℓ=2: (−1+2t+4t²)/5
        assert_eq!(kernel_coeffs(2), vec![rat(-1, 5), rat(2, 5), rat(4, 5)]);
        // ℓ=4: (1−4t−12t²+8t³+16t⁴)/9
        assert_eq!(
            kernel_coeffs(4),
            vec![rat(1, 9), rat(-4, 9), rat(-4, 3), rat(8, 9), rat(16, 9)]
        );
    }

    #[test]
    fn kernel_is_one_at_one() {
        for ell in [1u64, 2, 3, 7, 20, 64] {
            let q0 = kernel_coeffs(ell);
            let sum: BigRational = q0.iter().cloned().sum();
            assert!(sum.is_one(), "q0(1) != 1 at ell={ell}");
        }
    }

    #[test]
    fn rescaled_kernel_is_one_at_zero() {
        for n in [1u64, 2, 5, 16, 100, 731] {
            let dp = build_damping(n, &rat(1, 1)).unwrap();
            assert!(dp.q1_coeffs[0].is_one(), "q1(0) != 1 at n={n}");
        }
    }

    #[test]
    fn realness_certified_across_kernel_degrees() {
        for ell in [1u64, 2, 3, 5, 8, 13, 21, 64, 181] {
            certify_real_roots(ell).unwrap();
        }
    }

    #[test]
    fn power_selection_examples() {
        assert_eq!(initial_power(&rat(1, 1)), 4);
        assert_eq!(initial_power(&rat(6, 1)), 4); // 1/8 < 1/6
        assert_eq!(initial_power(&rat(8, 1)), 5); // 1/8 = 1/8 is not strict
        assert_eq!(initial_power(&rat(10, 1)), 5);
        assert_eq!(initial_power(&rat(1000, 1)), 11);
        assert_eq!(initial_power(&rat(64, 61)), 4);
    }

    #[test]
    fn exact_power_sum_n16_matches_frozen_value() {
        let dp = build_damping(16, &rat(1, 1)).unwrap();
        assert!(dp.sum_is_exact);
        assert_eq!(dp.v, 4);
        assert_eq!(dp.ell, 4);
        assert_eq!(
            dp.sum_check,
            BigRational::new(
                "67810271041".parse().unwrap(),
                "3522410053632".parse().unwrap()
            )
        );
    }

    #[test]
    fn exact_power_sums_match_frozen_decimals() {
        for (n, expected) in [(64u64, 3.239042e-2), (256u64, 4.097683e-2)] {
            let dp = build_damping(n, &rat(1, 1)).unwrap();
            assert!(dp.sum_is_exact);
            let got = dp.sum_check.to_f64().unwrap();
            assert!(
                (got - expected).abs() < 1e-7,
                "n={n}: sum {got} vs frozen {expected}"
            );
        }
    }

    #[test]
    fn power_sum_stays_below_inverse_bound() {
        for (n, a) in [(16u64, rat(1, 1)), (256, rat(64, 61)), (100, rat(6, 1))] {
            let dp = build_damping(n, &a).unwrap();
            assert!(dp.sum_check < BigRational::one() / &a);
        }
    }

    #[test]
    fn rescaled_values_decay_like_half_inverse_sqrt() {
        // |q1(k)| ≤ 1/(2√k) for every k = 1..n, compared via squares.
        for n in [16u64, 64, 256] {
            let dp = build_damping(n, &rat(1, 1)).unwrap();
            for k in 1..=n {
                let val = q1_at_integer(&dp.q1_coeffs, k);
                let lhs = val.clone() * val; // q1(k)²
                let rhs = BigRational::new(BigInt::one(), BigInt::from(4 * k));
                assert!(lhs <= rhs, "decay fails at n={n}, k={k}");
            }
        }
    }

    #[test]
    fn analytic_branch_beyond_exact_cap() {
        let dp = build_damping(8192, &rat(1, 1)).unwrap();
        assert!(!dp.sum_is_exact);
        assert_eq!(dp.sum_check, rat(1, 8)); // 2^{1−4}
        assert_eq!(dp.ell, 91);
        assert_eq!(dp.m, 364);
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(upper_bound(100, &rat(1, 1)), 40);
        assert_eq!(upper_bound(1, &rat(1, 1)), 4);
        assert_eq!(upper_bound(16, &rat(10, 1)), 20); // v=5, ℓ=4
    }

    #[test]
    fn ceil_sqrt_edges() {
        assert_eq!(ceil_sqrt(1), 1);
        assert_eq!(ceil_sqrt(2), 2);
        assert_eq!(ceil_sqrt(3), 2);
        assert_eq!(ceil_sqrt(4), 2);
        assert_eq!(ceil_sqrt(5), 3);
        assert_eq!(ceil_sqrt(16), 4);
        assert_eq!(ceil_sqrt(17), 5);
        assert_eq!(ceil_sqrt(3633682), 1907);
    }

    #[test]
    fn report_json_has_contract_keys() {
        let a = rat(1, 1);
        let dp = build_damping(16, &a).unwrap();
        let text = serde_json::to_string(&BoundReport::from_damping(&dp, &a)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["n"], 16);
        assert_eq!(v["A"], "1");
        assert_eq!(v["v"], 4);
        assert_eq!(v["m"], 16);
        assert!(v["sum_check"].as_str().unwrap().contains('/'));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn upper_bound_is_monotone_in_degree(n in 1u64..2000) {
            let a = rat(1, 1);
            prop_assert!(upper_bound(n, &a) <= upper_bound(n + 1, &a));
        }

        #[test]
        fn kernel_value_at_one_is_always_one(ell in 1u64..40) {
            let q0 = kernel_coeffs(ell);
            let sum: BigRational = q0.iter().cloned().sum();
            prop_assert!(sum.is_one());
        }
    }
}
