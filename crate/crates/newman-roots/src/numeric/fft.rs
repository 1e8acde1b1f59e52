//! Radix-2 FFT over complex fixed-point, bit-deterministic, with a
//! documented worst-case rounding bound.
//!
//! The workhorse is the *scaled inverse* transform
//! `out[k] = (1/N)·Σ_j v[j]·e^{+2πi jk/N}`, computed decimation-in-time with
//! a halving folded into every butterfly: `x = (a + w·b)/2`, `y = (a −
//! w·b)/2`. Halving per stage keeps all intermediate magnitudes at or below
//! `max_j |v[j]|`, so mantissas never grow and the error analysis is flat
//! per stage.
//!
//! Error bound (per component, scale `2^{−B}` at the plan's precision):
//!
//! - twiddles are exact to `≤ 2^{−B}` (series at 12 guard bits, one final
//!   rounding — see [`FftPlan::new`]);
//! - one butterfly: `t = w·b` rounds once per component (`≤ 2^{−B−1}`) and
//!   carries the twiddle error scaled by `|b| ≤ Fmax`; the halving adds
//!   `≤ 2^{−B−1}` but also halves incoming error;
//! - stage recurrence: `E_s ≤ E_{s−1} + (Fmax/2 + 1)·2^{−B}`, so after all
//!   `log2(N)` stages the output error per component is at most
//!
//!   `log2(N) · (Fmax/2 + 1) · 2^{−B}`,   `Fmax = max_j(|Re v_j|, |Im v_j|)`.
//!
//! The unscaled forward transform (kernel `e^{−2πi jk/N}`, no halving) is
//! provided for round-trip tests; there magnitudes grow by up to `N` and the
//! analogous analysis gives error `≤ 4·N·Fmax·2^{−B}` per component.
//!
//! Two data paths share the same butterfly kernels and produce identical
//! bits: a packed hot path over raw `i128` mantissa slices (used by the
//! production pipeline; requires the plan precision to stay on the
//! fast path) and a generic path over [`ComplexFixed`] (tests, and exotic
//! precisions where mantissas exceed 128 bits).

use super::complex::ComplexFixed;
use super::dyadic::pi_interval;
use super::fixed::{dot2_rhe_i128, Fixed, Precision};

/// Largest plan precision (bits) for which the packed `i128` path is safe:
/// butterfly sums reach `2·Fmax·2^{B} ≤ 2^{B+3}` and the dot-product kernel
/// needs two more bits of headroom below `2^{126}`.
pub const MAX_PACKED_BITS: u32 = 120;

/// Twiddle storage: `e^{2πi j/N}` for `j ∈ [0, N/4]` (the first quadrant);
/// the second quadrant is the exact rotation `(c, s) ↦ (−s, c)`.
enum Quarter {
    Packed(Vec<(i128, i128)>),
    Generic(Vec<ComplexFixed>),
}

/// A reusable transform plan: size, precision and twiddle table.
pub struct FftPlan {
    n: usize,

    prec: Precision,
    quarter: Quarter,
}

/// `(v >> 1)` with round-half-even (ties to the even quotient).
#[inline]
fn half_rhe(v: i128) -> i128 {
    let q = v >> 1;
    q + ((v & q) & 1)
}

impl FftPlan {
    /// Build a plan for an `n`-point transform (`n` a power of two ≥ 2) at
    /// precision `prec`.
    ///
    /// Twiddles `e^{2πi j/n}` are produced octant-by-octant: for
    /// `j ∈ [0, n/8]` the angle `θ = 2πj/n ≤ π/4` is formed from an enclosure
    /// of π at 12 guard bits and fed to the cos/sin Taylor series at that
    /// guard precision, then rounded once to `prec`; the rest of the quadrant
    /// is mirrored exactly (`cos θ = sin(π/2−θ)`). Series truncation, guard
    /// arithmetic and the final rounding keep every table entry within
    /// `2^{−B}` of the true value (the series' own error sits near
    /// `2^{−B−6}`, far below the final rounding).
    pub fn new(n: usize, prec: Precision) -> FftPlan {
        assert!(n >= 2 && n.is_power_of_two(), "transform size must be a power of two ≥ 2");
        let log2n = n.trailing_zeros();
        let guard = Precision::new(prec.bits + 12);
        let pi_g = Fixed::from_dyadic(&pi_interval(guard.bits + 16).lo, guard);

        // quarter table in guard precision, octant computed + octant mirrored
        let quarter_len = n / 4 + 1;
        let eighth = n / 8;
        let mut cos_sin: Vec<(Fixed, Fixed)> = Vec::with_capacity(quarter_len);
        for j in 0..=eighth.max(0) {
            // θ_j = 2πj/n, error ≤ 1.5 guard ulp
            let theta = pi_g.mul_int(2 * j as i64).div_pow2(log2n);
            cos_sin.push((cos_series(&theta), sin_series(&theta)));
        }
        let mut table: Vec<ComplexFixed> = Vec::with_capacity(quarter_len);
        for j in 0..quarter_len {
            let (c, s) = if j <= eighth {
                let (c, s) = &cos_sin[j];
                (c.clone(), s.clone())
            } else {
                let (c, s) = &cos_sin[n / 4 - j];
                (s.clone(), c.clone())
            };
            table.push(ComplexFixed::new(c.rescale(prec), s.rescale(prec)));
        }
        // exact endpoints
        table[0] = ComplexFixed::one(prec);
        if quarter_len > 1 {
            table[n / 4] = ComplexFixed::new(Fixed::zero(prec), Fixed::one(prec));
        }

        let quarter = if prec.bits <= MAX_PACKED_BITS {
            Quarter::Packed(
                table
                    .iter()
                    .map(|t| {
                        (
                            t.re.mantissa_i128().expect("packed twiddle"),
                            t.im.mantissa_i128().expect("packed twiddle"),
                        )
                    })
                    .collect(),
            )
        } else {
            Quarter::Generic(table)
        };
        FftPlan { n, prec, quarter }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    /// `e^{2πi j/n}` for `j ∈ [0, n/2)` as raw mantissas (packed plans).
    #[inline]
    fn tw_packed(&self, j: usize) -> (i128, i128) {
        let q = match &self.quarter {
            Quarter::Packed(q) => q,
            Quarter::Generic(_) => unreachable!("packed access on generic plan"),
        };
        if j <= self.n / 4 {
            q[j]
        } else {
            let (c, s) = q[j - self.n / 4];
            (-s, c)
        }
    }

    /// `e^{2πi j/n}` for `j ∈ [0, n/2)` as a complex value (any plan).
    pub fn twiddle(&self, j: usize) -> ComplexFixed {
        match &self.quarter {
            Quarter::Packed(_) => {
                let (c, s) = self.tw_packed(j);
                ComplexFixed::new(
                    Fixed::from_mantissa_i128(c, self.prec),
                    Fixed::from_mantissa_i128(s, self.prec),
                )
            }
            Quarter::Generic(q) => {
                if j <= self.n / 4 {
                    q[j].clone()
                } else {
                    q[j - self.n / 4].mul_i()
                }
            }
        }
    }

    /// Whether the packed mantissa path is available for this plan.
    pub fn is_packed(&self) -> bool {
        matches!(self.quarter, Quarter::Packed(_))
    }

    /// Scaled inverse transform over raw mantissa slices (the production
    /// path): `v[k] ← (1/n)·Σ_j v[j] e^{+2πi jk/n}`, in place.
    pub fn inverse_scaled_packed(&self, re: &mut [i128], im: &mut [i128]) {
        assert!(self.is_packed(), "plan precision exceeds the packed path");
        assert_eq!(re.len(), self.n);
        assert_eq!(im.len(), self.n);
        bit_reverse_two(re, im);
        let bits = self.prec.bits;
        let mut len = 2usize;
        let mut step = self.n / 2;
        while len <= self.n {
            let half = len / 2;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let (wc, ws) = self.tw_packed(k * step);
                    let i = start + k;
                    let j = i + half;
                    let (br, bi) = (re[j], im[j]);
                    // t = w·b, one rounding per component
                    let tr = dot2_rhe_i128(wc, br, -ws, bi, bits).expect("fft range");
                    let ti = dot2_rhe_i128(wc, bi, ws, br, bits).expect("fft range");
                    let (ar, ai) = (re[i], im[i]);
                    re[i] = half_rhe(ar + tr);
                    im[i] = half_rhe(ai + ti);
                    re[j] = half_rhe(ar - tr);
                    im[j] = half_rhe(ai - ti);
                }
            }
            len <<= 1;
            step >>= 1;
        }
    }

    /// Scaled inverse transform over complex values (generic path; identical
    /// rounding sequence to the packed path).
    pub fn inverse_scaled(&self, v: &mut [ComplexFixed]) {
        assert_eq!(v.len(), self.n);
        bit_reverse_one(v);
        let mut len = 2usize;
        let mut step = self.n / 2;
        while len <= self.n {
            let half = len / 2;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddle(k * step);
                    let i = start + k;
                    let j = i + half;
                    let t = w.mul(&v[j]);
                    let a = v[i].clone();
                    v[i] = a.add(&t).div2();
                    v[j] = a.sub(&t).div2();
                }
            }
            len <<= 1;
            step >>= 1;
        }
    }

    /// Unscaled forward transform (`e^{−2πi jk/n}` kernel, no halving);
    /// round-trip testing only — magnitudes grow up to `n·Fmax`.
    pub fn forward(&self, v: &mut [ComplexFixed]) {
        assert_eq!(v.len(), self.n);
        bit_reverse_one(v);
        let mut len = 2usize;
        let mut step = self.n / 2;
        while len <= self.n {
            let half = len / 2;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddle(k * step).conj();
                    let i = start + k;
                    let j = i + half;
                    let t = w.mul(&v[j]);
                    let a = v[i].clone();
                    v[i] = a.add(&t);
                    v[j] = a.sub(&t);
                }
            }
            len <<= 1;
            step >>= 1;
        }
    }
}

/// Maclaurin cosine at guard precision for `θ ∈ [0, π/4]`; truncation below
/// one guard ulp, per-term rounding damped by the factorial decay.
fn cos_series(theta: &Fixed) -> Fixed {
    let theta2 = theta.mul(theta);
    let mut term = Fixed::one(theta.precision());
    let mut sum = term.clone();
    let mut k: i64 = 1;
    loop {
        term = term.mul(&theta2).div_int((2 * k - 1) * 2 * k).neg();
        if term.is_zero() {
            break;
        }
        sum = sum.add(&term);
        k += 1;
        assert!(k < 1000, "cosine series failed to converge");
    }
    sum
}

/// Maclaurin sine at guard precision for `θ ∈ [0, π/4]`.
fn sin_series(theta: &Fixed) -> Fixed {
    let theta2 = theta.mul(theta);
    let mut term = theta.clone();
    let mut sum = term.clone();
    let mut k: i64 = 1;
    loop {
        term = term.mul(&theta2).div_int(2 * k * (2 * k + 1)).neg();
        if term.is_zero() {
            break;
        }
        sum = sum.add(&term);
        k += 1;
        assert!(k < 1000, "sine series failed to converge");
    }
    sum
}

/// In-place bit-reversal permutation over one slice.
fn bit_reverse_one<T>(v: &mut [T]) {
    let n = v.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            v.swap(i, j);
        }
    }
}

/// In-place bit-reversal permutation applied to both mantissa slices.
fn bit_reverse_two(re: &mut [i128], im: &mut [i128]) {
    let n = re.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::dyadic::{sqrt_rational, Dyadic};
    use num_bigint::BigInt;
    use proptest::prelude::*;
    use std::cmp::Ordering;

    fn p(bits: u32) -> Precision {
        Precision::new(bits)
    }

    fn delta(n: usize, prec: Precision) -> Vec<ComplexFixed> {
        let mut v = vec![ComplexFixed::zero(prec); n];
        v[0] = ComplexFixed::one(prec);
        v
    }

    #[test]
    fn inverse_of_delta_is_flat() {
        let prec = p(80);
        let plan = FftPlan::new(8, prec);
        let mut v = delta(8, prec);
        plan.inverse_scaled(&mut v);
        let eighth = Fixed::from_ratio(1, 8, prec);
        for z in &v {
            assert_eq!(z.re, eighth, "inverse of delta must be exactly flat");
            assert!(z.im.is_zero());
        }
    }

    #[test]
    fn packed_and_generic_paths_agree_exactly() {
        let prec = p(96);
        let n = 64;
        let plan = FftPlan::new(n, prec);
        assert!(plan.is_packed());
        let mut generic: Vec<ComplexFixed> = (0..n)
            .map(|j| {
                ComplexFixed::new(
                    Fixed::from_ratio((j as i64 * 37 % 19) - 9, 16, prec),
                    Fixed::from_ratio((j as i64 * 53 % 23) - 11, 32, prec),
                )
            })
            .collect();
        let mut re: Vec<i128> = generic.iter().map(|z| z.re.mantissa_i128().unwrap()).collect();
        let mut im: Vec<i128> = generic.iter().map(|z| z.im.mantissa_i128().unwrap()).collect();
        plan.inverse_scaled(&mut generic);
        plan.inverse_scaled_packed(&mut re, &mut im);
        for j in 0..n {
            assert_eq!(generic[j].re.mantissa_i128().unwrap(), re[j], "re mismatch at {j}");
            assert_eq!(generic[j].im.mantissa_i128().unwrap(), im[j], "im mismatch at {j}");
        }
    }

    #[test]
    fn forward_then_inverse_is_identity_within_bound() {
        let prec = p(80);
        let n = 64usize;
        let plan = FftPlan::new(n, prec);
        let orig: Vec<ComplexFixed> = (0..n)
            .map(|j| {
                ComplexFixed::new(
                    Fixed::from_ratio((j as i64 % 7) - 3, 4, prec),
                    Fixed::from_ratio((j as i64 % 5) - 2, 8, prec),
                )
            })
            .collect();
        let mut v = orig.clone();
        plan.forward(&mut v);
        plan.inverse_scaled(&mut v);
        // forward error ≤ 4n·Fmax·2^{−B}; the scaled inverse divides it by
        // nothing (it is already 1/n-normalized) and adds its own
        // log2(n)·(Fmax_fwd/2+1)·2^{−B} with Fmax_fwd ≤ n·Fmax.
        // Generous combined tolerance: 8·n·2^{−B} with Fmax = 1 here.
        let tol = Fixed::from_mantissa_i128(8 * n as i128, prec);
        for j in 0..n {
            assert!(
                v[j].re.sub(&orig[j].re).abs().cmp_fixed(&tol).is_le(),
                "re round-trip error too large at {j}"
            );
            assert!(
                v[j].im.sub(&orig[j].im).abs().cmp_fixed(&tol).is_le(),
                "im round-trip error too large at {j}"
            );
        }
    }

    #[test]
    fn matches_naive_inverse_dft() {
        // naive O(n²) inverse DFT with the same twiddles, done in exact
        // BigInt accumulation then one rounding — the fast transform must
        // stay within its documented bound of that reference.
        let prec = p(72);
        let bits = 72u32;
        let n = 16usize;
        let plan = FftPlan::new(n, prec);
        let input: Vec<ComplexFixed> = (0..n)
            .map(|j| {
                ComplexFixed::new(
                    Fixed::from_ratio((3 * j as i64 % 11) - 5, 8, prec),
                    Fixed::from_ratio((7 * j as i64 % 13) - 6, 8, prec),
                )
            })
            .collect();
        let mut fast = input.clone();
        plan.inverse_scaled(&mut fast);
        for k in 0..n {
            // Σ_j v_j ω^{jk} exactly over rounded twiddles
            let mut acc_re = BigInt::from(0);
            let mut acc_im = BigInt::from(0);
            for (j, z) in input.iter().enumerate() {
                let m = (j * k) % n;
                let w = if m < n / 2 { plan.twiddle(m) } else { plan.twiddle(m - n / 2).neg() };
                let (a, b) = (z.re.mantissa_big(), z.im.mantissa_big());
                let (c, d) = (w.re.mantissa_big(), w.im.mantissa_big());
                acc_re += &a * &c - &b * &d;
                acc_im += &a * &d + &b * &c;
            }
            // scale: product of two 2^{−B} mantissas, /n, then to 2^{−B}
            let scale = BigInt::from(1) << (bits as usize + 4); // n = 16
            let want_re = crate::numeric::fixed::div_rhe_big(&acc_re, &scale);
            let want_im = crate::numeric::fixed::div_rhe_big(&acc_im, &scale);
            // documented bound: log2(16)·(Fmax/2+1)·2^{−B}, Fmax ≤ 1 ⟹ 6 ulp;
            // the naive reference itself is within n·(twiddle err) ≈ 16 ulp
            let tol = BigInt::from(32);
            let dr = (fast[k].re.mantissa_big() - want_re).magnitude().clone();
            let di = (fast[k].im.mantissa_big() - want_im).magnitude().clone();
            assert!(BigInt::from(dr) <= tol, "re deviation at {k}");
            assert!(BigInt::from(di) <= tol, "im deviation at {k}");
        }
    }

    #[test]
    fn eighth_twiddle_is_sqrt_half() {
        let prec = p(90);
        let n = 1024usize;
        let plan = FftPlan::new(n, prec);
        let w = plan.twiddle(n / 8);
        let root_half = sqrt_rational(&BigInt::from(1), &BigInt::from(2), 140);
        // both components must lie within 2^{−B+1} of √½
        for part in [&w.re, &w.im] {
            let v = Dyadic::new(part.mantissa_big(), -(prec.bits as i64));
            let lo = root_half.lo.sub(&Dyadic::new(BigInt::from(4), -(prec.bits as i64)));
            let hi = root_half.hi.add(&Dyadic::new(BigInt::from(4), -(prec.bits as i64)));
            assert_eq!(v.cmp_dyadic(&lo), Ordering::Greater);
            assert_eq!(v.cmp_dyadic(&hi), Ordering::Less);
        }
    }

    #[test]
    fn twiddles_match_higher_precision_within_two_ulp() {
        let n = 256usize;
        let lowp = p(70);
        let highp = p(120);
        let low = FftPlan::new(n, lowp);
        let high = FftPlan::new(n, highp);
        for j in 0..n / 2 {
            let a = low.twiddle(j);
            let b = high.twiddle(j);
            for (x, y) in [(&a.re, &b.re), (&a.im, &b.im)] {
                let xe: BigInt = x.mantissa_big() << 50; // bring to 120-bit scale
                let diff = (xe - y.mantissa_big()).magnitude().clone();
                // 2 ulp at 70 bits = 2^{51} at 120-bit scale
                assert!(
                    BigInt::from(diff) <= BigInt::from(1i128 << 51),
                    "twiddle {j} off by more than 2 ulp"
                );
            }
        }
    }

    proptest! {
        /// c² + s² = 1 within 4 ulp for every table entry.
        #[test]
        fn twiddles_on_unit_circle(j in 0usize..512) {
            let prec = p(84);
            let plan = FftPlan::new(1024, prec);
            let w = plan.twiddle(j);
            let n = w.norm_sqr();
            let err = n.sub(&Fixed::one(prec)).abs();
            prop_assert!(err.cmp_fixed(&Fixed::from_mantissa_i128(4, prec)).is_le());
        }
    }
}
