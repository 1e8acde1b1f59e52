//! Greedy coefficient controller.
//!
//! Drives the head value ψ and the damped weight ledger λ through the n
//! coefficient choices. At step m the controller forms the drift predictor
//!
//! ```text
//!   p = ((L+m+1)/(L+m)) · (ψ + ν_0·ψ + μ·λ_1)
//! ```
//!
//! picks ε_{m+1} = min E_{m+1} when p ≥ 0 and max E_{m+1} when p < 0, then
//! applies the coupled update
//!
//! ```text
//!   ψ'    = ((L+m+1)/(L+m)) · (ψ + ν_0·ψ + μ·λ_1) + ε_{m+1}
//!   λ'_k  = ((L+m+1)/(L+m)) · (μ·λ_{k+1} + ψ·ν_k)
//! ```
//!
//! The run succeeds when |ψ| stays within μΛ for all n steps; the produced
//! sequence ε_1..ε_n is the polynomial's coefficient list.
//!
//! # Representation
//!
//! The ledger is stored in the rescaled form ρ_k = λ_k/(L+m), which removes
//! the (L+m+1)/(L+m) growth factor from the hot recurrence:
//!
//! ```text
//!   ρ'_k = μ·ρ_{k+1} + w·ν_k          with  w = ψ/(L+m)
//!   ψ'   = (L+m+1)·(w + ν_0·w + μ·ρ_1) + ε_{m+1}
//! ```
//!
//! Three fixed-point precisions are in play, all with i128 mantissas:
//! ρ at B+6, ν at B+24 (as produced by the decomposition), ψ and w at B+32,
//! where B is the working precision from the parameter set. Every stored
//! assignment performs exactly one rounding (round half even) on the head
//! path; entries whose inputs have decayed below 2^{-32} take a cheaper
//! truncating kernel whose composite error stays below 2^{-B}. The scalar
//! chain for ψ rounds three times at B+32, so the per-step error on ψ is
//! below (L+m+1)·1.5·2^{-B-32} ≤ 2^{-B-9} for every supported parameter set.
//!
//! μ enters the kernels through two frozen integer images: a round-half-even
//! mantissa at B+36 (head path) and floor(μ·2^64) (tail path). Both are
//! within 2^{-B-36} of μ, a perturbation absorbed by the per-assignment
//! error budget.
//!
//! # Ledger truncation
//!
//! Entries beyond the truncation horizon K* = min{k : Λ·U_k ≤ 2^{-B+12}}
//! are pinned to zero: everything they could ever feed back into ψ is below
//! the ψ slack budget. U_k is the certified suffix bound produced with the
//! decomposition, so K* is computed by an exact integer scan.
//!
//! # Envelope checks
//!
//! All envelope tests are exact integer comparisons against floored
//! thresholds: the escape bound |ψ| ≤ μΛ, the inner window |ψ| ≤ Ψ with its
//! M-step return rule, the per-step drift bound, and the ledger envelope
//! |λ_k| ≤ δ + Λ·U_k. The ledger check runs on a cadence (a short head
//! prefix every step, a full sweep periodically and at the end) so the
//! checking cost stays a small fraction of the update cost.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use std::io::Write as IoWrite;
use thiserror::Error;

use crate::coeff_model::CoefficientModel;
use crate::newman::NewmanDecomposition;
use crate::numeric::fixed::{div_rhe_i128, dot2_rhe_i128, mul_rhe_i128, Fixed, Precision};
use crate::params::BuildParameters;

/// Extra fractional bits of the ledger state ρ over the working precision.
const RHO_GUARD_BITS: u32 = 6;
/// Extra fractional bits of ν over the working precision (decomposition
/// output convention).
const NU_GUARD_BITS: u32 = 24;
/// Extra fractional bits of ψ and w over the working precision.
const PSI_GUARD_BITS: u32 = 32;
/// Extra fractional bits of the head-path μ image.
const MU_GUARD_BITS: u32 = 36;

/// Ledger entries with Λ·U_k ≤ 2^{-B+TRUNCATION_BUDGET_LOG2} are dropped:
/// their total feed-through into ψ stays below the ψ slack allocation.
const TRUNCATION_BUDGET_LOG2: u32 = 12;
/// Additive rounding slack on the per-step drift bound, in units of 2^{-B}.
const DRIFT_SLACK_LOG2: u32 = 8;

/// Tail kernel applies when both inputs are below 2^{-32} in value:
/// |ρ_{k+1}| mantissa below 2^62 at B+6, |ν_k| mantissa below 2^{B-8} at
/// B+24. Above either gate the exact head kernel runs.
const GATE_RHO_LOG2: u32 = 62;
/// Tail-kernel shift applied to the w mantissa (B+32 → B-24 scale).
const TAIL_W_SHIFT: u32 = 56;
/// Tail-kernel shift applied to the ν mantissa (B+24 → B+6 scale).
const TAIL_NU_SHIFT: u32 = 18;

/// Default ring capacity for the per-step trace (entries, not bytes).
pub const DEFAULT_TRACE_CAPACITY: usize = 1 << 22;
/// Default cadence of full ledger-envelope sweeps.
pub const DEFAULT_FULL_CHECK_STRIDE: u64 = 32;
/// Default length of the ledger prefix checked on every step.
pub const DEFAULT_HEAD_CHECK_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum TrapError {
    /// |ψ| left the escape envelope μΛ: the controller lost the head value.
    /// Callers retry with a smaller η / larger ℓ.
    #[error(
        "trap escape at step {step} of {total}: |psi| = {psi} exceeded the envelope {bound} \
         (max |psi| before escape {max_before:.6})"
    )]
    Escape {
        step: u64,
        total: u64,
        psi: String,
        bound: String,
        max_before: f64,
    },
    /// The i128 fast path cannot host this parameter set (precision or
    /// amplitude too large). Raised at construction, never mid-run.
    #[error("dynamics engine out of headroom: {detail}")]
    Headroom { detail: String },
}

/// Knobs for checking cadence and trace retention. Defaults match the
/// production profile; tests tighten them to check every entry every step.
#[derive(Debug, Clone)]
pub struct TrapConfig {
    /// Ring capacity of the retained trace (last `trace_capacity` steps).
    pub trace_capacity: usize,
    /// Run a full ledger-envelope sweep every this many steps.
    pub full_check_stride: u64,
    /// Length of the ledger prefix checked on every step.
    pub head_check_len: usize,
}

impl Default for TrapConfig {
    fn default() -> Self {
        TrapConfig {
            trace_capacity: DEFAULT_TRACE_CAPACITY,
            full_check_stride: DEFAULT_FULL_CHECK_STRIDE,
            head_check_len: DEFAULT_HEAD_CHECK_LEN,
        }
    }
}

/// The controller's decision for one step: which element of the allowed set
/// to add, as an index into the (sorted) set and a ψ-scale mantissa.
#[derive(Debug, Clone, Copy)]
pub struct ControlChoice {
    /// Index into `model.allowed(m+1)`.
    pub index: u8,
    /// Round-half-even mantissa of the chosen value at B+32 (exact for
    /// dyadic coefficients, which covers every built-in family).
    pub units: i128,
    /// True when the predictor was ≥ 0 (min branch taken).
    pub predictor_nonneg: bool,
}

/// Exact online statistics of a run. All `_units` fields are mantissas at
/// ψ precision B+32 unless stated otherwise.
#[derive(Debug, Clone)]
pub struct TrapStats {
    pub steps: u64,
    /// Max |ψ| over the run, exact, with the step where it occurred.
    pub max_abs_psi_units: i128,
    pub max_abs_psi_step: u64,
    /// Minimum of (escape threshold − |ψ|) over the run; positive means the
    /// envelope was never touched.
    pub escape_margin_min_units: i128,
    /// Largest closed gap between consecutive steps with |ψ| ≤ Ψ.
    pub max_window_gap: u64,
    /// Steps from the last |ψ| ≤ Ψ event to the end of the run.
    pub final_open_gap: u64,
    /// Closed window gaps exceeding M.
    pub window_violations: u64,
    /// Ledger-envelope entries checked / violations found.
    pub lambda_entries_checked: u64,
    pub lambda_violations: u64,
    pub first_lambda_violation: Option<(u64, usize)>,
    /// Max per-step |ψ' − ε − ψ| and the number of drift-bound violations.
    pub drift_max_units: i128,
    pub drift_violations: u64,
    /// Ledger-kernel dispatch counts.
    pub head_entries: u64,
    pub tail_entries: u64,
    /// Control-branch counts.
    pub min_choices: u64,
    pub max_choices: u64,
}

impl TrapStats {
    fn new(escape_margin_init: i128, psi_init_units: i128) -> Self {
        TrapStats {
            steps: 0,
            max_abs_psi_units: psi_init_units.abs(),
            max_abs_psi_step: 0,
            escape_margin_min_units: escape_margin_init,
            max_window_gap: 0,
            final_open_gap: 0,
            window_violations: 0,
            lambda_entries_checked: 0,
            lambda_violations: 0,
            first_lambda_violation: None,
            drift_max_units: 0,
            drift_violations: 0,
            head_entries: 0,
            tail_entries: 0,
            min_choices: 0,
            max_choices: 0,
        }
    }

    /// Max |ψ| as f64 (diagnostic).
    pub fn max_abs_psi(&self, bits: u32) -> f64 {
        self.max_abs_psi_units as f64 * (-((bits + PSI_GUARD_BITS) as f64)).exp2()
    }

    /// Max drift as f64 (diagnostic).
    pub fn drift_max(&self, bits: u32) -> f64 {
        self.drift_max_units as f64 * (-((bits + PSI_GUARD_BITS) as f64)).exp2()
    }

    /// True when every exact envelope check passed.
    pub fn clean(&self) -> bool {
        self.window_violations == 0 && self.lambda_violations == 0 && self.drift_violations == 0
    }
}

/// Windowed per-step trace: ψ, λ_1 and ε as f64/f32 snapshots of the last
/// `capacity` steps (ring buffer). Diagnostic only — every certified
/// quantity is tracked exactly in `TrapStats`.
#[derive(Debug, Clone)]
pub struct TraceRing {
    capacity: usize,
    total: u64,
    psi: Vec<f64>,
    lambda1: Vec<f64>,
    eps: Vec<f32>,
}

impl TraceRing {
    fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        TraceRing {
            capacity,
            total: 0,
            psi: Vec::new(),
            lambda1: Vec::new(),
            eps: Vec::new(),
        }
    }

    fn push(&mut self, psi: f64, lambda1: f64, eps: f32) {
        if self.psi.len() < self.capacity {
            self.psi.push(psi);
            self.lambda1.push(lambda1);
            self.eps.push(eps);
        } else {
            let slot = (self.total % self.capacity as u64) as usize;
            self.psi[slot] = psi;
            self.lambda1[slot] = lambda1;
            self.eps[slot] = eps;
        }
        self.total += 1;
    }

    /// Number of steps pushed over the whole run.
    pub fn total_steps(&self) -> u64 {
        self.total
    }

    /// Number of retained entries (≤ capacity).
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// First retained step number (steps are 1-based; entry for step s is
    /// recorded after the state reached step s).
    pub fn first_step(&self) -> u64 {
        self.total - self.psi.len() as u64 + 1
    }

    /// Retained entries in step order as (step, psi, lambda1, eps).
    pub fn entries(&self) -> impl Iterator<Item = (u64, f64, f64, f32)> + '_ {
        let first = self.first_step();
        (0..self.psi.len()).map(move |i| {
            let step = first + i as u64;
            let slot = ((step - 1) % self.capacity as u64) as usize;
            (step, self.psi[slot], self.lambda1[slot], self.eps[slot])
        })
    }

    /// Writes "m,psi,lambda1,eps" rows for retained steps divisible by
    /// `stride` (every retained step when `stride` ≤ 1).
    pub fn write_csv(&self, out: &mut impl IoWrite, stride: u64) -> std::io::Result<()> {
        writeln!(out, "m,psi,lambda1,eps")?;
        let stride = stride.max(1);
        for (step, psi, lambda1, eps) in self.entries() {
            if step % stride == 0 || stride == 1 {
                writeln!(out, "{step},{psi:.17e},{lambda1:.17e},{eps}")?;
            }
        }
        Ok(())
    }
}

/// Per-offset control table entry: the min and max of the allowed set with
/// their ψ-scale mantissas and f32 snapshots for the trace.
#[derive(Debug, Clone)]
struct EpsEntry {
    min_index: u8,
    min_units: i128,
    min_f32: f32,
    max_index: u8,
    max_units: i128,
    max_f32: f32,
}

/// The immutable machine: ν images, thresholds, kernel constants. Built
/// once per run from the parameter set and the decomposition.
pub struct Trap {
    bits: u32,
    l_offset: u64,
    n: u64,
    period: u64,
    window_m: u32,
    /// Truncation horizon: ledger entries beyond K* are pinned to zero.
    kstar: usize,
    /// Allocated ledger length = min(K*, n−1); `rho` in the state has one
    /// extra slot so the update loop can read one entry past the end.
    ledger_cap: usize,
    /// ν_k mantissas at B+24, k = 0..=n.
    nu: Vec<i128>,
    nu0: i128,
    /// Round-half-even mantissa of μ at B+36 (head kernel).
    mu_head: i128,
    /// floor(μ·2^64) (tail kernel).
    mu_tail: i128,
    /// Tail-kernel final shift (B−24).
    tail_shift: u32,
    /// |ν_k| mantissa gate for the head kernel (2^{B−8}).
    gate_nu: i128,
    /// floor(μΛ·2^{B+32}): the escape envelope.
    thr_escape: i128,
    /// floor(Ψ·2^{B+32}): the inner window.
    thr_inner: i128,
    /// Drift bound mantissa at B+32.
    thr_drift: i128,
    /// Ledger envelope floor((δ + Λ·U_k)·2^{B+6}) for k = 1..=ledger_cap,
    /// indexed by k−1. Compared against |ρ_k mantissa|·(L+m).
    thr_lambda: Vec<i128>,
    /// Control table indexed by m % period (the set for coefficient m+1).
    eps_table: Vec<EpsEntry>,
    model: CoefficientModel,
}

/// The mutable dynamics state.
pub struct TrapState {
    /// Steps taken so far (coefficients chosen).
    pub step: u64,
    /// ψ mantissa at B+32.
    psi_units: i128,
    /// Ledger mantissas at B+6 in the rescaled form ρ_k = λ_k/(L+m);
    /// `rho[i]` holds ρ_{i+1}. One trailing slot stays zero.
    rho: Vec<i128>,
    /// Chosen set indices, one per step (index into `model.allowed(k)`).
    pub eps_history: Vec<u8>,
    /// Set when |ψ| left the escape envelope; the state is then frozen.
    pub escape_flag: bool,
    last_inside: u64,
    pub stats: TrapStats,
    pub trace: TraceRing,
}

/// A completed run: the coefficient sequence with exact values, the final
/// state and the exact run statistics.
pub struct TrapRun {
    pub eps: CoefficientSequence,
    pub stats: TrapStats,
    pub trace: TraceRing,
    pub kstar: usize,
    pub final_psi: Fixed,
    pub psi_envelope: Fixed,
}

/// The chosen coefficient sequence ε_1..ε_n with exact rational access.
#[derive(Debug, Clone)]
pub struct CoefficientSequence {
    model: CoefficientModel,
    indices: Vec<u8>,
}

impl CoefficientSequence {
    pub fn new(model: CoefficientModel, indices: Vec<u8>) -> Self {
        CoefficientSequence { model, indices }
    }

    /// Number of coefficients (the polynomial degree n).
    pub fn len(&self) -> u64 {
        self.indices.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Exact value of ε_k, 1-based.
    pub fn value(&self, k: u64) -> BigRational {
        debug_assert!(k >= 1 && k <= self.len());
        self.model.allowed(k)[self.indices[(k - 1) as usize] as usize].clone()
    }

    /// Raw set indices, one per coefficient.
    pub fn indices(&self) -> &[u8] {
        &self.indices
    }

    pub fn model(&self) -> &CoefficientModel {
        &self.model
    }

    /// Iterates (k, ε_k) over all coefficients.
    pub fn iter(&self) -> impl Iterator<Item = (u64, BigRational)> + '_ {
        (1..=self.len()).map(move |k| (k, self.value(k)))
    }
}

/// floor(x · 2^shift) as BigInt.
fn floor_shift(x: &BigRational, shift: u32) -> BigInt {
    (x.numer().clone() << shift).div_floor(x.denom())
}

/// floor(x · 2^shift) as i128, or None if out of range.
fn floor_shift_i128(x: &BigRational, shift: u32) -> Option<i128> {
    floor_shift(x, shift).to_i128()
}

impl Trap {
    /// Builds the machine, freezing ν images, thresholds and kernel
    /// constants. Fails (Headroom) when the parameter set cannot be hosted
    /// on the i128 fast path — in particular when bits + 36 mantissas or
    /// the worst-case pre-control ψ would overflow.
    pub fn new(params: &BuildParameters, dec: &NewmanDecomposition) -> Result<Trap, TrapError> {
        let bits = params.bits;
        assert_eq!(dec.bits, bits, "decomposition precision mismatch");
        let n = params.n;
        assert_eq!(dec.nu.len() as u64, n + 1, "nu length mismatch");

        if bits + MU_GUARD_BITS > 126 {
            return Err(TrapError::Headroom {
                detail: format!(
                    "precision {bits} needs μ mantissas of {} bits; the fast path caps at 126",
                    bits + MU_GUARD_BITS
                ),
            });
        }

        // U_0 and U_1 as exact dyadic rationals (mantissas at B+24).
        let scale_nu = BigRational::new(BigInt::one(), BigInt::one() << (bits + NU_GUARD_BITS));
        let u_rat = |k: usize| -> BigRational {
            BigRational::from_integer(dec.suffix_bounds[k].mantissa_big()) * &scale_nu
        };
        let u0 = u_rat(0);
        let u1 = u_rat(1);
        let lambda = &params.lambda_bound;
        let delta = &params.delta;
        let mu = &params.mu;
        let l_rat = BigRational::from_integer(BigInt::from(params.l_offset));
        let a_bound = params.model.abs_bound().clone();

        // Worst-case pre-control ψ while the previous step was inside the
        // escape envelope: |ψ'−ε| ≤ (1+1/L)·(μΛ·(1+U_0) + μ·(δ + Λ·U_1)).
        let one = BigRational::one();
        let growth = &one + &one / &l_rat;
        let pre_worst = &growth
            * (mu * lambda * (&one + &u0) + mu * (delta + lambda * &u1));
        let amp = &pre_worst + &a_bound + &one;
        let amp_units = floor_shift(&amp, bits + PSI_GUARD_BITS);
        if amp_units >= (BigInt::one() << 125) {
            return Err(TrapError::Headroom {
                detail: format!(
                    "amplitude bound {} at {} fractional bits overflows the 128-bit state",
                    amp,
                    bits + PSI_GUARD_BITS
                ),
            });
        }
        // Tail-kernel product headroom: (w_max >> TAIL_W_SHIFT)·2^{B-8-18}
        // must stay under 2^126.
        let w_worst_units = floor_shift(&(&pre_worst / &l_rat), bits + PSI_GUARD_BITS);
        let tail_prod_bits = (w_worst_units >> TAIL_W_SHIFT)
            * (BigInt::one() << (bits - 8 - TAIL_NU_SHIFT));
        if tail_prod_bits >= (BigInt::one() << 126) {
            return Err(TrapError::Headroom {
                detail: "tail-kernel product would overflow; reduce precision or Λ".to_string(),
            });
        }

        // ν mantissas on the fast path.
        let mut nu = Vec::with_capacity(dec.nu.len());
        for (k, v) in dec.nu.iter().enumerate() {
            match v.mantissa_i128() {
                Some(m) => nu.push(m),
                None => {
                    return Err(TrapError::Headroom {
                        detail: format!("nu_{k} mantissa exceeds the i128 fast path"),
                    })
                }
            }
        }
        let nu0 = nu[0];

        // Truncation horizon: exact integer scan for the first k with
        // Λ·U_k ≤ 2^{-B+TRUNCATION_BUDGET_LOG2}, i.e.
        // pΛ·mant(U_k) ≤ qΛ·2^{24+TRUNCATION_BUDGET_LOG2}.
        let p_lam = lambda.numer();
        let q_lam = lambda.denom();
        let budget: BigInt = q_lam.clone() << (NU_GUARD_BITS + TRUNCATION_BUDGET_LOG2);
        let mut kstar = n as usize;
        for k in 0..dec.suffix_bounds.len().min(n as usize + 1) {
            let lhs = p_lam * dec.suffix_bounds[k].mantissa_big();
            if lhs <= budget {
                kstar = k;
                break;
            }
        }
        let ledger_cap = kstar.min(n.saturating_sub(1) as usize);

        // μ images.
        let mu_head = Fixed::from_rational(mu.numer(), mu.denom(), Precision::new(bits + MU_GUARD_BITS))
            .mantissa_i128()
            .expect("mu mantissa fits: bits+36 <= 126 checked above");
        let mu_tail = floor_shift_i128(mu, 64).expect("mu < 1 so floor(mu*2^64) fits");

        // Envelope thresholds.
        let thr_escape = floor_shift_i128(&(mu * lambda), bits + PSI_GUARD_BITS)
            .ok_or_else(|| TrapError::Headroom {
                detail: "escape threshold overflows i128".to_string(),
            })?;
        let thr_inner = floor_shift_i128(&params.psi_bound, bits + PSI_GUARD_BITS)
            .ok_or_else(|| TrapError::Headroom {
                detail: "window threshold overflows i128".to_string(),
            })?;
        // Drift bound: Λ/L + (1+1/L)·μ·(δ + Λ·(U_0+U_1)) + 2^{-B+8}.
        // When the mass gate Σ|ν| < δ holds this reduces to the
        // (1/L + O(δ))·Λ form; with a recorded gate miss the measured
        // masses take δ's place, keeping the check honest either way.
        let drift_slack = BigRational::new(
            BigInt::one(),
            BigInt::one() << (bits - DRIFT_SLACK_LOG2),
        );
        let drift_bound =
            lambda / &l_rat + &growth * mu * (delta + lambda * (&u0 + &u1)) + drift_slack;
        let thr_drift = floor_shift_i128(&drift_bound, bits + PSI_GUARD_BITS)
            .ok_or_else(|| TrapError::Headroom {
                detail: "drift threshold overflows i128".to_string(),
            })?;

        // Ledger envelope thresholds: floor(δ·2^{B+6}) + floor(pΛ·mant(U_k) / (qΛ·2^18)).
        let delta_units = floor_shift_i128(delta, bits + RHO_GUARD_BITS)
            .expect("delta < 1 fits");
        let p_lam_i = p_lam.to_i128().ok_or_else(|| TrapError::Headroom {
            detail: "lambda bound numerator exceeds i128".to_string(),
        })?;
        let q_lam_i = q_lam.to_i128().ok_or_else(|| TrapError::Headroom {
            detail: "lambda bound denominator exceeds i128".to_string(),
        })?;
        let mut thr_lambda = Vec::with_capacity(ledger_cap);
        for k in 1..=ledger_cap {
            let m_u = dec.suffix_bounds[k]
                .mantissa_i128()
                .ok_or_else(|| TrapError::Headroom {
                    detail: format!("suffix bound U_{k} exceeds the i128 fast path"),
                })?;
            let envelope = (p_lam_i * m_u) / (q_lam_i << TAIL_NU_SHIFT);
            thr_lambda.push(delta_units + envelope);
        }

        // Control table: min/max of each allowed set with ψ-scale mantissas.
        let prec_psi = Precision::new(bits + PSI_GUARD_BITS);
        let period = params.model.period();
        let mut eps_table = Vec::with_capacity(period);
        for offset in 0..period {
            let set = &params.model.sets()[offset];
            let to_units = |v: &BigRational| -> i128 {
                Fixed::from_rational(v.numer(), v.denom(), prec_psi)
                    .mantissa_i128()
                    .expect("coefficient values are bounded by A")
            };
            let min = set.first().expect("sets are nonempty");
            let max = set.last().expect("sets are nonempty");
            eps_table.push(EpsEntry {
                min_index: 0,
                min_units: to_units(min),
                min_f32: min.to_f64().unwrap_or(f64::NAN) as f32,
                max_index: (set.len() - 1) as u8,
                max_units: to_units(max),
                max_f32: max.to_f64().unwrap_or(f64::NAN) as f32,
            });
        }

        Ok(Trap {
            bits,
            l_offset: params.l_offset,
            n,
            period: period as u64,
            window_m: params.model.balance_window(),
            kstar,
            ledger_cap,
            nu,
            nu0,
            mu_head,
            mu_tail,
            tail_shift: bits - NU_GUARD_BITS,
            gate_nu: 1i128 << (bits - 8),
            thr_escape,
            thr_inner,
            thr_drift,
            thr_lambda,
            eps_table,
            model: params.model.clone(),
        })
    }

    /// Fresh state: ψ = 1 exactly, all ledger entries zero, empty history.
    pub fn init_state(&self, config: &TrapConfig) -> TrapState {
        let psi_units = 1i128 << (self.bits + PSI_GUARD_BITS);
        TrapState {
            step: 0,
            psi_units,
            rho: vec![0i128; self.ledger_cap + 1],
            eps_history: Vec::with_capacity(self.n as usize),
            escape_flag: false,
            last_inside: 0,
            stats: TrapStats::new(self.thr_escape - psi_units, psi_units),
            trace: TraceRing::new(config.trace_capacity),
        }
    }

    /// The scalar chain (w, ν_0·w, μ·ρ_1) summed exactly: t such that the
    /// drift predictor p = (L+m+1)·t and the next head value is
    /// ψ' = (L+m+1)·t + ε. Three roundings at B+32.
    fn t_units(&self, st: &TrapState) -> (i128, i128) {
        let lm = (self.l_offset + st.step) as i128;
        let w = div_rhe_i128(st.psi_units, lm);
        let nu0w = mul_rhe_i128(self.nu0, w, self.bits + NU_GUARD_BITS)
            .expect("nu0·w stays in range inside the envelope");
        let murho1 = mul_rhe_i128(self.mu_head, st.rho[0], self.bits + 10)
            .expect("mu·rho_1 stays in range inside the envelope");
        (w + nu0w + murho1, w)
    }

    /// Chooses ε_{m+1}: min of the allowed set when the drift predictor is
    /// ≥ 0 (ties included), max when it is < 0.
    pub fn choose_control(&self, st: &TrapState) -> ControlChoice {
        debug_assert!(!st.escape_flag, "choose_control on an escaped state");
        let (t, _) = self.t_units(st);
        let entry = &self.eps_table[(st.step % self.period) as usize];
        if t >= 0 {
            ControlChoice {
                index: entry.min_index,
                units: entry.min_units,
                predictor_nonneg: true,
            }
        } else {
            ControlChoice {
                index: entry.max_index,
                units: entry.max_units,
                predictor_nonneg: false,
            }
        }
    }

    /// Exact value of a chosen coefficient: set index `index` at 1-based
    /// coefficient position k.
    pub fn eps_value(&self, k: u64, index: u8) -> BigRational {
        self.model.allowed(k)[index as usize].clone()
    }

    /// Applies one step with the given control: updates ψ and the ledger,
    /// appends the choice, runs the cadenced envelope checks, advances m.
    /// Escape is signalled through `escape_flag`; the caller decides
    /// whether to stop.
    pub fn step(&self, st: &mut TrapState, choice: ControlChoice, config: &TrapConfig) {
        debug_assert!(!st.escape_flag, "step on an escaped state");
        debug_assert!(st.step < self.n, "step past the horizon");
        let m = st.step;
        let lm1 = (self.l_offset + m + 1) as i128;
        let (t, w) = self.t_units(st);

        // Head value: ψ' = (L+m+1)·t + ε, both operations exact.
        let pre = t * lm1;
        let psi_new = pre + choice.units;

        // Ledger update ρ'_k = μ·ρ_{k+1} + w·ν_k over the active window.
        let act_new = self.kstar.min((self.n - m - 1) as usize);
        let act_old = self.kstar.min((self.n - m) as usize).min(self.ledger_cap);
        let gate_nu = self.gate_nu;
        let gate_rho = 1i128 << GATE_RHO_LOG2;
        let mu_head = self.mu_head;
        let mu_tail = self.mu_tail;
        let tail_shift = self.tail_shift;
        let head_sh = self.bits + 50;
        let w_tail = w >> TAIL_W_SHIFT;
        let mut heads = 0u64;
        let mut tails = 0u64;
        for i in 0..act_new {
            let rn = st.rho[i + 1];
            let nk = self.nu[i + 1];
            st.rho[i] = if rn.unsigned_abs() >= gate_rho as u128
                || nk.unsigned_abs() >= gate_nu as u128
            {
                heads += 1;
                // One rounding: RHE((μ̃·ρ_{k+1}·2^14 + w·ν_k) / 2^{B+50}).
                dot2_rhe_i128(mu_head, rn << 14, w, nk, head_sh)
                    .expect("head kernel stays in range inside the envelope")
            } else {
                tails += 1;
                // Truncating kernel; composite error < 2^{-B-4} at ρ scale.
                ((mu_tail * rn) >> 64) + ((w_tail * (nk >> TAIL_NU_SHIFT)) >> tail_shift)
            };
        }
        if act_new < act_old {
            // The entry that fell off the shrinking end of the window.
            st.rho[act_new] = 0;
        }
        st.stats.head_entries += heads;
        st.stats.tail_entries += tails;

        // Bookkeeping and exact envelope checks.
        let drift = (pre - st.psi_units).abs();
        if drift > st.stats.drift_max_units {
            st.stats.drift_max_units = drift;
        }
        if drift > self.thr_drift {
            st.stats.drift_violations += 1;
        }
        st.psi_units = psi_new;
        st.step = m + 1;
        st.eps_history.push(choice.index);
        if choice.predictor_nonneg {
            st.stats.min_choices += 1;
        } else {
            st.stats.max_choices += 1;
        }
        st.stats.steps = st.step;

        let abs_psi = psi_new.abs();
        if abs_psi > st.stats.max_abs_psi_units {
            st.stats.max_abs_psi_units = abs_psi;
            st.stats.max_abs_psi_step = st.step;
        }
        let margin = self.thr_escape - abs_psi;
        if margin < st.stats.escape_margin_min_units {
            st.stats.escape_margin_min_units = margin;
        }
        if abs_psi > self.thr_escape {
            st.escape_flag = true;
        }
        if abs_psi <= self.thr_inner {
            let gap = st.step - st.last_inside;
            if gap > st.stats.max_window_gap {
                st.stats.max_window_gap = gap;
            }
            if gap > self.window_m as u64 {
                st.stats.window_violations += 1;
            }
            st.last_inside = st.step;
        }

        // Trace snapshot (diagnostic floats).
        let scale = (-((self.bits + PSI_GUARD_BITS) as f64)).exp2();
        let scale_rho = (-((self.bits + RHO_GUARD_BITS) as f64)).exp2();
        let lm_new = (self.l_offset + st.step) as f64;
        let entry = &self.eps_table[(m % self.period) as usize];
        let eps_f32 = if choice.predictor_nonneg {
            entry.min_f32
        } else {
            entry.max_f32
        };
        st.trace.push(
            psi_new as f64 * scale,
            st.rho[0] as f64 * scale_rho * lm_new,
            eps_f32,
        );

        // Cadenced ledger checks: short prefix every step, full sweep on
        // the stride and at the horizon.
        let head_len = config.head_check_len.min(act_new);
        self.ledger_sweep(st, head_len);
        if config.full_check_stride > 0
            && (st.step % config.full_check_stride == 0 || st.step == self.n)
        {
            self.ledger_sweep(st, act_new);
        }
    }

    /// Exact ledger-envelope check of the first `upto` entries:
    /// |ρ_k|·(L+m) ≤ floor((δ + Λ·U_k)·2^{B+6}).
    pub fn ledger_sweep(&self, st: &mut TrapState, upto: usize) {
        let lm = (self.l_offset + st.step) as i128;
        let upto = upto.min(self.thr_lambda.len());
        for i in 0..upto {
            let lhs = st.rho[i].abs() * lm;
            if lhs > self.thr_lambda[i] {
                st.stats.lambda_violations += 1;
                if st.stats.first_lambda_violation.is_none() {
                    st.stats.first_lambda_violation = Some((st.step, i + 1));
                }
            }
        }
        st.stats.lambda_entries_checked += upto as u64;
    }

    /// ψ as a Fixed at B+32.
    pub fn psi(&self, st: &TrapState) -> Fixed {
        Fixed::from_mantissa_i128(st.psi_units, Precision::new(self.bits + PSI_GUARD_BITS))
    }

    /// λ_k = (L+m)·ρ_k as a Fixed at B+6 (1-based k; zero beyond the
    /// active window).
    pub fn lambda(&self, st: &TrapState, k: usize) -> Fixed {
        let prec = Precision::new(self.bits + RHO_GUARD_BITS);
        if k == 0 || k > self.ledger_cap {
            return Fixed::from_int(0, prec);
        }
        let lm = (self.l_offset + st.step) as i128;
        Fixed::from_mantissa_i128(st.rho[k - 1] * lm, prec)
    }

    /// The escape envelope μΛ as a Fixed (floored mantissa at B+32).
    pub fn psi_envelope(&self) -> Fixed {
        Fixed::from_mantissa_i128(self.thr_escape, Precision::new(self.bits + PSI_GUARD_BITS))
    }

    /// Truncation horizon K*.
    pub fn kstar(&self) -> usize {
        self.kstar
    }

    /// Escape threshold mantissa at B+32 (exact check constant).
    pub fn escape_threshold_units(&self) -> i128 {
        self.thr_escape
    }

    /// Inner window threshold mantissa at B+32.
    pub fn window_threshold_units(&self) -> i128 {
        self.thr_inner
    }

    /// Drift threshold mantissa at B+32.
    pub fn drift_threshold_units(&self) -> i128 {
        self.thr_drift
    }
}

/// Runs the full n-step dynamics: choose + step each turn, final ledger
/// sweep, exact statistics. On escape the run stops with the diagnostic
/// error; the caller retries with adjusted parameters.
pub fn run(
    params: &BuildParameters,
    dec: &NewmanDecomposition,
    config: &TrapConfig,
) -> Result<TrapRun, TrapError> {
    let trap = Trap::new(params, dec)?;
    let mut st = trap.init_state(config);
    for _ in 0..trap.n {
        let choice = trap.choose_control(&st);
        trap.step(&mut st, choice, config);
        if st.escape_flag {
            let max_before = st.stats.max_abs_psi(trap.bits);
            return Err(TrapError::Escape {
                step: st.step,
                total: trap.n,
                psi: trap.psi(&st).to_rational_string(),
                bound: trap.psi_envelope().to_rational_string(),
                max_before,
            });
        }
    }
    // Horizon sweep is part of the step cadence (st.step == n), but run it
    // once more explicitly so a stride of 0 still ends with a full check.
    let act = trap.kstar.min(trap.ledger_cap);
    trap.ledger_sweep(&mut st, act);
    st.stats.final_open_gap = st.step - st.last_inside;
    let final_psi = trap.psi(&st);

    let TrapState {
        eps_history,
        stats,
        trace,
        ..
    } = st;
    Ok(TrapRun {
        eps: CoefficientSequence::new(trap.model.clone(), eps_history),
        stats,
        trace,
        kstar: trap.kstar,
        final_psi,
        psi_envelope: trap.psi_envelope(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff_model::CoefficientModel;
    use crate::newman::{compute_decomposition, DecompositionError};
    use crate::numeric::dyadic::DyInterval;
    use crate::params::{select_parameters, target_points, Overrides};
    use num_bigint::BigInt;
    use num_traits::{One, Signed};
    use once_cell::sync::Lazy;
    use proptest::prelude::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    /// Shared Littlewood r=2 fixture: real parameters and the real
    /// decomposition (the mass gate records a miss at η=1/8; the
    /// decomposition itself is certified and usable).
    static LITTLEWOOD_R2: Lazy<(BuildParameters, NewmanDecomposition)> = Lazy::new(|| {
        let params = select_parameters(&CoefficientModel::littlewood(), 2, &Overrides::default())
            .expect("littlewood r=2 parameters");
        let targets = target_points(&params).expect("target points");
        let dec = match compute_decomposition(&params, &targets) {
            Ok(d) => d,
            Err(DecompositionError::DeltaExceeded { decomposition, .. }) => *decomposition,
            Err(e) => panic!("decomposition failed: {e}"),
        };
        (params, dec)
    });

    /// Degenerate machine: all ν = 0, modest horizon. The dynamics reduce
    /// to the scalar recurrence ψ' = ((L+m+1)/(L+m))ψ ± 1.
    fn degenerate_setup(n: u64, bits: u32) -> (BuildParameters, NewmanDecomposition) {
        let model = CoefficientModel::littlewood();
        let prec_nu = Precision::new(bits + NU_GUARD_BITS);
        let zero = Fixed::from_int(0, prec_nu);
        let params = BuildParameters {
            model: model.clone(),
            r: 1,
            s: 2,
            eta: rat(1, 8),
            alpha: rat(1, 32),
            mu: rat(15, 16),
            delta: rat(1, 24),
            psi_bound: rat(4, 1),
            lambda_bound: rat(12, 1),
            l_offset: 64,
            n,
            g_degree: 49,
            bits,
            fft_size: 1024,
            beta: DyInterval::from_int(1),
            jensen_constant: DyInterval::from_int(28),
        };
        let dec = NewmanDecomposition {
            nu: vec![zero.clone(); (n + 1) as usize],
            suffix_bounds: vec![zero.clone(); (n + 2) as usize],
            mu: params.mu.clone(),
            sum_bound: zero.clone(),
            aliasing_bound: zero.clone(),
            contour_radius: rat(31, 32),
            delta_satisfied: true,
            bits,
            sample_count: 0,
            max_im_coefficient: zero,
        };
        (params, dec)
    }

    fn strict_config() -> TrapConfig {
        TrapConfig {
            trace_capacity: 1 << 12,
            full_check_stride: 1,
            head_check_len: usize::MAX,
        }
    }

    #[test]
    fn init_state_is_exact() {
        let (params, dec) = degenerate_setup(100, 64);
        let trap = Trap::new(&params, &dec).unwrap();
        let st = trap.init_state(&TrapConfig::default());
        // ψ = 1 exactly: mantissa 2^{B+32}.
        assert_eq!(st.psi_units, 1i128 << (64 + PSI_GUARD_BITS));
        assert_eq!(trap.psi(&st).to_f64(), 1.0);
        for k in 0..=8 {
            assert!(trap.lambda(&st, k).is_zero());
        }
        assert!(st.eps_history.is_empty());
        assert!(!st.escape_flag);
        // The start is inside the inner window: 1 ≤ Ψ.
        assert!(st.psi_units <= trap.window_threshold_units());
    }

    #[test]
    fn first_step_head_value_is_exact_rational_identity() {
        // From ψ_0 = 1, λ ≡ 0: ψ_1 = ((L+1)/L)(1 + ν̃_0) + ε_1 with ε_1 = −1
        // (the predictor is positive), computed here with zero rounding
        // error: w = ψ/64 and ν_0·w are exact at these scales.
        let (params, dec) = &*LITTLEWOOD_R2;
        let trap = Trap::new(params, dec).unwrap();
        let config = strict_config();
        let mut st = trap.init_state(&config);
        let choice = trap.choose_control(&st);
        assert!(choice.predictor_nonneg, "predictor starts positive");
        trap.step(&mut st, choice, &config);
        assert_eq!(st.eps_history.len(), 1);
        // ε_1 = min {−1, 1} = −1.
        assert_eq!(trap.eps_value(1, st.eps_history[0]), rat(-1, 1));

        let bits = params.bits;
        let nu0 = BigRational::new(
            BigInt::from(dec.nu[0].mantissa_i128().unwrap()),
            BigInt::one() << (bits + NU_GUARD_BITS),
        );
        let expected = rat(65, 64) * (BigRational::one() + nu0) - BigRational::one();
        let got = BigRational::new(
            BigInt::from(st.psi_units),
            BigInt::one() << (bits + PSI_GUARD_BITS),
        );
        assert_eq!(got, expected, "first head value is exact");
    }

    #[test]
    fn first_step_ledger_matches_scaled_nu() {
        // λ_{1,k} = ((L+1)/L)·ν̃_k up to the per-assignment rounding: within
        // 2^{-B+2} for every k (head entries are within (L+1)·2^{-B-7}).
        let (params, dec) = &*LITTLEWOOD_R2;
        let trap = Trap::new(params, dec).unwrap();
        let config = strict_config();
        let mut st = trap.init_state(&config);
        let choice = trap.choose_control(&st);
        trap.step(&mut st, choice, &config);

        let bits = params.bits;
        let tol = BigRational::new(BigInt::from(4), BigInt::one() << bits);
        for k in [1usize, 2, 5, 37, 300, 900] {
            if k > trap.kstar() {
                continue; // beyond the truncation horizon nothing is stored
            }
            let lam = BigRational::new(
                trap.lambda(&st, k).mantissa_big(),
                BigInt::one() << (bits + RHO_GUARD_BITS),
            );
            let nuk = BigRational::new(
                BigInt::from(dec.nu[k].mantissa_i128().unwrap()),
                BigInt::one() << (bits + NU_GUARD_BITS),
            );
            let expected = rat(65, 64) * nuk;
            let err = (lam - expected).abs();
            assert!(
                err <= tol,
                "ledger entry {k} off by {} > tol",
                err.to_f64().unwrap_or(f64::NAN)
            );
        }
    }

    #[test]
    fn tie_predictor_takes_min_branch() {
        let (params, dec) = degenerate_setup(10, 64);
        let trap = Trap::new(&params, &dec).unwrap();
        let mut st = trap.init_state(&TrapConfig::default());
        st.psi_units = 0; // forces t = 0 exactly (ν ≡ 0, ledger zero)
        let choice = trap.choose_control(&st);
        assert!(choice.predictor_nonneg);
        assert_eq!(choice.index, 0, "min entry of the sorted set");
        assert_eq!(trap.eps_value(1, choice.index), rat(-1, 1));
    }

    #[test]
    fn degenerate_scalar_recurrence_stays_inside_window() {
        // With ν ≡ 0 and E = {−1, 1}: ψ' = ((L+m+1)/(L+m))ψ ± 1 under the
        // control rule stays inside [−Ψ, Ψ] for 1000 steps.
        let (params, dec) = degenerate_setup(1000, 64);
        let config = strict_config();
        let run = run(&params, &dec, &config).expect("no escape");
        assert_eq!(run.eps.len(), 1000);
        assert_eq!(run.stats.steps, 1000);
        assert!(run.stats.clean(), "no envelope violations: {:?}", run.stats);
        // |ψ| never exceeds Ψ = 4 (it actually stays near 1).
        assert!(run.stats.max_abs_psi_units <= 4i128 << (64 + PSI_GUARD_BITS));
        assert!(run.stats.max_window_gap <= 1, "M = 1 return rule");
        // The control alternates: both branches get exercised.
        assert!(run.stats.min_choices > 0 && run.stats.max_choices > 0);
    }

    #[test]
    fn adversarial_control_escapes_and_is_reported() {
        // Feeding +1 regardless of the predictor grows |ψ| roughly like
        // (1+1/L)ψ + 1 and must trip the escape envelope μΛ = 11.25.
        let (params, dec) = degenerate_setup(5000, 64);
        let trap = Trap::new(&params, &dec).unwrap();
        let config = TrapConfig::default();
        let mut st = trap.init_state(&config);
        let plus_one = ControlChoice {
            index: 1,
            units: 1i128 << (64 + PSI_GUARD_BITS),
            predictor_nonneg: false,
        };
        let mut escaped_at = None;
        for _ in 0..5000 {
            trap.step(&mut st, plus_one, &config);
            if st.escape_flag {
                escaped_at = Some(st.step);
                break;
            }
        }
        let at = escaped_at.expect("forced growth must escape");
        assert!((5..100).contains(&at), "escape after sustained growth: {at}");
        assert!(st.psi_units.abs() > trap.escape_threshold_units());
    }

    #[test]
    fn full_littlewood_r2_run_stays_trapped() {
        let (params, dec) = &*LITTLEWOOD_R2;
        let config = TrapConfig {
            trace_capacity: 1 << 16,
            ..TrapConfig::default()
        };
        let run = run(params, dec, &config).expect("littlewood r=2 must not escape");
        assert_eq!(run.eps.len(), params.n);
        assert!(run.stats.clean(), "envelope violations: {:?}", run.stats);
        // Float-pipeline cross-check: max|ψ| ≈ 1.0 (the initial value is
        // never exceeded by more than rounding), margin to μΛ ≈ 11.625 wide.
        let max_psi = run.stats.max_abs_psi(params.bits);
        assert!((0.9..=1.05).contains(&max_psi), "max|psi| = {max_psi}");
        assert!(run.stats.escape_margin_min_units > 0);
        // M = 1: each step inside returns immediately.
        assert!(run.stats.max_window_gap <= 1);
        assert_eq!(run.stats.final_open_gap, 0);
        // Both kernels ran (the ν sequence spans both magnitude regimes).
        assert!(run.stats.head_entries > 0 && run.stats.tail_entries > 0);
        // Every coefficient is ±1.
        for k in [1u64, 2, 1000, params.n] {
            let v = run.eps.value(k);
            assert!(v == rat(1, 1) || v == rat(-1, 1));
        }
    }

    #[test]
    fn trace_ring_retains_last_window_and_writes_csv() {
        let (params, dec) = degenerate_setup(1000, 64);
        let config = TrapConfig {
            trace_capacity: 128,
            full_check_stride: 32,
            head_check_len: 64,
        };
        let run = run(&params, &dec, &config).unwrap();
        assert_eq!(run.trace.total_steps(), 1000);
        assert_eq!(run.trace.len(), 128);
        assert_eq!(run.trace.first_step(), 873);
        let steps: Vec<u64> = run.trace.entries().map(|(m, ..)| m).collect();
        assert_eq!(steps.first(), Some(&873));
        assert_eq!(steps.last(), Some(&1000));

        let mut buf = Vec::new();
        run.trace.write_csv(&mut buf, 100).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "m,psi,lambda1,eps");
        // Retained steps divisible by 100: 900 and 1000.
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("900,"));
        assert!(lines[2].starts_with("1000,"));
        // ε column is ±1.
        for row in &lines[1..] {
            let eps = row.rsplit(',').next().unwrap();
            assert!(eps == "1" || eps == "-1", "eps column: {eps}");
        }
    }

    #[test]
    fn headroom_guard_rejects_oversized_precision() {
        let (params, dec) = degenerate_setup(10, 64);
        let mut params = params;
        params.bits = 120;
        let mut dec = dec;
        dec.bits = 120;
        match Trap::new(&params, &dec) {
            Err(TrapError::Headroom { .. }) => {}
            other => panic!("expected headroom rejection, got {:?}", other.is_ok()),
        }
    }

    /// Hand-built small decompositions: ν_k = v_k / (1024·(k+1)³) with
    /// |v_k| ≤ 1 keeps Σ|ν| < δ, so the full trap theory applies; the run
    /// must stay clean for every sign pattern.
    fn small_nu_setup(values: &[i64], bits: u32) -> (BuildParameters, NewmanDecomposition) {
        let n = values.len() as u64 - 1;
        let (params, mut dec) = degenerate_setup(n, bits);
        let prec_nu = Precision::new(bits + NU_GUARD_BITS);
        let mut nu = Vec::with_capacity(values.len() + 1);
        nu.push(Fixed::from_ratio(values[0], 1024, prec_nu));
        for (i, &v) in values.iter().enumerate().skip(1) {
            let den = 1024i64 * ((i as i64 + 1).pow(3));
            nu.push(Fixed::from_ratio(v, den, prec_nu));
        }
        // Honest suffix bounds: U_k = Σ_{i≥k} |ν_i| rounded up one ulp.
        let mut suffix = vec![Fixed::from_int(0, prec_nu); nu.len() + 1];
        let one_ulp = Fixed::from_mantissa_i128(1, prec_nu);
        for k in (0..nu.len()).rev() {
            suffix[k] = suffix[k + 1].add(&nu[k].abs()).add(&one_ulp);
        }
        dec.sum_bound = suffix[0].clone();
        dec.nu = nu;
        dec.suffix_bounds = suffix;
        (params, dec)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_small_mass_runs_stay_clean(
            values in proptest::collection::vec(-1i64..=1, 32..200usize)
        ) {
            let (params, dec) = small_nu_setup(&values, 64);
            let config = strict_config();
            let outcome = run(&params, &dec, &config).expect("small mass cannot escape");
            prop_assert!(outcome.stats.clean());
            prop_assert!(outcome.stats.max_abs_psi_units <= 4i128 << (64 + PSI_GUARD_BITS));
            prop_assert_eq!(outcome.eps.len(), values.len() as u64 - 1);
        }
    }

    /// End-to-end consistency at a small but real scale: a genuine
    /// decomposition drives the fast-path machine for n = 600 steps while a
    /// 768-fraction-bit BigInt mirror replays the same recurrences and the
    /// running partial sums Q_m(x_j) are tracked alongside. The mirror must
    /// agree with the i128 state, the representation identity
    /// (L+m)·Q_m(x_j)/x_j^m = ψ_m + Σ_k λ_{m,k}(μx_j)^k must hold to within
    /// the decomposition residual, and the final partial sums must already
    /// be exponentially small.
    #[test]
    fn mirror_replay_matches_fast_path_and_partial_sums_shrink() {
        use num_bigint::Sign;
        use num_traits::Zero;
        const FRAC: u32 = 768;
        let model = CoefficientModel::littlewood();
        let mut params = crate::verify::tests::tiny_params(model, 600, 2);
        params.fft_size = 8192;
        let targets = crate::params::target_points(&params).unwrap();
        let dec = match compute_decomposition(&params, &targets) {
            Ok(d) => d,
            Err(DecompositionError::DeltaExceeded { decomposition, .. }) => *decomposition,
            Err(e) => panic!("decomposition failed: {e}"),
        };
        crate::newman::verify_decomposition(&dec, &targets).expect("residual in budget");

        let trap = Trap::new(&params, &dec).unwrap();
        let config = strict_config();
        let mut st = trap.init_state(&config);

        let n = params.n;
        let l = params.l_offset;
        let bits = params.bits;
        println!("kstar={} ledger_cap={} n={}", trap.kstar, trap.ledger_cap, n);

        let one = BigInt::one() << FRAC;
        // mantissa helpers: λa·b at FRAC, floor
        let mul = |a: &BigInt, b: &BigInt| -> BigInt { (a * b) >> FRAC };
        let divi = |a: &BigInt, d: u64| -> BigInt {
            let d = BigInt::from(d);
            a.div_floor(&d)
        };
        let to_f = |a: &BigInt| -> f64 {
            use num_traits::ToPrimitive;
            BigRational::new(a.clone(), BigInt::one() << FRAC)
                .to_f64()
                .unwrap_or(f64::NAN)
        };

        // frozen inputs at FRAC bits
        let nu_hat: Vec<BigInt> = dec
            .nu
            .iter()
            .map(|v| v.mantissa_big() << (FRAC - (bits + NU_GUARD_BITS)))
            .collect();
        let mu_hat = {
            let m = &dec.mu;
            (m.numer() << FRAC).div_floor(m.denom())
        };
        let x_hat: Vec<BigInt> = targets
            .points
            .iter()
            .map(|x| (x.numer() << FRAC).div_floor(x.denom()))
            .collect();

        let cap = trap.ledger_cap;
        let mut psi_hat: BigInt = one.clone();
        let mut rho_hat: Vec<BigInt> = vec![BigInt::zero(); cap + 1];
        // running partial sums and point powers
        let mut q_hat: Vec<BigInt> = x_hat.iter().map(|_| divi(&one, l)).collect();
        let mut xpow: Vec<BigInt> = x_hat.iter().map(|_| one.clone()).collect();

        let mut worst_dpsi = 0f64;
        let mut worst_ident = 0f64;
        for m in 0..n {
            let choice = trap.choose_control(&st);
            let eps_units_hat = BigInt::from(choice.index as i64 * 2 - 1) << FRAC; // ±1 for this family

            let w_hat = divi(&psi_hat, l + m);
            let psi_next = (&w_hat + mul(&w_hat, &nu_hat[0]) + mul(&mu_hat, &rho_hat[0]))
                * BigInt::from(l + m + 1)
                + &eps_units_hat;
            let act_new = trap.kstar.min((n - m - 1) as usize);
            let act_old = trap.kstar.min((n - m) as usize).min(cap);
            for i in 0..act_new {
                rho_hat[i] = mul(&mu_hat, &rho_hat[i + 1]) + mul(&w_hat, &nu_hat[i + 1]);
            }
            if act_new < act_old {
                rho_hat[act_new] = BigInt::zero();
            }
            psi_hat = psi_next;

            trap.step(&mut st, choice, &config);
            assert!(!st.escape_flag, "escape at step {}", st.step);

            for j in 0..x_hat.len() {
                xpow[j] = mul(&xpow[j], &x_hat[j]);
                let term = divi(&xpow[j], l + m + 1);
                if choice.index == 0 {
                    q_hat[j] -= term;
                } else {
                    q_hat[j] += term;
                }
            }

            let psi_fast = BigInt::from(st.psi_units) << (FRAC - (bits + PSI_GUARD_BITS));
            let dpsi = to_f(&(&psi_hat - &psi_fast)).abs();
            worst_dpsi = worst_dpsi.max(dpsi);

            if (m + 1) % 100 == 0 || m + 1 == n {
                for j in 0..x_hat.len() {
                    // W_direct = (L+m+1)·Q/x^{m+1}
                    let w_direct = divi(&((&q_hat[j] << FRAC) / &xpow[j]), 1) * BigInt::from(l + m + 1);
                    let mut w_repr = psi_hat.clone();
                    let mut mxk = one.clone();
                    let mux = mul(&mu_hat, &x_hat[j]);
                    for k in 1..=cap {
                        mxk = mul(&mxk, &mux);
                        if rho_hat[k - 1].sign() != Sign::NoSign {
                            w_repr += mul(&(&rho_hat[k - 1] * BigInt::from(l + m + 1)), &mxk);
                        }
                    }
                    let ident = to_f(&(&w_direct - &w_repr)).abs();
                    worst_ident = worst_ident.max(ident);
                    println!(
                        "m={} j={} dpsi={:.3e} W_direct={:.6e} W_repr={:.6e} ident_diff={:.3e} Q={:.6e}",
                        m + 1,
                        j,
                        dpsi,
                        to_f(&w_direct),
                        to_f(&w_repr),
                        ident,
                        to_f(&q_hat[j]),
                    );
                }
            }
        }
        println!("worst dpsi = {worst_dpsi:.3e}, worst identity gap = {worst_ident:.3e}");

        // The i128 fast path tracks the mirror to far better than the
        // per-step envelope slack.
        assert!(worst_dpsi < 2f64.powi(-40), "fast path diverged: {worst_dpsi:.3e}");
        // The representation identity holds to residual scale across the run.
        assert!(worst_ident < 1e-9, "identity gap: {worst_ident:.3e}");
        // Both partial sums end exponentially small: |Q_n(x_j)| ≲ C·x_j^n.
        for (j, q) in q_hat.iter().enumerate() {
            let v = to_f(q).abs();
            println!("final |Q_n(x_{j})| = {v:.3e}");
            assert!(v < 1e-6, "partial sum at target {j} is {v:.3e}");
        }
    }
}
