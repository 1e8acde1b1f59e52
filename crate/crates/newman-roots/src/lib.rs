//! Construction and certification of polynomials with restricted coefficients
//! (Littlewood `{−1,1}`, Newman `{0,(−1)^k}`, height-1 `{−1,0,1}`, or any
//! user-supplied balanced periodic family) having at least `r` certified
//! distinct real roots in `[0,1]`, with degree `n = O(r²)`.
//!
//! The pipeline:
//!
//! 1. [`coeff_model`] — validate the coefficient family and its balance
//!    parameters `(M, a, A)`.
//! 2. [`params`] — derive every scalar of the construction (`α, η, μ, L, n,
//!    δ, Λ, Ψ, ℓ, B, N`, Jensen budget `β`) and the target points
//!    `x_1 < … < x_s` in `I(α) = [1−2α, 1−α]`.
//! 3. [`newman`] — compute the Newman decomposition `x⁻¹ − 1 = Σ ν_k μ^k x^k`
//!    (valid simultaneously at all targets) by FFT discretization of a contour
//!    integral, with certified aliasing and tail bounds.
//! 4. [`trap`] — run the controlled one-dimensional dynamics of `ψ` with the
//!    `λ` ledger, choosing each coefficient `ε_k` greedily so the state stays
//!    in a bounded trap; this forces `Q_n(x) = 1/L + Σ ε_k x^k/(L+k)` to be
//!    tiny at every target.
//! 5. [`verify`] — assemble `P_n(x) = 1 + Σ ε_k x^k`, and certify roots by
//!    exact-arithmetic sign changes: every emitted bracket is unconditionally
//!    sound regardless of any numeric shortcut upstream.
//! 6. [`bounds`] — the classical converse: any admissible `P_n` has at most
//!    `v(A)·⌈√n⌉` roots in `(0,1]`, via an exact damping-polynomial
//!    construction; certificates are cross-checked against it.
//!
//! All pipeline arithmetic is deterministic fixed-point ([`numeric`]): value =
//! mantissa · 2^{−B}, round-half-even, so identical inputs give bit-identical
//! certificates on every platform. Analytic bound comparisons (degree
//! selection, aliasing, tail budgets) run in a separate directed-rounding
//! dyadic kernel and are therefore certified, not heuristic.

pub mod bounds;
pub mod cli;
pub mod coeff_model;
pub mod newman;
pub mod numeric;
pub mod params;
pub mod trap;
pub mod verify;
