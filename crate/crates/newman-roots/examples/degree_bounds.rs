//! The other direction: no polynomial with constant term 1 and coefficients
//! bounded by A can have more than `v(A)·⌈√n⌉` roots in `(0, 1]` — so the
//! construction's r ~ √n root count is best possible up to the constant.
//!
//! The bound comes from an explicit damping polynomial: the averaged
//! Chebyshev kernel `q₀` rescaled to `[0, n]` and raised to the power v,
//! whose values at the integers decay fast enough that `Σ|q₁(k)|^v < 1/A`.
//! Everything is exact rational arithmetic; this example prints the kernel,
//! the certified power sums, and the resulting caps.
//!
//!     cargo run --example degree_bounds

use newman_roots::bounds::{build_damping, kernel_coeffs, upper_bound, BoundReport};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

fn rat(p: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(p))
}

fn main() {
    println!("the degree-4 kernel q₀ (all roots real, q₀(1) = 1):");
    let q0 = kernel_coeffs(4);
    for (j, c) in q0.iter().enumerate() {
        println!("  t^{j}: {c}");
    }

    println!();
    println!("certified damping data (A = 1):");
    println!("{:>6} {:>4} {:>4} {:>5}  {}", "n", "ℓ", "v", "m", "Σ|q₁(k)|^v");
    for n in [16u64, 64, 256, 1024, 8192] {
        let dp = build_damping(n, &rat(1)).expect("builds");
        println!(
            "{:>6} {:>4} {:>4} {:>5}  {}{}",
            n,
            dp.ell,
            dp.v,
            dp.m,
            if dp.sum_is_exact {
                format!("{:.6e} (exact rational)", dp.sum_check.to_f64().unwrap())
            } else {
                format!("{} (closed-form bound)", dp.sum_check)
            },
            "",
        );
    }

    println!();
    println!("root-count caps at the degrees the construction pipeline produces:");
    println!("{:>3} {:>9} {:>11} {:>14}", "r", "n ≈", "cap v·⌈√n⌉", "constructed");
    for (r, n) in [(2u32, 227_169u64), (4, 908_543), (6, 2_044_051), (8, 3_633_682)] {
        println!(
            "{:>3} {:>9} {:>11} {:>14}",
            r,
            n,
            upper_bound(n, &rat(1)),
            format!("≥ {r} certified")
        );
    }

    println!();
    let dp = build_damping(16, &rat(1)).expect("builds");
    let report = BoundReport::from_damping(&dp, &rat(1));
    println!(
        "machine-readable report (also `newman-roots bound 16`):\n{}",
        serde_json::to_string(&report).expect("serializes")
    );
}
