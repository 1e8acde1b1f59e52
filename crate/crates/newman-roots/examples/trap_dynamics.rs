//! Watches the trap dynamics choose coefficients: at every step the
//! controller adds one allowed value ε_{m+1} to the head state ψ and the
//! exact ledger keeps |ψ| inside its envelope while the disturbance from
//! the weight tail stays below budget. The run's exact online statistics
//! and a sample of the retained step trace are printed at the end.
//!
//! Needs the weight decomposition first, so this takes a few minutes.
//!
//!     cargo run --release --example trap_dynamics

use newman_roots::coeff_model::CoefficientModel;
use newman_roots::newman::{compute_decomposition, DecompositionError};
use newman_roots::params::{select_parameters, target_points, Overrides};
use newman_roots::trap::{run, TrapConfig};
use std::process::ExitCode;

fn main() -> ExitCode {
    let model = CoefficientModel::littlewood();
    let params = select_parameters(&model, 2, &Overrides::default()).expect("feasible");
    let targets = target_points(&params).expect("targets");
    println!(
        "preparing weights for n = {} (this is the slow part)...",
        params.n
    );
    let dec = match compute_decomposition(&params, &targets) {
        Ok(dec) => dec,
        Err(DecompositionError::DeltaExceeded { decomposition, .. }) => *decomposition,
        Err(e) => {
            eprintln!("decomposition failed: {e}");
            return ExitCode::from(3);
        }
    };

    println!("running {} steps of the dynamics...", params.n);
    let outcome = match run(&params, &dec, &TrapConfig::default()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("dynamics failed: {e}");
            return ExitCode::from(4);
        }
    };

    let stats = &outcome.stats;
    let bits = params.bits;
    println!();
    println!("exact run statistics:");
    println!("  steps                  {}", stats.steps);
    println!(
        "  max |ψ|                {:.6} (envelope μΛ = {}, reached at step {})",
        stats.max_abs_psi(bits),
        outcome.psi_envelope.to_f64(),
        stats.max_abs_psi_step
    );
    println!(
        "  window return          gap ≤ {} steps (cap M = {}), {} violations",
        stats.max_window_gap,
        model.period(),
        stats.window_violations
    );
    println!(
        "  ledger entries checked {} ({} violations)",
        stats.lambda_entries_checked, stats.lambda_violations
    );
    println!(
        "  drift max              {:.3e} ({} violations)",
        stats.drift_max(bits),
        stats.drift_violations
    );
    println!(
        "  control branches       {} min / {} max",
        stats.min_choices, stats.max_choices
    );

    println!();
    println!("trace sample (step, ψ, λ₁, ε):");
    let total = outcome.trace.len();
    for (step, psi, lambda1, eps) in outcome
        .trace
        .entries()
        .step_by((total / 8).max(1))
        .take(8)
    {
        println!("  {:>8}  {:>9.5}  {:>9.5}  {:>4}", step, psi, lambda1, eps);
    }
    ExitCode::SUCCESS
}
