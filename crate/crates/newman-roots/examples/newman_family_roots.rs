//! Construction over the Newman family: the allowed coefficient set
//! alternates with the index parity — {0, −1} at odd k, {0, +1} at even k —
//! so the polynomial is a sparse signed 0/1 design. The family is balanced
//! with window 2 (a single parity class can only push one way; a pair can
//! cancel), which the model derivation finds on its own.
//!
//! Runs the full pipeline at the requested r (default 2; a few minutes).
//!
//!     cargo run --release --example newman_family_roots [-- r]

use newman_roots::cli::{construct_pipeline, RunConfig};
use num_traits::Zero;
use std::process::ExitCode;

fn main() -> ExitCode {
    let r: u32 = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("root count must be an integer"))
        .unwrap_or(2);

    let config = RunConfig::family("newman", r);
    let outcome = match construct_pipeline(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("construction failed: {e}");
            return ExitCode::from(e.exit_code());
        }
    };

    let cert = &outcome.certificate;
    let model = cert.params.model.clone();
    println!();
    println!(
        "model {:?}: period {}, balance window {}, margin {}",
        model.name().unwrap_or("newman"),
        model.period(),
        model.balance_window(),
        model.balance_margin()
    );

    // How sparse did the controller choose to be?
    let mut zeros = 0u64;
    let mut nonzeros = 0u64;
    for (_, value) in cert.eps.iter() {
        if value.is_zero() {
            zeros += 1;
        } else {
            nonzeros += 1;
        }
    }
    println!(
        "degree {}: {} zero coefficients, {} nonzero ({} certified roots)",
        cert.degree(),
        zeros,
        nonzeros,
        cert.root_count
    );
    for (i, b) in cert.brackets.iter().enumerate() {
        println!("  root {:>2}: [{}, {}]", i + 1, b.a, b.b);
    }

    let out = format!("newman_r{r}.json");
    std::fs::write(&out, cert.to_json_string()).expect("writing certificate");
    println!("certificate written to {out}");
    ExitCode::SUCCESS
}
