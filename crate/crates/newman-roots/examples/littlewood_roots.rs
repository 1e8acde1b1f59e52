//! End-to-end construction for the Littlewood family (coefficients ±1):
//! builds a polynomial `P(x) = 1 + Σ ε_k x^k` with at least `r` certified
//! distinct roots inside `[1−2α, 1−α] ⊂ (0, 1)`, then prints the certificate
//! summary and every sign-change bracket.
//!
//! Runtime warning: the smallest degree the budget allows is around 2.3·10^5
//! at r = 2 (growing like r²), so this runs for a few minutes.
//!
//!     cargo run --release --example littlewood_roots [-- r]

use newman_roots::cli::{construct_pipeline, RunConfig};
use std::process::ExitCode;

fn main() -> ExitCode {
    let r: u32 = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("root count must be an integer"))
        .unwrap_or(2);

    let config = RunConfig::family("littlewood", r);
    let outcome = match construct_pipeline(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("construction failed: {e}");
            return ExitCode::from(e.exit_code());
        }
    };

    let cert = &outcome.certificate;
    let art = &outcome.artifacts;
    println!();
    println!(
        "degree {} polynomial over {{−1, +1}} with {} certified roots (requested {r})",
        cert.degree(),
        cert.root_count
    );
    println!(
        "weight sum Σ|ν| ≤ {:.4} (δ = {}, satisfied: {}); converse cap {} roots",
        art.sum_bound.to_f64(),
        art.params.delta,
        art.delta_satisfied,
        art.root_cap
    );
    println!("sign-change brackets (exact endpoint rationals):");
    for (i, b) in cert.brackets.iter().enumerate() {
        println!(
            "  root {:>2}: [{}, {}]  signs ({:+}, {:+})",
            i + 1,
            b.a,
            b.b,
            b.sign_a,
            b.sign_b
        );
    }

    let out = format!("littlewood_r{r}.json");
    std::fs::write(&out, cert.to_json_string()).expect("writing certificate");
    println!("certificate written to {out}");
    ExitCode::SUCCESS
}
