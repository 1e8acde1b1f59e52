//! Certificate verification from the consumer's side: parse a JSON
//! certificate, re-check everything from scratch (coefficient membership,
//! threshold derivation, residual margins bit for bit, every bracket's
//! endpoint signs by exact evaluation), and watch tampering get caught.
//!
//! With no argument this builds a tiny hand-checkable instance instead of
//! reading a file: P(x) = 1 − (64/61)·x, whose root 61/64 sits between the
//! two targets 15/16 and 31/32.
//!
//!     cargo run --example verify_certificate [-- certificate.json]

use newman_roots::coeff_model::CoefficientModel;
use newman_roots::numeric::dyadic::DyInterval;
use newman_roots::params::{BuildParameters, TargetPoints};
use newman_roots::trap::CoefficientSequence;
use newman_roots::verify::{
    assemble_polynomial, certify, check_q_smallness, verify_certificate, PolynomialCertificate,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use std::process::ExitCode;

fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// A degree-1 instance small enough to check by hand. The envelope
/// constants are derived the same way the parameter selector derives them;
/// only the degree is toy-sized.
fn tiny_certificate() -> PolynomialCertificate {
    let model =
        CoefficientModel::from_sets(1, vec![vec![rat(-64, 61), rat(64, 61)]]).expect("balances");
    let a = model.abs_bound().clone();
    let psi_bound = rat(3, 1) * &a + rat(1, 1);
    let lambda_bound = rat(3, 1) * &psi_bound;
    let params = BuildParameters {
        model: model.clone(),
        r: 1,
        s: 2,
        eta: rat(1, 8),
        alpha: rat(1, 32),
        mu: rat(15, 16),
        l_offset: 64,
        n: 1,
        delta: rat(1, 24),
        psi_bound,
        lambda_bound,
        g_degree: 49,
        bits: 70,
        fft_size: 1024,
        beta: DyInterval::from_ratio(1, 1000, 160),
        jensen_constant: DyInterval::from_int(28),
    };
    let targets =
        TargetPoints::from_rationals(vec![rat(15, 16), rat(31, 32)], &params.eta).expect("targets");
    let eps = CoefficientSequence::new(model, vec![0]); // ε_1 = −64/61
    assemble_polynomial(&params, &targets, &eps).expect("assembles")
}

fn main() -> ExitCode {
    let json = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(&path).expect("reading certificate file"),
        None => {
            println!("no file given; building the tiny demonstration certificate\n");
            let mut cert = tiny_certificate();
            check_q_smallness(&mut cert).expect("residuals small");
            certify(&mut cert, 32).expect("root bracketed");
            cert.to_json_string()
        }
    };

    let cert = match PolynomialCertificate::from_json_str(&json) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("certificate rejected at parse: {e}");
            return ExitCode::from(5);
        }
    };
    match verify_certificate(&cert) {
        Ok(summary) => {
            println!(
                "accepted: {} roots of a degree-{} polynomial certified",
                summary.root_count,
                cert.degree()
            );
            println!(
                "residuals re-checked at {} fraction bits; worst margin {:.3e}",
                summary.q_frac_bits,
                summary.min_q_margin.to_f64()
            );
            for b in &cert.brackets {
                println!("  bracket [{}, {}] signs ({:+}, {:+})", b.a, b.b, b.sign_a, b.sign_b);
            }
        }
        Err(e) => {
            eprintln!("certificate rejected: {e}");
            return ExitCode::from(5);
        }
    }

    // Verification is adversarial: change any load-bearing byte and the
    // re-check fails. Flip the sign of ε_1 in the coefficient list (the
    // flipped value is still in the allowed set, so membership alone would
    // pass — the re-run residual comparison is what catches it).
    println!();
    let tampered = json.replacen(
        "\"coefficients\":[\"1\",\"-64/61\"]",
        "\"coefficients\":[\"1\",\"64/61\"]",
        1,
    );
    if tampered != json {
        match PolynomialCertificate::from_json_str(&tampered).map(|c| verify_certificate(&c).map(|_| ())) {
            Ok(Ok(())) => {
                eprintln!("BUG: tampered certificate was accepted");
                return ExitCode::from(1);
            }
            Ok(Err(e)) => println!("tampered copy rejected as expected: {e}"),
            Err(e) => println!("tampered copy rejected at parse as expected: {e}"),
        }
    }
    ExitCode::SUCCESS
}
