//! Temporary diagnostic: run the real littlewood r=2 pipeline and track the
//! renormalized partial sums W̄_j(m) = (L+m)·x_j^{−m}·Q_m(x_j) in high-
//! precision fixed point, printing the step where they stop being O(1).

use newman_roots::coeff_model::CoefficientModel;
use newman_roots::newman::{compute_decomposition, verify_decomposition, DecompositionError};
use newman_roots::params::{select_parameters, target_points, Overrides};
use newman_roots::trap::{run, TrapConfig};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

const FRAC: u32 = 10752;

fn to_f(a: &BigInt) -> f64 {
    BigRational::new(a.clone(), BigInt::one() << FRAC)
        .to_f64()
        .unwrap_or(f64::NAN)
}

fn main() {
    let model = CoefficientModel::littlewood();
    let params = select_parameters(&model, 2, &Overrides::default()).unwrap();
    let targets = target_points(&params).unwrap();
    eprintln!(
        "n={} L={} s={} mu={} targets={:?}",
        params.n,
        params.l_offset,
        params.s,
        params.mu,
        targets.points.iter().map(|x| x.to_f64().unwrap()).collect::<Vec<_>>()
    );
    let dec = match compute_decomposition(&params, &targets) {
        Ok(d) => d,
        Err(DecompositionError::DeltaExceeded { decomposition, .. }) => *decomposition,
        Err(e) => panic!("decomposition failed: {e}"),
    };
    verify_decomposition(&dec, &targets).expect("residual in budget");
    eprintln!("decomposition done");

    let config = TrapConfig {
        trace_capacity: 1024,
        ..TrapConfig::default()
    };
    let outcome = run(&params, &dec, &config).expect("trap run");
    eprintln!(
        "trap done: max|psi|={:.4} clean={}",
        outcome.stats.max_abs_psi(params.bits),
        outcome.stats.clean()
    );

    let n = params.n;
    let l = params.l_offset;
    let one = BigInt::one() << FRAC;
    let div_int = |a: &BigInt, d: u64| -> BigInt {
        use num_integer::Integer;
        a.div_floor(&BigInt::from(d))
    };
    let mul = |a: &BigInt, b: &BigInt| -> BigInt { (a * b) >> FRAC };

    let x_hat: Vec<BigInt> = targets
        .points
        .iter()
        .map(|x| {
            use num_integer::Integer;
            (x.numer() << FRAC).div_floor(x.denom())
        })
        .collect();
    let mut q_hat: Vec<BigInt> = x_hat.iter().map(|_| div_int(&one, l)).collect();
    let mut xpow: Vec<BigInt> = x_hat.iter().map(|_| one.clone()).collect();

    let stride = 16384u64;
    for m in 0..n {
        let eps = outcome.eps.value(m + 1);
        let sgn = if eps.is_positive() {
            1
        } else if eps.is_zero() {
            0
        } else {
            -1
        };
        for j in 0..x_hat.len() {
            xpow[j] = mul(&xpow[j], &x_hat[j]);
            if sgn != 0 {
                // all built-in families have |eps| = 1 when nonzero except
                // custom; use the exact rational scale when not ±1
                let term = if eps.numer().magnitude() == eps.denom().magnitude() {
                    div_int(&xpow[j], l + m + 1)
                } else {
                    use num_integer::Integer;
                    (&xpow[j] * eps.numer()).div_floor(&(eps.denom() * BigInt::from(l + m + 1)))
                };
                if sgn > 0 {
                    q_hat[j] += term;
                } else {
                    q_hat[j] -= term;
                }
            }
        }
        if (m + 1) % stride == 0 || m + 1 == n {
            let mut line = format!("m={:>7}", m + 1);
            for j in 0..x_hat.len() {
                let w = ((&q_hat[j] << FRAC) / &xpow[j]) * BigInt::from(l + m + 1);
                let lg = w.magnitude().bits() as f64 - FRAC as f64;
                let sgn = if w.sign() == num_bigint::Sign::Minus { '-' } else { '+' };
                line.push_str(&format!(" log2|W{}|={}{:>9.1}", j, sgn, lg));
            }
            println!("{line}");
        }
    }
    for (j, q) in q_hat.iter().enumerate() {
        println!("final Q(x_{j}) = {:.6e}", to_f(q));
    }

    // Verify-side evaluation of the same run, for comparison.
    use newman_roots::verify::{assemble_polynomial, check_q_smallness};
    let mut cert = assemble_polynomial(&params, &targets, &outcome.eps).unwrap();
    match check_q_smallness(&mut cert) {
        Ok(rep) => {
            for m in &rep.margins {
                println!("verify margin target {}: value {:.6e}", m.target_index, m.value.to_f64());
            }
        }
        Err(e) => {
            println!("verify-side check failed: {e}");
            for m in &cert.q_margins {
                println!("verify margin target {}: value {:.6e}  passed={}", m.target_index, m.value.to_f64(), m.passed);
            }
        }
    }
}
