//! Defining a custom periodic coefficient family and checking what the
//! library derives for it: the balance witness (window and margin), the
//! coefficient bound A, parameter selection, and the converse root-count
//! cap — everything short of the multi-minute construction itself.
//!
//!     cargo run --example custom_family

use newman_roots::bounds::upper_bound;
use newman_roots::coeff_model::CoefficientModel;
use newman_roots::params::{select_parameters, Overrides};
use num_bigint::BigInt;
use num_rational::BigRational;

fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

fn main() {
    // Period 3: a Littlewood slot, a half-height slot, a sparse slot.
    // Any window of 3 consecutive indices can push the running sum both
    // ways, so the family balances with window ≤ 3.
    let sets = vec![
        vec![rat(-1, 1), rat(1, 1)],
        vec![rat(-1, 2), rat(1, 2)],
        vec![rat(0, 1), rat(1, 1)],
    ];
    let model = CoefficientModel::from_sets(3, sets).expect("family must balance");
    println!(
        "custom family: period {}, |ε| ≤ {}, balance window {} with margin {}",
        model.period(),
        model.abs_bound(),
        model.balance_window(),
        model.balance_margin()
    );

    // The serialized form is exact (rationals as strings) and re-validates
    // on parse, so a model file can be shipped next to its certificates.
    let wire = serde_json::to_string_pretty(&model).expect("model serializes");
    println!("\nserialized model:\n{wire}\n");
    let back: CoefficientModel = serde_json::from_str(&wire).expect("reparses");
    assert_eq!(back, model);

    // What would a run at r = 2 look like? Parameter selection is cheap;
    // only the construction itself is expensive.
    let params = select_parameters(&model, 2, &Overrides::default()).expect("feasible");
    println!(
        "selected parameters for r = 2: s = {}, η = {}, α = {}, L = {}, n = {}, B = {}, N = {}",
        params.s, params.eta, params.alpha, params.l_offset, params.n, params.bits, params.fft_size
    );
    println!(
        "degree grows quadratically with the root count; the converse cap at this degree is {} roots",
        upper_bound(params.n, model.abs_bound())
    );

    // A family that can only push one way can never balance, and the
    // derivation says so instead of guessing a window.
    let onesided = CoefficientModel::from_sets(1, vec![vec![rat(1, 1)]]);
    println!("\none-sided family: {}", onesided.unwrap_err());
}
