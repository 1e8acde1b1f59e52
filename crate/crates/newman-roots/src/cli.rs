//! Command-line front end: orchestrates the construction pipeline with its
//! retry policy, and serializes certificates, traces, and CSV dumps.
//!
//! Subcommands:
//! - `construct` — build a polynomial and certify its roots (exit 0 iff the
//!   certificate carries at least the requested number of sign-change
//!   brackets);
//! - `verify` — re-check a certificate file from scratch;
//! - `bound` — print the root-count upper bound report as JSON;
//! - `decompose` — compute the weight decomposition and dump ν/U rows as CSV.
//!
//! Exit codes: 0 success, 2 validation/configuration, 3 decomposition,
//! 4 trap escape, 5 verification.
//!
//! Everything downstream of argument parsing lives in library functions
//! (`construct_pipeline`, `cmd_*`) so tests and examples drive the exact
//! code paths the binary does, in process.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use thiserror::Error;

use crate::bounds::{build_damping, upper_bound, BoundReport, BoundsError};
use crate::coeff_model::CoefficientModel;
use crate::newman::{compute_decomposition, verify_decomposition, write_csv, DecompositionError};
use crate::numeric::fixed::Fixed;
use crate::params::{select_parameters, target_points, BuildParameters, Overrides};
use crate::trap::{self, TrapConfig, TrapError, TrapStats, TraceRing};
use crate::verify::{
    assemble_polynomial, certify, check_q_smallness, verify_certificate, PolynomialCertificate,
    QReport,
};

/// Hard cap on the retry ladder; each retry halves η and doubles ℓ, and the
/// degree grows roughly sixteenfold per rung, so six is already generous.
pub const MAX_RETRIES: u32 = 6;

/// Where the coefficient family comes from.
#[derive(Debug, Clone)]
pub enum ModelSource {
    /// A built-in family: "littlewood", "newman", or "height1".
    Family(String),
    /// A JSON model description on disk.
    File(PathBuf),
    /// An already-constructed model (in-process callers).
    Inline(CoefficientModel),
}

/// One construction run: model source, target root count, parameter
/// overrides, retry/refinement policy, and output paths.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: ModelSource,
    /// Requested number of certified roots.
    pub r: u32,
    pub overrides: Overrides,
    /// Maximum bisection depth while hunting sign-change brackets.
    pub d_max: u32,
    /// Retry-ladder length for trap escapes (and δ misses under strict δ).
    pub retries: u32,
    /// Treat a δ miss in the weight-sum bound as a retriable failure
    /// instead of recording it and proceeding.
    pub strict_delta: bool,
    /// Trace retention and checking cadence for the dynamics.
    pub trap: TrapConfig,
    /// Certificate JSON output path.
    pub out: Option<PathBuf>,
    /// Step-trace CSV output path (what the trace ring retained).
    pub trace_out: Option<PathBuf>,
    /// Row stride for the trace dump.
    pub trace_stride: u64,
    /// Coefficient CSV output path.
    pub coeffs_out: Option<PathBuf>,
    /// Weight/suffix-bound CSV output path (ν_k, U_k rows).
    pub nu_out: Option<PathBuf>,
}

impl RunConfig {
    /// A default-policy run for a built-in family.
    pub fn family(name: &str, r: u32) -> RunConfig {
        RunConfig::new(ModelSource::Family(name.to_string()), r)
    }

    /// A default-policy run for an in-process model.
    pub fn inline(model: CoefficientModel, r: u32) -> RunConfig {
        RunConfig::new(ModelSource::Inline(model), r)
    }

    pub fn new(source: ModelSource, r: u32) -> RunConfig {
        RunConfig {
            source,
            r,
            overrides: Overrides::default(),
            d_max: 64,
            retries: MAX_RETRIES,
            strict_delta: false,
            trap: TrapConfig::default(),
            out: None,
            trace_out: None,
            trace_stride: 1,
            coeffs_out: None,
            nu_out: None,
        }
    }
}

/// Stage-tagged pipeline failure; the tag fixes the process exit code.
#[derive(Debug, Error)]
pub enum StageError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("decomposition: {0}")]
    Decomposition(String),
    #[error("trap escape: {0}")]
    TrapEscape(String),
    #[error("verification: {0}")]
    Verification(String),
    #[error("io: {0}")]
    Io(String),
}

impl StageError {
    pub fn exit_code(&self) -> u8 {
        match self {
            StageError::Validation(_) | StageError::Io(_) => 2,
            StageError::Decomposition(_) => 3,
            StageError::TrapEscape(_) => 4,
            StageError::Verification(_) => 5,
        }
    }
}

/// Everything a successful construction produced besides the certificate:
/// the final parameter set, decomposition quality numbers, exact dynamics
/// statistics, the retained trace, residual margins, and the root-count cap.
pub struct RunArtifacts {
    pub params: BuildParameters,
    /// 1-based index of the attempt that succeeded.
    pub attempts: u32,
    /// Worst identity residual max_j |x_j^{−1} − 1 − Σ ν_k μ^k x_j^k|.
    pub residual: Fixed,
    /// Certified bound on Σ|ν_k|.
    pub sum_bound: Fixed,
    /// Whether the δ quality gate held (recorded either way).
    pub delta_satisfied: bool,
    pub aliasing_bound: Fixed,
    pub max_im_coefficient: Fixed,
    pub trap_stats: TrapStats,
    pub trace: TraceRing,
    pub q_report: QReport,
    /// v(A)·⌈√n⌉, the converse cap the certificate is checked against.
    pub root_cap: u64,
}

pub struct ConstructOutcome {
    pub certificate: PolynomialCertificate,
    pub artifacts: RunArtifacts,
}

/// Resolves the model source: built-in family, JSON file (validated on
/// parse), or inline.
pub fn resolve_model(source: &ModelSource) -> Result<CoefficientModel, StageError> {
    match source {
        ModelSource::Family(name) => match name.to_ascii_lowercase().as_str() {
            "littlewood" => Ok(CoefficientModel::littlewood()),
            "newman" => Ok(CoefficientModel::newman()),
            "height1" | "height-1" | "height_1" => Ok(CoefficientModel::height1()),
            other => Err(StageError::Validation(format!(
                "unknown family {other:?}; built-ins are littlewood, newman, height1"
            ))),
        },
        ModelSource::File(path) => CoefficientModel::from_json_file(path)
            .map_err(|e| StageError::Validation(format!("model {}: {e}", path.display()))),
        ModelSource::Inline(model) => {
            model
                .validate()
                .map_err(|e| StageError::Validation(e.to_string()))?;
            Ok(model.clone())
        }
    }
}

fn fmt_fixed(f: &Fixed) -> String {
    format!("{:.3e}", f.to_f64())
}

/// Runs the whole pipeline in process: validate → parameters → targets →
/// decomposition (+ identity check) → dynamics → assembly → residual
/// smallness → bracket certification → converse-cap consistency.
///
/// The retry ladder (halve η, double ℓ, recompute everything) is applied on
/// trap escapes, and on δ misses only under `strict_delta`; by default a δ
/// miss is recorded in the artifacts and the run proceeds — the weight-sum
/// gate is a quality target, not a soundness requirement, and the sharp
/// families miss it at every feasible η while still certifying their roots.
pub fn construct_pipeline(config: &RunConfig) -> Result<ConstructOutcome, StageError> {
    let model = resolve_model(&config.source)?;
    let family = model.name().unwrap_or("custom");
    eprintln!(
        "[construct] model {family} (A = {}, period {})",
        model.abs_bound(),
        model.period()
    );

    let mut overrides = config.overrides.clone();
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        let params = select_parameters(&model, config.r, &overrides)
            .map_err(|e| StageError::Validation(e.to_string()))?;
        eprintln!(
            "[construct] attempt {attempt}: s = {}, η = {}, α = {}, L = {}, n = {}, B = {}, N = {}, ℓ = {}",
            params.s,
            params.eta,
            params.alpha,
            params.l_offset,
            params.n,
            params.bits,
            params.fft_size,
            params.g_degree
        );
        let targets =
            target_points(&params).map_err(|e| StageError::Validation(e.to_string()))?;

        let t0 = Instant::now();
        let (dec, delta_satisfied) = match compute_decomposition(&params, &targets) {
            Ok(dec) => (dec, true),
            Err(DecompositionError::DeltaExceeded {
                sum_bound,
                delta,
                decomposition,
            }) => {
                if config.strict_delta {
                    if attempt <= config.retries {
                        eprintln!(
                            "[construct] weight sum {sum_bound} ≥ δ = {delta}; retrying with η/2, 2ℓ"
                        );
                        halve_eta_double_ell(&mut overrides, &params);
                        continue;
                    }
                    return Err(StageError::Decomposition(format!(
                        "weight sum {sum_bound} ≥ δ = {delta} after {attempt} attempts"
                    )));
                }
                eprintln!(
                    "[construct] weight sum {sum_bound} ≥ δ = {delta}; recording the miss and proceeding"
                );
                (*decomposition, false)
            }
            Err(e) => return Err(StageError::Decomposition(e.to_string())),
        };
        let residual = verify_decomposition(&dec, &targets)
            .map_err(|e| StageError::Decomposition(e.to_string()))?;
        eprintln!(
            "[construct] decomposition in {:.1}s: Σ|ν| ≤ {}, residual ≤ {}, aliasing ≤ {}, max|Im ĉ| = {}",
            t0.elapsed().as_secs_f64(),
            fmt_fixed(&dec.sum_bound),
            fmt_fixed(&residual),
            fmt_fixed(&dec.aliasing_bound),
            fmt_fixed(&dec.max_im_coefficient),
        );

        if let Some(path) = &config.nu_out {
            write_with(path, |w| write_csv(&dec, w))?;
            eprintln!("[construct] wrote weight table {}", path.display());
        }

        let sum_bound = dec.sum_bound.clone();
        let aliasing_bound = dec.aliasing_bound.clone();
        let max_im_coefficient = dec.max_im_coefficient.clone();

        let t1 = Instant::now();
        let run = match trap::run(&params, &dec, &config.trap) {
            Ok(run) => run,
            Err(e @ TrapError::Escape { .. }) => {
                if attempt <= config.retries {
                    eprintln!("[construct] {e}; retrying with η/2, 2ℓ");
                    halve_eta_double_ell(&mut overrides, &params);
                    continue;
                }
                return Err(StageError::TrapEscape(format!(
                    "{e} (after {attempt} attempts)"
                )));
            }
            Err(e) => return Err(StageError::TrapEscape(e.to_string())),
        };
        drop(dec); // the weight table is large at scale; done with it
        let stats = run.stats;
        eprintln!(
            "[construct] dynamics in {:.1}s: {} steps, max |ψ| = {:.4}, escape margin ≥ {:.4}, \
             window gap ≤ {} (cap {}), ledger entries checked {} — {}",
            t1.elapsed().as_secs_f64(),
            stats.steps,
            stats.max_abs_psi(params.bits),
            stats.escape_margin_min_units as f64
                * stats.max_abs_psi(params.bits)
                / (stats.max_abs_psi_units.max(1) as f64),
            stats.max_window_gap,
            model.period(),
            stats.lambda_entries_checked,
            if stats.clean() { "clean" } else { "VIOLATIONS" },
        );
        if !stats.clean() {
            return Err(StageError::Verification(format!(
                "dynamics invariant violations: window {}, ledger {}, drift {}",
                stats.window_violations, stats.lambda_violations, stats.drift_violations
            )));
        }

        let mut certificate = assemble_polynomial(&params, &targets, &run.eps)
            .map_err(|e| StageError::Verification(e.to_string()))?;

        let t2 = Instant::now();
        let q_report = check_q_smallness(&mut certificate)
            .map_err(|e| StageError::Verification(e.to_string()))?;
        let min_margin = q_report
            .margins
            .iter()
            .map(|m| m.margin.to_f64())
            .fold(f64::INFINITY, f64::min);
        eprintln!(
            "[construct] residual margins in {:.1}s: all {} targets pass at {} fraction bits, min margin {:.3e}, analytic tail consistent = {}",
            t2.elapsed().as_secs_f64(),
            q_report.margins.len(),
            q_report.frac_bits,
            min_margin,
            q_report.analytic_consistent,
        );

        let t3 = Instant::now();
        certify(&mut certificate, config.d_max)
            .map_err(|e| StageError::Verification(e.to_string()))?;
        let root_cap = upper_bound(params.n, model.abs_bound());
        if certificate.root_count as u64 > root_cap {
            return Err(StageError::Verification(format!(
                "{} certified roots exceed the converse cap {root_cap}",
                certificate.root_count
            )));
        }
        eprintln!(
            "[construct] brackets in {:.1}s: {} sign changes (need {}), converse cap {}",
            t3.elapsed().as_secs_f64(),
            certificate.root_count,
            config.r,
            root_cap,
        );

        return Ok(ConstructOutcome {
            certificate,
            artifacts: RunArtifacts {
                params,
                attempts: attempt,
                residual,
                sum_bound,
                delta_satisfied,
                aliasing_bound,
                max_im_coefficient,
                trap_stats: stats,
                trace: run.trace,
                q_report,
                root_cap,
            },
        });
    }
}

/// The retry policy: halve the spread, double the damping degree, let
/// everything else re-derive.
fn halve_eta_double_ell(overrides: &mut Overrides, failed: &BuildParameters) {
    overrides.eta = Some(&failed.eta / BigRational::from_integer(2.into()));
    overrides.ell = Some(failed.g_degree * 2);
}

fn write_with<F>(path: &Path, body: F) -> Result<(), StageError>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
{
    let file = std::fs::File::create(path)
        .map_err(|e| StageError::Io(format!("creating {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    body(&mut w).map_err(|e| StageError::Io(format!("writing {}: {e}", path.display())))?;
    use std::io::Write;
    w.flush()
        .map_err(|e| StageError::Io(format!("writing {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Subcommand drivers (return process exit codes)
// ---------------------------------------------------------------------------

/// Full construction: pipeline + certificate/trace/coefficient dumps.
pub fn cmd_construct(config: &RunConfig) -> u8 {
    match construct_pipeline(config) {
        Ok(outcome) => {
            let cert = &outcome.certificate;
            let json = cert.to_json_string();
            if let Some(path) = &config.out {
                if let Err(e) = std::fs::write(path, json.as_bytes()) {
                    eprintln!("error: writing {}: {e}", path.display());
                    return 2;
                }
                println!(
                    "wrote {}: degree {}, root_count {} (requested {}), attempts {}",
                    path.display(),
                    cert.degree(),
                    cert.root_count,
                    config.r,
                    outcome.artifacts.attempts,
                );
            } else {
                println!("{json}");
            }
            if let Some(path) = &config.coeffs_out {
                if let Err(e) = write_with(path, |w| cert.write_coefficients_csv(w)) {
                    eprintln!("error: {e}");
                    return 2;
                }
                println!("wrote {}", path.display());
            }
            if let Some(path) = &config.trace_out {
                let stride = config.trace_stride.max(1);
                if let Err(e) =
                    write_with(path, |w| outcome.artifacts.trace.write_csv(w, stride))
                {
                    eprintln!("error: {e}");
                    return 2;
                }
                println!("wrote {}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Re-checks a certificate file from scratch; prints what it attests.
pub fn cmd_verify(path: &Path) -> u8 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading {}: {e}", path.display());
            return 2;
        }
    };
    let cert = match PolynomialCertificate::from_json_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: certificate rejected: {e}");
            return 5;
        }
    };
    match verify_certificate(&cert) {
        Ok(summary) => {
            println!(
                "certificate OK: {} certified roots of a degree-{} polynomial; residual margins re-checked at {} fraction bits (min margin {:.3e}, threshold {:.3e})",
                summary.root_count,
                cert.degree(),
                summary.q_frac_bits,
                summary.min_q_margin.to_f64(),
                rational_f64(&summary.threshold),
            );
            0
        }
        Err(e) => {
            eprintln!("error: certificate rejected: {e}");
            5
        }
    }
}

fn rational_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// Prints the upper-bound report for degree `n` and coefficient bound `A`.
pub fn cmd_bound(n: u64, coeff_bound: &BigRational) -> u8 {
    match build_damping(n, coeff_bound) {
        Ok(dp) => {
            let report = BoundReport::from_damping(&dp, coeff_bound);
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            0
        }
        Err(e @ BoundsError::SumCheckFailed { .. }) => {
            eprintln!("error: {e}");
            5
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Computes the weight decomposition only and dumps ν/U rows as CSV.
pub fn cmd_decompose(config: &RunConfig) -> u8 {
    let run = || -> Result<(), StageError> {
        let model = resolve_model(&config.source)?;
        let params = select_parameters(&model, config.r, &config.overrides)
            .map_err(|e| StageError::Validation(e.to_string()))?;
        let targets =
            target_points(&params).map_err(|e| StageError::Validation(e.to_string()))?;
        eprintln!(
            "[decompose] s = {}, η = {}, L = {}, n = {}, B = {}, N = {}",
            params.s, params.eta, params.l_offset, params.n, params.bits, params.fft_size
        );
        let (dec, delta_satisfied) = match compute_decomposition(&params, &targets) {
            Ok(dec) => (dec, true),
            Err(DecompositionError::DeltaExceeded {
                sum_bound,
                delta,
                decomposition,
            }) => {
                if config.strict_delta {
                    return Err(StageError::Decomposition(format!(
                        "weight sum {sum_bound} ≥ δ = {delta}"
                    )));
                }
                eprintln!("[decompose] weight sum {sum_bound} ≥ δ = {delta}; recording the miss");
                (*decomposition, false)
            }
            Err(e) => return Err(StageError::Decomposition(e.to_string())),
        };
        let residual = verify_decomposition(&dec, &targets)
            .map_err(|e| StageError::Decomposition(e.to_string()))?;
        let path = config
            .nu_out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from("decomposition.csv"));
        write_with(&path, |w| write_csv(&dec, w))?;
        println!(
            "wrote {}: {} weights, Σ|ν| ≤ {}, residual ≤ {}, δ satisfied = {}",
            path.display(),
            dec.nu.len(),
            fmt_fixed(&dec.sum_bound),
            fmt_fixed(&residual),
            delta_satisfied,
        );
        Ok(())
    };
    match run() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "newman-roots",
    version,
    about = "Constructs polynomials with restricted coefficients having many certified roots in [0,1]"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a polynomial and certify its roots
    Construct(ConstructArgs),
    /// Re-check a certificate file from scratch
    Verify {
        /// Certificate JSON path
        certificate: PathBuf,
    },
    /// Print the root-count upper bound report as JSON
    Bound {
        /// Polynomial degree
        n: u64,
        /// Coefficient bound A as a rational, e.g. "1" or "5/3"
        #[arg(long = "coeff-bound", default_value = "1")]
        coeff_bound: String,
    },
    /// Compute the weight decomposition and dump ν/U rows as CSV
    Decompose(DecomposeArgs),
}

#[derive(Args)]
struct FamilyArgs {
    /// Built-in family: littlewood, newman, or height1
    #[arg(long, conflicts_with = "model")]
    family: Option<String>,
    /// Path to a JSON coefficient-model description
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of roots to certify
    #[arg(long, default_value_t = 2)]
    roots: u32,
    /// Target spread η as a rational in (0, 1/3), e.g. "1/8"
    #[arg(long)]
    eta: Option<String>,
    /// Damping-factor degree ℓ
    #[arg(long)]
    ell: Option<u64>,
    /// Number of target points s (default 2·roots)
    #[arg(long)]
    s: Option<u32>,
    /// Fixed-point fraction bits B
    #[arg(long)]
    precision_bits: Option<u32>,
    /// Contour sample count N (power of two > n+1)
    #[arg(long)]
    fft_size: Option<u64>,
    /// Fail (and retry) when the weight sum misses δ instead of recording it
    #[arg(long)]
    strict_delta: bool,
}

impl FamilyArgs {
    fn to_config(&self) -> Result<RunConfig, StageError> {
        let source = match (&self.family, &self.model) {
            (Some(name), None) => ModelSource::Family(name.clone()),
            (None, Some(path)) => ModelSource::File(path.clone()),
            (None, None) => {
                return Err(StageError::Validation(
                    "one of --family or --model is required".into(),
                ))
            }
            (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
        };
        let mut config = RunConfig::new(source, self.roots);
        if let Some(eta) = &self.eta {
            let parsed: BigRational = eta.parse().map_err(|e| {
                StageError::Validation(format!("--eta {eta:?} is not a rational: {e}"))
            })?;
            config.overrides.eta = Some(parsed);
        }
        config.overrides.ell = self.ell;
        config.overrides.s = self.s;
        config.overrides.precision_bits = self.precision_bits;
        config.overrides.fft_size = self.fft_size;
        config.strict_delta = self.strict_delta;
        Ok(config)
    }
}

#[derive(Args)]
struct ConstructArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// Retry-ladder length (each rung halves η and doubles ℓ)
    #[arg(long, default_value_t = MAX_RETRIES)]
    retries: u32,
    /// Maximum bisection depth while hunting brackets
    #[arg(long, default_value_t = 64)]
    d_max: u32,
    /// Certificate JSON output path
    #[arg(long, default_value = "certificate.json")]
    out: PathBuf,
    /// Dump the retained step trace as CSV to this path
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Keep every k-th trace row
    #[arg(long, default_value_t = 1)]
    trace_stride: u64,
    /// Dump the coefficient sequence as CSV to this path
    #[arg(long)]
    coeffs_csv: Option<PathBuf>,
    /// Dump the weight table (ν_k, U_k rows) as CSV to this path
    #[arg(long)]
    nu_csv: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// CSV output path
    #[arg(long, default_value = "decomposition.csv")]
    out: PathBuf,
}

/// Binary entry point.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Construct(args) => match args.family.to_config() {
            Ok(mut config) => {
                config.retries = args.retries;
                config.d_max = args.d_max;
                config.out = Some(args.out);
                config.trace_out = args.trace;
                config.trace_stride = args.trace_stride;
                config.coeffs_out = args.coeffs_csv;
                config.nu_out = args.nu_csv;
                cmd_construct(&config)
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Cmd::Verify { certificate } => cmd_verify(&certificate),
        Cmd::Bound { n, coeff_bound } => match coeff_bound.parse::<BigRational>() {
            Ok(a) => cmd_bound(n, &a),
            Err(e) => {
                eprintln!("error: --coeff-bound {coeff_bound:?} is not a rational: {e}");
                2
            }
        },
        Cmd::Decompose(args) => match args.family.to_config() {
            Ok(mut config) => {
                config.out = Some(args.out);
                cmd_decompose(&config)
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::tests::{tiny_cert, window_root_model};
    use num_bigint::BigInt;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn builtin_families_resolve() {
        for name in ["littlewood", "newman", "height1", "LITTLEWOOD"] {
            resolve_model(&ModelSource::Family(name.into())).unwrap();
        }
        let err = resolve_model(&ModelSource::Family("fibonacci".into())).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn model_file_resolution_validates() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("pm.json");
        std::fs::write(&good, r#"{"period":1,"sets":[["1","-1"]]}"#).unwrap();
        let model = resolve_model(&ModelSource::File(good)).unwrap();
        assert_eq!(model.period(), 1);

        // A one-sided set can never balance: rejected at parse.
        let bad = dir.path().join("onesided.json");
        std::fs::write(&bad, r#"{"period":1,"sets":[["1"]]}"#).unwrap();
        let err = resolve_model(&ModelSource::File(bad)).unwrap_err();
        assert_eq!(err.exit_code(), 2);

        let missing = dir.path().join("absent.json");
        let err = resolve_model(&ModelSource::File(missing)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn exit_codes_track_stages() {
        assert_eq!(StageError::Validation("x".into()).exit_code(), 2);
        assert_eq!(StageError::Io("x".into()).exit_code(), 2);
        assert_eq!(StageError::Decomposition("x".into()).exit_code(), 3);
        assert_eq!(StageError::TrapEscape("x".into()).exit_code(), 4);
        assert_eq!(StageError::Verification("x".into()).exit_code(), 5);
    }

    #[test]
    fn bound_command_prints_contract_json() {
        assert_eq!(cmd_bound(16, &rat(1, 1)), 0);
        assert_eq!(cmd_bound(0, &rat(1, 1)), 2);
        assert_eq!(cmd_bound(16, &rat(-1, 1)), 2);
    }

    #[test]
    fn verify_command_roundtrips_a_certificate_file() {
        // A hand-checkable instance: P = 1 − (64/61)x with its root 61/64
        // between the two targets.
        let model = window_root_model();
        let values = vec![rat(-64, 61)];
        let mut cert = tiny_cert(model, &values, 1);
        check_q_smallness(&mut cert).unwrap();
        certify(&mut cert, 32).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cert.json");
        std::fs::write(&path, cert.to_json_string()).unwrap();
        assert_eq!(cmd_verify(&path), 0);

        // Tampering with a bracket endpoint sign must be caught.
        let tampered = cert
            .to_json_string()
            .replace("\"bracket_signs\":[[1,-1]]", "\"bracket_signs\":[[1,1]]");
        assert_ne!(tampered, cert.to_json_string());
        std::fs::write(&path, tampered).unwrap();
        assert_eq!(cmd_verify(&path), 5);

        std::fs::write(&path, "{ not json").unwrap();
        assert_eq!(cmd_verify(&path), 5);
        assert_eq!(cmd_verify(&dir.path().join("absent.json")), 2);
    }

    #[test]
    fn family_args_require_a_source() {
        let args = FamilyArgs {
            family: None,
            model: None,
            roots: 2,
            eta: None,
            ell: None,
            s: None,
            precision_bits: None,
            fft_size: None,
            strict_delta: false,
        };
        assert_eq!(args.to_config().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn eta_override_parses_rationals_only() {
        let mut args = FamilyArgs {
            family: Some("littlewood".into()),
            model: None,
            roots: 2,
            eta: Some("1/8".into()),
            ell: None,
            s: None,
            precision_bits: None,
            fft_size: None,
            strict_delta: false,
        };
        let config = args.to_config().unwrap();
        assert_eq!(config.overrides.eta, Some(rat(1, 8)));
        args.eta = Some("0.125".into());
        assert_eq!(args.to_config().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn cli_parses_construct_flags() {
        let cli = Cli::try_parse_from([
            "newman-roots",
            "construct",
            "--family",
            "littlewood",
            "--roots",
            "4",
            "--eta",
            "1/16",
            "--retries",
            "2",
            "--out",
            "c.json",
            "--trace",
            "t.csv",
        ])
        .unwrap();
        match cli.cmd {
            Cmd::Construct(args) => {
                assert_eq!(args.family.roots, 4);
                assert_eq!(args.retries, 2);
                assert_eq!(args.family.eta.as_deref(), Some("1/16"));
                assert_eq!(args.trace, Some(PathBuf::from("t.csv")));
            }
            _ => panic!("wrong subcommand"),
        }
        // --family and --model are mutually exclusive.
        assert!(Cli::try_parse_from([
            "newman-roots",
            "construct",
            "--family",
            "littlewood",
            "--model",
            "m.json",
        ])
        .is_err());
    }
}
