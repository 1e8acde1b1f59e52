//! Coefficient families: periodic menus of allowed coefficients with an
//! exact balance witness.
//!
//! A family assigns to every coefficient index k ≥ 1 a finite set
//! E_k ⊂ ℚ of allowed values, periodic with period d: E_k = sets[(k−1) mod d].
//! The family is *balanced* with witness (M, a), a > 0, when every window of
//! M consecutive indices can push its sum at least a below zero and at least
//! a above zero:
//!
//! ```text
//!   Σ_{k=t+1}^{t+M} min E_k ≤ −a   and   Σ_{k=t+1}^{t+M} max E_k ≥ a
//! ```
//!
//! for every offset t. Balance is the exact property the controller needs to
//! steer partial sums back into a bounded window within M steps, no matter
//! where in the period it currently stands. All arithmetic here is exact
//! rational; nothing in this module rounds.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::path::Path;

/// Errors arising from family validation or construction.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    /// A window starting after `offset` cannot reach −a (lower) or +a (upper).
    #[error("family is not balanced at offset {offset}: {} window sum misses the margin", if *.lower { "minimal" } else { "maximal" })]
    NotBalanced { offset: usize, lower: bool },
    /// An allowed coefficient exceeds the declared magnitude bound.
    #[error("allowed coefficient {element} at set index {index} exceeds the magnitude bound")]
    BoundViolated { index: usize, element: BigRational },
    /// No window length M ≤ 2·period admits a positive margin.
    #[error("family admits no balance witness with window length ≤ {max_window}")]
    NotBalanceable { max_window: usize },
    /// Structural defects in the set list.
    #[error("coefficient set {index} is empty")]
    EmptySet { index: usize },
    #[error("period {period} does not match the number of sets {count}")]
    PeriodMismatch { period: usize, count: usize },
    #[error("period must be at least 1")]
    ZeroPeriod,
    #[error("magnitude bound must be positive, got {0}")]
    NonPositiveBound(BigRational),
    #[error("balance margin must be positive, got {0}")]
    NonPositiveMargin(BigRational),
    #[error("balance window must be at least 1")]
    ZeroWindow,
    /// File-level problems for model files.
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot parse rational {text:?} in set {index}")]
    BadRational { index: usize, text: String },
}

/// A periodic family of allowed-coefficient sets with its balance witness.
///
/// Invariants (enforced by every constructor):
/// * `sets.len() == period ≥ 1`, every set nonempty, sorted, duplicate-free;
/// * every element `e` satisfies `|e| ≤ abs_bound`;
/// * `(balance_window, balance_margin)` is a valid balance witness at every
///   offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientModel {
    period: usize,
    sets: Vec<Vec<BigRational>>,
    abs_bound: BigRational,
    balance_window: u32,
    balance_margin: BigRational,
    /// Short name when this is a built-in family ("littlewood", …).
    name: Option<String>,
}

fn big(i: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(i))
}

impl CoefficientModel {
    /// Builds a model from explicit data and validates every invariant.
    pub fn new(
        period: usize,
        sets: Vec<Vec<BigRational>>,
        abs_bound: BigRational,
        balance_window: u32,
        balance_margin: BigRational,
    ) -> Result<Self, ModelError> {
        let mut model = CoefficientModel {
            period,
            sets,
            abs_bound,
            balance_window,
            balance_margin,
            name: None,
        };
        model.normalize_sets()?;
        model.validate()?;
        Ok(model)
    }

    /// Builds a model from the sets alone, deriving the magnitude bound and
    /// the balance witness (smallest window, then largest margin).
    pub fn from_sets(period: usize, sets: Vec<Vec<BigRational>>) -> Result<Self, ModelError> {
        if period == 0 {
            return Err(ModelError::ZeroPeriod);
        }
        if sets.len() != period {
            return Err(ModelError::PeriodMismatch {
                period,
                count: sets.len(),
            });
        }
        let mut sorted = sets;
        let mut model_abs = BigRational::zero();
        for (index, set) in sorted.iter_mut().enumerate() {
            if set.is_empty() {
                return Err(ModelError::EmptySet { index });
            }
            set.sort();
            set.dedup();
            for e in set.iter() {
                if e.abs() > model_abs {
                    model_abs = e.abs();
                }
            }
        }
        if model_abs.is_zero() {
            // All-zero sets can never be balanced.
            return Err(ModelError::NotBalanceable {
                max_window: 2 * period,
            });
        }
        let (window, margin) = balanced_parameters(period, &sorted)?;
        CoefficientModel::new(period, sorted, model_abs, window, margin)
    }

    /// The ±1 family: every coefficient is −1 or +1.
    pub fn littlewood() -> Self {
        let mut m = CoefficientModel::from_sets(1, vec![vec![big(-1), big(1)]])
            .expect("built-in family is balanced");
        m.name = Some("littlewood".into());
        m
    }

    /// The alternating 0/±1 family: E_k = {0, (−1)^k}, i.e. odd indices may
    /// use {−1, 0} and even indices {0, 1}.
    pub fn newman() -> Self {
        let mut m = CoefficientModel::from_sets(2, vec![vec![big(-1), big(0)], vec![big(0), big(1)]])
            .expect("built-in family is balanced");
        m.name = Some("newman".into());
        m
    }

    /// The height-one family: every coefficient is −1, 0, or +1.
    pub fn height1() -> Self {
        let mut m = CoefficientModel::from_sets(1, vec![vec![big(-1), big(0), big(1)]])
            .expect("built-in family is balanced");
        m.name = Some("height1".into());
        m
    }

    /// Looks up a built-in family by name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "littlewood" => Some(Self::littlewood()),
            "newman" => Some(Self::newman()),
            "height1" => Some(Self::height1()),
            _ => None,
        }
    }

    /// Reads a model file `{"period": d, "sets": [["p/q", …], …]}` and
    /// derives bound and witness from the sets.
    pub fn from_json_file(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        let raw: RawModelFile = serde_json::from_str(&text)?;
        let mut sets = Vec::with_capacity(raw.sets.len());
        for (index, raw_set) in raw.sets.iter().enumerate() {
            let mut set = Vec::with_capacity(raw_set.len());
            for text in raw_set {
                let e: BigRational =
                    text.trim()
                        .parse()
                        .map_err(|_| ModelError::BadRational {
                            index,
                            text: text.clone(),
                        })?;
                set.push(e);
            }
            sets.push(set);
        }
        CoefficientModel::from_sets(raw.period, sets)
    }

    fn normalize_sets(&mut self) -> Result<(), ModelError> {
        if self.period == 0 {
            return Err(ModelError::ZeroPeriod);
        }
        if self.sets.len() != self.period {
            return Err(ModelError::PeriodMismatch {
                period: self.period,
                count: self.sets.len(),
            });
        }
        for (index, set) in self.sets.iter_mut().enumerate() {
            if set.is_empty() {
                return Err(ModelError::EmptySet { index });
            }
            set.sort();
            set.dedup();
        }
        Ok(())
    }

    /// Checks every invariant: positivity of bound/margin, magnitude bound on
    /// every element, and the balance inequalities at every offset.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.abs_bound.is_positive() {
            return Err(ModelError::NonPositiveBound(self.abs_bound.clone()));
        }
        if !self.balance_margin.is_positive() {
            return Err(ModelError::NonPositiveMargin(self.balance_margin.clone()));
        }
        if self.balance_window == 0 {
            return Err(ModelError::ZeroWindow);
        }
        for (index, set) in self.sets.iter().enumerate() {
            for e in set {
                if e.abs() > self.abs_bound {
                    return Err(ModelError::BoundViolated {
                        index,
                        element: e.clone(),
                    });
                }
            }
        }
        let m = self.balance_window as usize;
        for offset in 0..self.period {
            let mut min_sum = BigRational::zero();
            let mut max_sum = BigRational::zero();
            for k in 1..=m {
                let set = &self.sets[(offset + k - 1) % self.period];
                min_sum += set.first().expect("nonempty");
                max_sum += set.last().expect("nonempty");
            }
            if min_sum > -self.balance_margin.clone() {
                return Err(ModelError::NotBalanced {
                    offset,
                    lower: true,
                });
            }
            if max_sum < self.balance_margin {
                return Err(ModelError::NotBalanced {
                    offset,
                    lower: false,
                });
            }
        }
        Ok(())
    }

    /// The allowed set for 1-based coefficient index k (periodic).
    pub fn allowed(&self, k: u64) -> &[BigRational] {
        debug_assert!(k >= 1);
        &self.sets[((k - 1) % self.period as u64) as usize]
    }

    /// Smallest allowed value at index k (sets are sorted).
    pub fn min_at(&self, k: u64) -> &BigRational {
        self.allowed(k).first().expect("nonempty")
    }

    /// Largest allowed value at index k.
    pub fn max_at(&self, k: u64) -> &BigRational {
        self.allowed(k).last().expect("nonempty")
    }

    /// True when `value` is one of the allowed coefficients at index k.
    pub fn is_allowed(&self, k: u64, value: &BigRational) -> bool {
        self.allowed(k).binary_search(value).is_ok()
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn sets(&self) -> &[Vec<BigRational>] {
        &self.sets
    }

    /// A — the magnitude bound on every allowed coefficient.
    pub fn abs_bound(&self) -> &BigRational {
        &self.abs_bound
    }

    /// M — the balance window length.
    pub fn balance_window(&self) -> u32 {
        self.balance_window
    }

    /// a — the balance margin.
    pub fn balance_margin(&self) -> &BigRational {
        &self.balance_margin
    }

    /// Built-in family name, if this model is one.
    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }
}

impl fmt::Display for CoefficientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(n) => write!(f, "{n}"),
            None => write!(f, "custom(period {})", self.period),
        }
    }
}

/// Finds the balance witness: the smallest window length M ≤ 2·period that
/// admits a positive margin, together with the largest exact margin a for
/// that M. The margin for a fixed M is
///
/// ```text
///   a(M) = min over offsets t of min( −Σ min E_{t+k},  Σ max E_{t+k} )
/// ```
///
/// and the witness is valid iff a(M) > 0. Searching beyond 2·period is
/// pointless: window sums over M ≥ period repeat their fractional behaviour
/// with period `period`, so if no M ≤ 2·period works, adding whole periods
/// only adds the same (nonnegative-min / nonpositive-max) full-period sums.
pub fn balanced_parameters(
    period: usize,
    sets: &[Vec<BigRational>],
) -> Result<(u32, BigRational), ModelError> {
    if period == 0 {
        return Err(ModelError::ZeroPeriod);
    }
    if sets.len() != period {
        return Err(ModelError::PeriodMismatch {
            period,
            count: sets.len(),
        });
    }
    for (index, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return Err(ModelError::EmptySet { index });
        }
        debug_assert!(set.windows(2).all(|w| w[0] < w[1]), "sets must be sorted");
    }
    let max_window = 2 * period;
    for m in 1..=max_window {
        let mut margin: Option<BigRational> = None;
        for offset in 0..period {
            let mut min_sum = BigRational::zero();
            let mut max_sum = BigRational::zero();
            for k in 0..m {
                let set = &sets[(offset + k) % period];
                min_sum += set.first().expect("nonempty");
                max_sum += set.last().expect("nonempty");
            }
            let here = (-min_sum).min(max_sum);
            margin = Some(match margin {
                None => here,
                Some(prev) => prev.min(here),
            });
        }
        let margin = margin.expect("period ≥ 1");
        if margin.is_positive() {
            return Ok((m as u32, margin));
        }
    }
    Err(ModelError::NotBalanceable { max_window })
}

#[derive(Serialize, Deserialize)]
struct RawModelFile {
    period: usize,
    sets: Vec<Vec<String>>,
}

/// Serialized form: rationals as "p/q" strings so the JSON is exact.
impl Serialize for CoefficientModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            #[serde(skip_serializing_if = "Option::is_none")]
            name: Option<&'a str>,
            period: usize,
            sets: Vec<Vec<String>>,
            abs_bound: String,
            balance_window: u32,
            balance_margin: String,
        }
        Wire {
            name: self.name.as_deref(),
            period: self.period,
            sets: self
                .sets
                .iter()
                .map(|s| s.iter().map(|e| e.to_string()).collect())
                .collect(),
            abs_bound: self.abs_bound.to_string(),
            balance_window: self.balance_window,
            balance_margin: self.balance_margin.to_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoefficientModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            #[serde(default)]
            name: Option<String>,
            period: usize,
            sets: Vec<Vec<String>>,
            abs_bound: String,
            balance_window: u32,
            balance_margin: String,
        }
        let wire = Wire::deserialize(deserializer)?;
        let parse = |t: &str| -> Result<BigRational, D::Error> {
            t.trim()
                .parse()
                .map_err(|_| D::Error::custom(format!("bad rational {t:?}")))
        };
        let mut sets = Vec::with_capacity(wire.sets.len());
        for s in &wire.sets {
            let mut set = Vec::with_capacity(s.len());
            for t in s {
                set.push(parse(t)?);
            }
            sets.push(set);
        }
        let mut model = CoefficientModel::new(
            wire.period,
            sets,
            parse(&wire.abs_bound)?,
            wire.balance_window,
            parse(&wire.balance_margin)?,
        )
        .map_err(D::Error::custom)?;
        model.name = wire.name;
        Ok(model)
    }
}
