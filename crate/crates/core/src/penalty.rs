//! Penalty functions `pen(n, r)` and cutoff functions `kappa(n)`.
//!
//! `n` is taken as `f64` so that exact values such as `e^2` can be used in
//! checks; callers with integer lengths convert with `as f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest sample length accepted by any penalty or cutoff.
pub const MIN_LENGTH: f64 = 3.0;

/// Added before flooring so that `floor(alpha * ln(e^3))` is 3, not 2.
const FLOOR_SLACK: f64 = 1e-9;

/// Multiplier `f(n)` in `f(n) * m^r * ln ln n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Multiplier {
    Constant {
        value: f64,
    },
    /// `1 / ln n`; vanishes, so it does not give a consistent estimator.
    InverseLog,
    /// `scale * ln n / ln ln n`.
    LogOverLogLog {
        scale: f64,
    },
}

impl Multiplier {
    pub fn eval(&self, n: f64) -> f64 {
        match *self {
            Multiplier::Constant { value } => value,
            Multiplier::InverseLog => 1.0 / n.ln(),
            Multiplier::LogOverLogLog { scale } => scale * n.ln() / n.ln().ln(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySpec {
    /// `c * m^r * ln ln n`.
    LogLog { c: f64 },
    /// `f(n) * m^r * ln ln n`.
    LogLogF { f: Multiplier },
    /// `(m - 1) * m^r * ln n / 2`.
    Bic,
    /// `c * m^r * ln n`.
    CsiszarLogN { c: f64 },
    /// Per-order values, independent of `n`.
    Custom { table: Vec<f64> },
}

impl PenaltySpec {
    /// `LogLog` with `c = 2m + 1`, the smallest integer above `2m`.
    pub fn default_loglog(m: usize) -> Self {
        PenaltySpec::LogLog { c: (2 * m + 1) as f64 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        match self {
            PenaltySpec::LogLog { c } | PenaltySpec::CsiszarLogN { c } if !(*c > 0.0 && c.is_finite()) => {
                bad("penalty constant must be positive and finite")
            }
            PenaltySpec::LogLogF { f: Multiplier::Constant { value } } if !(*value > 0.0 && value.is_finite()) => {
                bad("penalty multiplier must be positive")
            }
            PenaltySpec::LogLogF { f: Multiplier::LogOverLogLog { scale } } if !(*scale > 0.0 && scale.is_finite()) => {
                bad("penalty multiplier scale must be positive")
            }
            PenaltySpec::Custom { table } if table.iter().any(|v| !(*v >= 0.0 && v.is_finite())) => {
                bad("custom penalty entries must be nonnegative and finite")
            }
            _ => Ok(()),
        }
    }

    /// Short label used in CSV output.
    pub fn label(&self) -> String {
        match self {
            PenaltySpec::LogLog { c } => format!("loglog(c={c})"),
            PenaltySpec::LogLogF { f } => match f {
                Multiplier::Constant { value } => format!("loglog_f(const={value})"),
                Multiplier::InverseLog => "loglog_f(1/log n)".to_string(),
                Multiplier::LogOverLogLog { scale } => format!("loglog_f({scale}*log n/loglog n)"),
            },
            PenaltySpec::Bic => "bic".to_string(),
            PenaltySpec::CsiszarLogN { c } => format!("csiszar(c={c})"),
            PenaltySpec::Custom { .. } => "custom".to_string(),
        }
    }

    /// The multiplier `f(n)` when the penalty is written as `f(n) m^r ln ln n`.
    pub fn loglog_multiplier(&self, n: f64, m: usize) -> Option<f64> {
        let lln = n.ln().ln();
        match self {
            PenaltySpec::LogLog { c } => Some(*c),
            PenaltySpec::LogLogF { f } => Some(f.eval(n)),
            PenaltySpec::Bic => Some((m - 1) as f64 * n.ln() / (2.0 * lln)),
            PenaltySpec::CsiszarLogN { c } => Some(c * n.ln() / lln),
            PenaltySpec::Custom { .. } => None,
        }
    }
}

fn check_length(n: f64) -> Result<()> {
    if n.is_nan() || n < MIN_LENGTH {
        return Err(Error::SampleTooSmall { n, min: MIN_LENGTH });
    }
    Ok(())
}

pub fn penalty_value(spec: &PenaltySpec, n: f64, r: usize, m: usize) -> Result<f64> {
    check_length(n)?;
    if m < 2 {
        return Err(Error::AlphabetTooSmall(m));
    }
    let width = (m as f64).powi(r as i32);
    let lln = n.ln().ln();
    Ok(match spec {
        PenaltySpec::LogLog { c } => c * width * lln,
        PenaltySpec::LogLogF { f } => f.eval(n) * width * lln,
        PenaltySpec::Bic => 0.5 * width * (m - 1) as f64 * n.ln(),
        PenaltySpec::CsiszarLogN { c } => c * width * n.ln(),
        PenaltySpec::Custom { table } => *table
            .get(r)
            .ok_or_else(|| Error::InvalidParameter(format!("custom penalty has no entry for order {r}")))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CutoffRule {
    ConstantK {
        k: usize,
    },
    /// `floor(alpha * ln n)`.
    AlphaLogN {
        alpha: f64,
    },
    /// `ceil(x / ln x)` with `x = max(ln n, e)`.
    SubLogN,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    #[serde(flatten)]
    pub rule: CutoffRule,
    /// Also bound by `floor(ln n / ln m)`.
    #[serde(default = "default_true")]
    pub hard_cap: bool,
}

fn default_true() -> bool {
    true
}

impl CutoffSpec {
    pub fn new(rule: CutoffRule) -> Self {
        CutoffSpec { rule, hard_cap: true }
    }

    pub fn sub_log() -> Self {
        Self::new(CutoffRule::SubLogN)
    }

    /// `AlphaLogN` with `alpha = 0.2 / ln m`.
    pub fn default_alpha(m: usize) -> Self {
        Self::new(CutoffRule::AlphaLogN { alpha: 0.2 / (m as f64).ln() })
    }

    pub fn label(&self) -> String {
        let base = match &self.rule {
            CutoffRule::ConstantK { k } => format!("const({k})"),
            CutoffRule::AlphaLogN { alpha } => format!("alpha_log(alpha={alpha})"),
            CutoffRule::SubLogN => "sub_log".to_string(),
        };
        if self.hard_cap {
            base
        } else {
            format!("{base},uncapped")
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.rule {
            CutoffRule::AlphaLogN { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::InvalidParameter("cutoff alpha must be positive and finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Number of candidate orders at length `n`; orders `0..kappa` are searched.
pub fn cutoff_value(spec: &CutoffSpec, n: f64, m: usize) -> Result<usize> {
    check_length(n)?;
    if m < 2 {
        return Err(Error::AlphabetTooSmall(m));
    }
    let ln = n.ln();
    let raw = match spec.rule {
        CutoffRule::ConstantK { k } => k,
        CutoffRule::AlphaLogN { alpha } => (alpha * ln + FLOOR_SLACK).floor() as usize,
        CutoffRule::SubLogN => {
            let x = ln.max(std::f64::consts::E);
            (x / x.ln() - FLOOR_SLACK).ceil() as usize
        }
    };
    let capped = if spec.hard_cap { raw.min((ln / (m as f64).ln() + FLOOR_SLACK).floor() as usize) } else { raw };
    Ok(capped.max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionsReport {
    /// `f(n) >= C*` on the upper half of the grid.
    pub multiplier_above_c_star: bool,
    /// `f(n) ln ln n / n` is nonincreasing on the grid and below `1e-3` at its end.
    pub vanishing_ratio: bool,
    pub cutoff_nondecreasing: bool,
    /// `kappa(n) <= alpha* ln n` on the upper half of the grid.
    pub cutoff_below_alpha_log: bool,
    pub all_pass: bool,
    pub multipliers: Vec<f64>,
    pub ratios: Vec<f64>,
    pub cutoffs: Vec<usize>,
}

/// Numerical check of the sufficient conditions for consistency on a finite
/// grid. Conditions that hold "eventually" are evaluated on the upper half.
pub fn corollary_conditions_check(
    pen: &PenaltySpec,
    cut: &CutoffSpec,
    c_star: f64,
    alpha_star: f64,
    n_grid: &[f64],
    m: usize,
) -> Result<ConditionsReport> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("n grid must be nonempty and increasing".into()));
    }
    let multipliers = n_grid
        .iter()
        .map(|&n| {
            check_length(n)?;
            pen.loglog_multiplier(n, m)
                .ok_or_else(|| Error::InvalidParameter("custom penalties have no multiplier form".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = n_grid.iter().zip(&multipliers).map(|(&n, f)| f * n.ln().ln() / n).collect();
    let cutoffs = n_grid.iter().map(|&n| cutoff_value(cut, n, m)).collect::<Result<Vec<_>>>()?;

    let tail = n_grid.len() / 2;
    let multiplier_above_c_star = multipliers[tail..].iter().all(|&f| f >= c_star);
    let vanishing_ratio = ratios.windows(2).all(|w| w[1] <= w[0]) && *ratios.last().unwrap() < 1e-3;
    let cutoff_nondecreasing = cutoffs.windows(2).all(|w| w[1] >= w[0]);
    let cutoff_below_alpha_log =
        n_grid[tail..].iter().zip(&cutoffs[tail..]).all(|(&n, &k)| k as f64 <= alpha_star * n.ln());
    Ok(ConditionsReport {
        multiplier_above_c_star,
        vanishing_ratio,
        cutoff_nondecreasing,
        cutoff_below_alpha_log,
        all_pass: multiplier_above_c_star && vanishing_ratio && cutoff_nondecreasing && cutoff_below_alpha_log,
        multipliers,
        ratios,
        cutoffs,
    })
}
