//! Resolve a smoothing rule, smooth the table and evaluate the measure.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::calculus::{default_alpha_max, optimal_alpha, OptimalAlpha};
use crate::error::{Error, Result};
use crate::measures::{measure_value, MeasureSpec, MeasureValue};
use crate::tables::{posterior_mean, CountTable, ProbTable};

/// How the Dirichlet smoothing parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    /// A fixed alpha; 0 is the sample proportions, 1/2 Jeffreys, 1 uniform.
    Fixed(f64),
    /// Plug-in minimiser of the measure estimator's leading MSE term.
    OptimalMeasureMse,
    /// Minimiser of the cell probabilities' total risk (Fienberg-Holland).
    FienbergHolland,
}

impl AlphaRule {
    pub const SAMPLE_PROPORTIONS: AlphaRule = AlphaRule::Fixed(0.0);
    pub const JEFFREYS: AlphaRule = AlphaRule::Fixed(0.5);
    pub const UNIFORM: AlphaRule = AlphaRule::Fixed(1.0);

    /// Sample proportions, Jeffreys, uniform, Fienberg-Holland, optimal.
    pub fn all() -> Vec<AlphaRule> {
        vec![
            AlphaRule::SAMPLE_PROPORTIONS,
            AlphaRule::JEFFREYS,
            AlphaRule::UNIFORM,
            AlphaRule::FienbergHolland,
            AlphaRule::OptimalMeasureMse,
        ]
    }
}

impl fmt::Display for AlphaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaRule::Fixed(a) => write!(f, "fixed:{a}"),
            AlphaRule::OptimalMeasureMse => f.write_str("optimal"),
            AlphaRule::FienbergHolland => f.write_str("fhm"),
        }
    }
}

impl FromStr for AlphaRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "optimal" => Ok(AlphaRule::OptimalMeasureMse),
            "fhm" | "fienberg-holland" => Ok(AlphaRule::FienbergHolland),
            "uniform" => Ok(AlphaRule::UNIFORM),
            "jeffreys" => Ok(AlphaRule::JEFFREYS),
            "plugin" | "sample" => Ok(AlphaRule::SAMPLE_PROPORTIONS),
            _ => {
                let value = s.strip_prefix("fixed:").ok_or_else(|| {
                    format!("unknown rule {s:?} (expected fixed:<alpha>, optimal or fhm)")
                })?;
                let alpha: f64 = value
                    .parse()
                    .map_err(|_| format!("invalid alpha in rule {s:?}"))?;
                if !(alpha >= 0.0 && alpha.is_finite()) {
                    return Err(format!(
                        "alpha in rule {s:?} must be finite and nonnegative"
                    ));
                }
                // normalise -0.0
                Ok(AlphaRule::Fixed(alpha + 0.0))
            }
        }
    }
}

impl Serialize for AlphaRule {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstimatorConfig {
    /// Upper bound on data-driven alphas; defaults to `n / (rc)`.
    pub alpha_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub rule: AlphaRule,
    pub alpha_used: f64,
    pub p_smoothed: ProbTable,
    pub estimate: MeasureValue,
    /// Present for [`AlphaRule::OptimalMeasureMse`].
    pub optimal: Option<OptimalAlpha>,
}

/// Fienberg-Holland smoothing parameter mapped to the symmetric Dirichlet:
/// `alpha = K / (rc)` with `K = (n^2 - sum n_ij^2) / (sum n_ij^2 - n^2 / (rc))`.
///
/// Perfectly uniform counts make the denominator vanish; `alpha_max` is
/// returned (default `n / (rc)`).
pub fn fienberg_holland_alpha(t: &CountTable, alpha_max: Option<f64>) -> f64 {
    let k = t.dims().cells() as u128;
    let n = t.total() as u128;
    let sum_sq: u128 = t.counts().iter().map(|&c| (c as u128) * (c as u128)).sum();
    // compare k * sum_sq with n^2 exactly
    if k * sum_sq == n * n {
        return alpha_max.unwrap_or_else(|| default_alpha_max(t));
    }
    let n2 = (n * n) as f64;
    let numerator = n2 - sum_sq as f64;
    let denominator = sum_sq as f64 - n2 / k as f64;
    (numerator / denominator / k as f64).max(0.0)
}

/// Resolve the smoothing parameter for `rule`.
pub fn resolve_alpha(
    spec: &MeasureSpec,
    t: &CountTable,
    rule: AlphaRule,
    config: &EstimatorConfig,
) -> Result<(f64, Option<OptimalAlpha>)> {
    match rule {
        AlphaRule::Fixed(alpha) => {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(Error::NegativeAlpha(alpha));
            }
            Ok((alpha, None))
        }
        AlphaRule::FienbergHolland => Ok((fienberg_holland_alpha(t, config.alpha_max), None)),
        AlphaRule::OptimalMeasureMse => {
            let opt = optimal_alpha(spec, t, config.alpha_max)?;
            Ok((opt.alpha, Some(opt)))
        }
    }
}

/// `f(p^(alpha))` with alpha chosen by `rule`.
pub fn estimate(
    spec: &MeasureSpec,
    t: &CountTable,
    rule: AlphaRule,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    spec.check_dims(t.dims())?;
    let (alpha_used, optimal) = resolve_alpha(spec, t, rule, config)?;
    let p_smoothed = posterior_mean(t, alpha_used)?;
    let estimate = measure_value(spec, &p_smoothed)?;
    Ok(EstimateResult {
        rule,
        alpha_used,
        p_smoothed,
        estimate,
        optimal,
    })
}
