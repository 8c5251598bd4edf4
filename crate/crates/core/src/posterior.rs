//! Dirichlet posterior draws and equal-tailed credible intervals.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{resolve_alpha, AlphaRule, EstimatorConfig};
use crate::measures::{measure_value, MeasureSpec};
use crate::rng::{substream, Domain};
use crate::tables::{posterior_mean, CountTable, Dims, ProbTable};

/// Minimum number of posterior draws accepted by [`credible_interval`].
pub const MIN_DRAWS: usize = 100;

const MAX_REDRAWS: usize = 64;

/// One draw from `Dirichlet(params)`, as normalised gamma variates.
///
/// Small shapes use the boosted rejection sampler, so parameters below 1 are
/// fine.
pub fn sample_dirichlet<R: Rng + ?Sized>(
    dims: Dims,
    params: &[f64],
    rng: &mut R,
) -> Result<ProbTable> {
    if params.len() != dims.cells() {
        return Err(Error::LengthMismatch {
            expected: dims.cells(),
            found: params.len(),
        });
    }
    if let Some((index, &value)) = params
        .iter()
        .enumerate()
        .find(|(_, &a)| !(a > 0.0 && a.is_finite()))
    {
        return Err(Error::NonPositiveParameter { index, value });
    }
    ProbTable::new(dims, dirichlet_weights(params, rng)?)
}

/// Normalised gamma variates; all `params` must be positive.
fn dirichlet_weights<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let gammas: Vec<Gamma<f64>> = params
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape"))
        .collect();
    let mut draw = vec![0.0; params.len()];
    for _ in 0..MAX_REDRAWS {
        for (x, g) in draw.iter_mut().zip(&gammas) {
            *x = g.sample(rng);
        }
        let sum: f64 = draw.iter().sum();
        // every variate underflowed; only possible with tiny shapes
        if sum > 0.0 && sum.is_finite() {
            for x in draw.iter_mut() {
                *x /= sum;
            }
            return Ok(draw);
        }
    }
    Err(Error::InvalidConfig(
        "Dirichlet draw underflowed repeatedly; parameters are too small".into(),
    ))
}

/// Draw from the posterior `Dirichlet(n_ij + alpha)`. Cells with a zero
/// parameter (empty cells at alpha = 0) stay at zero.
fn sample_posterior<R: Rng + ?Sized>(t: &CountTable, alpha: f64, rng: &mut R) -> Result<ProbTable> {
    let params: Vec<f64> = t.counts().iter().map(|&c| c as f64 + alpha).collect();
    let active: Vec<usize> = (0..params.len()).filter(|&i| params[i] > 0.0).collect();
    if active.len() == params.len() {
        return sample_dirichlet(t.dims(), &params, rng);
    }
    let sub_params: Vec<f64> = active.iter().map(|&i| params[i]).collect();
    let mut out = vec![0.0; params.len()];
    for (&i, x) in active.iter().zip(dirichlet_weights(&sub_params, rng)?) {
        out[i] = x;
    }
    ProbTable::new(t.dims(), out)
}

/// Quantile with linear interpolation between order statistics of a sorted
/// sample, `x[floor(h)] + (h - floor(h)) (x[floor(h)+1] - x[floor(h)])` with
/// `h = (len - 1) q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CredibleInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub draws: usize,
    pub alpha_used: f64,
    /// The measure at the posterior mean.
    pub point: f64,
}

impl CredibleInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Equal-tailed credible interval for the measure under the posterior
/// `Dirichlet(n_ij + alpha)`, with alpha resolved by `rule` and held fixed.
///
/// Draw `s` uses the substream `(seed, s)`, so the result does not depend on
/// the number of threads.
pub fn credible_interval(
    spec: &MeasureSpec,
    t: &CountTable,
    rule: AlphaRule,
    config: &EstimatorConfig,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<CredibleInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    if draws < MIN_DRAWS {
        return Err(Error::TooFewDraws {
            min: MIN_DRAWS,
            found: draws,
        });
    }
    spec.check_dims(t.dims())?;
    let (alpha, _) = resolve_alpha(spec, t, rule, config)?;
    let point = measure_value(spec, &posterior_mean(t, alpha)?)?.value();

    let mut values = (0..draws)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, Domain::Posterior, 0, s as u64);
            let p = sample_posterior(t, alpha, &mut rng)?;
            Ok(measure_value(spec, &p)?.value())
        })
        .collect::<Result<Vec<f64>>>()?;
    values.sort_by(f64::total_cmp);

    let tail = (1.0 - level) / 2.0;
    Ok(CredibleInterval {
        lower: quantile_sorted(&values, tail),
        upper: quantile_sorted(&values, 1.0 - tail),
        level,
        draws,
        alpha_used: alpha,
        point,
    })
}
