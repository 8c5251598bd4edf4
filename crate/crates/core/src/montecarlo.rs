//! Simulation studies: bias and MSE of the estimators over a sweep of sample
//! sizes, and an empirical check of the MSE expansion in alpha.
//!
//! Replication `i` at ratio `gamma` always draws its table from the substream
//! `(seed, gamma, i)`, and every rule is evaluated on that same table. Results
//! are therefore identical for any thread count.

use std::io::Write;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::mse_coefficients;
use crate::error::{Error, Result};
use crate::estimators::{estimate, AlphaRule, EstimatorConfig};
use crate::measures::{measure_value, MeasureSpec};
use crate::rng::{substream, Domain};
use crate::sum::NeumaierSum;
use crate::tables::{posterior_mean, sample_proportions, CountTable, ProbTable};

/// Multinomial draw of `n` observations via sequential conditional binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(truth: &ProbTable, n: u64, rng: &mut R) -> CountTable {
    let probs = truth.probs();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining_n = n;
    let mut remaining_mass = 1.0;
    let last = probs.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if i == last {
            counts[i] = remaining_n;
            break;
        }
        let q = if remaining_mass > 0.0 {
            (p / remaining_mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = if q == 0.0 {
            0
        } else if q == 1.0 {
            remaining_n
        } else {
            Binomial::new(remaining_n, q)
                .expect("valid binomial")
                .sample(rng)
        };
        counts[i] = k;
        remaining_n -= k;
        remaining_mass -= p;
    }
    // rounding can leave mass for trailing zero-probability cells; move any
    // leftover onto the last positive cell instead
    if counts.iter().zip(probs).any(|(&c, &p)| c > 0 && p == 0.0) {
        let target = probs.iter().rposition(|&p| p > 0.0).expect("positive mass");
        let stray: u64 = counts
            .iter_mut()
            .zip(probs)
            .filter(|(_, &p)| p == 0.0)
            .map(|(c, _)| std::mem::take(c))
            .sum();
        counts[target] += stray;
    }
    CountTable::new(truth.dims(), counts).expect("n >= 1")
}

/// The table drawn for replication `index` at ratio `gamma`.
pub fn replication_table(truth: &ProbTable, seed: u64, gamma: u64, index: u64) -> CountTable {
    let n = gamma * truth.dims().cells() as u64;
    let mut rng = substream(seed, Domain::Experiment, gamma, index);
    sample_multinomial(truth, n, &mut rng)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub truth: ProbTable,
    /// Label copied into the `truth_table_id` column.
    pub truth_id: String,
    pub spec: MeasureSpec,
    pub rules: Vec<AlphaRule>,
    /// Sample size per cell; `n = gamma * rc`.
    pub gammas: Vec<u64>,
    pub replications: usize,
    pub seed: u64,
    pub estimator: EstimatorConfig,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        self.spec.check_dims(self.truth.dims())?;
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "replications must be at least 1".into(),
            ));
        }
        if self.rules.is_empty() {
            return Err(Error::InvalidConfig("at least one rule is required".into()));
        }
        if self.gammas.is_empty() || self.gammas.contains(&0) {
            return Err(Error::InvalidConfig(
                "gammas must be positive integers".into(),
            ));
        }
        Ok(())
    }
}

/// Bias and MSE for one rule at one gamma.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub measure: &'static str,
    pub lambda: f64,
    pub truth_table_id: String,
    pub rule: String,
    pub gamma: u64,
    pub n: u64,
    #[serde(rename = "S")]
    pub replications: usize,
    pub bias: f64,
    pub abs_bias: f64,
    pub mse: f64,
    pub failures: usize,
    pub seed: u64,
    /// Monte Carlo standard error of `mse`.
    #[serde(skip)]
    pub mse_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub truth_value: f64,
    /// Ordered by gamma, then by rule in configuration order.
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentResult {
    pub fn row(&self, rule: AlphaRule, gamma: u64) -> Option<&ExperimentRow> {
        let name = rule.to_string();
        self.rows
            .iter()
            .find(|r| r.gamma == gamma && r.rule == name)
    }

    /// Tidy CSV with header `measure,lambda,truth_table_id,rule,gamma,n,S,
    /// bias,abs_bias,mse,failures,seed`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for row in &self.rows {
            out.serialize(row).map_err(|e| Error::Csv(e.to_string()))?;
        }
        out.flush().map_err(|e| Error::Csv(e.to_string()))
    }
}

/// One estimator evaluation, reported to an observer.
#[derive(Debug)]
pub struct ReplicationEvent<'a> {
    pub gamma: u64,
    pub replication: u64,
    pub table: &'a CountTable,
    pub rule: AlphaRule,
    pub estimate: Option<f64>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_observed(config, |_| {})
}

/// [`run_experiment`] with a callback for every estimator evaluation.
pub fn run_experiment_observed<F>(
    config: &ExperimentConfig,
    observer: F,
) -> Result<ExperimentResult>
where
    F: Fn(&ReplicationEvent<'_>) + Sync,
{
    config.validate()?;
    let truth_value = measure_value(&config.spec, &config.truth)?.value();
    let k = config.truth.dims().cells() as u64;
    let mut rows = Vec::with_capacity(config.gammas.len() * config.rules.len());

    for &gamma in &config.gammas {
        let errors: Vec<Vec<Option<f64>>> = (0..config.replications as u64)
            .into_par_iter()
            .map(|i| {
                let table = replication_table(&config.truth, config.seed, gamma, i);
                config
                    .rules
                    .iter()
                    .map(|&rule| {
                        let value = estimate(&config.spec, &table, rule, &config.estimator)
                            .ok()
                            .map(|r| r.estimate.value());
                        observer(&ReplicationEvent {
                            gamma,
                            replication: i,
                            table: &table,
                            rule,
                            estimate: value,
                        });
                        value.map(|v| v - truth_value)
                    })
                    .collect()
            })
            .collect();

        for (r, rule) in config.rules.iter().enumerate() {
            let mut sum = NeumaierSum::new();
            let mut sum_sq = NeumaierSum::new();
            let mut sum_4 = NeumaierSum::new();
            let mut failures = 0;
            for e in errors.iter().map(|row| row[r]) {
                match e {
                    Some(e) => {
                        sum.add(e);
                        sum_sq.add(e * e);
                        sum_4.add(e * e * e * e);
                    }
                    None => failures += 1,
                }
            }
            let used = (config.replications - failures) as f64;
            let (bias, mse, mse_se) = if used > 0.0 {
                let bias = sum.value() / used;
                let mse = sum_sq.value() / used;
                let var_sq = (sum_4.value() / used - mse * mse).max(0.0);
                (bias, mse, (var_sq / used).sqrt())
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            rows.push(ExperimentRow {
                measure: config.spec.kind().name(),
                lambda: config.spec.lambda(),
                truth_table_id: config.truth_id.clone(),
                rule: rule.to_string(),
                gamma,
                n: gamma * k,
                replications: config.replications,
                bias,
                abs_bias: bias.abs(),
                mse,
                failures,
                seed: config.seed,
                mse_se,
            });
        }
    }
    Ok(ExperimentResult { truth_value, rows })
}

/// Simulated against predicted `n^2 (MSE(alpha) - MSE(0))` at one alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionPoint {
    pub alpha: f64,
    pub simulated: f64,
    pub standard_error: f64,
    pub predicted: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionCheck {
    pub a1: f64,
    pub a2: f64,
    pub n: u64,
    pub replications: usize,
    pub failures: usize,
    pub points: Vec<ExpansionPoint>,
}

/// Compare the simulated MSE change from smoothing with the leading-order
/// prediction `a1 alpha^2 - 2 a2 alpha`, on common random tables.
pub fn validate_expansion(
    spec: &MeasureSpec,
    truth: &ProbTable,
    alphas: &[f64],
    n: u64,
    replications: usize,
    seed: u64,
) -> Result<ExpansionCheck> {
    if n < 10_000 {
        return Err(Error::InvalidConfig(
            "expansion check needs n >= 10000".into(),
        ));
    }
    if replications < 2 {
        return Err(Error::InvalidConfig(
            "expansion check needs at least 2 replications".into(),
        ));
    }
    if let Some(&a) = alphas.iter().find(|&&a| !(a >= 0.0 && a.is_finite())) {
        return Err(Error::NegativeAlpha(a));
    }
    if let Some(index) = truth.probs().iter().position(|&p| p <= 0.0) {
        return Err(Error::BoundaryPoint { index });
    }
    let coefficients = mse_coefficients(spec, truth)?;
    let truth_value = measure_value(spec, truth)?.value();
    let nf = n as f64;

    let deltas: Vec<Option<Vec<f64>>> = (0..replications as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Domain::Expansion, n, i);
            let table = sample_multinomial(truth, n, &mut rng);
            let f0 = measure_value(spec, &sample_proportions(&table))
                .ok()?
                .value();
            alphas
                .iter()
                .map(|&alpha| {
                    let fa = measure_value(spec, &posterior_mean(&table, alpha).ok()?)
                        .ok()?
                        .value();
                    // (fa - f)^2 - (f0 - f)^2 without cancellation
                    Some(nf * nf * (fa - f0) * (fa + f0 - 2.0 * truth_value))
                })
                .collect()
        })
        .collect();

    let kept: Vec<&Vec<f64>> = deltas.iter().flatten().collect();
    let failures = replications - kept.len();
    let m = kept.len() as f64;
    let points = alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let mean = kept.iter().map(|d| d[a]).collect::<NeumaierSum>().value() / m;
            let var = kept
                .iter()
                .map(|d| (d[a] - mean).powi(2))
                .collect::<NeumaierSum>()
                .value()
                / (m - 1.0);
            let se = (var / m).sqrt();
            let predicted = coefficients.predicted_delta(alpha);
            let z = if se > 0.0 {
                (mean - predicted) / se
            } else if mean == predicted {
                0.0
            } else {
                f64::INFINITY
            };
            ExpansionPoint {
                alpha,
                simulated: mean,
                standard_error: se,
                predicted,
                z,
            }
        })
        .collect();

    Ok(ExpansionCheck {
        a1: coefficients.a1,
        a2: coefficients.a2,
        n,
        replications,
        failures,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::tables::Dims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Mutex;

    #[test]
    fn degenerate_truth() {
        let truth = ProbTable::new(Dims::new(2, 2).unwrap(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(
                sample_multinomial(&truth, 7, &mut rng).counts(),
                &[7, 0, 0, 0]
            );
        }
        let truth = ProbTable::new(Dims::new(2, 2).unwrap(), vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            sample_multinomial(&truth, 5, &mut rng).counts(),
            &[0, 0, 0, 5]
        );
    }

    #[test]
    fn counts_sum_to_n() {
        let truth = fixtures::assoc_strong();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1u64, 2, 20, 137, 5000] {
            for _ in 0..50 {
                assert_eq!(sample_multinomial(&truth, n, &mut rng).total(), n);
            }
        }
    }

    #[test]
    fn large_n_proportions_are_close() {
        let truth = fixtures::assoc_weak();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = sample_multinomial(&truth, 1_000_000, &mut rng);
        let p = sample_proportions(&t);
        let worst = p
            .probs()
            .iter()
            .zip(truth.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.002, "max deviation {worst}");
    }

    #[test]
    fn binomial_cell_means() {
        let truth = fixtures::asym_strong();
        let n = 50u64;
        let reps = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sums = [0.0; 16];
        for _ in 0..reps {
            for (s, &c) in sums
                .iter_mut()
                .zip(sample_multinomial(&truth, n, &mut rng).counts())
            {
                *s += c as f64;
            }
        }
        for (s, &p) in sums.iter().zip(truth.probs()) {
            let mean = s / reps as f64;
            let se = (n as f64 * p * (1.0 - p) / reps as f64).sqrt();
            assert!((mean - n as f64 * p).abs() < 4.0 * se);
        }
    }

    fn config(truth: ProbTable, spec: MeasureSpec, reps: usize, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            truth,
            truth_id: "t".into(),
            spec,
            rules: AlphaRule::all(),
            gammas: vec![1, 2],
            replications: reps,
            seed,
            estimator: EstimatorConfig::default(),
        }
    }

    #[test]
    fn single_replication_mse_is_bias_squared() {
        let cfg = config(
            fixtures::assoc_moderate(),
            MeasureSpec::cramer_v(1.0).unwrap(),
            1,
            5,
        );
        let result = run_experiment(&cfg).unwrap();
        assert_eq!(result.rows.len(), 10);
        for row in result.rows {
            assert_eq!(row.mse, row.bias * row.bias);
        }
    }

    #[test]
    fn mse_dominates_squared_bias() {
        let cfg = config(
            fixtures::asym_weak(),
            MeasureSpec::symmetry_phi(1.0).unwrap(),
            300,
            9,
        );
        for row in run_experiment(&cfg).unwrap().rows {
            assert!(row.mse >= row.bias * row.bias - 1e-15);
            assert_eq!(row.abs_bias, row.bias.abs());
            assert_eq!(row.n, row.gamma * 16);
        }
    }

    #[test]
    fn rules_share_tables() {
        let cfg = config(
            fixtures::asym_strong(),
            MeasureSpec::symmetry_phi(1.0).unwrap(),
            40,
            11,
        );
        let seen = Mutex::new(Vec::new());
        run_experiment_observed(&cfg, |e| {
            seen.lock()
                .unwrap()
                .push((e.gamma, e.replication, e.table.clone()));
        })
        .unwrap();
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.len(), 2 * 40 * 5);
        for (gamma, i, table) in &seen {
            assert_eq!(table, &replication_table(&cfg.truth, cfg.seed, *gamma, *i));
        }
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let cfg = config(
            fixtures::assoc_moderate(),
            MeasureSpec::cramer_v(1.0).unwrap(),
            200,
            3,
        );
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_experiment(&cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        a.write_csv(&mut csv_a).unwrap();
        b.write_csv(&mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        let header = String::from_utf8(csv_a).unwrap();
        assert!(header.starts_with(
            "measure,lambda,truth_table_id,rule,gamma,n,S,bias,abs_bias,mse,failures,seed\n"
        ));
    }

    #[test]
    fn diagonal_failures_are_counted() {
        // tiny off-diagonal mass makes all-diagonal draws common at gamma = 1
        let dims = Dims::new(2, 2).unwrap();
        let truth = ProbTable::new(dims, vec![0.48, 0.01, 0.03, 0.48]).unwrap();
        let cfg = ExperimentConfig {
            rules: vec![AlphaRule::Fixed(0.0), AlphaRule::UNIFORM],
            gammas: vec![1],
            ..config(truth, MeasureSpec::symmetry_phi(1.0).unwrap(), 500, 2)
        };
        let result = run_experiment(&cfg).unwrap();
        let plugin = result.row(AlphaRule::Fixed(0.0), 1).unwrap();
        let uniform = result.row(AlphaRule::UNIFORM, 1).unwrap();
        assert!(plugin.failures > 0);
        assert_eq!(uniform.failures, 0);
    }

    #[test]
    fn invalid_configs() {
        let base = config(
            fixtures::assoc_weak(),
            MeasureSpec::cramer_v(1.0).unwrap(),
            10,
            0,
        );
        assert!(run_experiment(&ExperimentConfig {
            replications: 0,
            ..base.clone()
        })
        .is_err());
        assert!(run_experiment(&ExperimentConfig {
            gammas: vec![0],
            ..base.clone()
        })
        .is_err());
        assert!(run_experiment(&ExperimentConfig {
            rules: vec![],
            ..base.clone()
        })
        .is_err());
        let phi = ExperimentConfig {
            spec: MeasureSpec::symmetry_phi(1.0).unwrap(),
            ..base
        };
        assert!(matches!(run_experiment(&phi), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn expansion_at_zero_alpha_is_exactly_zero() {
        let spec = MeasureSpec::cramer_v(1.0).unwrap();
        let check = validate_expansion(
            &spec,
            &fixtures::assoc_moderate(),
            &[0.0, 1.0],
            10_000,
            200,
            1,
        )
        .unwrap();
        assert_eq!(check.points[0].simulated, 0.0);
        assert_eq!(check.points[0].predicted, 0.0);
        assert_eq!(check.points[0].z, 0.0);
        assert_eq!(check.failures, 0);
    }

    #[test]
    fn predicted_curve_has_vertex_at_alpha_star() {
        let spec = MeasureSpec::cramer_v(1.0).unwrap();
        let c = mse_coefficients(&spec, &fixtures::assoc_moderate()).unwrap();
        let star = c.a2 / c.a1;
        assert_eq!(c.predicted_delta(0.0), 0.0);
        let at_star = c.predicted_delta(star);
        for d in [-0.5, -0.1, 0.1, 0.5] {
            assert!(c.predicted_delta(star + d) > at_star);
        }
        assert!((at_star + c.a2 * c.a2 / c.a1).abs() < 1e-9 * at_star.abs());
    }

    #[test]
    fn expansion_rejects_boundary_truth() {
        let spec = MeasureSpec::cramer_v(1.0).unwrap();
        let truth = ProbTable::new(Dims::new(2, 2).unwrap(), vec![0.5, 0.0, 0.25, 0.25]).unwrap();
        assert_eq!(
            validate_expansion(&spec, &truth, &[1.0], 10_000, 10, 0),
            Err(Error::BoundaryPoint { index: 1 })
        );
    }

    #[test]
    fn expansion_agrees_at_moderate_scale() {
        let spec = MeasureSpec::symmetry_phi(1.0).unwrap();
        let check = validate_expansion(
            &spec,
            &fixtures::asym_moderate(),
            &[0.5, 1.0, 2.0],
            20_000,
            20_000,
            8,
        )
        .unwrap();
        for p in &check.points {
            assert!(p.z.abs() <= 4.0, "{p:?}");
        }
    }
}
