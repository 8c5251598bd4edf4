//! Derivatives of the measures and the smoothing parameter that minimises the
//! leading term of the plug-in estimator's mean squared error.
//!
//! For the posterior-mean plug-in `f(p^(alpha))` the alpha-dependent part of
//! the MSE is `(a1 alpha^2 - 2 a2 alpha) / n^2 + o(n^-2)` with
//!
//! ```text
//! v  = rc p - 1,   S = diag(p) - p p^T,   g = df/dp,   H = d2f/dp dp^T
//! a1 = (g^T v)^2
//! a2 = (1/2)(v^T g) tr[H S] + rc g^T S g + v^T H S g
//! ```
//!
//! so the minimiser is `alpha* = a2 / a1`. Derivatives are coordinatewise
//! partials in the ambient `rc`-dimensional space; the covariance factor `S`
//! already restricts every term to directions tangent to the simplex.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{evaluate_raw, pair_contribution, MeasureKind, MeasureSpec};
use crate::tables::{
    col_sums, posterior_mean, row_sums, sample_proportions, CountTable, Dims, ProbTable,
};

/// Cells at or below this value are treated as boundary points.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// `a1` at or below this value has no interior minimiser.
pub const DEGENERATE_A1: f64 = 1e-12;

/// Value, gradient and Hessian of a scalar function of the flattened table.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major `k x k`.
    pub hessian: Vec<f64>,
}

impl DerivativeBundle {
    pub fn zeros(value: f64, k: usize) -> Self {
        DerivativeBundle {
            value,
            gradient: vec![0.0; k],
            hessian: vec![0.0; k * k],
        }
    }

    pub fn len(&self) -> usize {
        self.gradient.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradient.is_empty()
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hessian[i * self.len() + j]
    }

    /// `max |H_ij - H_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let k = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                worst = worst.max((self.hess(i, j) - self.hess(j, i)).abs());
            }
        }
        worst
    }
}

/// A scalar function of the flattened table with second derivatives.
pub trait SmoothFunction {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn derivatives(&self, x: &[f64]) -> Result<DerivativeBundle>;
}

/// A measure bound to a table shape.
#[derive(Debug, Clone, Copy)]
pub struct MeasureFunction {
    pub spec: MeasureSpec,
    pub dims: Dims,
}

impl SmoothFunction for MeasureFunction {
    fn value(&self, x: &[f64]) -> Result<f64> {
        evaluate_raw(&self.spec, self.dims, x)
    }

    fn derivatives(&self, x: &[f64]) -> Result<DerivativeBundle> {
        raw_derivatives(&self.spec, self.dims, x)
    }
}

/// Analytic value, gradient and Hessian of the measure at `p`.
pub fn derivatives(spec: &MeasureSpec, p: &ProbTable) -> Result<DerivativeBundle> {
    raw_derivatives(spec, p.dims(), p.probs())
}

fn raw_derivatives(spec: &MeasureSpec, dims: Dims, x: &[f64]) -> Result<DerivativeBundle> {
    spec.check_dims(dims)?;
    if x.len() != dims.cells() {
        return Err(Error::LengthMismatch {
            expected: dims.cells(),
            found: x.len(),
        });
    }
    check_smooth(spec, dims, x)?;
    Ok(match spec.kind() {
        MeasureKind::CramerV => cramer_derivatives(dims, x, spec.lambda()),
        MeasureKind::SymmetryPhi => phi_derivatives(dims, x, spec.lambda()),
    })
}

/// Checks that the analytic derivatives are finite at `x`.
///
/// For lambda >= 1 both measures are twice differentiable at empty cells as
/// long as the row and column marginals (`V`) or the symmetric pair sums
/// (`Phi`) are positive. Below 1 the second partials diverge at empty cells,
/// so every cell the measure uses must be positive.
pub fn check_smooth(spec: &MeasureSpec, dims: Dims, x: &[f64]) -> Result<()> {
    let positive = |v: f64| v > BOUNDARY_TOLERANCE;
    if let Some(index) = x.iter().position(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::BoundaryPoint { index });
    }
    if spec.lambda() < 1.0 {
        for (index, &v) in x.iter().enumerate() {
            if spec.uses_cell(dims, index) && !positive(v) {
                return Err(Error::BoundaryPoint { index });
            }
        }
        return Ok(());
    }
    match spec.kind() {
        MeasureKind::CramerV => {
            if let Some(i) = row_sums(dims, x).into_iter().position(|a| !positive(a)) {
                return Err(Error::BoundaryPoint {
                    index: dims.index(i, 0),
                });
            }
            if let Some(j) = col_sums(dims, x).into_iter().position(|b| !positive(b)) {
                return Err(Error::BoundaryPoint {
                    index: dims.index(0, j),
                });
            }
        }
        MeasureKind::SymmetryPhi => {
            for i in 0..dims.rows() {
                for j in (i + 1)..dims.cols() {
                    if !positive(x[dims.index(i, j)] + x[dims.index(j, i)]) {
                        return Err(Error::BoundaryPoint {
                            index: dims.index(i, j),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Derivatives of `num / den` from those of `num` and `den`.
fn quotient(num: &DerivativeBundle, den: &DerivativeBundle) -> DerivativeBundle {
    let k = num.len();
    let (n, d) = (num.value, den.value);
    let gradient = num
        .gradient
        .iter()
        .zip(&den.gradient)
        .map(|(gn, gd)| gn / d - n * gd / (d * d))
        .collect();
    let mut hessian = vec![0.0; k * k];
    let (d2, d3) = (d * d, d * d * d);
    for i in 0..k {
        for j in 0..k {
            let idx = i * k + j;
            hessian[idx] = num.hessian[idx] / d
                - (num.gradient[i] * den.gradient[j] + den.gradient[i] * num.gradient[j]) / d2
                - n * den.hessian[idx] / d2
                + 2.0 * n * den.gradient[i] * den.gradient[j] / d3;
        }
    }
    DerivativeBundle {
        value: n / d,
        gradient,
        hessian,
    }
}

#[allow(clippy::needless_range_loop)]
fn cramer_derivatives(dims: Dims, x: &[f64], lambda: f64) -> DerivativeBundle {
    let (r, c) = (dims.rows(), dims.cols());
    let k = dims.cells();
    let a = row_sums(dims, x);
    let b = col_sums(dims, x);
    let row = |idx: usize| idx / c;
    let col = |idx: usize| idx % c;

    let mut num = DerivativeBundle::zeros(0.0, k);
    let mut den = DerivativeBundle::zeros(0.0, k);

    if lambda == 0.0 {
        // num = sum p log p - sum a log a - sum b log b, den = -sum a log a
        let xlx = |v: f64| v * v.ln();
        num.value = x.iter().map(|&v| xlx(v)).sum::<f64>()
            - a.iter().map(|&v| xlx(v)).sum::<f64>()
            - b.iter().map(|&v| xlx(v)).sum::<f64>();
        den.value = -a.iter().map(|&v| xlx(v)).sum::<f64>();
        for idx in 0..k {
            let (i, j) = (row(idx), col(idx));
            num.gradient[idx] = x[idx].ln() - a[i].ln() - b[j].ln() - 1.0;
            den.gradient[idx] = -(a[i].ln() + 1.0);
            for jdx in 0..k {
                let (s, t) = (row(jdx), col(jdx));
                let mut h = 0.0;
                if idx == jdx {
                    h += 1.0 / x[idx];
                }
                if i == s {
                    h -= 1.0 / a[i];
                    den.hessian[idx * k + jdx] = -1.0 / a[i];
                }
                if j == t {
                    h -= 1.0 / b[j];
                }
                num.hessian[idx * k + jdx] = h;
            }
        }
        return quotient(&num, &den);
    }

    // The common factor 1/(lambda (lambda + 1)) cancels in the ratio:
    // num = T - sum p with T = sum p^(lambda+1) (a b)^-lambda, den = sum a^(1-lambda) - 1.
    let m = lambda + 1.0;
    let mut u = vec![0.0; k]; // p^lambda (a b)^-lambda
    let mut t = vec![0.0; k]; // p u
    let mut u_over_p = vec![0.0; k]; // p^(lambda-1) (a b)^-lambda, finite at p = 0 for lambda >= 1
    for idx in 0..k {
        let ab = a[row(idx)] * b[col(idx)];
        u[idx] = (x[idx] / ab).powf(lambda);
        t[idx] = x[idx] * u[idx];
        u_over_p[idx] = x[idx].powf(lambda - 1.0) * ab.powf(-lambda);
    }
    let row_t = row_sums(dims, &t);
    let col_t = col_sums(dims, &t);

    num.value = t.iter().sum::<f64>() - x.iter().sum::<f64>();
    den.value = a.iter().map(|&v| v.powf(1.0 - lambda)).sum::<f64>() - 1.0;

    for idx in 0..k {
        let (i, j) = (row(idx), col(idx));
        num.gradient[idx] = m * u[idx] - lambda * row_t[i] / a[i] - lambda * col_t[j] / b[j] - 1.0;
        den.gradient[idx] = (1.0 - lambda) * a[i].powf(-lambda);
        for jdx in 0..k {
            let (s, tt) = (row(jdx), col(jdx));
            let mut h =
                lambda * lambda * (t[i * c + tt] / (a[i] * b[tt]) + t[s * c + j] / (a[s] * b[j]));
            if idx == jdx {
                h += m * lambda * u_over_p[idx];
            }
            if i == s {
                h += -m * lambda * (u[idx] + u[jdx]) / a[i] + lambda * m * row_t[i] / (a[i] * a[i]);
                den.hessian[idx * k + jdx] = -lambda * (1.0 - lambda) * a[i].powf(-lambda - 1.0);
            }
            if j == tt {
                h += -m * lambda * (u[idx] + u[jdx]) / b[j] + lambda * m * col_t[j] / (b[j] * b[j]);
            }
            num.hessian[idx * k + jdx] = h;
        }
    }
    debug_assert_eq!(r, a.len());
    quotient(&num, &den)
}

/// First and second partials of the pair contribution `psi(x, y)`:
/// `(psi_x, psi_y, psi_xx, psi_xy, psi_yy)`.
fn pair_partials(x: f64, y: f64, lambda: f64) -> (f64, f64, f64, f64, f64) {
    let s = x + y;
    if lambda == 0.0 {
        let inv = 1.0 / std::f64::consts::LN_2;
        let ls = s.ln();
        (
            1.0 + inv * (x.ln() - ls),
            1.0 + inv * (y.ln() - ls),
            inv * (1.0 / x - 1.0 / s),
            -inv / s,
            inv * (1.0 / y - 1.0 / s),
        )
    } else {
        let beta = 2f64.powf(lambda) / (lambda * std::f64::consts::LN_2).exp_m1();
        let m = lambda + 1.0;
        let w = x.powf(m) + y.powf(m);
        let (xl, yl) = (x.powf(lambda), y.powf(lambda));
        let s_l = s.powf(-lambda);
        let s_l1 = s_l / s;
        let s_l2 = s_l1 / s;
        let scale = beta * lambda * m;
        (
            (1.0 - beta) + beta * (m * xl * s_l - lambda * w * s_l1),
            (1.0 - beta) + beta * (m * yl * s_l - lambda * w * s_l1),
            scale * (x.powf(lambda - 1.0) * s_l - 2.0 * xl * s_l1 + w * s_l2),
            scale * (-(xl + yl) * s_l1 + w * s_l2),
            scale * (y.powf(lambda - 1.0) * s_l - 2.0 * yl * s_l1 + w * s_l2),
        )
    }
}

fn phi_derivatives(dims: Dims, x: &[f64], lambda: f64) -> DerivativeBundle {
    let d = dims.rows();
    let k = dims.cells();
    let mut num = DerivativeBundle::zeros(0.0, k);
    let mut den = DerivativeBundle::zeros(0.0, k);
    for i in 0..d {
        for j in (i + 1)..d {
            let (ij, ji) = (dims.index(i, j), dims.index(j, i));
            let (u, v) = (x[ij], x[ji]);
            num.value += pair_contribution(u, v, lambda);
            den.value += u + v;
            let (gx, gy, hxx, hxy, hyy) = pair_partials(u, v, lambda);
            num.gradient[ij] = gx;
            num.gradient[ji] = gy;
            den.gradient[ij] = 1.0;
            den.gradient[ji] = 1.0;
            num.hessian[ij * k + ij] = hxx;
            num.hessian[ij * k + ji] = hxy;
            num.hessian[ji * k + ij] = hxy;
            num.hessian[ji * k + ji] = hyy;
        }
    }
    quotient(&num, &den)
}

/// Central finite differences of `f` at `x`: gradient with step `grad_step`,
/// Hessian with step `hess_step`.
#[allow(clippy::needless_range_loop)]
pub fn finite_difference<F>(
    f: F,
    x: &[f64],
    grad_step: f64,
    hess_step: f64,
) -> Result<DerivativeBundle>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let k = x.len();
    let value = f(x)?;
    let mut probe = x.to_vec();
    let mut eval = |deltas: &[(usize, f64)]| -> Result<f64> {
        for &(i, dx) in deltas {
            probe[i] += dx;
        }
        let out = f(&probe);
        probe.copy_from_slice(x);
        out
    };

    let mut gradient = vec![0.0; k];
    for i in 0..k {
        let h = grad_step;
        gradient[i] = (eval(&[(i, h)])? - eval(&[(i, -h)])?) / (2.0 * h);
    }

    let h = hess_step;
    let mut hessian = vec![0.0; k * k];
    for i in 0..k {
        hessian[i * k + i] = (eval(&[(i, h)])? - 2.0 * value + eval(&[(i, -h)])?) / (h * h);
        for j in (i + 1)..k {
            let pp = eval(&[(i, h), (j, h)])?;
            let pm = eval(&[(i, h), (j, -h)])?;
            let mp = eval(&[(i, -h), (j, h)])?;
            let mm = eval(&[(i, -h), (j, -h)])?;
            let hij = (pp - pm - mp + mm) / (4.0 * h * h);
            hessian[i * k + j] = hij;
            hessian[j * k + i] = hij;
        }
    }
    Ok(DerivativeBundle {
        value,
        gradient,
        hessian,
    })
}

/// Finite-difference derivatives of a measure, for cross-checking
/// [`derivatives`].
pub fn finite_difference_derivatives(
    spec: &MeasureSpec,
    p: &ProbTable,
    grad_step: f64,
    hess_step: f64,
) -> Result<DerivativeBundle> {
    check_smooth(spec, p.dims(), p.probs())?;
    let dims = p.dims();
    finite_difference(
        |x| evaluate_raw(spec, dims, x),
        p.probs(),
        grad_step,
        hess_step,
    )
}

/// Leading-order MSE coefficients of the posterior-mean plug-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseCoefficients {
    pub a1: f64,
    pub a2: f64,
    /// `max(a2 / a1, 0)`, or `None` when `a1 <= DEGENERATE_A1`.
    pub alpha_star: Option<f64>,
}

impl MseCoefficients {
    fn new(a1: f64, a2: f64) -> Self {
        let alpha_star = (a1 > DEGENERATE_A1).then(|| (a2 / a1).max(0.0));
        MseCoefficients { a1, a2, alpha_star }
    }

    pub fn is_degenerate(&self) -> bool {
        self.alpha_star.is_none()
    }

    /// Predicted `n^2 (MSE(alpha) - MSE(0))`.
    pub fn predicted_delta(&self, alpha: f64) -> f64 {
        self.a1 * alpha * alpha - 2.0 * self.a2 * alpha
    }
}

/// `a1` and `a2` from a derivative bundle evaluated at `p`.
pub fn coefficients_from_bundle(bundle: &DerivativeBundle, p: &[f64]) -> MseCoefficients {
    let k = p.len();
    let kf = k as f64;
    let g = &bundle.gradient;
    let v: Vec<f64> = p.iter().map(|&pi| kf * pi - 1.0).collect();

    let gv: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
    let gp: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();

    // tr[H S] = sum_i H_ii p_i - p^T H p
    let mut diag_term = 0.0;
    let mut php = 0.0;
    let mut hv = vec![0.0; k];
    for i in 0..k {
        let row = &bundle.hessian[i * k..(i + 1) * k];
        diag_term += row[i] * p[i];
        let mut hp_i = 0.0;
        let mut hv_i = 0.0;
        for j in 0..k {
            hp_i += row[j] * p[j];
            hv_i += row[j] * v[j];
        }
        php += p[i] * hp_i;
        hv[i] = hv_i;
    }
    let tr_hs = diag_term - php;

    // g^T S g
    let gsg = g.iter().zip(p).map(|(gi, pi)| gi * gi * pi).sum::<f64>() - gp * gp;

    // v^T H S g = (Hv)^T S g
    let hvp: f64 = hv.iter().zip(p).map(|(a, b)| a * b).sum();
    let vhsg = hv
        .iter()
        .zip(p)
        .zip(g)
        .map(|((h, pi), gi)| h * pi * gi)
        .sum::<f64>()
        - hvp * gp;

    let a1 = gv * gv;
    let a2 = 0.5 * gv * tr_hs + kf * gsg + vhsg;
    MseCoefficients::new(a1, a2)
}

pub fn mse_coefficients(spec: &MeasureSpec, p: &ProbTable) -> Result<MseCoefficients> {
    let bundle = derivatives(spec, p)?;
    Ok(coefficients_from_bundle(&bundle, p.probs()))
}

/// Plug-in optimal smoothing parameter for an observed table, with
/// diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalAlpha {
    pub alpha: f64,
    /// Estimated coefficients; `None` if derivatives were unavailable.
    pub coefficients: Option<MseCoefficients>,
    /// The raw ratio fell outside `[0, alpha_max]`.
    pub clamped: bool,
    /// Coefficients were evaluated at the alpha = 1/2 posterior mean because
    /// the measure is not twice differentiable at the sample proportions.
    pub smoothed_evaluation: bool,
    pub alpha_max: f64,
}

/// Default upper bound `n / (rc)` on the smoothing parameter.
pub fn default_alpha_max(t: &CountTable) -> f64 {
    t.total() as f64 / t.dims().cells() as f64
}

/// `a2_hat / a1_hat` at the sample proportions, clamped to `[0, alpha_max]`.
///
/// When the measure is not twice differentiable at the sample proportions
/// (see [`check_smooth`]) the coefficients are evaluated at the alpha = 1/2
/// posterior mean instead. A degenerate `a1_hat` gives 0.
pub fn optimal_alpha(
    spec: &MeasureSpec,
    t: &CountTable,
    alpha_max: Option<f64>,
) -> Result<OptimalAlpha> {
    spec.check_dims(t.dims())?;
    let alpha_max = alpha_max.unwrap_or_else(|| default_alpha_max(t));
    let p_hat = sample_proportions(t);
    let (coefficients, smoothed_evaluation) = match mse_coefficients(spec, &p_hat) {
        Ok(c) => (Some(c), false),
        Err(Error::BoundaryPoint { .. }) => {
            (mse_coefficients(spec, &posterior_mean(t, 0.5)?).ok(), true)
        }
        Err(_) => (None, false),
    };
    let (alpha, clamped) = match coefficients {
        Some(MseCoefficients { a1, a2, .. }) if a1 > DEGENERATE_A1 => {
            let raw = a2 / a1;
            if raw.is_nan() {
                (0.0, false)
            } else {
                let alpha = raw.clamp(0.0, alpha_max);
                (alpha, alpha != raw)
            }
        }
        _ => (0.0, false),
    };
    Ok(OptimalAlpha {
        alpha,
        coefficients,
        clamped,
        smoothed_evaluation,
        alpha_max,
    })
}
