//! Target measures as scalar functions of the cell probabilities.
//!
//! * [`cramer_v`]: generalised Cramér coefficient
//!   `V = I(p; p_i. p_.j) / K`, with `I` the power divergence of degree lambda
//!   and `K = (sum_i p_i.^(1-lambda) - 1) / (lambda (lambda + 1))`. The column
//!   variable is explanatory, so `K` uses row marginals.
//! * [`symmetry_phi`]: departure from symmetry
//!   `Phi = sum_{i<j} (p*_ij + p*_ji) phi_ij`, where `phi_ij` is one minus the
//!   normalised diversity index of the pair `(p^c_ij, p^c_ji)`.
//!
//! Both are normalised to `[0, 1]`. At lambda = 0 the closed-form limits (KL
//! divergence, Shannon entropy) are used.
//!
//! Zero cells follow `0 log 0 = 0` and `0 * x^lambda = 0`. A symmetric pair with
//! `p_ij + p_ji = 0` has zero weight and contributes nothing to `Phi`; a row
//! with zero marginal contributes nothing to `K`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::{col_sums, row_sums, Dims, ProbTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasureKind {
    CramerV,
    SymmetryPhi,
}

impl MeasureKind {
    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::CramerV => "cramer-v",
            MeasureKind::SymmetryPhi => "symmetry-phi",
        }
    }
}

impl std::str::FromStr for MeasureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cramer-v" | "cramer_v" | "V" => Ok(MeasureKind::CramerV),
            "symmetry-phi" | "symmetry_phi" | "Phi" => Ok(MeasureKind::SymmetryPhi),
            other => Err(format!(
                "unknown measure {other:?} (expected cramer-v or symmetry-phi)"
            )),
        }
    }
}

/// A measure together with its lambda.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    kind: MeasureKind,
    lambda: f64,
}

impl MeasureSpec {
    pub fn new(kind: MeasureKind, lambda: f64) -> Result<Self> {
        let ok = match kind {
            MeasureKind::CramerV => lambda >= 0.0 && lambda.is_finite(),
            MeasureKind::SymmetryPhi => lambda > -1.0 && lambda.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidLambda {
                measure: kind.name(),
                lambda,
            });
        }
        Ok(MeasureSpec { kind, lambda })
    }

    pub fn cramer_v(lambda: f64) -> Result<Self> {
        Self::new(MeasureKind::CramerV, lambda)
    }

    pub fn symmetry_phi(lambda: f64) -> Result<Self> {
        Self::new(MeasureKind::SymmetryPhi, lambda)
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Checks that the measure is defined for tables of this shape.
    pub fn check_dims(&self, dims: Dims) -> Result<()> {
        if self.kind == MeasureKind::SymmetryPhi && !dims.is_square() {
            return Err(Error::NotSquare {
                rows: dims.rows(),
                cols: dims.cols(),
            });
        }
        Ok(())
    }

    /// Whether cell `index` enters the measure (all cells for `V`, the
    /// off-diagonal cells for `Phi`).
    pub fn uses_cell(&self, dims: Dims, index: usize) -> bool {
        match self.kind {
            MeasureKind::CramerV => true,
            MeasureKind::SymmetryPhi => index / dims.cols() != index % dims.cols(),
        }
    }
}

/// A value of a normalised measure, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeasureValue(f64);

impl MeasureValue {
    /// Rounding can push a value a few ulps outside `[0, 1]`; it is clamped.
    pub(crate) fn from_raw(value: f64) -> Self {
        debug_assert!(
            value.is_nan() || (-1e-9..=1.0 + 1e-9).contains(&value),
            "measure value {value} outside [0, 1]"
        );
        MeasureValue(value.clamp(0.0, 1.0))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl From<MeasureValue> for f64 {
    fn from(v: MeasureValue) -> f64 {
        v.0
    }
}

/// `x log x` with `0 log 0 = 0`.
#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Power divergence `I(p; q)` of degree `lambda >= 0`.
pub fn power_divergence(p: &ProbTable, q: &ProbTable, lambda: f64) -> Result<f64> {
    if p.dims() != q.dims() {
        return Err(Error::DimensionMismatch);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidLambda {
            measure: "power-divergence",
            lambda,
        });
    }
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::DivergenceUndefined { index });
        }
        total += if lambda == 0.0 {
            pi * (pi / qi).ln()
        } else {
            pi * ((pi / qi).powf(lambda) - 1.0)
        };
    }
    if lambda != 0.0 {
        total /= lambda * (lambda + 1.0);
    }
    Ok(total.max(0.0))
}

/// Normaliser `K` of the Cramér coefficient over the row marginals.
fn cramer_normaliser(row_marginals: &[f64], lambda: f64) -> Result<f64> {
    if row_marginals.iter().filter(|&&a| a > 0.0).count() < 2 {
        return Err(Error::DegenerateMarginals);
    }
    let positive = row_marginals.iter().filter(|&&a| a > 0.0);
    let k = if lambda == 0.0 {
        -positive.map(|&a| xlogx(a)).sum::<f64>()
    } else {
        (positive.map(|&a| a.powf(1.0 - lambda)).sum::<f64>() - 1.0) / (lambda * (lambda + 1.0))
    };
    if k > 0.0 {
        Ok(k)
    } else {
        Err(Error::DegenerateMarginals)
    }
}

/// Generalised Cramér coefficient `V` of degree `lambda >= 0`.
pub fn cramer_v(p: &ProbTable, lambda: f64) -> Result<MeasureValue> {
    MeasureSpec::cramer_v(lambda)?;
    let k = cramer_normaliser(&p.row_marginals(), lambda)?;
    let i = power_divergence(p, &p.independence(), lambda)?;
    Ok(MeasureValue::from_raw(i / k))
}

/// `Phi` departure-from-symmetry measure of degree `lambda > -1`.
pub fn symmetry_phi(p: &ProbTable, lambda: f64) -> Result<MeasureValue> {
    let spec = MeasureSpec::symmetry_phi(lambda)?;
    spec.check_dims(p.dims())?;
    let dims = p.dims();
    let d = dims.rows();
    let mut delta = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                delta += p.get(i, j);
            }
        }
    }
    if delta <= 0.0 {
        return Err(Error::AllDiagonal);
    }
    let mut total = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            let (x, y) = (p.get(i, j), p.get(j, i));
            let s = x + y;
            if s == 0.0 {
                continue;
            }
            let weight = s / delta;
            let phi = split_phi(x / s, y / s, lambda);
            total += weight * phi;
        }
    }
    Ok(MeasureValue::from_raw(total))
}

pub fn measure_value(spec: &MeasureSpec, p: &ProbTable) -> Result<MeasureValue> {
    spec.check_dims(p.dims())?;
    match spec.kind {
        MeasureKind::CramerV => cramer_v(p, spec.lambda),
        MeasureKind::SymmetryPhi => symmetry_phi(p, spec.lambda),
    }
}

/// The measure's formula applied to an arbitrary nonnegative vector, without
/// renormalising onto the simplex.
///
/// This is the function whose coordinatewise partial derivatives
/// [`crate::calculus::derivatives`] returns; it agrees with
/// [`measure_value`] on the simplex.
pub fn evaluate_raw(spec: &MeasureSpec, dims: Dims, x: &[f64]) -> Result<f64> {
    spec.check_dims(dims)?;
    if x.len() != dims.cells() {
        return Err(Error::LengthMismatch {
            expected: dims.cells(),
            found: x.len(),
        });
    }
    match spec.kind {
        MeasureKind::CramerV => raw_cramer_v(dims, x, spec.lambda),
        MeasureKind::SymmetryPhi => raw_symmetry_phi(dims, x, spec.lambda),
    }
}

fn raw_cramer_v(dims: Dims, x: &[f64], lambda: f64) -> Result<f64> {
    let a = row_sums(dims, x);
    let b = col_sums(dims, x);
    let k = cramer_normaliser(&a, lambda)?;
    let mut i_sum = 0.0;
    for (idx, &p) in x.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let q = a[idx / dims.cols()] * b[idx % dims.cols()];
        i_sum += if lambda == 0.0 {
            p * (p / q).ln()
        } else {
            p * (p / q).powf(lambda) - p
        };
    }
    if lambda != 0.0 {
        i_sum /= lambda * (lambda + 1.0);
    }
    Ok(i_sum / k)
}

/// Homogeneous pair contribution `psi(x, y) = (x + y) phi(x / (x + y))`.
pub(crate) fn pair_contribution(x: f64, y: f64, lambda: f64) -> f64 {
    let s = x + y;
    if s == 0.0 {
        return 0.0;
    }
    s * split_phi(x / s, y / s, lambda)
}

/// `phi` for a pair split `(a, b)` with `a + b = 1`, written with `expm1` so
/// that it stays accurate as lambda approaches 0.
fn split_phi(a: f64, b: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0 + (xlogx(a) + xlogx(b)) / LN_2;
    }
    // a^(lambda+1) - a, taken as 0 at a = 0
    let g = |a: f64| {
        if a > 0.0 {
            a * (lambda * a.ln()).exp_m1()
        } else {
            0.0
        }
    };
    1.0 + 2f64.powf(lambda) * (g(a) + g(b)) / (lambda * LN_2).exp_m1()
}

fn raw_symmetry_phi(dims: Dims, x: &[f64], lambda: f64) -> Result<f64> {
    let d = dims.rows();
    let mut delta = 0.0;
    let mut numerator = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            let (u, v) = (x[dims.index(i, j)], x[dims.index(j, i)]);
            delta += u + v;
            numerator += pair_contribution(u, v, lambda);
        }
    }
    if delta <= 0.0 {
        return Err(Error::AllDiagonal);
    }
    Ok(numerator / delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn table(rows: usize, cols: usize, probs: &[f64]) -> ProbTable {
        ProbTable::new(Dims::new(rows, cols).unwrap(), probs.to_vec()).unwrap()
    }

    // Independent evaluation of I from the textbook definition, without the
    // zero conventions or the lambda = 0 shortcut.
    fn divergence_by_formula(p: &[f64], q: &[f64], lambda: f64) -> f64 {
        let mut s = 0.0;
        for (a, b) in p.iter().zip(q) {
            s += a * ((a / b).powf(lambda) - 1.0);
        }
        s / (lambda * (lambda + 1.0))
    }

    #[test]
    fn divergence_examples() {
        let p = table(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(power_divergence(&p, &p, 1.0).unwrap(), 0.0);

        let p = table(2, 2, &[0.5, 0.5, 0.0, 0.0]);
        let q = table(2, 2, &[0.25, 0.75, 0.0, 0.0]);
        let got = power_divergence(&p, &q, 1.0).unwrap();
        let oracle = divergence_by_formula(&[0.5, 0.5], &[0.25, 0.75], 1.0);
        assert!((oracle - 1.0 / 6.0).abs() < 1e-15);
        assert!((got - 1.0 / 6.0).abs() < 1e-15);

        let p = table(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let q = table(2, 2, &[0.5, 0.5, 0.0, 0.0]);
        assert!((power_divergence(&p, &q, 0.0).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn divergence_errors() {
        let p = table(2, 2, &[0.5, 0.5, 0.0, 0.0]);
        let q = table(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            power_divergence(&p, &q, 1.0),
            Err(Error::DivergenceUndefined { index: 1 })
        );
        let r = table(2, 3, &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(power_divergence(&p, &r, 1.0), Err(Error::DimensionMismatch));
        assert!(matches!(
            power_divergence(&p, &p, -0.5),
            Err(Error::InvalidLambda { .. })
        ));
    }

    #[test]
    fn fixture_values() {
        let cases = [
            (fixtures::assoc_weak(), 0.091),
            (fixtures::assoc_moderate(), 0.486),
            (fixtures::assoc_strong(), 0.819),
        ];
        for (p, want) in cases {
            let got = cramer_v(&p, 1.0).unwrap().value();
            assert!((got - want).abs() <= 5e-4, "V = {got}, expected {want}");
        }
        let cases = [
            (fixtures::asym_weak(), 0.099),
            (fixtures::asym_moderate(), 0.473),
            (fixtures::asym_strong(), 0.800),
        ];
        for (p, want) in cases {
            let got = symmetry_phi(&p, 1.0).unwrap().value();
            assert!((got - want).abs() <= 5e-4, "Phi = {got}, expected {want}");
        }
    }

    #[test]
    fn dispatch() {
        let v = measure_value(
            &MeasureSpec::cramer_v(1.0).unwrap(),
            &fixtures::assoc_moderate(),
        )
        .unwrap();
        assert!((v.value() - 0.486).abs() <= 5e-4);
        let phi = measure_value(
            &MeasureSpec::symmetry_phi(1.0).unwrap(),
            &fixtures::asym_moderate(),
        )
        .unwrap();
        assert!((phi.value() - 0.473).abs() <= 5e-4);
        assert_eq!(
            measure_value(
                &MeasureSpec::symmetry_phi(1.0).unwrap(),
                &fixtures::assoc_moderate()
            ),
            Err(Error::NotSquare { rows: 4, cols: 5 })
        );
    }

    #[test]
    fn independent_table_has_zero_v() {
        let rows = [0.3, 0.7];
        let cols = [0.2, 0.5, 0.3];
        let probs: Vec<f64> = rows
            .iter()
            .flat_map(|a| cols.iter().map(move |b| a * b))
            .collect();
        let p = table(2, 3, &probs);
        for lambda in [0.0, 0.5, 1.0, 2.0] {
            assert!(cramer_v(&p, lambda).unwrap().value() < 1e-12);
        }
    }

    #[test]
    fn cramer_errors() {
        let p = table(2, 2, &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(cramer_v(&p, 1.0), Err(Error::DegenerateMarginals));
        assert_eq!(cramer_v(&p, 0.0), Err(Error::DegenerateMarginals));
        assert!(matches!(
            cramer_v(&fixtures::assoc_weak(), -1.0),
            Err(Error::InvalidLambda { .. })
        ));
    }

    #[test]
    fn perfect_association_has_unit_v() {
        let p = table(3, 3, &[0.2, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.3]);
        for lambda in [0.0, 0.5, 1.0, 3.0] {
            assert!((cramer_v(&p, lambda).unwrap().value() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetry_phi_edge_cases() {
        let sym = table(3, 3, &[0.1, 0.1, 0.05, 0.1, 0.2, 0.15, 0.05, 0.15, 0.1]);
        for lambda in [-0.5, 0.0, 1.0, 2.0] {
            assert!(symmetry_phi(&sym, lambda).unwrap().value() < 1e-12);
        }
        let diag = table(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        assert_eq!(symmetry_phi(&diag, 1.0), Err(Error::AllDiagonal));
        // one-directional pairs are maximal departures
        let one_way = table(3, 3, &[0.1, 0.3, 0.0, 0.0, 0.1, 0.2, 0.0, 0.0, 0.3]);
        for lambda in [-0.5, 0.0, 1.0] {
            assert!((symmetry_phi(&one_way, lambda).unwrap().value() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            symmetry_phi(&sym, -1.0),
            Err(Error::InvalidLambda { .. })
        ));
    }

    #[test]
    fn raw_evaluation_agrees_on_simplex() {
        let v = MeasureSpec::cramer_v(1.0).unwrap();
        let phi = MeasureSpec::symmetry_phi(1.0).unwrap();
        for lambda in [0.0, 0.5, 1.0, 2.0] {
            let v = MeasureSpec::cramer_v(lambda).unwrap();
            let p = fixtures::assoc_weak();
            let raw = evaluate_raw(&v, p.dims(), p.probs()).unwrap();
            assert!((raw - cramer_v(&p, lambda).unwrap().value()).abs() < 1e-12);
            let phi = MeasureSpec::symmetry_phi(lambda).unwrap();
            let p = fixtures::asym_strong();
            let raw = evaluate_raw(&phi, p.dims(), p.probs()).unwrap();
            assert!((raw - symmetry_phi(&p, lambda).unwrap().value()).abs() < 1e-12);
        }
        assert!(evaluate_raw(&v, Dims::new(2, 2).unwrap(), &[0.1; 3]).is_err());
        assert!(evaluate_raw(&phi, Dims::new(2, 3).unwrap(), &[0.1; 6]).is_err());
    }

    fn arb_prob(rows: usize, cols: usize) -> impl Strategy<Value = ProbTable> {
        prop::collection::vec(0.0f64..1.0, rows * cols).prop_filter_map("positive mass", move |w| {
            ProbTable::from_weights(Dims::new(rows, cols).unwrap(), w).ok()
        })
    }

    fn arb_interior(rows: usize, cols: usize) -> impl Strategy<Value = ProbTable> {
        prop::collection::vec(0.01f64..1.0, rows * cols)
            .prop_map(move |w| ProbTable::from_weights(Dims::new(rows, cols).unwrap(), w).unwrap())
    }

    fn outer(a: &[f64], b: &[f64]) -> ProbTable {
        let probs = a
            .iter()
            .flat_map(|x| b.iter().map(move |y| x * y))
            .collect();
        ProbTable::from_weights(Dims::new(a.len(), b.len()).unwrap(), probs).unwrap()
    }

    proptest! {
        #[test]
        fn measures_lie_in_unit_interval(
            p in (2usize..5, 2usize..5).prop_flat_map(|(r, c)| arb_prob(r, c)),
            q in (2usize..5).prop_flat_map(|d| arb_prob(d, d)),
            lambda in 0.0f64..3.0,
            phi_lambda in -0.9f64..3.0,
        ) {
            if let Ok(v) = cramer_v(&p, lambda) {
                prop_assert!((0.0..=1.0).contains(&v.value()));
            }
            if let Ok(v) = symmetry_phi(&q, phi_lambda) {
                prop_assert!((0.0..=1.0).contains(&v.value()));
            }
        }

        #[test]
        fn zero_v_iff_independent(
            a in prop::collection::vec(0.05f64..1.0, 3),
            b in prop::collection::vec(0.05f64..1.0, 4),
            bump in 0.01f64..0.2,
            lambda in 0.0f64..2.0,
        ) {
            let indep = outer(&a, &b);
            prop_assert!(cramer_v(&indep, lambda).unwrap().value() < 1e-10);
            let mut w = indep.probs().to_vec();
            w[0] += bump;
            let dependent = ProbTable::from_weights(indep.dims(), w).unwrap();
            prop_assert!(cramer_v(&dependent, lambda).unwrap().value() > 1e-10);
        }

        #[test]
        fn zero_phi_iff_symmetric(
            w in prop::collection::vec(0.05f64..1.0, 16),
            bump in 0.01f64..0.2,
            lambda in -0.5f64..2.0,
        ) {
            let dims = Dims::new(4, 4).unwrap();
            let mut sym = w.clone();
            for i in 0..4 {
                for j in 0..i {
                    sym[dims.index(i, j)] = sym[dims.index(j, i)];
                }
            }
            let p = ProbTable::from_weights(dims, sym.clone()).unwrap();
            prop_assert!(symmetry_phi(&p, lambda).unwrap().value() < 1e-10);
            sym[dims.index(0, 1)] += bump;
            let p = ProbTable::from_weights(dims, sym).unwrap();
            prop_assert!(symmetry_phi(&p, lambda).unwrap().value() > 1e-10);
        }

        #[test]
        fn lambda_continuity_at_zero(
            p in arb_interior(3, 4),
            q in arb_interior(4, 4),
        ) {
            let v0 = cramer_v(&p, 0.0).unwrap().value();
            let v_eps = cramer_v(&p, 1e-6).unwrap().value();
            prop_assert!((v0 - v_eps).abs() < 1e-4);
            let phi0 = symmetry_phi(&q, 0.0).unwrap().value();
            let phi_eps = symmetry_phi(&q, 1e-6).unwrap().value();
            prop_assert!((phi0 - phi_eps).abs() < 1e-4);
        }

        #[test]
        fn phi_ignores_diagonal(
            q in arb_interior(4, 4),
            diag in prop::collection::vec(0.0f64..1.0, 4),
            lambda in -0.5f64..2.0,
        ) {
            let dims = q.dims();
            let before = symmetry_phi(&q, lambda).unwrap().value();
            let mut w = q.probs().to_vec();
            for (i, d) in diag.iter().enumerate() {
                w[dims.index(i, i)] = *d;
            }
            let moved = ProbTable::from_weights(dims, w).unwrap();
            let after = symmetry_phi(&moved, lambda).unwrap().value();
            prop_assert!((before - after).abs() < 1e-12);
        }
    }
}
