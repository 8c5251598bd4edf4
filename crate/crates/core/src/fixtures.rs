//! Reference probability structures used by the simulation studies and tests.
//!
//! The `ASSOC_*` grids are 4x5 tables with weak, moderate and strong
//! association (Cramér `V` at lambda = 1 of 0.091, 0.486 and 0.819). The
//! `ASYM_*` grids are 4x4 tables with weak, moderate and strong departure from
//! symmetry (`Phi` at lambda = 1 of 0.099, 0.473 and 0.800).

use crate::tables::{Dims, ProbTable};

#[rustfmt::skip]
pub const ASSOC_WEAK: [f64; 20] = [
    0.048, 0.055, 0.105, 0.023, 0.018,
    0.032, 0.061, 0.035, 0.018, 0.098,
    0.055, 0.131, 0.016, 0.082, 0.054,
    0.029, 0.012, 0.032, 0.033, 0.063,
];

#[rustfmt::skip]
pub const ASSOC_MODERATE: [f64; 20] = [
    0.154, 0.013, 0.021, 0.018, 0.145,
    0.017, 0.017, 0.159, 0.015, 0.012,
    0.015, 0.157, 0.011, 0.017, 0.018,
    0.013, 0.011, 0.013, 0.163, 0.011,
];

#[rustfmt::skip]
pub const ASSOC_STRONG: [f64; 20] = [
    0.185, 0.006, 0.003, 0.006, 0.182,
    0.004, 0.003, 0.188, 0.005, 0.004,
    0.005, 0.187, 0.004, 0.007, 0.003,
    0.006, 0.004, 0.005, 0.190, 0.003,
];

#[rustfmt::skip]
pub const ASYM_WEAK: [f64; 16] = [
    0.100, 0.060, 0.038, 0.071,
    0.038, 0.100, 0.061, 0.026,
    0.068, 0.051, 0.100, 0.031,
    0.029, 0.066, 0.061, 0.100,
];

#[rustfmt::skip]
pub const ASYM_MODERATE: [f64; 16] = [
    0.100, 0.018, 0.012, 0.007,
    0.094, 0.100, 0.021, 0.014,
    0.082, 0.089, 0.100, 0.023,
    0.071, 0.081, 0.088, 0.100,
];

#[rustfmt::skip]
pub const ASYM_STRONG: [f64; 16] = [
    0.100, 0.089, 0.004, 0.102,
    0.005, 0.100, 0.094, 0.007,
    0.084, 0.002, 0.100, 0.111,
    0.009, 0.088, 0.005, 0.100,
];

/// All six fixtures as `(id, cols, cells)`.
pub const ALL: [(&str, usize, &[f64]); 6] = [
    ("assoc_weak", 5, &ASSOC_WEAK),
    ("assoc_moderate", 5, &ASSOC_MODERATE),
    ("assoc_strong", 5, &ASSOC_STRONG),
    ("asym_weak", 4, &ASYM_WEAK),
    ("asym_moderate", 4, &ASYM_MODERATE),
    ("asym_strong", 4, &ASYM_STRONG),
];

pub fn prob_table(cells: &[f64], cols: usize) -> ProbTable {
    let dims = Dims::new(cells.len() / cols, cols).expect("fixture dims");
    ProbTable::new(dims, cells.to_vec()).expect("fixture sums to one")
}

pub fn assoc_weak() -> ProbTable {
    prob_table(&ASSOC_WEAK, 5)
}

pub fn assoc_moderate() -> ProbTable {
    prob_table(&ASSOC_MODERATE, 5)
}

pub fn assoc_strong() -> ProbTable {
    prob_table(&ASSOC_STRONG, 5)
}

pub fn asym_weak() -> ProbTable {
    prob_table(&ASYM_WEAK, 4)
}

pub fn asym_moderate() -> ProbTable {
    prob_table(&ASYM_MODERATE, 4)
}

pub fn asym_strong() -> ProbTable {
    prob_table(&ASYM_STRONG, 4)
}

/// Render a grid as CSV with 3-decimal cells.
pub fn to_csv(cells: &[f64], cols: usize) -> String {
    cells
        .chunks(cols)
        .map(|row| {
            let cells: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
            cells.join(",") + "\n"
        })
        .collect()
}

/// Counts `round(scale * p_ij)`, e.g. `scale = 1000` for the 3-decimal grids.
pub fn scaled_counts(cells: &[f64], scale: f64) -> Vec<u64> {
    cells.iter().map(|p| (p * scale).round() as u64).collect()
}
