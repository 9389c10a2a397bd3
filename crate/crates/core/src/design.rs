//! Regressor expansion and the stacked two-equation design.
//!
//! Both equations (log roughness and log power) share one regressor row of
//! 14 terms, in this fixed order:
//!
//! | index | term     | index | term      |
//! |-------|----------|-------|-----------|
//! | 0     | intercept| 7     | I(m)      |
//! | 1     | X1       | 8     | X1·I(m)   |
//! | 2     | X2       | 9     | X2·I(m)   |
//! | 3     | X3       | 10    | X3·I(m)   |
//! | 4     | X1²      | 11    | X1·X2     |
//! | 5     | X2²      | 12    | X1·X3     |
//! | 6     | X3²      | 13    | X2·X3     |
//!
//! `I(m)` is 1 for machine B and 0 for machine A. Stacked coefficient vectors
//! hold the roughness equation in positions 0–13 and power in 14–27.

use nalgebra::{DMatrix, SMatrix};

use crate::data::{CovariateScale, Dataset, MachineId};
use crate::error::Result;

pub const N_TERMS: usize = 14;
pub const N_EQ: usize = 2;
pub const N_COEF: usize = N_TERMS * N_EQ;

/// Row labels for the coefficients of one equation.
pub const TERM_NAMES: [&str; N_TERMS] = [
    "Intercept", "X1", "X2", "X3", "X1^2", "X2^2", "X3^2", "I(m)", "X1I(m)", "X2I(m)", "X3I(m)",
    "X1X2", "X1X3", "X2X3",
];

/// The 14-term covariate vector of a single run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressorRow(pub [f64; N_TERMS]);

impl RegressorRow {
    pub fn dot(&self, coefs: &[f64]) -> f64 {
        self.0.iter().zip(coefs).map(|(a, b)| a * b).sum()
    }
}

pub fn build_row(x: [f64; 3], machine: MachineId) -> RegressorRow {
    let [x1, x2, x3] = x;
    let m = machine.dummy();
    RegressorRow([
        1.0,
        x1,
        x2,
        x3,
        x1 * x1,
        x2 * x2,
        x3 * x3,
        m,
        x1 * m,
        x2 * m,
        x3 * m,
        x1 * x2,
        x1 * x3,
        x2 * x3,
    ])
}

/// Shared n×14 regressor matrix and n×2 matrix of log responses
/// (column 0 roughness, column 1 power).
#[derive(Debug, Clone, PartialEq)]
pub struct SurDesign {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl SurDesign {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn xtx(&self) -> SMatrix<f64, N_TERMS, N_TERMS> {
        let g = self.x.tr_mul(&self.x);
        SMatrix::from_fn(|i, j| g[(i, j)])
    }

    pub fn xty(&self) -> SMatrix<f64, N_TERMS, N_EQ> {
        let g = self.x.tr_mul(&self.y);
        SMatrix::from_fn(|i, j| g[(i, j)])
    }

    /// Debug export: the 14 regressor columns followed by the two log responses.
    pub fn to_csv(&self) -> String {
        let mut out = TERM_NAMES.join(",");
        out.push_str(",log_roughness,log_power\n");
        for i in 0..self.n() {
            let row: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(self.y.row(i).iter())
                .map(|v| v.to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn build_design(dataset: &Dataset, scale: CovariateScale) -> Result<SurDesign> {
    let coding = dataset.coding(scale);
    let n = dataset.len();
    let mut x = DMatrix::zeros(n, N_TERMS);
    let mut y = DMatrix::zeros(n, N_EQ);
    for (i, run) in dataset.runs.iter().enumerate() {
        let row = build_row(coding.covariates(run.x), run.machine);
        for k in 0..N_TERMS {
            x[(i, k)] = row.0[k];
        }
        y[(i, 0)] = run.roughness.ln();
        y[(i, 1)] = run.power.ln();
    }
    Ok(SurDesign { x, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{full_factorial, machining_factors, simulate_dataset, Truth};
    use nalgebra::Matrix2;

    #[test]
    fn rows_follow_term_order() {
        assert_eq!(build_row([0.0, 0.0, 0.0], MachineId::A).0, {
            let mut r = [0.0; 14];
            r[0] = 1.0;
            r
        });
        assert_eq!(
            build_row([-1.0, -1.0, -1.0], MachineId::B).0,
            [1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0]
        );
        assert_eq!(
            build_row([1.0, -1.0, 0.0], MachineId::A).0,
            [1.0, 1.0, -1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]
        );
    }

    fn factorial_dataset() -> Dataset {
        let f = machining_factors();
        let truth = Truth::new([0.1; 14], [3.5; 14], Matrix2::new(0.01, 0.0, 0.0, 0.01));
        simulate_dataset(&truth, &full_factorial(&f), &f, CovariateScale::Coded, 1).unwrap()
    }

    #[test]
    fn factorial_design_has_full_rank() {
        let design = build_design(&factorial_dataset(), CovariateScale::Coded).unwrap();
        assert_eq!(design.x.shape(), (250, 14));
        assert_eq!(design.y.shape(), (250, 2));
        let eig = design.xtx().symmetric_eigenvalues();
        assert!(eig.min() > 1e-6, "smallest eigenvalue {}", eig.min());
    }

    #[test]
    fn machine_a_only_has_zero_dummy() {
        let ds = factorial_dataset().for_machine(MachineId::A).unwrap();
        let design = build_design(&ds, CovariateScale::Coded).unwrap();
        assert!(design.x.column(7).iter().all(|&v| v == 0.0));
        assert!(design.x.column(9).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_run_shape_and_logs() {
        let ds = factorial_dataset();
        let one = Dataset::new(vec![ds.runs[3]], ds.factors.clone()).unwrap();
        let design = build_design(&one, CovariateScale::Coded).unwrap();
        assert_eq!(design.x.shape(), (1, 14));
        assert_eq!(design.y[(0, 0)], ds.runs[3].roughness.ln());
        assert_eq!(design.y[(0, 1)], ds.runs[3].power.ln());
    }
}
