mod common;

use machopt_core::data::{
    code_factor, full_factorial, machining_factors, parse_dataset, simulate_dataset, CodingParams, CovariateScale,
    DesignPoint, ExperimentalRun, MachineId, Truth,
};
use machopt_core::design::build_row;
use machopt_core::Error;
use nalgebra::Matrix2;
use proptest::prelude::*;

#[test]
fn optimum_row_and_zero_response() {
    let f = machining_factors();
    let ds = parse_dataset("machine,x1,x2,x3,roughness,power\nB,1,268,1111.512,1.35,24.86\n", &f).unwrap();
    assert_eq!(ds.runs[0].machine, MachineId::B);
    assert_eq!(ds.runs[0].x, [1.0, 268.0, 1111.512]);
    let err = parse_dataset("machine,x1,x2,x3,roughness,power\nA,1,134,950,0.0,41.0\n", &f).unwrap_err();
    assert!(matches!(err, Error::NonPositiveResponse { row: 1, .. }), "{err}");
}

#[test]
fn noiseless_simulation_matches_mean_surface() {
    let base = common::reference_truth();
    let truth = Truth::new(
        std::array::from_fn(|k| base.beta[k]),
        std::array::from_fn(|k| base.beta[14 + k]),
        Matrix2::new(1e-12, 0.0, 0.0, 1e-12),
    );
    let ds = common::factorial_dataset(&truth, 9);
    let coding = ds.coding(CovariateScale::Coded);
    for run in &ds.runs {
        let m = truth.log_mean(coding.covariates(run.x), run.machine);
        assert!((run.roughness / m[0].exp() - 1.0).abs() < 1e-4);
        assert!((run.power / m[1].exp() - 1.0).abs() < 1e-4);
    }
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let t = common::reference_truth();
    assert_eq!(common::factorial_dataset(&t, 4).to_csv(), common::factorial_dataset(&t, 4).to_csv());
    assert_ne!(common::factorial_dataset(&t, 4).to_csv(), common::factorial_dataset(&t, 5).to_csv());
}

#[test]
fn non_spd_sigma_is_rejected() {
    let base = common::reference_truth();
    let mut t = base.clone();
    t.sigma = Matrix2::new(0.01, 0.02, 0.02, 0.01);
    let f = machining_factors();
    let err = simulate_dataset(&t, &full_factorial(&f), &f, CovariateScale::Coded, 1).unwrap_err();
    assert!(matches!(err, Error::NotSpd(_)));
    assert!(simulate_dataset(&base, &[], &f, CovariateScale::Coded, 1).is_err());
}

#[test]
fn simulated_log_residual_covariance_matches_sigma() {
    let truth = common::reference_truth();
    let f = machining_factors();
    let design: Vec<DesignPoint> = full_factorial(&f).into_iter().cycle().take(10_000).collect();
    let ds = simulate_dataset(&truth, &design, &f, CovariateScale::Coded, 77).unwrap();
    let coding = ds.coding(CovariateScale::Coded);
    let res: Vec<[f64; 2]> = ds
        .runs
        .iter()
        .map(|r| {
            let m = truth.log_mean(coding.covariates(r.x), r.machine);
            [r.roughness.ln() - m[0], r.power.ln() - m[1]]
        })
        .collect();
    let n = res.len() as f64;
    let cov = |a: usize, b: usize| res.iter().map(|r| r[a] * r[b]).sum::<f64>() / n;
    let s = truth.sigma;
    assert!((cov(0, 0) / s[(0, 0)] - 1.0).abs() < 0.05);
    assert!((cov(1, 1) / s[(1, 1)] - 1.0).abs() < 0.05);
    // The off-diagonal is small, so compare on the scale of the variances.
    let scale = (s[(0, 0)] * s[(1, 1)]).sqrt();
    assert!((cov(0, 1) - s[(0, 1)]).abs() < 0.05 * scale);
}

#[test]
fn coding_examples() {
    let depth = CodingParams::from_bounds(1.0, 3.0);
    assert_eq!(code_factor(1.0, &depth), -1.0);
    assert_eq!(code_factor(2.0, &depth), 0.0);
    let feed = CodingParams::from_bounds(134.0, 268.0);
    assert_eq!(code_factor(268.0, &feed), 1.0);
    assert!(feed.is_extrapolation(300.0));
    assert_eq!(code_factor(402.0, &feed), 3.0);
}

fn run_strategy() -> impl Strategy<Value = ExperimentalRun> {
    (
        prop::bool::ANY,
        1.0..=3.0f64,
        134.0..=268.0f64,
        950.0..=1900.0f64,
        1e-3..1e3f64,
        1e-3..1e3f64,
    )
        .prop_map(|(b, x1, x2, x3, r, p)| ExperimentalRun {
            machine: if b { MachineId::B } else { MachineId::A },
            x: [x1, x2, x3],
            roughness: r,
            power: p,
        })
}

proptest! {
    #[test]
    fn coding_round_trips(lo in -1e4..1e4f64, width in 1e-3..1e4f64, t in -2.0..2.0f64) {
        let p = CodingParams::from_bounds(lo, lo + width);
        let v = lo + t * width;
        let back = p.decode(code_factor(v, &p));
        prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0));
    }

    #[test]
    fn parse_inverts_serialize(runs in prop::collection::vec(run_strategy(), 1..40)) {
        let f = machining_factors();
        let ds = machopt_core::data::Dataset::new(runs, f.clone()).unwrap();
        let back = parse_dataset(&ds.to_csv(), &f).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn simulated_data_validates(seed in any::<u64>(), n in 1usize..60) {
        let f = machining_factors();
        let design: Vec<DesignPoint> = full_factorial(&f).into_iter().step_by(3).take(n).collect();
        let ds = simulate_dataset(&common::reference_truth(), &design, &f, CovariateScale::Coded, seed).unwrap();
        prop_assert_eq!(parse_dataset(&ds.to_csv(), &f).unwrap(), ds);
    }

    #[test]
    fn build_row_is_pure(x in prop::array::uniform3(-2.0..2.0f64), b in prop::bool::ANY) {
        let m = if b { MachineId::B } else { MachineId::A };
        prop_assert_eq!(build_row(x, m), build_row(x, m));
    }
}
