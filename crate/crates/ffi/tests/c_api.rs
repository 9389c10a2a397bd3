use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use machopt_core::data::{full_factorial, machining_factors, simulate_dataset, CovariateScale, Truth};
use machopt_ffi::*;
use nalgebra::Matrix2;

fn synthetic_csv() -> CString {
    let mut rough = [0.0; 14];
    let mut power = [0.0; 14];
    rough[0] = -0.2;
    rough[1] = 0.25;
    power[0] = 3.6;
    power[2] = 0.2;
    power[7] = -0.4;
    let truth = Truth::new(rough, power, Matrix2::new(0.01, 0.002, 0.002, 0.004));
    let f = machining_factors();
    let ds = simulate_dataset(&truth, &full_factorial(&f), &f, CovariateScale::Coded, 5).unwrap();
    CString::new(ds.to_csv()).unwrap()
}

fn last_error() -> String {
    let p = machopt_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn fitted() -> *mut MachoptDraws {
    let csv = synthetic_csv();
    let mut ds = ptr::null_mut();
    let mut draws = ptr::null_mut();
    unsafe {
        assert_eq!(machopt_dataset_parse(csv.as_ptr(), &mut ds), MachoptStatus::Ok);
        assert_eq!(machopt_dataset_len(ds), 250);
        let st = machopt_fit(ds, MachoptScale::Coded, 1200, 200, 1, 2, 11, &mut draws);
        assert_eq!(st, MachoptStatus::Ok);
        machopt_dataset_free(ds);
    }
    draws
}

#[test]
fn fit_predict_optimize_round_trip() {
    let draws = fitted();
    unsafe {
        assert_eq!(machopt_draws_len(draws), 2000);
        let e = [2.0, 201.0, 1425.0];
        let (mut r, mut p) = (0.0, 0.0);
        assert_eq!(
            machopt_predict_point(draws, MachoptMachine::A, e.as_ptr(), &mut r, &mut p),
            MachoptStatus::Ok
        );
        // Centre point: log means are the intercepts.
        assert!((r.ln() + 0.2).abs() < 0.05, "roughness {r}");
        assert!((p.ln() - 3.6).abs() < 0.05, "power {p}");

        let mut csv = ptr::null_mut();
        assert_eq!(machopt_draws_to_csv(draws, &mut csv), MachoptStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(machopt_draws_from_csv(csv, MachoptScale::Coded, &mut again), MachoptStatus::Ok);
        let (mut r2, mut p2) = (0.0, 0.0);
        machopt_predict_point(again, MachoptMachine::A, e.as_ptr(), &mut r2, &mut p2);
        assert!((r2 - r).abs() < 1e-12 * r && (p2 - p).abs() < 1e-12 * p);
        machopt_string_free(csv);
        machopt_draws_free(again);

        let mut opt = MachoptOptimum::default();
        let st = machopt_optimize(draws, MachoptMachine::B, 20.0, 0.5, MachoptMetric::Relative, 3, &mut opt);
        assert_eq!(st, MachoptStatus::Ok);
        let lo = [1.0, 134.0, 950.0];
        let hi = [3.0, 268.0, 1900.0];
        for d in 0..3 {
            assert!(opt.e_star[d] >= lo[d] && opt.e_star[d] <= hi[d]);
        }
        assert!(opt.distance >= 0.0 && opt.evaluations > 0);
        machopt_draws_free(draws);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(machopt_dataset_parse(ptr::null(), &mut ds), MachoptStatus::InvalidArgument);
        assert!(ds.is_null());
        let bad = CString::new("machine,x1,x2,x3,roughness,power\nC,1,134,950,0.5,30\n").unwrap();
        assert_eq!(machopt_dataset_parse(bad.as_ptr(), &mut ds), MachoptStatus::Validation);
        assert!(last_error().contains("machine"));

        let mut draws = ptr::null_mut();
        let junk = CString::new("not,a,draws,file\n").unwrap();
        assert_eq!(machopt_draws_from_csv(junk.as_ptr(), MachoptScale::Coded, &mut draws), MachoptStatus::Validation);

        let (mut lo, mut hi) = (0.0, 0.0);
        let few = [1.0, 2.0];
        assert_eq!(machopt_hdi(few.as_ptr(), 2, 0.95, &mut lo, &mut hi), MachoptStatus::Validation);

        let mut sd = 0.0;
        assert_eq!(machopt_finite_pop_sd(few.as_ptr(), 1, &mut sd), MachoptStatus::Validation);
        assert_eq!(machopt_dataset_len(ptr::null()), 0);
        machopt_dataset_free(ptr::null_mut());
        machopt_draws_free(ptr::null_mut());
        machopt_string_free(ptr::null_mut());
    }
}

#[test]
fn scalar_helpers() {
    unsafe {
        let mut sd = 0.0;
        let a = [1.0, 2.0, 3.0];
        assert_eq!(machopt_finite_pop_sd(a.as_ptr(), 3, &mut sd), MachoptStatus::Ok);
        assert!((sd - 1.0).abs() < 1e-12);
        let samples: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(machopt_hdi(samples.as_ptr(), 1000, 0.9, &mut lo, &mut hi), MachoptStatus::Ok);
        assert_eq!(hi - lo, 899.0);
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok()
}

#[test]
fn header_compiles_as_c() {
    if !have_cc() {
        eprintln!("skipped: no C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"machopt.h\"\nint main(void) { MachoptOptimum o; (void)o; return MACHOPT_STATUS_OK; }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(crate_dir().join("include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn static_lib() -> Option<PathBuf> {
    // tests/<exe> lives in target/<profile>/deps
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libmachopt_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_lib() else {
        eprintln!("skipped: static library not built");
        return;
    };
    if !have_cc() {
        eprintln!("skipped: no C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "machopt.h"
int main(void) {
    double a[3] = {1.0, 2.0, 3.0};
    double sd = 0.0;
    if (machopt_finite_pop_sd(a, 3, &sd) != MACHOPT_STATUS_OK) return 1;
    MachoptDataset *ds = NULL;
    if (machopt_dataset_parse(NULL, &ds) != MACHOPT_STATUS_INVALID_ARGUMENT) return 2;
    if (machopt_last_error() == NULL) return 3;
    printf("%.6f\n", sd);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let out = Command::new("cc")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status);
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "1.000000");
}

#[test]
fn header_is_checked_in() {
    let h = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/machopt.h")).unwrap();
    for name in [
        "machopt_dataset_parse",
        "machopt_fit",
        "machopt_optimize",
        "machopt_hdi",
        "machopt_finite_pop_sd",
        "machopt_last_error",
        "machopt_string_free",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}
