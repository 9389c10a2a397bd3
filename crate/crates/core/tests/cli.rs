use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use machopt_core::cli::{sha256_hex, Manifest};

const TRUTH: &str = "\
roughness = [-0.20, 0.25, 0.05, -0.04, 0.03, 0.01, 0.01, -0.10, 0.02, 0.01, 0.00, 0.02, -0.01, 0.01]
power = [3.60, 0.04, 0.20, 0.05, 0.01, 0.02, 0.01, -0.40, 0.01, 0.03, 0.01, 0.01, 0.00, 0.01]
sigma = [0.010, 0.002, 0.004]
";

const CONFIG: &str = "\
seed = 31

[paths]
output_dir = \"out\"
truth = \"truth.toml\"

[mcmc]
iterations = 1200
burn_in = 200
chains = 2

[anova.mcmc]
iterations = 600
burn_in = 200
chains = 2

[optimizer.thresholds.A]
power = 30.0
roughness = 0.45

[optimizer.thresholds.B]
power = 20.0
roughness = 0.40

[surface]
resolution = 11

[predictive]
draws = 4000
bins = 20
";

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("truth.toml"), TRUTH).unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Workspace { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn out(&self, name: &str) -> PathBuf {
        self.path().join("out").join(name)
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.out(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_machopt"))
            .current_dir(self.path())
            .env_remove("MACHOPT_OUTPUT_DIR")
            .args(["-c", "run.toml"])
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn manifest(&self, command: &str) -> Manifest {
        serde_json::from_str(&self.read(&format!("manifest_{command}.json"))).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_writes_full_factorial_deterministically() {
    let w = Workspace::new(CONFIG);
    w.ok(&["simulate"]);
    let first = w.read("dataset.csv");
    assert_eq!(first.lines().count(), 251);
    w.ok(&["simulate"]);
    assert_eq!(w.read("dataset.csv"), first);
    let m = w.manifest("simulate");
    assert_eq!(m.outputs[0].sha256, sha256_hex(first.as_bytes()));
    assert_eq!(m.config_sha256, sha256_hex(m.config.as_bytes()));
}

#[test]
fn simulate_input_errors() {
    let w = Workspace::new(CONFIG);
    fs::write(w.path().join("empty.csv"), "machine,x1,x2,x3\n").unwrap();
    let out = w.run(&["--set", "paths.design=\"empty.csv\"", "simulate"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("empty"));
    fs::write(w.path().join("bad.toml"), "roughness = [1.0]\npower = [1.0]\nsigma = [1, 0, 1]\n").unwrap();
    let out = w.run(&["simulate", "--truth", "bad.toml"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("14 coefficients"), "{}", stderr(&out));
    let out = w.run(&["--set", "paths.truth=\"nope.toml\"", "simulate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fit_writes_three_artifacts_and_manifest() {
    let w = Workspace::new(CONFIG);
    w.ok(&["simulate"]);
    w.ok(&["fit", "--export-design"]);
    let m = w.manifest("fit");
    let names: Vec<&str> = m.outputs.iter().map(|o| o.path.as_str()).collect();
    assert_eq!(names, ["design.csv", "draws.csv", "convergence.json", "significance.csv"]);
    assert_eq!(m.inputs[0].path, "out/dataset.csv");
    assert_eq!(w.read("draws.csv").lines().count(), 1 + 2000);
    let sig = w.read("significance.csv");
    assert_eq!(sig.lines().count(), 15);
    assert!(sig.starts_with("variable,roughness_hdi_lower"));
    let conv: serde_json::Value = serde_json::from_str(&w.read("convergence.json")).unwrap();
    assert!(conv["warnings"].as_array().unwrap().is_empty());
    assert_eq!(conv["scale"], "coded");
}

#[test]
fn missing_prerequisites_have_distinct_exit_codes() {
    let w = Workspace::new(CONFIG);
    let out = w.run(&["fit"]);
    assert_eq!(code(&out), 2, "missing dataset: {}", stderr(&out));
    let out = w.run(&["optimize"]);
    assert_eq!(code(&out), 4, "missing draws: {}", stderr(&out));
    let out = w.run(&["surface"]);
    assert_eq!(code(&out), 4);
    let out = w.run(&["--set", "mcmc.iterations=200", "--set", "mcmc.burn_in=200", "fit"]);
    assert_eq!(code(&out), 2);
    let out = Command::new(env!("CARGO_BIN_EXE_machopt"))
        .current_dir(w.path())
        .args(["-c", "missing.toml", "fit"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn singular_prior_scale_is_a_numerical_failure() {
    let w = Workspace::new(CONFIG);
    w.ok(&["simulate"]);
    // A non-SPD inverse-Wishart scale is caught at validation.
    let out = w.run(&["--set", "prior.s0=[1.0, 2.0, 1.0]", "fit"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn optimize_per_machine_and_error_report() {
    let w = Workspace::new(CONFIG);
    w.ok(&["simulate"]);
    w.ok(&["fit"]);
    let out = w.run(&["--set", "optimizer.thresholds={}", "optimize"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("thresholds required"));

    w.ok(&["optimize"]);
    for m in ["A", "B"] {
        let r: serde_json::Value = serde_json::from_str(&w.read(&format!("optimum_{m}.json"))).unwrap();
        assert_eq!(r["machine"], m);
        assert_eq!(r["metric"], "relative");
    }
    assert!(!w.out("table5.csv").exists());

    w.ok(&[
        "--set",
        "optimizer.observed.A={ roughness = 0.7, power = 31.0 }",
        "--set",
        "optimizer.machines=[\"A\"]",
        "optimize",
    ]);
    let t = w.read("table5.csv");
    assert!(t.lines().next().unwrap().contains("relative_error"));
    assert_eq!(t.lines().count(), 3);
}

#[test]
fn anova_scopes_and_constant_response() {
    let w = Workspace::new(CONFIG);
    w.ok(&["simulate"]);
    w.ok(&["anova"]);
    for r in ["power", "roughness"] {
        assert_eq!(w.read(&format!("anova_{r}.csv")).lines().count(), 4);
    }
    w.ok(&["--set", "anova.scope=\"machine\"", "anova"]);
    for r in ["power", "roughness"] {
        for m in ["A", "B"] {
            assert_eq!(w.read(&format!("anova_{r}_{m}.csv")).lines().count(), 4);
        }
    }

    let text = w.read("dataset.csv");
    let mut constant = String::from("machine,x1,x2,x3,roughness,power\n");
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        constant.push_str(&format!("{},{},{},{},0.8,40\n", f[0], f[1], f[2], f[3]));
    }
    fs::write(w.path().join("constant.csv"), constant).unwrap();
    w.ok(&["--set", "paths.dataset=\"constant.csv\"", "anova"]);
    for r in ["power", "roughness"] {
        for line in w.read(&format!("anova_{r}.csv")).lines().skip(1) {
            let median: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!(median < 0.02, "{r}: {line}");
        }
    }
}

#[test]
fn plot_data_commands() {
    let w = Workspace::new(CONFIG);
    w.ok(&["simulate"]);
    w.ok(&["fit"]);
    w.ok(&["boxplot"]);
    let b = w.read("boxplot_power.csv");
    let machines: Vec<&str> = b.lines().skip(1).map(|l| &l[..1]).collect();
    assert_eq!(machines, ["A", "B"]);

    // Surfaces and predictive densities need an operating point.
    assert_eq!(code(&w.run(&["predictive"])), 4);
    w.ok(&[
        "--set",
        "surface.fixed.A=[1.0, 268.0, 950.0]",
        "--set",
        "surface.machines=[\"A\"]",
        "--set",
        "surface.pairs=[[1, 2]]",
        "--svg",
        "surface",
    ]);
    let s = w.read("surface_A_x1_x2.csv");
    assert_eq!(s.lines().count(), 1 + 121);
    assert!(s.starts_with("depth"));
    assert!(w.out("surface_A_x1_x2_power.svg").exists());

    w.ok(&["optimize"]);
    w.ok(&["--svg", "predictive"]);
    for m in ["A", "B"] {
        let hdi = w.read(&format!("predictive_{m}_hdi.csv"));
        assert_eq!(hdi.lines().count(), 3);
        let hist = w.read(&format!("predictive_{m}.csv"));
        assert_eq!(hist.lines().count(), 1 + 2 * 20);
        assert!(w.out(&format!("predictive_{m}_power.svg")).exists());
    }
}

#[test]
fn manifest_config_replays_the_run() {
    let w = Workspace::new(CONFIG);
    w.ok(&["simulate"]);
    w.ok(&["--set", "mcmc.iterations=900", "fit"]);
    let m = w.manifest("fit");
    let replay = Workspace::new(&m.config);
    fs::create_dir_all(replay.path().join("out")).unwrap();
    fs::copy(w.out("dataset.csv"), replay.out("dataset.csv")).unwrap();
    replay.ok(&["fit"]);
    let again = replay.manifest("fit");
    assert_eq!(again.outputs, m.outputs);
    assert_eq!(again.config_sha256, m.config_sha256);
}

#[test]
fn env_var_overrides_output_dir() {
    let w = Workspace::new(CONFIG);
    let out = Command::new(env!("CARGO_BIN_EXE_machopt"))
        .current_dir(w.path())
        .env("MACHOPT_OUTPUT_DIR", "elsewhere")
        .args(["-c", "run.toml", "simulate"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(w.path().join("elsewhere/dataset.csv").exists());
    assert!(!w.out("dataset.csv").exists());
}
