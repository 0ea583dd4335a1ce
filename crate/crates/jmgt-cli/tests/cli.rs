use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn jmgt(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_jmgt"))
        .args(args)
        .arg("--output")
        .arg(dir)
        .arg("--reproducible")
        .env_remove("JMGT_OUTPUT_DIR")
        .output()
        .expect("binary runs");
    let code = out.status.code().expect("exit code");
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code, report)
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn default_kernel_satisfies_all_assumptions() {
    let d = tmp();
    let (code, r) = jmgt(d.path(), &["validate-kernel"]);
    assert_eq!(code, 0);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["result"]["pass"], true);
    assert!(d.path().join("validate-kernel.json").exists());
}

#[test]
fn kernel_exceeding_the_sound_speed_fails_g2() {
    let d = tmp();
    let (code, r) = jmgt(d.path(), &["validate-kernel", "--set", "kernel.m=2"]);
    assert_eq!(code, 2);
    assert_eq!(r["result"]["assumptions"]["g2"]["pass"], false);
}

#[test]
fn malformed_kernel_file_is_a_usage_error() {
    let d = tmp();
    let csv = d.path().join("g.csv");
    std::fs::write(&csv, "0.0,0.5\n1.0,oops\n").unwrap();
    let cfg = d.path().join("cfg.toml");
    std::fs::write(&cfg, "[kernel]\nkind = \"csv\"\npath = \"g.csv\"\n").unwrap();
    let (code, _) = jmgt(d.path(), &["validate-kernel", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 64);
}

#[test]
fn symbol_summaries() {
    let d = tmp();
    let (code, r) = jmgt(d.path(), &["symbol"]);
    assert_eq!(code, 0);
    assert_eq!(
        r["result"]["summary"],
        "Critical; stabilized by memory; regularity-loss scaling confirmed"
    );
    let csv = std::fs::read_to_string(d.path().join("symbol.csv")).unwrap();
    assert_eq!(csv.lines().count(), 62);
    let (_, r) = jmgt(d.path(), &["symbol", "--set", "kernel.m=0"]);
    assert_eq!(r["result"]["summary"], "Marginal (undamped oscillatory modes)");
    let (_, r) = jmgt(d.path(), &["symbol", "--set", "kernel.m=0", "--set", "medium.b=1.5"]);
    assert_eq!(r["result"]["summary"], "AsymptoticallyStable");
}

#[test]
fn linear_simulation_writes_energy_columns() {
    let d = tmp();
    let (code, r) = jmgt(d.path(), &["simulate", "--set", "solver.t_end=50"]);
    assert_eq!(code, 0);
    assert!(r["result"]["failure"].is_null());
    let csv = std::fs::read_to_string(d.path().join("trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    for col in ["t", "E_bold_0", "D_bold_0", "F3_0", "lyapunov_0"] {
        assert!(header.split(',').any(|h| h == col), "missing {col}");
    }
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((last[0] - 50.0).abs() < 1e-9);
    assert!(last.iter().all(|x| x.is_finite()));
}

#[test]
fn supercritical_memoryless_run_blows_up_with_partial_output() {
    let d = tmp();
    let (code, r) = jmgt(
        d.path(),
        &[
            "simulate",
            "--set",
            "kernel.m=0",
            "--set",
            "medium.b=0.5",
            "--set",
            "grid.N=64",
            "--set",
            "solver.t_end=200",
        ],
    );
    assert_eq!(code, 3);
    assert_eq!(r["result"]["failure"]["kind"], "blow_up");
    assert!(r["result"]["failure"]["t"].as_f64().unwrap() < 200.0);
    assert!(d.path().join("trajectory.csv").exists());
}

#[test]
fn elastic_nonlinearity_needs_a_nonlinear_scheme() {
    let d = tmp();
    let (code, _) = jmgt(d.path(), &["simulate", "--set", "medium.k=1"]);
    assert_eq!(code, 64);
}

#[test]
fn default_decay_rates() {
    let d = tmp();
    let (code, r) = jmgt(d.path(), &["decay"]);
    assert_eq!(code, 0);
    let fits = r["result"]["fits"].as_array().unwrap();
    for (f, target) in fits.iter().zip([-0.75, -1.25]) {
        let e = f["fit"]["exponent"].as_f64().unwrap();
        assert!((e - target).abs() <= 0.05, "{e} vs {target}");
    }
    assert!(d.path().join("decay_series.csv").exists());
}

#[test]
fn regularity_loss_report_is_informational() {
    let d = tmp();
    let (code, r) = jmgt(d.path(), &["decay", "--set", "analysis.regularity_loss=true"]);
    assert_eq!(code, 0);
    assert_eq!(r["result"]["regularity_loss"]["degraded"], true);
}

#[test]
fn transient_window_is_flagged() {
    let d = tmp();
    let (code, r) = jmgt(
        d.path(),
        &["decay", "--set", "analysis.fit_window=[0.1, 3.0]", "--set", "analysis.fit_samples=20"],
    );
    assert_eq!(code, 5);
    assert!(!r["result"]["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn verify_passes_and_detects_a_mis_signed_functional() {
    let d = tmp();
    let (code, r) = jmgt(d.path(), &["verify"]);
    assert_eq!(code, 0, "{r}");
    assert_eq!(r["result"]["oracle"]["pass"], true);
    assert_eq!(r["result"]["appendix"]["pass"], true);
    let (code, r) = jmgt(d.path(), &["verify", "--inject-mis-signed-f3", "--set", "analysis.appendix=false"]);
    assert_eq!(code, 4);
    assert_eq!(r["result"]["residuals"][0]["pass"], false);
}

#[test]
fn verify_needs_the_history_representation() {
    let d = tmp();
    let (code, _) = jmgt(d.path(), &["verify", "--set", "solver.memory=\"reduced_z\""]);
    assert_eq!(code, 64);
}

#[test]
fn reproducible_runs_are_byte_identical() {
    let (a, b) = (tmp(), tmp());
    let args = ["symbol", "--seed", "3", "--jobs", "2"];
    jmgt(a.path(), &args);
    jmgt(b.path(), &args);
    for f in ["symbol.csv", "symbol.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        // the report embeds its own output paths
        let strip = |v: Vec<u8>, p: &Path| String::from_utf8(v).unwrap().replace(p.to_str().unwrap(), "<out>");
        assert_eq!(strip(x, a.path()), strip(y, b.path()), "{f}");
    }
}

#[test]
fn output_directory_comes_from_the_environment() {
    let d = tmp();
    let status = Command::new(env!("CARGO_BIN_EXE_jmgt"))
        .arg("validate-kernel")
        .env("JMGT_OUTPUT_DIR", d.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(d.path().join("validate-kernel.json").exists());
}

#[test]
fn usage_errors_exit_64() {
    let d = tmp();
    assert_eq!(jmgt(d.path(), &["no-such-command"]).0, 64);
    assert_eq!(jmgt(d.path(), &["symbol", "--set", "medium.speed=3"]).0, 64);
    assert_eq!(jmgt(d.path(), &["symbol", "--set", "medium.alpha=2"]).0, 64);
}

#[test]
fn config_file_and_overrides_combine() {
    let d = tmp();
    let cfg = d.path().join("cfg.toml");
    std::fs::write(&cfg, "seed = 11\n[medium]\ntau = 0.5\nb = 2.0\n[kernel]\nm = 0.25\n").unwrap();
    let (code, r) = jmgt(
        d.path(),
        &["symbol", "--config", cfg.to_str().unwrap(), "--set", "kernel.tau_g=2.0"],
    );
    assert_eq!(code, 0);
    assert_eq!(r["config"]["medium"]["tau"], 0.5);
    assert_eq!(r["config"]["kernel"]["tau_g"], 2.0);
    assert_eq!(r["config"]["seed"], 11);
    assert_eq!(r["result"]["classification"]["regime"], "Subcritical");
}
