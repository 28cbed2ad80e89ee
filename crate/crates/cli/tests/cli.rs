use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ccyield::Results;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn ccyield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccyield")).args(args).output().expect("binary runs")
}

fn run_in(sub: &str, cfg: &Path, out: &Path) -> Output {
    ccyield(&[sub, cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn results(dir: &Path) -> Results {
    serde_json::from_str(&std::fs::read_to_string(dir.join("results.json")).unwrap()).unwrap()
}

fn edit(name: &str, dir: &Path, f: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(config(name)).unwrap()).unwrap();
    f(&mut v);
    let path = dir.join(format!("edited_{name}"));
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

/// Synthetic problem behind an external command that logs every invocation.
fn external(dir: &Path, log: &Path, script_body: &str) -> serde_json::Value {
    let script = format!("echo run >> {}; {script_body}", log.display());
    edit("synthetic_eps0.05.json", dir, |v| {
        v["problem"]["simulator"] = serde_json::json!({"external": {
            "program": "sh",
            "args": ["-c", script],
            "design_bounds": [[-1.0, 1.0], [-1.0, 1.0]],
            "noise_dim": 2,
            "metrics": ["objective", "g1", "g2"]
        }});
        v["solver"]["grid_check"] = false.into();
    });
    serde_json::from_str(&std::fs::read_to_string(dir.join("edited_synthetic_eps0.05.json")).unwrap()).unwrap()
}

const SYNTHETIC_AWK: &str = r#"awk -F, 'NR == 1 { print "objective,g1,g2"; next }
{ a = $1 + $3; b = $2 + $4; printf "%.17g,%.17g,%.17g\n", 3 * a + b, a * a - b, a * a + b }'"#;

#[test]
fn synthetic_optimize_matches_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in("optimize", &config("synthetic_eps0.05.json"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = results(dir.path());
    assert_eq!(r.method, "proposed");
    assert!((r.objective - 2.7616).abs() <= 0.02, "{}", r.objective);
    assert!(r.validation.yield_fraction >= 0.99);
    assert!(r.simulations.optimization <= 25);
    assert_eq!(r.simulations.validation, 10_000);
    // one cell of the 201-point grid moves 3 x1 + x2 by at most 0.04
    assert!(r.oracle_agreement.unwrap() <= 0.04);
    for f in ["rule.json", "surrogate.json", "pdf_objective.csv", "pdf_g1.csv", "pdf_g2.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(!dir.path().join("spectrum.csv").exists());
}

#[test]
fn identical_configs_give_identical_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_in("optimize", &config("synthetic_eps0.10.json"), a.path()).status.success());
    assert!(run_in("optimize", &config("synthetic_eps0.10.json"), b.path()).status.success());
    let strip = |p: &Path| {
        std::fs::read_to_string(p.join("results.json"))
            .unwrap()
            .lines()
            .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(a.path()), strip(b.path()));
    for f in ["rule.json", "surrogate.json", "pdf_g1.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_config_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = ccyield(&[
        "optimize",
        "--config",
        config("synthetic_eps0.05.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        "99",
        "--workers",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = results(dir.path()).seeds;
    assert_eq!((s.quadrature, s.solver, s.validation, s.byo), (99, 99, 99, 99));
}

#[test]
fn invalid_risk_level_fails_before_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("calls");
    let mut v = external(dir.path(), &log, SYNTHETIC_AWK);
    v["problem"]["epsilon"] = 0.7.into();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = run_in("optimize", &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("risk level"));
    assert!(!log.exists(), "simulator was invoked");
}

#[test]
fn unknown_keys_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edit("synthetic_eps0.05.json", dir.path(), |v| v["surrogate"] = serde_json::json!({"ordr": 2}));
    assert_eq!(run_in("optimize", &cfg, dir.path()).status.code(), Some(2));
    assert_eq!(run_in("optimize", &dir.path().join("nope.json"), dir.path()).status.code(), Some(2));
}

#[test]
fn external_simulator_runs_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("calls");
    let v = external(dir.path(), &log, SYNTHETIC_AWK);
    let cfg = dir.path().join("ext.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = run_in("optimize", &cfg, &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = results(&dir.path().join("out"));
    assert!((r.objective - 2.7616).abs() <= 0.02, "{}", r.objective);
    assert!(r.problem.simulator.starts_with("external:"));
}

#[test]
fn simulator_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("calls");
    let v = external(dir.path(), &log, "cat > /dev/null; exit 1");
    let cfg = dir.path().join("fail.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = run_in("surrogate", &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/rule.json").exists(), "partial artifacts kept");
}

#[test]
fn infeasible_program_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edit("synthetic_eps0.05.json", dir.path(), |v| {
        v["problem"]["constraints"][0]["threshold"] = (-50.0).into();
        v["solver"]["grid_check"] = false.into();
    });
    let out = run_in("optimize", &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(results(&dir.path().join("out")).status, "infeasible");
}

#[test]
fn max_points_aborts_before_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("calls");
    let mut v = external(dir.path(), &log, SYNTHETIC_AWK);
    v["surrogate"] = serde_json::json!({"max_points": 5});
    let cfg = dir.path().join("small.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = run_in("surrogate", &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(!log.exists());
}

#[test]
fn byo_pairs_with_proposed_method() {
    let dir = tempfile::tempdir().unwrap();
    let (p, b) = (dir.path().join("p"), dir.path().join("b"));
    assert!(run_in("optimize", &config("synthetic_eps0.05.json"), &p).status.success());
    let out = run_in("byo", &config("synthetic_eps0.05.json"), &b);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (rp, rb) = (results(&p), results(&b));
    assert_eq!(rb.method, "byo");
    assert!(rb.simulations.optimization <= 2020);
    assert!((rb.validation.yield_fraction - rp.validation.yield_fraction).abs() <= 0.03);
    assert!(rb.expected_objective_mc <= rp.expected_objective_mc);
    let history: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.join("byo.json")).unwrap()).unwrap();
    let iterations = history["history"].as_array().unwrap();
    let counted: u64 = iterations
        .iter()
        .map(|h| h["samples_drawn"].as_u64().unwrap() + !h["x"].is_null() as u64)
        .sum();
    assert_eq!(counted as usize, rb.simulations.optimization);
}

#[test]
fn compare_tabulates_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for name in ["synthetic_eps0.01.json", "synthetic_eps0.05.json", "synthetic_mean_only.json"] {
        let out = dir.path().join(name);
        assert!(run_in("optimize", &config(name), &out).status.success());
        paths.push(out.join("results.json"));
    }
    let table_path = dir.path().join("table.csv");
    let mut args = vec!["compare".to_string()];
    args.extend(paths.iter().map(|p| p.display().to_string()));
    args.extend(["--out".into(), table_path.display().to_string()]);
    let out = ccyield(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "method,simulations,objective,yield_percent");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("eps=0.01,"));
    assert!(rows[3].starts_with("mean-only,"));
    assert_eq!(std::fs::read_to_string(&table_path).unwrap(), table);

    let single = ccyield(&["compare", paths[0].to_str().unwrap()]);
    assert_eq!(single.status.code(), Some(2));

    let mzi = dir.path().join("mzi");
    assert!(run_in("quadrature", &config("mzi.json"), &mzi).status.success());
    let mut other = results(&dir.path().join("synthetic_eps0.05.json"));
    other.problem.simulator = "mzi".into();
    let other_path = dir.path().join("other.json");
    std::fs::write(&other_path, serde_json::to_string(&other).unwrap()).unwrap();
    let mixed = ccyield(&["compare", paths[0].to_str().unwrap(), other_path.to_str().unwrap()]);
    assert_eq!(mixed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&mixed.stderr).contains("different problems"));
}

#[test]
fn yield_subcommand_uses_given_design() {
    let dir = tempfile::tempdir().unwrap();
    let out = ccyield(&[
        "yield",
        config("synthetic_eps0.05.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--design",
        "0.9999,0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let y: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("yield.json")).unwrap()).unwrap();
    assert!((y["yield"].as_f64().unwrap() - 0.4166).abs() <= 0.03);

    let neg = ccyield(&[
        "yield",
        config("synthetic_eps0.05.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--design=-0.5,0.1",
    ]);
    assert!(neg.status.success(), "{}", String::from_utf8_lossy(&neg.stderr));
}

#[test]
fn emitted_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in("optimize", &config("mzi.json"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut files = vec!["spectrum.csv".to_string()];
    files.extend(["bw", "xt", "alpha"].iter().map(|m| format!("pdf_{m}.csv")));
    for f in files {
        let text = std::fs::read_to_string(dir.path().join(&f)).unwrap();
        let mut lines = text.lines();
        let width = lines.next().unwrap().split(',').count();
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), width, "{f}: {line}");
            for field in fields {
                let v: f64 = field.parse().unwrap();
                assert_eq!(v.to_string(), field, "{f}: {field} does not round-trip");
            }
        }
    }
    let spectrum = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let draws: std::collections::BTreeSet<&str> = spectrum.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(draws.len(), 51);
}
