use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_covert-mac"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows of a CSV emitted by the tool, split into cells.
fn rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, body)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

const FAST: &[&str] = &["--restarts", "8", "--evals-per-dim", "200", "--polish-rounds", "1"];

#[test]
fn profile_of_reference_channel() {
    let o = run(&["profile"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# subcommand=profile channel="));
    let (h, body) = rows(&text);
    assert_eq!(h.len(), 12);
    assert_eq!(body.len(), 2);
    for r in &body {
        let v = |name| r[col(&h, name)].parse::<f64>().unwrap();
        assert_eq!(v("d_zy1"), v("d_z1") - v("d_y1"));
        assert!(v("chi2_l0.5") > 0.0);
    }
    // D(Γ_Y(·|1,0,0) || Γ_Y(·|0,0,0)) in bits
    let d_y1: f64 = body[0][col(&h, "d_y1")].parse().unwrap();
    assert!((d_y1 - 1.1130025337783458).abs() < 1e-12);
}

#[test]
fn profile_of_input_independent_channel_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.toml");
    let row = "[0.5, 0.25, 0.25]";
    let list = [row; 4].join(", ");
    std::fs::write(&path, format!("x3_size = 1\ny_size = 3\nz_size = 3\ngamma_y = [{list}]\ngamma_z = [{list}]\n")).unwrap();
    let o = run(&["--channel", path.to_str().unwrap(), "profile"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, body) = rows(&stdout(&o));
    for cell in &body[0][1..] {
        assert_eq!(cell.parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn malformed_channel_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "x3_size = [").unwrap();
    let o = run(&["--channel", bad.to_str().unwrap(), "profile"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse"));

    let short = dir.path().join("short.toml");
    let good = ["[0.5, 0.5]"; 4].join(", ");
    let mut list = ["[0.5, 0.5]"; 4];
    list[2] = "[0.5, 0.4]";
    std::fs::write(&short, format!("x3_size = 1\ny_size = 2\nz_size = 2\ngamma_y = [{}]\ngamma_z = [{good}]\n", list.join(", "))).unwrap();
    assert_eq!(run(&["--channel", short.to_str().unwrap(), "profile"]).status.code(), Some(3));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["--unit", "furlongs", "profile"]).status.code(), Some(2));
}

#[test]
fn small_signal_ratio_near_one() {
    let o = run(&["verify-asymptotics", "--alpha", "1e-4"]);
    assert!(o.status.success());
    let (h, body) = rows(&stdout(&o));
    assert_eq!(body.len(), 2);
    for r in body {
        let ratio: f64 = r[col(&h, "ratio")].parse().unwrap();
        assert!((0.99..=1.01).contains(&ratio), "{ratio}");
    }
}

#[test]
fn single_phase_region_returns_corner_points() {
    let mut args = vec!["region", "--max-phases", "1", "--points", "3"];
    args.extend(FAST);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, body) = rows(&stdout(&o));
    assert_eq!(body.len(), 3);
    let r2: Vec<f64> = body.iter().map(|r| r[col(&h, "r2")].parse().unwrap()).collect();
    assert!(r2.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    assert!(body.iter().all(|r| r[col(&h, "tau")] == "1"));
    assert!((r2[0] - 0.807853).abs() < 1e-5);
}

#[test]
fn curve_csv_is_reproducible_and_has_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let mut args = vec!["curve", "--fix", "0", "--k2", "0.05,1", "--out", out.to_str().unwrap()];
    args.extend(FAST);
    assert!(run(&args).status.success());
    let first = std::fs::read_to_string(&out).unwrap();
    let side = Path::new(&format!("{}.manifest.toml", out.display())).to_path_buf();
    let manifest = std::fs::read_to_string(&side).unwrap();
    assert!(manifest.contains("timestamp") && manifest.contains("subcommand = \"curve\""));
    assert!(first.starts_with("# subcommand=curve"));
    assert!(!first.contains("timestamp"));

    let (h, body) = rows(&first);
    assert_eq!(body.len(), 2);
    let r2: f64 = body[1][col(&h, "r2")].parse().unwrap();
    assert!((r2 - 0.235902).abs() < 1e-5, "{r2}");

    assert!(run(&args).status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), first);
}

#[test]
fn search_failures_have_distinct_exit_codes() {
    assert_eq!(run(&["region", "--r1", "5", "--points", "1", "--restarts", "4"]).status.code(), Some(4));
    let starved = [
        "curve", "--optimize", "--k2", "0.1", "--r1", "0.9", "--restarts", "1", "--evals-per-dim", "1",
        "--polish-rounds", "0", "--max-phases", "1",
    ];
    assert_eq!(run(&starved).status.code(), Some(5));
}

#[test]
fn simulate_report_ignores_thread_count() {
    let report = |threads: &str| {
        let o = run(&[
            "--threads", threads, "--seed", "4", "simulate", "--n", "8", "--m1", "2", "--m2", "2", "--m3", "2",
            "--k1", "2", "--trials", "300", "--exact-divergence",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["report"]["wall_time_s"] = serde_json::Value::Null;
        v
    };
    let a = report("1");
    assert_eq!(a, report("3"));
    assert_eq!(a["report"]["trials_run"], 300);
    assert!(a["report"]["delta_exact"].as_f64().unwrap() >= 0.0);
}

#[test]
fn sizing_reads_a_plan_file() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    let p = covert_mac::PhasePlan::single(vec![0.5, 0.5], 1.0, 0.5, 1.0, 0.8).unwrap();
    covert_mac::region::save_plan(&p, &plan).unwrap();
    let o = run(&["sizing", "--plan", plan.to_str().unwrap(), "--n", "10000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let s: covert_mac::region::Theorem1Sizing =
        toml::from_str(&text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")).unwrap();
    assert_eq!(s.n, 10000);
    assert!((s.omega_n - 0.1).abs() < 1e-12);
    assert!(s.log_m1 > 0.0 && s.divergence_bound > 0.0);
}
