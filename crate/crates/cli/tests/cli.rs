use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flowalert_cli::manifest::{hash_file, RunManifest};
use serde_json::Value;
use tempfile::TempDir;

fn flowalert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowalert"))
        .args(args)
        .output()
        .expect("spawn flowalert")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, kind: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(format!("{kind}.csv"));
    let mut args = vec!["simulate", "--kind", kind, "--out", p(&out)];
    args.extend_from_slice(extra);
    let res = flowalert(&args);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    out
}

#[test]
fn simulate_mean_shift_writes_rows_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let csv = simulate(tmp.path(), "mean-shift", &["--length", "600", "--shift-at", "300"]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 601);
    assert!(text.starts_with("timestamp,f0,label\n"));

    let m = RunManifest::load(&tmp.path().join("mean-shift.csv.manifest.json")).unwrap();
    assert_eq!(m.command, "simulate");
    assert_eq!(m.outputs.len(), 1);
    assert_eq!(m.outputs[0].sha256, hash_file(&csv).unwrap());
}

#[test]
fn simulate_same_seed_same_bytes() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["--length", "2000", "--seed", "11"];
    let x = simulate(a.path(), "regime", &args);
    let y = simulate(b.path(), "regime", &args);
    assert_eq!(hash_file(&x).unwrap(), hash_file(&y).unwrap());
    let z = simulate(b.path(), "rare-attack", &["--length", "2000", "--seed", "12"]);
    assert_ne!(hash_file(&x).unwrap(), hash_file(&z).unwrap());
}

#[test]
fn simulate_burst_timeline() {
    let tmp = TempDir::new().unwrap();
    let csv = simulate(tmp.path(), "burst-sustained", &[]);
    let text = fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("timestamp,event,attack\n"));
    let attacks = text.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    // 18x burn of a 1000/60 budget over 300 minutes
    assert_eq!(attacks, 90_000);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&flowalert(&["simulate", "--kind", "mean-shift"])), 2);
    assert_eq!(code(&flowalert(&["simulate", "--kind", "bogus", "--out", "x.csv"])), 2);
    assert_eq!(code(&flowalert(&["frobnicate"])), 2);

    let tmp = TempDir::new().unwrap();
    let csv = simulate(tmp.path(), "mean-shift", &[]);
    let out = tmp.path().join("o");
    let bad_split = flowalert(&["run", "--input", p(&csv), "--split", "0.5,0.5", "--out-dir", p(&out)]);
    assert_eq!(code(&bad_split), 2);
    let bad_hazard = flowalert(&["run", "--input", p(&csv), "--hazard", "2", "--out-dir", p(&out)]);
    assert_eq!(code(&bad_hazard), 2);
    let bad_variant = flowalert(&["run", "--input", p(&csv), "--variant", "V9", "--out-dir", p(&out)]);
    assert_eq!(code(&bad_variant), 2);
}

#[test]
fn data_errors_exit_3() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let missing = flowalert(&["run", "--input", p(&tmp.path().join("nope.csv")), "--out-dir", p(&out)]);
    assert_eq!(code(&missing), 3);

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "timestamp,f0,label\n0,0.1,0\n1,abc,0\n").unwrap();
    assert_eq!(code(&flowalert(&["run", "--input", p(&bad), "--out-dir", p(&out)])), 3);
}

#[test]
fn v4_reports_cost_threshold() {
    let tmp = TempDir::new().unwrap();
    let csv = simulate(tmp.path(), "regime", &["--length", "3000"]);
    let out = tmp.path().join("v4");
    let res = flowalert(&[
        "run",
        "--input",
        p(&csv),
        "--variant",
        "V4",
        "--cost-ratio",
        "10",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let t = json(&out.join("thresholds.json"));
    let tau = t["tau_star"].as_f64().unwrap();
    assert!((tau - 1.0 / 11.0).abs() < 1e-15);
    assert_eq!(format!("{tau:.4}"), "0.0909");
    assert_eq!(t["rule"]["rule"], "cost");
    assert_eq!(t["calibrator"], "identity");

    for f in [
        "outcomes.csv",
        "alerts.csv",
        "scores.csv",
        "metrics.json",
        "calibration.json",
        "latency.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let outcomes = fs::read_to_string(out.join("outcomes.csv")).unwrap();
    assert_eq!(outcomes.lines().count(), 450 + 1);
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().filter(|l| l.starts_with("validation,")).count(), 450);
    assert_eq!(scores.lines().filter(|l| l.starts_with("test,")).count(), 450);
}

/// 400 flows, 60 of them validation with exactly 50 negatives.
fn fifty_negative_stream(path: &Path) {
    let mut text = String::from("timestamp,f0,label\n");
    for i in 0..400 {
        let attack = (280..340).contains(&i) && i % 6 == 0 || i >= 340 && i % 7 == 0;
        let x = if attack {
            0.9
        } else {
            0.4 + 0.01 * ((i * 37) % 11) as f64
        };
        text.push_str(&format!("{},{},{}\n", i as f64 / 60.0, x, u8::from(attack)));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn infeasible_budget_exits_4_and_never_alerts() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("small.csv");
    fifty_negative_stream(&csv);
    let out = tmp.path().join("v1");
    let res = flowalert(&[
        "run",
        "--input",
        p(&csv),
        "--variant",
        "V1",
        "--alpha",
        "0.01",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&res), 4);
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("n0 = 50"), "{stderr}");
    assert!(stderr.contains("never-alert"), "{stderr}");

    let t = json(&out.join("thresholds.json"));
    assert_eq!(t["n0"], 50);
    assert_eq!(t["feasible"], false);
    assert!(t["tau_crc"].is_null());
    assert_eq!(t["rule"]["rule"], "never");
    assert_eq!(json(&out.join("metrics.json"))["events"], 0);
    // the run still completed
    assert_eq!(
        fs::read_to_string(out.join("outcomes.csv")).unwrap().lines().count(),
        61
    );
    assert_eq!(RunManifest::load(&out.join("manifest.json")).unwrap().exit_code, 4);

    // 1/(50+1) < 0.02: feasible
    let ok = flowalert(&[
        "run",
        "--input",
        p(&csv),
        "--variant",
        "V1",
        "--alpha",
        "0.02",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&ok), 0);
}

#[test]
fn v1_on_rare_attack_keeps_fpr_under_alpha() {
    let tmp = TempDir::new().unwrap();
    let csv = simulate(tmp.path(), "rare-attack", &["--length", "50000"]);
    let out = tmp.path().join("v1");
    let res = flowalert(&[
        "run",
        "--input",
        p(&csv),
        "--variant",
        "V1",
        "--alpha",
        "0.01",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let m = json(&out.join("metrics.json"));
    let fpr = m["report"]["fpr"].as_f64().unwrap();
    assert!(fpr <= 0.01, "fpr {fpr}");
    assert!(m["report"]["recall"].as_f64().unwrap() > 0.5);
}

#[test]
fn unlabeled_streams_score_with_v4_only() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("u.csv");
    let mut text = String::from("timestamp,bytes,proto\n");
    for i in 0..300 {
        let proto = ["tcp", "udp", "icmp"][i % 3];
        text.push_str(&format!("{i},{},{proto}\n", 100 + (i * 13) % 50));
    }
    fs::write(&csv, text).unwrap();
    let out = tmp.path().join("o");
    let v4 = flowalert(&[
        "run",
        "--input",
        p(&csv),
        "--categorical",
        "proto",
        "--variant",
        "V4",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&v4), 0, "{}", String::from_utf8_lossy(&v4.stderr));
    let m = json(&out.join("metrics.json"));
    assert!(m["report"].is_null());
    let cfg = &RunManifest::load(&out.join("manifest.json")).unwrap().config;
    assert_eq!(cfg["data"]["labeled"], false);
    // 1 numeric + 3 one-hot
    assert_eq!(cfg["pipeline"]["bocpd"]["prior_mean"].as_array().unwrap().len(), 4);

    let v1 = flowalert(&[
        "run",
        "--input",
        p(&csv),
        "--categorical",
        "proto",
        "--variant",
        "V1",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&v1), 3);
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn ablate_variant_subset() {
    let tmp = TempDir::new().unwrap();
    let csv = simulate(tmp.path(), "rare-attack", &["--length", "20000"]);
    let out = tmp.path().join("ab");
    let res = flowalert(&[
        "ablate",
        "--input",
        p(&csv),
        "--variants",
        "V1,V4",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let rows = read_rows(&out.join("ablation.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][0].as_str(), rows[1][0].as_str()), ("V1", "V4"));

    let all = tmp.path().join("all");
    assert_eq!(
        code(&flowalert(&["ablate", "--input", p(&csv), "--out-dir", p(&all)])),
        0
    );
    let rows = read_rows(&all.join("ablation.csv"));
    assert_eq!(rows.len(), 4);
    let fpr = |v: &str| rows.iter().find(|r| r[0] == v).unwrap()[2].parse::<f64>().unwrap();
    assert!(fpr("V4") > fpr("V1"));
}

#[test]
fn ablate_collapse_regime_zero_rows() {
    let tmp = TempDir::new().unwrap();
    let csv = simulate(tmp.path(), "base-rate-inversion", &["--length", "20000"]);
    let out = tmp.path().join("ab");
    let res = flowalert(&[
        "ablate",
        "--input",
        p(&csv),
        "--variants",
        "V1,V2",
        "--out-dir",
        p(&out),
    ]);
    // V2 has no feasible budget threshold here
    assert_eq!(code(&res), 4, "{}", String::from_utf8_lossy(&res.stderr));
    for row in read_rows(&out.join("ablation.csv")) {
        assert_eq!(row[7], "0", "{row:?}");
        for cell in &row[1..6] {
            assert_eq!(cell.parse::<f64>().unwrap(), 0.0, "{row:?}");
        }
    }
}

#[test]
fn evaluate_perfect_predictions() {
    let tmp = TempDir::new().unwrap();
    let scores = tmp.path().join("perfect.csv");
    let mut text = String::from("probability,label\n");
    for i in 0..100 {
        let y = i % 4 == 0;
        text.push_str(&format!("{},{}\n", u8::from(y), u8::from(y)));
    }
    fs::write(&scores, text).unwrap();
    let out = tmp.path().join("ev");
    let res = flowalert(&["evaluate", "--scores", p(&scores), "--out-dir", p(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let m = json(&out.join("metrics.json"));
    assert_eq!(m["report"]["brier"], 0.0);
    assert_eq!(m["report"]["f1"], 1.0);
    // no split column: no sweep
    assert!(!out.join("alpha_sweep.csv").exists());
    let bins = read_rows(&out.join("reliability.csv"));
    assert_eq!(bins.len(), 2);
}

#[test]
fn evaluate_alpha_sweep_from_run_scores() {
    let tmp = TempDir::new().unwrap();
    let csv = simulate(tmp.path(), "rare-attack", &["--length", "20000"]);
    let run = tmp.path().join("run");
    assert_eq!(code(&flowalert(&["run", "--input", p(&csv), "--out-dir", p(&run)])), 0);
    let out = tmp.path().join("ev");
    let res = flowalert(&[
        "evaluate",
        "--scores",
        p(&run.join("scores.csv")),
        "--alphas",
        "0.001,0.005,0.01,0.05",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let sweep = read_rows(&out.join("alpha_sweep.csv"));
    assert_eq!(sweep.len(), 4);
    let alphas: Vec<&str> = sweep.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(alphas, ["0.001", "0.005", "0.01", "0.05"]);
    // larger budgets never alert less
    let rates: Vec<f64> = sweep.iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
    assert!(read_rows(&out.join("reliability.csv")).len() <= 15);
    let m = json(&out.join("metrics.json"));
    assert_eq!(m["scored_split"], "test");
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let tmp = TempDir::new().unwrap();
    let csv = simulate(tmp.path(), "regime", &["--length", "3000"]);
    let run = tmp.path().join("run");
    assert_eq!(code(&flowalert(&["run", "--input", p(&csv), "--out-dir", p(&run)])), 0);
    let manifest = run.join("manifest.json");

    let again = tmp.path().join("again");
    let res = flowalert(&["replay", "--manifest", p(&manifest), "--out-dir", p(&again)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stdout));
    assert_eq!(
        fs::read(run.join("outcomes.csv")).unwrap(),
        fs::read(again.join("outcomes.csv")).unwrap()
    );

    // replay in place, then against a manifest whose hash no longer matches
    assert_eq!(code(&flowalert(&["replay", "--manifest", p(&manifest)])), 0);
    let mut m = RunManifest::load(&manifest).unwrap();
    m.outputs[0].sha256 = "0".repeat(64);
    let forged = tmp.path().join("forged.json");
    fs::write(&forged, serde_json::to_string(&m).unwrap()).unwrap();
    let res = flowalert(&[
        "replay",
        "--manifest",
        p(&forged),
        "--out-dir",
        p(&tmp.path().join("f")),
    ]);
    assert_eq!(code(&res), 3);
    assert!(String::from_utf8_lossy(&res.stdout).contains("MISMATCH"));

    // changed input
    fs::write(&csv, "timestamp,f0,label\n").unwrap();
    assert_eq!(code(&flowalert(&["replay", "--manifest", p(&manifest)])), 3);
}

#[test]
fn replay_simulate_manifest() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), "mean-shift", &["--seed", "3"]);
    let manifest = tmp.path().join("mean-shift.csv.manifest.json");
    let again = tmp.path().join("again");
    let res = flowalert(&["replay", "--manifest", p(&manifest), "--out-dir", p(&again)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(again.join("mean-shift.csv").exists());
}

#[test]
fn alert_log_records_transitions_with_burn_rates() {
    let tmp = TempDir::new().unwrap();
    let csv = simulate(tmp.path(), "rare-attack", &["--length", "20000"]);
    let out = tmp.path().join("run");
    // A tiny budget so the cost-threshold crossings escalate.
    let res = flowalert(&[
        "run",
        "--input",
        p(&csv),
        "--variant",
        "V4",
        "--budget-events",
        "10",
        "--burn-trace",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let log = fs::read_to_string(out.join("alerts.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next().unwrap(),
        "timestamp,from,to,page-fast_short,page-fast_long,page-slow_short,page-slow_long,ticket_short,ticket_long"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    assert_eq!(rows[0][1], "");
    assert!(rows.iter().any(|r| r[2] == "page-fast"), "{log}");
    // each transition starts where the previous one ended
    assert!(rows.windows(2).all(|w| w[0][2] == w[1][1]));
    let m = json(&out.join("metrics.json"));
    assert_eq!(m["level_transitions"].as_u64().unwrap() as usize, rows.len());

    let trace = fs::read_to_string(out.join("burn_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), m["flows"].as_u64().unwrap() as usize + 1);
    assert!(trace.starts_with("timestamp,level,page-fast_short"));
}
