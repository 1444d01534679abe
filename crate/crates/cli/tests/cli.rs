use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use halluscope::hrpeval::read_scores_csv;
use halluscope::tensorstore::load_manifest;
use halluscope::Monitor32;
use serde_json::Value;

fn halluscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_halluscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = halluscope(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let out = dir.join("fx");
    let mut args = vec!["synth", "--out", out.to_str().unwrap(), "--n-calib", "300", "--n-test", "120", "--channels", "16"];
    args.extend_from_slice(extra);
    ok(&args);
}

fn write_grid(path: &Path, grid: &str) {
    fs::write(path, grid).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn one_cell_grid_gives_one_trace_row() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let grid = dir.path().join("grid.json");
    write_grid(&grid, r#"{"layers": [1.0], "q": [0.25], "params": [10], "gamma": [0.5]}"#);
    let out = dir.path().join("mon");
    let stdout = ok(&["calibrate", "--manifest", p(&dir.path().join("fx/calib/manifest.json")), "--out", p(&out), "--grid", p(&grid)]);
    assert!(stdout.starts_with("best mean HRP "));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert!(trace.starts_with("index,layer,q,k,gamma,mean_hrp,status\n0,1.00,0.25,10,0.5,"));
    let tune = json(&out.join("tune.json"));
    assert_eq!(tune["seed"], 0);
    assert_eq!(tune["evaluated"], 1);
    assert_eq!(json(&out.join("monitor.json"))["seed"], 0);
}

#[test]
fn missing_manifest_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent/manifest.json");
    let out = halluscope(&["calibrate", "--manifest", p(&missing), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(p(&missing)));
    let out = halluscope(&["calibrate", "--manifest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_grid_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let grid = dir.path().join("grid.json");
    write_grid(&grid, r#"{"layers": [1.0], "q": [0.5], "params": [100000], "gamma": [0]}"#);
    let out = halluscope(&["calibrate", "--manifest", p(&dir.path().join("fx/calib/manifest.json")), "--out", p(&dir.path().join("o")), "--grid", p(&grid)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bank_members_get_zero_confidence_with_first_neighbour() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let grid = dir.path().join("grid.json");
    write_grid(&grid, r#"{"layers": [1.0], "q": [0], "params": [1], "gamma": [0]}"#);
    let calib = dir.path().join("fx/calib/manifest.json");
    let out = dir.path().join("mon");
    ok(&["calibrate", "--manifest", p(&calib), "--out", p(&out), "--grid", p(&grid)]);
    let scores = dir.path().join("s.csv");
    ok(&["score", "--monitor", p(&out.join("monitor.json")), "--manifest", p(&calib), "--out", p(&scores)]);
    let (ids, conf) = read_scores_csv(&scores).unwrap();
    let by_id: HashMap<_, _> = ids.iter().zip(&conf).collect();
    let monitor = json(&out.join("monitor.json"));
    let members = monitor["bank"]["source_ids"].as_array().unwrap();
    assert_eq!(members.len(), 225);
    for id in members {
        assert_eq!(*by_id[&id.as_str().unwrap().to_string()], 0.0);
    }
}

#[test]
fn scores_match_library_and_oracle_eval_is_one() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--seed", "4"]);
    let grid = dir.path().join("grid.json");
    write_grid(&grid, r#"{"gamma": [-1, 0, 1]}"#);
    let out = dir.path().join("mon");
    ok(&["calibrate", "--manifest", p(&dir.path().join("fx/calib/manifest.json")), "--out", p(&out), "--grid", p(&grid), "--seed", "4"]);
    let test_manifest = dir.path().join("fx/test/manifest.json");
    let scores = dir.path().join("scores.csv");
    ok(&["score", "--monitor", p(&out.join("monitor.json")), "--manifest", p(&test_manifest), "--out", p(&scores)]);
    let (ids, conf) = read_scores_csv(&scores).unwrap();
    let test = load_manifest(&test_manifest).unwrap();
    let monitor = Monitor32::load(out.join("monitor.json")).unwrap();
    assert_eq!(ids, test.sample_ids());
    assert_eq!(conf, monitor.score_dataset(&test).unwrap());

    let quality = dir.path().join("fx/test/quality.csv");
    let text = fs::read_to_string(&quality).unwrap();
    let mut oracle = String::from("sample_id,ms_ssim\n");
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        oracle.push_str(&format!("{},{}\n", f[0], f[2]));
    }
    let oracle_path = dir.path().join("oracle.csv");
    fs::write(&oracle_path, oracle).unwrap();
    let report = dir.path().join("r.json");
    let stdout = ok(&["eval", "--scores", p(&oracle_path), "--quality", p(&quality), "--metrics", "ms_ssim", "--out", p(&report), "--curves", p(&dir.path().join("curves"))]);
    assert!(stdout.contains("HRP 100.00%"));
    assert_eq!(json(&report)["metrics"][0]["hrp"], 1.0);
    let curve = fs::read_to_string(dir.path().join("curves/curve_ms_ssim.csv")).unwrap();
    assert_eq!(curve.lines().count(), 121);
}

#[test]
fn sensitivity_at_factor_one_is_calibrate_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--seed", "5"]);
    let grid = dir.path().join("grid.json");
    write_grid(&grid, r#"{"layers": [0.5, 1.0], "gamma": [0, 1]}"#);
    let calib = dir.path().join("fx/calib/manifest.json");
    let test = dir.path().join("fx/test/manifest.json");
    let sens = dir.path().join("sens");
    ok(&["sensitivity", "--calib", p(&calib), "--test", p(&test), "--out", p(&sens), "--factors", "1", "--repeats", "1", "--grid", p(&grid), "--seed", "7"]);
    let doc = json(&sens.join("sensitivity.json"));
    let hrp_sweep = doc["rows"][0]["mean_hrp"].as_f64().unwrap();

    let mon = dir.path().join("mon");
    ok(&["calibrate", "--manifest", p(&calib), "--out", p(&mon), "--grid", p(&grid), "--seed", "7"]);
    let scores = dir.path().join("s.csv");
    ok(&["score", "--monitor", p(&mon.join("monitor.json")), "--manifest", p(&test), "--out", p(&scores)]);
    let report = dir.path().join("r.json");
    ok(&["eval", "--scores", p(&scores), "--manifest", p(&test), "--out", p(&report)]);
    assert_eq!(json(&report)["mean_hrp"].as_f64().unwrap(), hrp_sweep);
    assert!(sens.join("histogram_f1.json").exists());
    assert!(fs::read_to_string(sens.join("sensitivity.csv")).unwrap().starts_with("factor,"));
}

#[test]
fn correlating_a_report_set_with_itself_has_unit_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--noise", "0.5"]);
    let out = dir.path().join("c.json");
    ok(&["correlate", "--quality", p(&dir.path().join("fx/calib/quality.csv")), "--out", p(&out)]);
    let doc = json(&out);
    for i in 0..3 {
        assert_eq!(doc["tau"][i][i], 1.0);
        assert_eq!(doc["top_overlap"][i][i], 1.0);
    }
    let off = doc["tau"][0][1].as_f64().unwrap();
    assert!(off > 0.3 && off < 0.8, "{off}");

    let mut reports = Vec::new();
    for (i, g) in ["0", "2", "-2", "5"].iter().enumerate() {
        let scores = dir.path().join(format!("m{i}.csv"));
        let report = dir.path().join(format!("m{i}.json"));
        let grid = dir.path().join(format!("g{i}.json"));
        write_grid(&grid, &format!(r#"{{"layers": [1.0], "q": [0.25], "params": [5], "gamma": [{g}]}}"#));
        let mon = dir.path().join(format!("mon{i}"));
        ok(&["calibrate", "--manifest", p(&dir.path().join("fx/calib/manifest.json")), "--out", p(&mon), "--grid", p(&grid)]);
        ok(&["score", "--monitor", p(&mon.join("monitor.json")), "--manifest", p(&dir.path().join("fx/test/manifest.json")), "--out", p(&scores)]);
        ok(&["eval", "--scores", p(&scores), "--manifest", p(&dir.path().join("fx/test/manifest.json")), "--out", p(&report)]);
        reports.push(report);
    }
    let corr = dir.path().join("cr.json");
    let mut args = vec!["correlate", "--top", "2", "--out", p(&corr), "--reports"];
    args.extend(reports.iter().map(|r| p(r)));
    ok(&args);
    let doc = json(&corr);
    assert_eq!(doc["over"], "monitors");
    assert_eq!(doc["items"].as_array().unwrap().len(), 4);
    for i in 0..3 {
        assert_eq!(doc["tau"][i][i], 1.0);
    }
}

#[test]
fn corrupt_and_metrics_round_trip() {
    use halluscope::tensorstore::{read_tensor, write_tensor, Tensor};
    let dir = tempfile::tempdir().unwrap();
    let (n, c, h, w) = (3, 2, 48, 48);
    let data: Vec<f32> = (0..n * c * h * w).map(|i| ((i * 31 % 97) as f32) / 97.0).collect();
    let clean = dir.path().join("clean.ftb");
    write_tensor(&Tensor::new(vec![n, c, h, w], data).unwrap(), &clean).unwrap();
    let noisy = dir.path().join("noisy.ftb");
    ok(&["corrupt", "--input", p(&clean), "--out", p(&noisy), "--kind", "gaussian_noise", "--sigma", "0.1", "--seed", "3"]);
    let t = read_tensor::<f32>(&noisy).unwrap();
    assert_eq!(t.shape, vec![n, c, h, w]);
    assert!(t.data.iter().all(|v| (0.0..=1.0).contains(v)));
    let side = json(&dir.path().join("noisy.ftb.json"));
    assert_eq!(side["seed"], 3);
    assert_eq!(side["kind"], "gaussian_noise");

    let none = dir.path().join("same.ftb");
    ok(&["corrupt", "--input", p(&clean), "--out", p(&none), "--kind", "pixel_dropout", "--rate", "0"]);
    assert_eq!(fs::read(&none).unwrap(), fs::read(&clean).unwrap());

    let q = dir.path().join("q.csv");
    ok(&["metrics", "--output", p(&noisy), "--target", p(&clean), "--out", p(&q)]);
    let text = fs::read_to_string(&q).unwrap();
    assert!(text.starts_with("sample_id,psnr,ms_ssim\ns00000,"));
    ok(&["metrics", "--output", p(&clean), "--target", p(&clean), "--out", p(&q)]);
    assert_eq!(fs::read_to_string(&q).unwrap().lines().nth(1).unwrap(), "s00000,inf,1");

    let out = halluscope(&["corrupt", "--input", p(&clean), "--out", p(&none), "--kind", "gaussian_noise", "--sigma", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = halluscope(&["corrupt", "--input", p(&clean), "--out", p(&none), "--kind", "warp"]);
    assert_eq!(out.status.code(), Some(2));
}
