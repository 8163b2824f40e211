use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pvtest::geometry::read_tessellation_json;

fn pvtest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvtest")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pvtest(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/section_lambda1.json")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_sections_metrics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--lambda", "1", "--seed", "5", "--replicates", "10", "--out", s(&out)]);
    let names: Vec<String> = files(&out).into_iter().map(|f| f.0).collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("section_")).count(), 10);
    assert!(names.contains(&"manifest.json".to_string()));
    let rows = fs::read_to_string(out.join("cells.csv")).unwrap().lines().count() - 1;
    assert!((1300..=1600).contains(&rows), "{rows} metric rows");
}

#[test]
fn zero_replicates_writes_manifest_only() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--lambda", "1", "--seed", "5", "--replicates", "0", "--out", s(dir.path())]);
    let names: Vec<String> = files(dir.path()).into_iter().map(|f| f.0).collect();
    assert!(names.contains(&"manifest.json".to_string()));
    assert!(!names.iter().any(|n| n.starts_with("section_")));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let args = ["simulate", "--lambda", "0.5", "--seed", "9", "--replicates", "4", "--periodic", "--box", "6", "--out", s(&out)];
    ok(&args);
    let first = files(&out);
    ok(&args);
    assert_eq!(files(&out), first);
    fs::remove_dir_all(&out).unwrap();
    // The manifest alone reproduces the run.
    let manifest = dir.path().join("manifest.json");
    fs::write(&manifest, &first.iter().find(|f| f.0 == "manifest.json").unwrap().1).unwrap();
    ok(&["rerun", s(&manifest)]);
    assert_eq!(files(&out), first);
}

#[test]
fn estimate_recovers_known_intensity() {
    let json = ok(&["estimate", s(&fixture()), "--seed", "3", "--n-boot", "1000"]);
    let r: serde_json::Value = serde_json::from_str(&json).unwrap();
    for e in r["estimates"].as_array().unwrap() {
        let v = e["value"].as_f64().unwrap();
        assert!((v - 1.0).abs() < 0.15, "{e}");
    }
    let (lo, hi) = (r["bootstrap"]["lower"].as_f64().unwrap(), r["bootstrap"]["upper"].as_f64().unwrap());
    assert!(lo <= hi && lo < 1.0 && hi > 1.0, "[{lo}, {hi}]");
}

#[test]
fn empty_input_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.json");
    fs::write(&p, "").unwrap();
    assert_eq!(pvtest(&["estimate", s(&p), "--seed", "1"]).status.code(), Some(2));
    let pts = dir.path().join("none.csv");
    fs::write(&pts, "x,y\n").unwrap();
    assert_eq!(pvtest(&["tda", s(&pts), "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(pvtest(&["estimate", s(&dir.path().join("missing.json")), "--seed", "1"]).status.code(), Some(2));
}

#[test]
fn invalid_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pvtest(&["simulate", "--lambda", "-1", "--seed", "1", "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(pvtest(&["simulate", "--lambda", "1", "--out", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn infeasible_conditioning_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = pvtest(&[
        "null-table", "--statistic", "cv", "--n2d", "400", "--lambda", "0.2", "--seed", "1", "--replicates", "200", "--box", "3",
        "--out", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tda_two_points_and_square() {
    let dir = tempfile::tempdir().unwrap();
    let two = dir.path().join("two.csv");
    fs::write(&two, "x,y\n0,0\n0.94,0\n").unwrap();
    ok(&["tda", s(&two), "--out", s(&dir.path().join("two"))]);
    let diag = fs::read_to_string(dir.path().join("two/diagram.csv")).unwrap();
    assert_eq!(diag, "dimension,birth,death\n0,0,0.47\n");

    let sq = dir.path().join("square.csv");
    fs::write(&sq, "x,y\n0,0\n1,0\n1,1\n0,1\n").unwrap();
    ok(&["tda", s(&sq), "--out", s(&dir.path().join("sq"))]);
    let diag = fs::read_to_string(dir.path().join("sq/diagram.csv")).unwrap();
    assert_eq!(diag.lines().filter(|l| l.starts_with("1,")).count(), 1);
    assert!(dir.path().join("sq/landscape_h1.csv").exists());
}

#[test]
fn tda_accepts_tessellations() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["tda", s(&fixture()), "--out", s(dir.path())]);
    let rows = fs::read_to_string(dir.path().join("diagram.csv")).unwrap();
    let n = read_tessellation_json(&fixture()).unwrap().n_2d();
    assert_eq!(rows.lines().filter(|l| l.starts_with("0,")).count(), n - 1);
}

#[test]
fn missing_cache_needs_build_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = pvtest(&["test", s(&fixture()), "--seed", "1", "--cache-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--build-null"));
}

#[test]
fn null_table_writes_quantiles() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "null-table", "--statistic", "landscape", "--n2d", "10", "--lambda", "1", "--seed", "2", "--replicates", "1500", "--box", "3",
        "--alpha-grid", "0.05,0.95", "--out", s(dir.path()),
    ]);
    let q = fs::read_to_string(dir.path().join("quantiles_L1.csv")).unwrap();
    assert_eq!(q.lines().count(), 3);
    assert!(dir.path().join("joint_rule.json").exists());
}

/// Sections of the reference setting with exactly 50 cells.
fn h0_fixtures(dir: &Path, count: usize) -> Vec<PathBuf> {
    let sim = dir.join("sim");
    ok(&["simulate", "--lambda", "0.2", "--seed", "77", "--replicates", "900", "--out", s(&sim)]);
    let mut picked: Vec<PathBuf> = fs::read_dir(&sim)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("section_"))
        .collect();
    picked.sort();
    picked.retain(|p| read_tessellation_json(p).unwrap().n_2d() == 50);
    picked.truncate(count);
    picked
}

#[test]
fn null_sections_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = h0_fixtures(dir.path(), 30);
    assert_eq!(fixtures.len(), 30);
    let cache = dir.path().join("cache");
    let common = ["--seed", "1", "--lambda", "0.2", "--replicates", "20000", "--cache-dir", s(&cache), "--build-null"];
    let mut accepted = [0usize; 4];
    let mut joint = 0;
    let report = dir.path().join("report");
    for f in &fixtures {
        let mut args = vec!["test", s(f), "--out", s(&report)];
        args.extend_from_slice(&common);
        let text = ok(&args);
        assert!(text.contains("q0.95"), "report echoes the quantiles used");
        let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(report.join("test.json")).unwrap()).unwrap();
        for (i, res) in r["results"].as_array().unwrap().iter().enumerate() {
            if res["result"]["p_value"].as_f64().unwrap() > 0.05 {
                accepted[i] += 1;
            }
        }
        if !r["joint"]["reject"].as_bool().unwrap() {
            joint += 1;
        }
    }
    let need = (0.9 * fixtures.len() as f64).ceil() as usize;
    assert!(accepted.iter().all(|&a| a >= need), "{accepted:?} of {}", fixtures.len());
    assert!(joint >= need, "joint rule accepted {joint}");
}

#[test]
fn ci_band_reports_p_value_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let json = ok(&[
        "test", s(&fixture()), "--seed", "4", "--statistic", "cv", "--replicates", "3000", "--ci-band", "--n-boot", "500",
        "--exclude-clipped", "--cache-dir", s(&dir.path().join("cache")), "--build-null",
    ]);
    let r: serde_json::Value = serde_json::from_str(&json).unwrap();
    let (lo, hi) = (r["lambda_band"]["lower"].as_f64().unwrap(), r["lambda_band"]["upper"].as_f64().unwrap());
    assert!(lo < r["lambda"].as_f64().unwrap() && r["lambda"].as_f64().unwrap() < hi);
    let res = &r["results"][0];
    let p = res["result"]["p_value"].as_f64().unwrap();
    let range = res["p_range"].as_array().unwrap();
    assert!(range[0].as_f64().unwrap() <= p && p <= range[1].as_f64().unwrap(), "{res}");
}
