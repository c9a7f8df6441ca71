use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dlcz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlcz")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_one_line_error(o: &Output) {
    assert!(!o.status.success());
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = dlcz(&["run", "--preset", "paper-T60", "--seed", "7", "--trials", "1000000", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.json", "hist_g11.csv", "hist_g22.csv", "hist_g12.csv", "profile_g12.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("verdict=violated"), "{stdout}");
}

#[test]
fn run_is_byte_identical_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "4", "1"].iter().enumerate() {
        let out = dir.path().join(format!("w{i}"));
        let o = dlcz(&[
            "run", "--preset", "paper-T60", "--trials", "200000", "--workers", workers, "--format", "csv",
            "--save-events", "--out-dir", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(files_of(&out));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn simulate_then_analyze_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("ev");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let common = ["--preset", "paper-T140", "--trials", "100000", "--seed", "3"];
    let o = dlcz(&[&["simulate"][..], &common, &["--out", ev.to_str().unwrap()]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dlcz(&[&["run"][..], &common, &["--out-dir", a.to_str().unwrap()]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let files: Vec<String> = ["auto2", "pair", "auto1"]
        .iter()
        .map(|m| ev.join(format!("{m}.events")).to_string_lossy().into_owned())
        .collect();
    let mut args = vec!["analyze"];
    args.extend(files.iter().map(String::as_str));
    args.extend(["--preset", "paper-T140", "--seed", "3", "--out-dir", b.to_str().unwrap()]);
    let o = dlcz(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).is_empty(), "{}", stderr(&o));
    assert_eq!(files_of(&a), files_of(&b));

    // a different scenario warns about the digest but still analyzes
    args.splice(args.len() - 5..args.len() - 4, ["paper-T60"]);
    let o = dlcz(&args);
    assert!(stderr(&o).contains("digest_mismatch"), "{}", stderr(&o));
}

#[test]
fn single_mode_simulate_and_incomplete_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair.events");
    let o = dlcz(&["simulate", "--preset", "ideal", "--trials", "1000", "--mode", "pair", "--out", pair.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(&pair).unwrap().contains("# splitter: pair"));
    let o = dlcz(&["analyze", pair.to_str().unwrap(), "--preset", "ideal"]);
    assert_one_line_error(&o);
    assert!(stderr(&o).contains("auto1"), "{}", stderr(&o));
}

#[test]
fn analyze_missing_file_names_path() {
    let o = dlcz(&["analyze", "missing.events"]);
    assert_one_line_error(&o);
    assert!(stderr(&o).contains("missing.events"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = dlcz(&["run", "--frobnicate"]);
    assert_one_line_error(&o);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_names_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let shown = dlcz(&["presets", "--show", "ideal"]);
    let text = String::from_utf8(shown.stdout).unwrap().replace("p = 0.01", "p = 1.5");
    fs::write(&path, text).unwrap();
    let o = dlcz(&["run", "--config", path.to_str().unwrap()]);
    assert_one_line_error(&o);
    assert!(stderr(&o).contains("source.p"), "{}", stderr(&o));

    fs::write(&path, "").unwrap();
    let o = dlcz(&["run", "--config", path.to_str().unwrap()]);
    assert_one_line_error(&o);
    assert!(stderr(&o).contains("missing required section"), "{}", stderr(&o));
}

#[test]
fn presets_lists_all() {
    let o = dlcz(&["presets"]);
    assert!(o.status.success());
    let names: Vec<String> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    assert_eq!(names, ["paper-T60", "paper-T140", "ideal", "background-only", "classical-twin"]);
}

#[test]
fn sweep_rows_agree_with_oracle() {
    let o = dlcz(&["sweep", "--param", "source.p", "--from", "0.005", "--to", "0.05", "--steps", "10", "--trials", "300000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        let (ratio, sigma, oracle) = (r[col("ratio")], r[col("ratio_sigma")], r[col("oracle_ratio")]);
        assert!((ratio - oracle).abs() < 5.0 * sigma, "p={}: {ratio} vs {oracle} ± {sigma}", r[0]);
        let p = r[col("source.p")];
        assert!((r[col("paper_ideal_ratio")] - ((1.0 + p) / (2.0 * p)).powi(2)).abs() < 1e-9);
    }
}

#[test]
fn sweep_rejects_invalid_grid() {
    let o = dlcz(&["sweep", "--param", "source.p", "--from", "0.5", "--to", "1.5", "--steps", "3"]);
    assert_one_line_error(&o);
    assert!(stderr(&o).contains("source.p"));
    let o = dlcz(&["sweep", "--param", "source.q", "--from", "0", "--to", "1", "--steps", "3"]);
    assert_one_line_error(&o);
}
