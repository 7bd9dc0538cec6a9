use std::path::Path;
use std::process::{Command, Output};

use anisofield::estimator::{nf_spec, nv_spec};
use anisofield::nn::param_count;
use anisofield::FieldGrid;
use anisofield_cli::records::records_from_csv;
use anisofield_cli::scan::{scan_from_csv, PixelStatus};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anisofield"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn simulate_writes_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["simulate", "--alpha", "0.7854", "--lambda", "0.3", "--theta", "2", "--nu", "1.5", "--seed", "1", "--out", "f.csv"],
    );
    let f = FieldGrid::read_csv(dir.path().join("f.csv")).unwrap();
    assert_eq!((f.width(), f.height()), (16, 16));
    assert!(f.is_complete());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["simulate", "--alpha", "1"]).status.code(), Some(1));
    assert_eq!(
        run(dir.path(), &["simulate", "--alpha", "1", "--lambda", "1.5", "--theta", "2"]).status.code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), &["--format", "json", "aic"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["estimate", "--method", "nf", "--field", "x.csv"]).status.code(), Some(1));
    let missing = run(dir.path(), &["estimate", "--method", "ml", "--field", "absent.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());
    assert!(missing.stdout.is_empty());
    std::fs::write(dir.path().join("bad.model"), b"garbage").unwrap();
    assert_eq!(run(dir.path(), &["inspect-model", "bad.model"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn varmap_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--alpha", "1.2", "--lambda", "0.5", "--theta", "1.5", "--seed", "4", "--out", "f.csv"]);
    let map = ok(dir.path(), &["varmap", "--field", "f.csv"]);
    let rows: Vec<&str> = map.lines().collect();
    assert_eq!(rows.len(), 13);
    assert!(rows.iter().all(|r| r.split(',').count() == 13));
    assert_eq!(rows[6].split(',').nth(6).unwrap().parse::<f64>().unwrap(), 0.0);

    let est = ok(dir.path(), &["estimate", "--method", "ml", "--field", "f.csv"]);
    let lines: Vec<&str> = est.lines().collect();
    assert_eq!(lines[0], "alpha,lambda,theta,sigma2,converged,out_of_domain");
    assert_eq!(lines.len(), 2);
    let vals: Vec<f64> = lines[1].split(',').take(4).map(|v| v.parse().unwrap()).collect();
    assert!(vals[1] > 0.0 && vals[1] <= 1.0 && vals[2] > 0.0 && vals[3] > 0.0);
}

#[test]
fn train_inspect_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["make-dataset", "--configs", "30", "--seed", "3", "--out", "train.bin"]);
    assert!(d.join("train.bin.manifest").exists());
    for kind in ["nf", "nv"] {
        ok(
            d,
            &["train", "--kind", kind, "--dataset", "train.bin", "--epochs", "1", "--batch-size", "10", "--seed", "5", "--out", &format!("{kind}.model")],
        );
    }
    let table = ok(d, &["inspect-model", "nf.model"]);
    assert!(table.contains("total,,,,,,3761331"), "{table}");
    let sum: usize = table
        .lines()
        .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(sum, param_count(&nf_spec()).unwrap());
    let table = ok(d, &["inspect-model", "nv.model"]);
    assert!(table.contains(&format!("total,,,,,,{}", param_count(&nv_spec()).unwrap())));

    ok(d, &["simulate", "--alpha", "0.5", "--lambda", "0.4", "--theta", "2", "--seed", "8", "--out", "f.csv"]);
    let row = ok(d, &["estimate", "--method", "nv", "--model", "nv.model", "--field", "f.csv"]);
    assert_eq!(row.lines().count(), 2);
    assert_eq!(
        run(d, &["estimate", "--method", "nv", "--model", "nf.model", "--field", "f.csv"]).status.code(),
        Some(1)
    );

    let records = ok(
        d,
        &["bench", "--methods", "nf,nv", "--nf-model", "nf.model", "--nv-model", "nv.model", "--configs", "3", "--replicates", "2", "--summary", "summary.csv", "--timing", "timing.csv"],
    );
    let recs = records_from_csv(&records).unwrap();
    assert_eq!(recs.len(), 3 * 2 * 2);
    let order: Vec<(usize, usize)> = recs.iter().map(|r| (r.config, r.replicate)).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
    assert!(recs.iter().all(|r| r.alpha_error.unwrap() <= std::f64::consts::FRAC_PI_2));
    assert!(std::fs::read_to_string(d.join("summary.csv")).unwrap().starts_with("parameter,bin"));
    let timing = std::fs::read_to_string(d.join("timing.csv")).unwrap();
    assert!(timing
        .lines()
        .skip(1)
        .all(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn scan_small_raster() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--alpha", "0.5", "--lambda", "0.5", "--theta", "2", "--width", "17", "--height", "17", "--seed", "2", "--out", "r.csv"]);
    let mut text = std::fs::read_to_string(d.join("r.csv")).unwrap();
    text = text.replacen(
        text.lines().next().unwrap().split(',').next().unwrap(),
        "NaN",
        1,
    );
    std::fs::write(d.join("r.csv"), text).unwrap();
    std::fs::write(d.join("r.csv.json"), r#"{"cell_size": 1.0, "source": "synthetic"}"#).unwrap();
    let out = ok(d, &["scan", "--raster", "r.csv", "--method", "ml"]);
    let px = scan_from_csv(&out).unwrap();
    assert_eq!(px.len(), 4);
    assert_eq!((px[0].row, px[0].col, px[0].status), (7, 7, PixelStatus::Incomplete));
    assert!(px[1..].iter().all(|p| p.status == PixelStatus::Ok));

    ok(d, &["simulate", "--alpha", "0.5", "--lambda", "0.5", "--theta", "2", "--width", "8", "--height", "8", "--out", "tiny.csv"]);
    let out = run(d, &["scan", "--raster", "tiny.csv", "--method", "ml"]);
    assert!(out.status.success());
    assert_eq!(scan_from_csv(&String::from_utf8(out.stdout).unwrap()).unwrap().len(), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}
