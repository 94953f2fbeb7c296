//! End-to-end runs of the `ocpdl` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ocpdl_core::{write_dtf, DenseTensor};

fn ocpdl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocpdl"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn status(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

const SMALL: &[&str] = &["--synthetic", "5,4,30", "--rank", "2", "--subsample", "3", "--T", "6", "--seed", "1"];

#[test]
fn usage_errors_exit_2_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["factorize", "--tensor", "missing.dtf1", "--rank", "2", "--out", "o"],
        &["factorize", "--synthetic", "4,4,10", "--out", "o"],
        &["factorize", "--synthetic", "4,4,10", "--rank", "0", "--out", "o"],
        &["factorize", "--synthetic", "4,4,10", "--rank", "2", "--beta", "1.5", "--out", "o"],
        &["factorize", "--synthetic", "4,4,10", "--rank", "2", "--subsample", "11", "--out", "o"],
        &["factorize", "--synthetic", "4,4,10", "--rank", "2", "--method", "svd", "--out", "o"],
        &["bench", "--synthetic", "4,4,10", "--rank", "2", "--methods", "als,nope", "--out", "o"],
        &["patches", "--image", "missing.ppm", "--out", "o"],
    ];
    for args in cases {
        let out = ocpdl(dir.path(), args);
        assert_eq!(status(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!dir.path().join("o").exists(), "{args:?} wrote output");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "# small run\nsynthetic = 5,4,30\nrank = 2\nsubsample = 3\nT = 5\nout = from_file\n",
    )
    .unwrap();
    let out = ocpdl(dir.path(), &["factorize", "--config", "run.cfg", "--T", "3"]);
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("from_file/trace.csv"));
    assert_eq!(rows.len(), 3);

    fs::write(dir.path().join("bad.cfg"), "rank = 2\nranks = 3\n").unwrap();
    let out = ocpdl(dir.path(), &["factorize", "--config", "bad.cfg", "--synthetic", "4,4,10"]);
    assert_eq!(status(&out), 2);
}

#[test]
fn factorize_writes_trace_loadings_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["factorize", "--out", "run"];
    args.extend_from_slice(SMALL);
    let out = ocpdl(dir.path(), &args);
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    let rows = csv_rows(&run.join("trace.csv"));
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap() >= 0.0));
    let u2 = ocpdl_core::read_dtf(run.join("U2.dtf1")).unwrap();
    assert_eq!(u2.shape(), &[30, 2]);
    assert!(fs::read_to_string(run.join("error_curve.svg")).unwrap().contains("<polyline"));
}

fn bench(dir: &Path, out: &str, threads: &str) -> Vec<u8> {
    let mut args = vec!["bench", "--methods", "ocpdl,als,mu", "--trials", "3", "--clock", "logical", "--out", out];
    args.extend_from_slice(SMALL);
    let res = Command::new(env!("CARGO_BIN_EXE_ocpdl"))
        .args(&args)
        .env("OCPDL_THREADS", threads)
        .current_dir(dir)
        .output()
        .unwrap();
    assert_eq!(status(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    fs::read(dir.join(out).join("bench.csv")).unwrap()
}

#[test]
fn bench_is_byte_stable_and_chart_matches_rows() {
    let dir = tempfile::tempdir().unwrap();
    let a = bench(dir.path(), "a", "1");
    let b = bench(dir.path(), "b", "4");
    assert_eq!(a, b);

    let rows = csv_rows(&dir.path().join("a/bench.csv"));
    assert_eq!(rows.len(), 3 * 3 * 6);
    let svg = fs::read_to_string(dir.path().join("a/bench.svg")).unwrap();
    for method in ["ocpdl", "als", "mu"] {
        let line = svg
            .lines()
            .find(|l| l.starts_with("<polyline") && l.contains(&format!("data-series=\"{method}\"")))
            .unwrap_or_else(|| panic!("no curve for {method}"));
        let attr = |name: &str| {
            let start = line.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
            &line[start..start + line[start..].find('"').unwrap()]
        };
        let points = attr("points").split_whitespace().count();
        let repeats: usize = attr("data-repeats").parse().unwrap();
        let csv_count = rows.iter().filter(|r| &r[0] == method).count();
        assert_eq!(points * repeats, csv_count, "{method}");
    }
}

#[test]
fn diagnose_flags_the_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let small = ["diagnose", "--synthetic", "4,4,4,40", "--T", "20", "--out", "d"];
    let ok = ocpdl(dir.path(), &small);
    assert_eq!(status(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    assert_eq!(csv_rows(&dir.path().join("d/trace.csv")).len(), 20);

    let mut bad = small.to_vec();
    bad.push("--corrupt-aggregation");
    let res = ocpdl(dir.path(), &bad);
    assert_eq!(status(&res), 1);
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL"));
}

fn write_ppm(path: &Path, w: usize, h: usize) {
    let mut bytes = format!("P6\n# test image\n{w} {h}\n255\n").into_bytes();
    bytes.extend((0..w * h * 3).map(|i| ((i * 37) % 256) as u8));
    fs::write(path, bytes).unwrap();
}

#[test]
fn patches_feed_a_stream_directory_run() {
    let dir = tempfile::tempdir().unwrap();
    write_ppm(&dir.path().join("img.ppm"), 16, 12);
    let out = ocpdl(
        dir.path(),
        &["patches", "--image", "img.ppm", "--patch", "4", "--count", "25", "--batch", "10", "--out", "p"],
    );
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<_> = fs::read_dir(dir.path().join("p")).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files, ["batch_00000.dtf1", "batch_00001.dtf1", "batch_00002.dtf1"]);
    let last = ocpdl_core::read_dtf(dir.path().join("p/batch_00002.dtf1")).unwrap();
    assert_eq!(last.shape(), &[4, 4, 3, 5]);

    let run = ocpdl(
        dir.path(),
        &["factorize", "--stream-dir", "p", "--rank", "3", "--lambda", "0.1", "--T", "10", "--out", "r"],
    );
    assert_eq!(status(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(csv_rows(&dir.path().join("r/trace.csv")).len(), 3);
}

#[test]
fn markov_source_runs_online_only() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..2 {
        let obs = DenseTensor::from_fn(vec![3, 3], |idx| ((idx[0] + i) % 3) as f64 + 0.5 * idx[1] as f64);
        write_dtf(dir.path().join(format!("s{i}.dtf1")), &obs).unwrap();
    }
    fs::write(dir.path().join("chain.txt"), "2\n0.7 0.3\n0.4 0.6\ns0.dtf1\ns1.dtf1\n").unwrap();
    let args = ["factorize", "--markov", "chain.txt", "--rank", "2", "--T", "15", "--batch", "2", "--out", "m"];
    let out = ocpdl(dir.path(), &args);
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("m/trace.csv"));
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| r[5].is_empty()));

    let mut als = args.to_vec();
    als.extend(["--method", "als"]);
    assert_eq!(status(&ocpdl(dir.path(), &als)), 2);
}
