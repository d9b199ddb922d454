use std::path::{Path, PathBuf};

use qsc_bench::cli::run_cli;
use qsc_bench::metrics::{read_csv, CSV_HEADER};

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("qsc-bench").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            let bytes = std::fs::read(&path).unwrap();
            (PathBuf::from(path.file_name().unwrap()), bytes)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn run_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ra = cli(&["--quiet", "run", "ideal", "--runs", "3", "--seed", "42", "--out-dir", p(&a)]);
    let rb = cli(&["run", "ideal", "--runs", "3", "--seed", "42", "--out-dir", p(&b), "--workers", "2"]);
    assert_eq!(ra.code, 0, "{}", ra.stderr);
    assert_eq!(rb.code, 0, "{}", rb.stderr);
    assert_eq!(ra.stdout, rb.stdout);
    assert!(ra.stderr.is_empty());
    assert!(rb.stderr.contains("running ideal"));
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn run_congested_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let r = cli(&["--quiet", "run", "congested", "--out-dir", p(tmp.path())]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for f in ["results.csv", "handshake_box.svg", "download_box.svg", "handshake_box.json", "download_box.json", "summary.json"] {
        assert!(tmp.path().join(f).is_file(), "{f} missing");
    }
    let rows = read_csv(&tmp.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 400);
    assert!(r.stdout.contains("kyber_sphincs"));
}

#[test]
fn unknown_preset_is_validation_error() {
    let r = cli(&["run", "nosuch"]);
    assert_eq!(r.code, 1);
    for name in ["ideal", "normal", "congested"] {
        assert!(r.stderr.contains(name), "{}", r.stderr);
    }
}

#[test]
fn io_failure_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("occupied");
    std::fs::write(&file, "x").unwrap();
    let r = cli(&["--quiet", "run", "ideal", "--runs", "1", "--out-dir", p(&file)]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    let r = cli(&["compare", p(&tmp.path().join("absent.csv"))]);
    assert_eq!(r.code, 2);
}

#[test]
fn run_scenario_file_with_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("s.toml");
    std::fs::write(
        &scenario,
        "name = \"tiny\"\npreset = \"normal\"\nruns = 2\nfile_bytes = 4096\nsuites = [\"classical\", \"kyber_falcon\"]\n",
    )
    .unwrap();
    let overrides = tmp.path().join("o.toml");
    std::fs::write(&overrides, "[[suite]]\nname = \"kyber_falcon\"\nsign_s = 0.5\n").unwrap();
    let out = tmp.path().join("out");
    let r = cli(&["--quiet", "run", p(&scenario), "--suite-overrides", p(&overrides), "--out-dir", p(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_csv(&out.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.scenario == "tiny"));
    let falcon_min = rows
        .iter()
        .filter(|r| r.sample.suite_name == "kyber_falcon")
        .map(|r| r.sample.handshake_time_s)
        .fold(f64::INFINITY, f64::min);
    assert!(falcon_min >= 0.5);

    std::fs::write(&scenario, "name = \"bad\"\nloss_rate = 1.5\n").unwrap();
    let r = cli(&["run", p(&scenario)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("[0,1)"), "{}", r.stderr);
}

#[test]
fn committed_example_files_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let tmp = tempfile::tempdir().unwrap();
    let r = cli(&[
        "--quiet",
        "run",
        p(&root.join("example.toml")),
        "--runs",
        "1",
        "--suite-overrides",
        p(&root.join("suite-overrides.toml")),
        "--out-dir",
        p(tmp.path()),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let r = cli(&["suites", "--suite-overrides", p(&root.join("suite-overrides.toml"))]);
    assert!(r.stdout.contains("3309"));
}

#[test]
fn latency_as_rtt_halves_delay() {
    let tmp = tempfile::tempdir().unwrap();
    let r = cli(&["--quiet", "run", "normal", "--runs", "1", "--latency-is-rtt", "--out-dir", p(tmp.path())]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("latency 50 ms one-way"), "{}", r.stdout);
}

#[test]
fn sweep_latency_row_count() {
    let tmp = tempfile::tempdir().unwrap();
    let r = cli(&["--quiet", "sweep", "latency", "--runs", "2", "--out-dir", p(tmp.path())]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("{CSV_HEADER},swept_value"));
    assert_eq!(lines.count(), 72);
}

#[test]
fn sweep_loss_points() {
    let tmp = tempfile::tempdir().unwrap();
    let r = cli(&["--quiet", "sweep", "loss", "--runs", "1", "--out-dir", p(tmp.path())]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_csv(&tmp.path().join("results.csv")).unwrap();
    let mut points: Vec<f64> = rows.iter().map(|r| r.swept_value.unwrap()).collect();
    points.dedup();
    assert_eq!(points, [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]);
}

#[test]
fn sweep_file_size_below_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let r = cli(&["--quiet", "sweep", "file-size", "--max-bytes", "2000", "--runs", "1", "--out-dir", p(tmp.path())]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_csv(&tmp.path().join("results.csv")).unwrap();
    let mut sizes: Vec<u64> = rows.iter().map(|r| r.sample.file_bytes).collect();
    sizes.dedup();
    assert_eq!(sizes, [244, 488, 976, 1952]);
    assert!(rows.iter().all(|r| r.swept_value == Some(r.sample.file_bytes as f64)));
    assert_eq!(cli(&["sweep", "jitter"]).code, 1);
}

fn write_means_csv(path: &Path, rows: &[(&str, f64, f64)]) {
    let mut text = format!("{CSV_HEADER}\n");
    for (i, (suite, hs, total)) in rows.iter().enumerate() {
        text.push_str(&format!(
            "means,{suite},0,{i},{hs:.9},{total:.9},2097152,{},true\n",
            2_097_152.0 / total
        ));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn compare_identical_suites() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("same.csv");
    write_means_csv(&csv, &[("classical", 0.5, 2.0), ("kyber_falcon", 0.5, 2.0)]);
    let r = cli(&["compare", p(&csv)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let deltas: Vec<&str> = r.stdout.lines().filter(|l| l.starts_with("kyber_falcon")).collect();
    assert_eq!(deltas.len(), 2);
    assert!(deltas.iter().all(|l| l.contains("+0.00")), "{}", r.stdout);
}

#[test]
fn compare_reproduces_congested_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("congested_means.csv");
    write_means_csv(
        &csv,
        &[
            ("classical", 0.77, 23.5496),
            ("kyber_dilithium", 0.42, 20.9333),
            ("kyber_falcon", 0.61, 18.3020),
            ("kyber_sphincs", 0.64, 16.8645),
        ],
    );
    let r = cli(&["compare", p(&csv), "--baseline", "classical"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for want in ["-45.45", "-20.78", "-16.88", "-11.11", "-22.28", "-28.39"] {
        assert!(r.stdout.contains(want), "missing {want} in\n{}", r.stdout);
    }
    assert!(!r.stdout.contains("FAIL"));
}

#[test]
fn compare_threshold_flag_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("slow.csv");
    write_means_csv(&csv, &[("classical", 1.0, 1.0), ("kyber_sphincs", 1.3, 1.0)]);
    assert_eq!(cli(&["compare", p(&csv)]).code, 0);
    assert_eq!(cli(&["compare", p(&csv), "--fail-over-threshold"]).code, 1);
    assert_eq!(cli(&["compare", p(&csv), "--fail-over-threshold", "--high-threshold", "50"]).code, 0);

    let r = cli(&["compare", p(&csv), "--baseline", "kyber_dilithium"]);
    assert_eq!(r.code, 1);

    let broken = tmp.path().join("broken.csv");
    std::fs::write(&broken, format!("{CSV_HEADER}\nx,classical,0,1,0.1,0.2,10,50,true\nx,classical,0,1,abc,0.2,10,50,true\n")).unwrap();
    let r = cli(&["compare", p(&broken)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("line 3"), "{}", r.stderr);
}

#[test]
fn report_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    assert_eq!(cli(&["--quiet", "run", "normal", "--runs", "4", "--out-dir", p(&run_dir)]).code, 0);
    let report_dir = tmp.path().join("report");
    let r = cli(&["report", p(&run_dir.join("results.csv")), "--out-dir", p(&report_dir)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(
        std::fs::read(run_dir.join("handshake_box.json")).unwrap(),
        std::fs::read(report_dir.join("handshake_box.json")).unwrap()
    );
}

#[test]
fn suites_listing() {
    let r = cli(&["suites"]);
    assert_eq!(r.code, 0);
    for name in ["classical", "kyber_dilithium", "kyber_falcon", "kyber_sphincs", "17088", "1281"] {
        assert!(r.stdout.contains(name));
    }
}

#[test]
fn help_exits_zero() {
    let r = cli(&["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("congested"));
    assert_eq!(cli(&["--bogus-flag"]).code, 1);
}
