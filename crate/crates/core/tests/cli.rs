use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pmtlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmtlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn write_cfg(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in report"))
        .parse()
        .unwrap()
}

#[test]
fn bundled_scenarios_report_their_rates() {
    let out = pmtlab(&["params", scenario("wigig.cfg").to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rate = value(&text, "scheme_rate");
    assert!((0.17..0.18).contains(&rate), "{rate}");
    assert_eq!(value(&text, "w2"), 20.0);
    let json = text.lines().last().unwrap();
    let parsed: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(parsed["params"]["scheme"], "F3");

    let out = pmtlab(&["params", scenario("manet.cfg").to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!((value(&text, "scheme_rate") - 0.2).abs() < 1e-12);
    assert_eq!(value(&text, "q2"), 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let infeasible = write_cfg(
        &dir,
        "a.cfg",
        "n = 12\nt_a = 4\nt_b = 4\nt_e = 4\nlambda = 16\nscheme = F1\n",
    );
    let out = pmtlab(&["params", infeasible.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_e < t_ab"));

    let degenerate = write_cfg(
        &dir,
        "b.cfg",
        "n = 12\nt_a = 6\nt_b = 6\nt_e = 5\nlambda = 2\nscheme = F1\n",
    );
    assert_eq!(
        pmtlab(&["params", degenerate.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );

    let missing = dir.path().join("nope.cfg");
    assert_eq!(
        pmtlab(&["params", missing.to_str().unwrap()]).status.code(),
        Some(4)
    );
}

#[test]
fn simulate_is_reproducible_and_dumps_a_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        &dir,
        "f1.cfg",
        "n = 6\nt_a = 3\nt_b = 3\nt_e = 1\nlambda = 16\nscheme = F1\npsi = 0.3\ndelta = 0.2\nepsilon = 0.2\nrate_tightness = false\n",
    );
    let t = dir.path().join("t.csv");
    let args = [
        "simulate",
        cfg.to_str().unwrap(),
        "--trials",
        "20",
        "--seed",
        "5",
    ];
    let a = pmtlab(&args);
    let b = pmtlab(&[&args[..], &["--dump-transcript", t.to_str().unwrap()]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let csv = String::from_utf8(a.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "trial,aborted,failed,bad_event_stage1,bad_event_stage2,bits_communicated"
    );
    assert_eq!(lines.len(), 1 + 20 + 2);
    assert!(lines[1..21]
        .iter()
        .all(|l| l.split(',').nth(2) == Some("0")));
    assert!(lines[22].starts_with("summary,20,0,"));
    let transcript = std::fs::read_to_string(&t).unwrap();
    let t6 = dir.path().join("t6.csv");
    pmtlab(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--trials",
        "1",
        "--seed",
        "6",
        "--dump-transcript",
        t6.to_str().unwrap(),
    ]);
    assert_ne!(transcript, std::fs::read_to_string(&t6).unwrap());

    let mut rows = transcript.lines();
    assert_eq!(
        rows.next(),
        Some("interval,sender,paths_sender,paths_receiver,paths_eve,payload_hex")
    );
    let first: Vec<&str> = rows.next().unwrap().split(',').collect();
    assert_eq!(first[..4], ["0", "alice", "0;1;2", "0;1;2"]);
    assert_eq!(first[5].split(';').count(), 3);
}

#[test]
fn simulate_writes_to_configured_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("out.csv");
    let cfg = write_cfg(
        &dir,
        "f0.cfg",
        &format!(
            "n = 4\nt_a = 4\nt_b = 4\nt_e = 1\nlambda = 8\nscheme = F0\neve = static:0\noutput = {}\n",
            out_path.display()
        ),
    );
    let out = pmtlab(&["simulate", cfg.to_str().unwrap(), "--trials", "3"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(out_path).unwrap();
    assert!(csv.contains("\n2,0,0,0,0,32\n"), "{csv}");
}

#[test]
fn alpha_sweep_upper_bound_is_flat() {
    let out = pmtlab(&["capacity", "--sweep", "alpha", "--points", "40"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    for row in csv.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[4], "8.00000000e-1", "{row}");
        let lower: f64 = cols[3].parse().unwrap();
        assert!(lower > 0.0 && lower <= 0.8);
    }
}
