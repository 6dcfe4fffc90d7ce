//! End-to-end runs of the `fastl0` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fastl0(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastl0"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = fastl0(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn code(args: &[&str]) -> i32 {
    let o = fastl0(args);
    assert!(
        o.stdout.is_empty() || o.status.success(),
        "no output expected on failure"
    );
    o.status.code().expect("exited normally")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).expect("valid json")
}

#[test]
fn deconvolve_worked_example() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "y.csv", "1.00\n0.98\n0.96\n");
    let out = ok(&[
        "deconvolve",
        "--input",
        &input,
        "--gamma",
        "0.98",
        "--lambda",
        "0.5",
    ]);
    let r = json(&out);
    assert_eq!(r["spikes"].as_array().unwrap().len(), 0);
    assert!((r["objective"].as_f64().unwrap() - 5.4e-8).abs() < 1e-8);
    assert_eq!(r["config"]["constrained"], Value::Bool(true));
    assert_eq!(r["config"]["rho"].as_f64().unwrap(), 1e-40);
    assert_eq!(r["calcium"].as_array().unwrap().len(), 3);
    assert_eq!(r["len"].as_u64().unwrap(), 3);
}

#[test]
fn deconvolve_writes_file_and_recomputes() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "y.csv", "value\n0.1\n0.1\n5.0\n4.9\n4.8\n");
    let output = path(&dir, "r.json");
    let printed = ok(&[
        "deconvolve",
        "--input",
        &input,
        "--gamma",
        "0.98",
        "--lambda",
        "0.1",
        "--unconstrained",
        "--output",
        &output,
    ]);
    assert!(printed.is_empty());
    let text = fs::read_to_string(&output).unwrap();
    let r = fastl0::io::ResultFile::from_json(&text).unwrap();
    assert_eq!(r.changepoints, vec![2]);
    assert_eq!(r.spikes[0].index, 3);
    assert!((r.spikes[0].time_s - 0.02).abs() < 1e-12);
    assert!(!r.config.constrained);
    let y = [0.1, 0.1, 5.0, 4.9, 4.8];
    let again = r.recompute_objective(&y).unwrap();
    assert!((again - r.objective).abs() <= 1e-9 * r.objective.abs().max(1e-12));
}

#[test]
fn deconvolve_huge_penalty_and_flags() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "y.csv", "0\n0\n3\n2.9\n2.8\n0.1\n5\n4.9\n");
    let r = json(&ok(&[
        "deconvolve",
        "--input",
        &input,
        "--gamma",
        "0.98",
        "--lambda",
        "1e9",
    ]));
    assert!(r["spikes"].as_array().unwrap().is_empty());

    let r = json(&ok(&[
        "deconvolve",
        "--input",
        &input,
        "--gamma",
        "0.98",
        "--lambda",
        "0.1",
        "--no-calcium",
        "--rate",
        "10",
    ]));
    assert!(r.get("calcium").is_none());
    let first = &r["spikes"][0];
    let idx = first["index"].as_f64().unwrap();
    assert!((first["time_s"].as_f64().unwrap() - (idx - 1.0) / 10.0).abs() < 1e-12);
}

#[test]
fn deconvolve_uses_trace_timestamps_and_intercept_grid() {
    let dir = TempDir::new().unwrap();
    let rows: Vec<String> = [2.0, 2.0, 3.0, 2.9, 2.81]
        .iter()
        .enumerate()
        .map(|(i, v)| format!("{},{v}", i as f64 * 0.5))
        .collect();
    let input = write(
        &dir,
        "y.csv",
        &(String::from("time,value\n") + &rows.join("\n")),
    );
    let r = json(&ok(&[
        "deconvolve",
        "--input",
        &input,
        "--gamma",
        "0.9",
        "--lambda",
        "0.01",
        "--beta0-grid",
        "0:2:5",
    ]));
    assert_eq!(r["config"]["beta0"].as_f64().unwrap(), 2.0);
    let spike = &r["spikes"][0];
    assert_eq!(spike["index"].as_u64().unwrap(), 3);
    assert!((spike["time_s"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn noiseless_simulation_round_trip() {
    let dir = TempDir::new().unwrap();
    let mut y = vec![0.0; 40];
    for (t, v) in y.iter_mut().enumerate().skip(17) {
        *v = 0.95f64.powi(t as i32 - 17);
    }
    let text: String = y.iter().map(|v| format!("{v}\n")).collect();
    let input = write(&dir, "y.csv", &text);
    let r = json(&ok(&[
        "deconvolve",
        "--input",
        &input,
        "--gamma",
        "0.95",
        "--lambda",
        "1e-6",
    ]));
    let spikes = r["spikes"].as_array().unwrap();
    assert_eq!(spikes.len(), 1);
    assert_eq!(spikes[0]["index"].as_u64().unwrap(), 18);
}

#[test]
fn deconvolve_usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "y.csv", "1\n2\n");
    let bad = write(&dir, "bad.csv", "1\nnope\n");
    let missing = path(&dir, "missing.csv");
    for args in [
        vec![
            "deconvolve",
            "--input",
            &missing,
            "--gamma",
            "0.9",
            "--lambda",
            "1",
        ],
        vec![
            "deconvolve",
            "--input",
            &bad,
            "--gamma",
            "0.9",
            "--lambda",
            "1",
        ],
        vec![
            "deconvolve",
            "--input",
            &input,
            "--gamma",
            "1.5",
            "--lambda",
            "1",
        ],
        vec![
            "deconvolve",
            "--input",
            &input,
            "--gamma",
            "0.9",
            "--lambda",
            "-1",
        ],
        vec![
            "deconvolve",
            "--input",
            &input,
            "--gamma",
            "0.9",
            "--lambda",
            "1",
            "--beta0",
            "0",
            "--beta0-grid",
            "0:1:3",
        ],
        vec![
            "deconvolve",
            "--input",
            &input,
            "--gamma",
            "0.9",
            "--lambda",
            "1",
            "--beta0-grid",
            "1:0:3",
        ],
        vec!["deconvolve", "--input", &input, "--gamma", "0.9"],
        vec![
            "deconvolve",
            "--input",
            &input,
            "--gamma",
            "x",
            "--lambda",
            "1",
        ],
        vec!["no-such-command"],
    ] {
        assert_eq!(code(&args), 2, "{args:?}");
    }
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |prefix: &str| {
        ok(&[
            "simulate",
            "--T",
            "500",
            "--gamma",
            "0.95",
            "--sigma",
            "0.2",
            "--theta",
            "0.05",
            "--seed",
            "7",
            "--output-prefix",
            prefix,
        ]);
        (
            fs::read(format!("{prefix}.csv")).unwrap(),
            fs::read(format!("{prefix}.spikes.txt")).unwrap(),
        )
    };
    let a = run(&path(&dir, "a"));
    let b = run(&path(&dir, "b"));
    assert_eq!(a, b);
    let trace = fastl0::io::parse_trace(std::str::from_utf8(&a.0).unwrap()).unwrap();
    assert_eq!(trace.values.len(), 500);
    let spikes = fastl0::io::parse_spike_times(std::str::from_utf8(&a.1).unwrap()).unwrap();
    assert!(!spikes.is_empty());

    let sim = fastl0::generate(&fastl0::SimulationConfig::new(500, 0.95, 0.2, 0.05, 7)).unwrap();
    assert_eq!(trace.values, sim.y);
    assert_eq!(spikes.len(), sim.spike_times.len());
}

#[test]
fn simulate_silent_neuron_and_errors() {
    let dir = TempDir::new().unwrap();
    let prefix = path(&dir, "quiet");
    ok(&[
        "simulate",
        "--T",
        "20",
        "--gamma",
        "0.9",
        "--sigma",
        "0",
        "--theta",
        "0",
        "--seed",
        "1",
        "--output-prefix",
        &prefix,
        "--beta0",
        "2",
    ]);
    assert_eq!(
        fs::read_to_string(format!("{prefix}.spikes.txt")).unwrap(),
        ""
    );
    assert_eq!(
        fs::read_to_string(format!("{prefix}.csv")).unwrap(),
        "2\n".repeat(20)
    );
    for bad in [
        ["--T", "0", "--gamma", "0.9"],
        ["--T", "10", "--gamma", "1.0"],
    ] {
        let mut args = vec!["simulate"];
        args.extend(bad);
        args.extend([
            "--sigma",
            "0.1",
            "--theta",
            "0.1",
            "--seed",
            "1",
            "--output-prefix",
            &prefix,
        ]);
        assert_eq!(code(&args), 2);
    }
}

#[test]
fn evaluate_metrics() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.txt", "0.1\n0.5\n0.9\n");
    let empty = write(&dir, "empty.txt", "");
    let zero = write(&dir, "zero.txt", "0\n");
    assert_eq!(
        ok(&[
            "evaluate",
            "--estimated",
            &a,
            "--truth",
            &a,
            "--metric",
            "vr"
        ]),
        "0.000000\n"
    );
    assert_eq!(
        ok(&[
            "evaluate",
            "--estimated",
            &empty,
            "--truth",
            &empty,
            "--metric",
            "vp"
        ]),
        "0.000000\n"
    );
    assert_eq!(
        ok(&[
            "evaluate",
            "--estimated",
            &zero,
            "--truth",
            &empty,
            "--metric",
            "vr"
        ]),
        "0.707107\n"
    );
    assert_eq!(
        ok(&[
            "evaluate",
            "--estimated",
            &a,
            "--truth",
            &a,
            "--metric",
            "corr"
        ]),
        "1.00000\n"
    );
    assert_eq!(
        ok(&[
            "evaluate",
            "--estimated",
            &a,
            "--truth",
            &empty,
            "--metric",
            "vp"
        ]),
        "3.00000\n"
    );

    let report = path(&dir, "report.json");
    ok(&[
        "evaluate",
        "--estimated",
        &zero,
        "--truth",
        &a,
        "--metric",
        "vp",
        "--vp-q",
        "2",
        "--report",
        &report,
    ]);
    let r = json(&fs::read_to_string(&report).unwrap());
    assert_eq!(r["metric"], "vp");
    assert_eq!(r["truth_count"], 3);
    assert_eq!(r["params"]["vp_q"].as_f64().unwrap(), 2.0);
}

#[test]
fn evaluate_accepts_result_files() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "y.csv", "0.1\n0.1\n5.0\n4.9\n4.8\n");
    let result = path(&dir, "r.json");
    ok(&[
        "deconvolve",
        "--input",
        &input,
        "--gamma",
        "0.98",
        "--lambda",
        "0.1",
        "--output",
        &result,
    ]);
    let truth = write(&dir, "truth.txt", "0.02\n");
    assert_eq!(
        ok(&[
            "evaluate",
            "--estimated",
            &result,
            "--truth",
            &truth,
            "--metric",
            "vp"
        ]),
        "0.000000\n"
    );
    let truth = write(&dir, "truth10.txt", "0.2\n");
    assert_eq!(
        ok(&[
            "evaluate",
            "--estimated",
            &result,
            "--truth",
            &truth,
            "--metric",
            "vp",
            "--rate",
            "10"
        ]),
        "0.000000\n"
    );
}

#[test]
fn evaluate_errors() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.txt", "0.1\n");
    let unsorted = write(&dir, "u.txt", "0.5\n0.1\n");
    let missing = path(&dir, "missing.txt");
    assert_eq!(
        code(&[
            "evaluate",
            "--estimated",
            &missing,
            "--truth",
            &a,
            "--metric",
            "vr"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "evaluate",
            "--estimated",
            &unsorted,
            "--truth",
            &a,
            "--metric",
            "vr"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "evaluate",
            "--estimated",
            &a,
            "--truth",
            &a,
            "--metric",
            "xyz"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "evaluate",
            "--estimated",
            &a,
            "--truth",
            &a,
            "--metric",
            "vr",
            "--vr-tau",
            "0"
        ]),
        2
    );
}

fn simulated_pair(dir: &TempDir, sigma: &str) -> (String, String) {
    let prefix = path(dir, "sim");
    ok(&[
        "simulate",
        "--T",
        "1000",
        "--gamma",
        "0.9857142857142858",
        "--sigma",
        sigma,
        "--theta",
        "0.01",
        "--seed",
        "3",
        "--output-prefix",
        &prefix,
    ]);
    (format!("{prefix}.csv"), format!("{prefix}.spikes.txt"))
}

#[test]
fn tune_writes_reports() {
    let dir = TempDir::new().unwrap();
    let (trace, truth) = simulated_pair(&dir, "0");
    let prefix = path(&dir, "tuned");
    let printed = ok(&[
        "tune",
        "--input",
        &trace,
        "--truth",
        &truth,
        "--metric",
        "vp",
        "--lambda-grid",
        "1e-6:1:7",
        "--class",
        "fast",
        "--output-prefix",
        &prefix,
    ]);
    assert!(printed.starts_with("chosen_lambda="), "{printed}");
    let summary = json(&fs::read_to_string(format!("{prefix}.json")).unwrap());
    assert!((summary["gamma"].as_f64().unwrap() - 0.98571).abs() < 1e-5);
    assert_eq!(summary["grid_size"], 7);
    assert_eq!(summary["test_score"].as_f64().unwrap(), 0.0);
    let csv = fs::read_to_string(format!("{prefix}.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "lambda,train_score,spike_count"
    );
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn tune_singleton_grid_and_errors() {
    let dir = TempDir::new().unwrap();
    let (trace, truth) = simulated_pair(&dir, "0.1");
    let printed = ok(&[
        "tune",
        "--input",
        &trace,
        "--truth",
        &truth,
        "--metric",
        "vr",
        "--lambda-grid",
        "0.3:0.3:1",
        "--gamma",
        "0.98",
    ]);
    assert!(printed.starts_with("chosen_lambda=0.3 "), "{printed}");
    for grid in ["0:1:3", "1:0.5:3", "1:2", "1:2:0"] {
        let args = [
            "tune",
            "--input",
            &trace,
            "--truth",
            &truth,
            "--metric",
            "vr",
            "--lambda-grid",
            grid,
            "--gamma",
            "0.98",
        ];
        assert_eq!(code(&args), 2, "{grid}");
    }
    assert_eq!(
        code(&["tune", "--input", &trace, "--truth", &truth, "--metric", "vr"]),
        2
    );
}

#[test]
fn benchmark_rows_and_agreement() {
    let base = [
        "--T", "300", "--theta", "0.05", "--gamma", "0.95", "--sigma", "0.2", "--seed", "5",
    ];
    let mut fpop = vec!["benchmark", "--solver", "fpop", "--reps", "3"];
    fpop.extend(base);
    let out = ok(&fpop);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("rep,seed,solver"));
    assert!(lines[1].starts_with("0,5,fpop,300,"));
    assert!(lines[3].starts_with("2,7,fpop,300,"));

    let mut op = vec!["benchmark", "--solver", "op", "--reps", "3"];
    op.extend(base);
    let out_op = ok(&op);
    let objective = |line: &str| line.split(',').nth(6).unwrap().parse::<f64>().unwrap();
    for (a, b) in out.lines().skip(1).zip(out_op.lines().skip(1)) {
        assert!((objective(a) - objective(b)).abs() < 1e-8, "{a} vs {b}");
        assert!(b.ends_with(','), "op reports no region count: {b}");
    }

    let mut bad = vec!["benchmark", "--solver", "op", "--constrained"];
    bad.extend(base);
    assert_eq!(code(&bad), 2);
}

#[test]
fn help_and_version_succeed() {
    assert!(ok(&["--help"]).contains("deconvolve"));
    assert!(ok(&["deconvolve", "--help"]).contains("--beta0-grid"));
    assert!(!ok(&["--version"]).is_empty());
    let _ = Path::new(env!("CARGO_BIN_EXE_fastl0"));
}
