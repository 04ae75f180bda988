use std::path::Path;
use std::process::{Command, Output};

fn sapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sapt"))
        .args(args)
        .output()
        .expect("run sapt")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "--dataset",
        "iris",
        "--replicas",
        "3",
        "--samples",
        "600",
        "--swap-interval",
        "20",
        "--surrogate-interval",
        "40",
        "--rw-sd",
        "0.1",
        "--sequential",
        "--out-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    sapt(&args)
}

/// Rebuilds the command line from a manifest.
fn args_from_manifest(manifest: &str, out: &Path) -> Vec<String> {
    let mut args = Vec::new();
    for line in manifest.lines() {
        let (key, value) = line.split_once(" = ").unwrap();
        match key {
            "version" | "topology" | "train_rows" | "test_rows" | "samples_per_replica" => {}
            "sequential" => {
                if value == "true" {
                    args.push("--sequential".to_string());
                }
            }
            "audit_surrogate" => {
                if value == "false" {
                    args.push("--no-audit".to_string());
                }
            }
            _ => {
                args.push(format!("--{}", key.replace('_', "-")));
                args.push(value.to_string());
            }
        }
    }
    args.push("--out-dir".into());
    args.push(out.to_str().unwrap().into());
    args
}

#[test]
fn successful_run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--surrogate-prob", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("test_accuracy"), "{stdout}");

    for f in ["manifest.txt", "report.txt", "summary.txt", "surrogate_report.txt", "surrogate_trace.csv", "histograms.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    for i in 0..3 {
        let trace = read(dir.path(), &format!("trace_replica{i}.csv"));
        assert_eq!(trace.lines().count(), 1 + 200);
    }
    // 99 parameters, 3 replicas x 100 retained steps each
    let posterior: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("posterior_"))
        .collect();
    assert_eq!(posterior.len(), 99);
    assert_eq!(read(dir.path(), "posterior_w_0_0.csv").lines().count(), 1 + 300);

    let report = read(dir.path(), "report.txt");
    for key in ["elapsed_seconds", "true_evals", "surrogate_evals", "swap_attempts", "swap_accepts", "surrogate_prediction_rmse"] {
        assert!(report.contains(key), "report lacks {key}");
    }
    let surrogate = read(dir.path(), "surrogate_report.txt");
    assert!(surrogate.contains("prediction_rmse"), "{surrogate}");
    let trace_rows = read(dir.path(), "surrogate_trace.csv").lines().count() - 1;
    let evals: usize = report
        .lines()
        .find_map(|l| l.strip_prefix("surrogate_evals = "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(trace_rows, evals);
}

#[test]
fn manifest_reproduces_the_run() {
    let first = tempfile::tempdir().unwrap();
    let out = small_run(first.path(), &["--surrogate-prob", "0.3", "--seed", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let second = tempfile::tempdir().unwrap();
    let args = args_from_manifest(&read(first.path(), "manifest.txt"), second.path());
    let out = Command::new(env!("CARGO_BIN_EXE_sapt")).args(&args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));

    let untimed = |dir: &Path| -> String {
        read(dir, "summary.txt").lines().filter(|l| !l.contains("elapsed")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(untimed(first.path()), untimed(second.path()));
    for f in ["manifest.txt", "surrogate_trace.csv", "histograms.csv", "trace_replica2.csv", "posterior_bo_2.csv"] {
        assert_eq!(read(first.path(), f), read(second.path(), f), "{f} differs");
    }
}

#[test]
fn no_surrogate_report_says_not_applicable() {
    let dir = tempfile::tempdir().unwrap();
    assert!(small_run(dir.path(), &[]).status.success());
    assert!(read(dir.path(), "surrogate_report.txt").contains("not applicable"));
    assert_eq!(read(dir.path(), "surrogate_trace.csv").lines().count(), 1);
}

#[test]
fn configuration_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec!["--dataset", "nonexistent-set", "--out-dir", d],
        vec!["--dataset", "iris", "--replicas", "1", "--out-dir", d],
        vec!["--dataset", "iris", "--surrogate-prob", "1.5", "--out-dir", d],
        vec!["--dataset", "iris", "--swap-interval", "30", "--surrogate-interval", "50", "--out-dir", d],
        vec!["--dataset", "iris", "--proposal", "hmc"],
        vec!["--replicas", "4"],
        vec!["--dataset", "chess", "--data-dir", d, "--out-dir", d],
    ] {
        let out = sapt(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn unwritable_output_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let out = small_run(&blocker.join("sub"), &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_exits_cleanly() {
    let out = sapt(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--dataset", "--surrogate-prob", "--lg-rate", "--thin", "--sequential"] {
        assert!(text.contains(flag), "help lacks {flag}");
    }
}

#[test]
fn csv_path_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    let mut text = String::from("a,b,label\n");
    for i in 0..40 {
        let x = i as f64 / 40.0;
        text.push_str(&format!("{x},{},{}\n", 1.0 - x, usize::from(x > 0.5)));
    }
    std::fs::write(&csv, text).unwrap();
    let out_dir = dir.path().join("out");
    let base = [
        "--dataset",
        csv.to_str().unwrap(),
        "--skip-header",
        "--replicas",
        "2",
        "--samples",
        "200",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    let out = sapt(&base);
    assert_eq!(out.status.code(), Some(1), "hidden units are required");

    let mut with_hidden = base.to_vec();
    with_hidden.extend(["--hidden", "3"]);
    let out = sapt(&with_hidden);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&out_dir, "manifest.txt").contains("topology = 2-3-2"));
}
