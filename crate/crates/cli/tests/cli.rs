use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lpmtl::{load_csv, AnyModel64, CsvSchema, Predictor};
use lpmtl_cli::sweep::{read_rows, repeat_seed};

fn lpmtl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpmtl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = lpmtl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn synth(dir: &Path, args: &[&str]) -> PathBuf {
    let p = dir.join("data.csv");
    let mut full = vec!["synth", "--out", s(&p)];
    full.extend_from_slice(args);
    ok(&full);
    p
}

#[test]
fn identity_fixture_gives_exact_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "task_id,label,f1\na,1,0\na,-1,10\na,1,20\na,-1,30\nb,1,0\nb,-1,10\nb,1,20\nb,-1,30\n");
    let cfg = write(dir.path(), "c.json", r#"{"kernels":[{"kind":"gaussian","spread":0.001}],"s_grid":[1,2,"inf"]}"#);
    let out = ok(&["erc-estimate", "--dataset", s(&data), "--config", s(&cfg), "--samples", "5"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let est: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    for (a, b) in est.iter().zip([0.5, 0.5f64.sqrt(), 1.0]) {
        assert!((a - b).abs() < 1e-12, "{est:?}");
    }
}

#[test]
fn single_sample_runs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--tasks", "2", "--per-task", "6", "--dim", "2", "--seed", "3"]);
    let a = ok(&["erc-estimate", "--dataset", s(&data), "--samples", "1", "--seed", "9"]).stdout;
    let b = ok(&["erc-estimate", "--dataset", s(&data), "--samples", "1", "--seed", "9"]).stdout;
    assert_eq!(a, b);
    let c = ok(&["erc-estimate", "--dataset", s(&data), "--samples", "1", "--seed", "10"]).stdout;
    assert_ne!(a, c);
}

#[test]
fn unnormalized_kernel_marks_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--tasks", "2", "--per-task", "6", "--dim", "3", "--seed", "1"]);
    let cfg = write(dir.path(), "c.json", r#"{"kernels":[{"kind":"linear","normalize":false}],"s_grid":[1,2]}"#);
    let text = String::from_utf8(ok(&["erc-estimate", "--dataset", s(&data), "--config", s(&cfg), "--samples", "10"]).stdout).unwrap();
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').nth(4), Some("assumption-violated"), "{line}");
    }
    // JSON carries the same marker
    let out = dir.path().join("e.json");
    ok(&["erc-estimate", "--dataset", s(&data), "--config", s(&cfg), "--samples", "10", "--out", s(&out)]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v[0]["bound"], "assumption-violated");
    for key in ["estimate", "std_error", "bound", "branch", "tau", "rho", "s", "r", "T", "N", "M", "D", "seed"] {
        assert!(v[0].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn per_sample_dump_has_one_row_per_sample_and_s() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--tasks", "2", "--per-task", "5", "--dim", "2"]);
    let cfg = write(dir.path(), "c.json", r#"{"s_grid":[1,"inf"]}"#);
    let ps = dir.path().join("ps.csv");
    ok(&["erc-estimate", "--dataset", s(&data), "--config", s(&cfg), "--samples", "7", "--per-sample", s(&ps)]);
    let text = std::fs::read_to_string(&ps).unwrap();
    assert_eq!(text.lines().next(), Some("s,sample,value"));
    assert_eq!(text.lines().count(), 1 + 2 * 7);
}

#[test]
fn unequal_tasks_need_subsampling() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "task_id,label,f1\na,1,0\na,-1,1\na,1,2\nb,1,0\nb,-1,1\n");
    let out = lpmtl(&["erc-estimate", "--dataset", s(&data), "--samples", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(ok(&["erc-estimate", "--dataset", s(&data), "--samples", "3", "--subsample-to-min"]).stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",2,2,1,3,"), "{text}");
}

#[test]
fn manifest_applies_its_preprocessing() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.csv", "task_id,label,f1\na,1,0\na,-1,1\na,1,2\nb,1,0\nb,-1,1\n");
    let manifest = write(dir.path(), "m.json", r#"{"path":"d.csv","subsample_to_min":true}"#);
    let text = String::from_utf8(ok(&["erc-estimate", "--dataset", s(&manifest), "--samples", "3"]).stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",2,2,1,3,"));
}

#[test]
fn erc_bound_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    ok(&["erc-bound", "--tasks", "2", "--per-task", "4", "--out", s(&out)]);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/erc_bound_t2_n4.csv");
    assert_eq!(std::fs::read_to_string(out).unwrap(), std::fs::read_to_string(golden).unwrap());
}

#[test]
fn single_task_bound_is_unavailable() {
    let out = ok(&["erc-bound", "--tasks", "1", "--per-task", "4"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().all(|row| row["bound"].is_null()));
}

#[test]
fn separable_train_then_eval_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--tasks", "3", "--per-task", "30", "--dim", "2", "--noise", "0", "--seed", "5"]);
    let cfg = write(dir.path(), "c.json", r#"{"kernels":[{"kind":"linear"}],"s":1.5,"C":1000}"#);
    let model = dir.path().join("m.json");
    ok(&["train", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&model)]);
    let out = ok(&["eval", "--dataset", s(&data), "--model", s(&model)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mean_accuracy"], 1.0);
}

#[test]
fn saved_model_evaluates_like_the_in_memory_one() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = synth(dir.path(), &["--tasks", "2", "--per-task", "25", "--dim", "3", "--noise", "0.2", "--seed", "8"]);
    let cfg = write(dir.path(), "c.json", r#"{"kernels":[{"kind":"gaussian","spread":1},{"kind":"linear"}],"s":4,"r":2}"#);
    let model = dir.path().join("m.json");
    ok(&["train", "--dataset", s(&data_path), "--config", s(&cfg), "--out", s(&model)]);
    let out = ok(&["eval", "--dataset", s(&data_path), "--model", s(&model), "--out", s(&dir.path().join("e.json"))]);
    assert!(out.stdout.is_empty());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("e.json")).unwrap()).unwrap();

    let data = load_csv::<f64>(&data_path, &CsvSchema::default()).unwrap();
    let config: lpmtl_cli::config::Config = serde_json::from_slice(&std::fs::read(&cfg).unwrap()).unwrap();
    let fresh = lpmtl_cli::train::fit(&data, &config, config.s.unwrap(), 1.0).unwrap();
    let loaded = AnyModel64::load(&model).unwrap();
    assert_eq!(fresh, loaded);
    assert_eq!(report["mean_accuracy"].as_f64().unwrap(), fresh.mean_accuracy(&data).unwrap());
}

#[test]
fn corrupted_model_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--tasks", "2", "--per-task", "10", "--dim", "2"]);
    let model = dir.path().join("m.json");
    ok(&["train", "--dataset", s(&data), "--out", s(&model)]);
    let text = std::fs::read_to_string(&model).unwrap();
    for (i, broken) in [text[..text.len() / 2].to_string(), text.replace("lpmtl-model", "other"), text.replace("\"alpha\"", "\"alfa\"")]
        .iter()
        .enumerate()
    {
        let bad = write(dir.path(), &format!("bad{i}.json"), broken);
        let report = dir.path().join(format!("r{i}.json"));
        let out = lpmtl(&["eval", "--dataset", s(&data), "--model", s(&bad), "--out", s(&report)]);
        assert_eq!(out.status.code(), Some(2), "case {i}");
        assert!(out.stdout.is_empty());
        assert!(!report.exists());
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--tasks", "2", "--per-task", "10", "--dim", "2"]);
    for cfg in [r#"{"bogus":1}"#, r#"{"C":-1}"#, r#"{"s_grid":[0.5]}"#, r#"{"kernels":[]}"#, "not json"] {
        let c = write(dir.path(), "c.json", cfg);
        let out = lpmtl(&["train", "--dataset", s(&data), "--config", s(&c), "--out", s(&dir.path().join("m.json"))]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
    }
    let out = lpmtl(&["erc-estimate", "--dataset", s(&dir.path().join("missing.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    // learned-kernel estimates need s >= 2
    let c = write(dir.path(), "c.json", r#"{"kernels":[{"kind":"linear"},{"kind":"gaussian","spread":1}],"r":1,"s_grid":[1.5]}"#);
    let out = lpmtl(&["erc-estimate", "--dataset", s(&data), "--config", s(&c), "--samples", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(lpmtl(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn one_cell_sweep_equals_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--tasks", "3", "--per-task", "40", "--dim", "3", "--noise", "0.1", "--seed", "2"]);
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"kernels":[{"kind":"gaussian","spread":1}],"s_grid":[1.5],"C_grid":[2],"s":1.5,"C":2,"repeats":1,"train_fraction":0.25}"#,
    );
    let rows = dir.path().join("sweep.csv");
    ok(&["sweep", "--dataset", s(&data), "--config", s(&cfg), "--seed", "11", "--out", s(&rows)]);
    let got = read_rows(&rows).unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].status, "ok");

    let seed = repeat_seed(11, 0).to_string();
    let model = dir.path().join("m.json");
    ok(&["train", "--dataset", s(&data), "--config", s(&cfg), "--seed", &seed, "--split", "train", "--out", s(&model)]);
    let out = ok(&["eval", "--dataset", s(&data), "--config", s(&cfg), "--seed", &seed, "--split", "test", "--model", s(&model)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(got[0].mean_task_accuracy, v["mean_accuracy"].as_f64());

    let summary = std::fs::read_to_string(dir.path().join("sweep.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("1.5,1,gaussian:1,2,"));
}

#[test]
fn resumed_sweep_keeps_completed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--tasks", "2", "--per-task", "30", "--dim", "2", "--seed", "4"]);
    let cfg = write(dir.path(), "c.json", r#"{"kernels":[{"kind":"linear"}],"s_grid":[1,2],"C_grid":[1,10],"repeats":2,"train_fraction":0.3}"#);
    let full = dir.path().join("full.csv");
    ok(&["sweep", "--dataset", s(&data), "--config", s(&cfg), "--seed", "1", "--out", s(&full)]);
    let text = std::fs::read_to_string(&full).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 8);

    // a partial file whose first cell carries a marker value
    let mut first: Vec<String> = lines[1].split(',').map(String::from).collect();
    first[5] = "0.123".into();
    let partial = format!("{}\n{}\n{}\n", lines[0], first.join(","), lines[2]);
    let resumed = write(dir.path(), "resumed.csv", &partial);
    ok(&["sweep", "--dataset", s(&data), "--config", s(&cfg), "--seed", "1", "--out", s(&resumed), "--resume"]);
    let after = read_rows(&resumed).unwrap();
    let fresh = read_rows(&full).unwrap();
    assert_eq!(after.len(), fresh.len());
    assert_eq!(after[0].mean_task_accuracy, Some(0.123));
    assert_eq!(after[1..], fresh[1..]);
}

#[test]
fn failed_cells_are_recorded_and_the_sweep_continues() {
    let dir = tempfile::tempdir().unwrap();
    // two samples per class and a 0.9 train fraction leave every test side empty
    let data = write(dir.path(), "d.csv", "task_id,label,f1\na,1,1\na,1,2\na,-1,-1\na,-1,-2\n");
    let cfg = write(dir.path(), "c.json", r#"{"kernels":[{"kind":"linear"}],"s_grid":[1,4],"C_grid":[1,2],"repeats":1,"train_fraction":0.9}"#);
    let rows = dir.path().join("r.csv");
    let out = lpmtl(&["sweep", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&rows)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = read_rows(&rows).unwrap();
    assert_eq!(got.len(), 4);
    for row in &got {
        assert!(row.status.starts_with("failed: "), "{}", row.status);
        assert!(row.mean_task_accuracy.is_none());
    }
    let summary = std::fs::read_to_string(dir.path().join("r.summary.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",,,0")), "{summary}");
}

#[test]
fn wall_time_only_with_timing() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--tasks", "2", "--per-task", "20", "--dim", "2"]);
    let cfg = write(dir.path(), "c.json", r#"{"kernels":[{"kind":"linear"}],"s_grid":[2],"C_grid":[1],"repeats":1,"train_fraction":0.5}"#);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["sweep", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&a)]);
    ok(&["sweep", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&b), "--timing"]);
    assert!(read_rows(&a).unwrap()[0].wall_time.is_none());
    assert!(read_rows(&b).unwrap()[0].wall_time.unwrap() >= 0.0);
}

#[test]
fn synth_is_seeded() {
    let a = ok(&["synth", "--tasks", "2", "--per-task", "5", "--dim", "2", "--seed", "3"]).stdout;
    let b = ok(&["synth", "--tasks", "2", "--per-task", "5", "--dim", "2", "--seed", "3"]).stdout;
    let c = ok(&["synth", "--tasks", "2", "--per-task", "5", "--dim", "2", "--seed", "4"]).stdout;
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 11);
}
