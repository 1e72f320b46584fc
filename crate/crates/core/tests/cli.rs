use std::path::Path;
use std::process::{Command, Output};

use mdl_select::dataio::{load_matrix, load_model};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdl-select"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn mdl-select")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_full_scenario_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["generate", "--scenario", "full", "--seed", "0", "--m", "200", "--out-dir", p(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let truth = load_matrix(&dir.path().join("truth.csv")).unwrap();
    assert_eq!(truth.values.shape(), (200, 20));
    for j in 0..200 {
        let nonzero = truth.values.row(j).iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, if j < 4 { 20 } else { 0 });
    }
    let x = std::fs::read_to_string(dir.path().join("x.csv")).unwrap();
    assert!(x.starts_with("# mdl-select generate --scenario full --seed 0"));
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let files = ["x.csv", "y.csv", "truth.csv", "classes.tsv"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let out = run(&["generate", "--seed", "7", "--m", "50", "--classes", "5", "--out-dir", p(dir.path())]);
        assert!(out.status.success());
        runs.push(files.map(|f| std::fs::read(dir.path().join(f)).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn generate_rejects_bad_spec_and_missing_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["generate", "--scenario", "partial", "--m", "100", "--m-star", "200", "--seed", "1", "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["generate", "--scenario", "full", "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

fn generated(args: &[&str]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut all = vec!["generate"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out-dir", p(dir.path())]);
    let out = run(&all);
    assert!(out.status.success(), "{}", stderr(&out));
    dir
}

#[test]
fn select_full_mic_on_full_scenario() {
    let dir = generated(&["--scenario", "full", "--seed", "0"]);
    let model_path = dir.path().join("model.txt");
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    let out = run(&["select", "--scheme", "full-mic", "--x", p(&x), "--y", p(&y), "--out", p(&model_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out);
    assert!(line.contains("features=4 "), "{line}");
    assert!(line.contains("coefficients=80 "), "{line}");
    let model = load_model(&model_path).unwrap();
    assert_eq!(model.selected_features(), vec![0, 1, 2, 3]);
    assert!(model.flags.unwrap().contains("--scheme full-mic"));
}

#[test]
fn output_does_not_depend_on_threads() {
    let dir = generated(&["--scenario", "partial", "--seed", "2", "--m", "300"]);
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    let mut files = Vec::new();
    let path = dir.path().join("model.txt");
    for threads in ["1", "4"] {
        let out = run(&["--threads", threads, "select", "--scheme", "partial-mic", "--x", p(&x), "--y", p(&y), "--out", p(&path)]);
        assert!(out.status.success(), "{}", stderr(&out));
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn tpc_without_class_map_warns_and_falls_back() {
    let dir = generated(&["--scenario", "independent", "--seed", "3", "--m", "100"]);
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    let out = run(&["select", "--scheme", "tpc", "--x", p(&x), "--y", p(&y), "--task", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("falls back to RIC"));
    // Multi-response input needs --task.
    let out = run(&["select", "--scheme", "tpc", "--x", p(&x), "--y", p(&y)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn incompatible_flags_are_spec_errors() {
    let dir = generated(&["--seed", "1", "--m", "40"]);
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    for extra in [
        vec!["--scheme", "partial-mic", "--setting", "2"],
        vec!["--scheme", "ric", "--extra-steps", "2"],
        vec!["--scheme", "transfer-tpc", "--task", "0"],
        vec!["--scheme", "lasso"],
    ] {
        let mut args = vec!["select", "--x", p(&x), "--y", p(&y)];
        args.extend(extra.iter().copied());
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{extra:?}: {}", stderr(&out));
    }
}

#[test]
fn data_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    std::fs::write(&x, "a,b\n1,2\n3,x\n").unwrap();
    std::fs::write(&y, "t\n0\n1\n").unwrap();
    let out = run(&["select", "--scheme", "ric", "--x", p(&x), "--y", p(&y)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("x.csv:3:2"));
    let out = run(&["select", "--scheme", "ric", "--x", p(&dir.path().join("missing.csv")), "--y", p(&y)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn build_prior_then_transfer_select() {
    let dir = generated(&["--scenario", "full", "--seed", "4", "--m", "100", "--h", "3", "--classes", "10"]);
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    let classes = dir.path().join("classes.tsv");
    let mut model_args = Vec::new();
    for t in 0..2 {
        let path = dir.path().join(format!("train{t}.txt"));
        let out = run(&[
            "select", "--scheme", "tpc", "--x", p(&x), "--y", p(&y), "--classmap", p(&classes),
            "--task", &t.to_string(), "--out", p(&path),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        model_args.push(path);
    }
    let prior = dir.path().join("prior.txt");
    let out = run(&[
        "build-prior", "--classmap", p(&classes), "--model", p(&model_args[0]), "--model", p(&model_args[1]),
        "--out", p(&prior),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(std::fs::read_to_string(&prior).unwrap().starts_with("transfer-prior v1\n"));

    let model = dir.path().join("transfer.txt");
    let out = run(&[
        "select", "--scheme", "transfer-tpc", "--x", p(&x), "--y", p(&y), "--classmap", p(&classes),
        "--task", "2", "--prior", p(&prior), "--setting", "2", "--out", p(&model),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let loaded = load_model(&model).unwrap();
    assert_eq!(loaded.setting, Some(mdl_select::TransferSetting::FeatureOnly));
}

#[test]
fn eval_single_replicate_single_task_warns() {
    let out = run(&[
        "eval", "--seed", "1", "--replicates", "1", "--h", "1", "--m", "50", "--scenario", "full",
        "--schemes", "ric",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("standard errors are reported as 0"));
    let table = stdout(&out);
    let row = table.lines().find(|l| l.starts_with("full\tric")).unwrap();
    assert!(row.split('\t').nth(2).unwrap().ends_with("± 0.000"), "{row}");
    let out = run(&["eval", "--replicates", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_table_has_row_per_scenario_and_scheme() {
    let out = run(&["eval", "--seed", "2", "--replicates", "2", "--folds", "3", "--m", "60", "--h", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("scenario")).collect();
    assert_eq!(rows.len(), 9);
}

#[test]
fn costs_prints_table() {
    let out = run(&["costs", "--m", "2000", "--h", "20"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let k1 = text.lines().find(|l| l.starts_with("1\t")).unwrap();
    assert_eq!(k1.split('\t').next_back(), Some("ric"));
    let out = run(&["costs", "--m", "0", "--h", "20"]);
    assert_eq!(out.status.code(), Some(2));
}
