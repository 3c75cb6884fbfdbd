use std::process::{Command, Output};

fn proxtone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxtone")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no '{key}' line in:\n{text}"))
}

#[test]
fn run_writes_trace_csv() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let opt = dir.path().join("opt.txt");
    let out = proxtone(&[
        "run",
        "--synthetic",
        "engineered",
        "--curvature",
        "identity",
        "--epochs",
        "40",
        "--out",
        trace.to_str().unwrap(),
        "--oracle",
        opt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(value(&text, "iterations"), "400");
    assert!(value(&text, "gap").parse::<f64>().unwrap() <= 1e-10);
    assert!(opt.exists());

    let csv = std::fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,epoch,f,gap,dist,inner_iters,refreshed,elapsed_s"));
    assert_eq!(lines.count(), 401);
}

#[test]
fn oracle_then_constants_reuse_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let opt = dir.path().join("nested").join("opt.txt");
    let out = proxtone(&["oracle", "--synthetic", "engineered", "--out", opt.to_str().unwrap()]);
    assert!(out.status.success());
    let f_star = value(&stdout(&out), "f").to_string();
    assert!(value(&stdout(&out), "certificate").parse::<f64>().unwrap() <= 1e-12);

    let out = proxtone(&[
        "constants",
        "--synthetic",
        "engineered",
        "--curvature",
        "identity",
        "--oracle",
        opt.to_str().unwrap(),
        "--k",
        "2",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(value(&text, "f_star"), f_star);
    assert!((value(&text, "rho").parse::<f64>().unwrap() - 0.94).abs() <= 1e-12);
    assert_eq!(value(&text, "vacuous"), "false");
    assert!(text.contains("bound[2]: value="));
}

#[test]
fn constants_flag_vacuous_bounds() {
    let out = proxtone(&["constants", "--synthetic", "n=50,p=4,loss=logistic,l2=0.01,seed=3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(value(&text, "vacuous"), "true");
    assert_eq!(value(&text, "iterations[value, eps=0.000001, delta=0.1]"), "none");
}

#[test]
fn race_writes_per_run_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = proxtone(&[
        "race",
        "--synthetic",
        "n=40,p=5,loss=logistic,l1=0.01,l2=0.05,seed=2",
        "proxtone:diagonal",
        "prox_sg",
        "--seeds",
        "0,1",
        "--epochs",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["summary.csv", "proxtone-diagonal_seed0.csv", "proxtone-diagonal_seed1.csv", "prox_sg_seed1.csv"] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 4);
}

#[test]
fn libsvm_input_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.svm");
    std::fs::write(&data, "1 1:0.5 2:1\n0 1:-1 3:0.2\n1 2:0.3 3:-0.7\n0 1:0.1\n").unwrap();
    let out = proxtone(&["run", "--data", data.to_str().unwrap(), "--algo", "prox-n", "--l2", "0.1", "--epochs", "15"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("logistic"));
    assert_eq!(value(&stdout(&out), "converged"), "true");
}

#[test]
fn bad_input_fails_cleanly() {
    let out = proxtone(&["run", "--synthetic", "n=0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = proxtone(&["run", "--synthetic", "n=5,p=2", "--algo", "newton"]);
    assert!(!out.status.success());

    let out = proxtone(&["run"]);
    assert!(!out.status.success());

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.svm");
    std::fs::write(&data, "1 1:0.5\n1 3:x\n").unwrap();
    let out = proxtone(&["run", "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn verify_passes() {
    let out = proxtone(&["verify", "--samples", "20"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("PASS")));
    assert!(!text.lines().any(|l| l.starts_with("FAIL")));
}
