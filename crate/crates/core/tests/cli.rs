use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lowertail(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lowertail"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn report_of(o: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&o.stdout);
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("report=").filter(|p| p.ends_with(".report.csv")))
        .map(PathBuf::from)
        .unwrap_or_else(|| panic!("no report line in {stdout}"))
}

fn section(csv: &str, name: &str) -> String {
    let head = format!("[{name}]\n");
    let start = csv.find(&head).unwrap() + head.len();
    let rest = &csv[start..];
    rest[..rest.find("\n\n").unwrap_or(rest.len())].to_string()
}

#[test]
fn sample_marginals_match_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = lowertail(dir.path(), &["sample", "--H", "K3", "--n", "5", "--p", "0.4", "--eta", "0.5", "--mode", "exact"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(report_of(&o)).unwrap();
    let golden = include_str!("golden/sample_k3_n5_marginals.csv");
    assert_eq!(section(&csv, "marginals"), golden.trim_end());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = lowertail(dir.path(), &["bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error kind=usage code=2"));

    let o = lowertail(dir.path(), &["solve", "--n", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kind=config"));

    let o = lowertail(dir.path(), &["sample", "--n", "5", "--p", "1.5", "--eta", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lowertail(dir.path(), &["--config", "/nonexistent/lt.cfg", "threshold"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kind=io"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "r=3\nbanana=1\n").unwrap();
    let o = lowertail(dir.path(), &["--config", cfg.to_str().unwrap(), "threshold"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lowertail"))
        .env("LOWERTAIL_OUT", dir.path())
        .args(["threshold", "--r", "4"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(report_of(&o).starts_with(dir.path()));
}

#[test]
fn report_reruns_as_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = lowertail(a.path(), &["--seed", "3", "variance", "--H", "C4", "--n", "5", "--p", "0.5", "--eta", "0.5"]);
    assert!(o.status.success());
    let first = report_of(&o);
    let o2 = lowertail(b.path(), &["--config", first.to_str().unwrap(), "variance"]);
    assert!(o2.status.success(), "{}", String::from_utf8_lossy(&o2.stderr));
    let second = report_of(&o2);
    assert_eq!(first.file_name(), second.file_name());
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.cfg");
    std::fs::write(&cfg, "r=3\n").unwrap();
    let o = lowertail(dir.path(), &["--config", cfg.to_str().unwrap(), "threshold", "--r", "5"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(report_of(&o)).unwrap();
    assert!(csv.contains("# config.r=5\n"));
}

#[test]
fn meta_sidecar_is_json_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = lowertail(dir.path(), &["cutnorm", "--graph", "C4", "--q", "0.5"]);
    assert!(o.status.success());
    let csv = report_of(&o);
    let meta = csv.to_str().unwrap().replace(".report.csv", ".meta.json");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(meta).unwrap()).unwrap();
    assert_eq!(v["experiment"], "cutnorm");
    assert_eq!(v["config"]["graph"], "C4");
    assert_eq!(v["format_version"], 1);
}
