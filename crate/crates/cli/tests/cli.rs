use std::path::Path;
use std::process::{Command, Output};

fn lapkit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lapkit")).args(args).current_dir(dir).env_remove("LAPKIT_THREADS").output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn unknown_subcommand_prints_synopsis() {
    let d = tempfile::tempdir().unwrap();
    let o = lapkit(&["frobnicate"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("usage: lapkit"));
}

#[test]
fn green_writes_one_complex_value() {
    let d = tempfile::tempdir().unwrap();
    let o = lapkit(&["green", "--model", "laplacian3d", "--n", "0", "0", "0", "--z", "6", "1e-3"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "row,col,re,im,quad_error");
    assert_eq!(lines.len(), 2);
    let re: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((re + 0.251).abs() < 1e-3, "{re}");
}

#[test]
fn computational_errors_keep_their_name() {
    let d = tempfile::tempdir().unwrap();
    let o = lapkit(&["green", "--model", "laplacian2d", "--n", "1", "0", "--z", "0", "-0.5"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("PreconditionViolated"));
}

#[test]
fn hypothesis_verdicts_set_the_exit_code() {
    let d = tempfile::tempdir().unwrap();
    let o = lapkit(&["check-hypotheses", "--model", "weyl_toy"], d.path());
    assert_eq!(o.status.code(), Some(0));
    let out = text(&o.stdout);
    assert!(out.contains("Hyp1,true,8 isolated points") && out.contains("max kappa = 0"), "{out}");
    let o = lapkit(&["check-hypotheses", "--model", "nonmorse2d"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stdout).contains("Hyp3,false"));
}

#[test]
fn config_file_mirrors_flags() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), "model = \"weyl_tilt:0.5\"\ngrid = 3\n").unwrap();
    let a = lapkit(&["bands", "--config", "c.toml"], d.path());
    let b = lapkit(&["bands", "--model", "weyl_tilt:0.5", "--grid", "3"], d.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = lapkit(&["bands", "--config", "c.toml", "--grid", "2"], d.path());
    assert_eq!(text(&c.stdout).lines().count(), 9);
    std::fs::write(d.path().join("bad.toml"), "model = \"laplacian2d\"\ngird = 3\n").unwrap();
    let e = lapkit(&["bands", "--config", "bad.toml"], d.path());
    assert_eq!(e.status.code(), Some(1));
    assert!(text(&e.stderr).contains("gird"));
}

#[test]
fn manifest_replay_is_bit_identical() {
    let d = tempfile::tempdir().unwrap();
    let o = lapkit(&["osc-bench", "--phase", "indefinite", "--t", "4", "8", "--threads", "1", "--out", "a.csv"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "osc-bench");
    assert_eq!(manifest["threads"], 1);
    assert_eq!(manifest["config"]["r2"], 0.45);
    let r = lapkit(&["replay", "a.csv.manifest.json", "--out", "b.csv"], d.path());
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(std::fs::read(d.path().join("a.csv")).unwrap(), std::fs::read(d.path().join("b.csv")).unwrap());
}

#[test]
fn thread_variable_overrides_the_flag() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lapkit"))
        .args(["critical", "--model", "laplacian2d", "--threads", "3", "--out", "c.csv"])
        .env("LAPKIT_THREADS", "2")
        .current_dir(d.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("c.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 2);
    assert_eq!(std::fs::read_to_string(d.path().join("c.csv")).unwrap().lines().count(), 5);
}

#[test]
fn model_files_load_by_path() {
    let d = tempfile::tempdir().unwrap();
    let model = "name = \"chain\"\ndimension = 1\nfiber_size = 1\nhop { offset = [1], re = [[1]] }\nhop { offset = [-1], re = [[1]] }\n";
    std::fs::write(d.path().join("chain.model"), model).unwrap();
    let o = lapkit(&["green", "--model", "chain.model", "--n", "0", "--z", "0", "1"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    // G(0; i) = i / sqrt(5) for E = 2 cos k.
    let out = text(&o.stdout);
    let im: f64 = out.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((im - 1.0 / 5f64.sqrt()).abs() < 1e-6, "{out}");
}
