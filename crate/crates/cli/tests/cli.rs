use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_compsnn"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("compsnn-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], dirs: &Path) -> Output {
    let data = dirs.join("data");
    let out = dirs.join("out");
    bin()
        .args(args)
        .args(["--data-dir", data.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["train", "--epochs", "many"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["train", "--model", "rnn"]).output().unwrap().status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let o = bin().arg("--help").output().unwrap();
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("gradcheck"));
}

#[test]
fn gradcheck_reports_max_error() {
    let o = bin().arg("gradcheck").output().unwrap();
    ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let last = stdout.lines().last().unwrap();
    assert!(last.starts_with("max relative error"));
    let err: f64 = last.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(err < 1e-4);
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = scratch("missing");
    let o = run(&["graph"], &dir);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema.json"));
}

#[test]
fn bad_config_file_is_a_data_error() {
    let dir = scratch("badcfg");
    let cfg = dir.join("c.json");
    std::fs::write(&cfg, r#"{"experiment":{"learning_rate":1}}"#).unwrap();
    let o = bin().args(["synth", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn corrupt_trajectories_are_reported() {
    let dir = scratch("corrupt");
    ok(&run(&["synth", "--n-traj", "6"], &dir));
    std::fs::write(dir.join("data/trajectories.csv"), "traj_id,t,x,y\ntraj0,0,abc,1\n").unwrap();
    let o = run(&["graph"], &dir);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a number"));
}

#[test]
fn train_twice_gives_identical_checkpoints() {
    let dir = scratch("twice");
    let common = ["--seed", "42", "--n-traj", "14", "--epochs", "2", "--model", "gcnn"];
    ok(&run(&[&["synth"], &common[..]].concat(), &dir));
    ok(&run(&[&["train"], &common[..]].concat(), &dir));
    let first = std::fs::read(dir.join("out/checkpoints/gcnn.json")).unwrap();
    ok(&run(&[&["train"], &common[..]].concat(), &dir));
    assert_eq!(std::fs::read(dir.join("out/checkpoints/gcnn.json")).unwrap(), first);
}

#[test]
fn config_file_values_apply_and_flags_override() {
    let dir = scratch("cfg");
    let cfg = dir.join("c.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"data_dir":{:?},"out_dir":{:?},"model":"mlp","experiment":{{"n_traj":12,"epochs":1}}}}"#,
            dir.join("data"),
            dir.join("out")
        ),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    ok(&bin().args(["synth", "--config", c]).output().unwrap());
    let csv = std::fs::read_to_string(dir.join("data/demographics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    ok(&bin().args(["train", "--config", c, "--epochs", "3"]).output().unwrap());
    let history = std::fs::read_to_string(dir.join("out/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 4);
    assert!(history.lines().skip(1).all(|l| l.starts_with("mlp,")));
}

#[test]
fn eval_and_explain_need_checkpoints() {
    let dir = scratch("nockpt");
    ok(&run(&["synth", "--n-traj", "10"], &dir));
    assert_eq!(run(&["eval"], &dir).status.code(), Some(1));
    assert_eq!(run(&["explain", "--model", "cnn"], &dir).status.code(), Some(1));
}

#[test]
fn explain_writes_svg_and_csv_twins() {
    let dir = scratch("explain");
    let common = ["--n-traj", "10", "--epochs", "1", "--model", "cnn"];
    ok(&run(&[&["synth"], &common[..]].concat(), &dir));
    ok(&run(&[&["train"], &common[..]].concat(), &dir));
    ok(&run(&[&["explain", "--traj-id", "traj03"], &common[..]].concat(), &dir));
    let out = dir.join("out/explain/cnn");
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 2 * 33);
    for name in names.iter().filter(|n| n.ends_with(".svg")) {
        assert!(names.contains(&name.replace(".svg", ".csv")));
    }
    let csv = std::fs::read_to_string(out.join("traj03_attention.csv")).unwrap();
    assert!(csv.starts_with("x,y,value,channel\n"));
    let bad = run(&[&["explain", "--traj-id", "nobody"], &common[..]].concat(), &dir);
    assert_eq!(bad.status.code(), Some(1));
    let gcnn = run(&[&["explain"], &common[..4], &["--model", "gcnn"]].concat(), &dir);
    assert_eq!(gcnn.status.code(), Some(1));
}
