use std::path::Path;
use std::process::{Command, Output};

fn epp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

#[test]
fn same_seed_same_bytes_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let args = ["mc", "--seed", "5", "--set", "pairs=20000", "--set", "rounds=3"];
    assert!(epp(&args, &a).status.success());
    assert!(epp(&args, &b).status.success());
    let first = std::fs::read(a.join("mc.csv")).unwrap();
    assert_eq!(first, std::fs::read(b.join("mc.csv")).unwrap());

    let manifest = a.join("mc.manifest.json");
    let out = Command::new(env!("CARGO_BIN_EXE_epp"))
        .arg("replay")
        .arg(&manifest)
        .arg("--out")
        .arg(&c)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(first, std::fs::read(c.join("mc.csv")).unwrap());

    let other = dir.path().join("d");
    assert!(epp(&["mc", "--seed", "6", "--set", "pairs=20000", "--set", "rounds=3"], &other).status.success());
    assert_ne!(first, std::fs::read(other.join("mc.csv")).unwrap());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let reversed = epp(&["critical", "--set", "bracket_lo=0.85", "--set", "bracket_hi=0.75"], dir.path());
    assert_eq!(reversed.status.code(), Some(2));
    let unknown = epp(&["iterate", "--set", "nonsense=1"], dir.path());
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("nonsense"));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "model = white\nf0 0.9\n").unwrap();
    let parse = epp(&["iterate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(parse.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&parse.stderr).contains("bad.cfg:2"));
}

#[test]
fn critical_json_has_documented_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = epp(&["critical", "--format", "json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("critical.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["family", "critical", "bracket_achieved", "width", "halvings"] {
        assert!(v.get(key).is_some(), "missing {key} in {text}");
    }
    assert!(v["width"].as_f64().unwrap() < 1e-10);
}

#[test]
fn config_file_and_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# white noise\nmodel = white\nf0 = 0.95\nsteps = 5\n").unwrap();
    let out = epp(&["iterate", "--config", cfg.to_str().unwrap(), "--set", "steps=3"], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("iterate.csv")).unwrap();
    // Header plus steps 0..=3.
    assert_eq!(csv.lines().count(), 5, "{csv}");
}
