use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY_STAGE1: &str = r#"
stage = "stage1"

[world]
n_agents = 2

[stage1]
hidden = [8, 8]
batch_size = 16
n_envs = 2
warmup = 20
epochs = 4
replay_capacity = 1000
disc_hidden = [8]
"#;

fn slac(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slac"));
    cmd.args(args).env_remove("SLAC_SEED").env_remove("SLAC_OUTDIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn lists_every_preset() {
    let o = slac(&["list-configs"], &[]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["desk_stage1", "desk_stage2", "desk_baseline", "oracle"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(code(&slac(&["stage1", "--bogus"], &[])), 1);
    assert_eq!(code(&slac(&["--help"], &[])), 0);
}

#[test]
fn bad_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write(dir.path(), "typo.toml", "[stage1]\nepochs = 3\nlearning_rate = 0.1\n");
    let o = slac(&["stage1", "--config", &typo], &[]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("learning_rate"), "{err}");

    let out = dir.path().join("s2");
    let o = slac(&["stage2", "--outdir", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 2, "stage2 without a decoder");
    assert_eq!(code(&slac(&["stage1", "--config", "preset:nope"], &[])), 2);

    let wrong_stage = write(dir.path(), "wrong.toml", "stage = \"oracle\"\n");
    assert_eq!(code(&slac(&["stage1", "--config", &wrong_stage], &[])), 2);
}

#[test]
fn stage1_runs_are_reproducible_and_overrides_stack() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY_STAGE1);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = slac(&["stage1", "--config", &cfg, "--outdir", a.to_str().unwrap()], &[("SLAC_SEED", "5")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = slac(
        &["stage1", "--config", &cfg, "--seed", "5"],
        &[("SLAC_SEED", "9"), ("SLAC_OUTDIR", b.to_str().unwrap())],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for file in ["metrics.jsonl", "decoder.ckpt", "summary.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let resolved = fs::read_to_string(a.join("resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 5"), "{resolved}");
    let metrics = fs::read_to_string(a.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    for line in metrics.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["schema"], "stage1.v1");
    }

    // A decoder trained for two agents cannot drive the four-agent world.
    let s2 = dir.path().join("s2");
    let decoder = a.join("decoder.ckpt");
    let cfg2 = write(
        dir.path(),
        "s2.toml",
        &format!("decoder = {:?}\n[world]\nn_agents = 4\n", decoder.to_str().unwrap()),
    );
    let o = slac(&["stage2", "--config", &cfg2, "--outdir", s2.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn oracle_stage_reports_errors_in_its_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "oracle.toml", "[oracle]\nmdps = 1\n");
    let out = dir.path().join("o");
    let o = slac(&["oracle", "--config", &cfg, "--outdir", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary, serde_json::from_slice::<serde_json::Value>(&fs::read(out.join("summary.json")).unwrap()).unwrap());
    let metrics = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    let v: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    assert_eq!(v["schema"], "oracle.v1");
    assert!(v["decomposition_error"].as_f64().unwrap() < 1e-6);
}
