use std::path::Path;
use std::process::{Command, Output};

fn evomail(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evomail"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn generate_train_detect_explain_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.cfg"), "# quick run\niterations = 2\nbatch_size = 4\nphase_size = 60\n").unwrap();

    let s = ok(&evomail(&["gen-synthetic", "--phase", "p1", "--n", "60", "--seed", "3", "--out", "p1.corpus"], d));
    assert!(s.contains("wrote 60 p1 messages"));
    let s = ok(&evomail(&["train", "--corpus", "p1.corpus", "--config", "small.cfg", "--out-model", "m.state"], d));
    assert!(s.contains("saved model"));
    let s = ok(&evomail(&["detect", "--model", "m.state", "--input", "p1.corpus", "--report", "r.txt"], d));
    assert_eq!(s.lines().filter(|l| l.starts_with("p1-s3-")).count(), 60);
    assert!(std::fs::read_to_string(d.join("r.txt")).unwrap().starts_with("EVOMAIL-REPORT v1"));
    let s = ok(&evomail(&["explain", "--model", "m.state", "--input", "p1.corpus", "--email-id", "p1-s3-00000"], d));
    assert!(s.contains("terminated by"), "{s}");
    let s = ok(&evomail(
        &["evolve", "--corpus", "p1.corpus", "--config", "small.cfg", "--iters", "1", "--model", "m.state"],
        d,
    ));
    assert!(!s.is_empty());
    let s = ok(&evomail(&["eval", "--scenario", "static", "--config", "small.cfg", "--report", "e.txt"], d));
    assert!(s.contains("full_graph"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.cfg"), "no_such_key = 1\n").unwrap();
    let out = evomail(&["eval", "--scenario", "static", "--config", "bad.cfg"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
    std::fs::write(d.join("old.state"), "EVOMAIL-STATE v0\n").unwrap();
    let out = evomail(&["detect", "--model", "old.state", "--input", "old.state"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported file version"));
}
