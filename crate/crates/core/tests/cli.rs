use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metablox"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn dl_of_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "k3.txt", "# triangle\n0 1\n1 2\n2 0\n");
    let p = write(dir.path(), "one.csv", "node,label\n0,x\n1,x\n2,x\n");
    let v = json(&run(&["dl", "--graph", &g, "--partition", &p, "--variant", "ndc"]));
    // ln 3^6 − ln 6!! for the likelihood plus ln 3 for the partition
    assert!((v["total"].as_f64().unwrap() - (2187f64 / 48.0).ln()).abs() < 1e-9);
    assert_eq!(v["num_blocks"], 1);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "k3.txt", "0 1\n1 2\n2 0\n");
    let p = write(dir.path(), "one.csv", "node,label\n0,x\n1,x\n2,x\n");
    let out = run(&["dl", "--graph", &g, "--partition", &p, "--variant", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_labels_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "k3.txt", "0 1\n1 2\n2 0\n3 0\n");
    let p = write(dir.path(), "part.csv", "node,label\n0,x\n1,x\n2,y\n");
    let out = run(&["dl", "--graph", &g, "--partition", &p, "--variant", "ndc"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&run(&["dl", "--graph", &g, "--partition", &p, "--variant", "ndc", "--drop-missing"]));
    assert_eq!(v["num_nodes"], 3);
}

#[test]
fn strict_mode_rejects_self_loops() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "loop.txt", "0 1\n1 1\n");
    let p = write(dir.path(), "part.csv", "node,label\n0,x\n1,x\n");
    assert!(run(&["dl", "--graph", &g, "--partition", &p, "--variant", "dc"]).status.success());
    let out = run(&["--strict", "dl", "--graph", &g, "--partition", &p, "--variant", "dc"]);
    assert!(!out.status.success());
}

#[test]
fn synth_then_metablox_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let net = d.join("net");
    let net_s = net.to_str().unwrap();
    let synth = ["synth", "sbm", "-n", "120", "-k", "8", "-b", "2", "--mu", "0.1", "--rho", "0.9", "--seed", "4", "--outdir", net_s];
    assert!(run(&synth).status.success());
    let first_edges = fs::read(net.join("edges.txt")).unwrap();
    assert!(run(&synth).status.success());
    assert_eq!(first_edges, fs::read(net.join("edges.txt")).unwrap());

    let edges = net.join("edges.txt");
    let meta = fs::read_dir(&net)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("_metadata.csv"))
        .expect("metadata file written");
    let outs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = d.join(format!("report{i}.json"));
            let status = run(&[
                "metablox",
                "--graph",
                edges.to_str().unwrap(),
                "--metadata",
                meta.to_str().unwrap(),
                "--n-permutations",
                "100",
                "--sweeps",
                "100",
                "--restarts",
                "2",
                "--seed",
                "9",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    let v: Value = serde_json::from_slice(&outs[0]).unwrap();
    assert!(v.to_string().contains("gamma"));
}

#[test]
fn infer_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for base in [0, 6] {
        for i in 0..6 {
            for j in i + 1..6 {
                text.push_str(&format!("{} {}\n", base + i, base + j));
            }
        }
    }
    text.push_str("0 6\n");
    let g = write(dir.path(), "cliques.txt", &text);
    let args = ["infer", "--graph", &g, "--variant", "dc", "--seed", "3", "--sweeps", "200"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert!(v.to_string().contains("sigma"));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "k3.txt", "0 1\n1 2\n2 0\n");
    let p = write(dir.path(), "one.csv", "node,label\n0,x\n1,x\n2,x\n");
    let cfg = write(dir.path(), "run.cfg", "# defaults\nvariant = ndc\n");
    let v = json(&run(&["--config", &cfg, "dl", "--graph", &g, "--partition", &p]));
    assert_eq!(v["variant"], "ndc");
    let v = json(&run(&["--config", &cfg, "dl", "--graph", &g, "--partition", &p, "--variant", "dc"]));
    assert_eq!(v["variant"], "dc");
    let bad = write(dir.path(), "bad.cfg", "variant = nope\n");
    let out = run(&["--config", &bad, "dl", "--graph", &g, "--partition", &p]);
    assert_eq!(out.status.code(), Some(2));
}
