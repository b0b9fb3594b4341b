#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diffeoflow::mesh_io::write_mesh;
use diffeoflow::TriangleMesh;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_diffeoflow"));
    c.env_remove("DIFFEOFLOW_LOG");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn run_with_threads(threads: usize, args: &[&str]) -> Output {
    let t = threads.to_string();
    let mut full = vec!["--threads", t.as_str()];
    full.extend_from_slice(args);
    run(&full)
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Parses the one-line JSON diagnostic on stderr.
pub fn diagnostic(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("diagnostic line");
    serde_json::from_str(line).expect("stderr is JSON")
}

pub fn save(dir: &Path, name: &str, mesh: &TriangleMesh) -> PathBuf {
    let p = dir.join(name);
    write_mesh(&p, mesh).unwrap();
    p
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
