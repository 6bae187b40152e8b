#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

/// Overrides that keep end-to-end CLI runs to a few seconds.
pub const FAST: [&str; 6] = [
    "model.hidden_dim=24",
    "model.proj_dim=8",
    "stage1.epochs=2",
    "stage3.epochs=2",
    "stage2.epochs=1",
    "stage2.batch_size=16",
];

pub fn dsqa<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_dsqa"))
        .args(args)
        .env_remove("DSQA_RUN_ROOT")
        .output()
        .expect("spawn dsqa")
}

pub fn fast_sets() -> Vec<String> {
    FAST.iter().flat_map(|s| ["--set".to_string(), s.to_string()]).collect()
}

pub fn gen_small(dir: &Path, scale: f64) {
    let out = dsqa(["gen-data", "--out", dir.to_str().unwrap(), "--scale", &scale.to_string()]);
    assert!(out.status.success(), "gen-data failed: {}", String::from_utf8_lossy(&out.stderr));
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `(strategy, dataset, srcc, pcc)` for every results.csv row.
pub fn result_rows(path: &Path) -> Vec<(String, String, String, String)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("run_id,strategy,dataset,level,seed,srcc,pcc,n"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string(), f[5].to_string(), f[6].to_string())
        })
        .collect()
}
