#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tcontrol_core::article::{RawArticle, RetrievedVia};
use tcontrol_core::corpus::save_raw_articles;
use tcontrol_core::labels::LABEL_NAMES;
use tcontrol_core::synthetic::separable_examples;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn g_star(name: &str) -> PathBuf {
    workspace_root().join("fixtures/g_star").join(name)
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn tcontrol(args: &[&str]) -> Run {
    let out: Output = Command::new(env!("CARGO_BIN_EXE_tcontrol"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Raw articles and a label CSV for `n` keyword-separable examples.
pub fn write_synthetic_inputs(dir: &Path, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    let examples = separable_examples(n, seed);
    let raw: Vec<RawArticle> = examples
        .iter()
        .map(|e| RawArticle {
            url: e.article.url.clone(),
            title: e.article.title.clone(),
            body: e.article.body.clone(),
            published_at: None,
            retrieved_via: RetrievedVia::Live,
            fetched_at: chrono::DateTime::UNIX_EPOCH,
        })
        .collect();
    let raw_path = dir.join("raw.jsonl");
    save_raw_articles(&raw, &raw_path).unwrap();
    let mut csv = format!("id,{}\n", LABEL_NAMES.join(","));
    for e in &examples {
        let bits: Vec<&str> = e
            .labels
            .encode()
            .iter()
            .map(|&b| if b == 1 { "1" } else { "0" })
            .collect();
        csv.push_str(&format!("{},{}\n", e.article.id, bits.join(",")));
    }
    let labels_path = dir.join("labels.csv");
    fs::write(&labels_path, csv).unwrap();
    (raw_path, labels_path)
}

/// All regular files under `dir`, relative path and contents, sorted.
pub fn snapshot_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
