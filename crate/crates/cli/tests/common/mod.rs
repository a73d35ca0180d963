#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const CLAIMS: [&str; 5] = [
    "Drinking hot water every fifteen minutes kills the coronavirus in your throat.",
    "5G cell towers spread COVID-19 through radio waves.",
    "The COVID-19 vaccine changes your DNA permanently.",
    "Holding your breath for ten seconds proves you do not have the virus.",
    "Wearing a face mask causes dangerous carbon dioxide poisoning.",
];

pub const POSTS: [&str; 10] = [
    "My aunt says hot water every fifteen minutes kills the coronavirus before it reaches the lungs",
    "Doctors confirm that drinking hot water does nothing against the coronavirus",
    "They are building 5G towers everywhere and now COVID-19 is spreading through the radio waves",
    "Engineers explain that 5G radio waves cannot carry a virus",
    "Do not take the vaccine, it will change your DNA permanently",
    "mRNA from the COVID-19 vaccine never enters the nucleus and cannot alter DNA",
    "Try holding your breath for ten seconds, if you can you do not have the virus",
    "A breath test is not a diagnosis, get a real test for the virus",
    "Face masks trap carbon dioxide and cause poisoning in kids",
    "Surgeons wear a face mask for hours without any carbon dioxide problems",
];

pub fn claims_jsonl() -> String {
    CLAIMS
        .iter()
        .enumerate()
        .map(|(i, text)| {
            format!(
                "{}\n",
                serde_json::json!({"id": format!("c{}", i + 1), "text": text})
            )
        })
        .collect()
}

pub fn posts_jsonl() -> String {
    POSTS
        .iter()
        .enumerate()
        .map(|(i, text)| {
            format!(
                "{}\n",
                serde_json::json!({"id": format!("p{:02}", i + 1), "text": text})
            )
        })
        .collect()
}

/// The `factgpt` binary with no FACTGPT_* variables leaking in from the caller.
pub fn factgpt(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_factgpt"));
    cmd.current_dir(dir);
    for (key, _) in std::env::vars_os() {
        if key.to_string_lossy().starts_with("FACTGPT_") || key == "SOURCE_DATE_EPOCH" {
            cmd.env_remove(key);
        }
    }
    cmd.env("RUST_LOG", "error");
    cmd
}

pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = factgpt(dir).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "factgpt {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Every regular file under `dir` except manifests, as (relative path, bytes).
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with("manifest.json") {
                files.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}
