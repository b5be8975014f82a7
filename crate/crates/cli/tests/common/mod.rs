#![allow(dead_code)]

use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_facefatigue"));
    cmd.env_remove("FACE_API_KEY")
        .env_remove("FACE_API_SECRET")
        .env_remove("RUST_LOG");
    cmd
}

pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    bin().args(args).output().expect("spawn facefatigue")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[track_caller]
pub fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    out
}

/// Paths inside a corpus written by `synthesize`.
pub struct Corpus {
    pub dir: PathBuf,
}

impl Corpus {
    pub fn synthesize(dir: &Path, faces: usize, seed: u64) -> Corpus {
        ok(run([
            "synthesize".as_ref(),
            "--faces".as_ref(),
            faces.to_string().as_ref(),
            "--seed".as_ref(),
            seed.to_string().as_ref(),
            "--out".as_ref(),
            dir.as_os_str(),
        ]));
        Corpus { dir: dir.to_path_buf() }
    }

    pub fn images(&self) -> PathBuf {
        self.dir.join("images")
    }

    pub fn landmarks(&self) -> PathBuf {
        self.dir.join("landmarks.jsonl")
    }

    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.jsonl")
    }

    /// Arguments shared by `train` and `evaluate`.
    pub fn rated_args(&self) -> Vec<String> {
        vec![
            "--manifest".into(),
            self.manifest().display().to_string(),
            "--images".into(),
            self.images().display().to_string(),
            "--landmarks".into(),
            self.landmarks().display().to_string(),
        ]
    }
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn json_lines(text: &str) -> Vec<serde_json::Value> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}
