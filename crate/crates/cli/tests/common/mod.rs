#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use stylebot::config::LoadedConfig;
use stylebot::train::{train_all, MANIFEST_FILE};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stylebot"));
    cmd.env_remove("STYLEBOT_MANIFEST").env_remove("RUST_LOG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn stylebot")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// The seeded fixture build, trained once per test binary.
pub fn fixture_build() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("fixture-build-{}", env!("CARGO_CRATE_NAME")));
        let cfg = LoadedConfig::load(&fixtures().join("config.toml"), None, Some(&dir)).unwrap();
        train_all(&cfg).unwrap();
        dir
    })
}

pub fn fixture_manifest() -> PathBuf {
    fixture_build().join(MANIFEST_FILE)
}

/// The fixture config with absolute paths, minus any line starting with one of `drop`.
pub fn config_text(drop: &[&str]) -> String {
    let text = std::fs::read_to_string(fixtures().join("config.toml")).unwrap();
    let base = fixtures();
    text.lines()
        .filter(|l| !drop.iter().any(|d| l.starts_with(d)))
        .map(|l| {
            let mut line = l.to_string();
            for name in [
                "style.txt",
                "general.txt",
                "tweets.txt",
                "tagged.txt",
                "keywords.txt",
                "fallbacks.txt",
            ] {
                line = line.replace(&format!("\"{name}\""), &format!("{:?}", base.join(name)));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}
