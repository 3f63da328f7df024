use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const FILE_NAME: &str = "manifest.json";

/// Everything needed to repeat a run: the arguments (minus `--out`), the
/// effective seed and the resolved configuration. No timestamps or host
/// details, so repeating a run reproduces the manifest too.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub format: String,
    pub config: Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Drops `--out <dir>` / `--out=<dir>` so a manifest can be replayed into
/// another directory.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut kept = Vec::with_capacity(args.len());
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--out" {
            iter.next();
        } else if !arg.starts_with("--out=") {
            kept.push(arg.clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_is_removed_in_both_spellings() {
        let args: Vec<String> = ["score", "--out", "a", "--data", "d.jsonl", "--out=b", "--w", "4"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(strip_out(&args), ["score", "--data", "d.jsonl", "--w", "4"]);
    }
}
