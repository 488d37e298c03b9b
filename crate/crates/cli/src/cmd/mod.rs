pub mod eval;
pub mod extract;
pub mod gradcheck;
pub mod infer;
pub mod plot;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::Context;

/// `(stem, path)` of every file in `dir` ending in `.{ext}`, sorted by stem.
pub fn files_with_extension(dir: &Path, ext: &str) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let suffix = format!(".{ext}");
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let path = entry.with_context(|| format!("reading directory {}", dir.display()))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(stem) = name.strip_suffix(&suffix) {
            if path.is_file() && !stem.is_empty() {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Scene file stem for index `i`.
pub fn scene_name(i: usize) -> String {
    format!("scene_{i:04}")
}
