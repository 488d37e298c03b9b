//! `run_manifest.txt`: what ran, with which settings, and how it ended.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;

use crate::failure::Failure;

pub const RUN_MANIFEST: &str = "run_manifest.txt";

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug)]
pub struct Manifest {
    command: String,
    args: Vec<String>,
    started: u64,
    seed: Option<u64>,
    entries: Vec<(String, String)>,
    config: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        Manifest { command: command.to_string(), args, started: unix_now(), seed: None, entries: Vec::new(), config: None }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Key=value config text, copied under a `[config]` section.
    pub fn config(&mut self, text: String) {
        self.config = Some(text);
    }

    pub fn render(&self, failure: Option<&Failure>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tool=swg");
        let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "command={}", self.command);
        let _ = writeln!(s, "args={}", self.args.join(" "));
        match self.seed {
            Some(seed) => writeln!(s, "seed={seed}"),
            None => writeln!(s, "seed=none"),
        }
        .ok();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "started_unix={}", self.started);
        let _ = writeln!(s, "finished_unix={}", unix_now());
        match failure {
            None => {
                let _ = writeln!(s, "status=ok");
            }
            Some(f) => {
                let _ = writeln!(s, "status=failed");
                let _ = writeln!(s, "exit_code={}", f.code());
                let _ = writeln!(s, "error={}", f.message());
            }
        }
        if let Some(cfg) = &self.config {
            let _ = writeln!(s, "[config]");
            s.push_str(cfg);
        }
        s
    }

    pub fn finish(&self, dir: &Path, failure: Option<&Failure>) -> anyhow::Result<PathBuf> {
        let path = dir.join(RUN_MANIFEST);
        std::fs::write(&path, self.render(failure)).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_lists_seed_config_and_status() {
        let mut m = Manifest::new("synth", vec!["swg".into(), "synth".into()]);
        m.seed(7);
        m.set("scenes", 3);
        m.config("lr=0.001\n".into());
        let ok = m.render(None);
        assert!(ok.contains("seed=7\n"));
        assert!(ok.contains("scenes=3\n"));
        assert!(ok.contains("status=ok\n"));
        assert!(ok.ends_with("[config]\nlr=0.001\n"));
        let failed = m.render(Some(&Failure::Data("missing x.csv".into())));
        assert!(failed.contains("exit_code=2\nerror=missing x.csv\n"));
    }
}
