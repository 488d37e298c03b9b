use std::path::PathBuf;

use anyhow::Context;
use rayon::prelude::*;
use swgformer::features::{synth_scenes, write_annotations, RandomSceneConfig, MAX_POLYPHONY};

use super::scene_name;
use crate::failure::UsageError;
use crate::manifest::Manifest;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Number of scenes.
    #[arg(long)]
    pub scenes: usize,
    /// Number of sound classes.
    #[arg(long, default_value_t = 13)]
    pub classes: usize,
    /// Cap on simultaneously active events (1 to 3).
    #[arg(long, default_value_t = 3)]
    pub max_overlap: usize,
    /// Cap on events per scene.
    #[arg(long, default_value_t = 3)]
    pub max_events: usize,
    /// Clip length in seconds.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
    /// Additive noise level in dB; omit for noise-free scenes.
    #[arg(long, default_value_t = 20.0)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `scene_NNNN.wav` / `scene_NNNN.csv` pairs.
    #[arg(long)]
    pub out: PathBuf,
}

impl Args {
    pub fn scene_config(&self) -> anyhow::Result<RandomSceneConfig> {
        if self.max_overlap == 0 || self.max_overlap > MAX_POLYPHONY {
            return Err(UsageError(format!("--max-overlap {} must lie in 1..={MAX_POLYPHONY}", self.max_overlap)).into());
        }
        if self.classes == 0 {
            return Err(UsageError("--classes must be positive".into()).into());
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(UsageError(format!("--duration {} must be positive", self.duration)).into());
        }
        let defaults = RandomSceneConfig::default();
        Ok(RandomSceneConfig {
            n_classes: self.classes,
            duration_s: self.duration,
            max_events: self.max_events,
            max_overlap: self.max_overlap,
            max_event_s: defaults.max_event_s.min(self.duration),
            min_event_s: defaults.min_event_s.min(self.duration),
            snr_db: Some(self.snr_db),
            ..defaults
        })
    }
}

pub fn run(a: &Args, m: &mut Manifest) -> anyhow::Result<()> {
    m.seed(a.seed);
    m.set("scenes", a.scenes);
    m.set("classes", a.classes);
    m.set("max_overlap", a.max_overlap);
    m.set("max_events", a.max_events);
    m.set("duration_s", a.duration);
    m.set("snr_db", a.snr_db);
    let cfg = a.scene_config()?;
    let scenes = synth_scenes(&cfg, a.scenes, a.seed).context("synthesizing scenes")?;
    scenes.par_iter().enumerate().try_for_each(|(i, (clip, anns))| -> anyhow::Result<()> {
        let name = scene_name(i);
        let wav = a.out.join(format!("{name}.wav"));
        clip.write_wav(&wav).with_context(|| format!("writing {}", wav.display()))?;
        let csv = a.out.join(format!("{name}.csv"));
        write_annotations(&csv, anns).with_context(|| format!("writing {}", csv.display()))
    })?;
    say!("wrote {} scenes to {}", scenes.len(), a.out.display());
    Ok(())
}
