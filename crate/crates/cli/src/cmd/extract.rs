use std::path::PathBuf;

use anyhow::Context;
use rayon::prelude::*;
use swgformer::features::{extract_corpus, AudioClip, FeatureTensor, SpectralConfig};

use super::files_with_extension;
use crate::failure::UsageError;
use crate::manifest::Manifest;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Directory of 4-channel FOA WAV files.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for `<stem>.swgt` features and `.swgt.hdr` headers.
    #[arg(long)]
    pub out: PathBuf,
    /// Reuse the standardization statistics of an existing feature file instead of fitting new ones.
    #[arg(long)]
    pub stats_from: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub n_mels: usize,
}

pub fn run(a: &Args, m: &mut Manifest) -> anyhow::Result<()> {
    let cfg = SpectralConfig { n_mels: a.n_mels, ..SpectralConfig::default() };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    m.set("input", a.input.display());
    m.set("n_mels", a.n_mels);
    let wavs = files_with_extension(&a.input, "wav")?;
    let clips = wavs
        .par_iter()
        .map(|(_, p)| AudioClip::read_wav(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if let Some(clip) = clips.iter().zip(&wavs).find(|(c, _)| c.sample_rate() != cfg.sample_rate) {
        anyhow::bail!("{}: sample rate {} Hz, expected {}", clip.1 .1.display(), clip.0.sample_rate(), cfg.sample_rate);
    }
    let given = match &a.stats_from {
        Some(p) => {
            m.set("stats_from", p.display());
            Some(FeatureTensor::load(p).with_context(|| format!("reading statistics from {}", p.display()))?.stats)
        }
        None => None,
    };
    if clips.is_empty() {
        say!("no WAV files in {}", a.input.display());
        return Ok(());
    }
    let (features, stats) = extract_corpus(&clips, &cfg, given.as_ref()).context("extracting features")?;
    features.par_iter().zip(&wavs).try_for_each(|(f, (stem, _))| {
        let path = a.out.join(format!("{stem}.swgt"));
        f.save(&path, &cfg, &stats).with_context(|| format!("writing {}", path.display()))
    })?;
    m.set("files", features.len());
    say!("wrote {} feature files to {}", features.len(), a.out.display());
    Ok(())
}
