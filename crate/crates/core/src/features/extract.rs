use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::audio::AudioClip;
use super::spectral::{intensity_vectors, log_mel, stft, MelFilterbank, SpectralConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_CHANNELS: usize = 7;
pub const LOG_MEL_CHANNELS: usize = 4;
const STD_FLOOR: f64 = 1e-8;

/// Frame-wise features shaped `[T, F, 7]`: log-mel W, X, Y, Z then IV x, y, z.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    data: Tensor,
    frame_rate: f64,
}

impl FeatureTensor {
    pub fn new(data: Tensor, frame_rate: f64) -> Result<Self> {
        if data.rank() != 3 || data.shape()[2] != FEATURE_CHANNELS {
            return Err(Error::shape("FeatureTensor", format!("expected [T, F, 7], got {:?}", data.shape())));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("frame rate {frame_rate} must be positive")));
        }
        Ok(FeatureTensor { data, frame_rate })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn bands(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// Truncates, or repeats the last frame, until there are exactly `frames` frames.
    pub fn fit_frames(&self, frames: usize) -> Result<FeatureTensor> {
        if frames == 0 {
            return Err(Error::InvalidArgument("target frame count must be positive".into()));
        }
        let row = self.bands() * FEATURE_CHANNELS;
        let src = self.data.data();
        let last = self.frames() - 1;
        let mut out = Vec::with_capacity(frames * row);
        for t in 0..frames {
            let s = t.min(last) * row;
            out.extend_from_slice(&src[s..s + row]);
        }
        FeatureTensor::new(Tensor::new(vec![frames, self.bands(), FEATURE_CHANNELS], out)?, self.frame_rate)
    }

    pub fn standardize(&self, stats: &FeatureStats) -> FeatureTensor {
        let mut data = self.data.clone();
        for (i, v) in data.data_mut().iter_mut().enumerate() {
            let c = i % FEATURE_CHANNELS;
            *v = ((*v - stats.mean[c]) / stats.std[c]) as f32 as f64;
        }
        FeatureTensor { data, frame_rate: self.frame_rate }
    }

    pub fn save(&self, path: &Path, cfg: &SpectralConfig, stats: &FeatureStats) -> Result<()> {
        self.data.save(path)?;
        let mut hdr = String::new();
        let mut kv = |k: &str, v: String| hdr.push_str(&format!("{k}={v}\n"));
        kv("format", "swg-features".into());
        kv("version", "1".into());
        kv("sample_rate", cfg.sample_rate.to_string());
        kv("n_fft", cfg.n_fft.to_string());
        kv("hop", cfg.hop.to_string());
        kv("n_mels", cfg.n_mels.to_string());
        kv("f_min", cfg.f_min.to_string());
        kv("f_max", cfg.f_max.to_string());
        kv("frames", self.frames().to_string());
        kv("frame_rate", self.frame_rate.to_string());
        kv("channels", "logmel_w,logmel_x,logmel_y,logmel_z,iv_x,iv_y,iv_z".into());
        kv("mean", join(&stats.mean));
        kv("std", join(&stats.std));
        let hp = header_path(path);
        fs::write(&hp, hdr).map_err(|e| Error::io(hp, e))
    }

    pub fn load(path: &Path) -> Result<FeatureFile> {
        let data = Tensor::load(path)?;
        let hp = header_path(path);
        let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
        let kv = parse_header(&text)?;
        let get = |k: &str| kv.get(k).ok_or_else(|| header_err(format!("missing key '{k}'")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| header_err(format!("bad number for '{k}'"))) };
        let cfg = SpectralConfig {
            sample_rate: num("sample_rate")? as u32,
            n_fft: num("n_fft")? as usize,
            hop: num("hop")? as usize,
            n_mels: num("n_mels")? as usize,
            f_min: num("f_min")?,
            f_max: num("f_max")?,
        };
        let stats = FeatureStats { mean: split7(get("mean")?)?, std: split7(get("std")?)? };
        let features = FeatureTensor::new(data, num("frame_rate")?)?;
        if features.frames() != num("frames")? as usize || features.bands() != cfg.n_mels {
            return Err(header_err(format!("header does not describe tensor of shape {:?}", features.data.shape())));
        }
        Ok(FeatureFile { features, config: cfg, stats })
    }
}

/// A feature tensor together with its sidecar header.
#[derive(Clone, Debug)]
pub struct FeatureFile {
    pub features: FeatureTensor,
    pub config: SpectralConfig,
    pub stats: FeatureStats,
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

fn header_err(detail: String) -> Error {
    Error::Format { what: "feature header", detail }
}

fn parse_header(text: &str) -> Result<BTreeMap<String, String>> {
    let mut kv = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| header_err(format!("line {}: expected key=value", n + 1)))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(kv)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split7(s: &str) -> Result<[f64; FEATURE_CHANNELS]> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| header_err(format!("bad list '{s}'")))?;
    vals.try_into().map_err(|_| header_err(format!("expected 7 values in '{s}'")))
}

/// Per-channel standardization statistics.
///
/// Only the log-mel channels are fitted; IV channels keep zero mean and unit
/// scale so their values stay inside [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: [f64; FEATURE_CHANNELS],
    pub std: [f64; FEATURE_CHANNELS],
}

impl Default for FeatureStats {
    fn default() -> Self {
        FeatureStats { mean: [0.0; FEATURE_CHANNELS], std: [1.0; FEATURE_CHANNELS] }
    }
}

impl FeatureStats {
    pub fn fit<'a>(corpus: impl IntoIterator<Item = &'a FeatureTensor>) -> Result<Self> {
        let corpus: Vec<&FeatureTensor> = corpus.into_iter().collect();
        let count: usize = corpus.iter().map(|f| f.frames() * f.bands()).sum();
        if count == 0 {
            return Err(Error::InvalidArgument("cannot fit feature statistics on an empty corpus".into()));
        }
        let rows = || corpus.iter().flat_map(|f| f.data.data().chunks_exact(FEATURE_CHANNELS));
        let mut stats = FeatureStats::default();
        for c in 0..LOG_MEL_CHANNELS {
            let mean = rows().map(|r| r[c]).sum::<f64>() / count as f64;
            let var = rows().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / count as f64;
            stats.mean[c] = mean;
            stats.std[c] = if var.sqrt() > STD_FLOOR { var.sqrt() } else { 1.0 };
        }
        Ok(stats)
    }
}

/// Unit direction of the intensity vectors summed over all bands of frame `t`;
/// `None` when they cancel out.
pub fn intensity_direction(f: &FeatureTensor, t: usize) -> Option<[f64; 3]> {
    let row = f.bands() * FEATURE_CHANNELS;
    let frame = f.data.data().get(t * row..(t + 1) * row)?;
    let mut v = [0.0; 3];
    for band in frame.chunks_exact(FEATURE_CHANNELS) {
        for a in 0..3 {
            v[a] += band[LOG_MEL_CHANNELS + a];
        }
    }
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| [v[0] / norm, v[1] / norm, v[2] / norm])
}

/// Raw (unstandardized) 7-channel features, rounded to f32 precision.
pub fn extract_features(clip: &AudioClip, cfg: &SpectralConfig) -> Result<FeatureTensor> {
    let spec = stft(clip, cfg)?;
    let fb = MelFilterbank::new(cfg)?;
    let lm = log_mel(&spec, &fb);
    let iv = intensity_vectors(&spec, &fb);
    let (t_n, f_n) = (spec.frames, cfg.n_mels);
    let mut out = Vec::with_capacity(t_n * f_n * FEATURE_CHANNELS);
    for t in 0..t_n {
        for f in 0..f_n {
            for c in 0..LOG_MEL_CHANNELS {
                out.push(lm.at(&[c, t, f]) as f32 as f64);
            }
            for a in 0..3 {
                out.push(iv.at(&[a, t, f]) as f32 as f64);
            }
        }
    }
    FeatureTensor::new(Tensor::new(vec![t_n, f_n, FEATURE_CHANNELS], out)?, cfg.frame_rate())
}
