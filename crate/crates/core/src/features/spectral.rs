//! STFT, Slaney mel filterbank, log-mel energies and FOA intensity vectors.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::audio::{AudioClip, FOA_CHANNELS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LOG_EPS: f64 = 1e-10;
pub const IV_EPS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { sample_rate: 24_000, n_fft: 1024, hop: 480, n_mels: 64, f_min: 50.0, f_max: 12_000.0 }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || self.n_fft % 2 != 0 {
            return Err(Error::InvalidArgument(format!("n_fft {} must be even and >= 2", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::InvalidArgument(format!("hop {} must lie in 1..=n_fft", self.hop)));
        }
        if self.n_mels == 0 {
            return Err(Error::InvalidArgument("n_mels must be positive".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got {}..{}",
                self.f_min, self.f_max
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for `len` samples: `floor((len - n_fft) / hop) + 1`.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.n_fft {
            0
        } else {
            (len - self.n_fft) / self.hop + 1
        }
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.n_fft as f64
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// One-sided complex spectrogram for all four channels, indexed `[channel][frame][bin]`.
#[derive(Clone, Debug)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn frame(&self, channel: usize, t: usize) -> &[Complex64] {
        let start = (channel * self.frames + t) * self.bins;
        &self.data[start..start + self.bins]
    }
}

pub fn stft(clip: &AudioClip, cfg: &SpectralConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if clip.sample_rate() != cfg.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "clip sample rate {} differs from configured {}",
            clip.sample_rate(),
            cfg.sample_rate
        )));
    }
    let frames = cfg.frame_count(clip.len());
    if frames == 0 {
        return Err(Error::InvalidArgument(format!(
            "clip of {} samples is shorter than one {}-sample frame",
            clip.len(),
            cfg.n_fft
        )));
    }
    let bins = cfg.n_bins();
    let window = hann(cfg.n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let mut data = Vec::with_capacity(FOA_CHANNELS * frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
    for c in 0..FOA_CHANNELS {
        let x = clip.channel(c);
        for t in 0..frames {
            let start = t * cfg.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(x[start + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            data.extend_from_slice(&buf[..bins]);
        }
    }
    Ok(Spectrogram { frames, bins, data })
}

pub fn hz_to_mel(f: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if f >= MIN_LOG_HZ {
        min_log_mel + (f / MIN_LOG_HZ).ln() / logstep
    } else {
        f / F_SP
    }
}

pub fn mel_to_hz(m: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if m >= min_log_mel {
        MIN_LOG_HZ * (logstep * (m - min_log_mel)).exp()
    } else {
        F_SP * m
    }
}

/// Unit-height triangular filters on the Slaney mel scale, `n_mels x n_bins`.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    /// Corner frequencies: filter `m` spans `edges[m]..edges[m + 2]` and peaks at `edges[m + 1]`.
    pub edges: Vec<f64>,
    weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &SpectralConfig) -> Result<Self> {
        cfg.validate()?;
        let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let n_bins = cfg.n_bins();
        let mut weights = vec![0.0; cfg.n_mels * n_bins];
        for m in 0..cfg.n_mels {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = cfg.bin_frequency(k);
                let w = ((f - l) / (c - l)).min((r - f) / (r - c));
                weights[m * n_bins + k] = w.max(0.0);
            }
        }
        Ok(MelFilterbank { n_mels: cfg.n_mels, n_bins, edges, weights })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn center(&self, m: usize) -> f64 {
        self.edges[m + 1]
    }

    fn apply(&self, per_bin: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let per_bin = per_bin.to_vec();
        (0..self.n_mels).map(move |m| self.row(m).iter().zip(&per_bin).map(|(w, v)| w * v).sum())
    }
}

/// `log(mel power + 1e-10)` per channel, shaped `[4, frames, n_mels]`.
pub fn log_mel(spec: &Spectrogram, fb: &MelFilterbank) -> Tensor {
    let mut out = Vec::with_capacity(FOA_CHANNELS * spec.frames * fb.n_mels);
    for c in 0..FOA_CHANNELS {
        for t in 0..spec.frames {
            let power: Vec<f64> = spec.frame(c, t).iter().map(|z| z.norm_sqr()).collect();
            out.extend(fb.apply(&power).map(|p| (p + LOG_EPS).ln()));
        }
    }
    Tensor::from_parts(vec![FOA_CHANNELS, spec.frames, fb.n_mels], out)
}

/// Normalized active intensity vectors per mel band, shaped `[3, frames, n_mels]`.
///
/// Per bin `I = Re{conj(W) [X, Y, Z]}`; both `I` and the energy
/// `|W|^2 + (|X|^2 + |Y|^2 + |Z|^2) / 3` pass through the filterbank before the
/// division, which keeps every component inside `[-1, 1]`.
pub fn intensity_vectors(spec: &Spectrogram, fb: &MelFilterbank) -> Tensor {
    let bands = fb.n_mels;
    let mut out = vec![0.0; 3 * spec.frames * bands];
    for t in 0..spec.frames {
        let w = spec.frame(0, t);
        let xyz = [spec.frame(1, t), spec.frame(2, t), spec.frame(3, t)];
        let energy: Vec<f64> = (0..spec.bins)
            .map(|k| w[k].norm_sqr() + xyz.iter().map(|ch| ch[k].norm_sqr()).sum::<f64>() / 3.0)
            .collect();
        let mel_energy: Vec<f64> = fb.apply(&energy).collect();
        for (axis, ch) in xyz.iter().enumerate() {
            let intensity: Vec<f64> = (0..spec.bins).map(|k| (w[k].conj() * ch[k]).re).collect();
            for (m, v) in fb.apply(&intensity).enumerate() {
                out[(axis * spec.frames + t) * bands + m] = v / (mel_energy[m] + IV_EPS);
            }
        }
    }
    Tensor::from_parts(vec![3, spec.frames, bands], out)
}
