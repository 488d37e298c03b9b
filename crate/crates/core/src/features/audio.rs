use std::path::Path;

use crate::error::{Error, Result};

pub const FOA_CHANNELS: usize = 4;
pub const DEFAULT_SAMPLE_RATE: u32 = 24_000;

/// Four-channel first-order ambisonics audio in W, X, Y, Z order.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    channels: [Vec<f64>; FOA_CHANNELS],
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(channels: [Vec<f64>; FOA_CHANNELS], sample_rate: u32) -> Result<Self> {
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidArgument("FOA channels differ in length".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        Ok(AudioClip { channels, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        AudioClip { channels: std::array::from_fn(|_| vec![0.0; len]), sample_rate }
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels_mut(&mut self) -> &mut [Vec<f64>; FOA_CHANNELS] {
        &mut self.channels
    }

    pub fn peak(&self) -> f64 {
        self.channels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Scales all channels down so that no sample exceeds unit magnitude.
    pub fn normalize_peak(&mut self) {
        let peak = self.peak();
        if peak > 1.0 {
            for v in self.channels.iter_mut().flatten() {
                *v /= peak;
            }
        }
    }

    /// Reads a 4-channel RIFF WAV (16/24/32-bit PCM or 32-bit float).
    pub fn read_wav(path: &Path) -> Result<Self> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.channels as usize != FOA_CHANNELS {
            return Err(Error::Format {
                what: "wav",
                detail: format!("{}: expected 4 FOA channels, found {}", path.display(), spec.channels),
            });
        }
        let interleaved: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Float => {
                reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?
            }
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
                reader.samples::<i32>().map(|s| s.map(|v| v as f64 / scale)).collect::<Result<_, _>>()?
            }
        };
        let mut channels: [Vec<f64>; FOA_CHANNELS] = Default::default();
        for frame in interleaved.chunks_exact(FOA_CHANNELS) {
            for (c, v) in channels.iter_mut().zip(frame) {
                c.push(*v);
            }
        }
        AudioClip::new(channels, spec.sample_rate)
    }

    /// Writes 32-bit float WAV.
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: FOA_CHANNELS as u16,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(path, spec)?;
        for i in 0..self.len() {
            for c in &self.channels {
                w.write_sample(c[i] as f32)?;
            }
        }
        w.finalize()?;
        Ok(())
    }
}
