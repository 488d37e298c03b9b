//! Desk-scale FOA scene synthesis with exact annotations.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::audio::{AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

pub const LABEL_HOP_S: f64 = 0.1;
pub const MAX_POLYPHONY: usize = 3;
pub const DEFAULT_CLASSES: usize = 13;
const BAND_LO_HZ: f64 = 150.0;
const BAND_HI_HZ: f64 = 10_000.0;
const FADE_S: f64 = 0.01;
const TEMPLATE_RMS: f64 = 0.15;

/// Unit vector for azimuth/elevation in degrees: `(cos el cos az, cos el sin az, sin el)`.
pub fn unit_vector(azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
}

/// Azimuth and elevation in degrees of a nonzero vector.
pub fn direction_of(v: [f64; 3]) -> (f64, f64) {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let az = v[1].atan2(v[0]).to_degrees();
    let el = (v[2] / norm).clamp(-1.0, 1.0).asin().to_degrees();
    (az, el)
}

pub fn label_frame_count(duration_s: f64) -> usize {
    (duration_s / LABEL_HOP_S).round() as usize
}

/// Frequency band of each class template: log-spaced slots between 150 Hz and
/// 10 kHz, each narrowed so neighbouring classes are separated by a gap.
pub fn class_bands(n_classes: usize) -> Vec<(f64, f64)> {
    let ratio = BAND_HI_HZ / BAND_LO_HZ;
    let edge = |i: usize| BAND_LO_HZ * ratio.powf(i as f64 / n_classes as f64);
    (0..n_classes)
        .map(|i| {
            let (lo, hi) = (edge(i), edge(i + 1));
            let g = (hi / lo).powf(0.15);
            (lo * g, hi / g)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventSpec {
    pub class: usize,
    pub onset_s: f64,
    pub offset_s: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Per active label frame (azimuth, elevation); empty for a static source.
    pub path: Vec<(f64, f64)>,
    pub gain: f64,
}

impl EventSpec {
    pub fn fixed(class: usize, onset_s: f64, offset_s: f64, azimuth_deg: f64, elevation_deg: f64) -> Self {
        EventSpec { class, onset_s, offset_s, azimuth_deg, elevation_deg, path: Vec::new(), gain: 1.0 }
    }

    /// Label frames whose midpoint lies in `[onset, offset)`.
    pub fn active_frames(&self) -> std::ops::Range<usize> {
        let active = |l: usize| {
            let mid = (l as f64 + 0.5) * LABEL_HOP_S;
            self.onset_s <= mid && mid < self.offset_s
        };
        let last = (self.offset_s / LABEL_HOP_S).ceil() as usize + 1;
        match (0..=last).find(|&l| active(l)) {
            Some(first) => first..(first..=last).find(|&l| !active(l)).unwrap_or(last + 1),
            None => 0..0,
        }
    }

    fn direction_at_frame(&self, frame: usize) -> (f64, f64) {
        if self.path.is_empty() {
            return (self.azimuth_deg, self.elevation_deg);
        }
        let r = self.active_frames();
        let i = frame.saturating_sub(r.start).min(self.path.len() - 1);
        self.path[i]
    }

    fn overlaps(&self, other: &EventSpec) -> bool {
        self.onset_s < other.offset_s && other.onset_s < self.offset_s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub duration_s: f64,
    pub sample_rate: u32,
    pub n_classes: usize,
    pub events: Vec<EventSpec>,
    /// Diffuse noise level relative to the mixed signal power; `None` for a clean scene.
    pub snr_db: Option<f64>,
}

impl SceneSpec {
    pub fn new(duration_s: f64, n_classes: usize) -> Self {
        SceneSpec { duration_s, sample_rate: DEFAULT_SAMPLE_RATE, n_classes, events: Vec::new(), snr_db: None }
    }

    pub fn label_frames(&self) -> usize {
        label_frame_count(self.duration_s)
    }

    /// Largest number of events sounding at the same instant.
    pub fn max_overlap(&self) -> usize {
        self.events
            .iter()
            .map(|e| self.events.iter().filter(|o| o.onset_s <= e.onset_s && e.onset_s < o.offset_s).count())
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.duration_s > 0.0) || self.n_classes == 0 || self.sample_rate == 0 {
            return bad("scene needs positive duration, class count and sample rate".into());
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.class >= self.n_classes {
                return bad(format!("event {i}: class {} out of range 0..{}", e.class, self.n_classes));
            }
            if !(0.0 <= e.onset_s && e.onset_s < e.offset_s && e.offset_s <= self.duration_s) {
                return bad(format!("event {i}: need 0 <= onset < offset <= {}", self.duration_s));
            }
            let angles = std::iter::once((e.azimuth_deg, e.elevation_deg)).chain(e.path.iter().copied());
            for (az, el) in angles {
                if !((-180.0..180.0).contains(&az) && (-90.0..=90.0).contains(&el)) {
                    return bad(format!("event {i}: direction ({az}, {el}) out of range"));
                }
            }
            if !e.path.is_empty() && e.path.len() != e.active_frames().len() {
                return bad(format!(
                    "event {i}: motion path has {} entries for {} active label frames",
                    e.path.len(),
                    e.active_frames().len()
                ));
            }
            if !(e.gain > 0.0) {
                return bad(format!("event {i}: gain must be positive"));
            }
            for (j, o) in self.events.iter().enumerate().skip(i + 1) {
                let same_place = e.path.is_empty()
                    && o.path.is_empty()
                    && e.azimuth_deg == o.azimuth_deg
                    && e.elevation_deg == o.elevation_deg;
                if e.class == o.class && same_place && e.overlaps(o) {
                    return bad(format!("events {i} and {j} duplicate class {} at the same direction", e.class));
                }
            }
        }
        if self.max_overlap() > MAX_POLYPHONY {
            return bad(format!("{} simultaneous events exceed the limit of {MAX_POLYPHONY}", self.max_overlap()));
        }
        Ok(())
    }

    /// One annotation per active label frame per event, sorted by frame, class, source.
    pub fn annotations(&self) -> Vec<EventAnnotation> {
        let frames = self.label_frames();
        let mut out = Vec::new();
        for (source, e) in self.events.iter().enumerate() {
            for frame in e.active_frames().filter(|&f| f < frames) {
                let (azimuth_deg, elevation_deg) = e.direction_at_frame(frame);
                out.push(EventAnnotation { frame, class: e.class, source, azimuth_deg, elevation_deg });
            }
        }
        out.sort_by_key(|a| (a.frame, a.class, a.source));
        out
    }
}

/// One label-frame row of the annotation CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventAnnotation {
    pub frame: usize,
    pub class: usize,
    pub source: usize,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl EventAnnotation {
    pub fn unit_vector(&self) -> [f64; 3] {
        unit_vector(self.azimuth_deg, self.elevation_deg)
    }
}

/// Writes `frame_idx,class_idx,source_idx,azimuth_deg,elevation_deg` rows without a header.
pub fn write_annotations(path: &Path, rows: &[EventAnnotation]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for r in rows {
        w.write_record([
            r.frame.to_string(),
            r.class.to_string(),
            r.source.to_string(),
            r.azimuth_deg.to_string(),
            r.elevation_deg.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_annotations(path: &Path) -> Result<Vec<EventAnnotation>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |d: &str| Error::Format { what: "annotation csv", detail: format!("{}:{}: {d}", path.display(), line + 1) };
        if rec.len() != 5 {
            return Err(bad(&format!("expected 5 fields, found {}", rec.len())));
        }
        let int = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(&format!("field {} is not an index", i + 1)));
        let real = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&format!("field {} is not a number", i + 1)));
        out.push(EventAnnotation {
            frame: int(0)?,
            class: int(1)?,
            source: int(2)?,
            azimuth_deg: real(3)?,
            elevation_deg: real(4)?,
        });
    }
    Ok(out)
}

/// Unit-RMS Gaussian noise restricted to `[lo, hi]` Hz.
fn band_noise<R: Rng + ?Sized>(len: usize, sample_rate: u32, band: (f64, f64), rng: &mut R) -> Vec<f64> {
    let mut buf: Vec<Complex64> =
        (0..len).map(|_| Complex64::new(StandardNormal.sample(rng), 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let df = sample_rate as f64 / len as f64;
    for (k, z) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * df;
        if f < band.0 || f > band.1 {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|z| z.re).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        x.iter().map(|v| v / rms).collect()
    } else {
        x
    }
}

/// Renders the scene as FOA audio (unit-gain W) and returns its annotations.
pub fn synth_foa_scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<(AudioClip, Vec<EventAnnotation>)> {
    spec.validate()?;
    let sr = spec.sample_rate as f64;
    let len = (spec.duration_s * sr).round() as usize;
    let mut clip = AudioClip::silence(len, spec.sample_rate);
    let bands = class_bands(spec.n_classes);
    let hop = LABEL_HOP_S * sr;
    let fade = (FADE_S * sr).max(1.0);
    {
        let ch = clip.channels_mut();
        for e in &spec.events {
            let start = (e.onset_s * sr).round() as usize;
            let end = ((e.offset_s * sr).round() as usize).min(len);
            if end <= start {
                continue;
            }
            let n = end - start;
            let s = band_noise(n, spec.sample_rate, bands[e.class], rng);
            let mut u = unit_vector(e.azimuth_deg, e.elevation_deg);
            let mut cur_frame = usize::MAX;
            for (i, v) in s.iter().enumerate() {
                let pos = start + i;
                if !e.path.is_empty() {
                    let frame = (pos as f64 / hop) as usize;
                    if frame != cur_frame {
                        cur_frame = frame;
                        let (az, el) = e.direction_at_frame(frame);
                        u = unit_vector(az, el);
                    }
                }
                let ramp = ((i as f64 + 0.5) / fade).min((n as f64 - i as f64 - 0.5) / fade).min(1.0);
                let env = 0.5 - 0.5 * (std::f64::consts::PI * ramp).cos();
                let x = e.gain * TEMPLATE_RMS * env * v;
                ch[0][pos] += x;
                for a in 0..3 {
                    ch[a + 1][pos] += u[a] * x;
                }
            }
        }
        if let Some(snr) = spec.snr_db {
            let power = ch[0].iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64;
            let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
            if sigma > 0.0 {
                for (c, chan) in ch.iter_mut().enumerate() {
                    let s = if c == 0 { sigma } else { sigma / 3f64.sqrt() };
                    for v in chan.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *v += s * z;
                    }
                }
            }
        }
    }
    clip.normalize_peak();
    Ok((clip, spec.annotations()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomSceneConfig {
    pub n_classes: usize,
    pub duration_s: f64,
    pub max_events: usize,
    pub max_overlap: usize,
    pub min_event_s: f64,
    pub max_event_s: f64,
    pub max_elevation_deg: f64,
    pub snr_db: Option<f64>,
}

impl Default for RandomSceneConfig {
    fn default() -> Self {
        RandomSceneConfig {
            n_classes: DEFAULT_CLASSES,
            duration_s: 5.0,
            max_events: 3,
            max_overlap: MAX_POLYPHONY,
            min_event_s: 1.0,
            max_event_s: 3.0,
            max_elevation_deg: 60.0,
            snr_db: Some(20.0),
        }
    }
}

/// Draws a valid scene: at most `max_overlap` simultaneous events and never two
/// overlapping events of the same class.
pub fn random_scene<R: Rng + ?Sized>(cfg: &RandomSceneConfig, rng: &mut R) -> Result<SceneSpec> {
    if cfg.max_overlap == 0 || cfg.max_overlap > MAX_POLYPHONY {
        return Err(Error::InvalidArgument(format!("max overlap {} must lie in 1..={MAX_POLYPHONY}", cfg.max_overlap)));
    }
    if !(0.0 < cfg.min_event_s && cfg.min_event_s <= cfg.max_event_s && cfg.max_event_s <= cfg.duration_s) {
        return Err(Error::InvalidArgument("need 0 < min_event_s <= max_event_s <= duration_s".into()));
    }
    if !(0.0..=90.0).contains(&cfg.max_elevation_deg) {
        return Err(Error::InvalidArgument("max elevation must lie in [0, 90]".into()));
    }
    let mut scene = SceneSpec::new(cfg.duration_s, cfg.n_classes);
    scene.snr_db = cfg.snr_db;
    let target = if cfg.max_events == 0 { 0 } else { rng.gen_range(1..=cfg.max_events) };
    let mut attempts = 0;
    while scene.events.len() < target && attempts < 100 * target {
        attempts += 1;
        let len = rng.gen_range(cfg.min_event_s..=cfg.max_event_s);
        let onset = ((rng.gen_range(0.0..=cfg.duration_s - len)) * 100.0).round() / 100.0;
        let offset = (onset + len).min(cfg.duration_s);
        let e = EventSpec {
            class: rng.gen_range(0..cfg.n_classes),
            onset_s: onset,
            offset_s: (offset * 100.0).round() / 100.0,
            azimuth_deg: rng.gen_range(-180..180) as f64,
            elevation_deg: rng.gen_range(-cfg.max_elevation_deg..=cfg.max_elevation_deg).round(),
            path: Vec::new(),
            gain: rng.gen_range(0.5..=1.0),
        };
        if e.onset_s >= e.offset_s || e.active_frames().is_empty() {
            continue;
        }
        if scene.events.iter().any(|o| o.class == e.class && o.overlaps(&e)) {
            continue;
        }
        scene.events.push(e);
        if scene.max_overlap() > cfg.max_overlap {
            scene.events.pop();
        }
    }
    scene.validate()?;
    Ok(scene)
}
