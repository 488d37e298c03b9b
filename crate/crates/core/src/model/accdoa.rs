//! Activity-coupled Cartesian DoA targets: one 3-vector per frame and class.

use crate::features::{direction_of, unit_vector, EventAnnotation};
use crate::numerics::{Graph, Var};
use crate::{Error, Result, Tensor};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Target tensor `[label_frames, n_classes, 3]`; active entries hold the unit DoA.
pub fn accdoa_encode(annotations: &[EventAnnotation], n_classes: usize, label_frames: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[label_frames, n_classes, 3]);
    let mut seen = vec![false; label_frames * n_classes];
    for a in annotations {
        if a.frame >= label_frames || a.class >= n_classes {
            return Err(Error::InvalidArgument(format!(
                "annotation at frame {} class {} outside {label_frames} frames x {n_classes} classes",
                a.frame, a.class
            )));
        }
        let slot = a.frame * n_classes + a.class;
        if seen[slot] {
            return Err(Error::DuplicateInstance { frame: a.frame, class: a.class });
        }
        seen[slot] = true;
        let u = unit_vector(a.azimuth_deg, a.elevation_deg);
        t.data_mut()[slot * 3..slot * 3 + 3].copy_from_slice(&u);
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub class: usize,
    pub doa: [f64; 3],
}

/// Per label frame, classes whose vector norm exceeds `threshold`, with normalized DoA.
pub fn accdoa_decode(pred: &Tensor, threshold: f64) -> Result<Vec<Vec<Detection>>> {
    let s = pred.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::shape("accdoa_decode", format!("expected [L, C, 3], got {s:?}")));
    }
    let (l_n, c_n) = (s[0], s[1]);
    let d = pred.data();
    Ok((0..l_n)
        .map(|l| {
            (0..c_n)
                .filter_map(|c| {
                    let v = &d[(l * c_n + c) * 3..(l * c_n + c) * 3 + 3];
                    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    (norm > threshold).then(|| Detection { class: c, doa: [v[0] / norm, v[1] / norm, v[2] / norm] })
                })
                .collect()
        })
        .collect())
}

/// Decoded detections as annotation rows (source 0, one track per class).
pub fn detections_to_annotations(frames: &[Vec<Detection>]) -> Vec<EventAnnotation> {
    frames
        .iter()
        .enumerate()
        .flat_map(|(l, dets)| {
            dets.iter().map(move |d| {
                let (az, el) = direction_of(d.doa);
                EventAnnotation { frame: l, class: d.class, source: 0, azimuth_deg: az, elevation_deg: el }
            })
        })
        .collect()
}

/// Mean squared error over every frame, class and axis entry.
pub fn accdoa_loss(g: &Graph, pred: Var, target: Var) -> Result<Var> {
    g.mse(pred, target)
}
