//! Joint SELD evaluation: location-dependent ER/F20, class-dependent LE/LR and the SELD score.

mod hungarian;
mod report;

pub use hungarian::{assignment_cost, hungarian};
pub use report::{evaluate, ClassMetrics, MetricsConfig, MetricsReport};

use crate::features::EventAnnotation;
use crate::{Error, Result};

/// Unit-norm tolerance for DoA vectors.
pub const UNIT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_THRESHOLD_DEG: f64 = 20.0;
pub const DEFAULT_SEGMENT_FRAMES: usize = 10;
/// Reported LE when no prediction could be matched to any reference.
pub const UNMATCHED_LE_DEG: f64 = 180.0;

fn check_unit(v: &[f64; 3]) -> Result<()> {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if (norm - 1.0).abs() > UNIT_TOLERANCE || !norm.is_finite() {
        return Err(Error::InvalidArgument(format!("DoA vector {v:?} has norm {norm}, expected 1")));
    }
    Ok(())
}

/// Great-circle distance between two unit vectors in degrees.
pub fn angular_distance(u: &[f64; 3], v: &[f64; 3]) -> Result<f64> {
    check_unit(u)?;
    check_unit(v)?;
    Ok(angle_deg(u, v))
}

// atan2 of |u x v| and u.v is the arccos angle without its loss of precision near 0 and 180.
fn angle_deg(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    (cx * cx + cy * cy + cz * cz).sqrt().atan2(dot).to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub class: usize,
    pub track: usize,
    pub doa: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameLists {
    pub refs: Vec<Event>,
    pub preds: Vec<Event>,
}

/// Reference and predicted events per label frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEvents {
    n_classes: usize,
    frames: Vec<FrameLists>,
}

impl FrameEvents {
    pub fn new(n_frames: usize, n_classes: usize) -> Self {
        Self { n_classes, frames: vec![FrameLists::default(); n_frames] }
    }

    /// Frames past `n_frames` are an error, as are out-of-range classes.
    pub fn from_annotations(
        refs: &[EventAnnotation],
        preds: &[EventAnnotation],
        n_frames: usize,
        n_classes: usize,
    ) -> Result<Self> {
        let mut fe = Self::new(n_frames, n_classes);
        for a in refs {
            fe.push_ref(a.frame, Event { class: a.class, track: a.source, doa: a.unit_vector() })?;
        }
        for a in preds {
            fe.push_pred(a.frame, Event { class: a.class, track: a.source, doa: a.unit_vector() })?;
        }
        Ok(fe)
    }

    fn check(&self, frame: usize, e: &Event) -> Result<()> {
        if frame >= self.frames.len() {
            return Err(Error::InvalidArgument(format!(
                "frame {frame} outside 0..{}",
                self.frames.len()
            )));
        }
        if e.class >= self.n_classes {
            return Err(Error::InvalidArgument(format!(
                "class {} outside 0..{}",
                e.class, self.n_classes
            )));
        }
        check_unit(&e.doa)
    }

    pub fn push_ref(&mut self, frame: usize, e: Event) -> Result<()> {
        self.check(frame, &e)?;
        self.frames[frame].refs.push(e);
        Ok(())
    }

    pub fn push_pred(&mut self, frame: usize, e: Event) -> Result<()> {
        self.check(frame, &e)?;
        self.frames[frame].preds.push(e);
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn frames(&self) -> &[FrameLists] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [FrameLists] {
        &mut self.frames
    }

    /// References and predictions exchanged.
    pub fn swapped(&self) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|f| FrameLists { refs: f.preds.clone(), preds: f.refs.clone() })
            .collect();
        Self { n_classes: self.n_classes, frames }
    }
}

fn distance_matrix(refs: &[[f64; 3]], preds: &[[f64; 3]]) -> Vec<f64> {
    let mut d = Vec::with_capacity(refs.len() * preds.len());
    for r in refs {
        for p in preds {
            d.push(angle_deg(r, p));
        }
    }
    d
}

fn class_doas(events: &[Event], class: usize) -> Vec<[f64; 3]> {
    events.iter().filter(|e| e.class == class).map(|e| e.doa).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub le_deg: f64,
    /// Set when no pair was matched and `le_deg` is the 180 degree placeholder.
    pub le_flagged: bool,
    pub lr_cd: f64,
    /// `None` for classes without matched pairs.
    pub per_class_le: Vec<Option<f64>>,
    /// `None` for classes without references.
    pub per_class_lr: Vec<Option<f64>>,
}

/// Class-dependent localization error and recall with per-frame Hungarian association.
pub fn class_dependent_loc(frames: &FrameEvents) -> LocalizationResult {
    let c_n = frames.n_classes;
    let mut le_sum = 0.0;
    let mut le_count = 0usize;
    let mut class_le_sum = vec![0.0; c_n];
    let mut class_le_count = vec![0usize; c_n];
    let mut matched = vec![0usize; c_n];
    let mut n_ref = vec![0usize; c_n];
    for f in &frames.frames {
        for c in 0..c_n {
            let r = class_doas(&f.refs, c);
            let p = class_doas(&f.preds, c);
            n_ref[c] += r.len();
            if r.is_empty() || p.is_empty() {
                continue;
            }
            let d = distance_matrix(&r, &p);
            let pairs = hungarian(&d, r.len(), p.len());
            let le = assignment_cost(&d, p.len(), &pairs) / pairs.len() as f64;
            le_sum += le;
            le_count += 1;
            class_le_sum[c] += le;
            class_le_count[c] += 1;
            matched[c] += pairs.len();
        }
    }
    let per_class_le: Vec<Option<f64>> = (0..c_n)
        .map(|c| (class_le_count[c] > 0).then(|| class_le_sum[c] / class_le_count[c] as f64))
        .collect();
    let per_class_lr: Vec<Option<f64>> =
        (0..c_n).map(|c| (n_ref[c] > 0).then(|| matched[c] as f64 / n_ref[c] as f64)).collect();
    let lrs: Vec<f64> = per_class_lr.iter().flatten().copied().collect();
    let lr_cd = if lrs.is_empty() { 0.0 } else { lrs.iter().sum::<f64>() / lrs.len() as f64 };
    let (le_deg, le_flagged) = if le_count == 0 {
        (UNMATCHED_LE_DEG, true)
    } else {
        (le_sum / le_count as f64, false)
    };
    LocalizationResult { le_deg, le_flagged, lr_cd, per_class_le, per_class_lr }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SedCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl SedCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_score(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SedResult {
    pub er: f64,
    pub f20: f64,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub counts: SedCounts,
    pub n_ref: usize,
    pub per_class: Vec<SedCounts>,
}

/// Mean direction of each track of `class` within a segment, renormalized.
fn segment_tracks(frames: &[FrameLists], class: usize, refs: bool) -> Vec<[f64; 3]> {
    let mut tracks: Vec<(usize, [f64; 3], [f64; 3])> = Vec::new();
    for f in frames {
        let events = if refs { &f.refs } else { &f.preds };
        for e in events.iter().filter(|e| e.class == class) {
            match tracks.iter_mut().find(|t| t.0 == e.track) {
                Some(t) => {
                    for i in 0..3 {
                        t.1[i] += e.doa[i];
                    }
                }
                None => tracks.push((e.track, e.doa, e.doa)),
            }
        }
    }
    tracks.sort_by_key(|t| t.0);
    tracks
        .into_iter()
        .map(|(_, sum, first)| {
            let n = (sum[0] * sum[0] + sum[1] * sum[1] + sum[2] * sum[2]).sqrt();
            if n < 1e-9 {
                first
            } else {
                [sum[0] / n, sum[1] / n, sum[2] / n]
            }
        })
        .collect()
}

/// Segment-based error rate and F-score with an angular threshold on true positives.
pub fn location_dependent_sed(frames: &FrameEvents, threshold_deg: f64, segment_frames: usize) -> Result<SedResult> {
    if segment_frames == 0 {
        return Err(Error::InvalidArgument("segment_frames must be at least 1".into()));
    }
    let c_n = frames.n_classes;
    let mut per_class = vec![SedCounts::default(); c_n];
    let (mut s_sum, mut d_sum, mut i_sum, mut n_ref) = (0, 0, 0, 0);
    for seg in frames.frames.chunks(segment_frames) {
        let (mut seg_fp, mut seg_fn) = (0usize, 0usize);
        for (c, counts) in per_class.iter_mut().enumerate() {
            let r = segment_tracks(seg, c, true);
            let p = segment_tracks(seg, c, false);
            n_ref += r.len();
            let d = distance_matrix(&r, &p);
            let pairs = hungarian(&d, r.len(), p.len());
            let tp = pairs.iter().filter(|&&(i, j)| d[i * p.len() + j] <= threshold_deg).count();
            let fp = p.len() - tp;
            let fn_ = r.len() - tp;
            counts.tp += tp;
            counts.fp += fp;
            counts.fn_ += fn_;
            seg_fp += fp;
            seg_fn += fn_;
        }
        s_sum += seg_fn.min(seg_fp);
        d_sum += seg_fn.saturating_sub(seg_fp);
        i_sum += seg_fp.saturating_sub(seg_fn);
    }
    let counts = per_class.iter().fold(SedCounts::default(), |a, c| SedCounts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
    });
    let er = (s_sum + d_sum + i_sum) as f64 / n_ref.max(1) as f64;
    Ok(SedResult {
        er,
        f20: counts.f_score(),
        substitutions: s_sum,
        deletions: d_sum,
        insertions: i_sum,
        counts,
        n_ref,
        per_class,
    })
}

/// Equal-weight aggregate of the four SELD metrics; 0 is perfect.
pub fn seld_score(er: f64, f20: f64, le_deg: f64, lr_cd: f64) -> f64 {
    (er + (1.0 - f20) + le_deg / 180.0 + (1.0 - lr_cd)) / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::unit_vector;
    use proptest::prelude::*;

    fn ev(class: usize, track: usize, az: f64, el: f64) -> Event {
        Event { class, track, doa: unit_vector(az, el) }
    }

    #[test]
    fn angular_distance_cases() {
        let x = [1.0, 0.0, 0.0];
        assert_eq!(angular_distance(&x, &x).unwrap(), 0.0);
        assert!((angular_distance(&x, &[0.0, 1.0, 0.0]).unwrap() - 90.0).abs() < 1e-12);
        assert!((angular_distance(&x, &[-1.0, 0.0, 0.0]).unwrap() - 180.0).abs() < 1e-12);
        let d = angular_distance(&unit_vector(10.0, 0.0), &unit_vector(30.0, 0.0)).unwrap();
        assert!((d - 20.0).abs() < 1e-9);
        assert!(angular_distance(&[2.0, 0.0, 0.0], &x).is_err());
        let u = unit_vector(37.0, 12.0);
        assert_eq!(angular_distance(&u, &u).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn matches_arccos(a1 in -180.0f64..180.0, e1 in -89.0f64..89.0, a2 in -180.0f64..180.0, e2 in -89.0f64..89.0) {
            let (u, v) = (unit_vector(a1, e1), unit_vector(a2, e2));
            let dot: f64 = (0..3).map(|i| u[i] * v[i]).sum();
            let reference = dot.clamp(-1.0, 1.0).acos().to_degrees();
            prop_assert!((angular_distance(&u, &v).unwrap() - reference).abs() < 1e-5);
        }
    }

    #[test]
    fn loc_single_pair_and_two_by_one() {
        let mut fe = FrameEvents::new(1, 1);
        fe.push_ref(0, ev(0, 0, 0.0, 0.0)).unwrap();
        fe.push_pred(0, ev(0, 0, 10.0, 0.0)).unwrap();
        let r = class_dependent_loc(&fe);
        assert!((r.le_deg - 10.0).abs() < 1e-9);
        assert_eq!(r.lr_cd, 1.0);

        let mut fe = FrameEvents::new(1, 1);
        fe.push_ref(0, ev(0, 0, 5.0, 0.0)).unwrap();
        fe.push_ref(0, ev(0, 1, 40.0, 0.0)).unwrap();
        fe.push_pred(0, ev(0, 0, 0.0, 0.0)).unwrap();
        let r = class_dependent_loc(&fe);
        assert!((r.le_deg - 5.0).abs() < 1e-9);
        assert_eq!(r.lr_cd, 0.5);
    }

    #[test]
    fn absent_classes_are_excluded() {
        let mut fe = FrameEvents::new(2, 3);
        fe.push_ref(0, ev(1, 0, 0.0, 0.0)).unwrap();
        fe.push_pred(0, ev(1, 0, 0.0, 0.0)).unwrap();
        let r = class_dependent_loc(&fe);
        assert_eq!(r.lr_cd, 1.0);
        assert_eq!(r.per_class_lr, vec![None, Some(1.0), None]);
    }

    #[test]
    fn sed_counting_example() {
        let mut fe = FrameEvents::new(10, 2);
        fe.push_ref(0, ev(0, 0, 0.0, 0.0)).unwrap();
        fe.push_ref(0, ev(0, 1, 90.0, 0.0)).unwrap();
        fe.push_pred(0, ev(0, 0, 5.0, 0.0)).unwrap();
        fe.push_pred(0, ev(1, 0, -90.0, 0.0)).unwrap();
        let r = location_dependent_sed(&fe, 20.0, 10).unwrap();
        assert_eq!((r.substitutions, r.deletions, r.insertions), (1, 0, 0));
        assert_eq!(r.er, 0.5);
        assert_eq!(r.f20, 0.5);
    }

    #[test]
    fn beyond_threshold_is_substitution() {
        let mut fe = FrameEvents::new(1, 1);
        fe.push_ref(0, ev(0, 0, 0.0, 0.0)).unwrap();
        fe.push_pred(0, ev(0, 0, 25.0, 0.0)).unwrap();
        let r = location_dependent_sed(&fe, 20.0, 1).unwrap();
        assert_eq!(r.counts, SedCounts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(r.substitutions, 1);
    }

    #[test]
    fn segment_uses_mean_direction() {
        // Reference track sweeps 0 to 30 degrees; the prediction sits at the mean.
        let mut fe = FrameEvents::new(10, 1);
        for l in 0..10 {
            fe.push_ref(l, ev(0, 0, l as f64 * 30.0 / 9.0, 0.0)).unwrap();
        }
        fe.push_pred(3, ev(0, 0, 15.0, 0.0)).unwrap();
        let r = location_dependent_sed(&fe, 1.0, 10).unwrap();
        assert_eq!(r.counts.tp, 1);
        let r = location_dependent_sed(&fe, 1.0, 1).unwrap();
        assert_eq!(r.counts.tp, 0);
    }

    #[test]
    fn zero_segment_rejected() {
        assert!(location_dependent_sed(&FrameEvents::new(1, 1), 20.0, 0).is_err());
    }

    #[test]
    fn seld_perfect_is_zero() {
        assert_eq!(seld_score(0.0, 1.0, 0.0, 1.0), 0.0);
    }

    fn arb_frames() -> impl Strategy<Value = FrameEvents> {
        let event = (0usize..3, 0usize..2, -180.0f64..180.0, -60.0f64..60.0);
        prop::collection::vec(
            (prop::collection::vec(event.clone(), 0..4), prop::collection::vec(event, 0..4)),
            1..25,
        )
        .prop_map(|frames| {
            let mut fe = FrameEvents::new(frames.len(), 3);
            for (l, (refs, preds)) in frames.into_iter().enumerate() {
                for (c, t, az, el) in refs {
                    fe.push_ref(l, ev(c, t, az, el)).unwrap();
                }
                for (c, t, az, el) in preds {
                    fe.push_pred(l, ev(c, t, az, el)).unwrap();
                }
            }
            fe
        })
    }

    proptest! {
        #[test]
        fn swap_symmetry(fe in arb_frames()) {
            let a = class_dependent_loc(&fe);
            let b = class_dependent_loc(&fe.swapped());
            prop_assert!((a.le_deg - b.le_deg).abs() < 1e-9);
            prop_assert_eq!(a.le_flagged, b.le_flagged);
            let sa = location_dependent_sed(&fe, 20.0, 10).unwrap();
            let sb = location_dependent_sed(&fe.swapped(), 20.0, 10).unwrap();
            prop_assert_eq!(sa.counts.tp, sb.counts.tp);
            prop_assert_eq!(sa.counts.fp, sb.counts.fn_);
            prop_assert_eq!(sa.counts.fn_, sb.counts.fp);
            prop_assert_eq!(sa.counts.precision(), sb.counts.recall());
            prop_assert_eq!(sa.f20, sb.f20);
        }

        #[test]
        fn ordering_invariance(fe in arb_frames()) {
            let mut rev = fe.clone();
            for f in rev.frames_mut() {
                f.refs.reverse();
                f.preds.reverse();
            }
            let a = class_dependent_loc(&fe);
            let b = class_dependent_loc(&rev);
            prop_assert!((a.le_deg - b.le_deg).abs() < 1e-9);
            prop_assert_eq!(a.lr_cd, b.lr_cd);
            let sa = location_dependent_sed(&fe, 20.0, 10).unwrap();
            let sb = location_dependent_sed(&rev, 20.0, 10).unwrap();
            prop_assert_eq!(sa, sb);
        }

        #[test]
        fn ranges(fe in arb_frames()) {
            let l = class_dependent_loc(&fe);
            let s = location_dependent_sed(&fe, 20.0, 10).unwrap();
            prop_assert!(s.er >= 0.0);
            prop_assert!((0.0..=1.0).contains(&s.f20));
            prop_assert!((0.0..=1.0).contains(&l.lr_cd));
            prop_assert!((0.0..=180.0).contains(&l.le_deg));
        }

        #[test]
        fn seld_monotone(
            er in 0.0f64..2.0, f in 0.0f64..1.0, le in 0.0f64..180.0, lr in 0.0f64..1.0, d in 0.0f64..0.5,
        ) {
            let base = seld_score(er, f, le, lr);
            prop_assert!(seld_score(er + d, f, le, lr) >= base);
            prop_assert!(seld_score(er, f, le + d * 100.0, lr) >= base);
            prop_assert!(seld_score(er, (f + d).min(1.0), le, lr) <= base);
            prop_assert!(seld_score(er, f, le, (lr + d).min(1.0)) <= base);
        }
    }
}
