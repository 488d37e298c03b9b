use std::fmt;

use super::{
    class_dependent_loc, location_dependent_sed, seld_score, FrameEvents, DEFAULT_SEGMENT_FRAMES,
    DEFAULT_THRESHOLD_DEG,
};
use crate::features::EventAnnotation;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    pub threshold_deg: f64,
    pub segment_frames: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { threshold_deg: DEFAULT_THRESHOLD_DEG, segment_frames: DEFAULT_SEGMENT_FRAMES }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: usize,
    pub f: f64,
    pub le_deg: Option<f64>,
    pub lr: Option<f64>,
    pub n_ref: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub er: f64,
    pub f20: f64,
    pub le_deg: f64,
    pub le_flagged: bool,
    pub lr_cd: f64,
    pub seld: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub per_class: Vec<ClassMetrics>,
}

pub fn evaluate(frames: &FrameEvents, cfg: &MetricsConfig) -> Result<MetricsReport> {
    let loc = class_dependent_loc(frames);
    let sed = location_dependent_sed(frames, cfg.threshold_deg, cfg.segment_frames)?;
    let per_class = (0..frames.n_classes())
        .map(|c| ClassMetrics {
            class: c,
            f: sed.per_class[c].f_score(),
            le_deg: loc.per_class_le[c],
            lr: loc.per_class_lr[c],
            n_ref: sed.per_class[c].tp + sed.per_class[c].fn_,
        })
        .collect();
    Ok(MetricsReport {
        er: sed.er,
        f20: sed.f20,
        le_deg: loc.le_deg,
        le_flagged: loc.le_flagged,
        lr_cd: loc.lr_cd,
        seld: seld_score(sed.er, sed.f20, loc.le_deg, loc.lr_cd),
        tp: sed.counts.tp,
        fp: sed.counts.fp,
        fn_: sed.counts.fn_,
        substitutions: sed.substitutions,
        deletions: sed.deletions,
        insertions: sed.insertions,
        per_class,
    })
}

impl MetricsReport {
    /// Evaluates annotation lists; the frame count covers both lists and `min_frames`.
    pub fn from_annotations(
        refs: &[EventAnnotation],
        preds: &[EventAnnotation],
        n_classes: usize,
        min_frames: usize,
        cfg: &MetricsConfig,
    ) -> Result<Self> {
        let n_frames = refs.iter().chain(preds).map(|a| a.frame + 1).max().unwrap_or(0).max(min_frames);
        let frames = FrameEvents::from_annotations(refs, preds, n_frames, n_classes)?;
        evaluate(&frames, cfg)
    }

    pub const CSV_HEADER: &'static str = "ER,F20,LE,LR,SELD,LE_flagged,TP,FP,FN,S,D,I";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{},{}",
            self.er,
            self.f20,
            self.le_deg,
            self.lr_cd,
            self.seld,
            self.le_flagged,
            self.tp,
            self.fp,
            self.fn_,
            self.substitutions,
            self.deletions,
            self.insertions
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n{}\n\nclass,F,LE,LR,n_ref\n", Self::CSV_HEADER, self.csv_row());
        for c in &self.per_class {
            out.push_str(&format!(
                "{},{:.6},{},{},{}\n",
                c.class,
                c.f,
                c.le_deg.map(|v| format!("{v:.6}")).unwrap_or_default(),
                c.lr.map(|v| format!("{v:.6}")).unwrap_or_default(),
                c.n_ref
            ));
        }
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ER    {:.4}", self.er)?;
        writeln!(f, "F20   {:.4}", self.f20)?;
        let flag = if self.le_flagged { "  (no matched pairs)" } else { "" };
        writeln!(f, "LE    {:.2} deg{flag}", self.le_deg)?;
        writeln!(f, "LR    {:.4}", self.lr_cd)?;
        writeln!(f, "SELD  {:.4}", self.seld)?;
        writeln!(f)?;
        writeln!(f, "{:>5} {:>8} {:>9} {:>8} {:>6}", "class", "F", "LE", "LR", "n_ref")?;
        for c in &self.per_class {
            let le = c.le_deg.map(|v| format!("{v:.2}")).unwrap_or_else(|| "180.00*".into());
            let lr = c.lr.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            writeln!(f, "{:>5} {:>8.4} {:>9} {:>8} {:>6}", c.class, c.f, le, lr, c.n_ref)?;
        }
        Ok(())
    }
}
