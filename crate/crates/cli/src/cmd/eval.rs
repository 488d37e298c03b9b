use std::path::{Path, PathBuf};

use anyhow::Context;
use swgformer::features::{read_annotations, EventAnnotation};
use swgformer::metrics::{MetricsConfig, MetricsReport, DEFAULT_SEGMENT_FRAMES, DEFAULT_THRESHOLD_DEG};

use super::files_with_extension;
use crate::failure::UsageError;
use crate::manifest::Manifest;

pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.txt";

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Reference annotation CSV, or a directory of them.
    #[arg(long)]
    pub reference: PathBuf,
    /// Predicted annotation CSV, or a directory holding a `<stem>.csv` for every reference.
    #[arg(long)]
    pub prediction: PathBuf,
    /// Receives `metrics.csv` and `report.txt`.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of classes; inferred from the largest class index when omitted.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Label frames per clip, used to lay clips end to end.
    #[arg(long, default_value_t = 50)]
    pub clip_frames: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_DEG)]
    pub threshold_deg: f64,
    #[arg(long, default_value_t = DEFAULT_SEGMENT_FRAMES)]
    pub segment_frames: usize,
}

fn read(path: &Path) -> anyhow::Result<Vec<EventAnnotation>> {
    read_annotations(path).with_context(|| format!("reading {}", path.display()))
}

/// Reference/prediction pairs, with frames shifted so clips follow one another.
fn load_pairs(a: &Args) -> anyhow::Result<(Vec<EventAnnotation>, Vec<EventAnnotation>, usize)> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if a.reference.is_dir() {
        if !a.prediction.is_dir() {
            return Err(UsageError("--reference is a directory but --prediction is not".into()).into());
        }
        files_with_extension(&a.reference, "csv")?
            .into_iter()
            .map(|(stem, r)| {
                let p = a.prediction.join(format!("{stem}.csv"));
                (stem, r, p)
            })
            .collect()
    } else {
        vec![("clip".into(), a.reference.clone(), a.prediction.clone())]
    };
    let (mut refs, mut preds) = (Vec::new(), Vec::new());
    for (i, (_, r, p)) in pairs.iter().enumerate() {
        let offset = i * a.clip_frames;
        for (src, dst) in [(r, &mut refs), (p, &mut preds)] {
            for e in read(src)? {
                if e.frame >= a.clip_frames {
                    anyhow::bail!("{}: frame {} outside --clip-frames {}", src.display(), e.frame, a.clip_frames);
                }
                dst.push(EventAnnotation { frame: e.frame + offset, ..e });
            }
        }
    }
    Ok((refs, preds, pairs.len()))
}

pub fn run(a: &Args, m: &mut Manifest) -> anyhow::Result<()> {
    if a.clip_frames == 0 || a.segment_frames == 0 {
        return Err(UsageError("--clip-frames and --segment-frames must be positive".into()).into());
    }
    m.set("reference", a.reference.display());
    m.set("prediction", a.prediction.display());
    m.set("threshold_deg", a.threshold_deg);
    m.set("segment_frames", a.segment_frames);
    let (refs, preds, clips) = load_pairs(a)?;
    let inferred = refs.iter().chain(&preds).map(|e| e.class + 1).max().unwrap_or(1);
    let classes = a.classes.unwrap_or(inferred);
    if classes < inferred {
        anyhow::bail!("class index {} found but --classes is {classes}", inferred - 1);
    }
    m.set("classes", classes);
    m.set("clips", clips);
    let cfg = MetricsConfig { threshold_deg: a.threshold_deg, segment_frames: a.segment_frames };
    let report = MetricsReport::from_annotations(&refs, &preds, classes, clips.max(1) * a.clip_frames, &cfg)
        .context("computing metrics")?;
    let csv = a.out.join(METRICS_FILE);
    std::fs::write(&csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    let txt = a.out.join(REPORT_FILE);
    std::fs::write(&txt, report.to_string()).with_context(|| format!("writing {}", txt.display()))?;
    m.set("seld", format!("{:.6}", report.seld));
    say!("{report}");
    Ok(())
}
