use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::Context;
use swgformer::features::{read_annotations, LABEL_HOP_S};
use swgformer::model::accdoa_encode;
use swgformer::Tensor;

use super::files_with_extension;
use super::infer::{read_accdoa_csv, ACCDOA_SUFFIX};
use crate::failure::UsageError;
use crate::manifest::Manifest;
use crate::svg::trajectory_chart;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Directory of `<stem>.accdoa.csv` files written by `swg infer`.
    #[arg(long)]
    pub prediction: Option<PathBuf>,
    /// Directory of `<stem>.csv` reference annotations.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Receives `<stem>_class<c>.svg`.
    #[arg(long)]
    pub out: PathBuf,
    /// Classes to draw per clip; inferred from the predictions when omitted.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Label frames per clip for reference-only plots.
    #[arg(long, default_value_t = 50)]
    pub clip_frames: usize,
    /// Restrict to these clip stems.
    #[arg(long = "clip")]
    pub clips: Vec<String>,
}

fn series(t: &Tensor, class: usize) -> Vec<[f64; 3]> {
    let (l_n, c_n) = (t.shape()[0], t.shape()[1]);
    (0..l_n)
        .map(|l| {
            let o = (l * c_n + class) * 3;
            [t.data()[o], t.data()[o + 1], t.data()[o + 2]]
        })
        .collect()
}

pub fn run(a: &Args, m: &mut Manifest) -> anyhow::Result<()> {
    if a.prediction.is_none() && a.reference.is_none() {
        return Err(UsageError("give --prediction, --reference or both".into()).into());
    }
    let mut stems = BTreeSet::new();
    if let Some(dir) = &a.prediction {
        m.set("prediction", dir.display());
        for (stem, _) in files_with_extension(dir, ACCDOA_SUFFIX)? {
            stems.insert(stem);
        }
    }
    if let Some(dir) = &a.reference {
        m.set("reference", dir.display());
        if a.prediction.is_none() {
            for (stem, _) in files_with_extension(dir, "csv")? {
                stems.insert(stem);
            }
        }
    }
    if !a.clips.is_empty() {
        stems.retain(|s| a.clips.contains(s));
    }
    let mut written = 0;
    for stem in &stems {
        let pred = match &a.prediction {
            Some(dir) => Some(read_accdoa_csv(&dir.join(format!("{stem}.{ACCDOA_SUFFIX}")))?),
            None => None,
        };
        let (frames, classes) = match &pred {
            Some(p) => (p.shape()[0], a.classes.unwrap_or(p.shape()[1]).min(p.shape()[1])),
            None => (a.clip_frames, a.classes.unwrap_or(0)),
        };
        let reference = match &a.reference {
            Some(dir) => {
                let path = dir.join(format!("{stem}.csv"));
                let anns = read_annotations(&path).with_context(|| format!("reading {}", path.display()))?;
                let classes = classes.max(anns.iter().map(|e| e.class + 1).max().unwrap_or(0));
                Some(accdoa_encode(&anns, classes, frames).with_context(|| format!("encoding {}", path.display()))?)
            }
            None => None,
        };
        let classes = reference.as_ref().map_or(classes, |r| r.shape()[1].max(classes));
        for c in 0..classes {
            let p = pred.as_ref().filter(|p| c < p.shape()[1]).map(|p| series(p, c));
            let r = reference.as_ref().map(|r| series(r, c));
            let svg = trajectory_chart(&format!("{stem} class {c}"), LABEL_HOP_S, p.as_deref(), r.as_deref());
            let path = a.out.join(format!("{stem}_class{c}.svg"));
            std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
            written += 1;
        }
    }
    m.set("plots", written);
    say!("wrote {written} plots to {}", a.out.display());
    Ok(())
}
