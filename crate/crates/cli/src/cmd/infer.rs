use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use swgformer::features::{write_annotations, FeatureTensor};
use swgformer::model::{accdoa_decode, detections_to_annotations, load_checkpoint, predict_dataset, Dataset};
use swgformer::Tensor;

use super::files_with_extension;
use crate::manifest::Manifest;

pub const ACCDOA_SUFFIX: &str = "accdoa.csv";
pub const ACCDOA_HEADER: &str = "frame,class,x,y,z";
pub const KNN_HEADER: &str = "block,chunk,vertex_id,rank,neighbor_id,distance";

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Checkpoint directory written by `swg train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of `<stem>.swgt` feature files.
    #[arg(long)]
    pub features: PathBuf,
    /// Receives `<stem>.csv` (decoded events) and `<stem>.accdoa.csv` (raw output).
    #[arg(long)]
    pub out: PathBuf,
    /// Activity threshold on the ACCDOA vector norm; defaults to the checkpoint's.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Also write every block's neighbor tables to `<stem>.knn.csv`.
    #[arg(long)]
    pub dump_knn: bool,
}

/// Raw `[L, C, 3]` output as `frame,class,x,y,z` rows.
pub fn accdoa_csv(y: &Tensor) -> String {
    let (l_n, c_n) = (y.shape()[0], y.shape()[1]);
    let mut s = format!("{ACCDOA_HEADER}\n");
    for l in 0..l_n {
        for c in 0..c_n {
            let v = &y.data()[(l * c_n + c) * 3..(l * c_n + c) * 3 + 3];
            let _ = writeln!(s, "{l},{c},{},{},{}", v[0], v[1], v[2]);
        }
    }
    s
}

pub fn read_accdoa_csv(path: &Path) -> anyhow::Result<Tensor> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}:{}", path.display(), i + 2))?;
        let bad = || anyhow::anyhow!("{}:{}: expected frame,class,x,y,z", path.display(), i + 2);
        if rec.len() != 5 {
            return Err(bad());
        }
        let l: usize = rec[0].trim().parse().map_err(|_| bad())?;
        let c: usize = rec[1].trim().parse().map_err(|_| bad())?;
        let mut v = [0.0; 3];
        for (a, x) in v.iter_mut().enumerate() {
            *x = rec[2 + a].trim().parse().map_err(|_| bad())?;
        }
        rows.push((l, c, v));
    }
    let l_n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let c_n = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != l_n * c_n {
        anyhow::bail!("{}: {} rows do not cover {l_n} frames x {c_n} classes", path.display(), rows.len());
    }
    let mut data = vec![0.0; l_n * c_n * 3];
    for (l, c, v) in rows {
        data[(l * c_n + c) * 3..(l * c_n + c) * 3 + 3].copy_from_slice(&v);
    }
    Ok(Tensor::new(vec![l_n, c_n, 3], data)?)
}

pub fn run(a: &Args, m: &mut Manifest) -> anyhow::Result<()> {
    let (model, store, cfg) = load_checkpoint(&a.checkpoint)
        .with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let threshold = a.threshold.unwrap_or(cfg.train.threshold);
    m.set("checkpoint", a.checkpoint.display());
    m.set("features", a.features.display());
    m.set("threshold", threshold);
    m.config(cfg.to_text());
    let files = files_with_extension(&a.features, "swgt")?;
    let samples = files
        .par_iter()
        .map(|(stem, p)| -> anyhow::Result<_> {
            let f = FeatureTensor::load(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(Dataset::sample(stem, &f.features, Vec::new(), &model)?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let data = Dataset { samples };
    let outputs = predict_dataset(&model, &store, &data, a.batch_size.max(1)).context("running the model")?;
    data.samples.par_iter().zip(&outputs).try_for_each(|(s, y)| -> anyhow::Result<()> {
        let events = detections_to_annotations(&accdoa_decode(y, threshold)?);
        let csv = a.out.join(format!("{}.csv", s.name));
        write_annotations(&csv, &events).with_context(|| format!("writing {}", csv.display()))?;
        let raw = a.out.join(format!("{}.{ACCDOA_SUFFIX}", s.name));
        std::fs::write(&raw, accdoa_csv(y)).with_context(|| format!("writing {}", raw.display()))?;
        if a.dump_knn {
            let path = a.out.join(format!("{}.knn.csv", s.name));
            let mut text = format!("{KNN_HEADER}\n");
            for (b, chunks) in model.neighbor_tables(&store, &s.features)?.iter().enumerate() {
                for (c, table) in chunks.iter().enumerate() {
                    for (i, r, j, d) in table.rows() {
                        let _ = writeln!(text, "{b},{c},{i},{r},{j},{d}");
                    }
                }
            }
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    })?;
    m.set("clips", data.len());
    say!("wrote predictions for {} clips to {}", data.len(), a.out.display());
    Ok(())
}
