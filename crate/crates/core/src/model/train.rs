use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::accdoa::{accdoa_decode, accdoa_encode, accdoa_loss, detections_to_annotations};
use super::config::TrainConfig;
use super::net::SwgFormer;
use crate::features::{read_annotations, EventAnnotation, FeatureTensor};
use crate::metrics::{MetricsConfig, MetricsReport};
use crate::numerics::{Adam, Graph, Mode, ParamStore};
use crate::{Error, Result, Tensor};

/// One clip: features `[T, F, 7]` fitted to the model's frame count and its ACCDOA target.
#[derive(Clone, Debug)]
pub struct Sample {
    pub name: String,
    pub features: Tensor,
    pub target: Tensor,
    pub annotations: Vec<EventAnnotation>,
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn sample(name: &str, features: &FeatureTensor, annotations: Vec<EventAnnotation>, model: &SwgFormer) -> Result<Sample> {
        let [t, f, _] = model.input_shape();
        if features.bands() != f {
            return Err(Error::shape("dataset", format!("{name}: {} bands, model expects {f}", features.bands())));
        }
        let features = features.fit_frames(t)?.into_tensor();
        let target = accdoa_encode(&annotations, model.cfg.n_classes, model.cfg.label_frames)
            .map_err(|e| Error::InvalidArgument(format!("{name}: {e}")))?;
        Ok(Sample { name: name.to_string(), features, target, annotations })
    }

    /// Pairs every `<stem>.swgt` feature file in `features_dir` with `<stem>.csv` in `labels_dir`.
    pub fn load_dir(features_dir: &Path, labels_dir: &Path, model: &SwgFormer) -> Result<Dataset> {
        let mut stems: Vec<(String, PathBuf)> = std::fs::read_dir(features_dir)
            .map_err(|e| Error::io(features_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "swgt"))
            .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p)))
            .collect();
        stems.sort();
        let samples = stems
            .par_iter()
            .map(|(stem, path)| {
                let file = FeatureTensor::load(path)?;
                let labels = read_annotations(&labels_dir.join(format!("{stem}.csv")))?;
                Self::sample(stem, &file.features, labels, model)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The last `n_val` samples become the second set.
    pub fn split(mut self, n_val: usize) -> (Dataset, Dataset) {
        let cut = self.samples.len().saturating_sub(n_val);
        let val = self.samples.split_off(cut);
        (self, Dataset { samples: val })
    }

    /// Stacked features `[B, T, F, 7]` and targets `[B, L, C, 3]`.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor, Tensor)> {
        let first = self.samples.get(*idx.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?)
            .ok_or_else(|| Error::InvalidArgument("batch index out of range".into()))?;
        let stack = |get: &dyn Fn(&Sample) -> &Tensor| -> Result<Tensor> {
            let mut shape = vec![idx.len()];
            shape.extend_from_slice(get(first).shape());
            let mut data = Vec::with_capacity(shape.iter().product());
            for &i in idx {
                let s = self.samples.get(i).ok_or_else(|| Error::InvalidArgument("batch index out of range".into()))?;
                data.extend_from_slice(get(s).data());
            }
            Tensor::new(shape, data)
        };
        Ok((stack(&|s| &s.features)?, stack(&|s| &s.target)?))
    }
}

/// Eval-mode forward on stacked features; returns `[B, L, C, 3]`.
pub fn predict(model: &SwgFormer, store: &ParamStore, features: &Tensor) -> Result<Tensor> {
    let g = Graph::new(Mode::Eval, 0);
    let y = model.forward(&g, store, g.constant(features.clone()))?;
    let out = g.value(y).clone();
    Ok(out)
}

/// Raw ACCDOA output of every sample, computed in parallel batches.
pub fn predict_dataset(model: &SwgFormer, store: &ParamStore, data: &Dataset, batch_size: usize) -> Result<Vec<Tensor>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let per_batch = idx
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let (x, _) = data.batch(chunk)?;
            let y = predict(model, store, &x)?;
            let per = y.len() / chunk.len();
            let shape = y.shape()[1..].to_vec();
            chunk
                .iter()
                .enumerate()
                .map(|(j, _)| Tensor::new(shape.clone(), y.data()[j * per..(j + 1) * per].to_vec()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_batch.into_iter().flatten().collect())
}

/// Metrics over all clips, concatenated along the frame axis.
pub fn evaluate_dataset(
    model: &SwgFormer,
    store: &ParamStore,
    data: &Dataset,
    threshold: f64,
    batch_size: usize,
) -> Result<MetricsReport> {
    let outputs = predict_dataset(model, store, data, batch_size)?;
    let l_n = model.cfg.label_frames;
    let mut refs = Vec::new();
    let mut preds = Vec::new();
    for (i, (s, y)) in data.samples.iter().zip(&outputs).enumerate() {
        let offset = i * l_n;
        refs.extend(s.annotations.iter().map(|a| EventAnnotation { frame: a.frame + offset, ..*a }));
        let dets = detections_to_annotations(&accdoa_decode(y, threshold)?);
        preds.extend(dets.into_iter().map(|a| EventAnnotation { frame: a.frame + offset, ..a }));
    }
    MetricsReport::from_annotations(&refs, &preds, model.cfg.n_classes, data.len() * l_n, &MetricsConfig::default())
}

pub const LOG_HEADER: &str = "epoch,train_loss,ER,F20,LE,LR,SELD";

#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub report: MetricsReport,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        let r = &self.report;
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.epoch, self.train_loss, r.er, r.f20, r.le_deg, r.lr_cd, r.seld
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOutcome {
    pub steps: usize,
    /// Loss of every optimizer step.
    pub losses: Vec<f64>,
    pub epochs: Vec<EpochLog>,
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step as u64)
}

fn grad_diagnostics(store: &ParamStore) -> String {
    let mut norms: Vec<(f64, &str)> = store
        .params()
        .iter()
        .map(|p| (p.grad.data().iter().map(|g| g * g).sum::<f64>().sqrt(), p.name.as_str()))
        .collect();
    norms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top: Vec<String> = norms.iter().take(5).map(|(n, name)| format!("{name}={n:.3e}")).collect();
    format!("grad norm {:.3e}; largest: {}", store.grad_norm(), top.join(", "))
}

/// Adam on shuffled mini-batches. After each epoch the model is scored on `val`
/// (or on `train` when no validation set is given) and a row is appended to `log`.
pub fn train(
    model: &SwgFormer,
    store: &mut ParamStore,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut adam = Adam::new(store, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = TrainOutcome::default();
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "{LOG_HEADER}").map_err(|e| Error::io(Path::new("<train log>"), e))?;
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| out.steps >= m) {
                break;
            }
            let (x, y) = train.batch(chunk)?;
            store.zero_grad();
            let g = Graph::new(Mode::Train, step_seed(cfg.seed, out.steps));
            let pred = model.forward(&g, store, g.constant(x))?;
            let loss = accdoa_loss(&g, pred, g.constant(y))?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss {value} at step {} (epoch {epoch}, lr {}); {}",
                    out.steps,
                    cfg.lr,
                    grad_diagnostics(store)
                )));
            }
            g.backward(loss, store)?;
            if !store.grad_norm().is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient at step {} (epoch {epoch}, lr {}); {}",
                    out.steps,
                    cfg.lr,
                    grad_diagnostics(store)
                )));
            }
            g.apply_buffer_updates(store);
            adam.step(store);
            out.losses.push(value);
            out.steps += 1;
            sum += value * chunk.len() as f64;
            count += chunk.len();
        }
        if count == 0 {
            break 'epochs;
        }
        let report = evaluate_dataset(model, store, val.unwrap_or(train), cfg.threshold, cfg.batch_size)?;
        let entry = EpochLog { epoch, train_loss: sum / count as f64, report };
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}", entry.csv_row()).map_err(|e| Error::io(Path::new("<train log>"), e))?;
        }
        out.epochs.push(entry);
    }
    Ok(out)
}
