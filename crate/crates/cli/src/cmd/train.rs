use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use swgformer::model::{save_checkpoint, train, Dataset, RunConfig, SwgFormer};

use crate::failure::UsageError;
use crate::manifest::Manifest;

pub const TRAIN_LOG: &str = "train_log.csv";

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Directory of `<stem>.swgt` feature files.
    #[arg(long)]
    pub features: PathBuf,
    /// Directory of `<stem>.csv` annotations.
    #[arg(long)]
    pub labels: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    /// key=value run configuration; defaults to the desk preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base preset when no config file is given.
    #[arg(long, default_value = "desk", value_parser = ["desk", "paper"])]
    pub preset: String,
    /// Hold out the last N clips (sorted by name) for per-epoch validation.
    #[arg(long, default_value_t = 0)]
    pub val: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Sets both the initialization and the shuffling seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Args {
    pub fn run_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RunConfig::parse(&text).map_err(|e| UsageError(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::parse(&format!("preset={}", self.preset)).map_err(|e| UsageError(e.to_string()))?,
        };
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.max_steps {
            cfg.train.max_steps = Some(v);
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = self.seed {
            cfg.model.seed = v;
            cfg.train.seed = v;
        }
        cfg.model.validate().map_err(|e| UsageError(e.to_string()))?;
        cfg.train.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn run(a: &Args, m: &mut Manifest) -> anyhow::Result<()> {
    let cfg = a.run_config()?;
    m.seed(cfg.train.seed);
    m.set("features", a.features.display());
    m.set("labels", a.labels.display());
    m.set("val", a.val);
    m.config(cfg.to_text());
    let (model, mut store) = SwgFormer::build(cfg.model.clone())?;
    let data = Dataset::load_dir(&a.features, &a.labels, &model).context("loading training data")?;
    if data.len() <= a.val {
        return Err(UsageError(format!("--val {} leaves no training clips out of {}", a.val, data.len())).into());
    }
    let (train_set, val_set) = data.split(a.val);
    m.set("train_clips", train_set.len());
    m.set("val_clips", val_set.len());
    let log_path = a.out.join(TRAIN_LOG);
    let file = File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let mut log = BufWriter::new(file);
    let val = (!val_set.is_empty()).then_some(&val_set);
    let outcome = train(&model, &mut store, &train_set, val, &cfg.train, Some(&mut log)).context("training")?;
    log.flush().with_context(|| format!("writing {}", log_path.display()))?;
    save_checkpoint(&a.out, &cfg, &store).context("saving checkpoint")?;
    m.set("steps", outcome.steps);
    if let Some(last) = outcome.epochs.last() {
        m.set("final_train_loss", format!("{:.6}", last.train_loss));
        m.set("final_seld", format!("{:.6}", last.report.seld));
        say!("{}", last.report);
    }
    say!("{} steps; checkpoint in {}", outcome.steps, a.out.display());
    Ok(())
}
