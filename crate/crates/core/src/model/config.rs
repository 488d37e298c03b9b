use std::fmt::Write as _;
use std::path::Path;

use crate::blocks::{format_order, parse_order, BlockModule, SwgBlockConfig, DEFAULT_FF_RATIO, DEFAULT_HEADS, MODULE_ORDERS};
use crate::features::FEATURE_CHANNELS;
use crate::graph::{check_window, AggregatorKind, DEFAULT_FFN_RATIO};
use crate::{Error, Result};

/// Window sizes per block for the named groups A to H.
pub const WINDOW_GROUPS: [(&str, &[usize]); 8] = [
    ("A", &[5, 25, 25, 25, 25]),
    ("B", &[5, 5, 25, 25, 25]),
    ("C", &[5, 5, 5, 25, 25]),
    ("D", &[25, 25, 25, 5, 5]),
    ("E", &[1, 1, 1, 1, 1]),
    ("F", &[5, 5, 5, 5, 5]),
    ("G", &[25, 25, 25, 25, 25]),
    ("H", &[5, 5]),
];

pub fn window_group(name: &str) -> Option<Vec<usize>> {
    WINDOW_GROUPS.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, w)| w.to_vec())
}

/// Letter name or comma-separated window list.
pub fn parse_window_group(s: &str) -> Result<Vec<usize>> {
    if let Some(w) = window_group(s.trim()) {
        return Ok(w);
    }
    parse_list(s).map_err(|_| Error::InvalidArgument(format!("unknown window group '{s}'")))
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("'{p}' is not a non-negative integer"))))
        .collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Input frames, kept through the block stack.
    pub frames: usize,
    pub n_mels: usize,
    pub n_msconv: usize,
    pub msconv_channels: Vec<usize>,
    pub n_blocks: usize,
    pub window_group: Vec<usize>,
    pub k: usize,
    pub aggregator: AggregatorKind,
    pub n_heads: usize,
    pub ff_ratio: usize,
    pub graph_ffn_ratio: usize,
    pub dropout: f64,
    pub module_order: Vec<BlockModule>,
    pub n_classes: usize,
    pub label_frames: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ModelConfig {
    /// Full-size network: 4 MS-Conv, 5 blocks with window group B, k 24, d_model 512.
    pub fn paper() -> Self {
        ModelConfig {
            frames: 250,
            n_mels: 64,
            n_msconv: 4,
            msconv_channels: vec![64, 128, 128, 128],
            n_blocks: 5,
            window_group: window_group("B").unwrap(),
            k: 24,
            aggregator: AggregatorKind::Conv2dAgg,
            n_heads: DEFAULT_HEADS,
            ff_ratio: DEFAULT_FF_RATIO,
            graph_ffn_ratio: DEFAULT_FFN_RATIO,
            dropout: 0.05,
            module_order: MODULE_ORDERS[0].to_vec(),
            n_classes: 13,
            label_frames: 50,
            seed: 0,
        }
    }

    /// Desk-scale network: 2 blocks, d_model 64, 4 classes, windows [5, 25].
    pub fn desk() -> Self {
        ModelConfig {
            msconv_channels: vec![4, 8, 8, 16],
            n_blocks: 2,
            window_group: vec![5, 25],
            n_classes: 4,
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            _ => Err(Error::InvalidArgument(format!("unknown preset '{name}' (expected paper or desk)"))),
        }
    }

    pub fn out_bands(&self) -> usize {
        self.n_mels >> self.n_msconv
    }

    pub fn out_channels(&self) -> usize {
        self.msconv_channels.last().copied().unwrap_or(FEATURE_CHANNELS)
    }

    /// Width of the block stack: post-MS-Conv bands times channels.
    pub fn d_model(&self) -> usize {
        self.out_bands() * self.out_channels()
    }

    pub fn time_pool(&self) -> usize {
        self.frames / self.label_frames
    }

    pub fn block_config(&self, block: usize) -> SwgBlockConfig {
        SwgBlockConfig {
            window: self.window_group[block],
            k: self.k,
            aggregator: self.aggregator,
            d_model: self.d_model(),
            n_heads: self.n_heads,
            ff_ratio: self.ff_ratio,
            graph_ffn_ratio: self.graph_ffn_ratio,
            dropout: self.dropout,
            module_order: self.module_order.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.msconv_channels.len() != self.n_msconv {
            return Err(Error::InvalidArgument(format!(
                "msconv_channels has {} entries but n_msconv is {}",
                self.msconv_channels.len(),
                self.n_msconv
            )));
        }
        if self.msconv_channels.contains(&0) {
            return Err(Error::InvalidArgument("MS-Conv channel counts must be positive".into()));
        }
        if self.n_msconv >= usize::BITS as usize || self.n_mels % (1 << self.n_msconv) != 0 || self.out_bands() == 0 {
            return Err(Error::InvalidArgument(format!(
                "n_mels {} is not divisible by 2^{} (one halving per MS-Conv)",
                self.n_mels, self.n_msconv
            )));
        }
        if self.window_group.len() != self.n_blocks {
            return Err(Error::InvalidArgument(format!(
                "window group length mismatch: {} windows [{}] for {} blocks",
                self.window_group.len(),
                join(&self.window_group),
                self.n_blocks
            )));
        }
        for &w in &self.window_group {
            check_window(self.frames, w)?;
        }
        if self.label_frames == 0 || self.frames % self.label_frames != 0 {
            return Err(Error::InvalidArgument(format!(
                "label frames {} do not divide input frames {}",
                self.label_frames, self.frames
            )));
        }
        if self.n_classes == 0 {
            return Err(Error::InvalidArgument("n_classes must be positive".into()));
        }
        if self.d_model() < 2 {
            return Err(Error::InvalidArgument(format!("d_model {} is too small", self.d_model())));
        }
        for b in 0..self.n_blocks {
            self.block_config(b).validate()?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidArgument(format!("invalid {what} '{value}' for key {key}"));
        let uint = || value.parse::<usize>().map_err(|_| bad("integer"));
        match key {
            "frames" => self.frames = uint()?,
            "n_mels" => self.n_mels = uint()?,
            "n_msconv" => self.n_msconv = uint()?,
            "msconv_channels" => self.msconv_channels = parse_list(value)?,
            "n_blocks" => self.n_blocks = uint()?,
            "window_group" => self.window_group = parse_window_group(value)?,
            "k" => self.k = uint()?,
            "aggregator" => self.aggregator = value.parse()?,
            "n_heads" => self.n_heads = uint()?,
            "ff_ratio" => self.ff_ratio = uint()?,
            "graph_ffn_ratio" => self.graph_ffn_ratio = uint()?,
            "dropout" => self.dropout = value.parse().map_err(|_| bad("number"))?,
            "module_order" => self.module_order = parse_order(value)?,
            "n_classes" => self.n_classes = uint()?,
            "label_frames" => self.label_frames = uint()?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames={}", self.frames);
        let _ = writeln!(s, "n_mels={}", self.n_mels);
        let _ = writeln!(s, "n_msconv={}", self.n_msconv);
        let _ = writeln!(s, "msconv_channels={}", join(&self.msconv_channels));
        let _ = writeln!(s, "n_blocks={}", self.n_blocks);
        let _ = writeln!(s, "window_group={}", join(&self.window_group));
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "aggregator={}", self.aggregator);
        let _ = writeln!(s, "n_heads={}", self.n_heads);
        let _ = writeln!(s, "ff_ratio={}", self.ff_ratio);
        let _ = writeln!(s, "graph_ffn_ratio={}", self.graph_ffn_ratio);
        let _ = writeln!(s, "dropout={}", self.dropout);
        let _ = writeln!(s, "module_order={}", format_order(&self.module_order));
        let _ = writeln!(s, "n_classes={}", self.n_classes);
        let _ = writeln!(s, "label_frames={}", self.label_frames);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1e-4, batch_size: 32, epochs: 100, max_steps: None, threshold: 0.5, seed: 0 }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig { lr: 1e-3, batch_size: 8, epochs: 10, max_steps: Some(2000), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 3f64.sqrt()) {
            return Err(Error::InvalidArgument(format!("threshold {} outside (0, sqrt 3)", self.threshold)));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Option<Result<()>> {
        let bad = || Error::InvalidArgument(format!("invalid value '{value}' for key {key}"));
        let r = match key {
            "lr" => value.parse().map(|v| self.lr = v).map_err(|_| bad()),
            "batch_size" => value.parse().map(|v| self.batch_size = v).map_err(|_| bad()),
            "epochs" => value.parse().map(|v| self.epochs = v).map_err(|_| bad()),
            "max_steps" => match value {
                "none" => {
                    self.max_steps = None;
                    Ok(())
                }
                _ => value.parse().map(|v| self.max_steps = Some(v)).map_err(|_| bad()),
            },
            "threshold" => value.parse().map(|v| self.threshold = v).map_err(|_| bad()),
            "train_seed" => value.parse().map(|v| self.seed = v).map_err(|_| bad()),
            _ => return None,
        };
        Some(r)
    }

    pub fn to_text(&self) -> String {
        let steps = self.max_steps.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
        format!(
            "lr={}\nbatch_size={}\nepochs={}\nmax_steps={steps}\nthreshold={}\ntrain_seed={}\n",
            self.lr, self.batch_size, self.epochs, self.threshold, self.seed
        )
    }
}

/// Model and training settings read from one key=value file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn desk() -> Self {
        RunConfig { model: ModelConfig::desk(), train: TrainConfig::desk() }
    }

    /// `preset=paper|desk` (anywhere in the file) selects the base; other keys override it.
    /// Blank lines and `#` comments are ignored; unknown or repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if pairs.iter().any(|(p, _)| p == &k) {
                return Err(Error::InvalidArgument(format!("line {}: key '{k}' repeated", i + 1)));
            }
            pairs.push((k, v));
        }
        let mut cfg = match pairs.iter().find(|(k, _)| *k == "preset") {
            Some((_, "desk")) => Self::desk(),
            Some((_, name)) => RunConfig { model: ModelConfig::preset(name)?, train: TrainConfig::default() },
            None => RunConfig { model: ModelConfig::paper(), train: TrainConfig::default() },
        };
        for (k, v) in pairs {
            if k == "preset" {
                continue;
            }
            match cfg.train.set(k, v) {
                Some(r) => r?,
                None => cfg.model.set(k, v)?,
            }
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        format!("{}{}", self.model.to_text(), self.train.to_text())
    }
}
