//! Checkpoint directory: `params.swgt` (every tensor, concatenated), `manifest.txt`
//! (one `name shape` line per tensor, same order) and `config.txt` (the run config).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::RunConfig;
use super::net::SwgFormer;
use crate::numerics::ParamStore;
use crate::tensor::{read_swgt_file, write_swgt_file};
use crate::{Error, Result, Tensor};

pub const PARAMS_FILE: &str = "params.swgt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_FILE: &str = "config.txt";

pub fn save_checkpoint(dir: &Path, cfg: &RunConfig, store: &ParamStore) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let named = store.tensors();
    let tensors: Vec<Tensor> = named.iter().map(|(_, t)| (*t).clone()).collect();
    write_swgt_file(&dir.join(PARAMS_FILE), &tensors)?;
    let mut manifest = String::new();
    for (name, t) in &named {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(manifest, "{name} {}", dims.join("x"));
    }
    let mp = dir.join(MANIFEST_FILE);
    fs::write(&mp, manifest).map_err(|e| Error::io(&mp, e))?;
    let cp = dir.join(CONFIG_FILE);
    fs::write(&cp, cfg.to_text()).map_err(|e| Error::io(&cp, e))
}

/// Rebuilds the model from the stored config and loads every tensor by name.
pub fn load_checkpoint(dir: &Path) -> Result<(SwgFormer, ParamStore, RunConfig)> {
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let (model, mut store) = SwgFormer::build(cfg.model.clone())?;
    let mp = dir.join(MANIFEST_FILE);
    let manifest = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let names: Vec<String> = manifest
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().next().unwrap_or("").to_string())
        .collect();
    let tensors = read_swgt_file(&dir.join(PARAMS_FILE))?;
    if names.len() != tensors.len() {
        return Err(Error::Format {
            what: "checkpoint",
            detail: format!("manifest lists {} tensors, {PARAMS_FILE} holds {}", names.len(), tensors.len()),
        });
    }
    let named: Vec<(String, Tensor)> = names.into_iter().zip(tensors).collect();
    store.load_tensors(&named)?;
    Ok((model, store, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::train::predict;
    use rand::SeedableRng;

    fn tiny() -> RunConfig {
        RunConfig::parse(
            "frames=50\nn_mels=16\nn_msconv=1\nmsconv_channels=4\nn_blocks=1\nwindow_group=5\nk=6\nn_heads=4\nn_classes=2\nlabel_frames=10\nseed=7\n",
        )
        .unwrap()
    }

    #[test]
    fn round_trip_restores_values() {
        let cfg = tiny();
        let (model, mut store) = SwgFormer::build(cfg.model.clone()).unwrap();
        // Move the values off their seeded init so loading is observable.
        for p in store.params_mut() {
            let v = p.value.map(|x| (x + 0.125) as f32 as f64);
            p.value = v;
        }
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &cfg, &store).unwrap();
        let (loaded_model, loaded, back) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, cfg);
        for (a, b) in store.tensors().iter().zip(loaded.tensors()) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.data(), b.1.data());
        }
        let x = Tensor::randn(&[1, 50, 16, 7], 1.0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        assert_eq!(predict(&model, &store, &x).unwrap().data(), predict(&loaded_model, &loaded, &x).unwrap().data());
        let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(manifest.starts_with("msconv0.dual3.conv_a.weight 4x7x3x3\n"), "{manifest}");
    }

    #[test]
    fn mismatched_manifest_rejected() {
        let cfg = tiny();
        let (_, store) = SwgFormer::build(cfg.model.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &cfg, &store).unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "only.one 1\n").unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
