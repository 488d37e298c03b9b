//! wasm-bindgen exports for the static page in `www/`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swgformer::features::{
    direction_of, extract_features, intensity_direction, synth_foa_scene, EventSpec, SceneSpec, SpectralConfig,
};
use swgformer::graph::knn_graph;
use swgformer::metrics;
use swgformer::Result;
use wasm_bindgen::prelude::*;

/// Mean IV direction `(azimuth, elevation)` of a one-second clean point source.
pub fn estimate_direction(azimuth_deg: f64, elevation_deg: f64, seed: u64) -> Result<(f64, f64)> {
    let mut scene = SceneSpec::new(1.0, 1);
    scene.events.push(EventSpec::fixed(0, 0.0, 1.0, azimuth_deg, elevation_deg));
    let (clip, _) = synth_foa_scene(&scene, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let f = extract_features(&clip, &SpectralConfig::default())?;
    let mut sum = [0.0; 3];
    for t in 0..f.frames() {
        if let Some(d) = intensity_direction(&f, t) {
            for a in 0..3 {
                sum[a] += d[a];
            }
        }
    }
    Ok(direction_of(sum))
}

/// Neighbor ids, row-major `[n, k]`, of `n` vertices whose features fill `features` row by row.
pub fn neighbors(features: &[f64], n: usize, k: usize) -> Result<Vec<u32>> {
    let t = if n == 0 { 0 } else { features.len() / n };
    let g = knn_graph(features, n, t, k)?;
    Ok(g.indices().iter().map(|&i| i as u32).collect())
}

fn js(e: swgformer::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Renders a point source at the given direction and returns the `[azimuth, elevation]`
/// recovered from its intensity vectors.
#[wasm_bindgen(js_name = foaDirection)]
pub fn foa_direction(azimuth_deg: f64, elevation_deg: f64, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    let (az, el) = estimate_direction(azimuth_deg, elevation_deg, seed as u64).map_err(js)?;
    Ok(vec![az, el])
}

/// KNN graph over `n` feature rows; returns `n * k` neighbor ids sorted by distance.
#[wasm_bindgen(js_name = knnGraph)]
pub fn knn_graph_js(features: &[f64], n: usize, k: usize) -> std::result::Result<Vec<u32>, JsError> {
    neighbors(features, n, k).map_err(js)
}

/// Equal-weight aggregate of error rate, F-score, localization error (degrees) and recall.
#[wasm_bindgen(js_name = seldScore)]
pub fn seld_score(er: f64, f20: f64, le_deg: f64, lr: f64) -> f64 {
    metrics::seld_score(er, f20, le_deg, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_round_trip() {
        let (az, el) = estimate_direction(-60.0, 25.0, 1).unwrap();
        assert!((az + 60.0).abs() < 1.0 && (el - 25.0).abs() < 1.0, "{az} {el}");
    }

    #[test]
    fn neighbors_on_a_line() {
        let ids = neighbors(&[0.0, 1.0, 3.0, 10.0], 4, 2).unwrap();
        assert_eq!(ids, vec![1, 2, 0, 2, 1, 0, 2, 1]);
        assert!(neighbors(&[0.0, 1.0], 2, 2).is_err());
    }

    #[test]
    fn perfect_score_is_zero() {
        assert_eq!(seld_score(0.0, 1.0, 0.0, 1.0), 0.0);
        assert_eq!(seld_score(1.0, 0.0, 180.0, 0.0), 1.0);
    }
}
