//! Fixtures shared by the benchmarks.

use zsm_core::features::{extract_features, LabeledSample};
use zsm_core::geom::ConstrainedZonotope;
use zsm_core::ml::Dataset;
use zsm_core::scene::{generate_scene, simulate_epochs, EpochObservation, NoiseConfig, Scene, SceneConfig, Section};

/// Default-sized scene for `seed`.
pub fn scene(seed: u64) -> Scene {
    generate_scene(&SceneConfig {
        seed,
        ..SceneConfig::default()
    })
    .expect("default scene config is feasible")
}

pub fn epochs(scene: &Scene) -> Vec<EpochObservation> {
    simulate_epochs(scene, &NoiseConfig::default())
}

/// The first `n` training samples of `epochs`.
pub fn training_set(scene: &Scene, epochs: &[EpochObservation], n: usize) -> Dataset {
    let samples: Vec<LabeledSample> = epochs
        .iter()
        .filter(|e| e.section == Section::Training)
        .filter_map(|e| extract_features(e, scene.street_midpoint()).ok())
        .flatten()
        .take(n)
        .collect();
    Dataset::from_samples(&samples)
}

/// A regular `2k`-gon of radius 10 as a zonotope with `k` generators, rotated by `phase`.
pub fn zonogon(k: usize, phase: f64) -> ConstrainedZonotope {
    let mut g = nalgebra::DMatrix::zeros(2, k);
    for j in 0..k {
        let a = phase + std::f64::consts::PI * j as f64 / k as f64;
        g[(0, j)] = 10.0 * a.cos() / k as f64;
        g[(1, j)] = 10.0 * a.sin() / k as f64;
    }
    ConstrainedZonotope::zonotope(nalgebra::DVector::zeros(2), g).expect("well-formed generators")
}
