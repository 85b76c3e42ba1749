//! Fixed scenes shared by the criterion benchmarks in `benches/`.

use cmaxloc_core::synthbench::{generate_scene, SceneConfig, SyntheticScene};

/// Seeded scene with `n_points` points, `n_lines` lines and the given outlier rate.
pub fn bench_scene(
    n_points: usize,
    n_lines: usize,
    outlier_rate: f64,
    seed: u64,
) -> SyntheticScene {
    generate_scene(&SceneConfig {
        n_points,
        n_lines,
        outlier_rate,
        rng_seed: seed,
        ..SceneConfig::default()
    })
    .expect("benchmark scene generates")
}
