//! Benchmark-only crate; see `benches/planner.rs`. Shared helpers for
//! building benchmark fixtures live here so the bench target stays small.

use stride_core::scene::{make_scene, synth_dataset, Sample, SceneKind, SynthConfig};

/// One deterministic clutter-scene sample for planner benchmarks.
pub fn bench_sample() -> Sample {
    let cfg = SynthConfig {
        kinds: vec![SceneKind::Clutter],
        variant: 0,
        samples_per_scene: 1,
        seed: 17,
        ..SynthConfig::default()
    };
    synth_dataset(&cfg)
        .expect("benchmark sample synthesis")
        .into_iter()
        .next()
        .expect("one sample")
}

/// The clutter scene the benchmark sample was rendered in.
pub fn bench_scene() -> stride_core::scene::Scene2D {
    make_scene(SceneKind::Clutter, 0).scene
}
