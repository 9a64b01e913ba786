//! Dataset directory layout: one subdirectory per scene (its name is the
//! metrics label) holding `scene.json` plus `sample-NNN.json`/`.pgm` pairs.
//! A JSON file counts as a sample exactly when a `.pgm` with the same stem
//! sits next to it, so scene files and other JSON artifacts are ignored.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use stride_core::scene::{
    make_scene, save_sample, save_scene, synth_dataset, Sample, SceneKind, SynthConfig,
};

/// Generate `samples` samples for every (kind, variant) pair under `out`.
/// Returns the number of samples written.
pub fn generate_dataset(
    out: &Path,
    kinds: &[SceneKind],
    variants: &[u64],
    samples: usize,
    seed: u64,
    noise: f64,
) -> Result<usize> {
    let mut written = 0usize;
    for kind in kinds {
        for &variant in variants {
            let dir = out.join(format!("{}-v{variant}", kind.name()));
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("creating {}", dir.display()))?;
            let synth = make_scene(*kind, variant);
            save_scene(&dir.join("scene.json"), &synth.scene)?;
            let cfg = SynthConfig {
                kinds: vec![*kind],
                variant,
                samples_per_scene: samples,
                seed,
                noise_sigma: noise,
                ..SynthConfig::default()
            };
            for (i, sample) in synth_dataset(&cfg)?.iter().enumerate() {
                save_sample(&dir.join(format!("sample-{i:03}.json")), sample)?;
                written += 1;
            }
        }
    }
    Ok(written)
}

/// Load every sample under `dir`, labeled by its immediate subdirectory
/// (samples sitting directly in `dir` get the label "."). Paths are sorted
/// so the order is stable across runs and platforms.
pub fn load_dataset(dir: &Path) -> Result<Vec<(String, Sample)>> {
    let mut sample_paths: Vec<(String, PathBuf)> = Vec::new();
    collect_samples(dir, ".", &mut sample_paths, 0)?;
    sample_paths.sort();
    if sample_paths.is_empty() {
        anyhow::bail!(
            "no samples found under {} (expected sample JSON files with .pgm siblings)",
            dir.display()
        );
    }
    let mut out = Vec::with_capacity(sample_paths.len());
    for (label, path) in sample_paths {
        let sample = stride_core::scene::load_sample(&path)
            .with_context(|| format!("loading sample {}", path.display()))?;
        out.push((label, sample));
    }
    Ok(out)
}

fn collect_samples(
    dir: &Path,
    label: &str,
    out: &mut Vec<(String, PathBuf)>,
    depth: usize,
) -> Result<()> {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("reading dataset directory {}", dir.display()))?;
    for entry in entries {
        let entry = entry.with_context(|| format!("reading entry in {}", dir.display()))?;
        let path = entry.path();
        if path.is_dir() {
            if depth == 0 {
                let name = entry.file_name().to_string_lossy().into_owned();
                collect_samples(&path, &name, out, depth + 1)?;
            }
            continue;
        }
        let is_sample_json = path.extension().is_some_and(|e| e == "json")
            && path.with_extension("pgm").is_file();
        if is_sample_json {
            out.push((label.to_string(), path));
        }
    }
    Ok(())
}
