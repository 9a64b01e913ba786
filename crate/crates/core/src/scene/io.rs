//! On-disk formats: scene JSON, 16-bit PGM depth images, and sample sidecars.
//!
//! A sample is stored as two files sharing a stem: `<stem>.pgm` holds the
//! depth image as binary P5 with maxval 65535 (big-endian rows, top to
//! bottom), and `<stem>.json` holds everything that is not an image — the
//! camera model, pose, goal, stance parity, and the depth scale that converts
//! stored integers back to meters (default 1 mm per unit).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CameraModel, DepthFrame, PlanarPose, Sample, Scene2D};
use crate::error::{Error, Result};

pub const DEFAULT_DEPTH_SCALE: f64 = 1e-3;

pub fn save_scene(path: &Path, scene: &Scene2D) -> Result<()> {
    scene.validate()?;
    let body = serde_json::to_string_pretty(scene)?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: &Path) -> Result<Scene2D> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let scene: Scene2D = serde_json::from_str(&body).map_err(|e| Error::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    scene.validate()?;
    Ok(scene)
}

/// Writes a binary P5 PGM with maxval 65535 (values big-endian).
pub fn write_pgm16(path: &Path, width: usize, height: usize, values: &[u16]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::shape(
            "write_pgm16",
            format!("{width}x{height} image wants {} values, got {}", width * height, values.len()),
        ));
    }
    let mut bytes = format!("P5\n{width} {height}\n65535\n").into_bytes();
    bytes.reserve(values.len() * 2);
    for v in values {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a binary P5 PGM with maxval 65535.
pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |detail: String| Error::Format {
        path: path.display().to_string(),
        detail,
    };

    // Header: magic, width, height, maxval as whitespace-separated tokens
    // (comment lines allowed), then a single whitespace byte before the raster.
    let mut pos = 0usize;
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1; // the single whitespace after maxval

    if tokens[0] != "P5" {
        return Err(bad(format!("expected P5 magic, got '{}'", tokens[0])));
    }
    let width: usize = tokens[1].parse().map_err(|_| bad(format!("bad width '{}'", tokens[1])))?;
    let height: usize = tokens[2].parse().map_err(|_| bad(format!("bad height '{}'", tokens[2])))?;
    let maxval: u32 = tokens[3].parse().map_err(|_| bad(format!("bad maxval '{}'", tokens[3])))?;
    if maxval != 65535 {
        return Err(bad(format!("expected 16-bit maxval 65535, got {maxval}")));
    }
    let need = width * height * 2;
    let raster = bytes.get(pos..pos + need).ok_or_else(|| {
        bad(format!("raster truncated: need {need} bytes, have {}", bytes.len().saturating_sub(pos)))
    })?;
    let values = raster
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, values))
}

#[derive(Serialize, Deserialize)]
struct SampleSidecar {
    version: u32,
    camera: CameraModel,
    pose: PlanarPose,
    goal: [f64; 2],
    parity: u8,
    depth_scale: f64,
    pgm: String,
}

fn pgm_path_for(json_path: &Path) -> PathBuf {
    json_path.with_extension("pgm")
}

/// Saves `sample` as `<stem>.json` + `<stem>.pgm`; `path` is the JSON side.
pub fn save_sample(path: &Path, sample: &Sample) -> Result<()> {
    sample.validate()?;
    let cam = sample.depth.camera();
    let scale = DEFAULT_DEPTH_SCALE;
    let max_units = (cam.max_range / scale).round();
    if max_units > 65535.0 {
        return Err(Error::InvalidArgument(format!(
            "max_range {} m does not fit 16 bits at {} m/unit",
            cam.max_range, scale
        )));
    }
    let quantized: Vec<u16> = sample
        .depth
        .values()
        .iter()
        .map(|d| ((d / scale).round() as i64).clamp(1, max_units as i64) as u16)
        .collect();

    let pgm_path = pgm_path_for(path);
    write_pgm16(&pgm_path, cam.width, cam.height, &quantized)?;

    let sidecar = SampleSidecar {
        version: 1,
        camera: cam.clone(),
        pose: sample.pose,
        goal: sample.goal,
        parity: sample.parity,
        depth_scale: scale,
        pgm: pgm_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let body = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Loads a sample from its JSON sidecar path.
pub fn load_sample(path: &Path) -> Result<Sample> {
    let body = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingMetadata(format!("sample sidecar {} not found", path.display()))
        } else {
            Error::io(path, e)
        }
    })?;
    let sidecar: SampleSidecar = serde_json::from_str(&body).map_err(|e| Error::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    if sidecar.version != 1 {
        return Err(Error::Format {
            path: path.display().to_string(),
            detail: format!("unsupported sample version {}", sidecar.version),
        });
    }
    if !(sidecar.depth_scale > 0.0) {
        return Err(Error::Format {
            path: path.display().to_string(),
            detail: format!("depth_scale must be positive, got {}", sidecar.depth_scale),
        });
    }
    let pgm_path = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&sidecar.pgm);
    let (width, height, quantized) = read_pgm16(&pgm_path)?;
    if width != sidecar.camera.width || height != sidecar.camera.height {
        return Err(Error::shape(
            "load_sample",
            format!(
                "PGM is {width}x{height}, camera says {}x{}",
                sidecar.camera.width, sidecar.camera.height
            ),
        ));
    }
    let max_range = sidecar.camera.max_range;
    let values: Vec<f64> = quantized
        .iter()
        .map(|&q| (q as f64 * sidecar.depth_scale).min(max_range))
        .collect();
    let depth = DepthFrame::new(sidecar.camera, values)?;
    let sample = Sample {
        depth,
        goal: sidecar.goal,
        pose: sidecar.pose,
        parity: sidecar.parity,
    };
    sample.validate()?;
    Ok(sample)
}
