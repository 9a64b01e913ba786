//! Collision risk fields: occupancy binning, Gaussian blur, and
//! differentiable bilinear sampling.
//!
//! Projected depth points inside a height band are binned into a planar
//! occupancy grid, which a separable truncated Gaussian turns into a smooth
//! risk surface — an inexpensive stand-in for a distance field whose
//! gradients push query points away from obstacles.  Sampling interpolates
//! bilinearly over the four surrounding cell centers and returns the exact
//! spatial derivative of that surface.
//!
//! Queries outside the cell-center hull receive a flat penalty of
//! `max(field) + 1` and a gradient of magnitude `1/resolution` pointing away
//! from the grid, so that gradient *descent* on the sampled value pulls
//! wayward points back into the sensed region.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{write_pgm16, CameraModel, PlanarPose};

/// Geometry of a planar grid: world position of the corner of cell (0, 0),
/// cell size, and cell counts per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be positive, got {}",
                self.resolution
            )));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be nonzero, got {}x{}",
                self.nx, self.ny
            )));
        }
        if self.nx.saturating_mul(self.ny) > 32_000_000 {
            return Err(Error::InvalidArgument(format!(
                "grid {}x{} is unreasonably large",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    /// World coordinates of the center of cell (i, j).
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        ]
    }
}

/// Integer hit counts per cell, row-major with x fastest (`j * nx + i`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub spec: GridSpec,
    counts: Vec<u32>,
}

impl OccupancyGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        Ok(OccupancyGrid {
            counts: vec![0; spec.nx * spec.ny],
            spec,
        })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count_at(&self, i: usize, j: usize) -> u32 {
        self.counts[j * self.spec.nx + i]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Bins the planar footprint of `points` into a fresh grid.  Points with z
/// outside `height_band` (the floor and anything overhead) are dropped
/// silently; in-band points falling outside the grid are dropped and counted
/// in the returned tally.
pub fn build_occupancy(
    points: &[[f64; 3]],
    spec: GridSpec,
    height_band: [f64; 2],
) -> Result<(OccupancyGrid, usize)> {
    if !(height_band[0] < height_band[1]) {
        return Err(Error::InvalidArgument(format!(
            "height band [{}, {}] is empty",
            height_band[0], height_band[1]
        )));
    }
    let mut grid = OccupancyGrid::new(spec)?;
    let mut out_of_grid = 0usize;
    for p in points {
        if p[2] < height_band[0] || p[2] > height_band[1] {
            continue;
        }
        let i = ((p[0] - spec.origin[0]) / spec.resolution).floor();
        let j = ((p[1] - spec.origin[1]) / spec.resolution).floor();
        if i < 0.0 || j < 0.0 || i >= spec.nx as f64 || j >= spec.ny as f64 {
            out_of_grid += 1;
            continue;
        }
        grid.counts[j as usize * spec.nx + i as usize] += 1;
    }
    Ok((grid, out_of_grid))
}

/// Smooth risk surface over the same grid geometry as its occupancy source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskField {
    pub spec: GridSpec,
    pub sigma: f64,
    values: Vec<f64>,
    oob_penalty: f64,
}

/// Truncated, normalized Gaussian taps for half-width `ceil(3 sigma)`.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let hw = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-hw..=hw)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Blurs an occupancy grid with a separable truncated Gaussian (zero padding
/// at the borders).  `sigma` is measured in cells; `sigma = 0` casts counts
/// to reals unchanged.
pub fn gaussian_blur(grid: &OccupancyGrid, sigma: f64) -> Result<RiskField> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "blur sigma must be non-negative, got {sigma}"
        )));
    }
    let spec = grid.spec;
    let kernel = gaussian_kernel(sigma);
    let hw = (kernel.len() / 2) as i64;
    let (nx, ny) = (spec.nx as i64, spec.ny as i64);

    let mut pass_x = vec![0.0f64; grid.counts.len()];
    for j in 0..ny {
        for i in 0..nx {
            let c = grid.counts[(j * nx + i) as usize];
            if c == 0 {
                continue;
            }
            let c = c as f64;
            for (t, k) in kernel.iter().enumerate() {
                let ii = i + t as i64 - hw;
                if ii >= 0 && ii < nx {
                    pass_x[(j * nx + ii) as usize] += c * k;
                }
            }
        }
    }
    let mut values = vec![0.0f64; grid.counts.len()];
    for j in 0..ny {
        for i in 0..nx {
            let c = pass_x[(j * nx + i) as usize];
            if c == 0.0 {
                continue;
            }
            for (t, k) in kernel.iter().enumerate() {
                let jj = j + t as i64 - hw;
                if jj >= 0 && jj < ny {
                    values[(jj * nx + i) as usize] += c * k;
                }
            }
        }
    }
    let max = values.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(RiskField {
        spec,
        sigma,
        values,
        oob_penalty: max + 1.0,
    })
}

impl RiskField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.nx + i]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    pub fn oob_penalty(&self) -> f64 {
        self.oob_penalty
    }

    /// Overrides the default out-of-bounds penalty (`max(field) + 1`).
    pub fn set_oob_penalty(&mut self, value: f64) {
        self.oob_penalty = value;
    }

    /// Samples the risk surface at a world point, returning the value and its
    /// spatial gradient (per meter).
    ///
    /// Inside the cell-center hull this is exact bilinear interpolation and
    /// its exact derivative.  Outside, the value is the flat out-of-bounds
    /// penalty and the gradient points *away* from the grid with magnitude
    /// `1/resolution`, so descending the sampled value re-enters the grid.
    pub fn sample(&self, x: f64, y: f64) -> Result<(f64, [f64; 2])> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite(format!("field query ({x}, {y})")));
        }
        let res = self.spec.resolution;
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        // Continuous cell-center coordinates: cell (i, j)'s center sits at
        // (i, j) exactly.
        let gx = (x - self.spec.origin[0]) / res - 0.5;
        let gy = (y - self.spec.origin[1]) / res - 0.5;
        let (hx, hy) = ((nx - 1) as f64, (ny - 1) as f64);

        if gx < 0.0 || gx > hx || gy < 0.0 || gy > hy {
            // Out of the sampleable hull: flat penalty, outward gradient.
            let cx = gx.clamp(0.0, hx);
            let cy = gy.clamp(0.0, hy);
            let dx = gx - cx;
            let dy = gy - cy;
            let n = (dx * dx + dy * dy).sqrt();
            // n > 0 because (gx, gy) is strictly outside the hull.
            let grad = [dx / (n * res), dy / (n * res)];
            return Ok((self.oob_penalty, grad));
        }

        let i0 = (gx.floor() as usize).min(nx.saturating_sub(2));
        let j0 = (gy.floor() as usize).min(ny.saturating_sub(2));
        let i1 = (i0 + 1).min(nx - 1);
        let j1 = (j0 + 1).min(ny - 1);
        let fx = gx - i0 as f64;
        let fy = gy - j0 as f64;

        let v00 = self.values[j0 * nx + i0];
        let v10 = self.values[j0 * nx + i1];
        let v01 = self.values[j1 * nx + i0];
        let v11 = self.values[j1 * nx + i1];

        let value = (1.0 - fx) * (1.0 - fy) * v00
            + fx * (1.0 - fy) * v10
            + (1.0 - fx) * fy * v01
            + fx * fy * v11;
        let dvdx = ((1.0 - fy) * (v10 - v00) + fy * (v11 - v01)) / res;
        let dvdy = ((1.0 - fx) * (v01 - v00) + fx * (v11 - v10)) / res;
        Ok((value, [dvdx, dvdy]))
    }

    /// Writes the field as a normalized 16-bit PGM plus a JSON header with
    /// the geometry and value range, for plots and debugging.
    pub fn export_pgm(&self, pgm_path: &Path) -> Result<()> {
        let max = self.max_value();
        let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
        let quantized: Vec<u16> = self
            .values
            .iter()
            .map(|&v| (v * scale).round().clamp(0.0, 65535.0) as u16)
            .collect();
        write_pgm16(pgm_path, self.spec.nx, self.spec.ny, &quantized)?;
        let header = serde_json::json!({
            "version": 1,
            "origin": self.spec.origin,
            "resolution": self.spec.resolution,
            "nx": self.spec.nx,
            "ny": self.spec.ny,
            "sigma": self.sigma,
            "max_value": max,
        });
        let header_path = pgm_path.with_extension("json");
        std::fs::write(&header_path, serde_json::to_string_pretty(&header)?)
            .map_err(|e| Error::io(&header_path, e))
    }
}

/// Default field parameters used across training and simulation.
pub const DEFAULT_RESOLUTION: f64 = 0.05;
pub const DEFAULT_SIGMA_CELLS: f64 = 3.0;
pub const DEFAULT_HEIGHT_BAND: [f64; 2] = [0.05, 1.0];
pub const DEFAULT_GRID_MARGIN: f64 = 0.3;

/// Axis-aligned grid covering the camera's planar frustum footprint out to
/// `max_range`, padded by `margin` on every side.  Keeping the grid tight to
/// the frustum matters: anything outside the sensed wedge is out of bounds
/// and therefore penalized, which is what pulls footstep plans forward into
/// the region the robot can actually see.
pub fn frustum_grid(
    pose: &PlanarPose,
    camera: &CameraModel,
    resolution: f64,
    margin: f64,
) -> Result<GridSpec> {
    camera.validate()?;
    let (st, ct) = pose.theta.sin_cos();
    let fwd = [ct, st];
    let right = [st, -ct];
    let half_tan = (camera.cx.max(camera.width as f64 - camera.cx)) / camera.fx;
    let reach = camera.max_range;
    let half_w = reach * half_tan;
    let corners = [
        [pose.x, pose.y],
        [
            pose.x + fwd[0] * reach + right[0] * half_w,
            pose.y + fwd[1] * reach + right[1] * half_w,
        ],
        [
            pose.x + fwd[0] * reach - right[0] * half_w,
            pose.y + fwd[1] * reach - right[1] * half_w,
        ],
    ];
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in corners {
        for a in 0..2 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let origin = [lo[0] - margin, lo[1] - margin];
    let nx = (((hi[0] + margin - origin[0]) / resolution).ceil() as usize).max(2);
    let ny = (((hi[1] + margin - origin[1]) / resolution).ceil() as usize).max(2);
    let spec = GridSpec {
        origin,
        resolution,
        nx,
        ny,
    };
    spec.validate()?;
    Ok(spec)
}

/// One-shot pipeline: bin a cloud and blur it with the default height band.
pub fn build_risk_field(
    points: &[[f64; 3]],
    spec: GridSpec,
    sigma: f64,
    height_band: [f64; 2],
) -> Result<RiskField> {
    let (grid, _) = build_occupancy(points, spec, height_band)?;
    gaussian_blur(&grid, sigma)
}
