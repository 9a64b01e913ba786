//! Synthetic 2-D scenes and a raycast depth camera.
//!
//! Scenes are flat floors populated with vertical prisms (disks and boxes)
//! inside a rectangular boundary.  A pinhole camera at a configurable mount
//! height and pitch renders range images: each pixel stores the Euclidean
//! distance to the nearest hit among obstacle side surfaces, the ground
//! plane, and the boundary walls, with `max_range` doubling as the no-return
//! sentinel.  `project` inverts the camera model to recover a world-frame
//! point cloud.
//!
//! All geometry during rendering is expressed relative to the camera's xy
//! position, so translating a scene and pose together reproduces the exact
//! same frame bit for bit.

mod io;
mod synth;

pub use io::{
    load_sample, load_scene, read_pgm16, save_sample, save_scene, write_pgm16,
    DEFAULT_DEPTH_SCALE,
};
pub use synth::{make_scene, synth_dataset, SceneKind, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle, the walkable extent of a scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    fn validate(&self) -> Result<()> {
        if !(self.min[0] < self.max[0] && self.min[1] < self.max[1]) {
            return Err(Error::InvalidArgument(format!(
                "bounds min {:?} must be strictly below max {:?}",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// A vertical prism standing on the floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Obstacle {
    Disk {
        center: [f64; 2],
        radius: f64,
        height: f64,
    },
    Box {
        min: [f64; 2],
        max: [f64; 2],
        height: f64,
    },
}

impl Obstacle {
    fn validate(&self) -> Result<()> {
        match self {
            Obstacle::Disk { radius, height, .. } => {
                if *radius <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "disk radius must be positive, got {radius}"
                    )));
                }
                if *height <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "disk height must be positive, got {height}"
                    )));
                }
            }
            Obstacle::Box { min, max, height } => {
                if !(min[0] < max[0] && min[1] < max[1]) {
                    return Err(Error::InvalidArgument(format!(
                        "box min {min:?} must be strictly below max {max:?}"
                    )));
                }
                if *height <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "box height must be positive, got {height}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Distance from a planar point to the obstacle footprint (0 inside).
    pub fn footprint_distance(&self, x: f64, y: f64) -> f64 {
        match self {
            Obstacle::Disk { center, radius, .. } => {
                let d = ((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt();
                (d - radius).max(0.0)
            }
            Obstacle::Box { min, max, .. } => {
                let dx = (min[0] - x).max(0.0).max(x - max[0]);
                let dy = (min[1] - y).max(0.0).max(y - max[1]);
                (dx * dx + dy * dy).sqrt()
            }
        }
    }
}

/// Flat-floor scene: boundary rectangle plus vertical prisms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene2D {
    pub bounds: Bounds,
    pub obstacles: Vec<Obstacle>,
}

impl Scene2D {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        for o in &self.obstacles {
            o.validate()?;
        }
        Ok(())
    }

    /// True when a robot disk of `radius` at (x, y) touches any obstacle
    /// footprint or pokes outside the bounds.
    pub fn collides(&self, x: f64, y: f64, radius: f64) -> bool {
        if x - radius < self.bounds.min[0]
            || x + radius > self.bounds.max[0]
            || y - radius < self.bounds.min[1]
            || y + radius > self.bounds.max[1]
        {
            return true;
        }
        self.obstacles
            .iter()
            .any(|o| o.footprint_distance(x, y) < radius)
    }
}

/// Planar robot pose: world position plus heading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        PlanarPose { x, y, theta }
    }

    /// World coordinates of a point given in this pose's frame
    /// (x forward, y left).
    pub fn to_world(&self, local: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [
            self.x + c * local[0] - s * local[1],
            self.y + s * local[0] + c * local[1],
        ]
    }

    /// Inverse of [`PlanarPose::to_world`].
    pub fn to_local(&self, world: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = world[0] - self.x;
        let dy = world[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }
}

/// Pinhole camera rigidly mounted on the robot, looking along its heading.
///
/// Camera frame: x right, y down, z forward; `pitch > 0` tilts the optical
/// axis below the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub mount_height: f64,
    pub pitch: f64,
    pub max_range: f64,
}

impl CameraModel {
    /// Desk-scale default: 128x64 at roughly an 87-degree horizontal field of
    /// view, mounted 0.5 m up and tilted 0.35 rad toward the floor.
    pub fn desk_default() -> Self {
        let width = 128usize;
        let height = 64usize;
        let hfov = 87.0_f64.to_radians();
        let fx = (width as f64 / 2.0) / (hfov / 2.0).tan();
        CameraModel {
            width,
            height,
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            mount_height: 0.5,
            pitch: 0.35,
            max_range: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("camera resolution must be nonzero".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={}, fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64)
            || !(self.cy > 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::InvalidArgument(format!(
                "principal point ({}, {}) outside the image",
                self.cx, self.cy
            )));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "max_range must be positive, got {}",
                self.max_range
            )));
        }
        if !(self.mount_height > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mount_height must be positive, got {}",
                self.mount_height
            )));
        }
        Ok(())
    }

    /// Orthonormal world-frame camera basis for a robot pose:
    /// `(right, down, forward)`.
    pub fn basis(&self, pose: &PlanarPose) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let (st, ct) = pose.theta.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let forward = [cp * ct, cp * st, -sp];
        let right = [st, -ct, 0.0];
        let down = cross(forward, right);
        (right, down, forward)
    }

    /// Unit world-frame direction of pixel (u=column, v=row).
    pub fn pixel_ray(&self, pose: &PlanarPose, u: usize, v: usize) -> [f64; 3] {
        let (right, down, forward) = self.basis(pose);
        let dx = (u as f64 - self.cx) / self.fx;
        let dy = (v as f64 - self.cy) / self.fy;
        let mut d = [
            right[0] * dx + down[0] * dy + forward[0],
            right[1] * dx + down[1] * dy + forward[1],
            right[2] * dx + down[2] * dy + forward[2],
        ];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        d[0] /= n;
        d[1] /= n;
        d[2] /= n;
        d
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// A range image: per pixel, Euclidean distance to the nearest surface, with
/// `camera.max_range` standing in for "no return".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthFrame {
    camera: CameraModel,
    values: Vec<f64>,
}

impl DepthFrame {
    pub fn new(camera: CameraModel, values: Vec<f64>) -> Result<Self> {
        camera.validate()?;
        if values.len() != camera.width * camera.height {
            return Err(Error::shape(
                "DepthFrame::new",
                format!(
                    "expected {}x{} = {} values, got {}",
                    camera.height,
                    camera.width,
                    camera.width * camera.height,
                    values.len()
                ),
            ));
        }
        for (i, &d) in values.iter().enumerate() {
            if !d.is_finite() || d <= 0.0 || d > camera.max_range {
                return Err(Error::InvalidArgument(format!(
                    "depth value {d} at pixel {i} outside (0, {}]",
                    camera.max_range
                )));
            }
        }
        Ok(DepthFrame { camera, values })
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn width(&self) -> usize {
        self.camera.width
    }

    pub fn height(&self) -> usize {
        self.camera.height
    }

    /// Row-major range values (row `v`, column `u` at `v * width + u`).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, v: usize, u: usize) -> f64 {
        self.values[v * self.camera.width + u]
    }

    /// No-return pixels carry the sentinel `max_range`.
    pub fn is_sentinel(&self, value: f64) -> bool {
        value >= self.camera.max_range
    }

    /// Reverses pixel columns in place (mirror about the vertical axis).
    pub fn flip_horizontal(&mut self) {
        for row in self.values.chunks_exact_mut(self.camera.width) {
            row.reverse();
        }
    }
}

/// One training/evaluation record: what the robot saw and where it stood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub depth: DepthFrame,
    /// Goal position in the robot frame (x forward, y left), m.
    pub goal: [f64; 2],
    /// World pose at capture time.
    pub pose: PlanarPose,
    /// Stance parity: 0 = left leg is the stance leg, 1 = right.
    pub parity: u8,
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        if !(self.goal[0].is_finite() && self.goal[1].is_finite()) {
            return Err(Error::NonFinite("sample goal".into()));
        }
        if self.parity > 1 {
            return Err(Error::InvalidArgument(format!(
                "stance parity must be 0 or 1, got {}",
                self.parity
            )));
        }
        Ok(())
    }
}

const RAY_EPS: f64 = 1e-9;

/// Renders the range image seen from `pose` in `scene`.
///
/// Hit surfaces: obstacle sides (up to each obstacle's height; prisms have no
/// caps), the ground plane, and the boundary walls (unbounded height).  Hits
/// at or beyond `max_range` — and rays that escape upward — become the
/// sentinel.
pub fn render_depth(scene: &Scene2D, pose: &PlanarPose, camera: &CameraModel) -> Result<DepthFrame> {
    scene.validate()?;
    camera.validate()?;
    if !scene.bounds.contains(pose.x, pose.y) {
        return Err(Error::InvalidArgument(format!(
            "camera pose ({}, {}) outside scene bounds",
            pose.x, pose.y
        )));
    }

    // Everything below works in camera-centered planar coordinates so that
    // jointly translating scene and pose cannot change a single bit.
    let rel_bounds = [
        camera_rel(scene.bounds.min, pose),
        camera_rel(scene.bounds.max, pose),
    ];
    let rel_obstacles: Vec<Obstacle> = scene
        .obstacles
        .iter()
        .map(|o| match o {
            Obstacle::Disk { center, radius, height } => Obstacle::Disk {
                center: camera_rel(*center, pose),
                radius: *radius,
                height: *height,
            },
            Obstacle::Box { min, max, height } => Obstacle::Box {
                min: camera_rel(*min, pose),
                max: camera_rel(*max, pose),
                height: *height,
            },
        })
        .collect();

    let oz = camera.mount_height;
    let mut values = vec![camera.max_range; camera.width * camera.height];
    for v in 0..camera.height {
        for u in 0..camera.width {
            let d = camera.pixel_ray(pose, u, v);
            let mut best = f64::INFINITY;

            // Ground plane z = 0.
            if d[2] < -RAY_EPS {
                best = best.min(-oz / d[2]);
            }

            // Boundary walls: first exit of the xy ray from the rectangle.
            let mut t_wall = f64::INFINITY;
            for axis in 0..2 {
                if d[axis] > RAY_EPS {
                    t_wall = t_wall.min(rel_bounds[1][axis] / d[axis]);
                } else if d[axis] < -RAY_EPS {
                    t_wall = t_wall.min(rel_bounds[0][axis] / d[axis]);
                }
            }
            if t_wall > RAY_EPS {
                best = best.min(t_wall);
            }

            for o in &rel_obstacles {
                if let Some(t) = ray_prism_side(o, oz, d) {
                    best = best.min(t);
                }
            }

            if best < camera.max_range {
                values[v * camera.width + u] = best;
            }
        }
    }
    DepthFrame::new(camera.clone(), values)
}

fn camera_rel(p: [f64; 2], pose: &PlanarPose) -> [f64; 2] {
    [p[0] - pose.x, p[1] - pose.y]
}

/// Nearest positive ray parameter hitting the prism's side surface, if any.
/// The ray starts at (0, 0, oz) with unit direction `d`; the prism occupies
/// z in [0, height] (camera-relative planar coordinates).
fn ray_prism_side(o: &Obstacle, oz: f64, d: [f64; 3]) -> Option<f64> {
    match o {
        Obstacle::Disk { center, radius, height } => {
            let a = d[0] * d[0] + d[1] * d[1];
            if a < 1e-16 {
                return None; // vertical ray cannot cross a side surface
            }
            // |t d_xy - c|^2 = r^2
            let dc = d[0] * center[0] + d[1] * center[1];
            let disc = dc * dc - a * (center[0] * center[0] + center[1] * center[1] - radius * radius);
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            for t in [(dc - sq) / a, (dc + sq) / a] {
                if t > RAY_EPS {
                    let z = oz + t * d[2];
                    if (0.0..=*height).contains(&z) {
                        return Some(t);
                    }
                }
            }
            None
        }
        Obstacle::Box { min, max, height } => {
            let mut best = f64::INFINITY;
            // Faces normal to x, then to y.
            for (norm_axis, other_axis) in [(0usize, 1usize), (1, 0)] {
                if d[norm_axis].abs() <= RAY_EPS {
                    continue;
                }
                for plane in [min[norm_axis], max[norm_axis]] {
                    let t = plane / d[norm_axis];
                    if t <= RAY_EPS || t >= best {
                        continue;
                    }
                    let w = t * d[other_axis];
                    if w < min[other_axis] || w > max[other_axis] {
                        continue;
                    }
                    let z = oz + t * d[2];
                    if (0.0..=*height).contains(&z) {
                        best = t;
                    }
                }
            }
            (best < f64::INFINITY).then_some(best)
        }
    }
}

/// Multiplies each non-sentinel pixel by `1 + sigma * n` with standard normal
/// `n`, clamping back into `(0, max_range]`.  `sigma = 0` is a no-op.
pub fn apply_depth_noise<R: rand::Rng>(frame: &mut DepthFrame, sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    use rand_distr::{Distribution, StandardNormal};
    let max_range = frame.camera.max_range;
    for d in &mut frame.values {
        if *d >= max_range {
            continue;
        }
        let n: f64 = StandardNormal.sample(rng);
        *d = (*d * (1.0 + sigma * n)).clamp(1e-3, max_range);
    }
}

/// Back-projects every returned pixel to a world-frame 3-D point.  Sentinel
/// pixels are skipped, so the cloud has one point per actual return.
pub fn project(frame: &DepthFrame, pose: &PlanarPose) -> Vec<[f64; 3]> {
    let cam = &frame.camera;
    let mut cloud = Vec::new();
    for v in 0..cam.height {
        for u in 0..cam.width {
            let r = frame.at(v, u);
            if frame.is_sentinel(r) {
                continue;
            }
            let d = cam.pixel_ray(pose, u, v);
            cloud.push([
                pose.x + r * d[0],
                pose.y + r * d[1],
                cam.mount_height + r * d[2],
            ]);
        }
    }
    cloud
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_scene() -> Scene2D {
        Scene2D {
            bounds: Bounds {
                min: [-50.0, -50.0],
                max: [50.0, 50.0],
            },
            obstacles: vec![],
        }
    }

    fn level_camera() -> CameraModel {
        CameraModel {
            pitch: 0.0,
            ..CameraModel::desk_default()
        }
    }

    #[test]
    fn empty_scene_center_ray_is_sentinel() {
        // Level camera, huge bounds: the principal ray hits nothing within
        // range.
        let cam = level_camera();
        let frame = render_depth(&empty_scene(), &PlanarPose::new(0.0, 0.0, 0.0), &cam).unwrap();
        let d = frame.at(cam.cy as usize, cam.cx as usize);
        assert_eq!(d, cam.max_range);
        assert!(frame.is_sentinel(d));
    }

    #[test]
    fn wall_two_meters_ahead_reads_two_meters() {
        let mut scene = empty_scene();
        scene.obstacles.push(Obstacle::Box {
            min: [2.0, -40.0],
            max: [2.5, 40.0],
            height: 3.0,
        });
        let cam = level_camera();
        let frame = render_depth(&scene, &PlanarPose::new(0.0, 0.0, 0.0), &cam).unwrap();
        let d = frame.at(cam.cy as usize, cam.cx as usize);
        assert!((d - 2.0).abs() < 1e-12, "center depth {d}");
    }

    #[test]
    fn pitched_center_ray_hits_ground_at_closed_form_range() {
        let cam = CameraModel::desk_default(); // pitch 0.35 rad
        let frame = render_depth(&empty_scene(), &PlanarPose::new(0.0, 0.0, 0.7), &cam).unwrap();
        let d = frame.at(cam.cy as usize, cam.cx as usize);
        let expected = cam.mount_height / cam.pitch.sin();
        assert!((d - expected).abs() < 1e-12, "got {d}, want {expected}");
    }

    #[test]
    fn principal_ray_projects_straight_ahead() {
        // A frame whose only return is the center pixel at 2.0 m must project
        // to a single point two meters dead ahead at mount height.
        let cam = level_camera();
        let mut values = vec![cam.max_range; cam.width * cam.height];
        values[cam.cy as usize * cam.width + cam.cx as usize] = 2.0;
        let frame = DepthFrame::new(cam.clone(), values).unwrap();
        let cloud = project(&frame, &PlanarPose::new(0.0, 0.0, 0.0));
        assert_eq!(cloud.len(), 1);
        let p = cloud[0];
        assert!((p[0] - 2.0).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
        assert!((p[2] - cam.mount_height).abs() < 1e-12);
    }

    #[test]
    fn all_sentinel_frame_projects_to_empty_cloud() {
        let cam = level_camera();
        let frame = render_depth(&empty_scene(), &PlanarPose::new(0.0, 0.0, 0.0), &cam).unwrap();
        // Level camera in a huge empty scene: upper half of the image never
        // hits anything.  Check the whole-frame cloud has no sentinel points
        // and an upper-half-only frame would be empty.
        let cloud = project(&frame, &PlanarPose::new(0.0, 0.0, 0.0));
        let returns = frame
            .values()
            .iter()
            .filter(|&&d| !frame.is_sentinel(d))
            .count();
        assert_eq!(cloud.len(), returns);
    }

    #[test]
    fn projection_round_trip_distance_matches_depth() {
        let mut scene = empty_scene();
        scene.obstacles.push(Obstacle::Disk {
            center: [2.0, 0.5],
            radius: 0.3,
            height: 1.2,
        });
        scene.obstacles.push(Obstacle::Box {
            min: [1.0, -1.5],
            max: [1.6, -0.9],
            height: 0.8,
        });
        let cam = CameraModel::desk_default();
        let pose = PlanarPose::new(-0.5, 0.25, 0.1);
        let frame = render_depth(&scene, &pose, &cam).unwrap();
        let cloud = project(&frame, &pose);
        let mut idx = 0;
        for v in 0..cam.height {
            for u in 0..cam.width {
                let d = frame.at(v, u);
                if frame.is_sentinel(d) {
                    continue;
                }
                let p = cloud[idx];
                idx += 1;
                let r = ((p[0] - pose.x).powi(2)
                    + (p[1] - pose.y).powi(2)
                    + (p[2] - cam.mount_height).powi(2))
                .sqrt();
                assert!(
                    (r - d).abs() < 1e-9,
                    "pixel ({v},{u}): depth {d}, re-measured {r}"
                );
            }
        }
        assert_eq!(idx, cloud.len());
    }

    #[test]
    fn rendering_is_translation_equivariant() {
        let base = Scene2D {
            bounds: Bounds {
                min: [-4.0, -3.0],
                max: [6.0, 3.0],
            },
            obstacles: vec![
                Obstacle::Disk {
                    center: [2.0, 0.5],
                    radius: 0.25,
                    height: 1.0,
                },
                Obstacle::Box {
                    min: [1.0, -1.25],
                    max: [1.5, -0.5],
                    height: 0.75,
                },
            ],
        };
        // Dyadic offsets are exactly representable, so equivariance must be
        // bitwise.
        let off = [12.5, -7.25];
        let mut moved = base.clone();
        moved.bounds.min = [base.bounds.min[0] + off[0], base.bounds.min[1] + off[1]];
        moved.bounds.max = [base.bounds.max[0] + off[0], base.bounds.max[1] + off[1]];
        for o in &mut moved.obstacles {
            match o {
                Obstacle::Disk { center, .. } => {
                    center[0] += off[0];
                    center[1] += off[1];
                }
                Obstacle::Box { min, max, .. } => {
                    min[0] += off[0];
                    min[1] += off[1];
                    max[0] += off[0];
                    max[1] += off[1];
                }
            }
        }
        let cam = CameraModel::desk_default();
        let pose_a = PlanarPose::new(0.5, -0.25, 0.4);
        let pose_b = PlanarPose::new(0.5 + off[0], -0.25 + off[1], 0.4);
        let fa = render_depth(&base, &pose_a, &cam).unwrap();
        let fb = render_depth(&moved, &pose_b, &cam).unwrap();
        assert_eq!(fa.values(), fb.values());
    }

    #[test]
    fn pose_outside_bounds_is_rejected() {
        let cam = CameraModel::desk_default();
        let err = render_depth(&empty_scene(), &PlanarPose::new(99.0, 0.0, 0.0), &cam);
        assert!(err.is_err());
    }

    #[test]
    fn obstacle_tops_are_open() {
        // A short disk directly ahead: rays that would cross above its height
        // must miss it and continue to the far wall / sentinel.
        let mut scene = empty_scene();
        scene.obstacles.push(Obstacle::Disk {
            center: [1.5, 0.0],
            radius: 0.3,
            height: 0.2, // below the 0.5 m mount height
        });
        let cam = level_camera();
        let frame = render_depth(&scene, &PlanarPose::new(0.0, 0.0, 0.0), &cam).unwrap();
        // The level principal ray stays at z = 0.5 > 0.2 forever.
        let d = frame.at(cam.cy as usize, cam.cx as usize);
        assert!(frame.is_sentinel(d), "short obstacle must not block a level ray");
    }

    #[test]
    fn collision_check_sees_walls_and_obstacles() {
        let mut scene = empty_scene();
        scene.obstacles.push(Obstacle::Disk {
            center: [1.0, 0.0],
            radius: 0.2,
            height: 1.0,
        });
        assert!(scene.collides(1.25, 0.0, 0.12)); // rim closer than radius
        assert!(!scene.collides(2.0, 0.0, 0.12));
        assert!(scene.collides(-49.95, 0.0, 0.12)); // hugging the wall
    }

    #[test]
    fn pose_frame_round_trip() {
        let pose = PlanarPose::new(1.0, -2.0, 0.7);
        let p = [0.4, -0.3];
        let w = pose.to_world(p);
        let back = pose.to_local(w);
        assert!((back[0] - p[0]).abs() < 1e-12);
        assert!((back[1] - p[1]).abs() < 1e-12);
    }
}
