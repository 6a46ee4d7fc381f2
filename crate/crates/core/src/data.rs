//! Dataset manifests: calibrated images, annotations, detections and trajectories.
//!
//! A manifest is a single JSON document. Image and heatmap files are referenced by
//! paths relative to the manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ballistic::{BallisticTrajectory, TimedObservation, STANDARD_GRAVITY};
use crate::estimation::Detection;
use crate::geometry::{
    self, CalibratedCamera, CameraIntrinsics, CameraPose, GeometryError, Pixel, PixelBall, WorldPoint,
};
use crate::imageproc::{render_disc, CourtBounds, ImageGrid, ImageProcError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid manifest:\n  {}", issues.join("\n  "))]
    Invalid { issues: Vec<String> },
    #[error("image {0} has no annotation")]
    MissingAnnotation(String),
    #[error("image {image}: {source}")]
    Geometry {
        image: String,
        #[source]
        source: GeometryError,
    },
    #[error("unknown image {0}")]
    UnknownImage(String),
    #[error("unknown trajectory {0}")]
    UnknownTrajectory(String),
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error(transparent)]
    ImageProc(#[from] ImageProcError),
}

impl DataError {
    /// True for problems with the manifest content rather than the environment.
    pub fn is_validation(&self) -> bool {
        matches!(self, DataError::Parse { .. } | DataError::Invalid { .. } | DataError::MissingAnnotation(_))
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// The second click of an annotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SecondPoint {
    /// Vertical projection of the ball onto the court.
    Ground(Pixel),
    Diameter(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnnotationRecord", into = "AnnotationRecord")]
pub struct BallAnnotation {
    pub center: Pixel,
    pub second: SecondPoint,
    pub visible: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    center: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diameter: Option<f64>,
    #[serde(default = "default_true")]
    visible: bool,
}

fn default_true() -> bool {
    true
}

impl TryFrom<AnnotationRecord> for BallAnnotation {
    type Error = String;
    fn try_from(r: AnnotationRecord) -> Result<Self, String> {
        let second = match (r.ground, r.diameter) {
            (Some([x, y]), None) => SecondPoint::Ground(Pixel::new(x, y)),
            (None, Some(d)) if d > 0.0 && d.is_finite() => SecondPoint::Diameter(d),
            (None, Some(d)) => return Err(format!("annotation diameter {d} must be positive")),
            _ => return Err("annotation needs exactly one of `ground` or `diameter`".into()),
        };
        Ok(BallAnnotation {
            center: Pixel::new(r.center[0], r.center[1]),
            second,
            visible: r.visible,
        })
    }
}

impl From<BallAnnotation> for AnnotationRecord {
    fn from(a: BallAnnotation) -> Self {
        let (ground, diameter) = match a.second {
            SecondPoint::Ground(g) => (Some([g.x, g.y]), None),
            SecondPoint::Diameter(d) => (None, Some(d)),
        };
        AnnotationRecord {
            center: [a.center.x, a.center.y],
            ground,
            diameter,
            visible: a.visible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: String,
    pub camera: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<BallAnnotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detections: Vec<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<String>,
    /// Known 3D ball position, when the data comes with one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<WorldPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub image_ids: Vec<String>,
    /// Seconds.
    pub timestamps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub court: Option<CourtBounds>,
    pub cameras: BTreeMap<String, CalibratedCamera>,
    #[serde(default)]
    pub images: Vec<ImageRecord>,
    #[serde(default)]
    pub trajectories: Vec<TrajectoryRecord>,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            name: name.into(),
            metadata: BTreeMap::new(),
            court: None,
            cameras: BTreeMap::new(),
            images: Vec::new(),
            trajectories: Vec::new(),
        }
    }

    pub fn image(&self, id: &str) -> Result<&ImageRecord> {
        self.images
            .iter()
            .find(|i| i.id == id)
            .ok_or_else(|| DataError::UnknownImage(id.to_string()))
    }

    pub fn image_mut(&mut self, id: &str) -> Result<&mut ImageRecord> {
        self.images
            .iter_mut()
            .find(|i| i.id == id)
            .ok_or_else(|| DataError::UnknownImage(id.to_string()))
    }

    pub fn trajectory(&self, id: &str) -> Result<&TrajectoryRecord> {
        self.trajectories
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| DataError::UnknownTrajectory(id.to_string()))
    }

    /// Camera of an image. Validated manifests always have it.
    pub fn camera_for(&self, record: &ImageRecord) -> Result<&CalibratedCamera> {
        self.cameras.get(&record.camera).ok_or_else(|| DataError::Invalid {
            issues: vec![format!("image {}: unknown camera {:?}", record.id, record.camera)],
        })
    }

    /// Every invariant violation, in document order.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.schema != SCHEMA_VERSION {
            issues.push(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        let mut ids = BTreeSet::new();
        for img in &self.images {
            if !ids.insert(img.id.as_str()) {
                issues.push(format!("duplicate image id {:?}", img.id));
            }
            let Some(cam) = self.cameras.get(&img.camera) else {
                issues.push(format!("image {}: unknown camera {:?}", img.id, img.camera));
                continue;
            };
            if let Some(a) = &img.annotation {
                if !cam.contains(&a.center) {
                    issues.push(format!(
                        "image {}: annotation center ({}, {}) outside {}x{}",
                        img.id, a.center.x, a.center.y, cam.width, cam.height
                    ));
                }
                if let SecondPoint::Ground(g) = a.second {
                    if !cam.contains(&g) {
                        issues.push(format!(
                            "image {}: ground point ({}, {}) outside {}x{}",
                            img.id, g.x, g.y, cam.width, cam.height
                        ));
                    }
                }
            }
        }
        let mut traj_ids = BTreeSet::new();
        for t in &self.trajectories {
            if !traj_ids.insert(t.id.as_str()) {
                issues.push(format!("duplicate trajectory id {:?}", t.id));
            }
            if t.image_ids.len() != t.timestamps.len() {
                issues.push(format!(
                    "trajectory {}: {} images but {} timestamps",
                    t.id,
                    t.image_ids.len(),
                    t.timestamps.len()
                ));
            }
            for id in &t.image_ids {
                if !ids.contains(id.as_str()) {
                    issues.push(format!("trajectory {}: unknown image {id:?}", t.id));
                }
            }
            if t.timestamps.iter().any(|v| !v.is_finite()) {
                issues.push(format!("trajectory {}: non-finite timestamp", t.id));
            } else if let Some(i) = t.timestamps.windows(2).position(|w| w[1] <= w[0]) {
                issues.push(format!(
                    "trajectory {}: timestamps not strictly increasing at index {}",
                    t.id,
                    i + 1
                ));
            }
            if let Some(fps) = t.fps {
                if !(fps > 0.0 && fps.is_finite()) {
                    issues.push(format!("trajectory {}: fps {fps} must be positive", t.id));
                }
            }
        }
        issues
    }

    /// Annotated positions of a trajectory's images, paired with their ids.
    pub fn trajectory_observations(&self, id: &str, phi: f64) -> Result<Vec<(String, TimedObservation)>> {
        let t = self.trajectory(id)?;
        let mut out = Vec::new();
        for (image_id, &ts) in t.image_ids.iter().zip(&t.timestamps) {
            let record = self.image(image_id)?;
            if record.annotation.is_none() {
                continue;
            }
            let (position, _) = resolve_annotation(record, self.camera_for(record)?, phi)?;
            out.push((image_id.clone(), TimedObservation::new(ts, position)));
        }
        Ok(out)
    }
}

fn parse_error(path: &Path, e: serde_json::Error) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest = serde_json::from_str(text).map_err(|e| parse_error(path, e))?;
    let issues = manifest.validate();
    if issues.is_empty() {
        Ok(manifest)
    } else {
        Err(DataError::Invalid { issues })
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text, path)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// 3D position and pixel ball implied by an image's annotation.
pub fn resolve_annotation(record: &ImageRecord, camera: &CalibratedCamera, phi: f64) -> Result<(WorldPoint, PixelBall)> {
    let annotation = record
        .annotation
        .as_ref()
        .ok_or_else(|| DataError::MissingAnnotation(record.id.clone()))?;
    let wrap = |source| DataError::Geometry {
        image: record.id.clone(),
        source,
    };
    match annotation.second {
        SecondPoint::Ground(ground) => {
            let fix = geometry::localize_from_projection(camera, annotation.center, ground, f64::INFINITY).map_err(wrap)?;
            let ball = geometry::project_ball(camera, &fix.position, phi).map_err(wrap)?;
            // Keep the clicked center; the diameter is what the projection implies.
            let ball = PixelBall::new(annotation.center.x, annotation.center.y, ball.d).map_err(wrap)?;
            Ok((fix.position, ball))
        }
        SecondPoint::Diameter(d) => {
            let ball = PixelBall::new(annotation.center.x, annotation.center.y, d).map_err(wrap)?;
            let position = geometry::localize_from_diameter(camera, &ball, phi).map_err(wrap)?;
            Ok((position, ball))
        }
    }
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub name: String,
    pub camera: CalibratedCamera,
    pub court: CourtBounds,
    pub phi: f64,
    pub trajectories: usize,
    pub frames_per_trajectory: usize,
    pub fps: f64,
    /// Accepted apparent ball diameters [px] for in-frame positions.
    pub diameter_range: (f64, f64),
    /// Standard deviation of additive heatmap noise, on the 0–255 scale.
    pub heatmap_noise: f64,
    pub ball_amplitude: f64,
    /// Standard deviation of the detector's center error [px].
    pub detection_noise: f64,
    pub distractors: usize,
    /// Probability of an occluding rectangle per image.
    pub occluder_probability: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let k = CameraIntrinsics::simple(1500.0, 480.0, 270.0).expect("valid intrinsics");
        let pose =
            CameraPose::look_at(WorldPoint::new(14.0, -8.0, 6.0), WorldPoint::new(14.0, 7.5, 1.0)).expect("valid pose");
        Self {
            name: "synthetic".into(),
            camera: CalibratedCamera::new(k, pose, 960, 540).expect("valid camera"),
            court: CourtBounds::default(),
            phi: geometry::DEFAULT_BALL_DIAMETER,
            trajectories: 4,
            frames_per_trajectory: 12,
            fps: 25.0,
            diameter_range: (14.0, 37.0),
            heatmap_noise: 5.0,
            ball_amplitude: 255.0,
            detection_noise: 0.5,
            distractors: 2,
            occluder_probability: 0.1,
        }
    }
}

impl SceneSpec {
    /// No noise, no distractors, no occluders.
    pub fn noiseless() -> Self {
        Self {
            heatmap_noise: 0.0,
            detection_noise: 0.0,
            distractors: 0,
            occluder_probability: 0.0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DataError::Synthesis(m));
        if self.frames_per_trajectory < 2 {
            return bad("need at least 2 frames per trajectory".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        let (lo, hi) = self.diameter_range;
        if !(lo > 0.0 && lo < hi) {
            return bad(format!("bad diameter range ({lo}, {hi})"));
        }
        if !(self.phi > 0.0) {
            return bad(format!("phi {} must be positive", self.phi));
        }
        if self.heatmap_noise < 0.0 || self.detection_noise < 0.0 {
            return bad("noise levels must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.occluder_probability) {
            return bad("occluder probability outside [0, 1]".into());
        }
        Ok(())
    }
}

/// A generated manifest plus the heatmaps its records reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub heatmaps: Vec<(String, ImageGrid)>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl SyntheticDataset {
    /// Writes `manifest.json` and the heatmap PNGs under `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| DataError::Io { path, source }
        };
        for (rel, grid) in &self.heatmaps {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(io(parent))?;
            }
            grid.save_png(&path)?;
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        save_manifest(&self.manifest, &manifest_path)?;
        Ok(manifest_path)
    }
}

const MAX_TRAJECTORY_DRAWS: usize = 10_000;

fn draw_trajectory(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> Option<(BallisticTrajectory, Vec<(WorldPoint, Option<PixelBall>)>)> {
    let court = &spec.court;
    let p0 = Vector3::new(
        rng.random_range(0.2 * court.length..0.8 * court.length),
        rng.random_range(0.15 * court.width..0.85 * court.width),
        rng.random_range(1.0..2.5),
    );
    let v0 = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(2.0..6.0));
    let traj = BallisticTrajectory::new(p0, v0, STANDARD_GRAVITY).ok()?;
    let mut frames = Vec::with_capacity(spec.frames_per_trajectory);
    let mut in_frame = 0;
    for i in 0..spec.frames_per_trajectory {
        let p = traj.evaluate(i as f64 / spec.fps);
        if p.z < spec.phi / 2.0 {
            return None;
        }
        let ball = geometry::project_ball(&spec.camera, &p, spec.phi)
            .ok()
            .filter(|b| spec.camera.contains(&b.center()));
        if let Some(b) = ball {
            if b.d < spec.diameter_range.0 || b.d > spec.diameter_range.1 {
                return None;
            }
            in_frame += 1;
        }
        frames.push((p, ball));
    }
    // Mostly in view, so the fits downstream have data.
    (in_frame * 2 > spec.frames_per_trajectory).then_some((traj, frames))
}

fn fill_noise(grid: &mut ImageGrid, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let v = grid.get(x, y) + normal.sample(rng);
            grid.set(x, y, v.clamp(0.0, 255.0));
        }
    }
}

/// Seeded synthetic dataset: ballistic paths sampled at a fixed rate and seen through
/// the scene camera. Frames where the ball is out of view keep their image with no
/// annotation.
pub fn synthesize_dataset(spec: &SceneSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = &spec.camera;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut manifest = DatasetManifest::new(spec.name.clone());
    manifest.court = Some(spec.court);
    manifest.cameras.insert("cam0".into(), *cam);
    manifest.metadata.insert("generator".into(), "synthetic".into());
    manifest.metadata.insert("seed".into(), seed.to_string());
    manifest.metadata.insert(
        "ball_size_range_px".into(),
        format!("{}-{}", spec.diameter_range.0, spec.diameter_range.1),
    );
    let mut heatmaps = Vec::new();
    let center_noise = Normal::new(0.0, spec.detection_noise).map_err(|e| DataError::Synthesis(e.to_string()))?;

    for ti in 0..spec.trajectories {
        let mut drawn = None;
        for _ in 0..MAX_TRAJECTORY_DRAWS {
            drawn = draw_trajectory(&mut rng, spec);
            if drawn.is_some() {
                break;
            }
        }
        let (_, frames) = drawn.ok_or_else(|| {
            DataError::Synthesis(format!("no trajectory fits the diameter range after {MAX_TRAJECTORY_DRAWS} draws"))
        })?;
        let traj_id = format!("t{ti:02}");
        let mut image_ids = Vec::new();
        let mut timestamps = Vec::new();
        for (fi, (position, ball)) in frames.into_iter().enumerate() {
            let id = format!("{traj_id}-f{fi:03}");
            let rel = format!("heatmaps/{id}.png");
            let mut grid = ImageGrid::zeros(w, h);
            let mut detections = Vec::new();

            let mut annotation = None;
            if let Some(b) = ball {
                render_disc(&mut grid, b.center(), b.d, spec.ball_amplitude);
                let ground = cam
                    .project(&WorldPoint::new(position.x, position.y, 0.0))
                    .ok()
                    .filter(|g| cam.contains(g));
                annotation = Some(BallAnnotation {
                    center: b.center(),
                    second: match ground {
                        Some(g) => SecondPoint::Ground(g),
                        None => SecondPoint::Diameter(b.d),
                    },
                    visible: true,
                });
                let center = Pixel::new(
                    (b.bx + center_noise.sample(&mut rng)).clamp(0.0, w as f64 - 1.0),
                    (b.by + center_noise.sample(&mut rng)).clamp(0.0, h as f64 - 1.0),
                );
                let confidence = rng.random_range(0.6..1.0);
                detections.push(Detection::new(center, confidence, None).expect("valid detection"));
            }
            for _ in 0..spec.distractors {
                let c = Pixel::new(rng.random_range(0.0..w as f64 - 1.0), rng.random_range(0.0..h as f64 - 1.0));
                let d = rng.random_range(spec.diameter_range.0..spec.diameter_range.1);
                render_disc(&mut grid, c, d, 0.6 * spec.ball_amplitude);
                let confidence = rng.random_range(0.0..0.7);
                detections.push(Detection::new(c, confidence, None).expect("valid detection"));
            }
            if rng.random_bool(spec.occluder_probability) {
                let (rw, rh) = (rng.random_range(10..60usize), rng.random_range(10..60usize));
                let (rx, ry) = (rng.random_range(0..w.saturating_sub(rw).max(1)), rng.random_range(0..h.saturating_sub(rh).max(1)));
                for y in ry..(ry + rh).min(h) {
                    for x in rx..(rx + rw).min(w) {
                        grid.set(x, y, 0.0);
                    }
                }
                if let Some(a) = annotation.as_mut() {
                    let (cx, cy) = (a.center.x.round() as usize, a.center.y.round() as usize);
                    if (rx..rx + rw).contains(&cx) && (ry..ry + rh).contains(&cy) {
                        a.visible = false;
                    }
                }
            }
            fill_noise(&mut grid, spec.heatmap_noise, &mut rng);

            manifest.images.push(ImageRecord {
                id: id.clone(),
                path: rel.clone(),
                camera: "cam0".into(),
                annotation,
                detections,
                heatmap: Some(rel.clone()),
                position: Some(position),
            });
            heatmaps.push((rel, grid));
            image_ids.push(id);
            timestamps.push(fi as f64 / spec.fps);
        }
        manifest.trajectories.push(TrajectoryRecord {
            id: traj_id,
            image_ids,
            timestamps,
            fps: Some(spec.fps),
        });
    }
    manifest
        .metadata
        .insert("image_count".into(), manifest.images.len().to_string());
    Ok(SyntheticDataset { manifest, heatmaps })
}
