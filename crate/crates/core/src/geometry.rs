//! Calibrated pinhole camera with polynomial lens distortion, and the closed-form
//! ball localization routines built on it.
//!
//! Frames:
//! - world: metres, z up, the court plane is z = 0.
//! - camera: x right, y down, z along the optical axis. `CameraPose::rotation`
//!   maps world directions into this frame.
//! - pixel: (x, y) with the same orientation as the camera x/y axes.
//!
//! Distortion follows the radial (k1, k2, k3) + tangential (p1, p2) polynomial
//! model on normalized image coordinates. Rectification inverts it by fixed-point
//! iteration.

use nalgebra::{Matrix3, Point2, Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pixel coordinates.
pub type Pixel = Point2<f64>;
/// World coordinates in metres (z up).
pub type WorldPoint = Point3<f64>;

/// Regulation basketball diameter.
pub const DEFAULT_BALL_DIAMETER: f64 = 0.24;
/// Fixed-point update size at which undistortion is considered converged.
pub const RECTIFY_TOLERANCE: f64 = 1e-10;
pub const RECTIFY_MAX_ITERATIONS: usize = 50;
/// Edge-ray y spans below this are treated as degenerate.
pub const MIN_EDGE_SPAN: f64 = 1e-12;
/// Default tolerated distance [m] between the center ray and the vertical line
/// through the annotated floor point before a warning is attached.
pub const DEFAULT_GAP_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid image size {width}x{height}")]
    InvalidImageSize { width: u32, height: u32 },
    #[error("rectification of pixel ({x}, {y}) did not converge (residual {residual:e})")]
    RectificationDiverged { x: f64, y: f64, residual: f64 },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("invalid ball: {0}")]
    InvalidBall(String),
    #[error("edge rays are degenerate (y span {span:e})")]
    DegenerateEdgeRays { span: f64 },
    #[error("point ({x}, {y}, {z}) is not in front of the camera")]
    BehindCamera { x: f64, y: f64, z: f64 },
    #[error("ray through pixel ({x}, {y}) does not reach the court plane")]
    RayMissesCourt { x: f64, y: f64 },
    #[error("center ray is parallel to the vertical line")]
    VerticalCenterRay,
    #[error("no pixel diameter reproduces the requested position")]
    DiameterSolveFailed,
    #[error("invalid height range: {0}")]
    InvalidHeightRange(String),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

/// Radial + tangential polynomial distortion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistortionCoefficients {
    pub radial: [f64; 3],
    pub tangential: [f64; 2],
}

impl DistortionCoefficients {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn radial(k1: f64, k2: f64, k3: f64) -> Self {
        Self {
            radial: [k1, k2, k3],
            tangential: [0.0, 0.0],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.radial.iter().chain(&self.tangential).all(|&k| k == 0.0)
    }

    /// Maps an ideal normalized point to its distorted normalized position.
    pub fn distort(&self, p: Vector2<f64>) -> Vector2<f64> {
        let [k1, k2, k3] = self.radial;
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
        let (dx, dy) = self.tangential_offset(x, y, r2);
        Vector2::new(x * radial + dx, y * radial + dy)
    }

    fn tangential_offset(&self, x: f64, y: f64, r2: f64) -> (f64, f64) {
        let [p1, p2] = self.tangential;
        (
            2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
            p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y,
        )
    }

    /// Inverts [`distort`](Self::distort) by fixed-point iteration.
    ///
    /// On failure returns the last iterate and its residual in normalized units.
    pub fn undistort(&self, distorted: Vector2<f64>) -> std::result::Result<Vector2<f64>, f64> {
        if self.is_zero() {
            return Ok(distorted);
        }
        let [k1, k2, k3] = self.radial;
        let mut p = distorted;
        for _ in 0..RECTIFY_MAX_ITERATIONS {
            let r2 = p.norm_squared();
            let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
            let (dx, dy) = self.tangential_offset(p.x, p.y, r2);
            let next = Vector2::new((distorted.x - dx) / radial, (distorted.y - dy) / radial);
            let step = (next - p).norm();
            p = next;
            if !step.is_finite() {
                break;
            }
            if step < RECTIFY_TOLERANCE {
                return Ok(p);
            }
        }
        Err((self.distort(p) - distorted).norm())
    }
}

/// Intrinsic parameters: focal lengths in pixels, skew, principal point and lens distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub skew: f64,
    pub px: f64,
    pub py: f64,
    pub distortion: DistortionCoefficients,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        skew: f64,
        px: f64,
        py: f64,
        distortion: DistortionCoefficients,
    ) -> Result<Self> {
        let all = [fx, fy, skew, px, py];
        if !all
            .iter()
            .chain(&distortion.radial)
            .chain(&distortion.tangential)
            .all(|v| v.is_finite())
        {
            return Err(GeometryError::InvalidIntrinsics("non-finite parameter".into()));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            skew,
            px,
            py,
            distortion,
        })
    }

    /// Distortion-free intrinsics with zero skew.
    pub fn simple(f: f64, px: f64, py: f64) -> Result<Self> {
        Self::new(f, f, 0.0, px, py, DistortionCoefficients::none())
    }

    /// The upper-triangular camera matrix K.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.px, //
            0.0, self.fy, self.py, //
            0.0, 0.0, 1.0,
        )
    }

    /// Closed-form K⁻¹.
    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let (fx, fy, s, px, py) = (self.fx, self.fy, self.skew, self.px, self.py);
        Matrix3::new(
            1.0 / fx,
            -s / (fx * fy),
            (s * py - fy * px) / (fx * fy),
            0.0,
            1.0 / fy,
            -py / fy,
            0.0,
            0.0,
            1.0,
        )
    }

    fn to_normalized(&self, pixel: Pixel) -> Vector2<f64> {
        let y = (pixel.y - self.py) / self.fy;
        let x = (pixel.x - self.px - self.skew * y) / self.fx;
        Vector2::new(x, y)
    }

    fn to_pixel(&self, normalized: Vector2<f64>) -> Pixel {
        Pixel::new(
            self.fx * normalized.x + self.skew * normalized.y + self.px,
            self.fy * normalized.y + self.py,
        )
    }

    /// Undistorted normalized coordinates of a pixel, i.e. K⁻¹·ℛ(pixel) without the
    /// trailing 1.
    pub fn undistorted_normalized(&self, pixel: Pixel) -> Result<Vector2<f64>> {
        if !(pixel.x.is_finite() && pixel.y.is_finite()) {
            return Err(GeometryError::NonFinite("pixel"));
        }
        self.distortion
            .undistort(self.to_normalized(pixel))
            .map_err(|residual| GeometryError::RectificationDiverged {
                x: pixel.x,
                y: pixel.y,
                residual,
            })
    }
}

/// Rectifies a pixel: returns the homogeneous undistorted pixel with third component 1.
///
/// Zero distortion returns the input unchanged.
pub fn rectify(intrinsics: &CameraIntrinsics, pixel: Pixel) -> Result<Vector3<f64>> {
    if !(pixel.x.is_finite() && pixel.y.is_finite()) {
        return Err(GeometryError::NonFinite("pixel"));
    }
    if intrinsics.distortion.is_zero() {
        return Ok(Vector3::new(pixel.x, pixel.y, 1.0));
    }
    let rectified = intrinsics.to_pixel(intrinsics.undistorted_normalized(pixel)?);
    Ok(Vector3::new(rectified.x, rectified.y, 1.0))
}

/// Camera extrinsics: `rotation` maps world directions into the camera frame and
/// `center` is the camera position in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    center: WorldPoint,
}

impl CameraPose {
    pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

    pub fn new(rotation: Matrix3<f64>, center: WorldPoint) -> Result<Self> {
        if !rotation.iter().chain(center.coords.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite entry".into()));
        }
        let gram = rotation.transpose() * rotation;
        let off = (gram - Matrix3::identity()).amax();
        if off > Self::ORTHONORMAL_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {off:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > Self::ORTHONORMAL_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!(
                "rotation determinant is {det}, expected 1"
            )));
        }
        Ok(Self { rotation, center })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            center: WorldPoint::origin(),
        }
    }

    /// Camera at `center` looking at `target`, with image "down" pointing towards
    /// world -z. Fails when the viewing direction is vertical.
    pub fn look_at(center: WorldPoint, target: WorldPoint) -> Result<Self> {
        let forward = (target - center)
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::InvalidPose("target coincides with center".into()))?;
        let right = forward
            .cross(&Vector3::z())
            .try_normalize(1e-9)
            .ok_or_else(|| GeometryError::InvalidPose("vertical viewing direction".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self::new(rotation, center)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn center(&self) -> WorldPoint {
        self.center
    }

    pub fn world_to_camera(&self, p: &WorldPoint) -> Vector3<f64> {
        self.rotation * (p - self.center)
    }

    pub fn camera_to_world_dir(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * v
    }
}

/// Intrinsics, pose and image size of a single calibrated view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationFile", into = "CalibrationFile")]
pub struct CalibratedCamera {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    pub width: u32,
    pub height: u32,
}

impl CalibratedCamera {
    pub fn new(intrinsics: CameraIntrinsics, pose: CameraPose, width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidImageSize { width, height });
        }
        Ok(Self {
            intrinsics,
            pose,
            width,
            height,
        })
    }

    /// Whether a pixel lies inside the image rectangle `[0, width) × [0, height)`.
    pub fn contains(&self, pixel: &Pixel) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < f64::from(self.width)
            && pixel.y < f64::from(self.height)
    }

    /// Camera-frame ray K⁻¹·ℛ(pixel), scaled to unit third component.
    pub fn camera_ray(&self, pixel: Pixel) -> Result<Vector3<f64>> {
        let n = self.intrinsics.undistorted_normalized(pixel)?;
        Ok(Vector3::new(n.x, n.y, 1.0))
    }

    /// World-frame direction of the ray through a pixel.
    pub fn world_ray(&self, pixel: Pixel) -> Result<Vector3<f64>> {
        Ok(self.pose.camera_to_world_dir(&self.camera_ray(pixel)?))
    }

    /// Distorted pixel projection of a world point.
    pub fn project(&self, p: &WorldPoint) -> Result<Pixel> {
        let c = self.pose.world_to_camera(p);
        if !(c.z > 0.0) {
            return Err(GeometryError::BehindCamera {
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
        let n = Vector2::new(c.x / c.z, c.y / c.z);
        Ok(self.intrinsics.to_pixel(self.intrinsics.distortion.distort(n)))
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, p: &WorldPoint) -> f64 {
        self.pose.world_to_camera(p).z
    }

    /// Intersection of the ray through `pixel` with the court plane z = 0.
    pub fn floor_point(&self, pixel: Pixel) -> Result<WorldPoint> {
        let dir = self.world_ray(pixel)?;
        let origin = self.pose.center();
        let t = -origin.z / dir.z;
        if dir.z.abs() < 1e-12 || !t.is_finite() || t <= 0.0 {
            return Err(GeometryError::RayMissesCourt {
                x: pixel.x,
                y: pixel.y,
            });
        }
        let mut p = origin + dir * t;
        p.z = 0.0;
        Ok(p)
    }
}

/// On-disk calibration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub fx: f64,
    pub fy: f64,
    pub skew: f64,
    pub px: f64,
    pub py: f64,
    pub radial: [f64; 3],
    pub tangential: [f64; 2],
    #[serde(rename = "R")]
    pub rotation: [[f64; 3]; 3],
    pub c: [f64; 3],
    pub width: u32,
    pub height: u32,
}

impl TryFrom<CalibrationFile> for CalibratedCamera {
    type Error = GeometryError;

    fn try_from(f: CalibrationFile) -> Result<Self> {
        let intrinsics = CameraIntrinsics::new(
            f.fx,
            f.fy,
            f.skew,
            f.px,
            f.py,
            DistortionCoefficients {
                radial: f.radial,
                tangential: f.tangential,
            },
        )?;
        let r = f.rotation;
        let rotation = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        let pose = CameraPose::new(rotation, WorldPoint::new(f.c[0], f.c[1], f.c[2]))?;
        CalibratedCamera::new(intrinsics, pose, f.width, f.height)
    }
}

impl From<CalibratedCamera> for CalibrationFile {
    fn from(cam: CalibratedCamera) -> Self {
        let k = cam.intrinsics;
        let r = cam.pose.rotation;
        let c = cam.pose.center;
        Self {
            fx: k.fx,
            fy: k.fy,
            skew: k.skew,
            px: k.px,
            py: k.py,
            radial: k.distortion.radial,
            tangential: k.distortion.tangential,
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            c: [c.x, c.y, c.z],
            width: cam.width,
            height: cam.height,
        }
    }
}

/// Ball center and apparent diameter in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBall {
    pub bx: f64,
    pub by: f64,
    pub d: f64,
}

impl PixelBall {
    pub fn new(bx: f64, by: f64, d: f64) -> Result<Self> {
        let ball = Self { bx, by, d };
        ball.validate()?;
        Ok(ball)
    }

    pub fn center(&self) -> Pixel {
        Pixel::new(self.bx, self.by)
    }

    fn validate(&self) -> Result<()> {
        if !(self.bx.is_finite() && self.by.is_finite() && self.d.is_finite()) {
            return Err(GeometryError::NonFinite("ball"));
        }
        if self.d <= 0.0 {
            return Err(GeometryError::InvalidBall(format!(
                "diameter must be positive, got {}",
                self.d
            )));
        }
        Ok(())
    }
}

/// Camera-frame rays through the ball center and its upper/lower edge pixels,
/// each with unit third component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallRays {
    pub center: Vector3<f64>,
    /// Ray through `(bx, by - d/2)`.
    pub minus: Vector3<f64>,
    /// Ray through `(bx, by + d/2)`.
    pub plus: Vector3<f64>,
}

pub fn ball_ray(camera: &CalibratedCamera, ball: &PixelBall) -> Result<BallRays> {
    ball.validate()?;
    let half = ball.d / 2.0;
    Ok(BallRays {
        center: camera.camera_ray(Pixel::new(ball.bx, ball.by))?,
        minus: camera.camera_ray(Pixel::new(ball.bx, ball.by - half))?,
        plus: camera.camera_ray(Pixel::new(ball.bx, ball.by + half))?,
    })
}

/// World position of a ball of true diameter `phi` [m] seen at `ball`.
pub fn localize_from_diameter(camera: &CalibratedCamera, ball: &PixelBall, phi: f64) -> Result<WorldPoint> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(GeometryError::InvalidBall(format!(
            "true diameter must be positive, got {phi}"
        )));
    }
    let rays = ball_ray(camera, ball)?;
    let span = rays.plus.y - rays.minus.y;
    if span.abs() < MIN_EDGE_SPAN {
        return Err(GeometryError::DegenerateEdgeRays { span });
    }
    let in_camera = rays.center * (phi / span);
    Ok(camera.pose.center() + camera.pose.camera_to_world_dir(&in_camera))
}

/// Pixel center and diameter at which a ball of diameter `phi` at `position` appears;
/// the exact inverse of [`localize_from_diameter`].
pub fn project_ball(camera: &CalibratedCamera, position: &WorldPoint, phi: f64) -> Result<PixelBall> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(GeometryError::InvalidBall(format!(
            "true diameter must be positive, got {phi}"
        )));
    }
    let center = camera.project(position)?;
    let depth = camera.depth(position);
    let target = phi / depth;
    let k = &camera.intrinsics;
    if k.distortion.is_zero() {
        // Without distortion the edge-ray y span is exactly d / fy.
        return PixelBall::new(center.x, center.y, target * k.fy);
    }
    let span = |d: f64| -> Result<f64> {
        let hi = k.undistorted_normalized(Pixel::new(center.x, center.y + d / 2.0))?;
        let lo = k.undistorted_normalized(Pixel::new(center.x, center.y - d / 2.0))?;
        Ok(hi.y - lo.y - target)
    };
    let d = solve_increasing(span, target * k.fy)?;
    PixelBall::new(center.x, center.y, d)
}

/// Root of an increasing function on (0, ∞) by bracketing then Illinois false position.
fn solve_increasing(f: impl Fn(f64) -> Result<f64>, guess: f64) -> Result<f64> {
    let mut lo = guess;
    let mut f_lo = f(lo)?;
    let mut hi = guess;
    let mut f_hi = f_lo;
    if f_lo == 0.0 {
        return Ok(guess);
    }
    for _ in 0..60 {
        if f_lo < 0.0 {
            break;
        }
        lo *= 0.5;
        f_lo = f(lo)?;
    }
    for _ in 0..60 {
        if f_hi > 0.0 {
            break;
        }
        hi *= 2.0;
        f_hi = f(hi)?;
    }
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(GeometryError::DiameterSolveFailed);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let fx = f(x)?;
        if fx == 0.0 || (hi - lo) <= 1e-13 * x {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if (hi - lo).abs() <= 1e-13 * x {
            return Ok(0.5 * (lo + hi));
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Result of a center + vertical-projection localization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFix {
    pub position: WorldPoint,
    /// Point where the ground ray meets the court plane.
    pub floor: WorldPoint,
    /// Distance [m] between the center ray and the vertical line through `floor`.
    pub gap: f64,
    pub warning: Option<String>,
}

/// Localizes a ball from its center pixel and the pixel of its vertical drop onto the
/// court. Returns the point on the vertical line through the floor point closest to
/// the center ray.
pub fn localize_from_projection(
    camera: &CalibratedCamera,
    center_px: Pixel,
    ground_px: Pixel,
    gap_tolerance: f64,
) -> Result<ProjectionFix> {
    let floor = camera.floor_point(ground_px)?;
    let origin = camera.pose.center();
    let dir = camera
        .world_ray(center_px)?
        .try_normalize(0.0)
        .ok_or(GeometryError::NonFinite("center ray"))?;

    // Closest points between L(s) = floor + s·ez and C(u) = origin + u·dir.
    let w0 = floor - origin;
    let b = dir.z;
    let denom = 1.0 - b * b;
    if denom < 1e-12 {
        return Err(GeometryError::VerticalCenterRay);
    }
    let d = w0.z;
    let e = dir.dot(&w0);
    let s = (b * e - d) / denom;
    let u = (e - b * d) / denom;

    let position = WorldPoint::new(floor.x, floor.y, floor.z + s);
    let gap = (position - (origin + dir * u)).norm();
    let warning = (gap > gap_tolerance).then(|| {
        format!("center ray passes {gap:.3} m from the vertical line (tolerance {gap_tolerance} m)")
    });
    Ok(ProjectionFix {
        position,
        floor,
        gap,
        warning,
    })
}

/// Evenly spaced candidate ball heights, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightRange {
    pub min: f64,
    pub max: f64,
    pub samples: usize,
}

impl Default for HeightRange {
    fn default() -> Self {
        Self {
            min: 0.0,
            max: 5.0,
            samples: 51,
        }
    }
}

impl HeightRange {
    pub fn heights(&self) -> Result<Vec<f64>> {
        if self.samples == 0 {
            return Err(GeometryError::InvalidHeightRange("no samples".into()));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(GeometryError::InvalidHeightRange(format!(
                "[{}, {}] is empty",
                self.min, self.max
            )));
        }
        if self.samples == 1 {
            return Ok(vec![self.min]);
        }
        let step = (self.max - self.min) / (self.samples - 1) as f64;
        Ok((0..self.samples).map(|i| self.min + step * i as f64).collect())
    }
}

/// Pixel curve on which the vertical projection of a ball seen at `center_px` must lie,
/// sampled over candidate ball heights. Heights the center ray cannot reach in front of
/// the camera are skipped.
pub fn projection_locus(camera: &CalibratedCamera, center_px: Pixel, heights: &HeightRange) -> Result<Vec<Pixel>> {
    let heights = heights.heights()?;
    let origin = camera.pose.center();
    let dir = camera.world_ray(center_px)?;
    if dir.z.abs() < 1e-12 {
        return Err(GeometryError::RayMissesCourt {
            x: center_px.x,
            y: center_px.y,
        });
    }
    let mut locus = Vec::with_capacity(heights.len());
    for t in heights {
        let u = (t - origin.z) / dir.z;
        if u <= 0.0 {
            continue;
        }
        let on_ray = origin + dir * u;
        if let Ok(px) = camera.project(&WorldPoint::new(on_ray.x, on_ray.y, 0.0)) {
            locus.push(px);
        }
    }
    if locus.is_empty() {
        return Err(GeometryError::InvalidHeightRange(
            "no height in range is reachable in front of the camera".into(),
        ));
    }
    Ok(locus)
}
