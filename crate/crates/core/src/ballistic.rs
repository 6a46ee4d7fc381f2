//! Free-fall motion model, least-squares trajectory fitting and annotation denoising.
//!
//! The model is `p(t) = p0 + v0·t - (0, 0, g)·t²/2`. After moving the known gravity
//! term to the observation side it is linear in `(p0, v0)`, so the fit is a plain
//! linear least-squares problem with design matrix `[1, t]`, solved per axis through
//! a QR decomposition.

use nalgebra::{DMatrix, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, CalibratedCamera, CameraIntrinsics, CameraPose, GeometryError, Pixel, PixelBall, WorldPoint};

pub const STANDARD_GRAVITY: f64 = 9.81;
/// Residual multiple of the RMS above which an observation is flagged for review.
pub const OUTLIER_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BallisticError {
    #[error("need at least 2 distinct timestamps, got {distinct} among {count} observations")]
    RankDeficient { count: usize, distinct: usize },
    #[error("gravity must be positive and finite, got {0}")]
    InvalidGravity(f64),
    #[error("non-finite observation at index {0}")]
    NonFinite(usize),
    #[error("frame rate must be positive, got {0}")]
    InvalidFrameRate(f64),
    #[error("scene has no visible ball positions")]
    EmptyScene,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T, E = BallisticError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallisticTrajectory {
    pub p0: Vector3<f64>,
    pub v0: Vector3<f64>,
    pub g: f64,
}

impl BallisticTrajectory {
    pub fn new(p0: Vector3<f64>, v0: Vector3<f64>, g: f64) -> Result<Self> {
        check_gravity(g)?;
        Ok(Self { p0, v0, g })
    }

    pub fn evaluate(&self, t: f64) -> WorldPoint {
        evaluate(self, t)
    }

    /// Velocity at time `t`.
    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        self.v0 - Vector3::new(0.0, 0.0, self.g * t)
    }

    /// The same physical trajectory with its time origin moved to `t0`.
    pub fn rebased(&self, t0: f64) -> Self {
        Self {
            p0: self.evaluate(t0).coords,
            v0: self.velocity(t0),
            g: self.g,
        }
    }
}

fn check_gravity(g: f64) -> Result<()> {
    if g > 0.0 && g.is_finite() {
        Ok(())
    } else {
        Err(BallisticError::InvalidGravity(g))
    }
}

pub fn evaluate(trajectory: &BallisticTrajectory, t: f64) -> WorldPoint {
    let gravity = Vector3::new(0.0, 0.0, trajectory.g);
    WorldPoint::from(trajectory.p0 + trajectory.v0 * t - gravity * (t * t / 2.0))
}

/// Timestamp of a frame index at a given frame rate.
pub fn frame_time(frame: u64, fps: f64) -> Result<f64> {
    if fps > 0.0 && fps.is_finite() {
        Ok(frame as f64 / fps)
    } else {
        Err(BallisticError::InvalidFrameRate(fps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedObservation {
    pub t: f64,
    pub position: WorldPoint,
}

impl TimedObservation {
    pub fn new(t: f64, position: WorldPoint) -> Self {
        Self { t, position }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub trajectory: BallisticTrajectory,
    /// Fitted minus observed position, per observation.
    pub residuals: Vec<Vector3<f64>>,
    pub rms: f64,
    /// Fitted positions at each observation time.
    pub denoised: Vec<WorldPoint>,
}

impl FitResult {
    /// Per-observation flag: residual norm strictly above `factor × rms`.
    pub fn outliers(&self, factor: f64) -> Vec<bool> {
        let limit = factor * self.rms;
        self.residuals.iter().map(|r| r.norm() > limit).collect()
    }
}

/// Root-mean-square of the 3D residual norms.
pub fn rms(residuals: &[Vector3<f64>]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    (residuals.iter().map(|r| r.norm_squared()).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Least-squares fit of the free-fall model to timed observations.
pub fn fit(observations: &[TimedObservation], g: f64) -> Result<FitResult> {
    check_gravity(g)?;
    for (i, o) in observations.iter().enumerate() {
        if !(o.t.is_finite() && o.position.coords.iter().all(|v| v.is_finite())) {
            return Err(BallisticError::NonFinite(i));
        }
    }
    let mut times: Vec<f64> = observations.iter().map(|o| o.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.len() < 2 {
        return Err(BallisticError::RankDeficient {
            count: observations.len(),
            distinct: times.len(),
        });
    }

    let n = observations.len();
    let t_mean = observations.iter().map(|o| o.t).sum::<f64>() / n as f64;
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { observations[i].t - t_mean });
    let rhs = DMatrix::from_fn(n, 3, |i, j| {
        let o = &observations[i];
        let lift = if j == 2 { g * o.t * o.t / 2.0 } else { 0.0 };
        o.position[j] + lift
    });
    let qr = design.qr();
    let coeffs = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * rhs))
        .ok_or(BallisticError::RankDeficient {
            count: n,
            distinct: times.len(),
        })?;

    let v0 = Vector3::new(coeffs[(1, 0)], coeffs[(1, 1)], coeffs[(1, 2)]);
    let at_mean = Vector3::new(coeffs[(0, 0)], coeffs[(0, 1)], coeffs[(0, 2)]);
    let trajectory = BallisticTrajectory {
        p0: at_mean - v0 * t_mean,
        v0,
        g,
    };
    let denoised: Vec<WorldPoint> = observations.iter().map(|o| trajectory.evaluate(o.t)).collect();
    let residuals: Vec<Vector3<f64>> = denoised
        .iter()
        .zip(observations)
        .map(|(f, o)| f - o.position)
        .collect();
    Ok(FitResult {
        trajectory,
        rms: rms(&residuals),
        residuals,
        denoised,
    })
}

/// Fits the sequence and replaces every annotation by the fitted position at its time.
pub fn denoise_sequence<K: Clone>(annotations: &[(K, TimedObservation)], g: f64) -> Result<Vec<(K, WorldPoint)>> {
    let observations: Vec<TimedObservation> = annotations.iter().map(|(_, o)| *o).collect();
    let result = fit(&observations, g)?;
    Ok(annotations
        .iter()
        .zip(result.denoised)
        .map(|((id, _), p)| (id.clone(), p))
        .collect())
}

/// A camera observing one or more ballistic trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationScene {
    pub camera: CalibratedCamera,
    pub trajectories: Vec<(BallisticTrajectory, Vec<f64>)>,
    pub phi: f64,
}

impl AnnotationScene {
    /// A 2336×1752 side-line camera 7 m high watching six shots and passes sampled
    /// at 25 fps.
    pub fn default_fixture() -> Self {
        let intrinsics = CameraIntrinsics::simple(2000.0, 1168.0, 876.0).expect("valid intrinsics");
        let pose = CameraPose::look_at(WorldPoint::new(14.0, -12.0, 7.0), WorldPoint::new(14.0, 7.5, 1.0))
            .expect("valid pose");
        let camera = CalibratedCamera::new(intrinsics, pose, 2336, 1752).expect("valid camera");
        let launches = [
            ([9.0, 3.0, 2.2], [2.0, 3.5, 5.0]),
            ([19.0, 12.0, 2.0], [-1.5, -3.0, 6.0]),
            ([12.0, 7.0, 1.5], [3.0, 0.5, 4.0]),
            ([16.0, 2.0, 2.4], [-1.0, 4.0, 5.5]),
            ([10.0, 10.0, 2.0], [4.0, -2.0, 3.0]),
            ([14.0, 5.0, 1.0], [0.0, 1.0, 7.0]),
        ];
        let trajectories = launches
            .iter()
            .map(|(p, v)| {
                let traj = BallisticTrajectory::new(Vector3::from(*p), Vector3::from(*v), STANDARD_GRAVITY)
                    .expect("valid gravity");
                // Sample until the ball comes back down near the floor.
                let times: Vec<f64> = (0..)
                    .map(|i| i as f64 / 25.0)
                    .take_while(|&t| t < 3.0 && traj.evaluate(t).z > 0.3)
                    .collect();
                (traj, times)
            })
            .collect();
        Self {
            camera,
            trajectories,
            phi: geometry::DEFAULT_BALL_DIAMETER,
        }
    }

    /// World positions visible in the image.
    pub fn visible_positions(&self) -> Vec<WorldPoint> {
        self.trajectories
            .iter()
            .flat_map(|(traj, times)| times.iter().map(move |&t| traj.evaluate(t)))
            .filter(|p| {
                self.camera
                    .project(p)
                    .map(|px| self.camera.contains(&px))
                    .unwrap_or(false)
                    && self
                        .camera
                        .project(&WorldPoint::new(p.x, p.y, 0.0))
                        .map(|px| self.camera.contains(&px))
                        .unwrap_or(false)
            })
            .collect()
    }
}

/// Standard deviations [px] of the simulated annotation clicks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickNoise {
    pub center_sigma: f64,
    pub diameter_sigma: f64,
    pub ground_sigma: f64,
    /// Systematic offset added to annotated diameters.
    pub diameter_bias: f64,
}

impl ClickNoise {
    pub fn uniform(sigma: f64) -> Self {
        Self {
            center_sigma: sigma,
            diameter_sigma: sigma,
            ground_sigma: sigma,
            diameter_bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(start: f64, bin_width: f64, bins: usize) -> Self {
        Self {
            start,
            bin_width,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn add(&mut self, value: f64) {
        let idx = ((value - self.start) / self.bin_width).floor();
        if idx < 0.0 {
            self.underflow += 1;
        } else if idx >= self.counts.len() as f64 {
            self.overflow += 1;
        } else {
            self.counts[idx as usize] += 1;
        }
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let lo = self.start + self.bin_width * i as f64;
        (lo, lo + self.bin_width)
    }
}

/// Distribution of diameter-equivalent errors [px] for one annotation method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub count: usize,
    pub failures: usize,
    /// Mean signed error (estimated minus true diameter).
    pub mean: f64,
    pub std: f64,
    pub mean_abs: f64,
    pub max_abs: f64,
    /// Mean signed depth error [m] (positive: placed too far from the camera).
    pub mean_depth_error: f64,
    pub histogram: Histogram,
}

#[derive(Default)]
struct StatsAccumulator {
    errors: Vec<f64>,
    depth_errors: Vec<f64>,
    failures: usize,
}

impl StatsAccumulator {
    fn finish(self) -> MethodStats {
        let n = self.errors.len();
        let mut histogram = Histogram::new(-5.0, 0.25, 40);
        let (mut mean, mut std, mut mean_abs, mut max_abs, mut mean_depth_error) = (0.0, 0.0, 0.0, 0.0, 0.0);
        if n > 0 {
            let nf = n as f64;
            mean = self.errors.iter().sum::<f64>() / nf;
            std = (self.errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / nf).sqrt();
            mean_abs = self.errors.iter().map(|e| e.abs()).sum::<f64>() / nf;
            max_abs = self.errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            mean_depth_error = self.depth_errors.iter().sum::<f64>() / nf;
            for &e in &self.errors {
                histogram.add(e);
            }
        }
        MethodStats {
            count: n,
            failures: self.failures,
            mean,
            std,
            mean_abs,
            max_abs,
            mean_depth_error,
            histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationComparison {
    pub positions: usize,
    pub seeds: u64,
    pub diameter: MethodStats,
    pub projection: MethodStats,
}

/// Monte Carlo comparison of the two single-view annotation methods.
///
/// For every replicate and visible ball position, simulates (a) center + diameter
/// clicks localized through the diameter relation and (b) center + ground-projection
/// clicks localized through the vertical line. Each 3D estimate is converted back to
/// the pixel diameter it implies, and the difference with the true diameter is
/// recorded. Replicate `i` draws its noise from a generator seeded with
/// `base_seed + i`.
pub fn compare_annotation_methods(
    scene: &AnnotationScene,
    noise: &ClickNoise,
    seeds: u64,
    base_seed: u64,
) -> Result<AnnotationComparison> {
    let positions = scene.visible_positions();
    if positions.is_empty() {
        return Err(BallisticError::EmptyScene);
    }
    let cam = &scene.camera;
    let truths = positions
        .iter()
        .map(|p| {
            let ball = geometry::project_ball(cam, p, scene.phi)?;
            let ground = cam.project(&WorldPoint::new(p.x, p.y, 0.0))?;
            Ok((*p, ball, ground))
        })
        .collect::<Result<Vec<_>>>()?;

    let gauss = |sigma: f64| Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let center_noise = gauss(noise.center_sigma);
    let diameter_noise = gauss(noise.diameter_sigma);
    let ground_noise = gauss(noise.ground_sigma);

    let mut by_diameter = StatsAccumulator::default();
    let mut by_projection = StatsAccumulator::default();
    for replicate in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(replicate));
        for (truth, ball, ground) in &truths {
            let true_depth = cam.depth(truth);

            let center = Pixel::new(
                ball.bx + center_noise.sample(&mut rng),
                ball.by + center_noise.sample(&mut rng),
            );
            let d = ball.d + noise.diameter_bias + diameter_noise.sample(&mut rng);
            let estimate = PixelBall::new(center.x, center.y, d)
                .and_then(|b| geometry::localize_from_diameter(cam, &b, scene.phi));
            record(&mut by_diameter, cam, scene.phi, estimate, ball.d, true_depth);

            let center = Pixel::new(
                ball.bx + center_noise.sample(&mut rng),
                ball.by + center_noise.sample(&mut rng),
            );
            let ground_px = Pixel::new(
                ground.x + ground_noise.sample(&mut rng),
                ground.y + ground_noise.sample(&mut rng),
            );
            let estimate =
                geometry::localize_from_projection(cam, center, ground_px, f64::INFINITY).map(|fix| fix.position);
            record(&mut by_projection, cam, scene.phi, estimate, ball.d, true_depth);
        }
    }
    Ok(AnnotationComparison {
        positions: positions.len(),
        seeds,
        diameter: by_diameter.finish(),
        projection: by_projection.finish(),
    })
}

fn record(
    acc: &mut StatsAccumulator,
    cam: &CalibratedCamera,
    phi: f64,
    estimate: std::result::Result<WorldPoint, GeometryError>,
    true_d: f64,
    true_depth: f64,
) {
    match estimate.and_then(|p| geometry::project_ball(cam, &p, phi).map(|b| (p, b))) {
        Ok((p, implied)) => {
            acc.errors.push(implied.d - true_d);
            acc.depth_errors.push(cam.depth(&p) - true_depth);
        }
        Err(_) => acc.failures += 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn sample(traj: &BallisticTrajectory, times: &[f64]) -> Vec<TimedObservation> {
        times.iter().map(|&t| TimedObservation::new(t, traj.evaluate(t))).collect()
    }

    #[test]
    fn evaluate_hand_values() {
        let traj = BallisticTrajectory::new(Vector3::new(0.0, 0.0, 2.0), Vector3::new(1.0, 0.0, 5.0), 9.81).unwrap();
        assert_abs_diff_eq!(traj.evaluate(1.0), WorldPoint::new(1.0, 0.0, 2.095), epsilon = 1e-12);
        assert_eq!(traj.evaluate(0.0), WorldPoint::from(traj.p0));
        let rest = BallisticTrajectory::new(Vector3::zeros(), Vector3::zeros(), 9.81).unwrap();
        assert_abs_diff_eq!(rest.evaluate(1.0), WorldPoint::new(0.0, 0.0, -4.905), epsilon = 1e-12);
    }

    #[test]
    fn parabola_is_symmetric_about_apex() {
        let traj = BallisticTrajectory::new(Vector3::new(1.0, 2.0, 1.5), Vector3::new(0.3, -2.0, 6.2), 9.81).unwrap();
        let apex = traj.v0.z / traj.g;
        for dt in [0.05, 0.3, 0.61, 1.2] {
            assert_abs_diff_eq!(traj.evaluate(apex - dt).z, traj.evaluate(apex + dt).z, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_bad_gravity() {
        assert!(BallisticTrajectory::new(Vector3::zeros(), Vector3::zeros(), 0.0).is_err());
        assert!(fit(&[], -1.0).is_err());
    }

    #[test]
    fn noiseless_recovery() {
        let traj = BallisticTrajectory::new(Vector3::new(3.0, 4.0, 2.1), Vector3::new(2.5, -1.0, 5.5), 9.81).unwrap();
        let obs = sample(&traj, &[0.0, 0.04, 0.08, 0.12, 0.16]);
        let result = fit(&obs, 9.81).unwrap();
        assert!((result.trajectory.p0 - traj.p0).amax() < 1e-9);
        assert!((result.trajectory.v0 - traj.v0).amax() < 1e-9);
        assert!(result.rms < 1e-9);
        assert_eq!(result.residuals.len(), obs.len());
    }

    #[test]
    fn two_timestamps_interpolate() {
        let obs = [
            TimedObservation::new(0.3, WorldPoint::new(1.0, 2.0, 3.0)),
            TimedObservation::new(0.7, WorldPoint::new(-1.0, 5.0, 2.0)),
        ];
        let result = fit(&obs, 9.81).unwrap();
        for r in &result.residuals {
            assert!(r.amax() < 1e-9);
        }
    }

    #[test]
    fn single_timestamp_is_rank_deficient() {
        let obs = [
            TimedObservation::new(0.5, WorldPoint::new(1.0, 2.0, 3.0)),
            TimedObservation::new(0.5, WorldPoint::new(1.1, 2.0, 3.0)),
        ];
        assert!(matches!(
            fit(&obs, 9.81),
            Err(BallisticError::RankDeficient { count: 2, distinct: 1 })
        ));
        assert!(fit(&obs[..1], 9.81).is_err());
    }

    #[test]
    fn time_shift_keeps_denoised_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let traj = BallisticTrajectory::new(Vector3::new(5.0, 2.0, 2.0), Vector3::new(1.0, 3.0, 4.0), 9.81).unwrap();
        let obs: Vec<_> = (0..12)
            .map(|i| {
                let t = i as f64 / 25.0;
                let noise = Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * 0.2;
                TimedObservation::new(t, traj.evaluate(t) + noise)
            })
            .collect();
        let base = fit(&obs, 9.81).unwrap();
        let delta = 3.7;
        let shifted: Vec<_> = obs.iter().map(|o| TimedObservation::new(o.t + delta, o.position)).collect();
        let moved = fit(&shifted, 9.81).unwrap();
        for (a, b) in base.denoised.iter().zip(&moved.denoised) {
            assert!((a - b).amax() < 1e-9);
        }
        // Closed-form reparameterization: the shifted fit, rebased at delta, is the original.
        let rebased = moved.trajectory.rebased(delta);
        assert!((rebased.p0 - base.trajectory.p0).amax() < 1e-9);
        assert!((rebased.v0 - base.trajectory.v0).amax() < 1e-9);
    }

    #[test]
    fn fit_beats_perturbed_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let traj = BallisticTrajectory::new(Vector3::new(1.0, 1.0, 2.5), Vector3::new(4.0, 1.0, 3.0), 9.81).unwrap();
        let noise = Normal::new(0.0, 0.1).unwrap();
        let obs: Vec<_> = (0..15)
            .map(|i| {
                let t = i as f64 / 25.0;
                let n = Vector3::from_fn(|_, _| noise.sample(&mut rng));
                TimedObservation::new(t, traj.evaluate(t) + n)
            })
            .collect();
        let best = fit(&obs, 9.81).unwrap();
        for _ in 0..100 {
            let candidate = BallisticTrajectory {
                p0: best.trajectory.p0 + Vector3::from_fn(|_, _| noise.sample(&mut rng)),
                v0: best.trajectory.v0 + Vector3::from_fn(|_, _| noise.sample(&mut rng)),
                g: 9.81,
            };
            let residuals: Vec<_> = obs.iter().map(|o| candidate.evaluate(o.t) - o.position).collect();
            assert!(best.rms <= rms(&residuals));
        }
    }

    #[test]
    fn noisy_fit_improves_with_more_samples() {
        let noise = Normal::new(0.0, 0.1).unwrap();
        let traj = BallisticTrajectory::new(Vector3::new(4.0, 6.0, 2.0), Vector3::new(2.0, -1.0, 5.0), 9.81).unwrap();
        let run = |n: usize, seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let obs: Vec<_> = (0..n)
                .map(|i| {
                    let t = i as f64 * 1.0 / (n - 1) as f64;
                    TimedObservation::new(t, traj.evaluate(t) + Vector3::from_fn(|_, _| noise.sample(&mut rng)))
                })
                .collect();
            let r = fit(&obs, 9.81).unwrap();
            let err = (r.trajectory.p0 - traj.p0).norm() + (r.trajectory.v0 - traj.v0).norm();
            (r.rms, err)
        };
        let (mut err10, mut err100, mut rms_sum, mut within) = (0.0, 0.0, 0.0, 0);
        for seed in 0..100 {
            let (rms10, e10) = run(10, seed);
            rms_sum += rms10;
            within += usize::from(rms10 <= 0.2);
            err10 += e10;
            err100 += run(100, seed).1;
        }
        assert!(rms_sum / 100.0 <= 0.2, "mean rms {}", rms_sum / 100.0);
        assert!(within >= 95, "{within}/100 fits with rms <= 0.2");
        assert!(err100 < err10, "{err100} vs {err10}");
    }

    #[test]
    fn outlier_flags() {
        let traj = BallisticTrajectory::new(Vector3::new(2.0, 2.0, 2.0), Vector3::new(1.0, 1.0, 4.0), 9.81).unwrap();
        let mut obs = sample(&traj, &(0..20).map(|i| i as f64 / 25.0).collect::<Vec<_>>());
        for (i, o) in obs.iter_mut().enumerate() {
            o.position.x += if i % 2 == 0 { 0.01 } else { -0.01 };
        }
        obs[7].position.z += 1.5;
        let result = fit(&obs, 9.81).unwrap();
        let flags = result.outliers(OUTLIER_FACTOR);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
        assert!(flags[7]);
    }

    #[test]
    fn denoise_keeps_ids_in_order() {
        let traj = BallisticTrajectory::new(Vector3::new(0.0, 0.0, 3.0), Vector3::new(1.0, 0.0, 2.0), 9.81).unwrap();
        let ann: Vec<_> = (0..4)
            .map(|i| (format!("img{i}"), TimedObservation::new(i as f64 * 0.1, traj.evaluate(i as f64 * 0.1))))
            .collect();
        let out = denoise_sequence(&ann, 9.81).unwrap();
        assert_eq!(out.len(), 4);
        for ((id, p), (id0, o)) in out.iter().zip(&ann) {
            assert_eq!(id, id0);
            assert!((p - o.position).amax() < 1e-9);
        }
    }

    #[test]
    fn frame_times() {
        assert_eq!(frame_time(50, 25.0).unwrap(), 2.0);
        assert!(frame_time(1, 0.0).is_err());
    }

    #[test]
    fn noiseless_comparison_is_exact() {
        let scene = AnnotationScene::default_fixture();
        let report = compare_annotation_methods(&scene, &ClickNoise::uniform(0.0), 2, 0).unwrap();
        assert!(report.positions > 0);
        assert!(report.diameter.max_abs < 1e-6, "{}", report.diameter.max_abs);
        assert!(report.projection.max_abs < 1e-6, "{}", report.projection.max_abs);
    }

    #[test]
    fn negative_diameter_bias_pushes_ball_away() {
        let scene = AnnotationScene::default_fixture();
        let noise = ClickNoise {
            center_sigma: 0.0,
            diameter_sigma: 0.0,
            ground_sigma: 0.0,
            diameter_bias: -1.0,
        };
        let report = compare_annotation_methods(&scene, &noise, 1, 0).unwrap();
        assert!(report.diameter.mean_depth_error > 0.0);
        assert_abs_diff_eq!(report.diameter.mean, -1.0, epsilon = 1e-6);
    }

    #[test]
    fn empty_scene_fails() {
        let mut scene = AnnotationScene::default_fixture();
        scene.trajectories.clear();
        assert!(matches!(
            compare_annotation_methods(&scene, &ClickNoise::uniform(1.0), 1, 0),
            Err(BallisticError::EmptyScene)
        ));
    }

    #[test]
    fn default_fixture_ball_sizes_are_plausible() {
        let scene = AnnotationScene::default_fixture();
        let positions = scene.visible_positions();
        assert!(positions.len() > 50, "{}", positions.len());
        for p in positions {
            let d = geometry::project_ball(&scene.camera, &p, scene.phi).unwrap().d;
            assert!((10.0..=50.0).contains(&d), "{d}");
        }
    }
}
