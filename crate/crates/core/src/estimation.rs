//! Detector outputs, training losses, candidate selection and pluggable diameter estimators.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CalibratedCamera, Pixel, PixelBall};
use crate::imageproc::{self, BaselineConfig, HeatmapPatch, ImageGrid, ImageProcError};

pub const PROBABILITY_EPSILON: f64 = 1e-7;
pub const DEFAULT_DELTA: f64 = 1.0;
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("invalid loss parameters: {0}")]
    InvalidParams(String),
    #[error("ball sample (c = 1) needs both d and d_hat")]
    MissingDiameter,
    #[error("unknown estimator {name:?}; registered: {}", known.join(", "))]
    UnknownEstimator { name: String, known: Vec<String> },
    #[error("estimator {0} needs ground truth")]
    MissingTruth(&'static str),
    #[error("estimator {0} needs a camera")]
    MissingCamera(&'static str),
    #[error("patch side must be at least 1")]
    InvalidSide,
    #[error("detections line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    ImageProc(#[from] ImageProcError),
}

pub type Result<T, E = EstimationError> = std::result::Result<T, E>;

/// A ball candidate: center, confidence ĉ and optional diameter d̂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionRecord", into = "DetectionRecord")]
pub struct Detection {
    pub center: Pixel,
    pub confidence: f64,
    pub diameter: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    x: f64,
    y: f64,
    confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diameter: Option<f64>,
}

impl TryFrom<DetectionRecord> for Detection {
    type Error = EstimationError;
    fn try_from(r: DetectionRecord) -> Result<Self> {
        Detection::new(Pixel::new(r.x, r.y), r.confidence, r.diameter)
    }
}

impl From<Detection> for DetectionRecord {
    fn from(d: Detection) -> Self {
        DetectionRecord {
            x: d.center.x,
            y: d.center.y,
            confidence: d.confidence,
            diameter: d.diameter,
        }
    }
}

impl Detection {
    pub fn new(center: Pixel, confidence: f64, diameter: Option<f64>) -> Result<Self> {
        if !(center.x.is_finite() && center.y.is_finite()) {
            return Err(EstimationError::InvalidDetection("non-finite center".into()));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(EstimationError::InvalidDetection(format!("confidence {confidence} outside [0, 1]")));
        }
        if let Some(d) = diameter {
            if !(d > 0.0 && d.is_finite()) {
                return Err(EstimationError::InvalidDetection(format!("diameter {d} must be positive")));
            }
        }
        Ok(Self {
            center,
            confidence,
            diameter,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub delta: f64,
    pub alpha: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl LossParams {
    pub fn new(delta: f64, alpha: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(EstimationError::InvalidParams(format!("delta {delta} must be positive")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(EstimationError::InvalidParams(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(Self { delta, alpha })
    }
}

/// Binary cross-entropy with ĉ clamped to [ε, 1 − ε].
pub fn bce_loss(c: bool, c_hat: f64) -> f64 {
    let p = c_hat.clamp(PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON);
    if c {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn huber_loss(d: f64, d_hat: f64, delta: f64) -> f64 {
    let e = (d - d_hat).abs();
    if e <= delta {
        0.5 * e * e
    } else {
        delta * (e - 0.5 * delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSample {
    pub c: bool,
    pub c_hat: f64,
    pub d: Option<f64>,
    pub d_hat: Option<f64>,
}

/// α·L_d + (1 − α)·L_c for balls; non-balls contribute only (1 − α)·L_c.
pub fn combined_loss(sample: &LossSample, params: &LossParams) -> Result<f64> {
    let params = LossParams::new(params.delta, params.alpha)?;
    let classification = (1.0 - params.alpha) * bce_loss(sample.c, sample.c_hat);
    if !sample.c {
        return Ok(classification);
    }
    let (Some(d), Some(d_hat)) = (sample.d, sample.d_hat) else {
        return Err(EstimationError::MissingDiameter);
    };
    Ok(params.alpha * huber_loss(d, d_hat, params.delta) + classification)
}

/// Highest-confidence candidate; the first one wins ties.
pub fn select_candidate(candidates: &[Detection]) -> Result<(usize, Detection)> {
    let mut best: Option<(usize, Detection)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if best.is_none_or(|(_, b)| c.confidence > b.confidence) {
            best = Some((i, *c));
        }
    }
    best.ok_or(EstimationError::NoCandidates)
}

/// Rounds half away from zero on both axes.
pub fn round_center(center: Pixel) -> (i64, i64) {
    (center.x.round() as i64, center.y.round() as i64)
}

/// `side × side` crop around the rounded center, zero outside the image. The rounded
/// center lands at index `side / 2`.
pub fn extract_patch(image: &ImageGrid, center: Pixel, side: usize) -> Result<HeatmapPatch> {
    if side == 0 {
        return Err(EstimationError::InvalidSide);
    }
    let (cx, cy) = round_center(center);
    let half = (side / 2) as i64;
    let origin = (cx - half, cy - half);
    let grid = ImageGrid::from_fn(side, side, |x, y| {
        image.get_signed(origin.0 + x as i64, origin.1 + y as i64).unwrap_or(0.0)
    });
    Ok(HeatmapPatch::new(grid, origin)?)
}

/// Inputs available to an estimator for one candidate.
#[derive(Debug, Clone, Copy)]
pub struct EstimationContext<'a> {
    pub patch: &'a HeatmapPatch,
    pub candidate: Detection,
    pub camera: Option<&'a CalibratedCamera>,
    pub truth: Option<&'a PixelBall>,
    pub phi: f64,
}

pub trait DiameterEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    /// Fills in the candidate's diameter; `None` when no estimate exists.
    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Detection>;
}

/// Hough-circle baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct HctEstimator {
    pub config: BaselineConfig,
}

impl DiameterEstimator for HctEstimator {
    fn name(&self) -> &'static str {
        "hct"
    }

    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Detection> {
        let camera = ctx.camera.ok_or(EstimationError::MissingCamera("hct"))?;
        let circle = imageproc::baseline_estimate(ctx.patch, camera, &self.config, ctx.phi)?;
        Ok(Detection {
            diameter: circle.map(|c| c.diameter),
            ..ctx.candidate
        })
    }
}

/// Reads the annotated diameter.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleEstimator;

impl DiameterEstimator for OracleEstimator {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Detection> {
        let truth = ctx.truth.ok_or(EstimationError::MissingTruth("oracle"))?;
        Ok(Detection {
            diameter: Some(truth.d),
            ..ctx.candidate
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantEstimator {
    pub diameter: f64,
    pub confidence: f64,
}

impl Default for ConstantEstimator {
    fn default() -> Self {
        Self {
            diameter: 20.0,
            confidence: 1.0,
        }
    }
}

impl DiameterEstimator for ConstantEstimator {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn estimate(&self, ctx: &EstimationContext<'_>) -> Result<Detection> {
        Ok(Detection {
            center: ctx.candidate.center,
            confidence: self.confidence,
            diameter: Some(self.diameter),
        })
    }
}

pub struct EstimatorRegistry {
    estimators: BTreeMap<&'static str, Box<dyn DiameterEstimator>>,
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self {
            estimators: BTreeMap::new(),
        }
    }

    /// `hct`, `oracle` and `constant`.
    pub fn with_builtins(config: BaselineConfig) -> Self {
        Self::empty()
            .with(HctEstimator { config })
            .with(OracleEstimator)
            .with(ConstantEstimator::default())
    }

    pub fn with(mut self, estimator: impl DiameterEstimator + 'static) -> Self {
        self.estimators.insert(estimator.name(), Box::new(estimator));
        self
    }

    pub fn names(&self) -> Vec<String> {
        self.estimators.keys().map(|k| k.to_string()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn DiameterEstimator> {
        self.estimators
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| EstimationError::UnknownEstimator {
                name: name.to_string(),
                known: self.names(),
            })
    }
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        Self::with_builtins(BaselineConfig::default())
    }
}

pub fn estimate_diameter(registry: &EstimatorRegistry, name: &str, ctx: &EstimationContext<'_>) -> Result<Detection> {
    registry.get(name)?.estimate(ctx)
}

/// One line of a detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsRecord {
    pub image_id: String,
    pub candidates: Vec<Detection>,
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionsRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| EstimationError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_detections(path: &Path, records: &[DetectionsRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        let line = serde_json::to_string(r).expect("detections serialize");
        writeln!(f, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, CameraPose, WorldPoint};
    use crate::imageproc::{render_disc, CourtBounds};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn det(c: f64) -> Detection {
        Detection::new(Pixel::new(1.0, 2.0), c, None).unwrap()
    }

    #[test]
    fn bce_values() {
        assert_abs_diff_eq!(bce_loss(true, 0.5), std::f64::consts::LN_2, epsilon = 1e-9);
        assert!(bce_loss(true, 1.0 - PROBABILITY_EPSILON) < 1e-6);
        for p in [0.1, 0.3, 0.9] {
            assert_abs_diff_eq!(bce_loss(true, p), bce_loss(false, 1.0 - p), epsilon = 1e-12);
        }
        assert!(bce_loss(true, 0.0).is_finite());
        assert!(bce_loss(false, 1.0).is_finite());
    }

    #[test]
    fn bce_is_monotone() {
        let grid: Vec<f64> = (1..=1000).map(|i| i as f64 / 1001.0).collect();
        for w in grid.windows(2) {
            assert!(bce_loss(true, w[1]) < bce_loss(true, w[0]));
            assert!(bce_loss(false, w[1]) > bce_loss(false, w[0]));
        }
    }

    #[test]
    fn huber_values() {
        assert_abs_diff_eq!(huber_loss(10.0, 10.5, 1.0), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(huber_loss(10.0, 12.0, 1.0), 1.5, epsilon = 1e-15);
        for delta in [0.5, 1.0, 2.0] {
            let below = huber_loss(0.0, delta * (1.0 - 1e-15), delta);
            let above = huber_loss(0.0, delta * (1.0 + 1e-15), delta);
            assert!((below - 0.5 * delta * delta).abs() < 1e-12);
            assert!((above - 0.5 * delta * delta).abs() < 1e-12);
        }
    }

    #[test]
    fn huber_slope_is_continuous_at_delta() {
        for delta in [0.5, 1.0, 3.0] {
            let h = 1e-6;
            let f = |e: f64| huber_loss(0.0, e, delta);
            let left = (f(delta) - f(delta - h)) / h;
            let right = (f(delta + h) - f(delta)) / h;
            assert!((left - right).abs() < 1e-6, "{left} vs {right}");
        }
    }

    #[test]
    fn combined_values() {
        let p = LossParams::default();
        let perfect = LossSample {
            c: true,
            c_hat: 1.0,
            d: Some(20.0),
            d_hat: Some(20.0),
        };
        assert!(combined_loss(&perfect, &p).unwrap() < 1e-6);
        let neg = LossSample {
            c: false,
            c_hat: 0.5,
            d: None,
            d_hat: Some(99.0),
        };
        assert_abs_diff_eq!(combined_loss(&neg, &p).unwrap(), 0.5 * std::f64::consts::LN_2, epsilon = 1e-12);
        let s = LossSample {
            c: true,
            c_hat: 0.3,
            d: Some(20.0),
            d_hat: Some(23.0),
        };
        let only_d = LossParams::new(1.0, 1.0).unwrap();
        assert_eq!(combined_loss(&s, &only_d).unwrap(), huber_loss(20.0, 23.0, 1.0));
        assert!(matches!(
            combined_loss(&LossSample { d: None, ..s }, &p),
            Err(EstimationError::MissingDiameter)
        ));
        assert!(LossParams::new(0.0, 0.5).is_err());
        assert!(LossParams::new(1.0, 1.5).is_err());
    }

    #[test]
    fn selection_rules() {
        let c = [det(0.2), det(0.9), det(0.4)];
        assert_eq!(select_candidate(&c).unwrap().0, 1);
        assert_eq!(select_candidate(&[det(0.7), det(0.7)]).unwrap().0, 0);
        assert_eq!(select_candidate(&[det(0.0)]).unwrap().0, 0);
        assert!(matches!(select_candidate(&[]), Err(EstimationError::NoCandidates)));
    }

    #[test]
    fn detection_validation_and_json() {
        assert!(Detection::new(Pixel::new(0.0, 0.0), 1.2, None).is_err());
        assert!(Detection::new(Pixel::new(0.0, 0.0), 0.5, Some(0.0)).is_err());
        let d = Detection::new(Pixel::new(3.0, 4.0), 0.5, Some(12.0)).unwrap();
        let json = serde_json::to_value(d).unwrap();
        assert_eq!(json, serde_json::json!({"x": 3.0, "y": 4.0, "confidence": 0.5, "diameter": 12.0}));
        let bare: Detection = serde_json::from_str(r#"{"x":1,"y":2,"confidence":0.1}"#).unwrap();
        assert_eq!(bare.diameter, None);
        assert!(serde_json::from_str::<Detection>(r#"{"x":1,"y":2,"confidence":2}"#).is_err());
    }

    #[test]
    fn interior_patch_is_exact_crop() {
        let img = ImageGrid::from_fn(100, 80, |x, y| ((x * 7 + y * 3) % 256) as f64);
        let p = extract_patch(&img, Pixel::new(50.4, 40.5), 16).unwrap();
        assert_eq!(p.origin(), (42, 33));
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(p.get(x, y), img.get(42 + x, 33 + y));
            }
        }
        // Half rounds away from zero.
        assert_eq!(round_center(Pixel::new(-0.5, 2.5)), (-1, 3));
    }

    #[test]
    fn corner_patch_is_zero_padded() {
        let img = ImageGrid::from_fn(100, 100, |_, _| 9.0);
        let p = extract_patch(&img, Pixel::new(0.0, 0.0), 64).unwrap();
        assert_eq!(p.origin(), (-32, -32));
        for y in 0..64 {
            for x in 0..64 {
                let expected = if x >= 32 && y >= 32 { 9.0 } else { 0.0 };
                assert_eq!(p.get(x, y), expected);
            }
        }
        assert_eq!(imageproc::DEFAULT_PATCH_SIDE, 64);
        assert!(extract_patch(&img, Pixel::new(0.0, 0.0), 0).is_err());
    }

    fn fixture_camera() -> CalibratedCamera {
        let k = CameraIntrinsics::simple(1000.0, 500.0, 500.0).unwrap();
        let pose = CameraPose::look_at(WorldPoint::new(0.0, -10.0, 0.0), WorldPoint::new(0.0, 0.0, 0.0)).unwrap();
        CalibratedCamera::new(k, pose, 1000, 1000).unwrap()
    }

    #[test]
    fn registry_builtins() {
        let court = CourtBounds {
            length: 0.0,
            width: 20.0,
            margin: 0.0,
            height_min: 0.0,
            height_max: 0.0,
        };
        let config = BaselineConfig {
            rho: 3,
            court,
            ..BaselineConfig::default()
        };
        let reg = EstimatorRegistry::with_builtins(config);
        assert_eq!(reg.names(), ["constant", "hct", "oracle"]);
        let err = reg.get("cnn").err().unwrap().to_string();
        assert!(err.contains("constant, hct, oracle"), "{err}");

        let cam = fixture_camera();
        let mut grid = ImageGrid::zeros(64, 64);
        render_disc(&mut grid, Pixel::new(32.0, 32.0), 18.0, 255.0);
        let patch = HeatmapPatch::new(grid, (468, 468)).unwrap();
        let truth = PixelBall::new(500.0, 500.0, 18.0).unwrap();
        let candidate = Detection::new(Pixel::new(500.0, 500.0), 0.8, None).unwrap();
        let ctx = EstimationContext {
            patch: &patch,
            candidate,
            camera: Some(&cam),
            truth: Some(&truth),
            phi: 0.24,
        };

        assert_eq!(estimate_diameter(&reg, "oracle", &ctx).unwrap().diameter, Some(18.0));
        let c = estimate_diameter(&reg, "constant", &ctx).unwrap();
        assert_eq!((c.diameter, c.confidence), (Some(20.0), 1.0));

        let hct = estimate_diameter(&reg, "hct", &ctx).unwrap();
        let direct = imageproc::baseline_estimate(&patch, &cam, &config, 0.24).unwrap().unwrap();
        assert_eq!(hct.diameter, Some(direct.diameter));
        assert_eq!(hct.confidence, 0.8);

        assert!(estimate_diameter(&reg, "oracle", &EstimationContext { truth: None, ..ctx }).is_err());
        assert!(estimate_diameter(&reg, "hct", &EstimationContext { camera: None, ..ctx }).is_err());
    }

    #[test]
    fn detections_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let recs = vec![
            DetectionsRecord {
                image_id: "a".into(),
                candidates: vec![det(0.3), Detection::new(Pixel::new(5.0, 6.0), 0.9, Some(20.0)).unwrap()],
            },
            DetectionsRecord {
                image_id: "b".into(),
                candidates: vec![],
            },
        ];
        write_detections(&path, &recs).unwrap();
        assert_eq!(read_detections(&path).unwrap(), recs);
        fs::write(&path, "{\"image_id\":\"a\",\"candidates\":[]}\nnot json\n").unwrap();
        assert!(matches!(read_detections(&path), Err(EstimationError::Parse { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn selection_invariant_under_monotone_maps(confs in proptest::collection::vec(0.0f64..=1.0, 1..12), k in 0.1f64..5.0) {
            let a: Vec<Detection> = confs.iter().map(|&c| det(c)).collect();
            let b: Vec<Detection> = confs.iter().map(|&c| det(c.powf(k))).collect();
            let c: Vec<Detection> = confs.iter().map(|&c| det((c + 1.0).ln() / 2f64.ln())).collect();
            let ia = select_candidate(&a).unwrap().0;
            prop_assert_eq!(ia, select_candidate(&b).unwrap().0);
            prop_assert_eq!(ia, select_candidate(&c).unwrap().0);
        }

        #[test]
        fn negative_samples_ignore_diameter(c_hat in 0.0f64..=1.0, d1 in 1.0f64..100.0, d2 in 1.0f64..100.0) {
            let p = LossParams::default();
            let s1 = LossSample { c: false, c_hat, d: Some(20.0), d_hat: Some(d1) };
            let s2 = LossSample { c: false, c_hat, d: None, d_hat: Some(d2) };
            prop_assert_eq!(combined_loss(&s1, &p).unwrap().to_bits(), combined_loss(&s2, &p).unwrap().to_bits());
        }

        #[test]
        fn huber_is_symmetric_and_bounded(d in -50.0f64..50.0, e in -50.0f64..50.0, delta in 0.1f64..5.0) {
            let h = huber_loss(d, d + e, delta);
            prop_assert_eq!(h, huber_loss(d + e, d, delta));
            prop_assert!(h <= 0.5 * e * e + 1e-9);
            prop_assert!(h >= 0.0);
        }
    }
}
