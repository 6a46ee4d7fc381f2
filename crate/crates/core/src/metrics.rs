//! Diameter and localization errors, and the detection ROC.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::Detection;
use crate::geometry::{self, CalibratedCamera, PixelBall, WorldPoint};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no usable samples ({excluded} excluded)")]
    NoSamples { excluded: usize },
    #[error("no images to evaluate")]
    NoImages,
    #[error("invalid match radius {0}")]
    InvalidRadius(f64),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// One labelled ball and the prediction made for it.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationSample<'a> {
    pub truth: PixelBall,
    pub position: WorldPoint,
    pub predicted: Detection,
    pub camera: &'a CalibratedCamera,
}

/// Which center the predicted diameter is paired with when localizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalizationMode {
    /// Labelled center with predicted diameter, measured against the position the
    /// labelled diameter implies. Isolates diameter error.
    #[default]
    TrueCenter,
    /// Predicted center and diameter, measured against the stored 3D position.
    EndToEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mae {
    pub value: f64,
    pub n: usize,
    pub excluded: usize,
}

fn mean_of(errors: impl Iterator<Item = Option<f64>>) -> Result<Mae> {
    let mut sum = 0.0;
    let mut n = 0;
    let mut excluded = 0;
    for e in errors {
        match e {
            Some(e) => {
                sum += e;
                n += 1;
            }
            None => excluded += 1,
        }
    }
    if n == 0 {
        return Err(MetricsError::NoSamples { excluded });
    }
    Ok(Mae {
        value: sum / n as f64,
        n,
        excluded,
    })
}

/// Mean |d − d̂| over samples that carry a predicted diameter.
pub fn mae_px(samples: &[EvaluationSample<'_>]) -> Result<Mae> {
    mean_of(samples.iter().map(|s| s.predicted.diameter.map(|d| (s.truth.d - d).abs())))
}

fn horizontal_error(s: &EvaluationSample<'_>, phi: f64, mode: LocalizationMode) -> Option<f64> {
    let d_hat = s.predicted.diameter?;
    let (center, reference) = match mode {
        LocalizationMode::TrueCenter => {
            let reference = geometry::localize_from_diameter(s.camera, &s.truth, phi).ok()?;
            (s.truth.center(), reference)
        }
        LocalizationMode::EndToEnd => (s.predicted.center, s.position),
    };
    let ball = PixelBall::new(center.x, center.y, d_hat).ok()?;
    let estimate = geometry::localize_from_diameter(s.camera, &ball, phi).ok()?;
    Some((estimate.xy() - reference.xy()).norm())
}

/// Mean horizontal-plane localization error [m].
pub fn mae_m(samples: &[EvaluationSample<'_>], phi: f64, mode: LocalizationMode) -> Result<Mae> {
    mean_of(samples.iter().map(|s| horizontal_error(s, phi, mode)))
}

/// Mean horizontal error relative to the camera-to-ball distance [%].
pub fn mae_pct(samples: &[EvaluationSample<'_>], phi: f64, mode: LocalizationMode) -> Result<Mae> {
    mean_of(samples.iter().map(|s| {
        let distance = (s.position - s.camera.pose.center()).norm();
        horizontal_error(s, phi, mode).map(|e| 100.0 * e / distance)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum MatchRadius {
    /// Half the labelled diameter.
    #[default]
    HalfDiameter,
    Fixed(f64),
}

impl MatchRadius {
    pub fn for_ball(&self, ball: &PixelBall) -> f64 {
        match *self {
            MatchRadius::HalfDiameter => ball.d / 2.0,
            MatchRadius::Fixed(r) => r,
        }
    }
}

/// Candidates for one image and the labelled ball, if present.
#[derive(Debug, Clone, PartialEq)]
pub struct RocImage {
    pub candidates: Vec<Detection>,
    pub truth: Option<PixelBall>,
}

impl RocImage {
    fn matches(&self, candidate: &Detection, radius: MatchRadius) -> bool {
        self.truth
            .is_some_and(|t| (candidate.center - t.center()).norm() <= radius.for_ball(&t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// One point per distinct confidence, by decreasing threshold.
    pub points: Vec<RocPoint>,
    /// Upper end of the integrated FP range: the largest candidate count per image.
    pub fp_max: f64,
    /// Area under tp_rate over fp_rate ∈ [0, fp_max], divided by fp_max.
    pub auc: f64,
}

fn validate_radius(radius: MatchRadius) -> Result<()> {
    if let MatchRadius::Fixed(r) = radius {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(MetricsError::InvalidRadius(r));
        }
    }
    Ok(())
}

/// Sweeps the confidence threshold over every candidate confidence. A kept candidate
/// within the match radius makes its image a true positive (once per image); every
/// other kept candidate is a false positive.
pub fn roc(images: &[RocImage], radius: MatchRadius) -> Result<RocCurve> {
    if images.is_empty() {
        return Err(MetricsError::NoImages);
    }
    validate_radius(radius)?;
    let n_images = images.len() as f64;
    let fp_max = images.iter().map(|i| i.candidates.len()).max().unwrap_or(0).max(1) as f64;

    let mut all: Vec<(f64, usize, bool)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, img)| img.candidates.iter().map(move |c| (c.confidence, i, img.matches(c, radius))))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut matched = vec![0usize; images.len()];
    let (mut tp_images, mut kept, mut points) = (0usize, 0usize, Vec::new());
    let mut i = 0;
    while i < all.len() {
        let threshold = all[i].0;
        while i < all.len() && all[i].0 == threshold {
            let (_, img, hit) = all[i];
            kept += 1;
            if hit {
                matched[img] += 1;
                if matched[img] == 1 {
                    tp_images += 1;
                }
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            tp_rate: tp_images as f64 / n_images,
            fp_rate: (kept - tp_images) as f64 / n_images,
        });
    }

    let mut area = 0.0;
    let (mut px, mut py) = (0.0, 0.0);
    for p in &points {
        area += (p.fp_rate - px) * (p.tp_rate + py) / 2.0;
        (px, py) = (p.fp_rate, p.tp_rate);
    }
    area += (fp_max - px) * py;
    let auc = if points.is_empty() { 0.0 } else { area / fp_max };
    Ok(RocCurve { points, fp_max, auc })
}

/// Fraction of images whose highest-confidence candidate matches the ball.
pub fn top1_tp_rate(images: &[RocImage], radius: MatchRadius) -> Result<f64> {
    if images.is_empty() {
        return Err(MetricsError::NoImages);
    }
    validate_radius(radius)?;
    let hits = images
        .iter()
        .filter(|img| {
            crate::estimation::select_candidate(&img.candidates)
                .is_ok_and(|(_, c)| img.matches(&c, radius))
        })
        .count();
    Ok(hits as f64 / images.len() as f64)
}

pub fn write_roc_csv(mut out: impl Write, curve: &RocCurve) -> io::Result<()> {
    writeln!(out, "threshold,tp_rate,fp_rate")?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.threshold, p.tp_rate, p.fp_rate)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mae_px: Option<f64>,
    pub mae_m: Option<f64>,
    pub mae_pct: Option<f64>,
    pub auc: Option<f64>,
    pub n: usize,
    pub excluded: usize,
}

impl EvaluationReport {
    pub fn compute(
        samples: &[EvaluationSample<'_>],
        roc_images: &[RocImage],
        phi: f64,
        mode: LocalizationMode,
        radius: MatchRadius,
    ) -> Self {
        let px = mae_px(samples).ok();
        let m = mae_m(samples, phi, mode);
        let pct = mae_pct(samples, phi, mode).ok();
        let excluded = match &m {
            Ok(m) => m.excluded,
            Err(MetricsError::NoSamples { excluded }) => *excluded,
            Err(_) => samples.len(),
        };
        let m = m.ok();
        Self {
            mae_px: px.map(|v| v.value),
            mae_m: m.map(|v| v.value),
            mae_pct: pct.map(|v| v.value),
            auc: roc(roc_images, radius).ok().map(|c| c.auc),
            n: samples.len() - excluded,
            excluded,
        }
    }

    pub fn to_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut s = String::new();
        for (k, v) in [
            ("MAE [px]", f(self.mae_px)),
            ("MAE [m]", f(self.mae_m)),
            ("MAE [%]", f(self.mae_pct)),
            ("AuC", f(self.auc)),
            ("n", self.n.to_string()),
            ("excluded", self.excluded.to_string()),
        ] {
            let _ = writeln!(s, "{k:<10} {v:>12}");
        }
        s
    }
}
