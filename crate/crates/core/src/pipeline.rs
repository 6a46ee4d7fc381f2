//! Candidate selection, diameter estimation and localization over a manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError, DatasetManifest, ImageRecord};
use crate::estimation::{self, Detection, EstimationContext, EstimationError, EstimatorRegistry};
use crate::geometry::{self, GeometryError, Pixel, PixelBall, WorldPoint};
use crate::imageproc::{HeatmapPatch, ImageGrid, ImageProcError, DEFAULT_PATCH_SIDE};
use crate::metrics::{EvaluationReport, EvaluationSample, LocalizationMode, MatchRadius, RocImage};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("image {image}: {source}")]
    Estimation {
        image: String,
        #[source]
        source: EstimationError,
    },
    #[error("image {image}: heatmap {path}: {source}")]
    Heatmap {
        image: String,
        path: PathBuf,
        #[source]
        source: ImageProcError,
    },
    #[error("image {image}: {source}")]
    Geometry {
        image: String,
        #[source]
        source: GeometryError,
    },
    #[error("image {0} has neither detections nor a heatmap")]
    NoCandidates(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub phi: f64,
    pub patch_side: usize,
    pub mode: LocalizationMode,
    pub match_radius: MatchRadius,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            phi: geometry::DEFAULT_BALL_DIAMETER,
            patch_side: DEFAULT_PATCH_SIDE,
            mode: LocalizationMode::default(),
            match_radius: MatchRadius::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub image_id: String,
    pub candidate_index: usize,
    pub detection: Detection,
    /// `None` when the estimator produced no diameter.
    pub position: Option<WorldPoint>,
}

fn load_heatmap(record: &ImageRecord, base: &Path) -> Result<Option<ImageGrid>> {
    let Some(rel) = &record.heatmap else {
        return Ok(None);
    };
    let path = base.join(rel);
    ImageGrid::load(&path)
        .map(Some)
        .map_err(|source| PipelineError::Heatmap {
            image: record.id.clone(),
            path,
            source,
        })
}

/// The heatmap maximum as a single candidate, for images without detector output. The
/// center is the centroid of the half-maximum region around the peak.
fn heatmap_peak(grid: &ImageGrid) -> Option<Detection> {
    let (w, h) = (grid.width(), grid.height());
    let (peak, &max) = grid
        .values()
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &f64)>, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })?;
    if max <= 0.0 {
        return None;
    }
    let mut seen = vec![false; w * h];
    let mut stack = vec![peak];
    seen[peak] = true;
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        sx += x as f64;
        sy += y as f64;
        n += 1.0;
        for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if !seen[j] && grid.values()[j] >= 0.5 * max {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    Detection::new(Pixel::new(sx / n, sy / n), (max / 255.0).clamp(0.0, 1.0), None).ok()
}

fn estimation_error(record: &ImageRecord) -> impl FnOnce(EstimationError) -> PipelineError + '_ {
    move |source| PipelineError::Estimation {
        image: record.id.clone(),
        source,
    }
}

/// Picks the top candidate of an image, estimates its diameter with the named
/// estimator and localizes it.
pub fn localize_image(
    manifest: &DatasetManifest,
    base: &Path,
    image_id: &str,
    registry: &EstimatorRegistry,
    estimator: &str,
    config: &PipelineConfig,
) -> Result<Localization> {
    let record = manifest.image(image_id)?;
    let heatmap = load_heatmap(record, base)?;
    localize_record(manifest, record, heatmap.as_ref(), registry, estimator, config)
}

fn localize_record(
    manifest: &DatasetManifest,
    record: &ImageRecord,
    heatmap: Option<&ImageGrid>,
    registry: &EstimatorRegistry,
    estimator: &str,
    config: &PipelineConfig,
) -> Result<Localization> {
    let estimator = registry.get(estimator).map_err(estimation_error(record))?;
    let camera = manifest.camera_for(record)?;
    let (index, candidate) = if record.detections.is_empty() {
        let peak = heatmap
            .and_then(heatmap_peak)
            .ok_or_else(|| PipelineError::NoCandidates(record.id.clone()))?;
        (0, peak)
    } else {
        estimation::select_candidate(&record.detections).map_err(estimation_error(record))?
    };
    let patch = match heatmap {
        Some(grid) => estimation::extract_patch(grid, candidate.center, config.patch_side),
        None => HeatmapPatch::new(ImageGrid::zeros(config.patch_side, config.patch_side), (0, 0))
            .map_err(EstimationError::from),
    }
    .map_err(estimation_error(record))?;
    let truth = match &record.annotation {
        Some(_) => Some(data::resolve_annotation(record, camera, config.phi)?.1),
        None => None,
    };
    let ctx = EstimationContext {
        patch: &patch,
        candidate,
        camera: Some(camera),
        truth: truth.as_ref(),
        phi: config.phi,
    };
    let detection = estimator.estimate(&ctx).map_err(estimation_error(record))?;
    let position = match detection.diameter {
        Some(d) => {
            let ball = PixelBall::new(detection.center.x, detection.center.y, d).map_err(|source| {
                PipelineError::Geometry {
                    image: record.id.clone(),
                    source,
                }
            })?;
            Some(
                geometry::localize_from_diameter(camera, &ball, config.phi).map_err(|source| PipelineError::Geometry {
                    image: record.id.clone(),
                    source,
                })?,
            )
        }
        None => None,
    };
    Ok(Localization {
        image_id: record.id.clone(),
        candidate_index: index,
        detection,
        position,
    })
}

/// Scores an estimator over every annotated image, in image-id order. Annotated images
/// whose estimate fails are counted as excluded.
pub fn evaluate_dataset(
    manifest: &DatasetManifest,
    base: &Path,
    registry: &EstimatorRegistry,
    estimator: &str,
    config: &PipelineConfig,
) -> Result<EvaluationReport> {
    registry.get(estimator).map_err(|source| PipelineError::Estimation {
        image: String::new(),
        source,
    })?;
    let mut records: Vec<&ImageRecord> = manifest.images.iter().collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let mut truths = Vec::new();
    let mut roc_images = Vec::new();
    for record in records {
        let camera = manifest.camera_for(record)?;
        let truth = match &record.annotation {
            Some(_) => Some(data::resolve_annotation(record, camera, config.phi)?),
            None => None,
        };
        roc_images.push(RocImage {
            candidates: record.detections.clone(),
            truth: truth.map(|t| t.1),
        });
        let Some((resolved, ball)) = truth else {
            continue;
        };
        let heatmap = load_heatmap(record, base)?;
        let predicted = match localize_record(manifest, record, heatmap.as_ref(), registry, estimator, config) {
            Ok(loc) => loc.detection,
            Err(PipelineError::Data(e)) => return Err(e.into()),
            Err(PipelineError::Heatmap { image, path, source }) => {
                return Err(PipelineError::Heatmap { image, path, source })
            }
            Err(_) => Detection {
                center: ball.center(),
                confidence: 0.0,
                diameter: None,
            },
        };
        truths.push((ball, record.position.unwrap_or(resolved), predicted, camera));
    }
    let samples: Vec<EvaluationSample<'_>> = truths
        .iter()
        .map(|&(truth, position, predicted, camera)| EvaluationSample {
            truth,
            position,
            predicted,
            camera,
        })
        .collect();
    Ok(EvaluationReport::compute(
        &samples,
        &roc_images,
        config.phi,
        config.mode,
        config.match_radius,
    ))
}
