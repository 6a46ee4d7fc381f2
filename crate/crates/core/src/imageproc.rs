//! Hough-circle diameter baseline on detector heatmaps.
//!
//! Pipeline: grayscale opening with a disc, gradient magnitude with non-maximum
//! suppression and hysteresis gating, then full-circle Hough voting over a bounded
//! diameter range. Borders are handled by edge replication throughout.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, CalibratedCamera, GeometryError, Pixel, WorldPoint};

pub const DEFAULT_PATCH_SIDE: usize = 64;
pub const DEFAULT_RHO: u32 = 37;
pub const DEFAULT_TAU_LOW: f64 = 10.0;
pub const DEFAULT_TAU_HIGH: f64 = 20.0;
pub const DEFAULT_D_STEP: f64 = 0.5;

/// Magic prefix of the raw heatmap format: 8 bytes, then width and height as
/// little-endian u32, then `width × height` row-major u8 samples.
pub const RAW_MAGIC: &[u8; 8] = b"BALLHMAP";

#[derive(Debug, Error)]
pub enum ImageProcError {
    #[error("grid of {width}x{height} needs {expected} values, got {actual}")]
    BadLength {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("patch must be square and non-empty, got {width}x{height}")]
    NotSquare { width: usize, height: usize },
    #[error("intensity {value} at ({x}, {y}) outside [0, 255]")]
    OutOfRange { x: usize, y: usize, value: f64 },
    #[error("invalid Hough parameters: {0}")]
    InvalidParams(String),
    #[error("no part of the court volume is visible")]
    CourtNotVisible,
    #[error("invalid court bounds: {0}")]
    InvalidCourt(String),
    #[error("unrecognised heatmap file {0}")]
    UnknownFormat(String),
    #[error("corrupt raw heatmap: {0}")]
    CorruptRaw(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T, E = ImageProcError> = std::result::Result<T, E>;

/// Row-major grid of intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(ImageProcError::BadLength {
                width,
                height,
                expected: width * height,
                actual: values.len(),
            });
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// Value at signed coordinates, `None` outside the grid.
    pub fn get_signed(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let cx = x.clamp(0, self.width as i64 - 1) as usize;
        let cy = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(cx, cy)
    }

    /// Loads an 8-bit grayscale PNG or a raw heatmap (see [`RAW_MAGIC`]).
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(RAW_MAGIC) {
            return Self::from_raw(&bytes);
        }
        if bytes.starts_with(b"\x89PNG") {
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)?.into_luma8();
            let (w, h) = img.dimensions();
            return Self::new(w as usize, h as usize, img.into_raw().into_iter().map(f64::from).collect());
        }
        Err(ImageProcError::UnknownFormat(path.display().to_string()))
    }

    pub fn from_raw(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || !bytes.starts_with(RAW_MAGIC) {
            return Err(ImageProcError::CorruptRaw("missing header".into()));
        }
        let width = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let height = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() != width * height {
            return Err(ImageProcError::CorruptRaw(format!(
                "{width}x{height} header but {} samples",
                body.len()
            )));
        }
        Self::new(width, height, body.iter().map(|&b| f64::from(b)).collect())
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn to_raw(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.values.len());
        out.extend_from_slice(RAW_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend(self.to_bytes());
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_bytes())
            .expect("buffer length matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_raw())?;
        Ok(())
    }
}

/// Square neighbourhood of a heatmap, with its top-left offset in the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapPatch {
    grid: ImageGrid,
    origin: (i64, i64),
}

impl HeatmapPatch {
    pub fn new(grid: ImageGrid, origin: (i64, i64)) -> Result<Self> {
        if grid.width != grid.height || grid.width == 0 {
            return Err(ImageProcError::NotSquare {
                width: grid.width,
                height: grid.height,
            });
        }
        for (i, &v) in grid.values.iter().enumerate() {
            if !(0.0..=255.0).contains(&v) {
                return Err(ImageProcError::OutOfRange {
                    x: i % grid.width,
                    y: i / grid.width,
                    value: v,
                });
            }
        }
        Ok(Self { grid, origin })
    }

    pub fn side(&self) -> usize {
        self.grid.width
    }

    pub fn origin(&self) -> (i64, i64) {
        self.origin
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.grid
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y)
    }
}

/// Offsets of a discrete disc of the given diameter. Even diameters round up to the
/// next odd footprint.
fn disc_offsets(diameter: u32) -> Vec<(i64, i64)> {
    let r = f64::from(diameter) / 2.0;
    let reach = r.floor() as i64;
    let mut out = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if ((dx * dx + dy * dy) as f64) <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn morph(grid: &ImageGrid, offsets: &[(i64, i64)], erode: bool) -> ImageGrid {
    ImageGrid::from_fn(grid.width, grid.height, |x, y| {
        let samples = offsets
            .iter()
            .map(|&(dx, dy)| grid.get_clamped(x as i64 + dx, y as i64 + dy));
        if erode {
            samples.fold(f64::INFINITY, f64::min)
        } else {
            samples.fold(f64::NEG_INFINITY, f64::max)
        }
    })
}

/// Grayscale erosion followed by dilation with a flat disc of diameter `rho`.
pub fn morphological_opening(patch: &HeatmapPatch, rho: u32) -> HeatmapPatch {
    let offsets = disc_offsets(rho.max(1));
    let eroded = morph(&patch.grid, &offsets, true);
    HeatmapPatch {
        grid: morph(&eroded, &offsets, false),
        origin: patch.origin,
    }
}

/// Binary edge map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl EdgeMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Edge pixel coordinates in row-major order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }
}

/// Gradient magnitude from full central differences `f(x+1) - f(x-1)`, so a step of
/// height h produces magnitude h.
fn gradients(grid: &ImageGrid) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; grid.width * grid.height];
    let mut gy = vec![0.0; grid.width * grid.height];
    for y in 0..grid.height as i64 {
        for x in 0..grid.width as i64 {
            let i = (y as usize) * grid.width + x as usize;
            gx[i] = grid.get_clamped(x + 1, y) - grid.get_clamped(x - 1, y);
            gy[i] = grid.get_clamped(x, y + 1) - grid.get_clamped(x, y - 1);
        }
    }
    (gx, gy)
}

/// Edges by gradient magnitude, thinned by non-maximum suppression along the gradient
/// direction, then hysteresis: pixels at or above `tau_high` seed edges, pixels at or
/// above `tau_low` survive when 8-connected to a seed.
pub fn hysteresis_edges(patch: &HeatmapPatch, tau_low: f64, tau_high: f64) -> Result<EdgeMap> {
    if !(tau_low > 0.0 && tau_low < tau_high) {
        return Err(ImageProcError::InvalidParams(format!(
            "need 0 < tau_low < tau_high, got {tau_low}, {tau_high}"
        )));
    }
    let grid = &patch.grid;
    let (w, h) = (grid.width, grid.height);
    let (gx, gy) = gradients(grid);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let mag_at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };

    // Ties between the two sides of a ridge keep the pixel on the negative side.
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m < tau_low {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as i64, y as i64);
            if m > mag_at(xi - dx, yi - dy) && m >= mag_at(xi + dx, yi + dy) {
                thin[i] = m;
            }
        }
    }

    let mut edges = EdgeMap::empty(w, h);
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] >= tau_high).collect();
    for &i in &stack {
        edges.bits[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges.bits[j] && thin[j] >= tau_low {
                    edges.bits[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    Ok(edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughParams {
    /// Opening disc diameter [px].
    pub rho: u32,
    pub tau_low: f64,
    pub tau_high: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub d_step: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            tau_low: DEFAULT_TAU_LOW,
            tau_high: DEFAULT_TAU_HIGH,
            d_min: 14.0,
            d_max: 37.0,
            d_step: DEFAULT_D_STEP,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ImageProcError::InvalidParams(msg));
        if self.rho < 1 {
            return bad("rho must be at least 1".into());
        }
        if !(self.tau_low > 0.0 && self.tau_low < self.tau_high) {
            return bad(format!("need 0 < tau_low < tau_high, got {}, {}", self.tau_low, self.tau_high));
        }
        if !(self.d_min > 0.0 && self.d_min < self.d_max && self.d_max.is_finite()) {
            return bad(format!("need 0 < d_min < d_max, got {}, {}", self.d_min, self.d_max));
        }
        if !(self.d_step > 0.0 && self.d_step.is_finite()) {
            return bad(format!("d_step must be positive, got {}", self.d_step));
        }
        Ok(())
    }

    /// Candidate diameters `d_min, d_min + d_step, …` up to and including `d_max`.
    pub fn diameters(&self) -> Vec<f64> {
        let n = ((self.d_max - self.d_min) / self.d_step + 1e-9).floor() as usize;
        let mut out: Vec<f64> = (0..=n).map(|i| self.d_min + self.d_step * i as f64).collect();
        if out.last().is_some_and(|&d| d < self.d_max - 1e-9) {
            out.push(self.d_max);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleEstimate {
    pub center: Pixel,
    pub diameter: f64,
    /// Accumulator votes divided by the circle's raster length, in [0, 1].
    pub score: f64,
}

/// Integer offsets of a rasterized circle of the given diameter, symmetric under negation.
pub fn circle_kernel(diameter: f64) -> Vec<(i64, i64)> {
    let r = diameter / 2.0;
    let n = ((2.0 * std::f64::consts::PI * r * 4.0).ceil() as usize).max(8).next_multiple_of(4);
    let set: BTreeSet<(i64, i64)> = (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            ((r * theta.cos()).round() as i64, (r * theta.sin()).round() as i64)
        })
        .collect();
    set.into_iter().collect()
}

/// Full-circle Hough voting over (center, diameter). Centers are restricted to the
/// edge map's extent at 1 px resolution.
///
/// Returns `None` when the edge map is empty. The peak maximizes the normalized score;
/// ties go to the smaller diameter, then to the first center in row-major order.
pub fn hough_circle(edges: &EdgeMap, params: &HoughParams) -> Result<Option<CircleEstimate>> {
    params.validate()?;
    if edges.is_empty() {
        return Ok(None);
    }
    let (w, h) = (edges.width as i64, edges.height as i64);
    let points: Vec<(i64, i64)> = edges.points().map(|(x, y)| (x as i64, y as i64)).collect();
    let mut acc = vec![0u32; (w * h) as usize];
    let mut best: Option<(u64, u64, f64, usize)> = None; // (votes, kernel len, diameter, center index)
    for d in params.diameters() {
        let kernel = circle_kernel(d);
        acc.iter_mut().for_each(|v| *v = 0);
        for &(px, py) in &points {
            for &(ox, oy) in &kernel {
                let (cx, cy) = (px - ox, py - oy);
                if cx >= 0 && cy >= 0 && cx < w && cy < h {
                    acc[(cy * w + cx) as usize] += 1;
                }
            }
        }
        let len = kernel.len() as u64;
        for (idx, &votes) in acc.iter().enumerate() {
            let votes = u64::from(votes).min(len);
            if votes == 0 {
                continue;
            }
            // Exact rational comparison: votes/len > best_votes/best_len.
            let better = match best {
                None => true,
                Some((bv, bl, _, _)) => votes * bl > bv * len,
            };
            if better {
                best = Some((votes, len, d, idx));
            }
        }
    }
    Ok(best.map(|(votes, len, diameter, idx)| CircleEstimate {
        center: Pixel::new((idx as i64 % w) as f64, (idx as i64 / w) as f64),
        diameter,
        score: votes as f64 / len as f64,
    }))
}

/// Playing-court volume used to bound plausible ball sizes. The court rectangle spans
/// `[0, length] × [0, width]` on z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CourtBounds {
    pub length: f64,
    pub width: f64,
    pub margin: f64,
    pub height_min: f64,
    pub height_max: f64,
}

impl Default for CourtBounds {
    fn default() -> Self {
        Self {
            length: 28.0,
            width: 15.0,
            margin: 2.0,
            height_min: 0.0,
            height_max: 5.0,
        }
    }
}

impl CourtBounds {
    fn box_extent(&self) -> Result<([f64; 3], [f64; 3])> {
        let lo = [-self.margin, -self.margin, self.height_min];
        let hi = [self.length + self.margin, self.width + self.margin, self.height_max];
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) || (0..3).any(|i| hi[i] < lo[i]) {
            return Err(ImageProcError::InvalidCourt(format!("{self:?}")));
        }
        Ok((lo, hi))
    }

    /// Points on the surface of the volume spaced at most `spacing` apart.
    pub fn surface_samples(&self, spacing: f64) -> Result<Vec<WorldPoint>> {
        let (lo, hi) = self.box_extent()?;
        let axis = |i: usize| -> Vec<f64> {
            let n = ((hi[i] - lo[i]) / spacing).ceil().max(0.0) as usize;
            if n == 0 {
                return vec![lo[i]];
            }
            (0..=n).map(|k| lo[i] + (hi[i] - lo[i]) * k as f64 / n as f64).collect()
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut out = Vec::new();
        for (iz, &z) in zs.iter().enumerate() {
            for (iy, &y) in ys.iter().enumerate() {
                for (ix, &x) in xs.iter().enumerate() {
                    let on_surface = ix == 0
                        || iy == 0
                        || iz == 0
                        || ix == xs.len() - 1
                        || iy == ys.len() - 1
                        || iz == zs.len() - 1;
                    if on_surface {
                        out.push(WorldPoint::new(x, y, z));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Spacing [m] of the court-surface sampling used by [`diameter_bounds`].
pub const BOUNDS_SAMPLE_SPACING: f64 = 0.25;

/// Pixel-diameter interval of a ball of diameter `phi` anywhere in the visible court
/// volume. `d_max` is clamped to `max_diameter` (the patch side), which also covers a
/// camera inside the volume.
pub fn diameter_bounds(camera: &CalibratedCamera, scene: &CourtBounds, phi: f64, max_diameter: f64) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for p in scene.surface_samples(BOUNDS_SAMPLE_SPACING)? {
        let Ok(ball) = geometry::project_ball(camera, &p, phi) else {
            continue;
        };
        if camera.contains(&ball.center()) {
            lo = lo.min(ball.d);
            hi = hi.max(ball.d);
        }
    }
    if !lo.is_finite() {
        return Err(ImageProcError::CourtNotVisible);
    }
    let hi = hi.min(max_diameter);
    Ok((lo.min(hi), hi))
}

/// Settings of the baseline pipeline other than the diameter bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub rho: u32,
    pub tau_low: f64,
    pub tau_high: f64,
    pub d_step: f64,
    pub court: CourtBounds,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            tau_low: DEFAULT_TAU_LOW,
            tau_high: DEFAULT_TAU_HIGH,
            d_step: DEFAULT_D_STEP,
            court: CourtBounds::default(),
        }
    }
}

impl BaselineConfig {
    /// Hough parameters for a diameter interval; a degenerate interval is widened by
    /// one step.
    pub fn hough_params(&self, (d_min, d_max): (f64, f64)) -> HoughParams {
        let d_max = if d_max > d_min { d_max } else { d_min + self.d_step };
        HoughParams {
            rho: self.rho,
            tau_low: self.tau_low,
            tau_high: self.tau_high,
            d_min,
            d_max,
            d_step: self.d_step,
        }
    }
}

/// Opening, edges and Hough voting with explicit parameters. The returned center is in
/// source-image coordinates.
pub fn estimate_with_params(patch: &HeatmapPatch, params: &HoughParams) -> Result<Option<CircleEstimate>> {
    params.validate()?;
    let opened = morphological_opening(patch, params.rho);
    let edges = hysteresis_edges(&opened, params.tau_low, params.tau_high)?;
    let (ox, oy) = patch.origin;
    Ok(hough_circle(&edges, params)?.map(|c| CircleEstimate {
        center: Pixel::new(c.center.x + ox as f64, c.center.y + oy as f64),
        ..c
    }))
}

/// The full baseline: bounds from the court volume, then [`estimate_with_params`].
pub fn baseline_estimate(
    patch: &HeatmapPatch,
    camera: &CalibratedCamera,
    config: &BaselineConfig,
    phi: f64,
) -> Result<Option<CircleEstimate>> {
    let bounds = diameter_bounds(camera, &config.court, phi, patch.side() as f64)?;
    estimate_with_params(patch, &config.hough_params(bounds))
}

/// Renders an anti-aliased filled disc (4×4 supersampling) of the given amplitude.
/// Pixel centers sit at integer coordinates.
pub fn render_disc(grid: &mut ImageGrid, center: Pixel, diameter: f64, amplitude: f64) {
    let r = diameter / 2.0;
    let x0 = ((center.x - r - 1.0).floor().max(0.0)) as usize;
    let y0 = ((center.y - r - 1.0).floor().max(0.0)) as usize;
    let x1 = ((center.x + r + 1.0).ceil().max(0.0) as usize).min(grid.width);
    let y1 = ((center.y + r + 1.0).ceil().max(0.0) as usize).min(grid.height);
    const SUB: usize = 4;
    for y in y0..y1 {
        for x in x0..x1 {
            let mut inside = 0;
            for sy in 0..SUB {
                for sx in 0..SUB {
                    let fx = x as f64 - 0.5 + (sx as f64 + 0.5) / SUB as f64;
                    let fy = y as f64 - 0.5 + (sy as f64 + 0.5) / SUB as f64;
                    if (fx - center.x).powi(2) + (fy - center.y).powi(2) <= r * r {
                        inside += 1;
                    }
                }
            }
            if inside > 0 {
                let v = grid.get(x, y) + amplitude * inside as f64 / (SUB * SUB) as f64;
                grid.set(x, y, v.min(255.0));
            }
        }
    }
}
