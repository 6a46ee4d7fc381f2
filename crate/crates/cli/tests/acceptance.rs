//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest harness so
//! the report is always printed.

use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use monoball::ballistic::{self, AnnotationScene, BallisticTrajectory, ClickNoise, TimedObservation, STANDARD_GRAVITY};
use monoball::estimation::{bce_loss, huber_loss, Detection};
use monoball::geometry::{self, localize_from_diameter, project_ball};
use monoball::imageproc::{estimate_with_params, render_disc, HeatmapPatch, HoughParams, ImageGrid};
use monoball::metrics::{roc, top1_tp_rate, MatchRadius, RocImage};
use monoball::{CalibratedCamera, CameraIntrinsics, CameraPose, DistortionCoefficients, Pixel, PixelBall, WorldPoint};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < budget, || format!("took {took:.2?}, budget {budget:?}"))?;
    Ok(took)
}

// ---------------------------------------------------------------------------
// Geometry

fn random_camera(rng: &mut ChaCha8Rng, distorted: bool) -> CalibratedCamera {
    let f = rng.random_range(800.0..3000.0);
    let (w, h) = (1920u32, 1080u32);
    let mut k = CameraIntrinsics::simple(f, 960.0 + rng.random_range(-20.0..20.0), 540.0 + rng.random_range(-20.0..20.0))
        .unwrap();
    if distorted {
        k.distortion = DistortionCoefficients {
            radial: [rng.random_range(-0.2..0.2), rng.random_range(-0.05..0.05), 0.0],
            tangential: [rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3)],
        };
    }
    let center = WorldPoint::new(rng.random_range(0.0..28.0), rng.random_range(-15.0..-4.0), rng.random_range(3.0..10.0));
    let target = WorldPoint::new(rng.random_range(4.0..24.0), rng.random_range(2.0..13.0), rng.random_range(0.0..2.0));
    CalibratedCamera::new(k, CameraPose::look_at(center, target).unwrap(), w, h).unwrap()
}

/// True when the radial distortion curve is increasing on [0, r].
fn distortion_monotone_to(d: &DistortionCoefficients, r: f64) -> bool {
    let [k1, k2, k3] = d.radial;
    (0..=64).all(|i| {
        let r2 = (r * i as f64 / 64.0).powi(2);
        1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2 + 7.0 * k3 * r2 * r2 * r2 > 0.0
    })
}

/// A ball position whose projection lies inside the image, within the part of the
/// field where the distortion model is invertible.
fn visible_ball(rng: &mut ChaCha8Rng, cam: &CalibratedCamera, phi: f64) -> (WorldPoint, PixelBall) {
    loop {
        let p = WorldPoint::new(rng.random_range(0.0..28.0), rng.random_range(0.0..15.0), rng.random_range(0.12..4.0));
        if cam.depth(&p) < 2.0 {
            continue;
        }
        let q = cam.pose.world_to_camera(&p);
        let r = (q.x.hypot(q.y) + phi) / q.z;
        if !distortion_monotone_to(&cam.intrinsics.distortion, 1.1 * r) {
            continue;
        }
        if let Ok(b) = project_ball(cam, &p, phi) {
            let margin = b.d;
            if b.bx > margin && b.by > margin && b.bx < cam.width as f64 - margin && b.by < cam.height as f64 - margin {
                return (p, b);
            }
        }
    }
}

fn geometry_round_trip() -> Outcome {
    let start = Instant::now();
    let phi = geometry::DEFAULT_BALL_DIAMETER;
    let mut worst = [(0.0f64, 0.0f64); 2];
    for (k, distorted) in [false, true].into_iter().enumerate() {
        let (tol_m, tol_px) = if distorted { (1e-3, 1e-4) } else { (1e-6, 1e-6) };
        for seed in 0..10_000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cam = random_camera(&mut rng, distorted);
            let (p, ball) = visible_ball(&mut rng, &cam, phi);
            let back = localize_from_diameter(&cam, &ball, phi).map_err(|e| format!("seed {seed}: {e}"))?;
            let again = project_ball(&cam, &back, phi).map_err(|e| format!("seed {seed}: {e}"))?;
            let (em, epx) = ((back - p).norm(), (again.d - ball.d).abs());
            ensure(em <= tol_m && epx <= tol_px, || {
                format!("seed {seed} distorted={distorted}: {em:e} m, {epx:e} px")
            })?;
            worst[k] = (worst[k].0.max(em), worst[k].1.max(epx));
        }
    }
    let took = within_budget(start, Duration::from_secs(10))?;
    Ok(format!(
        "20000 fixtures; worst {:.1e} m / {:.1e} px plain, {:.1e} m / {:.1e} px distorted; {took:.2?}",
        worst[0].0, worst[0].1, worst[1].0, worst[1].1
    ))
}

fn diameter_hand_value() -> Outcome {
    let k = CameraIntrinsics::simple(1000.0, 640.0, 360.0).unwrap();
    let cam = CalibratedCamera::new(k, CameraPose::identity(), 1280, 720).unwrap();
    let p = localize_from_diameter(&cam, &PixelBall::new(640.0, 360.0, 20.0).unwrap(), 0.24).map_err(|e| e.to_string())?;
    let depth = cam.depth(&p);
    ensure((depth - 12.0).abs() <= 1e-9, || format!("depth {depth}"))?;
    Ok(format!("depth {depth} m"))
}

// ---------------------------------------------------------------------------
// Ballistic

fn ballistic_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for n in 3..=20usize {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + n as u64);
            let p0 = Vector3::new(rng.random_range(0.0..28.0), rng.random_range(0.0..15.0), rng.random_range(0.5..4.0));
            let v0 = Vector3::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-2.0..8.0));
            let truth = BallisticTrajectory::new(p0, v0, STANDARD_GRAVITY).unwrap();
            let mut times: Vec<f64> = (0..n).map(|i| i as f64 / 25.0 + rng.random_range(0.0..0.02)).collect();
            times.sort_by(f64::total_cmp);
            let obs: Vec<TimedObservation> = times.iter().map(|&t| TimedObservation::new(t, truth.evaluate(t))).collect();
            let fit = ballistic::fit(&obs, STANDARD_GRAVITY).map_err(|e| format!("N={n} seed {seed}: {e}"))?;
            let err = (fit.trajectory.p0 - p0).amax().max((fit.trajectory.v0 - v0).amax());
            ensure(err <= 1e-9 && fit.rms < 1e-9, || {
                format!("N={n} seed {seed}: parameter error {err:e}, rms {:e}", fit.rms)
            })?;
            worst = worst.max(err);
        }
    }
    let took = within_budget(start, Duration::from_secs(5))?;
    Ok(format!("1800 fits; worst parameter error {worst:.1e}; {took:.2?}"))
}

fn annotation_ordering() -> Outcome {
    let start = Instant::now();
    let scene = AnnotationScene::default_fixture();
    let cmp = ballistic::compare_annotation_methods(&scene, &ClickNoise::uniform(1.0), 1000, 0).map_err(|e| e.to_string())?;
    let (dia, proj) = (cmp.diameter.mean_abs, cmp.projection.mean_abs);
    let took = within_budget(start, Duration::from_secs(60))?;
    let detail = format!("mean |error| projection {proj:.4} px vs diameter {dia:.4} px; {took:.2?}");
    ensure(proj < dia && proj < 1.0, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// Hough baseline

const HCT_RHO: u32 = 3;

fn hct_params() -> HoughParams {
    HoughParams {
        rho: HCT_RHO,
        d_min: 6.0,
        d_max: 42.0,
        ..HoughParams::default()
    }
}

fn hct_error(d: f64, noise: Option<(f64, &mut ChaCha8Rng)>) -> Result<f64, String> {
    let mut grid = ImageGrid::zeros(64, 64);
    render_disc(&mut grid, Pixel::new(32.0, 32.0), d, 255.0);
    if let Some((sigma, rng)) = noise {
        let n = Normal::new(0.0, sigma).unwrap();
        let values = grid.values().iter().map(|v| (v + n.sample(rng)).clamp(0.0, 255.0)).collect();
        grid = ImageGrid::new(64, 64, values).map_err(|e| e.to_string())?;
    }
    let patch = HeatmapPatch::new(grid, (0, 0)).map_err(|e| e.to_string())?;
    let est = estimate_with_params(&patch, &hct_params()).map_err(|e| e.to_string())?;
    Ok(est.map_or(f64::INFINITY, |c| (c.diameter - d).abs()))
}

fn hct_accuracy() -> Outcome {
    let start = Instant::now();
    let diameters: Vec<f64> = (4..=20).map(|i| 2.0 * i as f64).collect();
    let mut worst_clean = 0.0f64;
    for &d in &diameters {
        let e = hct_error(d, None)?;
        ensure(e <= 1.5, || format!("clean d = {d}: error {e}"))?;
        worst_clean = worst_clean.max(e);
    }
    let mut ok = 0;
    let cases = 200;
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = diameters[seed as usize % diameters.len()];
        if hct_error(d, Some((5.0, &mut rng)))? <= 2.0 {
            ok += 1;
        }
    }
    let took = within_budget(start, Duration::from_secs(30))?;
    let detail = format!("clean worst {worst_clean} px; noisy {ok}/{cases} within 2 px (rho {HCT_RHO}); {took:.2?}");
    ensure(ok as f64 >= 0.95 * cases as f64, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// Losses

fn loss_values() -> Outcome {
    let h1 = huber_loss(0.0, 0.5, 1.0);
    let h2 = huber_loss(0.0, 2.0, 1.0);
    let below = huber_loss(0.0, 1.0 - 1e-13, 1.0);
    let above = huber_loss(0.0, 1.0 + 1e-13, 1.0);
    let bce = bce_loss(true, 0.5);
    ensure((h1 - 0.125).abs() < 1e-15, || format!("huber(0.5) = {h1}"))?;
    ensure((h2 - 1.5).abs() < 1e-15, || format!("huber(2.0) = {h2}"))?;
    ensure((below - above).abs() <= 1e-12, || format!("jump at delta {:e}", (below - above).abs()))?;
    ensure((bce - std::f64::consts::LN_2).abs() <= 1e-9, || format!("bce = {bce}"))?;
    Ok(format!("huber 0.5 -> {h1}, 2.0 -> {h2}; bce(1, 0.5) = {bce:.12}"))
}

// ---------------------------------------------------------------------------
// ROC

fn det(x: f64, y: f64, c: f64) -> Detection {
    Detection::new(Pixel::new(x, y), c, None).unwrap()
}

/// Counts, at every threshold, the images with a kept match and the kept non-matches.
fn brute_force_roc(images: &[RocImage]) -> (Vec<(f64, f64, f64)>, f64) {
    let n = images.len() as f64;
    let mut thresholds: Vec<f64> = images.iter().flat_map(|i| i.candidates.iter().map(|c| c.confidence)).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut points = Vec::new();
    for &t in &thresholds {
        let (mut tp, mut fp) = (0usize, 0usize);
        for img in images {
            let kept: Vec<&Detection> = img.candidates.iter().filter(|c| c.confidence >= t).collect();
            let hits = kept
                .iter()
                .filter(|c| img.truth.is_some_and(|b| (c.center - b.center()).norm() <= b.d / 2.0))
                .count();
            let matched = usize::from(hits > 0);
            tp += matched;
            fp += kept.len() - matched;
        }
        points.push((t, tp as f64 / n, fp as f64 / n));
    }
    let fp_max = images.iter().map(|i| i.candidates.len()).max().unwrap_or(0).max(1) as f64;
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    for &(_, tp, fp) in &points {
        xs.push(fp);
        ys.push(tp);
    }
    xs.push(fp_max);
    ys.push(*ys.last().unwrap());
    let area: f64 = (1..xs.len()).map(|i| (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]) / 2.0).sum();
    let auc = if points.is_empty() { 0.0 } else { area / fp_max };
    (points, auc)
}

fn random_roc_fixture(rng: &mut ChaCha8Rng) -> Vec<RocImage> {
    (0..rng.random_range(1..=5))
        .map(|_| {
            let truth = rng.random_bool(0.8).then(|| PixelBall::new(50.0, 50.0, 20.0).unwrap());
            let candidates = (0..rng.random_range(0..=4))
                .map(|_| {
                    let (x, y) = if rng.random_bool(0.5) {
                        (50.0 + rng.random_range(-8.0..8.0), 50.0 + rng.random_range(-8.0..8.0))
                    } else {
                        (rng.random_range(0.0..200.0), rng.random_range(0.0..200.0))
                    };
                    // Coarse confidences so ties occur.
                    det(x, y, rng.random_range(0..6) as f64 / 5.0)
                })
                .collect();
            RocImage { candidates, truth }
        })
        .collect()
}

fn roc_oracle() -> Outcome {
    for seed in 0..50u64 {
        let images = random_roc_fixture(&mut ChaCha8Rng::seed_from_u64(seed));
        let curve = roc(&images, MatchRadius::HalfDiameter).map_err(|e| format!("seed {seed}: {e}"))?;
        let (points, auc) = brute_force_roc(&images);
        ensure(curve.points.len() == points.len(), || format!("seed {seed}: point count"))?;
        for (p, &(t, tp, fp)) in curve.points.iter().zip(&points) {
            ensure(p.threshold == t && p.tp_rate == tp && p.fp_rate == fp, || {
                format!("seed {seed}: {p:?} vs ({t}, {tp}, {fp})")
            })?;
        }
        ensure((curve.auc - auc).abs() <= 1e-12, || format!("seed {seed}: auc {} vs {auc}", curve.auc))?;
    }
    let ball = PixelBall::new(10.0, 10.0, 8.0).unwrap();
    let perfect: Vec<RocImage> = (0..4)
        .map(|i| RocImage {
            candidates: vec![det(10.0, 10.0, 0.5 + i as f64 / 10.0)],
            truth: Some(ball),
        })
        .collect();
    let pure_fp: Vec<RocImage> = (0..4)
        .map(|i| RocImage {
            candidates: vec![det(90.0, 90.0, 0.9), det(70.0, 20.0, i as f64 / 10.0)],
            truth: Some(ball),
        })
        .collect();
    let a1 = roc(&perfect, MatchRadius::HalfDiameter).map_err(|e| e.to_string())?.auc;
    let a0 = roc(&pure_fp, MatchRadius::HalfDiameter).map_err(|e| e.to_string())?.auc;
    ensure(a1 == 1.0 && a0 == 0.0, || format!("perfect {a1}, pure FP {a0}"))?;
    Ok("50 fixtures match point for point; perfect AuC 1, pure-FP AuC 0".into())
}

/// k candidates per image; the ball is ranked second by raw confidence in 30% of
/// images.
fn selection_fixture(rng: &mut ChaCha8Rng, images: usize, k: usize) -> Vec<RocImage> {
    (0..images)
        .map(|i| {
            let ball = PixelBall::new(rng.random_range(100.0..800.0), rng.random_range(100.0..400.0), 20.0).unwrap();
            let mut confs: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..0.95)).collect();
            confs.sort_by(|a, b| b.total_cmp(a));
            let rank = if i % 10 < 3 { 1 } else { 0 };
            let candidates = (0..k)
                .map(|j| {
                    if j == rank {
                        det(ball.bx + rng.random_range(-2.0..2.0), ball.by + rng.random_range(-2.0..2.0), confs[j])
                    } else {
                        let a = rng.random_range(0.0..std::f64::consts::TAU);
                        let r = rng.random_range(40.0..90.0);
                        det(ball.bx + r * a.cos(), ball.by + r * a.sin(), confs[j])
                    }
                })
                .collect();
            RocImage {
                candidates,
                truth: Some(ball),
            }
        })
        .collect()
}

fn oracle_informed_selection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let images = selection_fixture(&mut rng, 200, 4);
    let raw = top1_tp_rate(&images, MatchRadius::HalfDiameter).map_err(|e| e.to_string())?;
    // Confidence scaled by how close the candidate sits to the labelled ball.
    let informed: Vec<RocImage> = images
        .iter()
        .map(|img| {
            let b = img.truth.unwrap();
            let candidates = img
                .candidates
                .iter()
                .map(|c| {
                    let q = ((c.center - b.center()).norm() / b.d).powi(2);
                    Detection {
                        confidence: c.confidence * (-q).exp(),
                        ..*c
                    }
                })
                .collect();
            RocImage {
                candidates,
                truth: img.truth,
            }
        })
        .collect();
    let better = top1_tp_rate(&informed, MatchRadius::HalfDiameter).map_err(|e| e.to_string())?;
    let detail = format!("top-1 TP rate {raw:.3} raw vs {better:.3} oracle-informed (k = 4, 200 images)");
    ensure(better > raw, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// CLI

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_monoball");
    let mut reports = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = Command::new(bin)
            .args(["synthesize", "--seed", "11", "--out"])
            .arg(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        let out = Command::new(bin)
            .arg("--manifest")
            .arg(dir.path().join("manifest.json"))
            .args(["--json", "--rho", "5", "evaluate"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        reports.push(out.stdout);
    }
    ensure(!reports[0].is_empty() && reports[0] == reports[1], || "reports differ".into())?;
    Ok(format!("two runs, {} identical bytes", reports[0].len()))
}

const CRITERIA: &[(&str, fn() -> Outcome)] = &[
    ("geometry round trip", geometry_round_trip),
    ("diameter hand value", diameter_hand_value),
    ("ballistic fit exactness", ballistic_exactness),
    ("annotation method ordering", annotation_ordering),
    ("HCT baseline accuracy", hct_accuracy),
    ("loss unit values", loss_values),
    ("ROC oracle equivalence", roc_oracle),
    ("oracle-informed selection", oracle_informed_selection),
    ("CLI determinism", cli_determinism),
];

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let filter = args.iter().skip(1).find(|a| !a.starts_with('-'));
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for (name, run) in CRITERIA {
        if filter.is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{}/{ran} acceptance criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
