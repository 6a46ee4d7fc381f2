//! `monoball` command-line front end.

mod exit;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use monoball::ballistic::{self, AnnotationComparison, AnnotationScene, ClickNoise, Histogram, OUTLIER_FACTOR};
use monoball::data::{self, DatasetManifest, SceneSpec};
use monoball::estimation::{EstimatorRegistry, LossParams};
use monoball::geometry::DEFAULT_BALL_DIAMETER;
use monoball::imageproc::{BaselineConfig, DEFAULT_D_STEP, DEFAULT_PATCH_SIDE, DEFAULT_RHO, DEFAULT_TAU_HIGH, DEFAULT_TAU_LOW};
use monoball::metrics::{LocalizationMode, MatchRadius};
use monoball::pipeline::{self, PipelineConfig};
use monoball_service::{AppState, Session, SessionOptions};
use serde_json::{json, Value};

use crate::exit::CliError;

#[derive(Debug, Parser)]
#[command(name = "monoball", version, about = "Monocular 3D ball localization")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Dataset manifest (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Print a JSON payload on stdout instead of a summary.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Real ball diameter [m].
    #[arg(long, global = true, default_value_t = DEFAULT_BALL_DIAMETER)]
    phi: f64,
    /// Opening disc diameter [px].
    #[arg(long, global = true, default_value_t = DEFAULT_RHO)]
    rho: u32,
    #[arg(long, global = true, default_value_t = DEFAULT_TAU_LOW)]
    tau_low: f64,
    #[arg(long, global = true, default_value_t = DEFAULT_TAU_HIGH)]
    tau_high: f64,
    /// Hough diameter step [px].
    #[arg(long, global = true, default_value_t = DEFAULT_D_STEP)]
    d_step: f64,
    /// Huber threshold of the diameter loss.
    #[arg(long, global = true, default_value_t = monoball::estimation::DEFAULT_DELTA)]
    delta: f64,
    /// Weight of the diameter loss.
    #[arg(long, global = true, default_value_t = monoball::estimation::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, global = true, default_value_t = DEFAULT_PATCH_SIDE)]
    patch_side: usize,
    /// Gravity [m/s²].
    #[arg(long, global = true, default_value_t = ballistic::STANDARD_GRAVITY)]
    g: f64,
    /// Fixed ROC match radius [px]; half the labelled diameter when absent.
    #[arg(long, global = true)]
    match_radius: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Localize the ball in one image.
    Localize {
        image_id: String,
        #[arg(long, default_value = "hct")]
        estimator: String,
    },
    /// Fit a ballistic trajectory to the annotations of a sequence.
    FitTrajectory { trajectory_id: String },
    /// Score an estimator over every annotated image.
    Evaluate {
        #[arg(long, default_value = "hct")]
        estimator: String,
        #[arg(long, value_enum, default_value_t = Mode::TrueCenter)]
        mode: Mode,
    },
    /// Monte Carlo comparison of diameter and vertical-projection annotation.
    CompareAnnotations {
        /// Click noise standard deviation [px].
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 1000)]
        seeds: u64,
        /// Histogram CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset.
    Synthesize {
        #[arg(long)]
        out: PathBuf,
        /// Scene parameters (JSON); missing fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Run the annotation server.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Static files served under `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Journal directory; `annotations/` next to the manifest by default.
        #[arg(long)]
        journal_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    TrueCenter,
    EndToEnd,
}

impl From<Mode> for LocalizationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::TrueCenter => LocalizationMode::TrueCenter,
            Mode::EndToEnd => LocalizationMode::EndToEnd,
        }
    }
}

/// What a command prints on success.
struct Output {
    summary: String,
    payload: Value,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if cli.global.json {
                println!("{}", serde_json::to_string_pretty(&out.payload).expect("payload serializes"));
            } else if !out.summary.is_empty() {
                print!("{}", out.summary);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: &Cli) -> Result<Output, CliError> {
    let g = &cli.global;
    if !(g.phi.is_finite() && g.phi > 0.0) {
        return Err(CliError::usage(format!("--phi must be positive, got {}", g.phi)));
    }
    if g.patch_side == 0 {
        return Err(CliError::usage("--patch-side must be at least 1"));
    }
    LossParams::new(g.delta, g.alpha).map_err(|e| CliError::usage(e.to_string()))?;
    let match_radius = match g.match_radius {
        Some(r) if r.is_finite() && r > 0.0 => MatchRadius::Fixed(r),
        Some(r) => return Err(CliError::usage(format!("--match-radius must be positive, got {r}"))),
        None => MatchRadius::HalfDiameter,
    };
    match &cli.command {
        Command::Localize { image_id, estimator } => localize(g, image_id, estimator, match_radius),
        Command::FitTrajectory { trajectory_id } => fit_trajectory(g, trajectory_id),
        Command::Evaluate { estimator, mode } => evaluate(g, estimator, (*mode).into(), match_radius),
        Command::CompareAnnotations { noise, seeds, out } => compare_annotations(g, *noise, *seeds, out.as_deref()),
        Command::Synthesize { out, spec, trajectories } => synthesize(g, out, spec.as_deref(), *trajectories),
        Command::Serve {
            bind,
            ui_dir,
            journal_dir,
        } => serve(g, *bind, ui_dir.clone(), journal_dir.clone()),
    }
}

fn manifest_path(g: &Global) -> Result<&Path, CliError> {
    g.manifest.as_deref().ok_or_else(|| CliError::usage("--manifest is required"))
}

fn load(g: &Global) -> Result<(DatasetManifest, PathBuf), CliError> {
    let path = manifest_path(g)?;
    let manifest = data::load_manifest(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, base))
}

fn registry(g: &Global, manifest: &DatasetManifest) -> EstimatorRegistry {
    EstimatorRegistry::with_builtins(BaselineConfig {
        rho: g.rho,
        tau_low: g.tau_low,
        tau_high: g.tau_high,
        d_step: g.d_step,
        court: manifest.court.unwrap_or_default(),
    })
}

fn pipeline_config(g: &Global, mode: LocalizationMode, match_radius: MatchRadius) -> PipelineConfig {
    PipelineConfig {
        phi: g.phi,
        patch_side: g.patch_side,
        mode,
        match_radius,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn localize(g: &Global, image_id: &str, estimator: &str, match_radius: MatchRadius) -> Result<Output, CliError> {
    let (manifest, base) = load(g)?;
    let config = pipeline_config(g, LocalizationMode::default(), match_radius);
    let loc = pipeline::localize_image(&manifest, &base, image_id, &registry(g, &manifest), estimator, &config)?;
    let d = loc.detection;
    let summary = format!(
        "image {}  candidate {}  center ({:.2}, {:.2})  confidence {:.4}  diameter {} px\nposition {}\n",
        loc.image_id,
        loc.candidate_index,
        d.center.x,
        d.center.y,
        d.confidence,
        fmt_opt(d.diameter),
        loc.position
            .map_or_else(|| "none (no diameter estimate)".into(), |p| format!("({:.4}, {:.4}, {:.4}) m", p.x, p.y, p.z)),
    );
    let payload = json!({
        "image_id": loc.image_id,
        "estimator": estimator,
        "phi": g.phi,
        "candidate_index": loc.candidate_index,
        "center": [d.center.x, d.center.y],
        "confidence": d.confidence,
        "diameter": d.diameter,
        "position": loc.position.map(|p| [p.x, p.y, p.z]),
    });
    Ok(Output { summary, payload })
}

fn fit_trajectory(g: &Global, trajectory_id: &str) -> Result<Output, CliError> {
    let (manifest, _) = load(g)?;
    let observations = manifest.trajectory_observations(trajectory_id, g.phi)?;
    let obs: Vec<_> = observations.iter().map(|(_, o)| *o).collect();
    let fit = ballistic::fit(&obs, g.g)?;
    let outliers = fit.outliers(OUTLIER_FACTOR);
    let t = fit.trajectory;
    let mut summary = format!(
        "trajectory {trajectory_id}  n {}  rms {:.4} m\np0 ({:.4}, {:.4}, {:.4})  v0 ({:.4}, {:.4}, {:.4})\n",
        obs.len(),
        fit.rms,
        t.p0.x,
        t.p0.y,
        t.p0.z,
        t.v0.x,
        t.v0.y,
        t.v0.z
    );
    let mut rows = Vec::new();
    for (i, (image_id, o)) in observations.iter().enumerate() {
        let r = fit.residuals[i].norm();
        let q = fit.denoised[i];
        if outliers[i] {
            summary.push_str(&format!("outlier {image_id}  t {:.4}  residual {r:.4} m\n", o.t));
        }
        rows.push(json!({
            "image_id": image_id,
            "t": o.t,
            "observed": [o.position.x, o.position.y, o.position.z],
            "denoised": [q.x, q.y, q.z],
            "residual": r,
            "outlier": outliers[i],
        }));
    }
    let payload = json!({
        "trajectory_id": trajectory_id,
        "g": t.g,
        "p0": [t.p0.x, t.p0.y, t.p0.z],
        "v0": [t.v0.x, t.v0.y, t.v0.z],
        "rms": fit.rms,
        "outlier_factor": OUTLIER_FACTOR,
        "observations": rows,
    });
    Ok(Output { summary, payload })
}

fn evaluate(g: &Global, estimator: &str, mode: LocalizationMode, match_radius: MatchRadius) -> Result<Output, CliError> {
    let (manifest, base) = load(g)?;
    let config = pipeline_config(g, mode, match_radius);
    let report = pipeline::evaluate_dataset(&manifest, &base, &registry(g, &manifest), estimator, &config)?;
    let summary = format!("estimator {estimator}\n{}", report.to_table());
    let payload = json!({
        "estimator": estimator,
        "mode": mode,
        "phi": g.phi,
        "match_radius": match_radius,
        "mae_px": report.mae_px,
        "mae_m": report.mae_m,
        "mae_pct": report.mae_pct,
        "auc": report.auc,
        "n": report.n,
        "excluded": report.excluded,
    });
    Ok(Output { summary, payload })
}

fn histogram_csv(cmp: &AnnotationComparison) -> String {
    let mut csv = String::from("method,bin_start,bin_end,count\n");
    let mut rows = |method: &str, h: &Histogram| {
        csv.push_str(&format!("{method},-inf,{},{}\n", h.start, h.underflow));
        for (i, c) in h.counts.iter().enumerate() {
            let (lo, hi) = h.bin_edges(i);
            csv.push_str(&format!("{method},{lo},{hi},{c}\n"));
        }
        let (_, end) = h.bin_edges(h.counts.len() - 1);
        csv.push_str(&format!("{method},{end},inf,{}\n", h.overflow));
    };
    rows("diameter", &cmp.diameter.histogram);
    rows("projection", &cmp.projection.histogram);
    csv
}

fn compare_annotations(g: &Global, noise: f64, seeds: u64, out: Option<&Path>) -> Result<Output, CliError> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(CliError::usage(format!("--noise must be non-negative, got {noise}")));
    }
    let scene = AnnotationScene {
        phi: g.phi,
        ..AnnotationScene::default_fixture()
    };
    let cmp = ballistic::compare_annotation_methods(&scene, &ClickNoise::uniform(noise), seeds, g.seed)?;
    let csv = histogram_csv(&cmp);
    let mut summary = String::new();
    match out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| CliError::io(path, e))?;
            summary.push_str(&format!(
                "{} positions x {} seeds, noise {noise} px\n",
                cmp.positions, cmp.seeds
            ));
            for (name, s) in [("diameter", &cmp.diameter), ("projection", &cmp.projection)] {
                summary.push_str(&format!(
                    "{name:<10} mean {:+.4}  std {:.4}  mean |err| {:.4}  max |err| {:.4} px  failures {}\n",
                    s.mean, s.std, s.mean_abs, s.max_abs, s.failures
                ));
            }
            summary.push_str(&format!("histogram written to {}\n", path.display()));
        }
        None => summary = csv,
    }
    let payload = serde_json::to_value(&cmp).expect("comparison serializes");
    Ok(Output { summary, payload })
}

fn synthesize(g: &Global, out: &Path, spec: Option<&Path>, trajectories: Option<usize>) -> Result<Output, CliError> {
    let mut scene = match spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<SceneSpec>(&text)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        }
        None => SceneSpec {
            phi: g.phi,
            ..SceneSpec::default()
        },
    };
    if let Some(n) = trajectories {
        scene.trajectories = n;
    }
    let ds = data::synthesize_dataset(&scene, g.seed)?;
    ds.write(out)?;
    let m = &ds.manifest;
    let annotated = m.images.iter().filter(|i| i.annotation.is_some()).count();
    let manifest_file = out.join(data::MANIFEST_FILE);
    let summary = format!(
        "wrote {} images ({annotated} annotated), {} trajectories to {}\n",
        m.images.len(),
        m.trajectories.len(),
        manifest_file.display()
    );
    let payload = json!({
        "manifest": manifest_file,
        "seed": g.seed,
        "images": m.images.len(),
        "annotated": annotated,
        "trajectories": m.trajectories.len(),
    });
    Ok(Output { summary, payload })
}

fn serve(g: &Global, bind: SocketAddr, ui_dir: Option<PathBuf>, journal_dir: Option<PathBuf>) -> Result<Output, CliError> {
    let path = manifest_path(g)?;
    let options = SessionOptions {
        journal_dir,
        phi: g.phi,
        g: g.g,
        ui_dir,
        ..SessionOptions::default()
    };
    let session = Session::open(path, options)?;
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::internal)?;
    eprintln!("serving {} on http://{bind}", path.display());
    runtime
        .block_on(monoball_service::serve(AppState(std::sync::Arc::new(session)), bind))
        .map_err(CliError::internal)?;
    Ok(Output {
        summary: String::new(),
        payload: Value::Null,
    })
}
