//! Command-line front end. [`run`] returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_pose, PointCloud, Pose, Quaternion};
use crate::harness::ablation::{run_ablation, run_mode, Mode};
use crate::harness::gradcheck::{run_gradcheck, GradcheckConfig};
use crate::harness::scene::{derive_seed, generate_scene, SceneConfig, SceneSample};
use crate::harness::train::{toy_problem, train_toy, Corruption};
use crate::harness::votes::synthesize_votes;
use crate::harness::RunConfig;
use crate::keypoints::KeypointSet;
use crate::linalg::Vec3;
use crate::metrics::{EvalReport, SampleMetrics};
use crate::solver::PoseEstimator;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Caps the worker pool when set to a positive integer.
pub const THREADS_ENV: &str = "REDE_CORE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rede", version, about = "Robust differentiable 6D pose estimation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic scene sample as JSON.
    Gen {
        #[arg(long)]
        occlusion: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Estimate the pose of a scene sample from synthetic votes.
    Solve {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Train the per-scene toy predictor and write its loss trace.
    TrainToy {
        /// Scene JSON; generated from the seed when absent.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Plant biased supervision on the configured number of keypoints.
        #[arg(long)]
        corrupt: bool,
    },
    /// Score predicted poses against ground truth.
    Eval {
        #[arg(long)]
        input: PathBuf,
    },
    /// Compare exact gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Run the ablation grid.
    Ablate,
}

/// One predicted/true pose pair for `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub sample_id: usize,
    pub pred: PoseJson,
    pub truth: PoseJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalInput {
    pub samples: Vec<EvalSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    /// `[w, x, y, z]`.
    pub quat: [f64; 4],
    pub t: [f64; 3],
}

impl From<&Pose> for PoseJson {
    fn from(p: &Pose) -> Self {
        Self {
            quat: p.rotation.as_array(),
            t: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl From<PoseJson> for Pose {
    fn from(p: PoseJson) -> Self {
        Pose::new(Quaternion::from_array(p.quat), Vec3::new(p.t[0], p.t[1], p.t[2]))
    }
}

/// Maps an error to the documented exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DegenerateConfiguration(_)
        | Error::NoValidCandidate
        | Error::AggregationDegenerate { .. }
        | Error::NonFiniteGradient { .. }
        | Error::NonFiniteLoss { .. } => EXIT_NUMERICAL,
        Error::InvalidInput(_) | Error::InvalidConfig(_) | Error::Parse { .. } | Error::Io(_) => EXIT_INVALID,
    }
}

pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::InvalidSubcommand
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_INVALID,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A pool may already exist when running in-process; the cap then stays as it was.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    Ok(config)
}

fn out_dir(common: &Common, config: &RunConfig) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<i32> {
    let config = load_config(&cli.common)?;
    match cli.command {
        Command::Gen { occlusion, noise } => gen(&cli.common, &config, occlusion, noise),
        Command::Solve { scene } => solve(&cli.common, &config, &scene),
        Command::TrainToy { scene, corrupt } => train(&cli.common, &config, scene.as_deref(), corrupt),
        Command::Eval { input } => eval(&cli.common, &config, &input),
        Command::Gradcheck { count } => gradcheck(&cli.common, &config, count),
        Command::Ablate => ablate(&cli.common, &config),
    }
}

fn scene_config(config: &RunConfig, occlusion: Option<f64>, noise: Option<f64>) -> SceneConfig {
    SceneConfig {
        noise_sigma: noise.unwrap_or(config.noise_levels[0]),
        occlusion: occlusion.unwrap_or(config.occlusion_grid[0]),
        max_translation: config.max_translation,
    }
}

fn gen(common: &Common, config: &RunConfig, occlusion: Option<f64>, noise: Option<f64>) -> Result<i32> {
    let (id, model) = config.model.load()?;
    let sample = generate_scene(&id, &model, &scene_config(config, occlusion, noise), config.seed)?;
    let path = out_dir(common, config)?.join(format!("scene_{}.json", config.seed));
    write(&path, &sample.to_json()?)?;
    println!("{}", path.display());
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct SolveReport {
    model_id: String,
    seed: u64,
    mode: &'static str,
    pose: PoseJson,
    candidates: usize,
    degenerate: usize,
    weight_sum: f64,
    best_triple: Option<[usize; 3]>,
    best_weight: Option<f64>,
    add: f64,
    add_s: f64,
}

fn solve(common: &Common, config: &RunConfig, scene_path: &Path) -> Result<i32> {
    let sample = SceneSample::from_json(&read(scene_path)?)?;
    let (_, model) = config.model.load()?;
    let model = model.with_diameter();
    let kps = config.keypoints(&model)?;
    let truth_kps = KeypointSet::new(apply_pose(&sample.true_pose, &PointCloud::new(kps.points.clone()))?.points);
    let preds = synthesize_votes(
        &sample.scene,
        &truth_kps,
        model.diameter(),
        &config.votes,
        derive_seed(config.seed, 1),
    )?;
    let est_cfg = config.estimator_config(derive_seed(config.seed, 2));
    let mode = Mode::from_flags(config.doe_keypoints, config.doe_pose);
    let icp = config.icp.then_some(&config.icp_config);
    let out = run_mode(mode, &sample.scene, &preds.field, &model, &kps, &est_cfg, icp)?;
    let (_, bank) =
        PoseEstimator::new(&kps.points, &sample.scene, &model, est_cfg)?.estimate::<f64>(&out.keypoints.points)?;
    let pose = out.final_pose();
    let m = SampleMetrics::evaluate(&pose, &sample.true_pose, &model)?;
    let best = bank.best();
    let report = SolveReport {
        model_id: sample.model_id.clone(),
        seed: config.seed,
        mode: mode.name(),
        pose: PoseJson::from(&pose),
        candidates: bank.candidates.len(),
        degenerate: bank.degenerate_count(),
        weight_sum: bank.weight_sum(),
        best_triple: best.map(|c| c.triple),
        best_weight: best.map(|c| c.weight),
        add: m.add,
        add_s: m.add_s,
    };
    let text = to_json(&report)?;
    write(&out_dir(common, config)?.join("solve.json"), &text)?;
    println!("{text}");
    Ok(EXIT_OK)
}

fn train(common: &Common, config: &RunConfig, scene: Option<&Path>, corrupt: bool) -> Result<i32> {
    let (id, model) = config.model.load()?;
    let model = model.with_diameter();
    let sample = match scene {
        Some(p) => SceneSample::from_json(&read(p)?)?,
        None => generate_scene(&id, &model, &scene_config(config, None, None), config.seed)?,
    };
    let kps = config.keypoints(&model)?;
    let corruption = corrupt.then(|| planted_corruption(config, model.diameter()));
    let problem = toy_problem(
        &sample,
        &model,
        &kps,
        config.estimator_config(derive_seed(config.seed, 2)),
        config.loss_config()?,
        corruption.as_ref(),
    )?;
    let outcome = train_toy(&problem, &config.training)?;
    let dir = out_dir(common, config)?;
    let file = fs::File::create(dir.join("train_trace.csv"))?;
    outcome.write_csv(file)?;
    println!(
        "iterations {} initial pose_loss {} final pose_loss {} final offset_loss {}",
        outcome.trace.len() - 1,
        outcome.initial_pose_loss().unwrap_or(f64::NAN),
        outcome.final_pose_loss(),
        outcome.final_offset_loss()
    );
    Ok(EXIT_OK)
}

/// The configured number of keypoints, starting at index 0, each with a
/// seeded bias of `corruption_scale · diameter`.
pub fn planted_corruption(config: &RunConfig, diameter: f64) -> Corruption {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 3));
    let n = config.votes.corrupted_keypoints.min(config.num_keypoints);
    Corruption {
        keypoints: (0..n).collect(),
        bias: (0..n)
            .map(|_| crate::harness::scene::unit_vector(&mut rng).scale_f64(config.votes.corruption_scale * diameter))
            .collect(),
    }
}

#[derive(Debug, Serialize)]
struct EvalRow {
    sample_id: usize,
    add: f64,
    add_s: f64,
    correct_2cm: bool,
    correct_10pct: bool,
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    samples: usize,
    auc_add_s: f64,
    auc_add: f64,
    accuracy_2cm: f64,
    accuracy_10pct: f64,
    mean_add: f64,
    mean_add_s: f64,
}

/// Scores `input` against the configured model.
pub fn evaluate_input(config: &RunConfig, input: &EvalInput) -> Result<EvalReport> {
    let (_, model) = config.model.load()?;
    let model = model.with_diameter();
    let samples = input
        .samples
        .iter()
        .map(|s| SampleMetrics::evaluate(&s.pred.into(), &s.truth.into(), &model))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_samples(samples, config.auc_threshold)
}

fn eval(common: &Common, config: &RunConfig, input: &Path) -> Result<i32> {
    let input: EvalInput =
        serde_json::from_str(&read(input)?).map_err(|e| Error::InvalidInput(format!("eval input: {e}")))?;
    let report = evaluate_input(config, &input)?;
    let dir = out_dir(common, config)?;
    let mut rows: Vec<EvalRow> = input
        .samples
        .iter()
        .zip(&report.samples)
        .map(|(s, m)| EvalRow {
            sample_id: s.sample_id,
            add: m.add,
            add_s: m.add_s,
            correct_2cm: m.correct_at_2cm,
            correct_10pct: m.correct_at_10pct_diameter,
        })
        .collect();
    rows.sort_by_key(|r| r.sample_id);
    let mut w = csv::Writer::from_path(dir.join("eval.csv")).map_err(|e| Error::Io(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    let summary = EvalSummary {
        samples: report.samples.len(),
        auc_add_s: report.auc_add_s,
        auc_add: report.auc_add,
        accuracy_2cm: report.accuracy_2cm,
        accuracy_10pct: report.accuracy_10pct,
        mean_add: report.mean_add,
        mean_add_s: report.mean_add_s,
    };
    let text = to_json(&summary)?;
    write(&dir.join("eval.json"), &text)?;
    println!("{text}");
    Ok(EXIT_OK)
}

fn gradcheck(common: &Common, config: &RunConfig, count: usize) -> Result<i32> {
    let gc = GradcheckConfig::default();
    let results = run_gradcheck(config.seed, count, &gc)?;
    if common.out.is_some() || config.out_dir.is_some() {
        let mut w = csv::Writer::from_path(out_dir(common, config)?.join("gradcheck.csv"))
            .map_err(|e| Error::Io(e.to_string()))?;
        for r in &results {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    let mut failed = false;
    for name in ["offset_loss", "pose_loss", "joint_loss", "joint_loss_structured"] {
        let rs: Vec<_> = results.iter().filter(|r| r.objective == name).collect();
        let checked: usize = rs.iter().map(|r| r.checked).sum();
        let failures: usize = rs.iter().map(|r| r.failures).sum();
        let worst = rs.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
        failed |= failures > 0;
        println!(
            "{name:<22} instances {:>3} checked {checked:>7} failures {failures:>4} max_rel_error {worst:.3e}",
            rs.len()
        );
    }
    Ok(if failed { EXIT_NUMERICAL } else { EXIT_OK })
}

fn ablate(common: &Common, config: &RunConfig) -> Result<i32> {
    let report = run_ablation(config)?;
    let dir = out_dir(common, config)?;
    report.write(&dir)?;
    for (mode, r) in &report.reports {
        println!(
            "{mode:<14} auc_add_s {:.4} acc_2cm {:.3} acc_10pct {:.3} mean_add {:.5}",
            r.auc_add_s, r.accuracy_2cm, r.accuracy_10pct, r.mean_add
        );
    }
    Ok(EXIT_OK)
}
