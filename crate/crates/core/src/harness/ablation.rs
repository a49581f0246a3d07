//! Outlier-elimination ablation: the same synthetic predictions are pushed
//! through each combination of confidence-weighted voting and the robust
//! candidate bank, across an occlusion and noise grid.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_pose, PointCloud, Pose};
use crate::keypoints::{aggregate_keypoints, normalize_confidences, ConfidenceField, KeypointSet, OffsetField};
use crate::metrics::{EvalReport, SampleMetrics};
use crate::refine::{icp_refine_traced, IcpConfig};
use crate::solver::{kabsch_solve, weighted_kabsch_solve, EstimatorConfig, PoseEstimator};

use super::config::RunConfig;
use super::scene::{derive_seed, generate_scene, SceneConfig};
use super::votes::synthesize_votes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseStage {
    /// One least-squares fit over all keypoints.
    AllKeypoints,
    /// Residue-weighted blend of every three-keypoint fit.
    Bank,
    /// One fit over all keypoints, weighted by vote agreement.
    WeightedLeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub doe_keypoints: bool,
    pub pose: PoseStage,
}

impl Mode {
    pub const NONE: Mode = Mode {
        doe_keypoints: false,
        pose: PoseStage::AllKeypoints,
    };
    pub const DOE_KEYPOINTS: Mode = Mode {
        doe_keypoints: true,
        pose: PoseStage::AllKeypoints,
    };
    pub const DOE_POSE: Mode = Mode {
        doe_keypoints: false,
        pose: PoseStage::Bank,
    };
    pub const BOTH: Mode = Mode {
        doe_keypoints: true,
        pose: PoseStage::Bank,
    };
    pub const WLS: Mode = Mode {
        doe_keypoints: true,
        pose: PoseStage::WeightedLeastSquares,
    };

    pub fn from_flags(doe_keypoints: bool, doe_pose: bool) -> Self {
        Mode {
            doe_keypoints,
            pose: if doe_pose {
                PoseStage::Bank
            } else {
                PoseStage::AllKeypoints
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.doe_keypoints, self.pose) {
            (false, PoseStage::AllKeypoints) => "none",
            (true, PoseStage::AllKeypoints) => "doe_keypoints",
            (false, PoseStage::Bank) => "doe_pose",
            (true, PoseStage::Bank) => "both",
            (_, PoseStage::WeightedLeastSquares) => "wls",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StageOutput {
    pub confidences: ConfidenceField,
    pub keypoints: KeypointSet,
    pub pose: Pose,
    /// ICP result, when refinement was requested.
    pub refined: Option<Pose>,
}

impl StageOutput {
    pub fn final_pose(&self) -> Pose {
        self.refined.unwrap_or(self.pose)
    }
}

/// Runs one mode on one set of predictions.
pub fn run_mode(
    mode: Mode,
    scene: &PointCloud,
    field: &OffsetField,
    model: &PointCloud,
    model_kps: &KeypointSet,
    estimator: &EstimatorConfig,
    icp: Option<&IcpConfig>,
) -> Result<StageOutput> {
    let (n, k) = (field.num_points, field.num_keypoints);
    let confidences = if mode.doe_keypoints {
        normalize_confidences(&field.confidence_logits, n, k)?
    } else {
        ConfidenceField::uniform(n, k)
    };
    let keypoints = aggregate_keypoints(scene, field, &confidences)?;
    let pose = match mode.pose {
        PoseStage::AllKeypoints => kabsch_solve::<f64>(&model_kps.points, &keypoints.points)?.pose,
        PoseStage::Bank => {
            PoseEstimator::new(&model_kps.points, scene, model, *estimator)?
                .estimate::<f64>(&keypoints.points)?
                .0
        }
        PoseStage::WeightedLeastSquares => {
            let w = vote_agreement(scene, field, &confidences, &keypoints);
            weighted_kabsch_solve::<f64>(&model_kps.points, &keypoints.points, &w)?.pose
        }
    };
    let refined = match icp {
        Some(c) => Some(icp_refine_traced(&pose, scene, model, c)?.pose),
        None => None,
    };
    Ok(StageOutput {
        confidences,
        keypoints,
        pose,
        refined,
    })
}

/// Inverse of each keypoint's confidence-weighted vote variance.
fn vote_agreement(scene: &PointCloud, field: &OffsetField, conf: &ConfidenceField, kps: &KeypointSet) -> Vec<f64> {
    (0..field.num_keypoints)
        .map(|j| {
            let var: f64 = (0..field.num_points)
                .map(|i| {
                    let vote = scene.points[i] + field.offset(i, j);
                    conf.weight(i, j) * (vote - kps.points[j]).norm_squared()
                })
                .sum();
            1.0 / (var + 1e-6)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub sample_id: usize,
    pub mode: String,
    pub occlusion: f64,
    pub noise: f64,
    pub add: f64,
    pub add_s: f64,
    pub correct_2cm: bool,
    pub correct_10pct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub mode: String,
    pub occlusion: f64,
    pub noise: f64,
    pub samples: usize,
    pub accuracy_2cm: f64,
    pub accuracy_10pct: f64,
    pub auc_add_s: f64,
    pub mean_add: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Sorted by `(mode, sample_id)`.
    pub rows: Vec<AblationRow>,
    pub reports: BTreeMap<String, EvalReport>,
    /// Sorted by `(mode, noise, occlusion)`.
    pub curve: Vec<CurvePoint>,
}

impl AblationReport {
    pub fn curve_for(&self, mode: &str, noise: f64) -> Vec<&CurvePoint> {
        self.curve
            .iter()
            .filter(|c| c.mode == mode && c.noise == noise)
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("ablation.csv")).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("curve.csv")).map_err(|e| Error::Io(e.to_string()))?;
        for c in &self.curve {
            w.serialize(c).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        let summary: BTreeMap<&String, Summary> = self.reports.iter().map(|(k, r)| (k, Summary::from(r))).collect();
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(dir.join("summary.json"), json + "\n")?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Summary {
    samples: usize,
    auc_add_s: f64,
    auc_add: f64,
    accuracy_2cm: f64,
    accuracy_10pct: f64,
    mean_add: f64,
    mean_add_s: f64,
}

impl From<&EvalReport> for Summary {
    fn from(r: &EvalReport) -> Self {
        Self {
            samples: r.samples.len(),
            auc_add_s: r.auc_add_s,
            auc_add: r.auc_add,
            accuracy_2cm: r.accuracy_2cm,
            accuracy_10pct: r.accuracy_10pct,
            mean_add: r.mean_add,
            mean_add_s: r.mean_add_s,
        }
    }
}

/// Modes compared by [`run_ablation`].
pub fn ablation_modes(include_wls: bool) -> Vec<Mode> {
    let mut m = vec![Mode::NONE, Mode::DOE_KEYPOINTS, Mode::DOE_POSE, Mode::BOTH];
    if include_wls {
        m.push(Mode::WLS);
    }
    m
}

pub fn run_ablation(config: &RunConfig) -> Result<AblationReport> {
    run_ablation_with(config, &ablation_modes(config.wls_baseline))
}

pub fn run_ablation_with(config: &RunConfig, modes: &[Mode]) -> Result<AblationReport> {
    config.validate()?;
    let (model_id, model) = config.model.load()?;
    let model = model.with_diameter();
    let diameter = model.diameter();
    let kps = config.keypoints(&model)?;
    let icp = config.icp.then_some(&config.icp_config);

    let per_cell = config.samples_per_cell;
    let cells: Vec<(f64, f64)> = config
        .noise_levels
        .iter()
        .flat_map(|&n| config.occlusion_grid.iter().map(move |&o| (n, o)))
        .collect();
    let jobs: Vec<(usize, f64, f64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, &(n, o))| (0..per_cell).map(move |s| (c * per_cell + s, n, o)))
        .collect();

    let per_sample: Vec<Result<Vec<(usize, AblationRow, SampleMetrics)>>> = jobs
        .par_iter()
        .map(|&(sample_id, noise, occlusion)| {
            let seed = derive_seed(config.seed, sample_id as u64);
            let scene_cfg = SceneConfig {
                noise_sigma: noise,
                occlusion,
                max_translation: config.max_translation,
            };
            let sample = generate_scene(&model_id, &model, &scene_cfg, seed)?;
            let truth_kps =
                KeypointSet::new(apply_pose(&sample.true_pose, &PointCloud::new(kps.points.clone()))?.points);
            let preds = synthesize_votes(&sample.scene, &truth_kps, diameter, &config.votes, derive_seed(seed, 1))?;
            let est = config.estimator_config(derive_seed(seed, 2));
            modes
                .iter()
                .enumerate()
                .map(|(mi, mode)| {
                    let out = run_mode(*mode, &sample.scene, &preds.field, &model, &kps, &est, icp)?;
                    let m = SampleMetrics::evaluate(&out.final_pose(), &sample.true_pose, &model)?;
                    Ok((
                        mi,
                        AblationRow {
                            sample_id,
                            mode: mode.name().to_string(),
                            occlusion,
                            noise,
                            add: m.add,
                            add_s: m.add_s,
                            correct_2cm: m.correct_at_2cm,
                            correct_10pct: m.correct_at_10pct_diameter,
                        },
                        m,
                    ))
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(jobs.len() * modes.len());
    let mut by_mode: Vec<Vec<SampleMetrics>> = vec![Vec::new(); modes.len()];
    for r in per_sample {
        for (mi, row, m) in r? {
            by_mode[mi].push(m);
            rows.push(row);
        }
    }
    rows.sort_by(|a, b| a.mode.cmp(&b.mode).then(a.sample_id.cmp(&b.sample_id)));

    let mut reports = BTreeMap::new();
    for (mode, samples) in modes.iter().zip(by_mode) {
        reports.insert(
            mode.name().to_string(),
            EvalReport::from_samples(samples, config.auc_threshold)?,
        );
    }

    let mut curve = Vec::new();
    for mode in modes {
        for &noise in &config.noise_levels {
            for &occlusion in &config.occlusion_grid {
                let cell: Vec<SampleMetrics> = rows
                    .iter()
                    .filter(|r| r.mode == mode.name() && r.noise == noise && r.occlusion == occlusion)
                    .map(|r| SampleMetrics {
                        add: r.add,
                        add_s: r.add_s,
                        correct_at_2cm: r.correct_2cm,
                        correct_at_10pct_diameter: r.correct_10pct,
                    })
                    .collect();
                let rep = EvalReport::from_samples(cell, config.auc_threshold)?;
                curve.push(CurvePoint {
                    mode: mode.name().to_string(),
                    occlusion,
                    noise,
                    samples: rep.samples.len(),
                    accuracy_2cm: rep.accuracy_2cm,
                    accuracy_10pct: rep.accuracy_10pct,
                    auc_add_s: rep.auc_add_s,
                    mean_add: rep.mean_add,
                });
            }
        }
    }
    curve.sort_by(|a, b| {
        a.mode
            .cmp(&b.mode)
            .then(a.noise.total_cmp(&b.noise))
            .then(a.occlusion.total_cmp(&b.occlusion))
    });
    Ok(AblationReport { rows, reports, curve })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &t in &idx[i..=j] {
                r[t] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
