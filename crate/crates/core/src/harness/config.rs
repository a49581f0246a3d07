use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::keypoints::{keypoint_config, KeypointSet};
use crate::losses::LossConfig;
use crate::metrics::DEFAULT_AUC_THRESHOLD;
use crate::refine::IcpConfig;
use crate::solver::{EstimatorConfig, DEFAULT_LAMBDA, DEFAULT_RESIDUE_POINTS};

use super::ply::load_ply;
use super::scene::{synthetic_model, Shape};
use super::train::TrainConfig;
use super::votes::VoteModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSource {
    pub shape: Shape,
    pub points: usize,
    pub seed: u64,
    /// ASCII PLY file; overrides `shape` when set.
    pub ply: Option<PathBuf>,
}

impl Default for ModelSource {
    fn default() -> Self {
        Self {
            shape: Shape::Bumpy,
            points: 500,
            seed: 0,
            ply: None,
        }
    }
}

impl ModelSource {
    /// `(model_id, cloud)`.
    pub fn load(&self) -> Result<(String, PointCloud)> {
        match &self.ply {
            Some(path) => {
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "model".into());
                Ok((id, load_ply(path)?))
            }
            None => Ok((
                self.shape.name().to_string(),
                synthetic_model(self.shape, self.points, self.seed)?,
            )),
        }
    }
}

/// Everything a CLI run needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSource,
    /// Farthest-point keypoints plus the centroid.
    pub num_keypoints: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub residue_points: usize,
    pub max_translation: f64,
    pub noise_levels: Vec<f64>,
    pub occlusion_grid: Vec<f64>,
    pub samples_per_cell: usize,
    pub votes: VoteModel,
    pub doe_keypoints: bool,
    pub doe_pose: bool,
    pub icp: bool,
    /// Adds the weighted all-keypoint fit as a fifth ablation mode.
    pub wls_baseline: bool,
    pub icp_config: IcpConfig,
    pub auc_threshold: f64,
    pub training: TrainConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelSource::default(),
            num_keypoints: 9,
            lambda: DEFAULT_LAMBDA,
            alpha: crate::losses::DEFAULT_ALPHA,
            beta: crate::losses::DEFAULT_BETA,
            residue_points: DEFAULT_RESIDUE_POINTS,
            max_translation: 0.3,
            noise_levels: vec![0.0],
            occlusion_grid: vec![0.0, 0.2, 0.4, 0.6],
            samples_per_cell: 25,
            votes: VoteModel::default(),
            doe_keypoints: true,
            doe_pose: true,
            icp: false,
            wls_baseline: false,
            icp_config: IcpConfig::default(),
            auc_threshold: DEFAULT_AUC_THRESHOLD,
            training: TrainConfig::default(),
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_keypoints < 4 {
            return bad(format!("num_keypoints must be >= 4, got {}", self.num_keypoints));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        self.loss_config()?;
        if self.residue_points == 0 {
            return bad("residue_points must be > 0".into());
        }
        if !(self.max_translation >= 0.0) || !self.max_translation.is_finite() {
            return bad(format!("max_translation must be >= 0, got {}", self.max_translation));
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|n| !(*n >= 0.0) || !n.is_finite()) {
            return bad("noise_levels must be a non-empty list of values >= 0".into());
        }
        if self.occlusion_grid.is_empty() || self.occlusion_grid.iter().any(|o| !(0.0..1.0).contains(o)) {
            return bad("occlusion_grid must be a non-empty list of values in [0, 1)".into());
        }
        if self.samples_per_cell == 0 {
            return bad("samples_per_cell must be > 0".into());
        }
        if !(self.auc_threshold > 0.0) {
            return bad(format!("auc_threshold must be > 0, got {}", self.auc_threshold));
        }
        if !(self.icp_config.tol >= 0.0) {
            return bad("icp_config.tol must be >= 0".into());
        }
        if self.model.ply.is_none() && self.model.points < self.num_keypoints {
            return bad("model.points must be at least num_keypoints".into());
        }
        self.votes.validate(self.num_keypoints)?;
        self.training.validate()?;
        Ok(())
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        LossConfig::new(self.alpha, self.beta).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(m),
            other => Error::InvalidConfig(other.to_string()),
        })
    }

    pub fn estimator_config(&self, residue_seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            lambda: self.lambda,
            residue_points: self.residue_points,
            residue_seed,
        }
    }

    pub fn keypoints(&self, model: &PointCloud) -> Result<KeypointSet> {
        keypoint_config(model, self.num_keypoints - 1)
    }
}
