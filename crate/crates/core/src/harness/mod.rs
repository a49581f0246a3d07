//! Synthetic data, toy training, gradient checks and the ablation runner.

pub mod ablation;
pub mod config;
pub mod gradcheck;
pub mod ply;
pub mod scene;
pub mod train;
pub mod votes;

pub use ablation::{run_ablation, AblationReport, AblationRow, Mode};
pub use config::{ModelSource, RunConfig};
pub use gradcheck::{run_gradcheck, CheckResult, GradcheckConfig};
pub use ply::load_ply;
pub use scene::{generate_scene, synthetic_model, SceneConfig, SceneSample, Shape};
pub use train::{toy_problem, train_toy, TrainConfig, TrainOutcome};
pub use votes::{synthesize_votes, VoteModel};
