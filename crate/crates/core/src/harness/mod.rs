//! Experiment plumbing: configuration, datasets, training loops,
//! evaluation metrics and run directories.

mod config;
mod data;
mod eval;
mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ExperimentConfig, Method, OptimizerName, RewardSource, Task, PAPER_EPOCHS, PAPER_LEARNING_RATE};
pub use data::{read_jsonl, read_pairs, read_problems, write_jsonl, write_pairs, write_problems, DataError, ProblemRecord};
pub use eval::{
    audit_accuracy, audit_sweep, audit_winrate, candidate_records, CandidateRecord, evaluate_accuracy, expected_reward, greedy, recount_accuracy, recount_winrate, wilson_interval,
    winrate, DecodeConfig, EvalReport, Judge, VerdictRecord, WinRecord, WILSON_Z,
};
pub use train::{
    countdown_data, run_training, Diagnostic, EvalSplit, Manifest, MetricRecord, TrainingRun, DEFAULT_EVAL_COUNTDOWN, DEFAULT_EVAL_TOY,
};

use crate::countdown::GenerateError;
use crate::objectives::ObjectiveError;
use crate::policy::{save_policy, PolicyError};
use crate::reward::RewardError;
use crate::tasks::TaskError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("training diverged at epoch {}, step {}: {}", .0.epoch, .0.step, .0.message)]
    NonFinite(Box<Diagnostic>),
    #[error("audit failed: {0}")]
    Audit(String),
}

impl HarnessError {
    /// Process exit code by failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io { .. } | HarnessError::Data(_) | HarnessError::Checkpoint(_) => 3,
            HarnessError::NonFinite(_) => 4,
            HarnessError::Audit(_) => 5,
            HarnessError::Generate(_) | HarnessError::Policy(_) | HarnessError::Objective(_) | HarnessError::Reward(_) | HarnessError::Task(_) => 6,
        }
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
            path: dir.into(),
            message: e.to_string(),
        })?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::Io {
        path: path.into(),
        message: e.to_string(),
    })
}

/// `<root>/<config hash>`.
pub fn run_dir(root: &Path, hash: &str) -> PathBuf {
    root.join(hash)
}

/// Persists manifest, metrics timeline and checkpoint; returns the run
/// directory.
pub fn write_run(run: &TrainingRun, root: &Path) -> Result<PathBuf, HarnessError> {
    let dir = run_dir(root, &run.manifest.config_hash);
    write_file(&dir.join(MANIFEST_FILE), &(serde_json::to_string_pretty(&run.manifest).expect("manifest serializes") + "\n"))?;
    write_file(&dir.join(METRICS_FILE), &write_jsonl(&run.timeline))?;
    write_file(&dir.join(POLICY_FILE), &save_policy(&run.params))?;
    Ok(dir)
}

/// Runs and persists an experiment; a divergence leaves a diagnostic
/// snapshot in the run directory.
pub fn train_to_dir(cfg: &ExperimentConfig, root: &Path) -> Result<PathBuf, HarnessError> {
    match run_training(cfg) {
        Ok(run) => write_run(&run, root),
        Err(HarnessError::NonFinite(diag)) => {
            let path = run_dir(root, &diag.config_hash).join(DIAGNOSTIC_FILE);
            write_file(&path, &(serde_json::to_string_pretty(&*diag).expect("diagnostic serializes") + "\n"))?;
            Err(HarnessError::NonFinite(diag))
        }
        Err(e) => Err(e),
    }
}
