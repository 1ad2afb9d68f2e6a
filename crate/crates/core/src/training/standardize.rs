use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::sealnet::Task;

/// `y ↦ (y − shift) / scale`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub shift: f64,
    pub scale: f64,
}

impl TargetTransform {
    pub const IDENTITY: Self = Self {
        shift: 0.0,
        scale: 1.0,
    };

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.scale + self.shift
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// Mean / population standard deviation of the training targets.
/// Classification targets are left alone.
pub fn standardize_targets(task: Task, train_targets: &[f64]) -> Result<TargetTransform, TrainError> {
    if task == Task::Binary {
        return Ok(TargetTransform::IDENTITY);
    }
    if train_targets.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    let n = train_targets.len() as f64;
    let mean = train_targets.iter().sum::<f64>() / n;
    let var = train_targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(TrainError::DegenerateTargets);
    }
    Ok(TargetTransform {
        shift: mean,
        scale: sd,
    })
}
