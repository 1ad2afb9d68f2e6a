//! Optimization loop, target standardization, early stopping and the
//! cross-validated choice of the inter-fragment penalty.

mod adamw;
mod cv;
mod standardize;
mod wilcoxon;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{AutogradError, Matrix, Tape};
use crate::metrics::{self, MetricsError};
use crate::sealnet::{ForwardOptions, GraphBatch, ModelError, PreparedGraph, SealConfig, SealModel, Task};

pub use adamw::{adamw_step, AdamWParams, AdamWState};
pub use cv::{cross_validate, select_lambda, CvReport, DEFAULT_LAMBDA_GRID};
pub use standardize::{standardize_targets, TargetTransform};
pub use wilcoxon::{average_ranks, signed_ranks, wilcoxon_signed_rank, Alternative, SignedRanks, EXACT_LIMIT};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("regression targets have zero variance")]
    DegenerateTargets,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cross-validation report has no candidates")]
    EmptyReport,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Metric(#[from] MetricsError),
}

/// Validation metric used for early stopping and model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auroc,
    Mae,
}

impl Metric {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Binary => Metric::Auroc,
            Task::Regression => Metric::Mae,
        }
    }

    pub fn higher_is_better(self) -> bool {
        self == Metric::Auroc
    }

    /// Maps the metric onto a higher-is-better scale.
    pub fn oriented(self, value: f64) -> f64 {
        if self.higher_is_better() {
            value
        } else {
            -value
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub warmup_epochs: usize,
    pub lambda: f64,
    pub seed: u64,
    pub metric: Metric,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        Self {
            batch_size: 256,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            max_epochs: 200,
            early_stop_patience: 30,
            warmup_epochs: 50,
            lambda: 0.0,
            seed: 0,
            metric: Metric::for_task(task),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch under the linear warm-up.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.warmup_epochs == 0 || epoch >= self.warmup_epochs {
            self.learning_rate
        } else {
            self.learning_rate * (epoch + 1) as f64 / self.warmup_epochs as f64
        }
    }
}

/// One prepared molecule with its target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub graph: PreparedGraph,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// `None` when the metric is undefined on the validation split
    /// (e.g. AUROC with a single class); the loss is used instead.
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub transform: TargetTransform,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.map(|e| &self.epochs[e])
    }
}

fn pred_loss(task: Task, pred: f64, target: f64) -> f64 {
    match task {
        Task::Regression => (pred - target).powi(2),
        Task::Binary => pred.max(0.0) - pred * target + (-pred.abs()).exp().ln_1p(),
    }
}

fn initial_bias(task: Task, scaled_targets: &[f64]) -> f64 {
    let mean = scaled_targets.iter().sum::<f64>() / scaled_targets.len() as f64;
    match task {
        Task::Regression => mean,
        Task::Binary => {
            let p = mean.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    }
}

/// Rescales the output layer and bias so the model predicts on the
/// original target scale. Contributions scale with the targets.
fn fold_transform(model: &mut SealModel, t: &TargetTransform) {
    if t.is_identity() {
        return;
    }
    let last = model.head.last_mut().expect("head has at least one layer");
    last.weight = last.weight.map(|w| w * t.scale);
    last.bias = last.bias.map(|b| b * t.scale);
    let b = model.bias_value();
    model.set_bias(t.inverse(b));
}

/// Validation loss (on the scaled targets) and metric (on the original scale).
fn validate(
    model: &SealModel,
    val: &[&PreparedGraph],
    raw_targets: &[f64],
    t: &TargetTransform,
    cfg: &TrainConfig,
) -> Result<(f64, Option<f64>), TrainError> {
    let preds = model.predict(val, cfg.batch_size)?;
    let task = model.config.task;
    let loss = preds
        .iter()
        .zip(raw_targets)
        .map(|(&p, &y)| pred_loss(task, p, t.apply(y)))
        .sum::<f64>()
        / preds.len() as f64;
    let metric = match cfg.metric {
        Metric::Auroc => match metrics::auroc(&preds, raw_targets) {
            Ok(v) => Some(v),
            Err(MetricsError::SingleClass) => None,
            Err(e) => return Err(e.into()),
        },
        Metric::Mae => {
            let orig: Vec<f64> = preds.iter().map(|&p| t.inverse(p)).collect();
            Some(metrics::mae(&orig, raw_targets)?)
        }
    };
    Ok((loss, metric))
}

/// Trains a fresh model and returns the checkpoint with the best
/// validation score, rescaled to predict raw targets.
///
/// Regression targets are standardized with training statistics; when the
/// training targets are constant only the mean is removed.
pub fn train(
    model_config: &SealConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(SealModel, TrainHistory), TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    cfg.validate()?;
    let mut config = model_config.clone();
    config.lambda = cfg.lambda;
    let task = config.task;

    let raw: Vec<f64> = train_set.iter().map(|s| s.target).collect();
    let transform = match standardize_targets(task, &raw) {
        Ok(t) => t,
        Err(TrainError::DegenerateTargets) => {
            log::warn!("training targets are constant; centering without scaling");
            TargetTransform {
                shift: raw[0],
                scale: 1.0,
            }
        }
        Err(e) => return Err(e),
    };
    let scaled: Vec<f64> = raw.iter().map(|&y| transform.apply(y)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SealModel::new(config, &mut rng)?;
    model.set_bias(initial_bias(task, &scaled));

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: None,
        stopped_early: false,
        transform,
    };
    let val_graphs: Vec<&PreparedGraph> = val_set.iter().map(|s| &s.graph).collect();
    let val_targets: Vec<f64> = val_set.iter().map(|s| s.target).collect();

    let mut state = AdamWState::new(&model.parameters());
    let trainable = model.trainable_mask();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, f64, SealModel)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        let hp = AdamWParams::new(lr, cfg.weight_decay);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let graphs: Vec<&PreparedGraph> = chunk.iter().map(|&i| &train_set[i].graph).collect();
            let batch = GraphBatch::new(&graphs);
            let targets = Matrix::from_vec(chunk.len(), 1, chunk.iter().map(|&i| scaled[i]).collect());

            let mut tape = Tape::new();
            let params = model.register(&mut tape);
            let x = tape.leaf(batch.features.clone());
            let out = model.forward(
                &mut tape,
                &params,
                x,
                &batch,
                ForwardOptions {
                    dropout_rng: Some(&mut rng),
                    contribution_mask: None,
                },
            )?;
            let loss = model.loss(&mut tape, &params, out.predictions, Arc::new(targets))?;
            tape.backward(loss)?;
            loss_sum += tape.scalar_value(loss) * chunk.len() as f64;
            let grads: Vec<Matrix> = params.all().into_iter().map(|v| tape.grad(v)).collect();
            adamw_step(&mut model.parameters_mut(), &grads, &mut state, &hp, Some(&trainable))?;
        }

        let (val_loss, val_metric) = validate(&model, &val_graphs, &val_targets, &transform, cfg)?;
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_metric,
        });
        let score = match val_metric {
            Some(m) => cfg.metric.oriented(m),
            None => -val_loss,
        };
        let improved = match &best {
            None => true,
            Some((s, l, _)) => score > *s || (score == *s && val_loss < *l),
        };
        if improved {
            best = Some((score, val_loss, model.clone()));
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                history.stopped_early = true;
                log::debug!("early stop at epoch {epoch}");
                break;
            }
        }
    }

    let mut model = best.map_or(model, |(_, _, m)| m);
    fold_transform(&mut model, &transform);
    Ok((model, history))
}

/// Parses, fragments and prepares a list of `(smiles, target)` pairs.
pub fn prepare_samples<'a>(
    items: impl IntoIterator<Item = (&'a str, f64)>,
) -> Result<Vec<Sample>, ModelError> {
    items
        .into_iter()
        .map(|(smiles, target)| {
            let (_, _, graph) = PreparedGraph::from_smiles(smiles)?;
            Ok(Sample { graph, target })
        })
        .collect()
}
