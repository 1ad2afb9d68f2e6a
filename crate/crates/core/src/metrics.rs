//! Prediction metrics and explanation metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::AutogradError;
use crate::datagen::DataRecord;
use crate::explain::{self, AttributionResult, ExplainError, FidelitySign, MaskSpec, MaskStrategy, Method};
use crate::sealnet::{ModelError, PreparedGraph, SealModel, Task};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("AUROC needs both classes")]
    SingleClass,
    #[error("length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no positive molecule with a usable ground truth")]
    NoPositives,
    #[error("empty input")]
    Empty,
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<AutogradError> for MetricsError {
    fn from(e: AutogradError) -> Self {
        MetricsError::Explain(e.into())
    }
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn is_positive(label: f64) -> bool {
    label >= 0.5
}

/// Area under the ROC curve via the rank-sum statistic with average ranks,
/// which equals the pairwise win rate with ties counted as one half.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| is_positive(l)).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let ranks = crate::training::average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| is_positive(l))
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Fraction of matching 0/1 labels.
pub fn accuracy(pred_labels: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred_labels.len(), labels.len())?;
    let hits = pred_labels
        .iter()
        .zip(labels)
        .filter(|(&p, &l)| is_positive(p) == is_positive(l))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// F1 of the positive class. Defined as 1 when there are no positives
/// and none are predicted.
pub fn f1(pred_labels: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred_labels.len(), labels.len())?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &l) in pred_labels.iter().zip(labels) {
        match (is_positive(p), is_positive(l)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fneg == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64)
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(preds.len(), targets.len())?;
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(preds.len(), targets.len())?;
    let mse = preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / preds.len() as f64;
    Ok(mse.sqrt())
}

/// Class of a logit: positive iff the probability is at least 0.5.
pub fn logit_class(logit: f64) -> f64 {
    if logit >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Quantile of ascending `sorted` by linear interpolation between order
/// statistics at position `(n − 1)·q`.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fraction of scores strictly outside the 1.5·IQR fences.
pub fn iqr_outlier_fraction(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_linear(&sorted, 0.25);
    let q3 = quantile_linear(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    scores.iter().filter(|&&s| s < lo || s > hi).count() as f64 / scores.len() as f64
}

/// Mean per-molecule outlier fraction over negative molecules; 0 for an
/// empty list.
pub fn null_explanation(per_molecule_scores: &[Vec<f64>]) -> f64 {
    if per_molecule_scores.is_empty() {
        return 0.0;
    }
    per_molecule_scores.iter().map(|s| iqr_outlier_fraction(s)).sum::<f64>() / per_molecule_scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphExplanation {
    pub value: f64,
    pub n_molecules: usize,
    pub n_skipped: usize,
    /// Per input molecule; `None` when skipped.
    pub per_molecule: Vec<Option<f64>>,
}

/// AUROC of one molecule's node scores against its ground-truth atom set,
/// or `None` when the ground truth is empty or covers every atom.
pub fn explanation_auroc(scores: &[f64], ground_truth: &[usize]) -> Option<f64> {
    let mut mask = vec![0.0; scores.len()];
    for &a in ground_truth {
        if a < mask.len() {
            mask[a] = 1.0;
        }
    }
    auroc(scores, &mask).ok()
}

/// Mean per-molecule explanation AUROC over positive molecules.
pub fn subgraph_explanation(
    attributions: &[Vec<f64>],
    ground_truth: &[Vec<usize>],
) -> Result<SubgraphExplanation, MetricsError> {
    if attributions.len() != ground_truth.len() {
        return Err(MetricsError::LengthMismatch(attributions.len(), ground_truth.len()));
    }
    let per_molecule: Vec<Option<f64>> = attributions
        .iter()
        .zip(ground_truth)
        .map(|(s, gt)| explanation_auroc(s, gt))
        .collect();
    let used: Vec<f64> = per_molecule.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(MetricsError::NoPositives);
    }
    Ok(SubgraphExplanation {
        value: used.iter().sum::<f64>() / used.len() as f64,
        n_molecules: used.len(),
        n_skipped: per_molecule.len() - used.len(),
        per_molecule,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityResult {
    pub value: f64,
    /// Flip indicator (classification) or |Δŷ| (regression) per molecule.
    pub per_molecule: Vec<f64>,
}

/// Fidelity from precomputed attributions. Classification reports the
/// fraction of molecules whose predicted class differs from the model's
/// unmasked prediction; regression reports the mean absolute change.
pub fn fidelity_from_attributions(
    model: &SealModel,
    graphs: &[&PreparedGraph],
    attributions: &[AttributionResult],
    spec: &MaskSpec,
) -> Result<FidelityResult, MetricsError> {
    check_lengths(graphs.len(), attributions.len())?;
    spec.validate()?;
    let task = model.config.task;
    let per_molecule = graphs
        .par_iter()
        .zip(attributions)
        .map(|(g, a)| {
            let nodes = explain::select_mask_nodes(a, &g.fragment_of, spec);
            let masked = explain::masked_predict(model, g, &nodes, spec)?;
            Ok(match task {
                Task::Binary => f64::from(u8::from(logit_class(masked) != logit_class(a.prediction))),
                Task::Regression => (masked - a.prediction).abs(),
            })
        })
        .collect::<Result<Vec<f64>, MetricsError>>()?;
    Ok(FidelityResult {
        value: per_molecule.iter().sum::<f64>() / per_molecule.len() as f64,
        per_molecule,
    })
}

pub fn fidelity(
    model: &SealModel,
    graphs: &[&PreparedGraph],
    method: Method,
    spec: &MaskSpec,
    ig_steps: usize,
) -> Result<FidelityResult, MetricsError> {
    let attrs = graphs
        .par_iter()
        .map(|g| explain::explain(model, g, method, ig_steps))
        .collect::<Result<Vec<_>, _>>()?;
    fidelity_from_attributions(model, graphs, &attrs, spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub method: Method,
    pub thresholds: Vec<f64>,
    pub strategies: Vec<MaskStrategy>,
    pub ig_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            method: Method::Seal,
            thresholds: vec![0.1, 0.2, 0.3],
            strategies: MaskStrategy::ALL.to_vec(),
            ig_steps: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PredictionMetrics {
    pub auroc: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEntry {
    pub strategy: MaskStrategy,
    pub threshold: f64,
    pub sign: FidelitySign,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRow {
    pub index: usize,
    pub smiles: String,
    pub label: f64,
    pub prediction: f64,
    pub se: Option<f64>,
    pub ne: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub n_molecules: usize,
    pub prediction: PredictionMetrics,
    pub se: Option<f64>,
    pub se_molecules: usize,
    pub se_skipped: usize,
    pub ne: Option<f64>,
    pub ne_molecules: usize,
    pub fidelity: Vec<FidelityEntry>,
    pub config: EvalConfig,
    pub rows: Vec<MoleculeRow>,
}

/// Explains every record, then computes prediction, SE/NE (binary tasks
/// with ground truth) and fidelity metrics.
pub fn evaluate(model: &SealModel, records: &[DataRecord], cfg: &EvalConfig) -> Result<EvalReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let graphs = records
        .par_iter()
        .map(|r| PreparedGraph::from_smiles(&r.smiles).map(|(_, _, g)| g))
        .collect::<Result<Vec<_>, ModelError>>()?;
    let refs: Vec<&PreparedGraph> = graphs.iter().collect();
    let attrs = refs
        .par_iter()
        .map(|g| explain::explain(model, g, cfg.method, cfg.ig_steps))
        .collect::<Result<Vec<_>, _>>()?;
    let task = model.config.task;
    let labels: Vec<f64> = records.iter().map(|r| r.label).collect();
    let preds: Vec<f64> = attrs.iter().map(|a| a.prediction).collect();

    let mut prediction = PredictionMetrics::default();
    let mut rows: Vec<MoleculeRow> = records
        .iter()
        .zip(&preds)
        .enumerate()
        .map(|(index, (r, &p))| MoleculeRow {
            index,
            smiles: r.smiles.clone(),
            label: r.label,
            prediction: p,
            se: None,
            ne: None,
        })
        .collect();
    let (mut se, mut se_molecules, mut se_skipped, mut ne, mut ne_molecules) = (None, 0, 0, None, 0);
    match task {
        Task::Binary => {
            let classes: Vec<f64> = preds.iter().map(|&p| logit_class(p)).collect();
            prediction.auroc = auroc(&preds, &labels).ok();
            prediction.f1 = Some(f1(&classes, &labels)?);
            prediction.accuracy = Some(accuracy(&classes, &labels)?);

            let mut se_sum = 0.0;
            let mut ne_sum = 0.0;
            for (i, r) in records.iter().enumerate() {
                if is_positive(r.label) {
                    match r.gt_atoms.as_deref().and_then(|gt| explanation_auroc(&attrs[i].node_scores, gt)) {
                        Some(v) => {
                            rows[i].se = Some(v);
                            se_sum += v;
                            se_molecules += 1;
                        }
                        None => se_skipped += 1,
                    }
                } else {
                    let v = iqr_outlier_fraction(&attrs[i].node_scores);
                    rows[i].ne = Some(v);
                    ne_sum += v;
                    ne_molecules += 1;
                }
            }
            if se_molecules > 0 {
                se = Some(se_sum / se_molecules as f64);
            }
            if ne_molecules > 0 {
                ne = Some(ne_sum / ne_molecules as f64);
            }
        }
        Task::Regression => {
            prediction.mae = Some(mae(&preds, &labels)?);
            prediction.rmse = Some(rmse(&preds, &labels)?);
        }
    }

    let mut fidelity = Vec::new();
    for &strategy in &cfg.strategies {
        for &threshold in &cfg.thresholds {
            for sign in [FidelitySign::Positive, FidelitySign::Negative] {
                let spec = MaskSpec::new(strategy, threshold, sign)?;
                let r = fidelity_from_attributions(model, &refs, &attrs, &spec)?;
                fidelity.push(FidelityEntry {
                    strategy,
                    threshold,
                    sign,
                    value: r.value,
                });
            }
        }
    }

    Ok(EvalReport {
        task,
        n_molecules: records.len(),
        prediction,
        se,
        se_molecules,
        se_skipped,
        ne,
        ne_molecules,
        fidelity,
        config: cfg.clone(),
        rows,
    })
}
