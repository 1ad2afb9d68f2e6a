//! Node-level attributions and the masking protocols used to score them.
//!
//! SEAL explanations are read straight off the model: every atom inherits
//! its fragment's contribution. The gradient baselines (saliency,
//! input×gradient, integrated gradients) attribute the raw model output,
//! i.e. the logit for binary tasks, and sum per-channel attributions over
//! the atom's feature row.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{AutogradError, Matrix, Tape};
use crate::sealnet::{ForwardOptions, GraphBatch, PreparedGraph, SealModel};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid mask spec: {0}")]
    InvalidSpec(String),
    #[error("integrated gradients needs at least one step")]
    ZeroSteps,
    #[error("unknown {kind} {value:?}")]
    Unknown { kind: &'static str, value: String },
    #[error(transparent)]
    Autograd(#[from] AutogradError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Seal,
    Saliency,
    InputXGradient,
    IntegratedGradients,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Seal,
        Method::Saliency,
        Method::InputXGradient,
        Method::IntegratedGradients,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Seal => "seal",
            Method::Saliency => "saliency",
            Method::InputXGradient => "input-x-gradient",
            Method::IntegratedGradients => "integrated-gradients",
        }
    }

    /// SEAL explanations select whole fragments when masking.
    pub fn selects_fragments(self) -> bool {
        self == Method::Seal
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ExplainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ExplainError::Unknown {
                kind: "method",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub method: Method,
    pub node_scores: Vec<f64>,
    pub fragment_contributions: Vec<f64>,
    pub prediction: f64,
    pub bias: f64,
}

pub fn seal_attribution(model: &SealModel, graph: &PreparedGraph) -> Result<AttributionResult, ExplainError> {
    let e = model.evaluate(graph)?;
    Ok(AttributionResult {
        method: Method::Seal,
        node_scores: graph.fragment_of.iter().map(|&f| e.contributions[f]).collect(),
        fragment_contributions: e.contributions,
        prediction: e.prediction,
        bias: e.bias,
    })
}

/// Gradients of the summed outputs with respect to the batch features.
fn batch_input_gradient(
    model: &SealModel,
    batch: &GraphBatch,
    features: Matrix,
) -> Result<Matrix, AutogradError> {
    let mut tape = Tape::new();
    let params = model.register(&mut tape);
    let x = tape.leaf(features);
    let out = model.forward(&mut tape, &params, x, batch, ForwardOptions::default())?;
    let root = tape.sum(out.predictions);
    tape.backward(root)?;
    Ok(tape.grad(x))
}

/// `∂ŷ/∂X` for one molecule at the given feature matrix.
pub fn input_gradient(model: &SealModel, graph: &PreparedGraph, features: &Matrix) -> Result<Matrix, AutogradError> {
    batch_input_gradient(model, &GraphBatch::single(graph), features.clone())
}

fn with_scores(
    model: &SealModel,
    graph: &PreparedGraph,
    method: Method,
    node_scores: Vec<f64>,
) -> Result<AttributionResult, ExplainError> {
    let e = model.evaluate(graph)?;
    Ok(AttributionResult {
        method,
        node_scores,
        fragment_contributions: e.contributions,
        prediction: e.prediction,
        bias: e.bias,
    })
}

fn row_sums(m: &Matrix, f: impl Fn(f64, f64) -> f64, x: &Matrix) -> Vec<f64> {
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(x.row(r)).map(|(&g, &xv)| f(g, xv)).sum())
        .collect()
}

/// `Σ_d |∂ŷ/∂x_{v,d}|`
pub fn saliency(model: &SealModel, graph: &PreparedGraph) -> Result<AttributionResult, ExplainError> {
    let g = input_gradient(model, graph, &graph.features)?;
    let scores = row_sums(&g, |g, _| g.abs(), &graph.features);
    with_scores(model, graph, Method::Saliency, scores)
}

/// `Σ_d x_{v,d} · ∂ŷ/∂x_{v,d}`
pub fn input_x_gradient(model: &SealModel, graph: &PreparedGraph) -> Result<AttributionResult, ExplainError> {
    let g = input_gradient(model, graph, &graph.features)?;
    let scores = row_sums(&g, |g, x| g * x, &graph.features);
    with_scores(model, graph, Method::InputXGradient, scores)
}

/// Path points evaluated per batched pass in [`integrated_gradients`].
const IG_CHUNK: usize = 128;

/// Integrated gradients from the all-zero baseline with a midpoint
/// Riemann sum: `X ⊙ (1/s) Σ_k ∇ŷ(α_k X)`, `α_k = (k + ½)/s`.
/// Path points are evaluated in batched passes of up to 128 copies.
pub fn integrated_gradients(
    model: &SealModel,
    graph: &PreparedGraph,
    steps: usize,
) -> Result<AttributionResult, ExplainError> {
    if steps == 0 {
        return Err(ExplainError::ZeroSteps);
    }
    let n = graph.n_atoms();
    let dim = graph.features.cols();
    let mut mean = Matrix::zeros(n, dim);
    let mut start = 0;
    while start < steps {
        let len = IG_CHUNK.min(steps - start);
        let copies: Vec<&PreparedGraph> = vec![graph; len];
        let batch = GraphBatch::new(&copies);
        let mut path = Vec::with_capacity(len * n * dim);
        for k in start..start + len {
            let alpha = (k as f64 + 0.5) / steps as f64;
            path.extend(graph.features.as_slice().iter().map(|x| alpha * x));
        }
        let grads = batch_input_gradient(model, &batch, Matrix::from_vec(len * n, dim, path))?;
        for block in grads.as_slice().chunks(n * dim) {
            for (m, g) in mean.as_mut_slice().iter_mut().zip(block) {
                *m += g;
            }
        }
        start += len;
    }
    let mean = mean.map(|g| g / steps as f64);
    let scores = row_sums(&mean, |g, x| g * x, &graph.features);
    with_scores(model, graph, Method::IntegratedGradients, scores)
}

pub fn explain(
    model: &SealModel,
    graph: &PreparedGraph,
    method: Method,
    ig_steps: usize,
) -> Result<AttributionResult, ExplainError> {
    match method {
        Method::Seal => seal_attribution(model, graph),
        Method::Saliency => saliency(model, graph),
        Method::InputXGradient => input_x_gradient(model, graph),
        Method::IntegratedGradients => integrated_gradients(model, graph, ig_steps),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskStrategy {
    /// Rank by |score|; zero features and mask covered contributions.
    MaskAbs,
    /// Rank by signed score; zero features and mask covered contributions.
    Mask,
    /// Rank by |score|; zero features only.
    Abs,
    /// Rank by signed score; zero features only.
    Zero,
}

impl MaskStrategy {
    pub const ALL: [MaskStrategy; 4] = [
        MaskStrategy::MaskAbs,
        MaskStrategy::Mask,
        MaskStrategy::Abs,
        MaskStrategy::Zero,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskStrategy::MaskAbs => "mask-abs",
            MaskStrategy::Mask => "mask",
            MaskStrategy::Abs => "abs",
            MaskStrategy::Zero => "zero",
        }
    }

    pub fn ranks_by_magnitude(self) -> bool {
        matches!(self, MaskStrategy::MaskAbs | MaskStrategy::Abs)
    }

    pub fn masks_contributions(self) -> bool {
        matches!(self, MaskStrategy::MaskAbs | MaskStrategy::Mask)
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskStrategy {
    type Err = ExplainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MaskStrategy::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ExplainError::Unknown {
                kind: "mask strategy",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelitySign {
    /// Remove the selected atoms.
    Positive,
    /// Keep only the selected atoms.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub strategy: MaskStrategy,
    pub threshold_fraction: f64,
    pub sign: FidelitySign,
}

impl MaskSpec {
    pub fn new(strategy: MaskStrategy, threshold_fraction: f64, sign: FidelitySign) -> Result<Self, ExplainError> {
        let spec = Self {
            strategy,
            threshold_fraction,
            sign,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExplainError> {
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return Err(ExplainError::InvalidSpec(format!(
                "threshold {} outside (0, 1)",
                self.threshold_fraction
            )));
        }
        Ok(())
    }

    /// Largest number of atoms a selection may contain.
    pub fn budget(&self, n_atoms: usize) -> usize {
        (self.threshold_fraction * n_atoms as f64 + 1e-9).floor() as usize
    }
}

/// Greedy budgeted selection of the most important atoms.
///
/// Units (fragments for SEAL, single atoms otherwise) are ranked by
/// |score| or by signed score. Signed ranking takes the largest scores
/// first when the prediction is non-negative and the smallest first
/// otherwise. Ties go to the lower index. A unit that would overflow the
/// budget is skipped. Returns ascending atom indices.
pub fn select_mask_nodes(attr: &AttributionResult, fragment_of: &[usize], spec: &MaskSpec) -> Vec<usize> {
    let n = fragment_of.len();
    let budget = spec.budget(n);
    let units: Vec<(f64, Vec<usize>)> = if attr.method.selects_fragments() {
        let mut members = vec![Vec::new(); attr.fragment_contributions.len()];
        for (atom, &f) in fragment_of.iter().enumerate() {
            members[f].push(atom);
        }
        attr.fragment_contributions.iter().copied().zip(members).collect()
    } else {
        attr.node_scores.iter().enumerate().map(|(i, &s)| (s, vec![i])).collect()
    };
    let key = |s: f64| {
        if spec.strategy.ranks_by_magnitude() {
            s.abs()
        } else if attr.prediction >= 0.0 {
            s
        } else {
            -s
        }
    };
    let mut order: Vec<usize> = (0..units.len()).collect();
    // stable sort keeps lower indices first among equal keys
    order.sort_by(|&a, &b| key(units[b].0).total_cmp(&key(units[a].0)));
    let mut selected = Vec::new();
    for u in order {
        let atoms = &units[u].1;
        if selected.len() + atoms.len() <= budget {
            selected.extend_from_slice(atoms);
        }
    }
    selected.sort_unstable();
    selected
}

/// Model output after masking. Positive fidelity zeroes the features of
/// `node_set`; negative fidelity zeroes every other atom. Contribution
/// strategies also zero the contribution of every fragment whose atoms
/// are all zeroed.
pub fn masked_predict(
    model: &SealModel,
    graph: &PreparedGraph,
    node_set: &[usize],
    spec: &MaskSpec,
) -> Result<f64, AutogradError> {
    let n = graph.n_atoms();
    let mut selected = vec![false; n];
    for &v in node_set {
        selected[v] = true;
    }
    let zeroed: Vec<bool> = match spec.sign {
        FidelitySign::Positive => selected,
        FidelitySign::Negative => selected.iter().map(|s| !s).collect(),
    };
    let mut features = graph.features.clone();
    for (v, &z) in zeroed.iter().enumerate() {
        if z {
            features.row_mut(v).fill(0.0);
        }
    }
    let mask = spec.strategy.masks_contributions().then(|| {
        let mut covered = vec![true; graph.n_fragments];
        for (v, &f) in graph.fragment_of.iter().enumerate() {
            covered[f] &= zeroed[v];
        }
        let m = covered.iter().map(|&c| if c { 0.0 } else { 1.0 }).collect();
        Arc::new(Matrix::from_vec(graph.n_fragments, 1, m))
    });
    let batch = GraphBatch::single(graph);
    let e = model.evaluate_batch(&batch, Some(&features), mask)?;
    Ok(e[0].prediction)
}
