//! The fragment-attributed network.
//!
//! Node embeddings come from a stack of fragment-aware graph convolutions:
//!
//! ```text
//! h'_i = W h_i + b + W_intra · mean_{j ∈ N_in(i)} h_j + W_inter · mean_{j ∈ N_out(i)} h_j
//! ```
//!
//! where `N_in` / `N_out` are the neighbors inside / outside the atom's
//! fragment and an empty neighborhood drops its term. Atom embeddings are
//! sum-pooled per fragment, layer-normalized, and mapped by a small MLP to
//! one scalar contribution `c_k` per fragment. The prediction is
//! `Σ_k c_k + bias`.

mod batch;
mod checkpoint;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{AutogradError, Matrix, NeighborLists, Tape, Var};
use crate::fragmenter::FragmentError;
use crate::molgraph::{MolError, FEATURE_DIM};

pub use batch::{split_neighbors, GraphBatch, NeighborSplit, PreparedGraph};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Molecule(#[from] MolError),
    #[error(transparent)]
    Fragment(#[from] FragmentError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Binary,
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regression" => Ok(Task::Regression),
            "binary" => Ok(Task::Binary),
            other => Err(format!("unknown task {other:?} (expected binary or regression)")),
        }
    }
}

fn default_input_dim() -> usize {
    FEATURE_DIM
}
fn default_head_layers() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_eps() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SealConfig {
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    /// Affine maps in the contribution MLP (ReLU between consecutive maps).
    #[serde(default = "default_head_layers")]
    pub head_layers: usize,
    pub dropout: f64,
    pub lambda: f64,
    pub task: Task,
    #[serde(default = "default_true")]
    pub layer_norm_affine: bool,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
}

impl SealConfig {
    pub fn new(task: Task, hidden_dim: usize, n_layers: usize) -> Self {
        Self {
            input_dim: FEATURE_DIM,
            hidden_dim,
            n_layers,
            head_layers: 2,
            dropout: 0.0,
            lambda: 0.0,
            task,
            layer_norm_affine: true,
            layer_norm_eps: 1e-5,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.n_layers == 0 {
            return bad("n_layers must be at least 1");
        }
        if self.hidden_dim == 0 || self.input_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.head_layers == 0 {
            return bad("head needs at least one affine map");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if !(self.layer_norm_eps >= 0.0) {
            return bad("layer_norm_eps must be non-negative");
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.n_layers)
            .map(|l| {
                let fan_in = if l == 0 { self.input_dim } else { self.hidden_dim };
                (fan_in, self.hidden_dim)
            })
            .collect()
    }

    fn head_dims(&self) -> Vec<(usize, usize)> {
        (0..self.head_layers)
            .map(|l| {
                let out = if l + 1 == self.head_layers { 1 } else { self.hidden_dim };
                (self.hidden_dim, out)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SealGcnLayer {
    pub w: Matrix,
    pub w_intra: Matrix,
    pub w_inter: Matrix,
    /// `1 x M_out`, added once per node.
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SealModel {
    pub config: SealConfig,
    pub layers: Vec<SealGcnLayer>,
    pub ln_gain: Matrix,
    pub ln_shift: Matrix,
    pub head: Vec<Linear>,
    /// `1 x 1` global bias.
    pub bias: Matrix,
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data)
}

fn fan_in_uniform(rng: &mut impl Rng, fan_in: usize, len: usize) -> Matrix {
    let limit = 1.0 / (fan_in as f64).sqrt();
    Matrix::from_vec(1, len, (0..len).map(|_| rng.gen_range(-limit..=limit)).collect())
}

/// Tape handles for one layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub w: Var,
    pub w_intra: Var,
    pub w_inter: Var,
    pub bias: Var,
}

/// Tape handles for every model parameter, in [`SealModel::parameters`] order.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub layers: Vec<LayerVars>,
    pub ln_gain: Var,
    pub ln_shift: Var,
    pub head: Vec<(Var, Var)>,
    pub bias: Var,
}

impl ParamVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend([l.w, l.w_intra, l.w_inter, l.bias]);
        }
        out.extend([self.ln_gain, self.ln_shift]);
        for &(w, b) in &self.head {
            out.extend([w, b]);
        }
        out.push(self.bias);
        out
    }
}

#[derive(Debug, Default)]
pub struct ForwardOptions<'a> {
    /// Enables dropout between graph layers; `None` at inference.
    pub dropout_rng: Option<&'a mut rand_chacha::ChaCha8Rng>,
    /// `n_fragments x 1` multiplier applied to the contributions.
    pub contribution_mask: Option<Arc<Matrix>>,
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub node_embeddings: Var,
    /// `n_fragments x 1`
    pub contributions: Var,
    /// `n_molecules x 1`; logits for binary tasks.
    pub predictions: Var,
}

/// Result of evaluating one molecule without gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub contributions: Vec<f64>,
    pub prediction: f64,
    pub bias: f64,
}

impl SealGcnLayer {
    /// Records one fragment-aware convolution on the tape. No activation.
    pub fn forward(
        tape: &mut Tape,
        vars: &LayerVars,
        h: Var,
        intra: &Arc<NeighborLists>,
        inter: &Arc<NeighborLists>,
    ) -> Result<Var, AutogradError> {
        let own = tape.matmul(h, vars.w)?;
        let mut out = tape.add_row(own, vars.bias)?;
        if intra.total_len() > 0 {
            let m = tape.segment_mean(h, intra.clone())?;
            let t = tape.matmul(m, vars.w_intra)?;
            out = tape.add(out, t)?;
        }
        if inter.total_len() > 0 {
            let m = tape.segment_mean(h, inter.clone())?;
            let t = tape.matmul(m, vars.w_inter)?;
            out = tape.add(out, t)?;
        }
        Ok(out)
    }
}

/// Evaluates a single layer on plain matrices.
pub fn seal_gcn_forward(
    layer: &SealGcnLayer,
    h: &Matrix,
    intra: &NeighborLists,
    inter: &NeighborLists,
) -> Result<Matrix, AutogradError> {
    let mut tape = Tape::new();
    let vars = LayerVars {
        w: tape.leaf(layer.w.clone()),
        w_intra: tape.leaf(layer.w_intra.clone()),
        w_inter: tape.leaf(layer.w_inter.clone()),
        bias: tape.leaf(layer.bias.clone()),
    };
    if layer.w.shape() != layer.w_intra.shape() || layer.w.shape() != layer.w_inter.shape() {
        return Err(AutogradError::ShapeMismatch {
            op: "seal_gcn_forward",
            left: layer.w.shape(),
            right: layer.w_inter.shape(),
        });
    }
    let hv = tape.leaf(h.clone());
    let out = SealGcnLayer::forward(
        &mut tape,
        &vars,
        hv,
        &Arc::new(intra.clone()),
        &Arc::new(inter.clone()),
    )?;
    Ok(tape.value(out).clone())
}

impl SealModel {
    /// Randomly initialized model; the global bias starts at zero.
    pub fn new(config: SealConfig, rng: &mut impl Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let layers = config
            .layer_dims()
            .into_iter()
            .map(|(i, o)| SealGcnLayer {
                w: glorot(rng, i, o),
                w_intra: glorot(rng, i, o),
                w_inter: glorot(rng, i, o),
                bias: fan_in_uniform(rng, i, o),
            })
            .collect();
        let head = config
            .head_dims()
            .into_iter()
            .map(|(i, o)| Linear {
                weight: glorot(rng, i, o),
                bias: fan_in_uniform(rng, i, o),
            })
            .collect();
        Ok(Self {
            ln_gain: Matrix::filled(1, config.hidden_dim, 1.0),
            ln_shift: Matrix::zeros(1, config.hidden_dim),
            layers,
            head,
            bias: Matrix::scalar(0.0),
            config,
        })
    }

    pub fn bias_value(&self) -> f64 {
        self.bias.get(0, 0)
    }

    pub fn set_bias(&mut self, b: f64) {
        self.bias = Matrix::scalar(b);
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend([&l.w, &l.w_intra, &l.w_inter, &l.bias]);
        }
        out.extend([&self.ln_gain, &self.ln_shift]);
        for h in &self.head {
            out.extend([&h.weight, &h.bias]);
        }
        out.push(&self.bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend([&mut l.w, &mut l.w_intra, &mut l.w_inter, &mut l.bias]);
        }
        out.extend([&mut self.ln_gain, &mut self.ln_shift]);
        for h in &mut self.head {
            out.extend([&mut h.weight, &mut h.bias]);
        }
        out.push(&mut self.bias);
        out
    }

    /// Whether a parameter (by [`Self::parameters`] index) is trainable.
    /// LayerNorm gain/shift are frozen when the normalization is not affine.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let n_layer = self.layers.len() * 4;
        let total = self.parameters().len();
        (0..total)
            .map(|i| self.config.layer_norm_affine || !(i == n_layer || i == n_layer + 1))
            .collect()
    }

    /// Σ_l ‖W_inter^(l)‖₁
    pub fn inter_l1(&self) -> f64 {
        self.layers.iter().map(|l| l.w_inter.abs_sum()).sum()
    }

    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerVars {
                w: tape.leaf(l.w.clone()),
                w_intra: tape.leaf(l.w_intra.clone()),
                w_inter: tape.leaf(l.w_inter.clone()),
                bias: tape.leaf(l.bias.clone()),
            })
            .collect();
        let ln_gain = tape.leaf(self.ln_gain.clone());
        let ln_shift = tape.leaf(self.ln_shift.clone());
        let head = self
            .head
            .iter()
            .map(|h| (tape.leaf(h.weight.clone()), tape.leaf(h.bias.clone())))
            .collect();
        let bias = tape.leaf(self.bias.clone());
        ParamVars {
            layers,
            ln_gain,
            ln_shift,
            head,
            bias,
        }
    }

    /// Runs the graph layers: ReLU (and dropout when enabled) between
    /// layers, nothing after the last one.
    pub fn node_embeddings(
        &self,
        tape: &mut Tape,
        params: &ParamVars,
        features: Var,
        batch: &GraphBatch,
        mut dropout_rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> Result<Var, AutogradError> {
        let mut h = features;
        let last = params.layers.len() - 1;
        for (l, vars) in params.layers.iter().enumerate() {
            h = SealGcnLayer::forward(tape, vars, h, &batch.intra, &batch.inter)?;
            if l != last {
                h = tape.relu(h);
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    if self.config.dropout > 0.0 {
                        let (r, c) = tape.value(h).shape();
                        let keep = 1.0 - self.config.dropout;
                        let mask = (0..r * c)
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        h = tape.mul_const(h, Arc::new(Matrix::from_vec(r, c, mask)))?;
                    }
                }
            }
        }
        Ok(h)
    }

    /// Sum-pools node embeddings per fragment, layer-normalizes, maps each
    /// fragment to a scalar contribution and sums contributions per
    /// molecule. Returns `(contributions, predictions)`.
    pub fn fragment_head(
        &self,
        tape: &mut Tape,
        params: &ParamVars,
        h: Var,
        batch: &GraphBatch,
        contribution_mask: Option<Arc<Matrix>>,
    ) -> Result<(Var, Var), AutogradError> {
        let pooled = tape.segment_sum(h, batch.fragment_of.clone(), batch.n_fragments)?;
        let mut z = tape.layer_norm(
            pooled,
            params.ln_gain,
            params.ln_shift,
            self.config.layer_norm_eps,
        )?;
        let last = params.head.len() - 1;
        for (i, &(w, b)) in params.head.iter().enumerate() {
            let t = tape.matmul(z, w)?;
            z = tape.add_row(t, b)?;
            if i != last {
                z = tape.relu(z);
            }
        }
        let mut contributions = z;
        if let Some(mask) = contribution_mask {
            contributions = tape.mul_const(contributions, mask)?;
        }
        let per_molecule = tape.segment_sum(
            contributions,
            batch.molecule_of_fragment.clone(),
            batch.n_molecules,
        )?;
        let predictions = tape.add_row(per_molecule, params.bias)?;
        Ok((contributions, predictions))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamVars,
        features: Var,
        batch: &GraphBatch,
        opts: ForwardOptions<'_>,
    ) -> Result<ForwardOutput, AutogradError> {
        let h = self.node_embeddings(tape, params, features, batch, opts.dropout_rng)?;
        let (contributions, predictions) =
            self.fragment_head(tape, params, h, batch, opts.contribution_mask)?;
        Ok(ForwardOutput {
            node_embeddings: h,
            contributions,
            predictions,
        })
    }

    /// Prediction loss plus `λ Σ_l ‖W_inter^(l)‖₁`. The prediction loss is
    /// mean squared error (regression) or mean binary cross-entropy on
    /// logits (binary).
    pub fn loss(
        &self,
        tape: &mut Tape,
        params: &ParamVars,
        predictions: Var,
        targets: Arc<Matrix>,
    ) -> Result<Var, AutogradError> {
        let pred_loss = match self.config.task {
            Task::Regression => tape.mse(predictions, targets)?,
            Task::Binary => tape.bce_with_logits(predictions, targets)?,
        };
        if self.config.lambda == 0.0 {
            return Ok(pred_loss);
        }
        let mut reg: Option<Var> = None;
        for l in &params.layers {
            let n = tape.l1_norm(l.w_inter);
            reg = Some(match reg {
                Some(r) => tape.add(r, n)?,
                None => n,
            });
        }
        let reg = tape.scale(reg.expect("at least one layer"), self.config.lambda);
        tape.add(pred_loss, reg)
    }

    /// Evaluates a batch without dropout; returns per-molecule results.
    pub fn evaluate_batch(
        &self,
        batch: &GraphBatch,
        features: Option<&Matrix>,
        contribution_mask: Option<Arc<Matrix>>,
    ) -> Result<Vec<Evaluation>, AutogradError> {
        let mut tape = Tape::new();
        let params = self.register(&mut tape);
        let x = tape.leaf(features.unwrap_or(&batch.features).clone());
        let out = self.forward(
            &mut tape,
            &params,
            x,
            batch,
            ForwardOptions {
                dropout_rng: None,
                contribution_mask,
            },
        )?;
        let c = tape.value(out.contributions).as_slice();
        let p = tape.value(out.predictions).as_slice();
        let bias = self.bias_value();
        Ok((0..batch.n_molecules)
            .map(|m| Evaluation {
                contributions: c[batch.fragment_offsets[m]..batch.fragment_offsets[m + 1]].to_vec(),
                prediction: p[m],
                bias,
            })
            .collect())
    }

    pub fn evaluate(&self, graph: &PreparedGraph) -> Result<Evaluation, AutogradError> {
        let batch = GraphBatch::single(graph);
        Ok(self
            .evaluate_batch(&batch, None, None)?
            .pop()
            .expect("one molecule in batch"))
    }

    /// Raw model outputs (logits for binary) for many molecules.
    pub fn predict(
        &self,
        graphs: &[&PreparedGraph],
        batch_size: usize,
    ) -> Result<Vec<f64>, AutogradError> {
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(batch_size.max(1)) {
            let batch = GraphBatch::new(chunk);
            out.extend(self.evaluate_batch(&batch, None, None)?.into_iter().map(|e| e.prediction));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragmenter::fragment;
    use crate::molgraph::MolecularGraph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(task: Task, hidden: usize, layers: usize, seed: u64) -> SealModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SealModel::new(SealConfig::new(task, hidden, layers), &mut rng).unwrap()
    }

    fn prepared(smiles: &str) -> PreparedGraph {
        PreparedGraph::from_smiles(smiles).unwrap().2
    }

    #[test]
    fn gcn_layer_hand_example() {
        let layer = SealGcnLayer {
            w: Matrix::scalar(2.0),
            w_intra: Matrix::scalar(3.0),
            w_inter: Matrix::scalar(0.0),
            bias: Matrix::scalar(0.0),
        };
        let h = Matrix::from_vec(2, 1, vec![1.0, 2.0]);
        let intra = NeighborLists::from_lists(&[vec![1], vec![0]]);
        let inter = NeighborLists::from_lists(&[Vec::<usize>::new(), vec![]]);
        let out = seal_gcn_forward(&layer, &h, &intra, &inter).unwrap();
        assert_eq!(out.as_slice(), &[8.0, 7.0]);
    }

    #[test]
    fn gcn_layer_without_neighbors_is_self_term() {
        let layer = SealGcnLayer {
            w: Matrix::scalar(2.0),
            w_intra: Matrix::scalar(3.0),
            w_inter: Matrix::scalar(5.0),
            bias: Matrix::scalar(0.0),
        };
        let h = Matrix::from_vec(2, 1, vec![1.0, -4.0]);
        let none = NeighborLists::from_lists(&[Vec::<usize>::new(), vec![]]);
        let out = seal_gcn_forward(&layer, &h, &none, &none).unwrap();
        assert_eq!(out.as_slice(), &[2.0, -8.0]);
    }

    #[test]
    fn gcn_layer_shape_mismatch() {
        let layer = SealGcnLayer {
            w: Matrix::zeros(2, 3),
            w_intra: Matrix::zeros(2, 3),
            w_inter: Matrix::zeros(3, 3),
            bias: Matrix::zeros(1, 3),
        };
        let none = NeighborLists::from_lists(&[Vec::<usize>::new()]);
        assert!(seal_gcn_forward(&layer, &Matrix::zeros(1, 2), &none, &none).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = SealConfig::new(Task::Binary, 8, 0);
        assert!(c.validate().is_err());
        c.n_layers = 2;
        assert!(c.validate().is_ok());
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        c.dropout = 0.1;
        c.lambda = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_head_gives_bias() {
        let mut m = model(Task::Regression, 8, 2, 1);
        for h in &mut m.head {
            h.weight.fill(0.0);
            h.bias.fill(0.0);
        }
        m.set_bias(0.5);
        let e = m.evaluate(&prepared("Cc1ccccc1Cl")).unwrap();
        assert!(e.contributions.iter().all(|&c| c == 0.0));
        assert_eq!(e.prediction, 0.5);
    }

    #[test]
    fn single_fragment_prediction_is_contribution_plus_bias() {
        let mut m = model(Task::Binary, 8, 2, 2);
        m.set_bias(-0.25);
        let e = m.evaluate(&prepared("CCOCC")).unwrap();
        assert_eq!(e.contributions.len(), 1);
        assert_eq!(e.prediction, e.contributions[0] + -0.25);
    }

    #[test]
    fn batch_matches_individual_evaluation() {
        let m = model(Task::Regression, 6, 2, 3);
        let smiles = ["Cc1ccccc1", "CC(C)(C)C", "Clc1ccc(Br)cc1O"];
        let graphs: Vec<PreparedGraph> = smiles.iter().map(|s| prepared(s)).collect();
        let refs: Vec<&PreparedGraph> = graphs.iter().collect();
        let batched = m.predict(&refs, 8).unwrap();
        for (g, p) in graphs.iter().zip(batched) {
            let single = m.evaluate(g).unwrap().prediction;
            assert!((single - p).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_regularizer() {
        let mut m = model(Task::Regression, 1, 2, 4);
        m.config.lambda = 0.1;
        m.layers[0].w_inter = Matrix::from_vec(1, 2, vec![1.0, -2.0]);
        m.layers[1].w_inter = Matrix::scalar(0.0);
        let mut tape = Tape::new();
        let params = m.register(&mut tape);
        let pred = tape.leaf(Matrix::scalar(1.0));
        let loss = m
            .loss(&mut tape, &params, pred, Arc::new(Matrix::scalar(0.0)))
            .unwrap();
        assert!((tape.scalar_value(loss) - 1.3).abs() < 1e-15);

        m.config.lambda = 0.0;
        let mut tape = Tape::new();
        let params = m.register(&mut tape);
        let pred = tape.leaf(Matrix::scalar(1.0));
        let loss = m
            .loss(&mut tape, &params, pred, Arc::new(Matrix::scalar(0.0)))
            .unwrap();
        assert_eq!(tape.scalar_value(loss), 1.0);
    }

    #[test]
    fn zero_inter_weights_contribute_nothing_to_loss() {
        let mut m = model(Task::Regression, 4, 2, 5);
        m.config.lambda = 3.0;
        for l in &mut m.layers {
            l.w_inter.fill(0.0);
        }
        let mut tape = Tape::new();
        let params = m.register(&mut tape);
        let pred = tape.leaf(Matrix::scalar(2.0));
        let loss = m
            .loss(&mut tape, &params, pred, Arc::new(Matrix::scalar(0.0)))
            .unwrap();
        assert_eq!(tape.scalar_value(loss), 4.0);
    }

    #[test]
    fn inter_weights_isolate_fragments() {
        let mut m = model(Task::Regression, 8, 3, 6);
        let g = MolecularGraph::from_smiles("OCc1ccccc1CCl").unwrap();
        let f = fragment(&g).unwrap();
        let base = PreparedGraph::new(&g, &f);
        let before = m.evaluate(&base).unwrap();
        let mut perturbed = base.clone();
        // change the hydroxyl oxygen into nitrogen
        perturbed.features.set(0, 2, 0.0);
        perturbed.features.set(0, 1, 1.0);
        let after = m.evaluate(&perturbed).unwrap();
        assert_ne!(before.contributions[1], after.contributions[1]);

        for l in &mut m.layers {
            l.w_inter.fill(0.0);
        }
        let before = m.evaluate(&base).unwrap();
        let after = m.evaluate(&perturbed).unwrap();
        let hydroxyl_frag = f.fragment_of[0];
        for k in 0..f.n_fragments {
            if k != hydroxyl_frag {
                assert_eq!(before.contributions[k].to_bits(), after.contributions[k].to_bits());
            }
        }
    }

    #[test]
    fn trainable_mask_freezes_plain_layer_norm() {
        let mut m = model(Task::Binary, 4, 2, 7);
        assert!(m.trainable_mask().iter().all(|&t| t));
        m.config.layer_norm_affine = false;
        let mask = m.trainable_mask();
        assert_eq!(mask.iter().filter(|&&t| !t).count(), 2);
        assert!(!mask[8] && !mask[9]);
    }
}
