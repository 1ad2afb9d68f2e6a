use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Linear, ModelError, SealConfig, SealGcnLayer, SealModel};
use crate::autograd::Matrix;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    #[serde(rename = "W")]
    pub w: Rows,
    #[serde(rename = "W_intra")]
    pub w_intra: Rows,
    #[serde(rename = "W_inter")]
    pub w_inter: Rows,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadRecord {
    pub weight: Rows,
    pub bias: Vec<f64>,
}

/// On-disk JSON form of a [`SealModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: SealConfig,
    pub bias: f64,
    pub ln_gain: Vec<f64>,
    pub ln_shift: Vec<f64>,
    pub layers: Vec<LayerRecord>,
    pub head: Vec<HeadRecord>,
}

fn to_matrix(name: &str, rows: &Rows, expected: (usize, usize)) -> Result<Matrix, ModelError> {
    let bad = || {
        ModelError::Checkpoint(format!(
            "{name}: expected {}x{} matrix",
            expected.0, expected.1
        ))
    };
    if rows.len() != expected.0 {
        return Err(bad());
    }
    if expected.0 == 0 {
        return Ok(Matrix::zeros(0, expected.1));
    }
    let m = Matrix::from_rows(rows).ok_or_else(bad)?;
    if m.shape() != expected {
        return Err(bad());
    }
    Ok(m)
}

fn to_row(name: &str, values: &[f64], len: usize) -> Result<Matrix, ModelError> {
    if values.len() != len {
        return Err(ModelError::Checkpoint(format!(
            "{name}: expected {len} values, found {}",
            values.len()
        )));
    }
    Ok(Matrix::from_vec(1, len, values.to_vec()))
}

impl Checkpoint {
    pub fn from_model(model: &SealModel) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: model.config.clone(),
            bias: model.bias_value(),
            ln_gain: model.ln_gain.as_slice().to_vec(),
            ln_shift: model.ln_shift.as_slice().to_vec(),
            layers: model
                .layers
                .iter()
                .map(|l| LayerRecord {
                    w: l.w.to_rows(),
                    w_intra: l.w_intra.to_rows(),
                    w_inter: l.w_inter.to_rows(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
            head: model
                .head
                .iter()
                .map(|h| HeadRecord {
                    weight: h.weight.to_rows(),
                    bias: h.bias.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model, checking every shape against the stored config.
    pub fn to_model(&self) -> Result<SealModel, ModelError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let cfg = &self.config;
        cfg.validate()?;
        let layer_dims = cfg.layer_dims();
        if self.layers.len() != layer_dims.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} layers, found {}",
                layer_dims.len(),
                self.layers.len()
            )));
        }
        let head_dims = cfg.head_dims();
        if self.head.len() != head_dims.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} head layers, found {}",
                head_dims.len(),
                self.head.len()
            )));
        }
        let layers = self
            .layers
            .iter()
            .zip(&layer_dims)
            .enumerate()
            .map(|(i, (rec, &dims))| {
                Ok(SealGcnLayer {
                    w: to_matrix(&format!("layers[{i}].W"), &rec.w, dims)?,
                    w_intra: to_matrix(&format!("layers[{i}].W_intra"), &rec.w_intra, dims)?,
                    w_inter: to_matrix(&format!("layers[{i}].W_inter"), &rec.w_inter, dims)?,
                    bias: to_row(&format!("layers[{i}].bias"), &rec.bias, dims.1)?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let head = self
            .head
            .iter()
            .zip(&head_dims)
            .enumerate()
            .map(|(i, (rec, &dims))| {
                Ok(Linear {
                    weight: to_matrix(&format!("head[{i}].weight"), &rec.weight, dims)?,
                    bias: to_row(&format!("head[{i}].bias"), &rec.bias, dims.1)?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(SealModel {
            config: cfg.clone(),
            layers,
            ln_gain: to_row("ln_gain", &self.ln_gain, cfg.hidden_dim)?,
            ln_shift: to_row("ln_shift", &self.ln_shift, cfg.hidden_dim)?,
            head,
            bias: Matrix::scalar(self.bias),
        })
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
