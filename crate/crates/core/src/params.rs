//! Model parameters and their initialization.
//!
//! All learnable tensors live here with one canonical ordering, shared
//! by the optimizer state, checkpoints, and gradient extraction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMode;
use crate::matrix::Matrix;

/// Architecture variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// GCN -> v-Att -> LSTM -> t-Att -> MLP.
    Full,
    /// Concatenates pooled embeddings instead of LSTM + t-Att.
    #[serde(rename = "ct")]
    Ct,
    /// No LSTM: t-Att directly over pooled embeddings.
    #[serde(rename = "nl")]
    Nl,
    /// No temporal attention: classify the last LSTM state.
    #[serde(rename = "na")]
    Na,
    /// Mean pooling in place of node self-attention.
    Mean,
    /// Max pooling in place of node self-attention.
    Max,
}

pub const ALL_VARIANTS: [Variant; 6] = [
    Variant::Full,
    Variant::Ct,
    Variant::Nl,
    Variant::Na,
    Variant::Mean,
    Variant::Max,
];

impl Variant {
    pub fn uses_lstm(self) -> bool {
        matches!(self, Variant::Full | Variant::Na | Variant::Mean | Variant::Max)
    }

    pub fn uses_time_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::Nl | Variant::Mean | Variant::Max)
    }

    pub fn uses_node_attention(self) -> bool {
        !matches!(self, Variant::Mean | Variant::Max)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Full => "full",
            Variant::Ct => "CT",
            Variant::Nl => "NL",
            Variant::Na => "NA",
            Variant::Mean => "mean",
            Variant::Max => "max",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "ct" => Ok(Variant::Ct),
            "nl" => Ok(Variant::Nl),
            "na" => Ok(Variant::Na),
            "mean" => Ok(Variant::Mean),
            "max" => Ok(Variant::Max),
            other => Err(Error::Config(format!(
                "unknown variant '{other}', expected one of full|CT|NL|NA|mean|max"
            ))),
        }
    }
}

/// Shape-level description of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Assembled input feature width.
    pub d_in: usize,
    /// GCN hidden width h'.
    pub hidden_dim: usize,
    /// Embedding width h.
    pub embed_dim: usize,
    /// Window order: a window holds k+1 snapshots.
    pub k: usize,
    pub variant: Variant,
    pub features: FeatureMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(Error::Config(format!(
                "model dims must be positive: d_in={}, hidden={}, embed={}",
                self.d_in, self.hidden_dim, self.embed_dim
            )));
        }
        Ok(())
    }

    /// Input width of the classifier: the concatenation variant feeds
    /// all k+1 pooled embeddings to the MLP.
    pub fn mlp_input_dim(&self) -> usize {
        match self.variant {
            Variant::Ct => (self.k + 1) * self.embed_dim,
            _ => self.embed_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w0: Matrix,
    pub w1: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// h-by-h projection.
    pub phi: Matrix,
    /// 1-by-h scoring vector.
    pub w: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_c: Matrix,
    pub u_i: Matrix,
    pub u_f: Matrix,
    pub u_o: Matrix,
    pub u_c: Matrix,
    pub b_i: Matrix,
    pub b_f: Matrix,
    pub b_o: Matrix,
    pub b_c: Matrix,
}

/// Two dense layers; the hidden layer is ReLU, the output is linear
/// with two scores (event / no event).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<(Matrix, Matrix)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub gcn: GcnParams,
    pub v_att: AttentionParams,
    pub lstm: LstmParams,
    pub t_att: AttentionParams,
    pub mlp: MlpParams,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, forget-gate bias of one.
    /// Deterministic for a given seed.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let h = config.embed_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let gcn = GcnParams {
            w0: glorot(&mut rng, config.d_in, config.hidden_dim),
            w1: glorot(&mut rng, config.hidden_dim, h),
        };
        let v_att = AttentionParams {
            phi: glorot(&mut rng, h, h),
            w: glorot(&mut rng, 1, h),
        };
        let lstm = LstmParams {
            w_i: glorot(&mut rng, h, h),
            w_f: glorot(&mut rng, h, h),
            w_o: glorot(&mut rng, h, h),
            w_c: glorot(&mut rng, h, h),
            u_i: glorot(&mut rng, h, h),
            u_f: glorot(&mut rng, h, h),
            u_o: glorot(&mut rng, h, h),
            u_c: glorot(&mut rng, h, h),
            b_i: Matrix::zeros(1, h),
            b_f: Matrix::from_fn(1, h, |_, _| 1.0),
            b_o: Matrix::zeros(1, h),
            b_c: Matrix::zeros(1, h),
        };
        let t_att = AttentionParams {
            phi: glorot(&mut rng, h, h),
            w: glorot(&mut rng, 1, h),
        };
        let mlp_in = config.mlp_input_dim();
        let mlp = MlpParams {
            layers: vec![
                (glorot(&mut rng, mlp_in, h), Matrix::zeros(1, h)),
                (glorot(&mut rng, h, 2), Matrix::zeros(1, 2)),
            ],
        };
        Ok(ModelParams {
            config,
            gcn,
            v_att,
            lstm,
            t_att,
            mlp,
        })
    }

    /// All tensors with stable names, in the canonical order used by
    /// checkpoints, the optimizer, and gradient checks.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("gcn.w0".into(), &self.gcn.w0),
            ("gcn.w1".into(), &self.gcn.w1),
            ("v_att.phi".into(), &self.v_att.phi),
            ("v_att.w".into(), &self.v_att.w),
            ("lstm.w_i".into(), &self.lstm.w_i),
            ("lstm.w_f".into(), &self.lstm.w_f),
            ("lstm.w_o".into(), &self.lstm.w_o),
            ("lstm.w_c".into(), &self.lstm.w_c),
            ("lstm.u_i".into(), &self.lstm.u_i),
            ("lstm.u_f".into(), &self.lstm.u_f),
            ("lstm.u_o".into(), &self.lstm.u_o),
            ("lstm.u_c".into(), &self.lstm.u_c),
            ("lstm.b_i".into(), &self.lstm.b_i),
            ("lstm.b_f".into(), &self.lstm.b_f),
            ("lstm.b_o".into(), &self.lstm.b_o),
            ("lstm.b_c".into(), &self.lstm.b_c),
            ("t_att.phi".into(), &self.t_att.phi),
            ("t_att.w".into(), &self.t_att.w),
        ];
        for (i, (w, b)) in self.mlp.layers.iter().enumerate() {
            out.push((format!("mlp.{i}.weight"), w));
            out.push((format!("mlp.{i}.bias"), b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> = vec![
            ("gcn.w0".into(), &mut self.gcn.w0),
            ("gcn.w1".into(), &mut self.gcn.w1),
            ("v_att.phi".into(), &mut self.v_att.phi),
            ("v_att.w".into(), &mut self.v_att.w),
            ("lstm.w_i".into(), &mut self.lstm.w_i),
            ("lstm.w_f".into(), &mut self.lstm.w_f),
            ("lstm.w_o".into(), &mut self.lstm.w_o),
            ("lstm.w_c".into(), &mut self.lstm.w_c),
            ("lstm.u_i".into(), &mut self.lstm.u_i),
            ("lstm.u_f".into(), &mut self.lstm.u_f),
            ("lstm.u_o".into(), &mut self.lstm.u_o),
            ("lstm.u_c".into(), &mut self.lstm.u_c),
            ("lstm.b_i".into(), &mut self.lstm.b_i),
            ("lstm.b_f".into(), &mut self.lstm.b_f),
            ("lstm.b_o".into(), &mut self.lstm.b_o),
            ("lstm.b_c".into(), &mut self.lstm.b_c),
            ("t_att.phi".into(), &mut self.t_att.phi),
            ("t_att.w".into(), &mut self.t_att.w),
        ];
        for (i, (w, b)) in self.mlp.layers.iter_mut().enumerate() {
            out.push((format!("mlp.{i}.weight"), w));
            out.push((format!("mlp.{i}.bias"), b));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            d_in: 3,
            hidden_dim: 4,
            embed_dim: 4,
            k: 2,
            variant: Variant::Full,
            features: FeatureMode::Dynamic,
        }
    }

    #[test]
    fn same_seed_same_params() {
        let a = ModelParams::init(toy_config(), 11).unwrap();
        let b = ModelParams::init(toy_config(), 11).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::init(toy_config(), 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn glorot_entries_within_bound() {
        let p = ModelParams::init(toy_config(), 5).unwrap();
        let bound = (6.0 / (3 + 4) as f64).sqrt();
        assert!(p.gcn.w0.data().iter().all(|v| v.abs() <= bound));
        let bound1 = (6.0 / (4 + 4) as f64).sqrt();
        assert!(p.gcn.w1.data().iter().all(|v| v.abs() <= bound1));
    }

    #[test]
    fn forget_bias_is_ones_other_biases_zero() {
        let p = ModelParams::init(toy_config(), 5).unwrap();
        assert!(p.lstm.b_f.data().iter().all(|&v| v == 1.0));
        assert!(p.lstm.b_i.data().iter().all(|&v| v == 0.0));
        assert!(p.lstm.b_o.data().iter().all(|&v| v == 0.0));
        assert!(p.lstm.b_c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ct_variant_widens_mlp_input() {
        let cfg = ModelConfig {
            variant: Variant::Ct,
            ..toy_config()
        };
        assert_eq!(cfg.mlp_input_dim(), 3 * 4);
        let p = ModelParams::init(cfg, 1).unwrap();
        assert_eq!(p.mlp.layers[0].0.shape(), (12, 4));
        assert_eq!(p.mlp.layers[1].0.shape(), (4, 2));
    }

    #[test]
    fn zero_dims_rejected() {
        let cfg = ModelConfig {
            d_in: 0,
            ..toy_config()
        };
        assert!(ModelParams::init(cfg, 1).is_err());
    }

    #[test]
    fn tensor_order_is_stable() {
        let p = ModelParams::init(toy_config(), 1).unwrap();
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "gcn.w0");
        assert_eq!(names[17], "t_att.w");
        assert_eq!(names.last().unwrap(), "mlp.1.bias");
        assert_eq!(names.len(), 22);
    }
}
