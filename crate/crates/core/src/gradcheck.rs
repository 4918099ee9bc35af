//! End-to-end gradient verification.
//!
//! Compares the tape's analytic gradients of the batch loss against
//! central finite differences, tensor by tensor, on a small seeded
//! instance. The finite-difference side only ever calls the forward
//! pass, so the two routes share no adjoint code.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureMode;
use crate::graph::{DynamicGraph, Snapshot};
use crate::matrix::Matrix;
use crate::model::{
    bind_params, forward_window, weighted_cross_entropy, ForwardMode, PreparedDataset,
};
use crate::params::{ModelConfig, ModelParams, Variant, ALL_VARIANTS};
use crate::tape::Tape;

/// Pass threshold on the max relative error per tensor.
pub const GRAD_TOLERANCE: f64 = 1e-4;

const FD_STEP: f64 = 1e-5;

/// Dimensions of the toy instance the check runs on. Kept small so the
/// finite-difference sweep stays fast.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckSettings {
    pub n: usize,
    pub d_in: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings {
            n: 5,
            d_in: 3,
            hidden_dim: 4,
            embed_dim: 4,
            k: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub variant: Variant,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < GRAD_TOLERANCE
    }
}

/// A small random dynamic graph with mixed labels, deterministic per
/// seed. Static features are used so the check does not depend on the
/// centrality pipeline.
pub fn toy_graph(n: usize, d: usize, t_len: usize, seed: u64) -> DynamicGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut snapshots = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < 0.5 {
                    edges.push((u, v, rng.random_range(0.2..2.0)));
                }
            }
        }
        let x = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        snapshots.push(Snapshot::new(t, n, edges, x).expect("valid toy snapshot"));
    }
    let labels: Vec<bool> = (0..t_len).map(|t| t % 2 == 0).collect();
    DynamicGraph::new(snapshots, labels).expect("valid toy graph")
}

fn batch_loss(params: &ModelParams, data: &PreparedDataset, x_ratio: f64) -> Result<f64> {
    let tape = Tape::new();
    let pv = bind_params(&tape, params, 0.0);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for idx in 0..data.num_windows() {
        let win = data.window(idx);
        let (s, _) = forward_window(&tape, &win, &pv, &mut ForwardMode::Eval)?;
        scores.push(s);
        labels.push(win.label);
    }
    let loss = weighted_cross_entropy(&tape, &scores, &labels, x_ratio)?;
    Ok(tape.value(loss).get(0, 0))
}

fn analytic_gradients(
    params: &ModelParams,
    data: &PreparedDataset,
    x_ratio: f64,
) -> Result<Vec<Matrix>> {
    let tape = Tape::new();
    let pv = bind_params(&tape, params, 0.0);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for idx in 0..data.num_windows() {
        let win = data.window(idx);
        let (s, _) = forward_window(&tape, &win, &pv, &mut ForwardMode::Eval)?;
        scores.push(s);
        labels.push(win.label);
    }
    let loss = weighted_cross_entropy(&tape, &scores, &labels, x_ratio)?;
    let grads = tape.backward(loss)?;
    Ok(pv.ordered().iter().map(|&v| grads.get(v).clone()).collect())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Checks one variant. With `corrupt` set, a deliberate offset is added
/// to one analytic gradient entry so callers can verify the check
/// actually fails on wrong adjoints.
pub fn check_variant(
    settings: &GradCheckSettings,
    variant: Variant,
    corrupt: bool,
) -> Result<GradCheckReport> {
    if settings.n > 8 || settings.embed_dim > 8 || settings.hidden_dim > 8 {
        return Err(Error::Config(format!(
            "gradient check is restricted to n <= 8 and h <= 8, got n={}, h'={}, h={}",
            settings.n, settings.hidden_dim, settings.embed_dim
        )));
    }
    let t_len = settings.k + 4;
    let graph = toy_graph(settings.n, settings.d_in, t_len, settings.seed);
    let data = PreparedDataset::from_graph(&graph, settings.k, FeatureMode::Static)?;
    let x_ratio = data.positive_ratio(0..data.num_windows());

    let config = ModelConfig {
        d_in: settings.d_in,
        hidden_dim: settings.hidden_dim,
        embed_dim: settings.embed_dim,
        k: settings.k,
        variant,
        features: FeatureMode::Static,
    };
    let params = ModelParams::init(config, settings.seed.wrapping_add(1))?;

    let mut analytic = analytic_gradients(&params, &data, x_ratio)?;
    if corrupt {
        if let Some(first) = analytic.first_mut() {
            let v = first.get(0, 0);
            first.set(0, 0, v + 0.5);
        }
    }

    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let mut tensors = Vec::with_capacity(names.len());
    for (t_idx, name) in names.iter().enumerate() {
        let shape = analytic[t_idx].shape();
        let mut worst = 0.0f64;
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let mut probe = params.clone();
                {
                    let mut tensors_mut = probe.tensors_mut();
                    let (_, t) = &mut tensors_mut[t_idx];
                    t.set(i, j, t.get(i, j) + FD_STEP);
                }
                let plus = batch_loss(&probe, &data, x_ratio)?;
                {
                    let mut tensors_mut = probe.tensors_mut();
                    let (_, t) = &mut tensors_mut[t_idx];
                    t.set(i, j, t.get(i, j) - 2.0 * FD_STEP);
                }
                let minus = batch_loss(&probe, &data, x_ratio)?;
                let fd = (plus - minus) / (2.0 * FD_STEP);
                worst = worst.max(rel_err(analytic[t_idx].get(i, j), fd));
            }
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            max_rel_err: worst,
        });
    }
    Ok(GradCheckReport { variant, tensors })
}

/// Runs the check for every variant.
pub fn check_all(settings: &GradCheckSettings, corrupt: bool) -> Result<Vec<GradCheckReport>> {
    ALL_VARIANTS
        .iter()
        .map(|&v| check_variant(settings, v, corrupt))
        .collect()
}
