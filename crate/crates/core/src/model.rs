//! Forward pass of the event detector and its variants.
//!
//! Per snapshot: a two-layer GCN produces node embeddings, which a
//! pooling operator (node self-attention by default, mean or max as
//! ablations) collapses into one snapshot embedding. An LSTM threads
//! the pooled sequence into dynamic states, temporal self-attention
//! aggregates the k+1 states into a single window embedding, and a
//! two-layer MLP scores event / no-event. The variants drop or replace
//! individual stages; see [`Variant`].
//!
//! All builders record onto a [`Tape`], so the same code path serves
//! training (with dropout masks) and evaluation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{assemble_features, FeatureMode};
use crate::graph::DynamicGraph;
use crate::matrix::Matrix;
use crate::params::{ModelParams, Variant};
use crate::tape::{Tape, Var};

/// Per-snapshot inputs precomputed once per dataset: normalized
/// adjacency and assembled features. Feature extraction (betweenness in
/// particular) is far more expensive than a forward pass, so it must
/// not sit inside the training loop.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    k: usize,
    d_in: usize,
    a_hats: Vec<Matrix>,
    feats: Vec<Matrix>,
    labels: Vec<bool>,
}

/// One window of a [`PreparedDataset`]: the k+1 adjacency/feature pairs
/// ending at target index `t`.
#[derive(Debug, Clone, Copy)]
pub struct PreparedWindow<'d> {
    pub a_hats: &'d [Matrix],
    pub feats: &'d [Matrix],
    pub label: bool,
    pub t: usize,
}

impl PreparedDataset {
    pub fn from_graph(g: &DynamicGraph, k: usize, mode: FeatureMode) -> Result<Self> {
        if g.len() <= k {
            return Err(Error::Config(format!(
                "window order k={} needs at least k+1 snapshots, have T={}",
                k,
                g.len()
            )));
        }
        let per_snapshot = crate::par::try_map(g.snapshots(), |s| {
            let x = assemble_features(s, mode)?;
            Ok((s.normalized_adjacency(), x))
        })?;
        let mut a_hats = Vec::with_capacity(per_snapshot.len());
        let mut feats = Vec::with_capacity(per_snapshot.len());
        for (a, x) in per_snapshot {
            a_hats.push(a);
            feats.push(x);
        }
        Ok(PreparedDataset {
            k,
            d_in: feats[0].cols(),
            a_hats,
            feats,
            labels: g.labels().to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn num_windows(&self) -> usize {
        self.labels.len() - self.k
    }

    pub fn window(&self, idx: usize) -> PreparedWindow<'_> {
        let t = idx + self.k;
        PreparedWindow {
            a_hats: &self.a_hats[t - self.k..=t],
            feats: &self.feats[t - self.k..=t],
            label: self.labels[t],
            t,
        }
    }

    pub fn label(&self, idx: usize) -> bool {
        self.labels[idx + self.k]
    }

    /// Fraction of positive windows in an index range; the loss weight.
    pub fn positive_ratio(&self, range: std::ops::Range<usize>) -> f64 {
        let total = range.len();
        let pos = range.filter(|&i| self.label(i)).count();
        pos as f64 / total as f64
    }
}

/// Parameter leaves bound to one tape, in the canonical tensor order.
pub struct ParamVars {
    pub gcn_w0: Var,
    pub gcn_w1: Var,
    pub v_phi: Var,
    pub v_w: Var,
    pub lstm: LstmVars,
    pub t_phi: Var,
    pub t_w: Var,
    pub mlp: Vec<(Var, Var)>,
    variant: Variant,
    k: usize,
    hidden_dim: usize,
    dropout_rate: f64,
    order: Vec<Var>,
}

#[derive(Clone, Copy)]
pub struct LstmVars {
    pub w_i: Var,
    pub w_f: Var,
    pub w_o: Var,
    pub w_c: Var,
    pub u_i: Var,
    pub u_f: Var,
    pub u_o: Var,
    pub u_c: Var,
    pub b_i: Var,
    pub b_f: Var,
    pub b_o: Var,
    pub b_c: Var,
}

impl ParamVars {
    /// Leaf vars in the same order as [`ModelParams::tensors`].
    pub fn ordered(&self) -> &[Var] {
        &self.order
    }
}

/// Registers every parameter matrix as a leaf on `tape`.
pub fn bind_params(tape: &Tape, p: &ModelParams, dropout_rate: f64) -> ParamVars {
    let mut order = Vec::new();
    let mut leaf = |m: &Matrix| {
        let v = tape.leaf(m.clone());
        order.push(v);
        v
    };
    let gcn_w0 = leaf(&p.gcn.w0);
    let gcn_w1 = leaf(&p.gcn.w1);
    let v_phi = leaf(&p.v_att.phi);
    let v_w = leaf(&p.v_att.w);
    let lstm = LstmVars {
        w_i: leaf(&p.lstm.w_i),
        w_f: leaf(&p.lstm.w_f),
        w_o: leaf(&p.lstm.w_o),
        w_c: leaf(&p.lstm.w_c),
        u_i: leaf(&p.lstm.u_i),
        u_f: leaf(&p.lstm.u_f),
        u_o: leaf(&p.lstm.u_o),
        u_c: leaf(&p.lstm.u_c),
        b_i: leaf(&p.lstm.b_i),
        b_f: leaf(&p.lstm.b_f),
        b_o: leaf(&p.lstm.b_o),
        b_c: leaf(&p.lstm.b_c),
    };
    let t_phi = leaf(&p.t_att.phi);
    let t_w = leaf(&p.t_att.w);
    let mlp = p
        .mlp
        .layers
        .iter()
        .map(|(w, b)| (leaf(w), leaf(b)))
        .collect();
    ParamVars {
        gcn_w0,
        gcn_w1,
        v_phi,
        v_w,
        lstm,
        t_phi,
        t_w,
        mlp,
        variant: p.config.variant,
        k: p.config.k,
        hidden_dim: p.config.hidden_dim,
        dropout_rate,
        order,
    }
}

/// Whether a forward call is training (dropout active, masks drawn from
/// the rng) or deterministic evaluation.
pub enum ForwardMode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

fn draw_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rate: f64) -> Matrix {
    let keep = 1.0 - rate;
    Matrix::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            1.0 / keep
        }
    })
}

/// Two-layer graph convolution `relu(A relu(A X W0) W1)` with an
/// optional dropout mask on the hidden activations.
pub fn gcn_forward(
    tape: &Tape,
    a_hat: Var,
    x: Var,
    w0: Var,
    w1: Var,
    hidden_mask: Option<&Matrix>,
) -> Result<Var> {
    let h1 = tape.matmul(a_hat, x)?;
    let h1 = tape.matmul(h1, w0)?;
    let mut h1 = tape.relu(h1);
    if let Some(mask) = hidden_mask {
        h1 = tape.dropout(h1, mask)?;
    }
    let z = tape.matmul(a_hat, h1)?;
    let z = tape.matmul(z, w1)?;
    Ok(tape.relu(z))
}

/// Self-attention pooling over the rows of `z`:
/// `softmax(w tanh(phi z^T)) z`. Returns the pooled row and the
/// attention weights.
fn attention_pool(tape: &Tape, z: Var, phi: Var, w: Var) -> Result<(Var, Var)> {
    let zt = tape.transpose(z);
    let proj = tape.tanh(tape.matmul(phi, zt)?);
    let scores = tape.matmul(w, proj)?;
    let alpha = tape.softmax_row(scores)?;
    let pooled = tape.matmul(alpha, z)?;
    Ok((pooled, alpha))
}

/// Node self-attention pooling of an n-by-h embedding matrix.
pub fn v_att_pool(tape: &Tape, z: Var, phi: Var, w: Var) -> Result<(Var, Var)> {
    attention_pool(tape, z, phi, w)
}

/// Temporal self-attention over the (k+1)-by-h dynamic state matrix.
pub fn t_att(tape: &Tape, states: Var, phi: Var, w: Var) -> Result<(Var, Var)> {
    attention_pool(tape, states, phi, w)
}

/// Column-wise mean or max pooling, the ablation alternatives to
/// attention pooling.
pub fn pool_mean(tape: &Tape, z: Var) -> Result<Var> {
    tape.col_mean(z)
}

pub fn pool_max(tape: &Tape, z: Var) -> Result<Var> {
    tape.col_max(z)
}

/// One LSTM step on 1-by-h row vectors. Standard gates: sigmoid input,
/// forget and output gates, tanh candidate and output squash.
pub fn lstm_step(
    tape: &Tape,
    h_prev: Var,
    c_prev: Var,
    z: Var,
    p: &LstmVars,
) -> Result<(Var, Var)> {
    let gate = |w: Var, u: Var, b: Var| -> Result<Var> {
        let zx = tape.matmul(z, w)?;
        let hx = tape.matmul(h_prev, u)?;
        tape.add(tape.add(zx, hx)?, b)
    };
    let i = tape.sigmoid(gate(p.w_i, p.u_i, p.b_i)?);
    let f = tape.sigmoid(gate(p.w_f, p.u_f, p.b_f)?);
    let o = tape.sigmoid(gate(p.w_o, p.u_o, p.b_o)?);
    let g = tape.tanh(gate(p.w_c, p.u_c, p.b_c)?);
    let c = tape.add(tape.mul(f, c_prev)?, tape.mul(i, g)?)?;
    let h = tape.mul(o, tape.tanh(c))?;
    Ok((h, c))
}

/// Dense layers with ReLU between them and optional dropout masks on
/// hidden activations; the final layer stays linear.
pub fn mlp_forward(
    tape: &Tape,
    input: Var,
    layers: &[(Var, Var)],
    mut hidden_mask: impl FnMut(usize, usize) -> Option<Matrix>,
) -> Result<Var> {
    let mut x = input;
    for (idx, &(w, b)) in layers.iter().enumerate() {
        x = tape.add_row_bias(tape.matmul(x, w)?, b)?;
        if idx + 1 < layers.len() {
            x = tape.relu(x);
            let (r, c) = tape.shape(x);
            if let Some(mask) = hidden_mask(r, c) {
                x = tape.dropout(x, &mask)?;
            }
        }
    }
    Ok(x)
}

/// Values observed during one forward call, for attention export and
/// embedding diagnostics.
#[derive(Debug, Clone)]
pub struct WindowDiag {
    /// One weight vector per snapshot in the window. For mean pooling
    /// these are the uniform coefficients; for max pooling the fraction
    /// of columns each node wins.
    pub node_attention: Vec<Vec<f64>>,
    /// Weights over the k+1 snapshot offsets, oldest first. Absent for
    /// variants without temporal attention.
    pub time_attention: Option<Vec<f64>>,
    /// The embedding handed to the classifier.
    pub embedding: Vec<f64>,
}

/// Runs the configured variant on one window and returns the raw
/// two-class scores plus diagnostics.
pub fn forward_window(
    tape: &Tape,
    win: &PreparedWindow<'_>,
    pv: &ParamVars,
    mode: &mut ForwardMode<'_>,
) -> Result<(Var, WindowDiag)> {
    let steps = win.a_hats.len();
    if steps != pv.k + 1 {
        return Err(Error::Config(format!(
            "window holds {} snapshots but the model expects k+1={}",
            steps,
            pv.k + 1
        )));
    }

    let mut pooled = Vec::with_capacity(steps);
    let mut node_attention = Vec::with_capacity(steps);
    for tau in 0..steps {
        let n = win.a_hats[tau].rows();
        let a_hat = tape.leaf(win.a_hats[tau].clone());
        let x = tape.leaf(win.feats[tau].clone());
        let gcn_mask = match mode {
            ForwardMode::Train(rng) if pv.dropout_rate > 0.0 => {
                Some(draw_mask(rng, n, pv.hidden_dim, pv.dropout_rate))
            }
            _ => None,
        };
        let z = gcn_forward(tape, a_hat, x, pv.gcn_w0, pv.gcn_w1, gcn_mask.as_ref())?;

        let (zp, weights) = match pv.variant {
            Variant::Mean => {
                let zp = pool_mean(tape, z)?;
                (zp, vec![1.0 / n as f64; n])
            }
            Variant::Max => {
                let zp = pool_max(tape, z)?;
                let zv = tape.value(z);
                let (_, arg) = zv.col_max()?;
                let mut occupancy = vec![0.0; n];
                for &winner in &arg {
                    occupancy[winner] += 1.0 / arg.len() as f64;
                }
                (zp, occupancy)
            }
            _ => {
                let (zp, alpha) = v_att_pool(tape, z, pv.v_phi, pv.v_w)?;
                (zp, tape.value(alpha).data().to_vec())
            }
        };
        pooled.push(zp);
        node_attention.push(weights);
    }

    // Dynamic states: the LSTM is reset at each window start, so a
    // window is self-contained and training is batch-order independent.
    let states = if pv.variant.uses_lstm() {
        let h = tape.shape(pooled[0]).1;
        let mut hc = (
            tape.leaf(Matrix::zeros(1, h)),
            tape.leaf(Matrix::zeros(1, h)),
        );
        let mut states = Vec::with_capacity(steps);
        for &z in &pooled {
            hc = lstm_step(tape, hc.0, hc.1, z, &pv.lstm)?;
            states.push(hc.0);
        }
        states
    } else {
        pooled.clone()
    };

    let (embedding, time_attention) = match pv.variant {
        Variant::Ct => {
            let cat = tape.concat_cols(&pooled)?;
            (cat, None)
        }
        Variant::Na => (*states.last().expect("k+1 >= 1 states"), None),
        _ => {
            let stacked = tape.concat_rows(&states)?;
            let (agg, weights) = t_att(tape, stacked, pv.t_phi, pv.t_w)?;
            (agg, Some(tape.value(weights).data().to_vec()))
        }
    };

    let scores = mlp_forward(tape, embedding, &pv.mlp, |r, c| match mode {
        ForwardMode::Train(rng) if pv.dropout_rate > 0.0 => {
            Some(draw_mask(rng, r, c, pv.dropout_rate))
        }
        _ => None,
    })?;

    let diag = WindowDiag {
        node_attention,
        time_attention,
        embedding: tape.value(embedding).data().to_vec(),
    };
    Ok((scores, diag))
}

/// Imbalance-weighted cross-entropy over a batch of 1-by-2 score rows.
/// Scores become class probabilities by row softmax; a positive window
/// contributes `-(1-x) log p_event`, a negative one `-x log p_noevent`,
/// and the batch is averaged. `x` is the positive ratio of the training
/// split, so the rarer class carries the larger weight.
pub fn weighted_cross_entropy(
    tape: &Tape,
    scores: &[Var],
    labels: &[bool],
    x_ratio: f64,
) -> Result<Var> {
    if !(x_ratio > 0.0 && x_ratio < 1.0) {
        return Err(Error::Config(format!(
            "class weight x must lie in (0, 1), got {x_ratio}"
        )));
    }
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} score rows vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let batch = tape.concat_rows(scores)?;
    let probs = tape.softmax_row(batch)?;
    let logp = tape.log_clamped(probs);
    let weights = Matrix::from_fn(labels.len(), 2, |i, j| match (labels[i], j) {
        (true, 0) => 1.0 - x_ratio,
        (false, 1) => x_ratio,
        _ => 0.0,
    });
    let wv = tape.leaf(weights);
    let terms = tape.mul(logp, wv)?;
    let total = tape.sum(terms);
    Ok(tape.scale(total, -1.0 / labels.len() as f64))
}

/// One evaluated window: the event probability plus diagnostics.
#[derive(Debug, Clone)]
pub struct ScoredWindow {
    pub t: usize,
    pub label: bool,
    /// Probability of the event class (first score column, softmaxed).
    pub score: f64,
    pub diag: WindowDiag,
}

/// Checks that a model and a prepared dataset agree on feature width
/// and window order.
pub fn validate_compatible(params: &ModelParams, data: &PreparedDataset) -> Result<()> {
    if params.config.d_in != data.d_in() {
        return Err(Error::Dim(format!(
            "model expects d_in={}, dataset provides d_in={}",
            params.config.d_in,
            data.d_in()
        )));
    }
    if params.config.k != data.k() {
        return Err(Error::Dim(format!(
            "model expects k={}, dataset prepared with k={}",
            params.config.k,
            data.k()
        )));
    }
    Ok(())
}

/// Deterministic evaluation of one window.
pub fn score_window(
    data: &PreparedDataset,
    idx: usize,
    params: &ModelParams,
) -> Result<ScoredWindow> {
    let win = data.window(idx);
    let tape = Tape::new();
    let pv = bind_params(&tape, params, 0.0);
    let (scores, diag) = forward_window(&tape, &win, &pv, &mut ForwardMode::Eval)?;
    let probs = tape.value(scores).softmax_rows()?;
    Ok(ScoredWindow {
        t: win.t,
        label: win.label,
        score: probs.get(0, 0),
        diag,
    })
}

/// Evaluates a window range; windows are independent, so this runs in
/// parallel when the `parallel` feature is on. Results keep index
/// order either way.
pub fn score_windows(
    data: &PreparedDataset,
    range: std::ops::Range<usize>,
    params: &ModelParams,
) -> Result<Vec<ScoredWindow>> {
    validate_compatible(params, data)?;
    let indices: Vec<usize> = range.collect();
    crate::par::try_map(&indices, |&idx| score_window(data, idx, params))
}

/// Strictly sequential twin of [`score_windows`], kept public so the
/// benchmark suite can compare both schedules in one binary.
pub fn score_windows_sequential(
    data: &PreparedDataset,
    range: std::ops::Range<usize>,
    params: &ModelParams,
) -> Result<Vec<ScoredWindow>> {
    validate_compatible(params, data)?;
    range.map(|idx| score_window(data, idx, params)).collect()
}
