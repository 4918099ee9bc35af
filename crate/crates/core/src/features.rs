//! Per-snapshot node features.
//!
//! The three dynamic features (degree, betweenness centrality, local
//! clustering coefficient) are computed on the unweighted skeleton of a
//! snapshot. Assembled dynamic columns are standardized per snapshot
//! because their natural scales differ by orders of magnitude.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Snapshot;
use crate::matrix::Matrix;

/// Which node features feed the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Static,
    Dynamic,
    Both,
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FeatureMode::Static => "static",
            FeatureMode::Dynamic => "dynamic",
            FeatureMode::Both => "both",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(FeatureMode::Static),
            "dynamic" => Ok(FeatureMode::Dynamic),
            "both" => Ok(FeatureMode::Both),
            other => Err(Error::Config(format!(
                "unknown feature mode '{other}', expected static|dynamic|both"
            ))),
        }
    }
}

/// Unweighted degree of each vertex.
pub fn degree_feature(s: &Snapshot) -> Vec<f64> {
    let mut deg = vec![0.0; s.n()];
    for e in s.edges() {
        deg[e.u] += 1.0;
        deg[e.v] += 1.0;
    }
    deg
}

/// Shortest-path betweenness centrality via Brandes' accumulation,
/// normalized by `(n-1)(n-2)/2` so values land in `[0, 1]` for
/// undirected graphs. Graphs with fewer than three vertices get zeros.
pub fn betweenness_feature(s: &Snapshot) -> Vec<f64> {
    let n = s.n();
    if n < 3 {
        return vec![0.0; n];
    }
    let adj = s.neighbor_lists();
    let mut between = vec![0.0; n];

    for source in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![-1i64; n];
        sigma[source] = 1.0;
        dist[source] = 0;

        let mut queue = VecDeque::new();
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }

        let mut delta = vec![0.0f64; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != source {
                between[w] += delta[w];
            }
        }
    }

    // The source loop counts every unordered pair twice, so the raw
    // accumulator is normalized by (n-1)(n-2) rather than half of it.
    let norm = 1.0 / ((n - 1) * (n - 2)) as f64;
    for b in &mut between {
        *b *= norm;
    }
    between
}

/// Local clustering coefficient: `2 * triangles(v) / (deg(v) (deg(v)-1))`,
/// zero for vertices of degree below two.
pub fn clustering_feature(s: &Snapshot) -> Vec<f64> {
    let n = s.n();
    let adj = s.neighbor_lists();
    let mut is_edge = vec![false; n * n];
    for e in s.edges() {
        is_edge[e.u * n + e.v] = true;
        is_edge[e.v * n + e.u] = true;
    }

    (0..n)
        .map(|v| {
            let deg = adj[v].len();
            if deg < 2 {
                return 0.0;
            }
            let mut triangles = 0usize;
            for (i, &a) in adj[v].iter().enumerate() {
                for &b in &adj[v][i + 1..] {
                    if is_edge[a * n + b] {
                        triangles += 1;
                    }
                }
            }
            2.0 * triangles as f64 / (deg * (deg - 1)) as f64
        })
        .collect()
}

/// Standardizes one column to zero mean and unit variance over the node
/// axis; a zero-variance column is left at zero.
fn standardize(col: &mut [f64]) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 1e-24 {
        col.fill(0.0);
    } else {
        let inv_std = 1.0 / var.sqrt();
        for v in col {
            *v = (*v - mean) * inv_std;
        }
    }
}

fn dynamic_columns(s: &Snapshot) -> [Vec<f64>; 3] {
    let mut cols = [
        degree_feature(s),
        betweenness_feature(s),
        clustering_feature(s),
    ];
    for col in &mut cols {
        standardize(col);
    }
    cols
}

/// Builds the encoder input for one snapshot: the stored static matrix,
/// the three standardized dynamic columns, or both side by side.
pub fn assemble_features(s: &Snapshot, mode: FeatureMode) -> Result<Matrix> {
    let n = s.n();
    match mode {
        FeatureMode::Static => {
            if s.features().cols() == 0 {
                return Err(Error::Config(
                    "feature mode 'static' but the snapshot has no static features".into(),
                ));
            }
            Ok(s.features().clone())
        }
        FeatureMode::Dynamic => {
            let cols = dynamic_columns(s);
            Ok(Matrix::from_fn(n, 3, |i, j| cols[j][i]))
        }
        FeatureMode::Both => {
            if s.features().cols() == 0 {
                return Err(Error::Config(
                    "feature mode 'both' but the snapshot has no static features".into(),
                ));
            }
            let cols = dynamic_columns(s);
            let dynamic = Matrix::from_fn(n, 3, |i, j| cols[j][i]);
            Matrix::concat_cols(&[s.features(), &dynamic])
        }
    }
}

/// Width of the assembled feature matrix without building it.
pub fn feature_width(static_dim: usize, mode: FeatureMode) -> usize {
    match mode {
        FeatureMode::Static => static_dim,
        FeatureMode::Dynamic => 3,
        FeatureMode::Both => static_dim + 3,
    }
}
