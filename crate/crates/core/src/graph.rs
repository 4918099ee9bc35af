//! Dynamic-graph data model.
//!
//! A dynamic graph is a sequence of snapshots over a fixed vertex set.
//! Each snapshot carries weighted undirected edges and a node feature
//! matrix; the label vector marks event timestamps.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One undirected weighted edge. Stored canonically with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// A single timestamped graph over `n` vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    timestamp: usize,
    n: usize,
    edges: Vec<Edge>,
    features: Matrix,
}

impl Snapshot {
    /// Validates and canonicalizes the edge list: ids in range, no
    /// self-loops, positive finite weights, each unordered pair at most
    /// once. Edges are stored sorted by `(u, v)` so that equal graphs
    /// compare equal regardless of construction order.
    pub fn new(
        timestamp: usize,
        n: usize,
        edges: Vec<(usize, usize, f64)>,
        features: Matrix,
    ) -> Result<Self> {
        if features.rows() != n {
            return Err(Error::Dim(format!(
                "snapshot {}: feature matrix has {} rows for {} vertices",
                timestamp,
                features.rows(),
                n
            )));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::Config(format!(
                    "snapshot {}: edge ({}, {}) out of range for n={}",
                    timestamp, u, v, n
                )));
            }
            if u == v {
                return Err(Error::Config(format!(
                    "snapshot {}: self-loop at vertex {}",
                    timestamp, u
                )));
            }
            if w <= 0.0 || !w.is_finite() {
                return Err(Error::Config(format!(
                    "snapshot {}: edge ({}, {}) has non-positive weight {}",
                    timestamp, u, v, w
                )));
            }
            canon.push(Edge {
                u: u.min(v),
                v: u.max(v),
                w,
            });
        }
        canon.sort_by_key(|e| (e.u, e.v));
        for pair in canon.windows(2) {
            if pair[0].u == pair[1].u && pair[0].v == pair[1].v {
                return Err(Error::Config(format!(
                    "snapshot {}: duplicate edge ({}, {})",
                    timestamp, pair[0].u, pair[0].v
                )));
            }
        }
        Ok(Snapshot {
            timestamp,
            n,
            edges: canon,
            features,
        })
    }

    pub fn timestamp(&self) -> usize {
        self.timestamp
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Unweighted adjacency lists, useful for the centrality features.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        adj
    }

    /// Symmetrically normalized adjacency with self-loops:
    /// `D^{-1/2} (I + A) D^{-1/2}` where `D` holds the weighted degrees
    /// of `I + A`. Isolated vertices get row sum 1 from the identity
    /// term, so no division by zero can occur.
    pub fn normalized_adjacency(&self) -> Matrix {
        let n = self.n;
        let mut a = Matrix::identity(n);
        for e in &self.edges {
            a.set(e.u, e.v, e.w);
            a.set(e.v, e.u, e.w);
        }
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| {
                let deg: f64 = (0..n).map(|j| a.get(i, j)).sum();
                1.0 / deg.sqrt()
            })
            .collect();
        for i in 0..n {
            for j in 0..n {
                let v = a.get(i, j);
                if v != 0.0 {
                    a.set(i, j, v * inv_sqrt[i] * inv_sqrt[j]);
                }
            }
        }
        a
    }
}

/// The full labeled snapshot sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGraph {
    n: usize,
    node_names: Option<Vec<String>>,
    snapshots: Vec<Snapshot>,
    labels: Vec<bool>,
}

impl DynamicGraph {
    pub fn new(snapshots: Vec<Snapshot>, labels: Vec<bool>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Config("dynamic graph with no snapshots".into()));
        }
        if snapshots.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} snapshots but {} labels",
                snapshots.len(),
                labels.len()
            )));
        }
        let n = snapshots[0].n();
        for s in &snapshots {
            if s.n() != n {
                return Err(Error::Config(format!(
                    "snapshot {} has n={}, expected fixed vertex set of {}",
                    s.timestamp(),
                    s.n(),
                    n
                )));
            }
        }
        for pair in snapshots.windows(2) {
            if pair[1].timestamp() <= pair[0].timestamp() {
                return Err(Error::Config(format!(
                    "timestamps not strictly increasing at {}",
                    pair[1].timestamp()
                )));
            }
        }
        Ok(DynamicGraph {
            n,
            node_names: None,
            snapshots,
            labels,
        })
    }

    pub fn with_node_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n {
            return Err(Error::Config(format!(
                "{} node names for {} vertices",
                names.len(),
                self.n
            )));
        }
        self.node_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    /// All order-`k` windows: for each target index `t` in `k..T`, the
    /// `k+1` snapshots ending at `t` together with the label of `t`.
    pub fn windows(&self, k: usize) -> Result<Vec<SnapshotWindow<'_>>> {
        let t_len = self.snapshots.len();
        if t_len <= k {
            return Err(Error::Config(format!(
                "window order k={} needs at least k+1 snapshots, have T={}",
                k, t_len
            )));
        }
        Ok((k..t_len)
            .map(|t| SnapshotWindow {
                snapshots: &self.snapshots[t - k..=t],
                label: self.labels[t],
                t,
            })
            .collect())
    }
}

/// A view of `k+1` consecutive snapshots with the label of the last one.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotWindow<'g> {
    pub snapshots: &'g [Snapshot],
    pub label: bool,
    pub t: usize,
}
