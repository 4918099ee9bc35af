//! On-disk dataset format.
//!
//! A dataset is a directory with:
//!
//! - `meta` — one line `n=<int> T=<int> d=<int>`
//! - `edges.tsv` — rows `t<TAB>u<TAB>v<TAB>w`, one per undirected edge
//! - `features.tsv` — optional static features, rows `u<TAB>f1..fd`
//! - `labels.tsv` — rows `t<TAB>{0|1}`, one per snapshot
//!
//! Floats are written in shortest round-trip decimal form, so a
//! write/read cycle reproduces every value bit for bit. Parsers report
//! malformed input with the file and line number.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{DynamicGraph, Snapshot};
use crate::matrix::Matrix;

struct LineParser<'p> {
    path: &'p Path,
}

impl<'p> LineParser<'p> {
    fn field<T: std::str::FromStr>(&self, line: usize, raw: &str, what: &str) -> Result<T> {
        raw.parse().map_err(|_| {
            Error::parse(self.path, line, format!("invalid {what}: '{raw}'"))
        })
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_meta(path: &Path) -> Result<(usize, usize, usize)> {
    let text = read_to_string(path)?;
    let p = LineParser { path };
    let (mut n, mut t, mut d) = (None, None, None);
    for (lineno, line) in content_lines(&text) {
        for token in line.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| {
                Error::parse(path, lineno, format!("expected key=value, got '{token}'"))
            })?;
            match key {
                "n" => n = Some(p.field(lineno, value, "n")?),
                "T" => t = Some(p.field(lineno, value, "T")?),
                "d" => d = Some(p.field(lineno, value, "d")?),
                other => {
                    return Err(Error::parse(path, lineno, format!("unknown meta key '{other}'")))
                }
            }
        }
    }
    match (n, t, d) {
        (Some(n), Some(t), Some(d)) => Ok((n, t, d)),
        _ => Err(Error::parse(path, 1, "meta must define n, T and d")),
    }
}

/// Reads a dataset directory into a [`DynamicGraph`].
pub fn read_dataset(dir: &Path) -> Result<DynamicGraph> {
    let (n, t_len, d) = parse_meta(&dir.join("meta"))?;
    if n == 0 || t_len == 0 {
        return Err(Error::Config(format!(
            "degenerate dataset: n={n}, T={t_len}"
        )));
    }

    // Static features, shared by every snapshot.
    let features_path = dir.join("features.tsv");
    let static_features = if d > 0 {
        let text = read_to_string(&features_path)?;
        let p = LineParser { path: &features_path };
        let mut x = Matrix::zeros(n, d);
        let mut seen = vec![false; n];
        for (lineno, line) in content_lines(&text) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != d + 1 {
                return Err(Error::parse(
                    &features_path,
                    lineno,
                    format!("expected {} fields, got {}", d + 1, fields.len()),
                ));
            }
            let u: usize = p.field(lineno, fields[0], "vertex id")?;
            if u >= n {
                return Err(Error::parse(
                    &features_path,
                    lineno,
                    format!("vertex id {u} out of range for n={n}"),
                ));
            }
            if seen[u] {
                return Err(Error::parse(
                    &features_path,
                    lineno,
                    format!("duplicate feature row for vertex {u}"),
                ));
            }
            seen[u] = true;
            for (j, raw) in fields[1..].iter().enumerate() {
                x.set(u, j, p.field(lineno, raw, "feature value")?);
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::parse(
                &features_path,
                1,
                format!("no feature row for vertex {missing}"),
            ));
        }
        x
    } else {
        Matrix::zeros(n, 0)
    };

    // Edges grouped by snapshot.
    let edges_path = dir.join("edges.tsv");
    let text = read_to_string(&edges_path)?;
    let p = LineParser { path: &edges_path };
    let mut per_snapshot: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); t_len];
    let mut pair_seen: Vec<std::collections::HashSet<(usize, usize)>> =
        vec![std::collections::HashSet::new(); t_len];
    for (lineno, line) in content_lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                &edges_path,
                lineno,
                format!("expected 4 fields t/u/v/w, got {}", fields.len()),
            ));
        }
        let t: usize = p.field(lineno, fields[0], "timestamp")?;
        let u: usize = p.field(lineno, fields[1], "vertex id")?;
        let v: usize = p.field(lineno, fields[2], "vertex id")?;
        let w: f64 = p.field(lineno, fields[3], "weight")?;
        if t >= t_len {
            return Err(Error::parse(
                &edges_path,
                lineno,
                format!("timestamp {t} out of range for T={t_len}"),
            ));
        }
        if u >= n || v >= n {
            return Err(Error::parse(
                &edges_path,
                lineno,
                format!("edge ({u}, {v}) out of range for n={n}"),
            ));
        }
        if u == v {
            return Err(Error::parse(&edges_path, lineno, format!("self-loop at vertex {u}")));
        }
        if w <= 0.0 || !w.is_finite() {
            return Err(Error::parse(
                &edges_path,
                lineno,
                format!("edge weight must be positive, got {w}"),
            ));
        }
        if !pair_seen[t].insert((u.min(v), u.max(v))) {
            return Err(Error::parse(
                &edges_path,
                lineno,
                format!("duplicate undirected edge ({u}, {v}) in snapshot {t}"),
            ));
        }
        per_snapshot[t].push((u, v, w));
    }

    // Labels, one per snapshot.
    let labels_path = dir.join("labels.tsv");
    let text = read_to_string(&labels_path)?;
    let p = LineParser { path: &labels_path };
    let mut labels: Vec<Option<bool>> = vec![None; t_len];
    for (lineno, line) in content_lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                &labels_path,
                lineno,
                format!("expected 2 fields t/label, got {}", fields.len()),
            ));
        }
        let t: usize = p.field(lineno, fields[0], "timestamp")?;
        if t >= t_len {
            return Err(Error::parse(
                &labels_path,
                lineno,
                format!("timestamp {t} out of range for T={t_len}"),
            ));
        }
        if labels[t].is_some() {
            return Err(Error::parse(
                &labels_path,
                lineno,
                format!("duplicate label for timestamp {t}"),
            ));
        }
        labels[t] = Some(match fields[1] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    &labels_path,
                    lineno,
                    format!("label must be 0 or 1, got '{other}'"),
                ))
            }
        });
    }
    let labels: Vec<bool> = labels
        .into_iter()
        .enumerate()
        .map(|(t, l)| l.ok_or_else(|| Error::parse(&labels_path, 1, format!("missing label for timestamp {t}"))))
        .collect::<Result<_>>()?;

    let snapshots: Vec<Snapshot> = per_snapshot
        .into_iter()
        .enumerate()
        .map(|(t, edges)| Snapshot::new(t, n, edges, static_features.clone()))
        .collect::<Result<_>>()?;

    DynamicGraph::new(snapshots, labels)
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_all(path: &Path, content: &str) -> Result<()> {
    let mut f = create_file(path)?;
    f.write_all(content.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes a dataset directory. The directory itself must already exist
/// or have an existing parent.
pub fn write_dataset(dir: &Path, g: &DynamicGraph) -> Result<()> {
    if !dir.exists() {
        fs::create_dir(dir).map_err(|e| Error::io(dir, e))?;
    }
    let d = g.snapshots()[0].features().cols();
    write_all(
        &dir.join("meta"),
        &format!("n={} T={} d={}\n", g.n(), g.len(), d),
    )?;

    let mut edges = String::new();
    for s in g.snapshots() {
        for e in s.edges() {
            edges.push_str(&format!("{}\t{}\t{}\t{}\n", s.timestamp(), e.u, e.v, e.w));
        }
    }
    write_all(&dir.join("edges.tsv"), &edges)?;

    if d > 0 {
        let x = g.snapshots()[0].features();
        let mut feats = String::new();
        for u in 0..g.n() {
            feats.push_str(&u.to_string());
            for j in 0..d {
                feats.push_str(&format!("\t{}", x.get(u, j)));
            }
            feats.push('\n');
        }
        write_all(&dir.join("features.tsv"), &feats)?;
    }

    let mut labels = String::new();
    for (t, &l) in g.labels().iter().enumerate() {
        labels.push_str(&format!("{}\t{}\n", t, if l { 1 } else { 0 }));
    }
    write_all(&dir.join("labels.tsv"), &labels)?;
    Ok(())
}
