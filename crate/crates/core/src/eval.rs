//! Evaluation: ROC-AUC, score scaling, attention summaries, and
//! delimited-text export of everything the training pipeline learns.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ScoredWindow;

/// Rank-based ROC-AUC: the probability that a random positive outranks
/// a random negative, ties counted one half. Computed from average
/// ranks, which agrees exactly with the brute-force pairwise count.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {positives} positive and {negatives} negative labels"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Average ranks over tie groups (1-based ranks).
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Min-max scaling into [0, 1]. A constant vector maps to all 0.5 so
/// the function stays total; everywhere else the transform is strictly
/// order-preserving.
pub fn minmax_scale(scores: &[f64]) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![0.5; scores.len()];
    }
    let range = max - min;
    scores.iter().map(|&s| (s - min) / range).collect()
}

/// Everything learned about one evaluated window range, index-aligned
/// across all vectors.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub window_ts: Vec<usize>,
    /// Event-class probability per window.
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// `None` when undefined (empty range or single-class labels).
    pub auc: Option<f64>,
    /// Per-window node weight vector (pooling weights averaged over the
    /// window's snapshots).
    pub node_attention: Vec<Vec<f64>>,
    /// Per-window weights over the k+1 offsets; absent for variants
    /// without temporal attention.
    pub time_attention: Option<Vec<Vec<f64>>>,
    /// Per-window classifier input embedding.
    pub embeddings: Vec<Vec<f64>>,
}

impl EvalReport {
    pub fn from_scored(scored: &[ScoredWindow]) -> Self {
        let window_ts: Vec<usize> = scored.iter().map(|s| s.t).collect();
        let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
        let labels: Vec<bool> = scored.iter().map(|s| s.label).collect();
        let node_attention: Vec<Vec<f64>> = scored
            .iter()
            .map(|s| {
                let steps = s.diag.node_attention.len() as f64;
                let n = s.diag.node_attention[0].len();
                (0..n)
                    .map(|i| {
                        s.diag.node_attention.iter().map(|a| a[i]).sum::<f64>() / steps
                    })
                    .collect()
            })
            .collect();
        let time_attention = if scored.iter().all(|s| s.diag.time_attention.is_some()) {
            Some(
                scored
                    .iter()
                    .map(|s| s.diag.time_attention.clone().expect("checked above"))
                    .collect(),
            )
        } else {
            None
        };
        let embeddings: Vec<Vec<f64>> = scored.iter().map(|s| s.diag.embedding.clone()).collect();
        let auc = auc(&scores, &labels).ok();
        EvalReport {
            window_ts,
            scores,
            labels,
            auc,
            node_attention,
            time_attention,
            embeddings,
        }
    }

    pub fn require_auc(&self) -> Result<f64> {
        self.auc.ok_or_else(|| {
            Error::UndefinedMetric(
                "AUC is undefined for this report (empty or single-class labels)".into(),
            )
        })
    }
}

/// Mean pooling weight per node over all windows; sorting gives the
/// node importance ranking.
pub fn node_importance(report: &EvalReport) -> Vec<f64> {
    if report.node_attention.is_empty() {
        return Vec::new();
    }
    let n = report.node_attention[0].len();
    let count = report.node_attention.len() as f64;
    (0..n)
        .map(|i| report.node_attention.iter().map(|a| a[i]).sum::<f64>() / count)
        .collect()
}

/// Mean and standard deviation of the temporal attention weight per
/// offset, oldest offset first.
pub fn time_attention_stats(report: &EvalReport) -> Option<Vec<(f64, f64)>> {
    let rows = report.time_attention.as_ref()?;
    if rows.is_empty() {
        return Some(Vec::new());
    }
    let width = rows[0].len();
    let count = rows.len() as f64;
    Some(
        (0..width)
            .map(|j| {
                let mean = rows.iter().map(|r| r[j]).sum::<f64>() / count;
                let var = rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / count;
                (mean, var.sqrt())
            })
            .collect(),
    )
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Writes the report as four TSV files: per-window scores and labels,
/// mean node weights, per-offset temporal attention statistics, and the
/// raw embeddings for external projection. Values use shortest
/// round-trip decimals, so re-parsing reproduces them exactly.
pub fn export(report: &EvalReport, dir: &Path) -> Result<()> {
    if !dir.exists() {
        fs::create_dir(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut scores = String::from("t\tscore\tlabel\n");
    for ((t, s), l) in report
        .window_ts
        .iter()
        .zip(&report.scores)
        .zip(&report.labels)
    {
        let _ = writeln!(scores, "{}\t{}\t{}", t, s, u8::from(*l));
    }
    write_file(&dir.join("scores.tsv"), &scores)?;

    let mut nodes = String::from("node\tmean_weight\n");
    for (node, w) in node_importance(report).iter().enumerate() {
        let _ = writeln!(nodes, "{}\t{}", node, w);
    }
    write_file(&dir.join("node_attention.tsv"), &nodes)?;

    let mut time = String::from("offset\tmean\tstdev\n");
    if let Some(stats) = time_attention_stats(report) {
        let k = stats.len().saturating_sub(1) as i64;
        for (j, (mean, stdev)) in stats.iter().enumerate() {
            let _ = writeln!(time, "{}\t{}\t{}", j as i64 - k, mean, stdev);
        }
    }
    write_file(&dir.join("time_attention.tsv"), &time)?;

    let mut emb = String::from("t");
    if let Some(first) = report.embeddings.first() {
        for j in 0..first.len() {
            let _ = write!(emb, "\te{}", j);
        }
    }
    emb.push('\n');
    for (t, row) in report.window_ts.iter().zip(&report.embeddings) {
        let _ = write!(emb, "{}", t);
        for v in row {
            let _ = write!(emb, "\t{}", v);
        }
        emb.push('\n');
    }
    write_file(&dir.join("embeddings.tsv"), &emb)?;
    Ok(())
}

/// Reads back `scores.tsv`, the inverse of the score export.
pub fn parse_scores(path: &Path) -> Result<(Vec<usize>, Vec<f64>, Vec<bool>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ts = Vec::new();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, lineno + 1, "expected t/score/label"));
        }
        ts.push(
            fields[0]
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "invalid t"))?,
        );
        scores.push(
            fields[1]
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "invalid score"))?,
        );
        labels.push(match fields[2] {
            "0" => false,
            "1" => true,
            _ => return Err(Error::parse(path, lineno + 1, "invalid label")),
        });
    }
    Ok((ts, scores, labels))
}
