//! Versioned text checkpoints.
//!
//! Layout: a version line, `key value` header lines for the variant and
//! dimensions, then each tensor in canonical order as a `tensor` line
//! followed by one whitespace-separated row per line. Values use
//! shortest round-trip decimal formatting, so save/load reproduces the
//! parameters bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureMode;
use crate::matrix::Matrix;
use crate::params::{ModelConfig, ModelParams, Variant};

const MAGIC: &str = "dyged-checkpoint-v1";

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    let c = &params.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "variant {}", c.variant);
    let _ = writeln!(out, "features {}", c.features);
    let _ = writeln!(out, "k {}", c.k);
    let _ = writeln!(out, "d_in {}", c.d_in);
    let _ = writeln!(out, "hidden_dim {}", c.hidden_dim);
    let _ = writeln!(out, "embed_dim {}", c.embed_dim);
    let _ = writeln!(out, "mlp_layers {}", params.mlp.layers.len());
    for (name, tensor) in params.tensors() {
        let _ = writeln!(out, "tensor {} {} {}", name, tensor.rows(), tensor.cols());
        for i in 0..tensor.rows() {
            let row: Vec<String> = tensor.row_slice(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, magic) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty checkpoint"))?;
    if magic.trim() != MAGIC {
        return Err(Error::parse(
            path,
            1,
            format!("expected '{MAGIC}' header, got '{}'", magic.trim()),
        ));
    }

    let mut header = std::collections::HashMap::new();
    let mut pending_tensor: Option<(usize, String)> = None;
    for (lineno, line) in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("tensor ") {
            pending_tensor = Some((lineno, rest.to_string()));
            break;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| Error::parse(path, lineno, "expected 'key value'"))?;
        header.insert(key.to_string(), value.to_string());
    }

    let get = |key: &str| -> Result<&String> {
        header
            .get(key)
            .ok_or_else(|| Error::parse(path, 1, format!("missing header field '{key}'")))
    };
    let get_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::parse(path, 1, format!("invalid integer for '{key}'")))
    };
    let variant: Variant = get("variant")?.parse()?;
    let features: FeatureMode = get("features")?.parse()?;
    let config = ModelConfig {
        d_in: get_usize("d_in")?,
        hidden_dim: get_usize("hidden_dim")?,
        embed_dim: get_usize("embed_dim")?,
        k: get_usize("k")?,
        variant,
        features,
    };
    config.validate()?;
    let mlp_layers = get_usize("mlp_layers")?;

    // Parse tensors in order; shapes are validated against a freshly
    // initialized parameter set of the same configuration.
    let mut template = ModelParams::init(config, 0)?;
    if template.mlp.layers.len() != mlp_layers {
        return Err(Error::parse(
            path,
            1,
            format!(
                "checkpoint declares {} MLP layers, this build uses {}",
                mlp_layers,
                template.mlp.layers.len()
            ),
        ));
    }

    let mut tensor_lines: Vec<(usize, String)> = Vec::new();
    if let Some(t) = pending_tensor {
        tensor_lines.push(t);
    }
    let mut rows_buf: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut parsed: Vec<(String, Matrix)> = Vec::new();

    let mut finish =
        |decl: &(usize, String), rows: &mut Vec<(usize, Vec<f64>)>| -> Result<()> {
            let parts: Vec<&str> = decl.1.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::parse(path, decl.0, "expected 'tensor name rows cols'"));
            }
            let name = parts[0].to_string();
            let r: usize = parts[1]
                .parse()
                .map_err(|_| Error::parse(path, decl.0, "invalid row count"))?;
            let c: usize = parts[2]
                .parse()
                .map_err(|_| Error::parse(path, decl.0, "invalid column count"))?;
            if rows.len() != r {
                return Err(Error::parse(
                    path,
                    decl.0,
                    format!("tensor {name}: declared {r} rows, found {}", rows.len()),
                ));
            }
            let mut data = Vec::with_capacity(r * c);
            for (lineno, row) in rows.drain(..) {
                if row.len() != c {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("tensor {name}: expected {c} values per row, got {}", row.len()),
                    ));
                }
                data.extend(row);
            }
            parsed.push((name, Matrix::from_vec(r, c, data)?));
            Ok(())
        };

    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("tensor ") {
            if let Some(decl) = tensor_lines.last() {
                let decl = decl.clone();
                finish(&decl, &mut rows_buf)?;
            }
            tensor_lines.push((lineno, rest.to_string()));
        } else {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| Error::parse(path, lineno, format!("invalid float '{tok}'")))
                })
                .collect::<Result<_>>()?;
            rows_buf.push((lineno, row));
        }
    }
    if let Some(decl) = tensor_lines.last() {
        let decl = decl.clone();
        finish(&decl, &mut rows_buf)?;
    }

    let expected: Vec<String> = template.tensors().into_iter().map(|(n, _)| n).collect();
    let got: Vec<&String> = parsed.iter().map(|(n, _)| n).collect();
    if expected.len() != got.len() || expected.iter().zip(&got).any(|(e, g)| &e != g) {
        return Err(Error::parse(
            path,
            1,
            format!("tensor list mismatch: expected {expected:?}, got {got:?}"),
        ));
    }
    for ((name, slot), (_, value)) in template.tensors_mut().into_iter().zip(parsed) {
        if slot.shape() != value.shape() {
            return Err(Error::parse(
                path,
                1,
                format!(
                    "tensor {name}: expected shape {}x{}, got {}x{}",
                    slot.rows(),
                    slot.cols(),
                    value.rows(),
                    value.cols()
                ),
            ));
        }
        *slot = value;
    }
    Ok(template)
}
