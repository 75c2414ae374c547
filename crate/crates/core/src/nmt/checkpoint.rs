//! Model checkpoint format.
//!
//! Layout: an ASCII magic line, `key=value` configuration lines, a blank
//! line, then for each parameter array (in canonical order) a header line
//! `name rows cols` followed by `rows * cols` little-endian `f32` values.
//! Training runs in `f64` but checkpoints store `f32`, so saving is the
//! quantization point: save, load, save again is byte-identical.

use super::config::{ModelConfig, PosWeightMode};
use super::params::{ModelParams, NVS_PREFIX};
use crate::error::{Error, Result};
use crate::numerics::Real;
use std::io::{BufRead, Read, Write};

const HEADER: &str = "SHORTLEX-MODEL v1";

pub fn save_checkpoint<T: Real>(params: &ModelParams<T>, mut w: impl Write) -> Result<()> {
    let cfg = &params.cfg;
    writeln!(w, "{HEADER}")?;
    writeln!(w, "v_src={}", cfg.v_src)?;
    writeln!(w, "v_tgt={}", cfg.v_tgt)?;
    writeln!(w, "d_model={}", cfg.d_model)?;
    writeln!(w, "n_heads={}", cfg.n_heads)?;
    writeln!(w, "d_ffn={}", cfg.d_ffn)?;
    writeln!(w, "enc_layers={}", cfg.enc_layers)?;
    writeln!(w, "dec_layers={}", cfg.dec_layers)?;
    writeln!(w, "label_smoothing={}", cfg.label_smoothing)?;
    writeln!(w, "dropout={}", cfg.dropout)?;
    writeln!(w, "max_len={}", cfg.max_len)?;
    match cfg.pos_weight {
        PosWeightMode::Fixed(v) => {
            writeln!(w, "pos_weight_mode=fixed")?;
            writeln!(w, "pos_weight_value={v}")?;
        }
        PosWeightMode::Auto { strength } => {
            writeln!(w, "pos_weight_mode=auto")?;
            writeln!(w, "pos_weight_value={strength}")?;
        }
    }
    writeln!(w)?;
    for (name, m) in params.arrays() {
        writeln!(w, "{name} {} {}", m.rows(), m.cols())?;
        let mut bytes = Vec::with_capacity(m.data().len() * 4);
        for &x in m.data() {
            bytes.extend_from_slice(&(x.to_f64() as f32).to_le_bytes());
        }
        w.write_all(&bytes)?;
    }
    Ok(())
}

fn read_line(r: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(Error::Format("checkpoint ended early".into()));
    }
    while line.ends_with('\n') || line.ends_with('\r') {
        line.pop();
    }
    Ok(line)
}

fn parse_config(fields: &std::collections::HashMap<String, String>) -> Result<ModelConfig> {
    let get = |k: &str| {
        fields
            .get(k)
            .ok_or_else(|| Error::Format(format!("checkpoint is missing key {k}")))
    };
    let usize_of = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Format(format!("bad integer for {k}")))
    };
    let f64_of = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Format(format!("bad number for {k}")))
    };
    let value = f64_of("pos_weight_value")?;
    let pos_weight = match get("pos_weight_mode")?.as_str() {
        "fixed" => PosWeightMode::Fixed(value),
        "auto" => PosWeightMode::Auto { strength: value },
        other => {
            return Err(Error::Format(format!(
                "unknown positive-weight mode {other:?}"
            )))
        }
    };
    let cfg = ModelConfig {
        v_src: usize_of("v_src")?,
        v_tgt: usize_of("v_tgt")?,
        d_model: usize_of("d_model")?,
        n_heads: usize_of("n_heads")?,
        d_ffn: usize_of("d_ffn")?,
        enc_layers: usize_of("enc_layers")?,
        dec_layers: usize_of("dec_layers")?,
        label_smoothing: f64_of("label_smoothing")?,
        dropout: f64_of("dropout")?,
        max_len: usize_of("max_len")?,
        pos_weight,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_header_and_config(r: &mut impl BufRead) -> Result<ModelConfig> {
    if read_line(r)? != HEADER {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let mut fields = std::collections::HashMap::new();
    loop {
        let line = read_line(r)?;
        if line.is_empty() {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad config line {line:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    parse_config(&fields)
}

/// Loads inference-width parameters. Array order and shapes must match
/// what the configuration dictates.
pub fn load_checkpoint(mut r: impl BufRead) -> Result<ModelParams<f32>> {
    let cfg = read_header_and_config(&mut r)?;
    let mut params = ModelParams::<f32>::zeros(cfg)?;
    for (name, m) in params.arrays_mut() {
        let line = read_line(&mut r)?;
        let mut it = line.split(' ');
        let (got_name, rows, cols) = match (it.next(), it.next(), it.next(), it.next()) {
            (Some(n), Some(r), Some(c), None) => (
                n,
                r.parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad shape in {line:?}")))?,
                c.parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad shape in {line:?}")))?,
            ),
            _ => return Err(Error::Format(format!("bad array header {line:?}"))),
        };
        if got_name != name || (rows, cols) != m.shape() {
            return Err(Error::Format(format!(
                "expected array {name} {:?}, found {got_name} ({rows}, {cols})",
                m.shape()
            )));
        }
        let mut bytes = vec![0u8; rows * cols * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Format(format!("array {name} is truncated")))?;
        for (x, chunk) in m.data_mut().iter_mut().zip(bytes.chunks_exact(4)) {
            *x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after the last array".into()));
    }
    Ok(params)
}

/// What a checkpoint contains, read without loading array data.
#[derive(Clone, Debug)]
pub struct CheckpointSummary {
    pub cfg: ModelConfig,
    /// `(name, rows, cols)` per stored array, in file order.
    pub arrays: Vec<(String, usize, usize)>,
}

impl CheckpointSummary {
    pub fn total_floats(&self) -> usize {
        self.arrays.iter().map(|&(_, r, c)| r * c).sum()
    }

    /// Floats belonging to the vocabulary-prediction head.
    pub fn nvs_floats(&self) -> usize {
        self.arrays
            .iter()
            .filter(|(n, _, _)| n.starts_with(NVS_PREFIX))
            .map(|&(_, r, c)| r * c)
            .sum()
    }
}

/// Reads structure only; array payloads are skipped, so inspecting a
/// multi-gigabyte checkpoint stays cheap.
pub fn inspect_checkpoint(mut r: impl BufRead) -> Result<CheckpointSummary> {
    let cfg = read_header_and_config(&mut r)?;
    let mut arrays = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            break;
        }
        while line.ends_with('\n') || line.ends_with('\r') {
            line.pop();
        }
        let mut it = line.split(' ');
        let (name, rows, cols) = match (it.next(), it.next(), it.next(), it.next()) {
            (Some(n), Some(r), Some(c), None) => (
                n.to_string(),
                r.parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad shape in {line:?}")))?,
                c.parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad shape in {line:?}")))?,
            ),
            _ => return Err(Error::Format(format!("bad array header {line:?}"))),
        };
        let payload = (rows * cols * 4) as u64;
        let skipped = std::io::copy(&mut r.by_ref().take(payload), &mut std::io::sink())?;
        if skipped != payload {
            return Err(Error::Format(format!("array {name} is truncated")));
        }
        arrays.push((name, rows, cols));
    }
    Ok(CheckpointSummary { cfg, arrays })
}

/// Float count of a width-`d_model` vocabulary-prediction head over
/// `v_tgt` entries: one weight row per entry plus one bias.
pub fn nvs_float_count(v_tgt: usize, d_model: usize) -> usize {
    v_tgt * d_model + v_tgt
}

/// Entry count of a per-source shortlist table with `k_max` targets kept
/// for each of `v_src` sources.
pub fn lexicon_entry_count(k_max: usize, v_src: usize) -> usize {
    k_max * v_src
}
