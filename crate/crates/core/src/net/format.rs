//! Plain-text model files.
//!
//! ```text
//! deeporder-model
//! format 1
//! dims 14 10 20 15 1
//! window 10
//! weights linear
//! seed 42
//! normalizer suite
//! duration_bounds 1.2000000000000000e0 9.8000000000000000e1
//! last_run_bounds 2016-01-01T00:00:00 2016-12-31T08:00:00
//! layer 0
//! w <dims[1] values>          (dims[0] lines, one per input row)
//! b <dims[1] values>
//! layer 1
//! ...
//! end
//! ```
//!
//! Every real is written with 17 significant digits, which round-trips an
//! `f64` exactly. `last_run_bounds` is `- -` when the training data had no
//! executed tests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDateTime;

use super::{Layer, NetError, Network, TrainedModel};
use crate::features::Normalizer;
use crate::NormalizerMode;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "deeporder-model";
const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn ts(t: Option<NaiveDateTime>) -> String {
    t.map_or_else(|| "-".to_string(), |t| t.format(TS_FORMAT).to_string())
}

pub fn to_text(model: &TrainedModel) -> String {
    let mut out = String::new();
    let dims: Vec<String> = model.network.dims().iter().map(usize::to_string).collect();
    let n = &model.normalizer;
    // writing to a String cannot fail
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "format {FORMAT_VERSION}");
    let _ = writeln!(out, "dims {}", dims.join(" "));
    let _ = writeln!(out, "window {}", model.window_len);
    let _ = writeln!(out, "weights {}", model.weight_kind);
    let _ = writeln!(out, "seed {}", model.rng_seed);
    let _ = writeln!(out, "normalizer {}", model.normalizer_mode);
    let _ = writeln!(out, "duration_bounds {} {}", real(n.duration_min), real(n.duration_max));
    let _ = writeln!(out, "last_run_bounds {} {}", ts(n.earliest), ts(n.latest));
    for (i, layer) in model.network.layers().iter().enumerate() {
        let _ = writeln!(out, "layer {i}");
        for row in layer.weights.chunks_exact(layer.outputs) {
            let vals: Vec<String> = row.iter().map(|&v| real(v)).collect();
            let _ = writeln!(out, "w {}", vals.join(" "));
        }
        let vals: Vec<String> = layer.bias.iter().map(|&v| real(v)).collect();
        let _ = writeln!(out, "b {}", vals.join(" "));
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, key: &str) -> Result<(usize, &'a str), NetError> {
        loop {
            let Some((no, line)) = self.inner.next() else {
                return Err(corrupt(format!("unexpected end of file, expected `{key}`")));
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let rest = match line.split_once(' ') {
                Some((k, rest)) if k == key => rest.trim(),
                None if line == key => "",
                _ => return Err(corrupt(format!("line {}: expected `{key}`, found `{line}`", no + 1))),
            };
            return Ok((no + 1, rest));
        }
    }
}

fn corrupt(msg: String) -> NetError {
    NetError::CorruptModel(msg)
}

fn parse_reals(line: usize, s: &str, expected: usize) -> Result<Vec<f64>, NetError> {
    let vals = s
        .split_whitespace()
        .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| corrupt(format!("line {line}: bad number")))?;
    if vals.len() != expected {
        return Err(corrupt(format!("line {line}: expected {expected} values, found {}", vals.len())));
    }
    Ok(vals)
}

fn parse_ts(line: usize, s: &str) -> Result<Option<NaiveDateTime>, NetError> {
    if s == "-" {
        return Ok(None);
    }
    NaiveDateTime::parse_from_str(s, TS_FORMAT)
        .map(Some)
        .map_err(|_| corrupt(format!("line {line}: bad timestamp `{s}`")))
}

fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, NetError> {
    s.parse().map_err(|_| corrupt(format!("line {line}: bad value `{s}`")))
}

pub fn from_text(text: &str) -> Result<TrainedModel, NetError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    lines.next(MAGIC)?;
    let (_, version) = lines.next("format")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(NetError::SchemaVersionMismatch {
            found: version.to_string(),
            expected: FORMAT_VERSION,
        });
    }
    let (no, dims) = lines.next("dims")?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|d| parse_num(no, d))
        .collect::<Result<_, _>>()?;
    let (no, window) = lines.next("window")?;
    let window_len: usize = parse_num(no, window)?;
    let (no, weights) = lines.next("weights")?;
    let weight_kind = weights.parse().map_err(|e| corrupt(format!("line {no}: {e}")))?;
    let (no, seed) = lines.next("seed")?;
    let rng_seed: u64 = parse_num(no, seed)?;
    let (no, mode) = lines.next("normalizer")?;
    let normalizer_mode: NormalizerMode = parse_num(no, mode)?;
    let (no, bounds) = lines.next("duration_bounds")?;
    let d = parse_reals(no, bounds, 2)?;
    let (no, bounds) = lines.next("last_run_bounds")?;
    let (earliest, latest) = bounds
        .split_once(' ')
        .ok_or_else(|| corrupt(format!("line {no}: expected two bounds")))?;
    let normalizer = Normalizer {
        duration_min: d[0],
        duration_max: d[1],
        earliest: parse_ts(no, earliest.trim())?,
        latest: parse_ts(no, latest.trim())?,
    };

    if dims.len() < 2 {
        return Err(corrupt(format!("dims {dims:?} describe no layers")));
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (i, pair) in dims.windows(2).enumerate() {
        let (inputs, outputs) = (pair[0], pair[1]);
        let (no, idx) = lines.next("layer")?;
        if parse_num::<usize>(no, idx)? != i {
            return Err(corrupt(format!("line {no}: layers out of order")));
        }
        let mut weights = Vec::with_capacity(inputs * outputs);
        for _ in 0..inputs {
            let (no, row) = lines.next("w")?;
            weights.extend(parse_reals(no, row, outputs)?);
        }
        let (no, bias) = lines.next("b")?;
        let bias = parse_reals(no, bias, outputs)?;
        layers.push(Layer {
            inputs,
            outputs,
            weights,
            bias,
        });
    }
    lines.next("end")?;
    let network = Network::from_layers(layers).map_err(|e| corrupt(e.to_string()))?;
    if window_len + crate::features::DERIVED_FEATURES != network.input_dim() {
        return Err(corrupt(format!(
            "window {window_len} does not match input width {}",
            network.input_dim()
        )));
    }
    Ok(TrainedModel {
        network,
        window_len,
        normalizer,
        normalizer_mode,
        weight_kind,
        rng_seed,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), NetError> {
    fs::write(path, to_text(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, NetError> {
    from_text(&fs::read_to_string(path)?)
}
