//! `.rbmodel` files: `RBMODEL1\n`, ASCII header lines describing the input,
//! seed and layer stack, then every weight and bias as little-endian f32 in
//! layer order (weights before biases).
//!
//! ```text
//! RBMODEL1
//! input 64 64 9
//! seed 1
//! layers 13
//! conv 24 5 5 1
//! relu
//! maxpool
//! fc 16
//! softmax
//! params 27426
//! ```

use std::fs;
use std::path::Path;

use super::{LayerKind, LayerSpec, Model, NetError};

const MAGIC: &str = "RBMODEL1";

fn spec_line(s: &LayerSpec) -> String {
    match s.kind {
        LayerKind::Conv => format!("conv {} {} {} {}", s.out, s.kernel.0, s.kernel.1, s.stride),
        LayerKind::FullyConnected => format!("fc {}", s.out),
        other => other.to_string(),
    }
}

fn parse_spec(line: &str) -> Result<LayerSpec, NetError> {
    let bad = || NetError::MalformedModel(format!("bad layer line {line:?}"));
    let mut parts = line.split_whitespace();
    let kind = parts.next().ok_or_else(bad)?;
    let nums: Vec<usize> = parts.map(|t| t.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    Ok(match (kind, nums.as_slice()) {
        ("conv", &[out, kh, kw, stride]) => LayerSpec { stride, ..LayerSpec::conv(out, kh, kw) },
        ("fc", &[out]) => LayerSpec::fc(out),
        ("relu", []) => LayerSpec::relu(),
        ("maxpool", []) => LayerSpec::maxpool(),
        ("softmax", []) => LayerSpec::softmax(),
        _ => return Err(bad()),
    })
}

pub fn encode_model(m: &Model) -> Vec<u8> {
    let [h, w, c] = m.input_shape();
    let mut header = format!("{MAGIC}\ninput {h} {w} {c}\nseed {}\nlayers {}\n", m.rng_seed(), m.layers().len());
    for l in m.layers() {
        header.push_str(&spec_line(&l.spec));
        header.push('\n');
    }
    header.push_str(&format!("params {}\n", m.param_count()));
    let mut out = header.into_bytes();
    for l in m.layers() {
        for &v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<Model, NetError> {
    let bad = |m: &str| NetError::MalformedModel(m.to_string());
    let mut pos = 0usize;
    let mut next_line = || -> Result<&str, NetError> {
        let rest = &bytes[pos.min(bytes.len())..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not ASCII"))
    };
    if next_line()? != MAGIC {
        return Err(bad("missing RBMODEL1 magic"));
    }
    let keyed = |line: &str, key: &str| -> Result<Vec<usize>, NetError> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(NetError::MalformedModel(format!("expected `{key}` line, got {line:?}")));
        }
        parts
            .map(|t| t.parse().map_err(|_| NetError::MalformedModel(format!("bad number in {line:?}"))))
            .collect()
    };
    let input: [usize; 3] = keyed(next_line()?, "input")?.try_into().map_err(|_| bad("input needs 3 dims"))?;
    let seed = match keyed(next_line()?, "seed")?[..] {
        [s] => s as u64,
        _ => return Err(bad("seed needs one value")),
    };
    let count = match keyed(next_line()?, "layers")?[..] {
        [n] => n,
        _ => return Err(bad("layers needs one value")),
    };
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        specs.push(parse_spec(next_line()?)?);
    }
    let params = match keyed(next_line()?, "params")?[..] {
        [n] => n,
        _ => return Err(bad("params needs one value")),
    };
    let mut model = Model::from_specs(input, &specs, seed)?;
    if model.param_count() != params {
        return Err(NetError::MalformedModel(format!(
            "header declares {params} params, layer stack has {}",
            model.param_count()
        )));
    }
    let payload = &bytes[pos..];
    if payload.len() != params * 4 {
        return Err(NetError::MalformedModel(format!(
            "expected {} weight bytes, found {}",
            params * 4,
            payload.len()
        )));
    }
    let mut values = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    for l in model.layers_mut() {
        for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *v = values.next().expect("length checked above");
            if !v.is_finite() {
                return Err(bad("non-finite weight"));
            }
        }
    }
    Ok(model)
}

pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<(), NetError> {
    fs::write(path, encode_model(m))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, NetError> {
    decode_model(&fs::read(path)?)
}
