//! Model file format.
//!
//! ```text
//! magic    8 bytes  "SITEMODL"
//! version  u32 LE   1
//! hlen     u64 LE   length of the JSON header
//! header   hlen     mode, seed, objective names and partition, scalers,
//!                   loss weights, layer shapes and activations
//! params   f64 LE   per layer (stage 1 first): weights row-major, then bias
//! sha256   32 bytes over everything above
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{ConcModel, LossWeights, PredictorMode, Standardizer};
use super::network::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SITEMODL";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct Header {
    mode: PredictorMode,
    seed: u64,
    objective_names: Vec<String>,
    yl_cols: Vec<usize>,
    yb_cols: Vec<usize>,
    x_scaler: Standardizer,
    yl_scaler: Standardizer,
    loss_weights: LossWeights,
    stage1: Option<Vec<LayerShape>>,
    stage2: Vec<LayerShape>,
}

fn shapes(net: &Mlp) -> Vec<LayerShape> {
    net.layers
        .iter()
        .map(|l| LayerShape {
            inputs: l.inputs,
            outputs: l.outputs,
            activation: l.activation,
        })
        .collect()
}

pub fn encode_model(model: &ConcModel) -> Result<Vec<u8>> {
    let header = Header {
        mode: model.mode,
        seed: model.seed,
        objective_names: model.objective_names.clone(),
        yl_cols: model.yl_cols.clone(),
        yb_cols: model.yb_cols.clone(),
        x_scaler: model.x_scaler.clone(),
        yl_scaler: model.yl_scaler.clone(),
        loss_weights: model.loss_weights,
        stage1: model.stage1.as_ref().map(shapes),
        stage2: shapes(&model.stage2),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(json.len() + 8 * model.parameter_count() + 52);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for block in model.parameters() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

pub fn decode_model(bytes: &[u8]) -> Result<ConcModel> {
    if bytes.len() < 8 + 4 + 8 + 32 || &bytes[..8] != MAGIC {
        return Err(format_err("not a model file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(format_err("checksum mismatch"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(format_err(format!("unsupported model version {version}")));
    }
    let hlen = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(hlen)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| format_err("truncated header"))?;
    let header: Header = serde_json::from_slice(&body[20..header_end])?;

    let mut params = body[header_end..].chunks_exact(8);
    if !params.remainder().is_empty() {
        return Err(format_err("parameter block is not whole f64 values"));
    }
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = params
            .by_ref()
            .take(n)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if v.len() != n {
            return Err(format_err("truncated parameters"));
        }
        Ok(v)
    };
    let mut build = |shapes: &[LayerShape]| -> Result<Mlp> {
        let layers = shapes
            .iter()
            .map(|s| {
                Ok(Dense {
                    inputs: s.inputs,
                    outputs: s.outputs,
                    weights: take(s.inputs * s.outputs)?,
                    bias: take(s.outputs)?,
                    activation: s.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers).map_err(|e| format_err(e.to_string()))
    };
    let stage1 = header.stage1.as_deref().map(&mut build).transpose()?;
    let stage2 = build(&header.stage2)?;
    if params.next().is_some() {
        return Err(format_err("trailing parameters"));
    }

    let m = header.objective_names.len();
    if stage2.input_dim() != 4 + m || stage2.output_dim() != 1 + m {
        return Err(format_err(
            "second stage does not match the objective count",
        ));
    }
    if let Some(s1) = &stage1 {
        if s1.input_dim() != 4 || s1.output_dim() != m {
            return Err(format_err("first stage does not match the objective count"));
        }
    }
    Ok(ConcModel {
        mode: header.mode,
        seed: header.seed,
        objective_names: header.objective_names,
        yl_cols: header.yl_cols,
        yb_cols: header.yb_cols,
        x_scaler: header.x_scaler,
        yl_scaler: header.yl_scaler,
        stage1,
        stage2,
        loss_weights: header.loss_weights,
    })
}

/// Writes via a temporary file and rename.
pub fn save_model(model: &ConcModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ConcModel> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ObjectiveSpec;
    use crate::predictor::model::Architecture;

    fn model(mode: PredictorMode) -> ConcModel {
        let arch = Architecture {
            stage1_hidden: vec![5, 4],
            stage2_hidden: vec![3],
            activation: Activation::Relu,
        };
        ConcModel::new(
            &ObjectiveSpec::anonymous(3),
            mode,
            &arch,
            LossWeights::default(),
            42,
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        for mode in [PredictorMode::Conc, PredictorMode::Lut] {
            let m = model(mode);
            assert_eq!(decode_model(&encode_model(&m).unwrap()).unwrap(), m);
        }
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = encode_model(&model(PredictorMode::Conc)).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(decode_model(&bytes), Err(Error::ModelFormat(_))));
        assert!(decode_model(b"SITEMODL").is_err());
    }
}
