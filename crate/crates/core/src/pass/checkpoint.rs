//! `PASSMODL` checkpoint files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "PASSMODL" | u32 version = 1
//! u32 config_len | config as JSON (utf-8)
//! generator net | classifier net
//! u32 ensemble_count
//! per ensemble: u16 name_len | name | f64 lambda | u32 K | K nets
//!
//! net: u32 layer_count, then per layer
//!   u32 in | u32 out | u8 activation (0 identity, 1 prelu, 2 selu, 3 softmax)
//!   out·in f64 weights (row-major) | out f64 bias | out f64 slopes (prelu only)
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{
    Discriminator, Ensemble, Generator, IdentityClassifier, PassConfig, PassError, PassModel,
};
use crate::nn::{Activation, DenseLayer, Mlp};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PASSMODL";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_net(out: &mut Vec<u8>, net: &Mlp) {
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for l in net.layers() {
        out.extend_from_slice(&(l.input_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(l.output_dim() as u32).to_le_bytes());
        let code: u8 = match l.activation {
            Activation::Identity => 0,
            Activation::PRelu { .. } => 1,
            Activation::Selu => 2,
            Activation::Softmax => 3,
        };
        out.push(code);
        for v in l.weights.iter().chain(l.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Activation::PRelu { alpha } = &l.activation {
            for v in alpha {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

pub fn encode_checkpoint(model: &PassModel, config: &PassConfig) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let json = serde_json::to_vec(config).expect("config serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    put_net(&mut out, model.generator.net());
    put_net(&mut out, model.classifier.net());
    out.extend_from_slice(&(model.ensembles.len() as u32).to_le_bytes());
    for e in &model.ensembles {
        out.extend_from_slice(&(e.attribute.len() as u16).to_le_bytes());
        out.extend_from_slice(e.attribute.as_bytes());
        out.extend_from_slice(&e.lambda.to_le_bytes());
        out.extend_from_slice(&(e.members.len() as u32).to_le_bytes());
        for m in &e.members {
            put_net(&mut out, m.net());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], PassError> {
        let available = self.bytes.len() - self.pos;
        if len > available {
            return Err(PassError::Checkpoint(format!(
                "truncated: needed {len} bytes at offset {}, {available} available",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PassError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, PassError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, PassError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>, PassError> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| PassError::Checkpoint("layer too large".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn net(&mut self) -> Result<Mlp, PassError> {
        let count = self.u32()?;
        let mut layers = Vec::new();
        for _ in 0..count {
            let input = self.u32()? as usize;
            let output = self.u32()? as usize;
            let code = self.u8()?;
            let weights = self.f64s(input.saturating_mul(output))?;
            let bias = self.f64s(output)?;
            let activation = match code {
                0 => Activation::Identity,
                1 => Activation::PRelu {
                    alpha: Array1::from(self.f64s(output)?),
                },
                2 => Activation::Selu,
                3 => Activation::Softmax,
                other => {
                    return Err(PassError::Checkpoint(format!(
                        "unknown activation code {other}"
                    )))
                }
            };
            let weights = Array2::from_shape_vec((output, input), weights)
                .map_err(|e| PassError::Checkpoint(e.to_string()))?;
            layers.push(DenseLayer::new(weights, Array1::from(bias), activation)?);
        }
        Ok(Mlp::new(layers)?)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(PassModel, PassConfig), PassError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).ok() != Some(&CHECKPOINT_MAGIC[..]) {
        return Err(PassError::Checkpoint("bad magic: expected \"PASSMODL\"".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(PassError::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let len = r.u32()? as usize;
    let config: PassConfig = serde_json::from_slice(r.take(len)?)
        .map_err(|e| PassError::Checkpoint(format!("config: {e}")))?;
    let generator = Generator::from_net(r.net()?)?;
    let classifier = IdentityClassifier::from_net(r.net()?)?;
    let count = r.u32()?;
    let mut ensembles = Vec::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let attribute = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| PassError::Checkpoint("attribute name is not utf-8".into()))?;
        let lambda = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let k = r.u32()?;
        let mut members = Vec::new();
        for _ in 0..k {
            members.push(Discriminator::from_net(r.net()?)?);
        }
        ensembles.push(Ensemble {
            attribute,
            lambda,
            members,
        });
    }
    if r.pos != bytes.len() {
        return Err(PassError::Checkpoint(format!(
            "{} unexpected trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let model = PassModel {
        generator,
        classifier,
        ensembles,
    };
    let chained = model.classifier.net().input_dim() == model.generator.output_dim()
        && model.ensembles.iter().all(|e| {
            e.members
                .iter()
                .all(|m| m.net().input_dim() == model.generator.output_dim())
        });
    if !chained {
        return Err(PassError::Checkpoint(
            "component widths do not match the generator output".into(),
        ));
    }
    Ok((model, config))
}

pub fn write_checkpoint(
    path: &Path,
    model: &PassModel,
    config: &PassConfig,
) -> Result<(), PassError> {
    std::fs::write(path, encode_checkpoint(model, config)).map_err(|source| PassError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<(PassModel, PassConfig), PassError> {
    let bytes = std::fs::read(path).map_err(|source| PassError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
