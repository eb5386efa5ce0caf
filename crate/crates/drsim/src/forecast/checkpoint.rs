//! Binary model checkpoints.
//!
//! Layout: an 8-byte magic string, a little-endian `u32` version, the layer
//! count, per-layer `(input_width, hidden)` pairs, lookback, horizon and
//! the two normalization constants; then every parameter as little-endian
//! `f64` in canonical order — per layer `W_i W_f W_g W_o`, `U_i U_f U_g
//! U_o`, `b_i b_f b_g b_o` (matrices row-major), finally the head weights
//! and head bias.

use std::fs;
use std::path::Path;

use super::lstm::{ForecastModel, LstmLayerParams, ModelConfig};
use super::norm::NormParams;
use super::ForecastError;

const MAGIC: &[u8; 8] = b"DRSMLSTM";
const VERSION: u32 = 1;

pub fn model_to_bytes(model: &ForecastModel) -> Vec<u8> {
    let config = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        out.extend_from_slice(&(layer.input_width as u32).to_le_bytes());
        out.extend_from_slice(&(layer.hidden as u32).to_le_bytes());
    }
    out.extend_from_slice(&(config.lookback as u32).to_le_bytes());
    out.extend_from_slice(&(config.horizon as u32).to_le_bytes());
    out.extend_from_slice(&model.norm().min.to_le_bytes());
    out.extend_from_slice(&model.norm().max.to_le_bytes());
    for value in model.flatten() {
        out.extend_from_slice(&value.to_le_bytes());
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ForecastModel, ForecastError> {
    let mut reader = Reader { bytes, offset: 0 };
    let magic = reader.take(8)?;
    if magic != MAGIC {
        return Err(ForecastError::ModelLoad {
            reason: "bad magic string; not a model checkpoint".into(),
        });
    }
    let version = reader.u32()?;
    if version != VERSION {
        return Err(ForecastError::ModelLoad {
            reason: format!("unsupported checkpoint version {version}"),
        });
    }
    let layer_count = reader.u32()? as usize;
    if layer_count == 0 || layer_count > 64 {
        return Err(ForecastError::ModelLoad {
            reason: format!("implausible layer count {layer_count}"),
        });
    }
    let mut widths = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let input_width = reader.u32()? as usize;
        let hidden = reader.u32()? as usize;
        widths.push((input_width, hidden));
    }
    let lookback = reader.u32()? as usize;
    let horizon = reader.u32()? as usize;
    let min = reader.f64()?;
    let max = reader.f64()?;
    let norm = NormParams::new(min, max).map_err(|_| ForecastError::ModelLoad {
        reason: format!("degenerate normalization range [{min}, {max}]"),
    })?;

    let mut layers = Vec::with_capacity(layer_count);
    for &(input_width, hidden) in &widths {
        let mut layer = LstmLayerParams::zeros(input_width, hidden);
        for g in 0..4 {
            reader.f64_into(&mut layer.w[g])?;
        }
        for g in 0..4 {
            reader.f64_into(&mut layer.u[g])?;
        }
        for g in 0..4 {
            reader.f64_into(&mut layer.b[g])?;
        }
        layers.push(layer);
    }
    let last_hidden = widths[layer_count - 1].1;
    let mut head_w = vec![0.0; last_hidden];
    reader.f64_into(&mut head_w)?;
    let head_b = reader.f64()?;
    if reader.offset != bytes.len() {
        return Err(ForecastError::ModelLoad {
            reason: format!("{} trailing bytes", bytes.len() - reader.offset),
        });
    }

    let config = ModelConfig::new(lookback, horizon, widths.iter().map(|w| w.1).collect());
    ForecastModel::from_parts(layers, head_w, head_b, norm, config).map_err(|e| {
        ForecastError::ModelLoad {
            reason: e.to_string(),
        }
    })
}

pub fn save_model(model: &ForecastModel, path: &Path) -> Result<(), ForecastError> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ForecastModel, ForecastError> {
    let bytes = fs::read(path).map_err(|e| ForecastError::ModelLoad {
        reason: format!("{}: {e}", path.display()),
    })?;
    model_from_bytes(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ForecastError> {
        if self.offset + n > self.bytes.len() {
            return Err(ForecastError::ModelLoad {
                reason: "checkpoint truncated".into(),
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ForecastError> {
        let raw = self.take(4)?;
        Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ForecastError> {
        let raw = self.take(8)?;
        Ok(f64::from_le_bytes(raw.try_into().expect("8 bytes")))
    }

    fn f64_into(&mut self, dst: &mut [f64]) -> Result<(), ForecastError> {
        for slot in dst {
            *slot = self.f64()?;
        }
        Ok(())
    }
}
