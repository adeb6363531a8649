//! Encoder checkpoints.
//!
//! Layout (little-endian): `"UCRW"`, version `u32`, layer count `u32`, then
//! for every layer `fan_in u32`, `fan_out u32`, `fan_in × fan_out` weights as
//! `f32` in row-major order (input index major), and `fan_out` biases as `f32`.
//! Parameters are narrowed to `f32` on write.

use std::path::Path;

use ucr_core::encoder::{EncoderParams, Layer};
use ucr_core::Matrix;

use crate::binary::{read_file, write_file, Reader, Writer};
use crate::error::Result;

pub const MAGIC: &[u8; 4] = b"UCRW";
pub const VERSION: u32 = 1;

pub fn encode(params: &EncoderParams) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.len(params.layers.len());
    for layer in &params.layers {
        w.len(layer.fan_in());
        w.len(layer.fan_out());
        for &x in layer.weights.as_slice() {
            w.f32(x as f32);
        }
        for &b in &layer.bias {
            w.f32(b as f32);
        }
    }
    w.buf
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<EncoderParams> {
    let mut r = Reader::open(path, bytes, MAGIC, VERSION)?;
    let count = r.len()?;
    if count == 0 {
        return Err(r.malformed("checkpoint has no layers"));
    }
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let fan_in = r.len()?;
        let fan_out = r.len()?;
        let n = fan_in
            .checked_mul(fan_out)
            .ok_or_else(|| r.malformed("layer size overflow"))?;
        let weights = r.f32s(n)?.into_iter().map(f64::from).collect();
        let bias = r.f32s(fan_out)?.into_iter().map(f64::from).collect();
        layers.push(Layer {
            weights: Matrix::from_vec(fan_in, fan_out, weights),
            bias,
        });
    }
    if layers.windows(2).any(|w| w[0].fan_out() != w[1].fan_in()) {
        return Err(r.malformed("consecutive layer widths disagree"));
    }
    r.finish()?;
    Ok(EncoderParams { layers })
}

pub fn write_checkpoint(params: &EncoderParams, path: &Path) -> Result<()> {
    write_file(path, &encode(params))
}

pub fn read_checkpoint(path: &Path) -> Result<EncoderParams> {
    decode(path, &read_file(path)?)
}
