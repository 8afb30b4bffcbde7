//! `FTCK` checkpoint format.
//!
//! Layout (integers little-endian): magic `FTCK`, u16 version, u8 family,
//! u32 input_dim, u32 output_dim, u8 hidden count, u32 per hidden entry,
//! u64 parameter count, parameters as f32 in build order, then batch-norm
//! running means/variances as f32.

use super::network::{build_model, Model};
use super::spec::{count_parameters, Family, ModelSpec, DEFAULT_DROPOUT};
use crate::bytes::{put_f32_block, ByteReader, Truncation};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FTCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn save_checkpoint(model: &Model) -> Vec<u8> {
    let spec = model.spec();
    let params = model.flat_params();
    let stats = model.flat_running_stats();
    let mut out = Vec::with_capacity(32 + 4 * (params.len() + stats.len()));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(spec.family.code());
    out.extend_from_slice(&(spec.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(spec.output_dim as u32).to_le_bytes());
    out.push(spec.hidden.len() as u8);
    for &h in &spec.hidden {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    put_f32_block(&mut out, params);
    put_f32_block(&mut out, stats);
    out
}

/// Decodes a checkpoint. The model's dropout rate is not stored and comes
/// back as the default; optimizer moments start fresh.
pub fn load_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = ByteReader::new(bytes, Truncation::Corruption);
    let magic = r.take(4, "magic").map_err(|_| Error::format(0, "too short for magic"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}")));
    }
    let version = r.u16_le("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let family_code = r.u8("family")?;
    let family = Family::from_code(family_code)
        .ok_or_else(|| Error::format(6, format!("unknown family code {family_code}")))?;
    let input_dim = r.u32_le("input_dim")? as usize;
    let output_dim = r.u32_le("output_dim")? as usize;
    let n_hidden = r.u8("hidden count")? as usize;
    let hidden = (0..n_hidden)
        .map(|_| r.u32_le("hidden size").map(|h| h as usize))
        .collect::<Result<Vec<_>>>()?;
    let spec = ModelSpec {
        family,
        input_dim,
        output_dim,
        hidden,
        dropout_p: DEFAULT_DROPOUT,
    };
    spec.validate()
        .map_err(|e| Error::format(r.position(), format!("invalid architecture: {e}")))?;
    // Every width sizes at least one weight matrix, so none can exceed the
    // number of f32 values left; this also keeps the counts below from
    // overflowing.
    let capacity = r.remaining() / 4;
    let widest = input_dim.max(output_dim).max(spec.hidden.iter().copied().max().unwrap_or(0));
    let residual = match family {
        Family::DeepResMlp => spec.hidden[1] as u128 * (spec.hidden[0] as u128).pow(2),
        _ => 0,
    };
    if widest > capacity || residual > capacity as u128 {
        return Err(Error::corrupt(r.position(), "architecture larger than the payload"));
    }
    let count_pos = r.position();
    let declared = r.u64_le("parameter count")?;
    let expected = count_parameters(&spec);
    if declared != expected as u64 {
        return Err(Error::corrupt(
            count_pos,
            format!("declared {declared} parameters, architecture has {expected}"),
        ));
    }
    let params = r.f32_block(expected, "parameters")?;
    let n_stats = 2 * spec.norm_widths().iter().sum::<usize>();
    let stats = r.f32_block(n_stats, "running stats")?;
    if r.remaining() != 0 {
        return Err(Error::corrupt(r.position(), format!("{} trailing bytes", r.remaining())));
    }
    let mut model = build_model(&spec, 0)?;
    model.load_flat_params(&params)?;
    model.load_flat_running_stats(&stats)?;
    model.reset_optimizer();
    Ok(model)
}
