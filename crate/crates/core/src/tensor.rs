//! Flat binary serialization: tensor files (magic `CUET`) for maps, images,
//! and features, and prior-model files (magic `CUEP`).
//!
//! Both formats are little-endian throughout, with `f64` payloads, and are
//! the bit-exact ground truth next to any PNG preview.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::priors::{ModulationHead, PriorKind, PriorModel};

pub const TENSOR_MAGIC: &[u8; 4] = b"CUET";
pub const MODEL_MAGIC: &[u8; 4] = b"CUEP";
pub const FORMAT_VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes `magic | version | rank | dims | payload` to the stream.
pub fn write_tensor_to(w: &mut impl Write, dims: &[u32], data: &[f64]) -> Result<()> {
    let expected: u64 = dims.iter().map(|&d| d as u64).product();
    if expected != data.len() as u64 {
        return Err(CoreError::argument(format!(
            "payload length {} does not match dims {:?}",
            data.len(),
            dims
        )));
    }
    w.write_all(TENSOR_MAGIC)?;
    write_u32(w, FORMAT_VERSION)?;
    write_u32(w, dims.len() as u32)?;
    for &d in dims {
        write_u32(w, d)?;
    }
    write_f64s(w, data)?;
    Ok(())
}

pub fn read_tensor_from(r: &mut impl Read) -> Result<(Vec<u32>, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(CoreError::format("bad tensor magic"));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(CoreError::format(format!(
            "unsupported tensor version {version}"
        )));
    }
    let rank = read_u32(r)? as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(read_u32(r)?);
    }
    let count: u64 = dims.iter().map(|&d| d as u64).product();
    let data = read_f64s(r, count as usize)?;
    Ok((dims, data))
}

pub fn write_tensor(path: impl AsRef<Path>, dims: &[u32], data: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_tensor_to(&mut w, dims, data)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<(Vec<u32>, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let out = read_tensor_from(&mut r)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(CoreError::format(format!(
            "{} trailing bytes after tensor payload",
            rest.len()
        )));
    }
    Ok(out)
}

fn kind_byte(kind: PriorKind) -> u8 {
    match kind {
        PriorKind::Illumination => 0,
        PriorKind::Noise => 1,
    }
}

/// Model layout: `magic | version | kind byte | head count | patch_size |
/// d_in | d_hidden | d_out | mask_ratio | tensors in declaration order`
/// (encoder weights/bias, decoder weights/bias, then each head's weights
/// and bias).
pub fn save_prior_model(model: &PriorModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MODEL_MAGIC)?;
    write_u32(&mut w, FORMAT_VERSION)?;
    w.write_all(&[kind_byte(model.kind)])?;
    let heads = model.mod_head.iter().count() + model.mod_head_add.iter().count();
    w.write_all(&[heads as u8])?;
    write_u32(&mut w, model.patch_size as u32)?;
    write_u32(&mut w, model.d_in as u32)?;
    write_u32(&mut w, model.d_hidden as u32)?;
    write_u32(&mut w, model.d_out as u32)?;
    w.write_all(&model.mask_ratio.to_le_bytes())?;
    write_f64s(&mut w, &model.w_enc)?;
    write_f64s(&mut w, &model.b_enc)?;
    write_f64s(&mut w, &model.w_dec)?;
    write_f64s(&mut w, &model.b_dec)?;
    for head in model.mod_head.iter().chain(model.mod_head_add.iter()) {
        write_f64s(&mut w, &head.weights)?;
        write_f64s(&mut w, &[head.bias])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_prior_model(path: impl AsRef<Path>) -> Result<PriorModel> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(CoreError::format("bad model magic"));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(CoreError::format(format!(
            "unsupported model version {version}"
        )));
    }
    let mut bytes = [0u8; 2];
    r.read_exact(&mut bytes)?;
    let kind = match bytes[0] {
        0 => PriorKind::Illumination,
        1 => PriorKind::Noise,
        other => return Err(CoreError::format(format!("unknown model kind {other}"))),
    };
    let heads = bytes[1] as usize;
    if (kind == PriorKind::Illumination && !(1..=2).contains(&heads))
        || (kind == PriorKind::Noise && heads != 0)
    {
        return Err(CoreError::format(format!(
            "head count {heads} is inconsistent with the model kind"
        )));
    }
    let patch_size = read_u32(&mut r)? as usize;
    let d_in = read_u32(&mut r)? as usize;
    let d_hidden = read_u32(&mut r)? as usize;
    let d_out = read_u32(&mut r)? as usize;
    if d_in != patch_size * patch_size {
        return Err(CoreError::format("d_in does not match patch_size²"));
    }
    let mut ratio_bytes = [0u8; 8];
    r.read_exact(&mut ratio_bytes)?;
    let mask_ratio = f64::from_le_bytes(ratio_bytes);

    let w_enc = read_f64s(&mut r, d_hidden * d_in)?;
    let b_enc = read_f64s(&mut r, d_hidden)?;
    let w_dec = read_f64s(&mut r, d_out * d_hidden)?;
    let b_dec = read_f64s(&mut r, d_out)?;
    let mut read_head = || -> Result<ModulationHead> {
        let weights = read_f64s(&mut r, d_hidden)?;
        let bias = read_f64s(&mut r, 1)?[0];
        Ok(ModulationHead { weights, bias })
    };
    let mod_head = if heads >= 1 { Some(read_head()?) } else { None };
    let mod_head_add = if heads == 2 { Some(read_head()?) } else { None };

    if !w_enc
        .iter()
        .chain(&b_enc)
        .chain(&w_dec)
        .chain(&b_dec)
        .all(|v| v.is_finite())
    {
        return Err(CoreError::format("model contains non-finite weights"));
    }
    Ok(PriorModel {
        kind,
        patch_size,
        mask_ratio,
        d_in,
        d_hidden,
        d_out,
        w_enc,
        b_enc,
        w_dec,
        b_dec,
        mod_head,
        mod_head_add,
    })
}
