//! Model file containers.
//!
//! Both containers share one layout:
//!
//! ```text
//! magic      4 bytes ASCII           "LST1" (float) / "LSQ1" (quantized)
//! version    u32 little-endian       currently 1
//! spec_len   u32 little-endian
//! spec       spec_len bytes          ModelSpec as UTF-8 JSON
//! payload    parameter block         f64 LE words / i16 LE words,
//!                                    tensors in stage order, row-major
//! crc        u32 little-endian       CRC-32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Real;
use crate::model::{ModelParams, ModelSpec};

pub const MODEL_MAGIC: [u8; 4] = *b"LST1";
pub const QUANTIZED_MAGIC: [u8; 4] = *b"LSQ1";
pub const FORMAT_VERSION: u32 = 1;

/// CRC-32 (IEEE 802.3, reflected, polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    const TABLE: [u32; 256] = {
        let mut table = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 != 0 {
                    0xEDB8_8320 ^ (c >> 1)
                } else {
                    c >> 1
                };
                k += 1;
            }
            table[i] = c;
            i += 1;
        }
        table
    };
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = TABLE[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    !crc
}

fn encode_container(magic: [u8; 4], spec: &ModelSpec, payload: &[u8]) -> Result<Vec<u8>> {
    let spec_json = serde_json::to_vec(spec)
        .map_err(|e| Error::Invalid(format!("spec serialization failed: {e}")))?;
    let mut out = Vec::with_capacity(12 + spec_json.len() + payload.len() + 4);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec_json);
    out.extend_from_slice(payload);
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Verify trailer and header, returning the decoded spec and raw payload.
///
/// The CRC runs first so any truncation or corruption anywhere in the file
/// surfaces as `ChecksumMismatch` before the body is interpreted.
fn decode_container(bytes: &[u8], magic: [u8; 4]) -> Result<(ModelSpec, &[u8])> {
    if bytes.len() < 4 {
        return Err(Error::ChecksumMismatch);
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32(body) != stored {
        return Err(Error::ChecksumMismatch);
    }
    if body.len() < 12 {
        return Err(Error::Truncated {
            need: 12,
            have: body.len(),
        });
    }
    if body[0..4] != magic {
        return Err(Error::BadMagic {
            expected: u32::from_be_bytes(magic),
            found: u32::from_be_bytes(body[0..4].try_into().unwrap()),
        });
    }
    let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch(version));
    }
    let spec_len = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
    let need = 12 + spec_len;
    if body.len() < need {
        return Err(Error::Truncated {
            need,
            have: body.len(),
        });
    }
    let spec: ModelSpec = serde_json::from_slice(&body[12..need])
        .map_err(|e| Error::Invalid(format!("bad spec block: {e}")))?;
    spec.validate()?;
    Ok((spec, &body[need..]))
}

/// Write `params` for `spec` as a float container. Values are widened to
/// 64-bit on disk, so a 32-bit model round-trips bit-exactly too.
pub fn save_model<T: Real>(spec: &ModelSpec, params: &ModelParams<T>, path: &Path) -> Result<()> {
    params.congruent_with(spec)?;
    let mut payload = Vec::with_capacity(params.value_count() * 8);
    for tensor in params.tensors() {
        for &v in tensor {
            payload.extend_from_slice(&v.to_f64().to_le_bytes());
        }
    }
    fs::write(path, encode_container(MODEL_MAGIC, spec, &payload)?)?;
    Ok(())
}

/// Read a float container back into spec + parameters.
pub fn load_model<T: Real>(path: &Path) -> Result<(ModelSpec, ModelParams<T>)> {
    let bytes = fs::read(path)?;
    let (spec, payload) = decode_container(&bytes, MODEL_MAGIC)?;
    let mut params = ModelParams::<T>::zeros(&spec)?;
    let expect = params.value_count() * 8;
    if payload.len() != expect {
        return Err(Error::Truncated {
            need: expect,
            have: payload.len(),
        });
    }
    let mut words = payload.chunks_exact(8);
    for tensor in params.tensors_mut() {
        for v in tensor {
            let w = words.next().expect("length checked above");
            *v = T::from_f64(f64::from_le_bytes(w.try_into().unwrap()));
        }
    }
    Ok((spec, params))
}

/// Write a quantized parameter block (raw Q5.7 words in the same stage
/// order as the float container) under the "LSQ1" magic.
pub fn save_quantized_words(spec: &ModelSpec, words: &[i16], path: &Path) -> Result<()> {
    let mut payload = Vec::with_capacity(words.len() * 2);
    for &w in words {
        payload.extend_from_slice(&w.to_le_bytes());
    }
    fs::write(path, encode_container(QUANTIZED_MAGIC, spec, &payload)?)?;
    Ok(())
}

/// Read a quantized container back into spec + raw words.
pub fn load_quantized_words(path: &Path) -> Result<(ModelSpec, Vec<i16>)> {
    let bytes = fs::read(path)?;
    let (spec, payload) = decode_container(&bytes, QUANTIZED_MAGIC)?;
    let expect = spec.param_count()? * 2;
    if payload.len() != expect {
        return Err(Error::Truncated {
            need: expect,
            have: payload.len(),
        });
    }
    let words = payload
        .chunks_exact(2)
        .map(|w| i16::from_le_bytes(w.try_into().unwrap()))
        .collect();
    Ok((spec, words))
}
