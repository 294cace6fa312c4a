//! Code database files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "UTHC" | version u32 | bit_width u32 | count u64
//! count × (id u64, ceil(bit_width / 64) × u64 words)
//! has_labels u8 | if 1: count × label u32
//! ```

use std::fs;
use std::path::Path;

use uth_core::{CodeDatabase, HashCode};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"UTHC";
pub const VERSION: u32 = 1;

pub fn encode_codes(db: &CodeDatabase) -> Vec<u8> {
    let words = db.bit_width().div_ceil(64);
    let mut out = Vec::with_capacity(21 + db.len() * (8 + 8 * words + 4));
    out.extend_from_slice(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend((db.bit_width() as u32).to_le_bytes());
    out.extend((db.len() as u64).to_le_bytes());
    for (code, id) in db.codes().iter().zip(db.ids()) {
        out.extend(id.to_le_bytes());
        for w in code.words() {
            out.extend(w.to_le_bytes());
        }
    }
    match db.labels() {
        Some(labels) => {
            out.push(1);
            for l in labels {
                out.extend(l.to_le_bytes());
            }
        }
        None => out.push(0),
    }
    out
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::format("code file truncated"))?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn u32_at(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, pos, 4)?.try_into().unwrap()))
}

fn u64_at(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    Ok(u64::from_le_bytes(take(bytes, pos, 8)?.try_into().unwrap()))
}

pub fn decode_codes(bytes: &[u8]) -> Result<CodeDatabase> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != MAGIC {
        return Err(Error::format("not a code file (bad magic)"));
    }
    let version = u32_at(bytes, &mut pos)?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported code file version {version}")));
    }
    let bit_width = u32_at(bytes, &mut pos)? as usize;
    if bit_width == 0 {
        return Err(Error::format("zero bit width"));
    }
    let count = u64_at(bytes, &mut pos)? as usize;
    let words = bit_width.div_ceil(64);
    // bound the allocation by what the file can actually hold
    if count.saturating_mul(8 + 8 * words) > bytes.len() {
        return Err(Error::format("code file truncated"));
    }
    let mut codes = Vec::with_capacity(count);
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        ids.push(u64_at(bytes, &mut pos)?);
        let w = (0..words).map(|_| u64_at(bytes, &mut pos)).collect::<Result<Vec<_>>>()?;
        codes.push(HashCode::from_words(w, bit_width).map_err(|e| Error::format(e.to_string()))?);
    }
    let labels = match take(bytes, &mut pos, 1)?[0] {
        0 => None,
        1 => Some((0..count).map(|_| u32_at(bytes, &mut pos)).collect::<Result<Vec<_>>>()?),
        f => return Err(Error::format(format!("bad label flag {f}"))),
    };
    if pos != bytes.len() {
        return Err(Error::format(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(CodeDatabase::new(bit_width, codes, ids, labels)?)
}

pub fn save_codes(db: &CodeDatabase, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_codes(db))?;
    Ok(())
}

pub fn load_codes(path: impl AsRef<Path>) -> Result<CodeDatabase> {
    decode_codes(&fs::read(path)?)
}
