//! Binary container for score maps and label masks.
//!
//! Layout (little-endian):
//!   magic  b"SMAP"
//!   version u16 (currently 1)
//!   payload kind u8: 0 = f32 score planes, 1 = u8 class ids
//!   width u16, height u16, class count u8
//!   label table: per class, u16 byte length + UTF-8 bytes
//!   payload: class-count f32 planes (row-major) or one u8 id plane

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::perception::{LabelMask, PerceptionError, ScoreMap};

pub const MAGIC: &[u8; 4] = b"SMAP";
pub const VERSION: u16 = 1;

const KIND_SCORES: u8 = 0;
const KIND_IDS: u8 = 1;

#[derive(Debug, Error)]
pub enum SmapError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic or truncated header")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("expected payload kind {expected}, found {found}")]
    WrongKind { expected: u8, found: u8 },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Invalid(#[from] PerceptionError),
}

fn write_header<W: Write>(
    w: &mut W,
    kind: u8,
    width: usize,
    height: usize,
    labels: &[String],
) -> Result<(), SmapError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[kind])?;
    w.write_all(&(width as u16).to_le_bytes())?;
    w.write_all(&(height as u16).to_le_bytes())?;
    w.write_all(&[labels.len() as u8])?;
    for l in labels {
        let bytes = l.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    Ok(())
}

struct Header {
    kind: u8,
    width: usize,
    height: usize,
    labels: Vec<String>,
}

fn read_header<R: Read>(r: &mut R) -> Result<Header, SmapError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| SmapError::BadMagic)?;
    if &magic != MAGIC {
        return Err(SmapError::BadMagic);
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != VERSION {
        return Err(SmapError::UnsupportedVersion(version));
    }
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    let kind = b[0];
    r.read_exact(&mut buf2)?;
    let width = u16::from_le_bytes(buf2) as usize;
    r.read_exact(&mut buf2)?;
    let height = u16::from_le_bytes(buf2) as usize;
    r.read_exact(&mut b)?;
    let classes = b[0] as usize;
    let mut labels = Vec::with_capacity(classes);
    for _ in 0..classes {
        r.read_exact(&mut buf2)?;
        let len = u16::from_le_bytes(buf2) as usize;
        let mut s = vec![0u8; len];
        r.read_exact(&mut s)?;
        labels.push(String::from_utf8(s).map_err(|e| SmapError::Corrupt(e.to_string()))?);
    }
    Ok(Header { kind, width, height, labels })
}

pub fn write_score_map<W: Write>(w: &mut W, map: &ScoreMap) -> Result<(), SmapError> {
    write_header(w, KIND_SCORES, map.width, map.height, &map.labels)?;
    for v in &map.scores {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_score_map<R: Read>(r: &mut R) -> Result<ScoreMap, SmapError> {
    let h = read_header(r)?;
    if h.kind != KIND_SCORES {
        return Err(SmapError::WrongKind { expected: KIND_SCORES, found: h.kind });
    }
    let n = h.labels.len() * h.width * h.height;
    let mut scores = Vec::with_capacity(n);
    let mut buf = [0u8; 4];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        scores.push(f32::from_le_bytes(buf));
    }
    Ok(ScoreMap::new(h.width, h.height, h.labels, scores)?)
}

pub fn write_label_mask<W: Write>(w: &mut W, mask: &LabelMask) -> Result<(), SmapError> {
    write_header(w, KIND_IDS, mask.width, mask.height, &mask.labels)?;
    w.write_all(&mask.class_ids)?;
    Ok(())
}

pub fn read_label_mask<R: Read>(r: &mut R) -> Result<LabelMask, SmapError> {
    let h = read_header(r)?;
    if h.kind != KIND_IDS {
        return Err(SmapError::WrongKind { expected: KIND_IDS, found: h.kind });
    }
    let mut class_ids = vec![0u8; h.width * h.height];
    r.read_exact(&mut class_ids)?;
    for &id in &class_ids {
        if id as usize >= h.labels.len() {
            return Err(SmapError::Corrupt(format!("class id {id} out of range")));
        }
    }
    Ok(LabelMask { width: h.width, height: h.height, labels: h.labels, class_ids })
}

pub fn load_label_mask(path: &Path) -> Result<LabelMask, SmapError> {
    read_label_mask(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_label_mask(path: &Path, mask: &LabelMask) -> Result<(), SmapError> {
    write_label_mask(&mut std::io::BufWriter::new(std::fs::File::create(path)?), mask)
}
