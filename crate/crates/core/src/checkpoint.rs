//! Binary checkpoint format.
//!
//! All integers are little-endian `u32`; all values little-endian IEEE-754 `f32`.
//!
//! ```text
//! magic          8 bytes   "QACNNCKP"
//! version        u32       1
//! header_len     u32       H
//! header         H bytes   UTF-8 JSON {"config": {...}, "variant": "full"}
//! tensor_count   u32
//! per tensor, in canonical bank order:
//!   name_len     u32
//!   name         UTF-8 bytes, e.g. "d3.word_att.kernels"
//!   rank         u32
//!   extents      rank × u32
//!   values       product(extents) × f32, row-major
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{QacnnError, Result};
use crate::model::{layout, Model, Variant};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"QACNNCKP";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    variant: Variant,
}

fn corrupt(msg: impl Into<String>) -> QacnnError {
    QacnnError::Checkpoint(msg.into())
}

pub fn to_bytes(model: &Model<f32>) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        variant: model.variant,
    })
    .expect("header serializes");
    let entries = model.params.entries();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    // Writes into a Vec cannot fail.
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    out.write_u32::<LittleEndian>(header.len() as u32).unwrap();
    out.extend_from_slice(&header);
    out.write_u32::<LittleEndian>(entries.len() as u32).unwrap();
    for (name, t) in entries {
        out.write_u32::<LittleEndian>(name.len() as u32).unwrap();
        out.extend_from_slice(name.as_bytes());
        out.write_u32::<LittleEndian>(t.rank() as u32).unwrap();
        for &e in t.shape() {
            out.write_u32::<LittleEndian>(e as u32).unwrap();
        }
        for &v in t.data() {
            out.write_f32::<LittleEndian>(v).unwrap();
        }
    }
    out
}

fn read_u32(cur: &mut Cursor<&[u8]>, what: &str) -> Result<u32> {
    cur.read_u32::<LittleEndian>()
        .map_err(|_| corrupt(format!("truncated while reading {what}")))
}

fn read_bytes(cur: &mut Cursor<&[u8]>, len: usize, what: &str) -> Result<Vec<u8>> {
    let remaining = cur.get_ref().len() - cur.position() as usize;
    if len > remaining {
        return Err(corrupt(format!("truncated while reading {what}")));
    }
    let mut buf = vec![0; len];
    cur.read_exact(&mut buf)
        .map_err(|_| corrupt(format!("truncated while reading {what}")))?;
    Ok(buf)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model<f32>> {
    let mut cur = Cursor::new(bytes);
    if read_bytes(&mut cur, 8, "magic")? != MAGIC {
        return Err(corrupt("not a checkpoint (bad magic)"));
    }
    let version = read_u32(&mut cur, "version")?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let header_len = read_u32(&mut cur, "header length")? as usize;
    let header: Header = serde_json::from_slice(&read_bytes(&mut cur, header_len, "header")?)
        .map_err(|e| corrupt(format!("bad header: {e}")))?;
    header.config.validate()?;

    let expected = layout(&header.config, header.variant);
    let expected_names: Vec<String> = expected.entries().into_iter().map(|(n, _)| n).collect();
    let count = read_u32(&mut cur, "tensor count")? as usize;
    if count != expected_names.len() {
        return Err(corrupt(format!(
            "{count} tensors stored, {} expected for this configuration",
            expected_names.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for want in &expected_names {
        let name_len = read_u32(&mut cur, "name length")? as usize;
        let name = String::from_utf8(read_bytes(&mut cur, name_len, "name")?)
            .map_err(|_| corrupt("tensor name is not UTF-8"))?;
        if &name != want {
            return Err(corrupt(format!("found tensor `{name}` where `{want}` was expected")));
        }
        let rank = read_u32(&mut cur, "rank")? as usize;
        let shape = (0..rank)
            .map(|_| read_u32(&mut cur, "extent").map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = read_bytes(&mut cur, len * 4, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    if (cur.position() as usize) != bytes.len() {
        return Err(corrupt("trailing bytes after last tensor"));
    }
    let mut it = tensors.into_iter();
    let params = expected.map(|_| it.next().expect("counted above"));
    Model::from_params(header.config, header.variant, params)
}

pub fn save(model: &Model<f32>, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|e| QacnnError::io(path, e))
}

pub fn load(path: &Path) -> Result<Model<f32>> {
    let bytes = fs::read(path).map_err(|e| QacnnError::io(path, e))?;
    from_bytes(&bytes)
}
