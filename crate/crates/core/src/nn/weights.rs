//! Weights file: `AOIW`, version byte 1, then for every tensor in model
//! order a `u16` name length, the UTF-8 name, a `u8` rank, `u32` dims and
//! raw `f32` values, all little-endian; a CRC32 of everything before it
//! closes the file. Running statistics are stored like parameters.

use std::path::Path;

use crate::error::{Error, Result};

use super::model::{DenseNet, ModelSpec};

const MAGIC: &[u8; 4] = b"AOIW";
const VERSION: u8 = 1;

pub fn encode_weights(model: &DenseNet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    model.visit(&mut |name, t, _| {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Weights(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Overwrites every tensor of `model` from an encoded file.
pub fn decode_weights_into(model: &mut DenseNet, bytes: &[u8]) -> Result<()> {
    if bytes.len() < MAGIC.len() + 1 + 4 {
        return Err(Error::Weights(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Weights("bad magic, not a weights file".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Weights(format!(
            "unsupported version {}, expected {VERSION}",
            bytes[4]
        )));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let mut r = Reader { buf: body, pos: 5 };
    let mut result = Ok(());
    model.visit_mut(&mut |name, t, _| {
        if result.is_err() {
            return;
        }
        result = (|| {
            let len = r.u16("name length")? as usize;
            let found = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::Weights("tensor name is not UTF-8".into()))?;
            if found != name {
                return Err(Error::Weights(format!("expected tensor `{name}`, file has `{found}`")));
            }
            let rank = r.u8("rank")? as usize;
            let dims = (0..rank)
                .map(|_| r.u32("dims").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if dims != t.shape() {
                return Err(Error::ShapeMismatch {
                    name: name.to_string(),
                    expected: t.shape().to_vec(),
                    found: dims,
                });
            }
            let raw = r.take(4 * t.len(), name)?;
            for (v, b) in t.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            }
            Ok(())
        })();
    });
    result?;
    if r.pos != body.len() {
        return Err(Error::Weights(format!(
            "{} unexpected bytes after the last tensor",
            body.len() - r.pos
        )));
    }
    if crc32fast::hash(body) != stored {
        return Err(Error::Weights("checksum mismatch".into()));
    }
    Ok(())
}

pub fn save_weights(model: &DenseNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(model)).map_err(|e| Error::io(path, e))
}

/// Builds a model for `spec` and fills it from `path`.
pub fn load_weights(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<DenseNet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut model = DenseNet::new(spec, 0)?;
    decode_weights_into(&mut model, &bytes).map_err(|e| match e {
        Error::Weights(m) => Error::Weights(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(model)
}
