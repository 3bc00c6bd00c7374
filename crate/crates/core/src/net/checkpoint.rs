//! Binary checkpoint format for an [`EncoderStack`].
//!
//! ```text
//! magic      8 bytes  "TRNSCKPT"
//! version    u32 LE   (currently 1)
//! members    u32 LE
//! per member (topology header):
//!   id       u8       index into MEMBER_NAMES
//!   slope    f64 LE
//!   layers   u32 LE
//!   sizes    (layers + 1) × u32 LE
//! per member, per layer (tensors):
//!   weights  out × in f64 LE, row-major
//!   bias     out f64 LE
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::stack::MEMBER_NAMES;
use super::{Dense, EncoderStack, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TRNSCKPT";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(stack: &EncoderStack) -> Vec<u8> {
    let members: Vec<(usize, &Mlp)> =
        stack.members().iter().enumerate().filter_map(|(i, m)| m.map(|m| (i, m))).collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(members.len() as u32).to_le_bytes());
    for &(id, net) in &members {
        out.push(id as u8);
        out.extend_from_slice(&net.slope().to_le_bytes());
        out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
        for s in net.sizes() {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
    }
    for &(_, net) in &members {
        for layer in net.layers() {
            for r in 0..layer.outputs() {
                for c in 0..layer.inputs() {
                    out.extend_from_slice(&layer.weights[(r, c)].to_le_bytes());
                }
            }
            for b in layer.bias.iter() {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Parse("checkpoint truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<EncoderStack> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Parse("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()? as usize;
    if count > MEMBER_NAMES.len() {
        return Err(Error::Parse(format!("checkpoint lists {count} members")));
    }
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let id = r.u8()? as usize;
        if id >= MEMBER_NAMES.len() {
            return Err(Error::Parse(format!("unknown member id {id}")));
        }
        let slope = r.f64()?;
        let layers = r.u32()? as usize;
        let sizes = (0..=layers).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
        headers.push((id, slope, sizes));
    }
    let mut members: [Option<Mlp>; 6] = Default::default();
    for (id, slope, sizes) in headers {
        let mut layers = Vec::new();
        for w in sizes.windows(2) {
            let (inp, out) = (w[0], w[1]);
            let mut weights = DMatrix::zeros(out, inp);
            for row in 0..out {
                for col in 0..inp {
                    weights[(row, col)] = r.f64()?;
                }
            }
            let bias = DVector::from_iterator(out, (0..out).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
            layers.push(Dense { weights, bias });
        }
        if members[id].is_some() {
            return Err(Error::Parse(format!("duplicate member {}", MEMBER_NAMES[id])));
        }
        members[id] = Some(Mlp::from_layers(layers, slope)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse("trailing bytes after checkpoint".into()));
    }
    EncoderStack::from_members(members)
}

pub fn save(path: &Path, stack: &EncoderStack) -> Result<()> {
    fs::write(path, encode(stack))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<EncoderStack> {
    decode(&fs::read(path)?)
}
