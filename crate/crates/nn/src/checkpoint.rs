//! Binary checkpoint file.
//!
//! ```text
//! magic    8 bytes  "FVNNCKPT"
//! version  u32
//! meta     u32 length + UTF-8 bytes (free-form, usually JSON)
//! count    u32
//! count x  name (u16 length + UTF-8), rank u8, rank x u64 dims, f64 data
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use crate::{NnError, Result, Tensor};

pub const MAGIC: &[u8; 8] = b"FVNNCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let meta = self.meta.as_bytes();
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(meta)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            let nb = name.as_bytes();
            if nb.len() > u16::MAX as usize {
                return Err(NnError::Format(format!("tensor name too long: {name}")));
            }
            w.write_all(&(nb.len() as u16).to_le_bytes())?;
            w.write_all(nb)?;
            w.write_all(&[t.shape().len() as u8])?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("not a checkpoint file".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(NnError::Format(format!(
                "checkpoint version {version}, expected {VERSION}"
            )));
        }
        let meta_len = read_u32(r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta = String::from_utf8(meta).map_err(|e| NnError::Format(e.to_string()))?;
        let count = read_u32(r)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let mut len = [0u8; 2];
            r.read_exact(&mut len)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| NnError::Format(e.to_string()))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                let mut d = [0u8; 8];
                r.read_exact(&mut d)?;
                shape.push(u64::from_le_bytes(d) as usize);
            }
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 8];
            r.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        Ok(Self { meta, tensors })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut buf = Vec::new();
        Checkpoint::default().write_to(&mut buf).unwrap();
        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::read_from(&mut wrong.as_slice()).is_err());
        let mut wrong = buf.clone();
        wrong[8] = 9;
        assert!(Checkpoint::read_from(&mut wrong.as_slice()).is_err());
        assert!(Checkpoint::read_from(&mut &buf[..10]).is_err());
    }
}
