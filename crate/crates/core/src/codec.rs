//! Internal binary cache framing.
//!
//! ```text
//! magic        8 bytes  "FLOWVAE\0"
//! kind         4 bytes  record type tag
//! version      u32
//! config hash  32 bytes (all zero when unknown)
//! count        u64
//! count x      u32 payload length + payload
//! ```
//!
//! Integers and floats are little-endian throughout.

use std::io::{Read, Write};

use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FLOWVAE\0";
pub const VERSION: u32 = 1;

pub type ConfigHash = [u8; 32];

/// A type that can be stored in a cache file.
pub trait Record: Sized {
    const KIND: [u8; 4];

    fn encode(&self, out: &mut Vec<u8>);
    fn decode(buf: &mut Reader<'_>) -> Result<Self>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheHeader {
    pub kind: [u8; 4],
    pub version: u32,
    pub config_hash: ConfigHash,
    pub count: u64,
}

pub fn write_cache<T: Record>(
    w: &mut impl Write,
    config_hash: &ConfigHash,
    records: &[T],
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&T::KIND)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(config_hash)?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    let mut buf = Vec::new();
    for r in records {
        buf.clear();
        r.encode(&mut buf);
        w.write_all(&(buf.len() as u32).to_le_bytes())?;
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_header(r: &mut impl Read) -> Result<CacheHeader> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut kind = [0u8; 4];
    r.read_exact(&mut kind)?;
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != VERSION {
        return Err(Error::Format(format!(
            "version {version}, expected {VERSION}"
        )));
    }
    let mut config_hash = [0u8; 32];
    r.read_exact(&mut config_hash)?;
    let mut c = [0u8; 8];
    r.read_exact(&mut c)?;
    Ok(CacheHeader {
        kind,
        version,
        config_hash,
        count: u64::from_le_bytes(c),
    })
}

pub fn read_cache<T: Record>(r: &mut impl Read) -> Result<(CacheHeader, Vec<T>)> {
    let header = read_header(r)?;
    if header.kind != T::KIND {
        return Err(Error::Format(format!(
            "expected {} records, found {}",
            String::from_utf8_lossy(&T::KIND),
            String::from_utf8_lossy(&header.kind)
        )));
    }
    let mut out = Vec::with_capacity(header.count.min(1 << 20) as usize);
    let mut payload = Vec::new();
    for _ in 0..header.count {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        payload.resize(u32::from_le_bytes(len) as usize, 0);
        r.read_exact(&mut payload)?;
        let mut reader = Reader::new(&payload);
        out.push(T::decode(&mut reader)?);
        if !reader.is_empty() {
            return Err(Error::Format("trailing bytes in record".into()));
        }
    }
    Ok((header, out))
}

pub fn put_u8(out: &mut Vec<u8>, v: u8) {
    out.push(v);
}

pub fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_i64(out: &mut Vec<u8>, v: i64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u16(out, s.len() as u16);
    out.extend_from_slice(s.as_bytes());
}

/// Cursor over one record payload.
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("truncated record".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}
