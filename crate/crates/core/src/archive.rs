//! Binary container for named tensors plus a text header.
//!
//! Layout (all integers little-endian): an 8-byte magic, `u32` version,
//! `u64` header length, UTF-8 header of `key=value` lines (backslash
//! escapes for `\n`, `\r`, `\\` and `=` in keys), `u32` tensor count, then
//! per tensor a `u32` name length, the name, a `u32` rank, `u64` dims and the
//! `f64` values. The file ends with the SHA-256 of everything before it.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::neural::Tensor;

const DIGEST_LEN: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("not a {0} file (bad magic bytes)")]
    BadMagic(&'static str),
    #[error("unsupported file version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    pub header: BTreeMap<String, String>,
    /// Kept in insertion order when writing.
    pub tensors: Vec<(String, Tensor)>,
}

fn escape(s: &str, key: bool) -> String {
    let s = s.replace('\\', "\\\\").replace('\n', "\\n").replace('\r', "\\r");
    if key {
        s.replace('=', "\\=")
    } else {
        s
    }
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

fn put_tensor(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    buf.extend((name.len() as u32).to_le_bytes());
    buf.extend(name.as_bytes());
    buf.extend((t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend((d as u64).to_le_bytes());
    }
    for v in t.data() {
        buf.extend(v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ArchiveError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ArchiveError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ArchiveError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self) -> Result<(String, Tensor), ArchiveError> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| ArchiveError::Corrupt("tensor name is not UTF-8".into()))?;
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(self.u64()? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| ArchiveError::Corrupt(format!("tensor `{name}` is too large")))?;
        let data = self
            .take(count)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::from_vec(&shape, data).map_err(|e| ArchiveError::Corrupt(e.to_string()))?;
        Ok((name, t))
    }
}

fn parse_header(text: &str) -> Result<BTreeMap<String, String>, ArchiveError> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        // split at the first unescaped '='
        let bytes = line.as_bytes();
        let mut split = None;
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => i += 2,
                b'=' => {
                    split = Some(i);
                    break;
                }
                _ => i += 1,
            }
        }
        let i = split.ok_or_else(|| ArchiveError::Corrupt(format!("bad header line `{line}`")))?;
        map.insert(unescape(&line[..i]), unescape(&line[i + 1..]));
    }
    Ok(map)
}

impl Archive {
    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        self.header.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Result<&str, ArchiveError> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ArchiveError::Corrupt(format!("header is missing `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ArchiveError> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| ArchiveError::Corrupt(format!("bad `{key}` value `{v}`")))
    }

    /// A `a,b` pair of floats.
    pub fn pair(&self, key: &str) -> Result<(f64, f64), ArchiveError> {
        let v = self.get(key)?;
        let bad = || ArchiveError::Corrupt(format!("bad `{key}` value `{v}`"));
        let (a, b) = v.split_once(',').ok_or_else(bad)?;
        Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
    }

    pub fn to_bytes(&self, magic: &[u8; 8], version: u32) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend(magic);
        buf.extend(version.to_le_bytes());
        let mut text = String::new();
        for (k, v) in &self.header {
            text.push_str(&escape(k, true));
            text.push('=');
            text.push_str(&escape(v, false));
            text.push('\n');
        }
        buf.extend((text.len() as u64).to_le_bytes());
        buf.extend(text.as_bytes());
        buf.extend((self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_tensor(&mut buf, name, t);
        }
        let digest = Sha256::digest(&buf);
        buf.extend(digest.as_slice());
        buf
    }

    pub fn write<W: Write>(&self, magic: &[u8; 8], version: u32, mut w: W) -> Result<(), ArchiveError> {
        w.write_all(&self.to_bytes(magic, version))?;
        Ok(())
    }

    /// Reads and verifies an archive. `kind` names the file type in errors.
    pub fn read<R: Read>(magic: &[u8; 8], version: u32, kind: &'static str, mut r: R) -> Result<Self, ArchiveError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < magic.len() || &bytes[..magic.len()] != magic {
            return Err(ArchiveError::BadMagic(kind));
        }
        let mut cur = Cursor {
            bytes: &bytes,
            pos: magic.len(),
        };
        let found = cur.u32()?;
        if found != version {
            return Err(ArchiveError::UnsupportedVersion(found));
        }
        if bytes.len() < cur.pos + DIGEST_LEN {
            return Err(ArchiveError::Corrupt("file is truncated".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(ArchiveError::Corrupt("checksum mismatch (truncated or modified file)".into()));
        }
        let mut cur = Cursor { bytes: body, pos: cur.pos };
        let header_len = cur.u64()? as usize;
        let text = std::str::from_utf8(cur.take(header_len)?)
            .map_err(|_| ArchiveError::Corrupt("header is not UTF-8".into()))?;
        let header = parse_header(text)?;
        let n = cur.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..n {
            tensors.push(cur.tensor()?);
        }
        if cur.pos != body.len() {
            return Err(ArchiveError::Corrupt("trailing bytes after the last tensor".into()));
        }
        Ok(Self { header, tensors })
    }

    /// Removes and returns every tensor, keyed by name.
    pub fn take_tensors(&mut self) -> Result<BTreeMap<String, Tensor>, ArchiveError> {
        let mut map = BTreeMap::new();
        for (name, t) in std::mem::take(&mut self.tensors) {
            if map.insert(name.clone(), t).is_some() {
                return Err(ArchiveError::Corrupt(format!("duplicate tensor `{name}`")));
            }
        }
        Ok(map)
    }
}

/// Moves tensors from `tensors` into `params` by name, checking shapes.
pub fn restore_parameters<'a>(
    params: impl IntoIterator<Item = &'a mut crate::neural::Parameter>,
    tensors: &mut BTreeMap<String, Tensor>,
) -> Result<(), ArchiveError> {
    for p in params {
        let t = tensors
            .remove(p.name())
            .ok_or_else(|| ArchiveError::Corrupt(format!("missing tensor `{}`", p.name())))?;
        if t.shape() != p.shape() {
            return Err(ArchiveError::Corrupt(format!(
                "tensor `{}` has shape {:?}, expected {:?}",
                p.name(),
                t.shape(),
                p.shape()
            )));
        }
        p.value = t;
    }
    Ok(())
}
