//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//! magic `CKGNNCKP`, `u32` version, `u64` FNV-1a digest of the config JSON,
//! `u32` config length and the config bytes, `u32` tensor count, then per
//! tensor: `u32` name length and name, `u32` rank and `u64` dims, `u32`
//! frozen-row count and `u64` rows, and the `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ParameterSet, Tensor, TensorError};
use crate::hash::fnv1a;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CKGNNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Model configuration (opaque JSON) plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_json: String,
    pub params: ParameterSet,
}

fn io_err(e: std::io::Error) -> TensorError {
    TensorError::Checkpoint(e.to_string())
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<(), TensorError> {
    let v = u32::try_from(v).map_err(|_| TensorError::Checkpoint(format!("length {v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub fn write_checkpoint(w: &mut impl Write, ck: &Checkpoint) -> Result<(), TensorError> {
    w.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&fnv1a(ck.config_json.as_bytes()).to_le_bytes()).map_err(io_err)?;
    put_u32(w, ck.config_json.len())?;
    w.write_all(ck.config_json.as_bytes()).map_err(io_err)?;
    put_u32(w, ck.params.len())?;
    for (name, t) in ck.params.iter() {
        put_u32(w, name.len())?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        put_u32(w, t.shape.len())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
        }
        put_u32(w, t.frozen_rows.len())?;
        for &r in &t.frozen_rows {
            w.write_all(&(r as u64).to_le_bytes()).map_err(io_err)?;
        }
        for v in &t.values {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

struct Cursor<R> {
    r: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], TensorError> {
        let mut buf = [0u8; N];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| TensorError::Checkpoint("truncated".into()))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize, TensorError> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn u64(&mut self) -> Result<u64, TensorError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self, limit: usize) -> Result<String, TensorError> {
        let len = self.u32()?;
        if len > limit {
            return Err(TensorError::Checkpoint(format!("string of {len} bytes")));
        }
        let mut buf = vec![0u8; len];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| TensorError::Checkpoint("truncated".into()))?;
        String::from_utf8(buf).map_err(|_| TensorError::Checkpoint("invalid utf-8".into()))
    }
}

/// Reads a checkpoint; every tensor comes back trainable with zero gradients.
pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint, TensorError> {
    let mut c = Cursor { r };
    if &c.bytes::<8>()? != CHECKPOINT_MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(c.bytes()?);
    if version != CHECKPOINT_VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let digest = c.u64()?;
    let config_json = c.string(1 << 26)?;
    if fnv1a(config_json.as_bytes()) != digest {
        return Err(TensorError::Checkpoint("config digest mismatch".into()));
    }
    let count = c.u32()?;
    let mut params = ParameterSet::new();
    for _ in 0..count {
        let name = c.string(1 << 12)?;
        let rank = c.u32()?;
        if rank == 0 || rank > 8 {
            return Err(TensorError::Checkpoint(format!("tensor '{name}' has rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= 1 << 30)
            .ok_or_else(|| TensorError::Checkpoint(format!("tensor '{name}' too large")))?;
        let frozen = c.u32()?;
        let mut rows = Vec::with_capacity(frozen.min(1 << 16));
        for _ in 0..frozen {
            rows.push(c.u64()? as usize);
        }
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(f64::from_le_bytes(c.bytes()?));
        }
        let mut t = Tensor::parameter(shape, values)?;
        for r in rows {
            if r >= t.rows() {
                return Err(TensorError::Checkpoint(format!("frozen row {r} outside '{name}'")));
            }
            t.freeze_row(r);
        }
        params.insert(name, t);
    }
    let mut trailing = [0u8; 1];
    if c.r.read(&mut trailing).map_err(io_err)? != 0 {
        return Err(TensorError::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint { config_json, params })
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TensorError> {
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        write_checkpoint(&mut w, self)?;
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, TensorError> {
        read_checkpoint(&mut BufReader::new(File::open(path).map_err(io_err)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParameterSet::new();
        let mut e = Tensor::parameter(vec![3, 2], vec![0.0, -0.0, 1e-300, f64::MAX, -1.5, 0.1]).unwrap();
        e.freeze_row(0);
        params.insert("emb", e);
        params.insert("w", Tensor::parameter(vec![1, 1], vec![std::f64::consts::PI]).unwrap());
        Checkpoint {
            config_json: r#"{"variant":"gcn"}"#.into(),
            params,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back.config_json, ck.config_json);
        for ((n1, a), (n2, b)) in ck.params.iter().zip(back.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(a.shape(), b.shape());
            assert_eq!(a.frozen_rows(), b.frozen_rows());
            let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.params.checksum(), ck.params.checksum());
    }

    #[test]
    fn corruption_is_detected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &sample()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[24] ^= 1;
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
        assert!(read_checkpoint(&mut &buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint(&mut long.as_slice()).is_err());
    }
}
