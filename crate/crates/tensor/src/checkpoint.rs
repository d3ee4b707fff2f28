//! Checkpoint file format.
//!
//! Layout: magic bytes `SMBK`, format version `u32` (little-endian), then
//! repeated records until EOF:
//!
//! ```text
//! name_len: u32 LE | name: utf-8 | dtype: u8 (0 = f32, 1 = f64)
//! rank: u32 LE     | extents: rank x u64 LE | payload: LE scalars
//! ```
//!
//! Round-trips are bit-exact: payloads are the raw IEEE-754 bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;
use crate::{Dtype, Element};

pub const MAGIC: &[u8; 4] = b"SMBK";
pub const VERSION: u32 = 1;

#[derive(Debug)]
pub struct CheckpointEntry<E: Element> {
    pub name: String,
    pub tensor: Tensor<E>,
}

fn io_err(path: &Path, source: std::io::Error) -> TensorError {
    TensorError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_checkpoint<E: Element>(
    path: impl AsRef<Path>,
    entries: &[(String, Tensor<E>)],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for (name, tensor) in entries {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(E::DTYPE.tag());
        buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in tensor.data().iter() {
            v.write_le(&mut buf);
        }
    }
    w.write_all(&buf).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

struct Cursor {
    bytes: Vec<u8>,
    offset: usize,
}

impl Cursor {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(TensorError::Checkpoint {
                offset: self.offset as u64,
                msg: format!("truncated while reading {} ({} bytes needed)", what, n),
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Loads a checkpoint whose payloads are stored as `E`. A record with a
/// different dtype tag is an error (precision must match the run).
pub fn load_checkpoint<E: Element>(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<E>)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;
    let mut cur = Cursor { bytes, offset: 0 };

    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(TensorError::Checkpoint {
            offset: 0,
            msg: format!("bad magic {:?}, expected {:?}", magic, MAGIC),
        });
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(TensorError::Checkpoint {
            offset: 4,
            msg: format!("unsupported version {}", version),
        });
    }

    let mut entries = Vec::new();
    while cur.offset < cur.bytes.len() {
        let name_len = cur.u32("name length")? as usize;
        let name_off = cur.offset;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| TensorError::Checkpoint {
                offset: name_off as u64,
                msg: "name is not utf-8".into(),
            })?
            .to_string();
        let tag_off = cur.offset;
        let tag = cur.take(1, "dtype tag")?[0];
        let dtype = Dtype::from_tag(tag).ok_or(TensorError::Checkpoint {
            offset: tag_off as u64,
            msg: format!("unknown dtype tag {}", tag),
        })?;
        if dtype != E::DTYPE {
            return Err(TensorError::Checkpoint {
                offset: tag_off as u64,
                msg: format!(
                    "record '{}' has dtype {} but the run uses {}",
                    name,
                    dtype,
                    E::DTYPE
                ),
            });
        }
        let rank = cur.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64("extent")? as usize);
        }
        let numel: usize = shape.iter().product();
        let payload_off = cur.offset;
        let payload = cur.take(numel * E::DTYPE.size_bytes(), "payload")?;
        let data: Vec<E> = payload
            .chunks_exact(E::DTYPE.size_bytes())
            .map(E::read_le)
            .collect();
        let tensor = Tensor::from_vec(data, &shape).map_err(|e| TensorError::Checkpoint {
            offset: payload_off as u64,
            msg: format!("{}", e),
        })?;
        entries.push((name, tensor));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ckpt");
        let mut rng = crate::init::seeded_rng(9, 0);
        let a = crate::init::normal_tensor::<f64>(&mut rng, &[3, 4], 0.0, 10.0);
        let b = crate::init::normal_tensor::<f64>(&mut rng, &[7], 0.0, 1e-8);
        let entries = vec![("layer.a".to_string(), a), ("layer.b".to_string(), b)];
        save_checkpoint(&path, &entries).unwrap();
        let loaded = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        for ((n0, t0), (n1, t1)) in entries.iter().zip(&loaded) {
            assert_eq!(n0, n1);
            assert_eq!(t0.shape(), t1.shape());
            let bits0: Vec<u64> = t0.to_vec().iter().map(|v| v.to_bits()).collect();
            let bits1: Vec<u64> = t1.to_vec().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits0, bits1);
        }
    }

    #[test]
    fn wrong_dtype_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ckpt");
        let t = Tensor::<f32>::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        save_checkpoint(&path, &[("x".to_string(), t)]).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(TensorError::Checkpoint { .. })
        ));
    }

    #[test]
    fn malformed_header_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOPE").unwrap();
        match load_checkpoint::<f64>(&path) {
            Err(TensorError::Checkpoint { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected checkpoint error, got {:?}", other.map(|_| ())),
        }
        // truncated payload
        let t = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        save_checkpoint(&path, &[("x".to_string(), t)]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(TensorError::Checkpoint { .. })
        ));
    }
}
