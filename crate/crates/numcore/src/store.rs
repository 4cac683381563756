//! Named parameter storage and the versioned binary checkpoint format.
//!
//! File layout: magic `PGSG`, format version `u32` LE, then one record per
//! tensor — name length `u32` LE, UTF-8 name bytes, dtype tag `u8`, rank
//! `u32` LE, dims as `u64` LE each, raw little-endian element bytes — and a
//! trailing CRC32 over every preceding byte. Round-trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::NumError;
use crate::real::{Dtype, Real};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PGSG";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named tensors with persistent identity across training steps.
///
/// Names are unique and shapes are immutable once registered; values change
/// through [`ParamStore::set_value`] or [`ParamStore::get_mut`].
#[derive(Debug, Clone, Default)]
pub struct ParamStore<F: Real> {
    entries: BTreeMap<String, Tensor<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<F>) -> Result<(), NumError> {
        if self.entries.contains_key(name) {
            return Err(NumError::DuplicateParam(name.to_string()));
        }
        self.entries.insert(name.to_string(), tensor);
        Ok(())
    }

    /// Replaces a value; the stored shape is immutable.
    pub fn set_value(&mut self, name: &str, tensor: Tensor<F>) -> Result<(), NumError> {
        let existing = self
            .entries
            .get_mut(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))?;
        if existing.shape() != tensor.shape() {
            return Err(NumError::ShapeImmutable {
                name: name.to_string(),
                expected: existing.shape().to_vec(),
                actual: tensor.shape().to_vec(),
            });
        }
        let rg = existing.requires_grad();
        *existing = tensor.with_grad(rg);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<F>, NumError> {
        self.entries
            .get(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<F>, NumError> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total element count over all entries.
    pub fn numel(&self) -> usize {
        self.entries.values().map(|t| t.len()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<F>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Serializes every entry in name order.
    pub fn save(&self, path: &Path) -> Result<(), NumError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for (name, tensor) in &self.entries {
            let name_bytes = name.as_bytes();
            buf.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
            buf.extend_from_slice(name_bytes);
            buf.push(F::DTYPE.tag());
            buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
            for &dim in tensor.shape() {
                buf.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for &v in tensor.data() {
                v.write_le(&mut buf);
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());

        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    /// Loads a checkpoint; all tensors come back with `requires_grad = false`
    /// (trainability is the owning model's knowledge, not the file's).
    pub fn load(path: &Path) -> Result<Self, NumError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 12 {
            return Err(NumError::Corrupt {
                detail: format!("file too short: {} bytes", buf.len()),
            });
        }
        let (body, crc_bytes) = buf.split_at(buf.len() - 4);
        let stored_crc = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        let actual_crc = crc32fast::hash(body);
        if stored_crc != actual_crc {
            return Err(NumError::Corrupt {
                detail: format!("crc mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"),
            });
        }
        if &body[..4] != CHECKPOINT_MAGIC {
            return Err(NumError::Corrupt {
                detail: "bad magic bytes".to_string(),
            });
        }
        let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(NumError::Corrupt {
                detail: format!("unsupported format version {version}"),
            });
        }

        let mut store = ParamStore::new();
        let mut pos = 8;
        while pos < body.len() {
            let name_len = read_u32(body, &mut pos)? as usize;
            let name_bytes = read_slice(body, &mut pos, name_len)?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| NumError::Corrupt {
                    detail: "non-utf8 tensor name".to_string(),
                })?
                .to_string();
            let tag = read_slice(body, &mut pos, 1)?[0];
            let dtype = Dtype::from_tag(tag).ok_or_else(|| NumError::Corrupt {
                detail: format!("unknown dtype tag {tag}"),
            })?;
            if dtype != F::DTYPE {
                return Err(NumError::DtypeMismatch {
                    found: dtype.name(),
                    expected: F::DTYPE.name(),
                });
            }
            let rank = read_u32(body, &mut pos)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(body, &mut pos)? as usize);
            }
            let numel: usize = shape.iter().product();
            let width = F::DTYPE.byte_width();
            let raw = read_slice(body, &mut pos, numel * width)?;
            let data: Vec<F> = raw.chunks_exact(width).map(F::read_le).collect();
            let tensor = Tensor::from_vec(shape, data).map_err(|e| NumError::Corrupt {
                detail: format!("tensor {name:?}: {e}"),
            })?;
            if store.entries.insert(name.clone(), tensor).is_some() {
                return Err(NumError::Corrupt {
                    detail: format!("duplicate tensor name {name:?}"),
                });
            }
        }
        Ok(store)
    }
}

fn read_slice<'a>(buf: &'a [u8], pos: &mut usize, len: usize) -> Result<&'a [u8], NumError> {
    let end = pos.checked_add(len).ok_or_else(|| NumError::Corrupt {
        detail: "length overflow".to_string(),
    })?;
    if end > buf.len() {
        return Err(NumError::Corrupt {
            detail: format!("truncated record at byte {pos}"),
        });
    }
    let out = &buf[*pos..end];
    *pos = end;
    Ok(out)
}

fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32, NumError> {
    Ok(u32::from_le_bytes(read_slice(buf, pos, 4)?.try_into().unwrap()))
}

fn read_u64(buf: &[u8], pos: &mut usize) -> Result<u64, NumError> {
    Ok(u64::from_le_bytes(read_slice(buf, pos, 8)?.try_into().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.insert("w", Tensor::zeros(vec![2, 2])).unwrap();
        assert!(matches!(
            store.insert("w", Tensor::zeros(vec![2, 2])),
            Err(NumError::DuplicateParam(_))
        ));
    }

    #[test]
    fn shapes_immutable_after_registration() {
        let mut store = ParamStore::<f32>::new();
        store.insert("w", Tensor::zeros(vec![2, 2])).unwrap();
        assert!(matches!(
            store.set_value("w", Tensor::zeros(vec![3])),
            Err(NumError::ShapeImmutable { .. })
        ));
    }
}
