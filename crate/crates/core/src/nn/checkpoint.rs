//! Binary parameter files: `"AIGM"`, version, tensor count, then per tensor
//! a length-prefixed name, rank, dims and little-endian `f64` payload.
//! String metadata rides along as empty rank-1 tensors named `meta:key=value`.

use std::fs;
use std::path::Path;

use super::{Mat, NnError, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AIGM";
pub const CHECKPOINT_VERSION: u32 = 1;
const META_PREFIX: &str = "meta:";

#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Mat)>,
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, meta: &[(String, String)]) -> Self {
        Self {
            tensors: store
                .ids()
                .map(|id| (store.name(id).to_string(), store.value(id).clone()))
                .collect(),
            meta: meta.to_vec(),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_store(&self) -> ParamStore {
        let mut s = ParamStore::new();
        for (name, m) in &self.tensors {
            s.add(name.clone(), m.clone());
        }
        s
    }

    /// Overwrites `store` values; names and shapes must match exactly.
    pub fn apply(&self, store: &mut ParamStore) -> Result<(), NnError> {
        store.copy_values_from(&self.to_store())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&((self.tensors.len() + self.meta.len()) as u32).to_le_bytes());
        let put_name = |out: &mut Vec<u8>, name: &str| {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        };
        for (k, v) in &self.meta {
            put_name(&mut out, &format!("{META_PREFIX}{k}={v}"));
            out.extend_from_slice(&1u32.to_le_bytes());
            out.extend_from_slice(&0u32.to_le_bytes());
        }
        for (name, m) in &self.tensors {
            put_name(&mut out, name);
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
            for v in m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut ck = Checkpoint::default();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = r.u32()?;
            let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
            let shape = match dims.as_slice() {
                [n] => (1, *n),
                [a, b] => (*a, *b),
                _ => return Err(NnError::Checkpoint(format!("{name}: rank {rank}"))),
            };
            let n = shape.0 * shape.1;
            let payload = r.take(n * 8)?;
            if let Some(rest) = name.strip_prefix(META_PREFIX) {
                let (k, v) = rest.split_once('=').unwrap_or((rest, ""));
                ck.meta.push((k.to_string(), v.to_string()));
                continue;
            }
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let m = Mat::from_shape_vec(shape, data).expect("payload matches dims");
            ck.tensors.push((name, m));
        }
        if r.at != bytes.len() {
            return Err(NnError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        Ok(ck)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, meta: &[(String, String)]) -> Result<(), NnError> {
    fs::write(path, Checkpoint::from_store(store, meta).to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut s = ParamStore::new();
        s.add("a.w", array![[1.0, -0.0, f64::MIN_POSITIVE], [1e300, 3.25, -7.5]]);
        s.add("b", array![[0.1]]);
        let meta = vec![("arch".to_string(), "segtr".to_string())];
        let ck = Checkpoint::from_bytes(&Checkpoint::from_store(&s, &meta).to_bytes()).unwrap();
        assert_eq!(ck.meta("arch"), Some("segtr"));
        let mut t = ParamStore::new();
        t.zeros("b", 1, 1);
        t.zeros("a.w", 2, 3);
        ck.apply(&mut t).unwrap();
        for id in s.ids() {
            let other = t.value(t.id(s.name(id)).unwrap());
            for (x, y) in s.value(id).iter().zip(other.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_bad_files() {
        let mut s = ParamStore::new();
        s.add("w", array![[1.0, 2.0]]);
        let bytes = Checkpoint::from_store(&s, &[]).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut t = ParamStore::new();
        t.zeros("w", 2, 1);
        assert!(matches!(
            Checkpoint::from_bytes(&bytes).unwrap().apply(&mut t),
            Err(NnError::CheckpointMismatch(_))
        ));
    }
}
