//! `"EMB1"` embedding files: version, row count `N`, dim `d`, then `N * d`
//! little-endian `f32`.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{DetectError, EmbeddingSequence};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB_VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn write_embeddings<W: Write>(vectors: &Array2<f64>, mut out: W) -> Result<(), DetectError> {
    let mut buf = Vec::with_capacity(HEADER + vectors.len() * 4);
    buf.extend_from_slice(EMB_MAGIC);
    buf.extend_from_slice(&EMB_VERSION.to_le_bytes());
    buf.extend_from_slice(&(vectors.nrows() as u32).to_le_bytes());
    buf.extend_from_slice(&(vectors.ncols() as u32).to_le_bytes());
    for v in vectors.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_embeddings(bytes: &[u8], source: &str) -> Result<EmbeddingSequence, DetectError> {
    if bytes.len() < 4 || &bytes[..4] != EMB_MAGIC {
        return Err(DetectError::BadMagic);
    }
    if bytes.len() < HEADER {
        return Err(DetectError::Truncated("header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let version = word(4);
    if version != EMB_VERSION as usize {
        return Err(DetectError::Truncated(format!("unsupported version {version}")));
    }
    let (n, d) = (word(8), word(12));
    let payload = &bytes[HEADER..];
    if payload.len() != n * d * 4 {
        if n > 0 && payload.len() % (n * 4) == 0 {
            return Err(DetectError::DimMismatch {
                expected: d,
                got: payload.len() / (n * 4),
            });
        }
        return Err(DetectError::Truncated(format!(
            "{} payload bytes for {n} x {d}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let vectors = Array2::from_shape_vec((n, d), data).expect("payload length checked");
    Ok(EmbeddingSequence::new(vectors, vec![source.to_string(); n]))
}

pub fn save_embeddings(vectors: &Array2<f64>, path: &Path) -> Result<(), DetectError> {
    write_embeddings(vectors, std::fs::File::create(path)?)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSequence, DetectError> {
    read_embeddings(&std::fs::read(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn bytes(m: &Array2<f64>) -> Vec<u8> {
        let mut b = Vec::new();
        write_embeddings(m, &mut b).unwrap();
        b
    }

    #[test]
    fn empty_file() {
        let seq = read_embeddings(&bytes(&Array2::zeros((0, 768))), "x").unwrap();
        assert!(seq.is_empty());
        assert_eq!(seq.dim(), 768);
    }

    #[test]
    fn round_trip_keeps_f32_bits() {
        let m = array![[0.1, -2.5, 1e-30], [3.0, f32::MAX as f64, -0.0]];
        let b = bytes(&m);
        let seq = read_embeddings(&b, "x").unwrap();
        assert_eq!(seq.valid_count(), 2);
        assert_eq!(bytes(&seq.vectors), b);
    }

    #[test]
    fn corrupt_files() {
        let mut b = bytes(&Array2::zeros((2, 512)));
        b[12..16].copy_from_slice(&768u32.to_le_bytes());
        assert!(matches!(
            read_embeddings(&b, "x"),
            Err(DetectError::DimMismatch { expected: 768, got: 512 })
        ));
        let b = bytes(&Array2::zeros((2, 3)));
        assert!(matches!(read_embeddings(&b[..b.len() - 3], "x"), Err(DetectError::Truncated(_))));
        assert!(matches!(read_embeddings(b"RIFF0000", "x"), Err(DetectError::BadMagic)));
    }
}
