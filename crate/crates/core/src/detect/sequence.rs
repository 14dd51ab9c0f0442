use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2};

use super::{DetectError, Detector, FeatureExtractor};
use crate::audio::AudioBuffer;
use crate::beats::{segment_bars, BeatGrid, BARS_PER_SEGMENT};

/// Fixed stage-2 sequence length.
pub const MAX_SEGMENTS: usize = 48;

/// Per-segment vectors of one track; invalid (padding) rows are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub vectors: Array2<f64>,
    pub mask: Vec<bool>,
    /// Where each row came from; empty for padding.
    pub sources: Vec<String>,
}

impl EmbeddingSequence {
    /// All rows valid.
    pub fn new(vectors: Array2<f64>, sources: Vec<String>) -> Self {
        let n = vectors.nrows();
        let sources = if sources.len() == n { sources } else { vec![String::new(); n] };
        Self {
            mask: vec![true; n],
            vectors,
            sources,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Zero-pads (mask false) or keeps the first `max_len` rows.
pub fn pad_or_crop(seq: &EmbeddingSequence, max_len: usize) -> EmbeddingSequence {
    let keep = seq.len().min(max_len);
    let mut vectors = Array2::zeros((max_len, seq.dim()));
    vectors.slice_mut(s![..keep, ..]).assign(&seq.vectors.slice(s![..keep, ..]));
    let mut mask = seq.mask[..keep].to_vec();
    mask.resize(max_len, false);
    let mut sources = seq.sources[..keep].to_vec();
    sources.resize(max_len, String::new());
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            vectors.row_mut(i).fill(0.0);
        }
    }
    EmbeddingSequence { vectors, mask, sources }
}

/// Cosine self-similarity matrix of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Ssm {
    pub matrix: Array2<f64>,
    pub mask: Vec<bool>,
}

impl Ssm {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DetectError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.matrix.rows() {
            w.write_record(row.iter().map(|v| format!("{v}")))
                .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary greyscale image, `-1 -> 0`, `1 -> 255`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
        out.extend(self.matrix.iter().map(|v| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8));
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DetectError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn save_pgm(&self, path: &Path) -> Result<(), DetectError> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }
}

/// `S[i, j] = cos(v_i, v_j)` over valid, nonzero rows; everything else 0.
/// The upper triangle is mirrored, so the result is exactly symmetric.
pub fn self_similarity(seq: &EmbeddingSequence) -> Ssm {
    let n = seq.len();
    let norms: Vec<f64> = seq.vectors.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mask: Vec<bool> = (0..n).map(|i| seq.mask[i] && norms[i] > 0.0).collect();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        m[[i, i]] = 1.0;
        for j in i + 1..n {
            if mask[j] {
                let c = (seq.vectors.row(i).dot(&seq.vectors.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
                m[[i, j]] = c;
                m[[j, i]] = c;
            }
        }
    }
    Ssm { matrix: m, mask }
}

/// Stage-1 pooled vector of every 4-bar segment of `track`, padded or
/// cropped to `max_len`.
pub fn track_to_sequence<D: Detector>(
    track: &AudioBuffer,
    grid: &BeatGrid,
    stage1: &D,
    extractor: &dyn FeatureExtractor,
    key: &str,
    max_len: usize,
) -> Result<EmbeddingSequence, DetectError> {
    let segments = segment_bars(track, grid, BARS_PER_SEGMENT)?;
    let mut rows = Vec::with_capacity(segments.len());
    let mut sources = Vec::with_capacity(segments.len());
    for (i, seg) in segments.segments.iter().enumerate() {
        let seg_key = format!("{key}#{i}");
        let x = stage1.input_from(extractor.extract(seg, &seg_key)?)?;
        rows.push(stage1.forward(&x)?.pooled);
        sources.push(seg_key);
    }
    let d = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let vectors = Array2::from_shape_vec((sources.len(), d), flat).expect("pooled dims agree");
    Ok(pad_or_crop(&EmbeddingSequence::new(vectors, sources), max_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian, seeded};
    use ndarray::array;

    fn random_seq(n: usize, d: usize, seed: u64) -> EmbeddingSequence {
        let mut r = seeded(seed);
        EmbeddingSequence::new(Array2::from_shape_simple_fn((n, d), || gaussian(&mut r)), vec![])
    }

    #[test]
    fn pad_crop_rules() {
        let a = pad_or_crop(&random_seq(10, 4, 1), 48);
        assert_eq!(a.len(), 48);
        assert_eq!(a.valid_count(), 10);
        assert!(a.vectors.slice(s![10.., ..]).iter().all(|&v| v == 0.0));
        let b = random_seq(48, 4, 2);
        assert_eq!(pad_or_crop(&b, 48), b);
        let c = random_seq(60, 4, 3);
        let cc = pad_or_crop(&c, 48);
        assert_eq!(cc.valid_count(), 48);
        assert_eq!(cc.vectors, c.vectors.slice(s![..48, ..]));
    }

    #[test]
    fn ssm_examples() {
        let same = EmbeddingSequence::new(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]], vec![]);
        assert!(self_similarity(&same).matrix.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let orth = EmbeddingSequence::new(array![[1.0, 0.0], [0.0, 3.0]], vec![]);
        assert_eq!(self_similarity(&orth).matrix, array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn ssm_matches_double_loop() {
        for n in 1..=8 {
            let seq = pad_or_crop(&random_seq(n, 6, n as u64), n + 2);
            let ssm = self_similarity(&seq);
            for i in 0..n + 2 {
                for j in 0..n + 2 {
                    let expect = if i < n && j < n {
                        let (a, b) = (seq.vectors.row(i), seq.vectors.row(j));
                        let mut dot = 0.0;
                        let mut na = 0.0;
                        let mut nb = 0.0;
                        for k in 0..6 {
                            dot += a[k] * b[k];
                            na += a[k] * a[k];
                            nb += b[k] * b[k];
                        }
                        if i == j { 1.0 } else { dot / (na.sqrt() * nb.sqrt()) }
                    } else {
                        0.0
                    };
                    assert!((ssm.matrix[[i, j]] - expect).abs() < 1e-12);
                    assert_eq!(ssm.matrix[[i, j]], ssm.matrix[[j, i]]);
                }
            }
        }
    }

    #[test]
    fn zero_rows_are_invalid() {
        let seq = EmbeddingSequence::new(array![[1.0, 0.0], [0.0, 0.0]], vec![]);
        let ssm = self_similarity(&seq);
        assert_eq!(ssm.mask, vec![true, false]);
        assert_eq!(ssm.matrix[[1, 1]], 0.0);
    }

    #[test]
    fn pgm_mapping() {
        let ssm = self_similarity(&EmbeddingSequence::new(array![[1.0, 0.0], [-1.0, 0.0]], vec![]));
        let pgm = ssm.to_pgm();
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&pgm[pgm.len() - 4..], &[255, 0, 0, 255]);
    }
}
