use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::TrainError;
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(TrainError::BadManifest(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub path: PathBuf,
    /// 1 = AI-generated.
    pub label: u8,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub name: String,
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn new(name: impl Into<String>, entries: Vec<Entry>) -> Result<Self, TrainError> {
        let m = Self {
            name: name.into(),
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.label > 1 {
                return Err(TrainError::BadManifest(format!("{}: label {}", e.path.display(), e.label)));
            }
            if !seen.insert(&e.path) {
                return Err(TrainError::BadManifest(format!("duplicate path {}", e.path.display())));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&Entry> {
        self.entries.iter().filter(|e| e.split == Some(split)).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads a `path,label,split` CSV; relative paths resolve against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Manifest, TrainError> {
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("path") || headers.get(1) != Some("label") {
        return Err(TrainError::BadManifest("header must start with path,label".into()));
    }
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let p = PathBuf::from(rec.get(0).unwrap_or_default());
        let label: u8 = rec
            .get(1)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| TrainError::BadManifest(format!("row {}: bad label", i + 1)))?;
        let split = match rec.get(2).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse()?),
        };
        let path = if p.is_relative() { base.join(p) } else { p };
        entries.push(Entry { path, label, split });
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Manifest::new(name, entries)
}

/// Writes the manifest, with paths relative to the manifest's directory when possible.
pub fn write_manifest(m: &Manifest, path: &Path) -> Result<(), TrainError> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["path", "label", "split"])?;
    for e in &m.entries {
        let p = e.path.strip_prefix(base).unwrap_or(&e.path);
        let split = e.split.map(Split::name).unwrap_or("");
        w.write_record([p.to_string_lossy().as_ref(), &e.label.to_string(), split])?;
    }
    w.flush()?;
    Ok(())
}

/// Largest-remainder apportionment of `n` by integer `ratios`; ties go to
/// the earlier slot.
fn apportion(n: usize, ratios: &[usize]) -> Vec<usize> {
    let sum: usize = ratios.iter().sum();
    let mut out: Vec<usize> = ratios.iter().map(|r| n * r / sum).collect();
    let mut rem: Vec<(usize, usize)> = ratios.iter().enumerate().map(|(i, r)| (n * r % sum, i)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let left = n - out.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(left) {
        out[i] += 1;
    }
    out
}

/// Per-class split counts: every cell is the floor or ceiling of its exact
/// share, rows sum to the class sizes and columns to `totals`. Among the
/// feasible tables the one closest (squared error) to the exact shares wins.
fn class_table(class_sizes: &[usize; 2], totals: &[usize], ratios: &[usize]) -> Option<[Vec<usize>; 2]> {
    let sum: usize = ratios.iter().sum();
    let k = ratios.len();
    let exact = |c: usize, s: usize| class_sizes[c] as f64 * ratios[s] as f64 / sum as f64;
    let fits = |c: usize, s: usize, v: usize| {
        let q = class_sizes[c] * ratios[s];
        let lo = q / sum;
        let hi = if q % sum == 0 { lo } else { lo + 1 };
        (lo..=hi).contains(&v)
    };
    let mut best: Option<(f64, [Vec<usize>; 2])> = None;
    for bits in 0..(1u32 << k) {
        let row0: Vec<usize> = (0..k)
            .map(|s| class_sizes[0] * ratios[s] / sum + ((bits >> s) & 1) as usize)
            .collect();
        if row0.iter().sum::<usize>() != class_sizes[0] || (0..k).any(|s| !fits(0, s, row0[s])) {
            continue;
        }
        if (0..k).any(|s| row0[s] > totals[s]) {
            continue;
        }
        let row1: Vec<usize> = (0..k).map(|s| totals[s] - row0[s]).collect();
        if (0..k).any(|s| !fits(1, s, row1[s])) {
            continue;
        }
        let err: f64 = (0..k)
            .map(|s| (row0[s] as f64 - exact(0, s)).powi(2) + (row1[s] as f64 - exact(1, s)).powi(2))
            .sum();
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, [row0, row1]));
        }
    }
    best.map(|(_, t)| t)
}

/// Stratified, seeded train/val/test assignment.
pub fn split_dataset(manifest: &Manifest, ratios: [usize; 3], seed: u64) -> Result<Manifest, TrainError> {
    let n = manifest.len();
    if n < 10 {
        return Err(TrainError::TooFewEntries { need: 10, got: n });
    }
    if ratios.iter().sum::<usize>() == 0 {
        return Err(TrainError::BadConfig("split ratios sum to zero".into()));
    }
    let totals = apportion(n, &ratios);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, e) in manifest.entries.iter().enumerate() {
        by_class[e.label as usize].push(i);
    }
    let sizes = [by_class[0].len(), by_class[1].len()];
    let table = class_table(&sizes, &totals, &ratios).unwrap_or_else(|| {
        [apportion(sizes[0], &ratios), apportion(sizes[1], &ratios)]
    });
    let mut rng = seeded(seed);
    let mut out = manifest.clone();
    for (c, idx) in by_class.iter_mut().enumerate() {
        idx.shuffle(&mut rng);
        let mut at = 0;
        for (s, split) in Split::ALL.iter().enumerate() {
            for &i in &idx[at..at + table[c][s]] {
                out.entries[i].split = Some(*split);
            }
            at += table[c][s];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n0: usize, n1: usize) -> Manifest {
        let entries = (0..n0 + n1)
            .map(|i| Entry {
                path: PathBuf::from(format!("t{i}.wav")),
                label: u8::from(i >= n0),
                split: None,
            })
            .collect();
        Manifest::new("m", entries).unwrap()
    }

    fn counts(m: &Manifest) -> Vec<[usize; 2]> {
        Split::ALL
            .iter()
            .map(|s| {
                let e = m.split(*s);
                let pos = e.iter().filter(|x| x.label == 1).count();
                [e.len() - pos, pos]
            })
            .collect()
    }

    #[test]
    fn stratified_hundred() {
        let m = split_dataset(&manifest(50, 50), [8, 1, 1], 3).unwrap();
        assert_eq!(counts(&m), vec![[40, 40], [5, 5], [5, 5]]);
        assert_eq!(m, split_dataset(&manifest(50, 50), [8, 1, 1], 3).unwrap());
        assert_ne!(m, split_dataset(&manifest(50, 50), [8, 1, 1], 4).unwrap());
    }

    #[test]
    fn largest_remainder() {
        assert_eq!(apportion(33, &[8, 1, 1]), vec![27, 3, 3]);
        let m = split_dataset(&manifest(17, 16), [8, 1, 1], 1).unwrap();
        let c = counts(&m);
        assert_eq!(c.iter().map(|x| x[0] + x[1]).collect::<Vec<_>>(), vec![27, 3, 3]);
    }

    #[test]
    fn per_class_within_one_of_target() {
        for (n0, n1) in [(10, 3), (64, 64), (7, 30), (12, 12), (99, 1)] {
            let m = split_dataset(&manifest(n0, n1), [8, 1, 1], 9).unwrap();
            for (s, c) in counts(&m).iter().enumerate() {
                for (k, n) in [n0, n1].iter().enumerate() {
                    let target = *n as f64 * [0.8, 0.1, 0.1][s];
                    assert!((c[k] as f64 - target).abs() < 1.0 + 1e-9, "{n0}/{n1} split {s}: {c:?}");
                }
            }
        }
    }

    #[test]
    fn too_few_and_bad_rows() {
        assert!(matches!(
            split_dataset(&manifest(4, 5), [8, 1, 1], 0),
            Err(TrainError::TooFewEntries { need: 10, got: 9 })
        ));
        let dup = vec![
            Entry { path: "a".into(), label: 0, split: None },
            Entry { path: "a".into(), label: 1, split: None },
        ];
        assert!(Manifest::new("x", dup).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = split_dataset(&manifest(6, 6), [8, 1, 1], 2).unwrap();
        for e in &mut m.entries {
            e.path = dir.path().join(&e.path);
        }
        let p = dir.path().join("m.csv");
        write_manifest(&m, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("path,label,split\nt0.wav,0,"));
        assert_eq!(read_manifest(&p).unwrap().entries, m.entries);
    }
}
