//! Dataset manifest: entry inventory, class list, stratified train/test split.
//!
//! On disk a manifest is a UTF-8 CSV with header
//! `id,audio_path,transcription,label,split` (label is the numeric class id)
//! plus a `classes.txt` sidecar mapping id → class name, one per line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub audio_path: PathBuf,
    pub transcription: String,
    pub label: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub classes: Vec<String>,
}

impl Manifest {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "audio_path", "transcription", "label", "split"])?;
        for e in &self.entries {
            w.write_record([
                e.id.as_str(),
                &e.audio_path.display().to_string(),
                &e.transcription,
                &e.label.to_string(),
                &e.split.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, classes: Vec<String>) -> Result<Manifest> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let expect = ["id", "audio_path", "transcription", "label", "split"];
        for col in expect {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::Data(format!(
                    "manifest {} missing column {col:?}",
                    path.display()
                )));
            }
        }
        let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
        let (ci, ca, ct, cl, cs) =
            (col("id"), col("audio_path"), col("transcription"), col("label"), col("split"));
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let label: usize = rec[cl]
                .parse()
                .map_err(|_| Error::Data(format!("bad label {:?} for id {}", &rec[cl], &rec[ci])))?;
            if label >= classes.len() {
                return Err(Error::Data(format!(
                    "label {label} out of range for {} classes (id {})",
                    classes.len(),
                    &rec[ci]
                )));
            }
            entries.push(ManifestEntry {
                id: rec[ci].to_string(),
                audio_path: PathBuf::from(&rec[ca]),
                transcription: rec[ct].to_string(),
                label,
                split: rec[cs].parse()?,
            });
        }
        Ok(Manifest { entries, classes })
    }

    pub fn write_classes(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.classes.join("\n") + "\n")?)
    }

    pub fn read_classes(path: &Path) -> Result<Vec<String>> {
        Ok(std::fs::read_to_string(path)?
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect())
    }
}

/// Assign each entry to train/test, stratified per class: every class
/// contributes round(fraction·n) test entries, chosen by a per-class seeded
/// shuffle.
pub fn stratified_split(labels: &[usize], n_classes: usize, test_fraction: f64, seed: u64) -> Vec<Split> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut out = vec![Split::Train; labels.len()];
    for (c, members) in by_class.iter().enumerate() {
        let mut order = members.clone();
        let mut rng = SeededRng::substream(seed, c as u64);
        rng.shuffle(&mut order);
        let n_test = (test_fraction * members.len() as f64).round() as usize;
        for &idx in order.iter().take(n_test) {
            out[idx] = Split::Test;
        }
    }
    out
}

/// A raw dataset row before splitting.
struct IndexRow {
    id: String,
    file_name: String,
    transcription: String,
    label_name: String,
}

fn find_index_csv(root: &Path) -> Result<PathBuf> {
    let mut candidates = Vec::new();
    let mut dirs = vec![root.to_path_buf()];
    while let Some(dir) = dirs.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                dirs.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                candidates.push(p);
            }
        }
    }
    candidates.sort();
    for p in &candidates {
        if let Ok(mut r) = csv::Reader::from_path(p) {
            if let Ok(h) = r.headers() {
                let has = |c: &str| h.iter().any(|x| x == c);
                if has("file_name") && has("phrase") && has("prompt") {
                    return Ok(p.clone());
                }
            }
        }
    }
    Err(Error::Data(format!(
        "no index CSV with columns file_name/phrase/prompt under {}",
        root.display()
    )))
}

fn read_index(path: &Path) -> Result<Vec<IndexRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (cf, cp, cl) = (col("file_name"), col("phrase"), col("prompt"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let file_name = rec[cf].to_string();
        let id = Path::new(&file_name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file_name.clone());
        rows.push(IndexRow {
            id,
            file_name,
            transcription: rec[cp].to_string(),
            label_name: rec[cl].trim().to_string(),
        });
    }
    Ok(rows)
}

fn walk_audio_files(root: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    let mut dirs = vec![root.to_path_buf()];
    while let Some(dir) = dirs.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                dirs.push(p);
            } else if p.extension().is_some_and(|e| e == "wav") {
                if let Some(name) = p.file_name() {
                    map.entry(name.to_string_lossy().into_owned()).or_insert(p);
                }
            }
        }
    }
    Ok(map)
}

/// Scan `dataset_root` (index CSV + WAV files), derive the class inventory
/// from the data, and produce a deterministic stratified manifest.
pub fn build_manifest(dataset_root: &Path, test_fraction: f64, seed: u64) -> Result<Manifest> {
    build_manifest_with_classes(dataset_root, test_fraction, seed, None)
}

/// Like [`build_manifest`] but with an explicit class inventory; labels
/// outside it are a fatal error.
pub fn build_manifest_with_classes(
    dataset_root: &Path,
    test_fraction: f64,
    seed: u64,
    classes: Option<&[String]>,
) -> Result<Manifest> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let index = find_index_csv(dataset_root)?;
    let mut rows = read_index(&index)?;
    if rows.is_empty() {
        return Err(Error::Data(format!("index {} has no rows", index.display())));
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    rows.dedup_by(|a, b| a.id == b.id);

    let classes: Vec<String> = match classes {
        Some(c) => c.to_vec(),
        None => {
            let mut names: Vec<String> = rows.iter().map(|r| r.label_name.clone()).collect();
            names.sort();
            names.dedup();
            names
        }
    };
    let class_index: BTreeMap<&str, usize> =
        classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let audio = walk_audio_files(dataset_root)?;
    let mut entries = Vec::with_capacity(rows.len());
    let mut missing = 0usize;
    for row in &rows {
        let Some(&label) = class_index.get(row.label_name.as_str()) else {
            return Err(Error::Data(format!(
                "unknown label {:?} for entry {}",
                row.label_name, row.id
            )));
        };
        let Some(path) = audio.get(&row.file_name) else {
            eprintln!("warning: entry {}: audio file {:?} not found, skipping", row.id, row.file_name);
            missing += 1;
            continue;
        };
        entries.push(ManifestEntry {
            id: row.id.clone(),
            audio_path: path.clone(),
            transcription: row.transcription.clone(),
            label,
            split: Split::Train,
        });
    }
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "no entries with resolvable audio under {} ({missing} rows skipped)",
            dataset_root.display()
        )));
    }

    let labels: Vec<usize> = entries.iter().map(|e| e.label).collect();
    let splits = stratified_split(&labels, classes.len(), test_fraction, seed);
    for (e, s) in entries.iter_mut().zip(splits) {
        e.split = s;
    }
    Ok(Manifest { entries, classes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_wav(path: &Path) {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for i in 0..64 {
            w.write_sample((i * 100) as i16).unwrap();
        }
        w.finalize().unwrap();
    }

    fn fake_dataset(n_per_class: &[usize]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let rec = dir.path().join("recordings");
        std::fs::create_dir(&rec).unwrap();
        let mut csv = String::from("file_name,phrase,prompt\n");
        for (c, &n) in n_per_class.iter().enumerate() {
            for i in 0..n {
                let name = format!("c{c}_s{i}.wav");
                write_wav(&rec.join(&name));
                csv.push_str(&format!("{name},phrase for class {c} item {i},Class {c}\n"));
            }
        }
        std::fs::write(dir.path().join("overview.csv"), csv).unwrap();
        dir
    }

    #[test]
    fn ten_entries_one_class_gives_two_test() {
        let dir = fake_dataset(&[10]);
        let m = build_manifest(dir.path(), 0.2, 7).unwrap();
        assert_eq!(m.entries.len(), 10);
        assert_eq!(m.split_entries(Split::Test).count(), 2);
        assert_eq!(m.split_entries(Split::Train).count(), 8);
    }

    #[test]
    fn stratified_counts_within_one_of_round() {
        let dir = fake_dataset(&[10, 23, 7, 41]);
        let m = build_manifest(dir.path(), 0.2, 3).unwrap();
        for (c, &n) in [10usize, 23, 7, 41].iter().enumerate() {
            let expected = (0.2 * n as f64).round() as isize;
            let got = m
                .split_entries(Split::Test)
                .filter(|e| e.label == c)
                .count() as isize;
            assert!((got - expected).abs() <= 1, "class {c}: {got} vs {expected}");
        }
        // disjoint by construction: each entry has exactly one split
        assert_eq!(m.entries.len(), 81);
    }

    #[test]
    fn deterministic_manifest_bytes() {
        let dir = fake_dataset(&[6, 6]);
        let m1 = build_manifest(dir.path(), 0.2, 5).unwrap();
        let m2 = build_manifest(dir.path(), 0.2, 5).unwrap();
        assert_eq!(m1, m2);
        let p1 = dir.path().join("m1.csv");
        let p2 = dir.path().join("m2.csv");
        m1.write_csv(&p1).unwrap();
        m2.write_csv(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        // a different seed moves entries across the split
        let m3 = build_manifest(dir.path(), 0.2, 6).unwrap();
        assert_ne!(
            m1.entries.iter().map(|e| e.split).collect::<Vec<_>>(),
            m3.entries.iter().map(|e| e.split).collect::<Vec<_>>()
        );
    }

    #[test]
    fn unknown_label_fatal_with_value() {
        let dir = fake_dataset(&[4]);
        let classes = vec!["Some other class".to_string()];
        let err = build_manifest_with_classes(dir.path(), 0.2, 0, Some(&classes)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Class 0"), "message should name the label: {msg}");
    }

    #[test]
    fn missing_audio_skipped_with_id() {
        let dir = fake_dataset(&[4]);
        // add an index row with no wav on disk
        let idx = dir.path().join("overview.csv");
        let mut content = std::fs::read_to_string(&idx).unwrap();
        content.push_str("ghost.wav,phantom phrase,Class 0\n");
        std::fs::write(&idx, content).unwrap();
        let m = build_manifest(dir.path(), 0.2, 0).unwrap();
        assert_eq!(m.entries.len(), 4);
        assert!(m.entries.iter().all(|e| e.id != "ghost"));
    }

    #[test]
    fn csv_roundtrip_preserves_everything() {
        let dir = fake_dataset(&[5, 3]);
        let m = build_manifest(dir.path(), 0.2, 2).unwrap();
        let csv_path = dir.path().join("manifest.csv");
        let cls_path = dir.path().join("classes.txt");
        m.write_csv(&csv_path).unwrap();
        m.write_classes(&cls_path).unwrap();
        let classes = Manifest::read_classes(&cls_path).unwrap();
        let back = Manifest::read_csv(&csv_path, classes).unwrap();
        assert_eq!(m, back);
    }
}
