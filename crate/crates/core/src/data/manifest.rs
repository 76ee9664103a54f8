//! Labeled dataset manifests with subject-disjoint train/test splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Label};
use crate::util::{fnv1a, write_atomic};

/// Label index inside a dataset directory: `id,label,subject_id`.
pub const LABEL_INDEX_FILE: &str = "labels.csv";
/// Optional fixed split list: `id,split`. Overrides the seeded split.
pub const SPLIT_LIST_FILE: &str = "split.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const ANNOTATION_SUFFIX: &str = ".states.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
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

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingEntry {
    pub id: String,
    pub wav_path: PathBuf,
    pub annotation_path: PathBuf,
    pub label: Label,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub id: String,
    pub label: Label,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<RecordingEntry>,
    split: BTreeMap<String, Split>,
}

impl DatasetManifest {
    /// Checks that the split covers every id exactly once and that no subject
    /// appears on both sides.
    pub fn new(entries: Vec<RecordingEntry>, split: BTreeMap<String, Split>) -> Result<Self, DataError> {
        let ids: BTreeSet<&str> = entries.iter().map(|e| e.id.as_str()).collect();
        if ids.len() != entries.len() {
            return Err(DataError::Manifest("duplicate recording ids".into()));
        }
        if split.len() != ids.len() || !split.keys().all(|k| ids.contains(k.as_str())) {
            return Err(DataError::Manifest("split assignment does not cover the id set".into()));
        }
        let mut subject_split: BTreeMap<&str, Split> = BTreeMap::new();
        for e in &entries {
            let s = split[&e.id];
            if let Some(prev) = subject_split.insert(&e.subject_id, s) {
                if prev != s {
                    return Err(DataError::Manifest(format!(
                        "subject '{}' appears in both splits",
                        e.subject_id
                    )));
                }
            }
        }
        Ok(DatasetManifest { entries, split })
    }

    pub fn entries(&self) -> &[RecordingEntry] {
        &self.entries
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split.get(id).copied()
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &RecordingEntry> {
        self.entries.iter().filter(move |e| self.split[&e.id] == split)
    }

    pub fn count(&self, split: Split, label: Label) -> usize {
        self.entries_in(split).filter(|e| e.label == label).count()
    }

    pub fn subjects_in(&self, split: Split) -> BTreeSet<String> {
        self.entries_in(split).map(|e| e.subject_id.clone()).collect()
    }

    /// One tab-separated line per entry: id, split, label, subject, wav, annotations.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# id\tsplit\tlabel\tsubject\twav\tannotations\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                e.id,
                self.split[&e.id],
                e.label,
                e.subject_id,
                e.wav_path.display(),
                e.annotation_path.display()
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DataError> {
        let mut entries = Vec::new();
        let mut split = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |msg: String| DataError::Parse {
                path: PathBuf::from(MANIFEST_FILE),
                line: i + 1,
                msg,
            };
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", f.len())));
            }
            let s: Split = f[1].parse().map_err(bad)?;
            let label: Label = f[2].parse().map_err(bad)?;
            split.insert(f[0].to_string(), s);
            entries.push(RecordingEntry {
                id: f[0].to_string(),
                label,
                subject_id: f[3].to_string(),
                wav_path: PathBuf::from(f[4]),
                annotation_path: PathBuf::from(f[5]),
            });
        }
        DatasetManifest::new(entries, split)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        write_atomic(path, self.to_text().as_bytes()).map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_text(&text)
    }

    /// Content hash over ids, labels, subjects and split assignment.
    pub fn hash(&self) -> u64 {
        let mut key = String::new();
        for e in &self.entries {
            key.push_str(&format!("{}|{}|{}|{};", e.id, self.split[&e.id], e.label, e.subject_id));
        }
        fnv1a(key.as_bytes())
    }
}

pub fn load_label_index(path: impl AsRef<Path>) -> Result<Vec<LabelRow>, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let bad = |line: usize, msg: String| DataError::Parse { path: path.to_path_buf(), line, msg };
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let expected = ["id", "label", "subject_id"];
    if headers.len() < 2 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(bad(1, "expected header 'id,label,subject_id'".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(bad(line, "empty id".into()));
        }
        let label = rec
            .get(1)
            .unwrap_or("")
            .parse::<Label>()
            .map_err(|m| bad(line, m))?;
        // subject defaults to the recording id, which degrades to record-level splitting
        let subject_id = match rec.get(2) {
            Some(s) if !s.is_empty() => s.to_string(),
            _ => id.clone(),
        };
        rows.push(LabelRow { id, label, subject_id });
    }
    Ok(rows)
}

fn load_split_list(path: &Path) -> Result<BTreeMap<String, Split>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg: e.to_string(),
        })?;
        let split = rec.get(1).unwrap_or("").parse::<Split>().map_err(|msg| DataError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg,
        })?;
        out.insert(rec.get(0).unwrap_or("").to_string(), split);
    }
    Ok(out)
}

/// Scans a dataset directory and assigns each recording to TRAIN or TEST.
///
/// The directory holds `<id>.wav`, `<id>.states.csv` and `labels.csv`. When a
/// `split.csv` list is present it is used verbatim; otherwise subjects are
/// shuffled with `split_seed` and greedily assigned so that each class's test
/// count lands as close as subject grouping allows to `test_fraction`.
pub fn build_manifest(
    root_dir: impl AsRef<Path>,
    split_seed: u64,
    test_fraction: f64,
) -> Result<DatasetManifest, DataError> {
    let root = root_dir.as_ref();
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::Config(format!("test_fraction {test_fraction} not in (0, 1)")));
    }
    let rows = load_label_index(root.join(LABEL_INDEX_FILE))?;
    let labeled: BTreeSet<&str> = rows.iter().map(|r| r.id.as_str()).collect();

    let mut unlabeled = Vec::new();
    let listing = std::fs::read_dir(root).map_err(|e| DataError::io(root, e))?;
    for item in listing {
        let item = item.map_err(|e| DataError::io(root, e))?;
        let name = item.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(".wav") {
            if !labeled.contains(id) {
                unlabeled.push(id.to_string());
            }
        }
    }
    if !unlabeled.is_empty() {
        unlabeled.sort();
        return Err(DataError::MissingLabels(unlabeled));
    }

    let mut entries = Vec::with_capacity(rows.len());
    for row in rows {
        let wav_path = root.join(format!("{}.wav", row.id));
        let annotation_path = root.join(format!("{}{ANNOTATION_SUFFIX}", row.id));
        for p in [&wav_path, &annotation_path] {
            if !p.is_file() {
                return Err(DataError::MissingFile { id: row.id.clone(), path: p.clone() });
            }
        }
        entries.push(RecordingEntry {
            id: row.id,
            wav_path,
            annotation_path,
            label: row.label,
            subject_id: row.subject_id,
        });
    }

    let split_list = root.join(SPLIT_LIST_FILE);
    let split = if split_list.is_file() {
        load_split_list(&split_list)?
    } else {
        assign_split(&entries, split_seed, test_fraction)
    };
    DatasetManifest::new(entries, split)
}

fn assign_split(entries: &[RecordingEntry], seed: u64, test_fraction: f64) -> BTreeMap<String, Split> {
    let mut by_subject: BTreeMap<&str, [usize; 2]> = BTreeMap::new();
    let mut totals = [0usize; 2];
    for e in entries {
        by_subject.entry(&e.subject_id).or_default()[e.label.index()] += 1;
        totals[e.label.index()] += 1;
    }
    let target = totals.map(|n| (n as f64 * test_fraction).round() as i64);

    let mut subjects: Vec<(&str, [usize; 2])> = by_subject.into_iter().collect();
    subjects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut in_test = [0i64; 2];
    let mut test_subjects = BTreeSet::new();
    for (subject, counts) in subjects {
        let dev = |extra: [usize; 2]| -> i64 {
            (0..2)
                .map(|c| (in_test[c] + extra[c] as i64 - target[c]).abs())
                .sum()
        };
        if dev(counts) < dev([0, 0]) {
            test_subjects.insert(subject);
            in_test[0] += counts[0] as i64;
            in_test[1] += counts[1] as i64;
        }
    }

    entries
        .iter()
        .map(|e| {
            let s = if test_subjects.contains(e.subject_id.as_str()) { Split::Test } else { Split::Train };
            (e.id.clone(), s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(id: &str, label: Label, subject: &str) -> RecordingEntry {
        RecordingEntry {
            id: id.into(),
            wav_path: PathBuf::from(format!("{id}.wav")),
            annotation_path: PathBuf::from(format!("{id}{ANNOTATION_SUFFIX}")),
            label,
            subject_id: subject.into(),
        }
    }

    fn write_dataset(dir: &Path, rows: &[(&str, &str, &str)]) {
        let mut idx = String::from("id,label,subject_id\n");
        for (id, label, subject) in rows {
            idx.push_str(&format!("{id},{label},{subject}\n"));
            std::fs::write(dir.join(format!("{id}.wav")), b"").unwrap();
            std::fs::write(dir.join(format!("{id}{ANNOTATION_SUFFIX}")), b"").unwrap();
        }
        std::fs::write(dir.join(LABEL_INDEX_FILE), idx).unwrap();
    }

    #[test]
    fn split_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<(String, &str, String)> = (0..10)
            .map(|i| (format!("r{i}"), if i % 2 == 0 { "normal" } else { "abnormal" }, format!("s{i}")))
            .collect();
        let refs: Vec<_> = rows.iter().map(|(a, b, c)| (a.as_str(), *b, c.as_str())).collect();
        write_dataset(dir.path(), &refs);
        let a = build_manifest(dir.path(), 11, 0.5).unwrap();
        let b = build_manifest(dir.path(), 11, 0.5).unwrap();
        assert_eq!(a, b);
        for label in Label::ALL {
            // 5 per class, target round(2.5) = 3
            assert_eq!(a.count(Split::Test, label), 3);
        }
    }

    #[test]
    fn subject_owning_all_abnormal_stays_whole() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = vec![("a0", "abnormal", "sick"), ("a1", "abnormal", "sick"), ("a2", "abnormal", "sick")];
        let normals: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
        for n in &normals {
            rows.push((n, "normal", n));
        }
        write_dataset(dir.path(), &rows);
        for seed in 0..20 {
            let m = build_manifest(dir.path(), seed, 0.5).unwrap();
            let s = m.split_of("a0").unwrap();
            assert_eq!(m.split_of("a1"), Some(s));
            assert_eq!(m.split_of("a2"), Some(s));
        }
    }

    #[test]
    fn missing_subject_defaults_to_id() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.wav"), b"").unwrap();
        std::fs::write(dir.path().join(format!("x{ANNOTATION_SUFFIX}")), b"").unwrap();
        std::fs::write(dir.path().join(LABEL_INDEX_FILE), "id,label,subject_id\nx,normal,\n").unwrap();
        let rows = load_label_index(dir.path().join(LABEL_INDEX_FILE)).unwrap();
        assert_eq!(rows[0].subject_id, "x");
    }

    #[test]
    fn unlabeled_recordings_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[("a", "normal", "a")]);
        std::fs::write(dir.path().join("zz.wav"), b"").unwrap();
        std::fs::write(dir.path().join("yy.wav"), b"").unwrap();
        match build_manifest(dir.path(), 0, 0.5) {
            Err(DataError::MissingLabels(ids)) => assert_eq!(ids, vec!["yy", "zz"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_annotation_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[("a", "normal", "a")]);
        std::fs::remove_file(dir.path().join(format!("a{ANNOTATION_SUFFIX}"))).unwrap();
        assert!(matches!(build_manifest(dir.path(), 0, 0.5), Err(DataError::MissingFile { .. })));
    }

    #[test]
    fn external_split_list_reproduces_reference_counts() {
        // Layout sized like the challenge database after removing 'unsure' labels.
        let dir = tempfile::tempdir().unwrap();
        let mut idx = String::from("id,label,subject_id\n");
        let mut split = String::from("id,split\n");
        let groups = [(1150, "normal", "train"), (284, "abnormal", "train"), (1150, "normal", "test"), (288, "abnormal", "test")];
        let mut n = 0;
        for (count, label, s) in groups {
            for _ in 0..count {
                let id = format!("rec{n:04}");
                idx.push_str(&format!("{id},{label},\n"));
                split.push_str(&format!("{id},{s}\n"));
                std::fs::write(dir.path().join(format!("{id}.wav")), b"").unwrap();
                std::fs::write(dir.path().join(format!("{id}{ANNOTATION_SUFFIX}")), b"").unwrap();
                n += 1;
            }
        }
        assert_eq!(n, 2872);
        std::fs::write(dir.path().join(LABEL_INDEX_FILE), idx).unwrap();
        std::fs::write(dir.path().join(SPLIT_LIST_FILE), split).unwrap();
        let m = build_manifest(dir.path(), 0, 0.5).unwrap();
        assert_eq!(m.count(Split::Train, Label::Normal), 1150);
        assert_eq!(m.count(Split::Train, Label::Abnormal), 284);
        assert_eq!(m.count(Split::Test, Label::Normal), 1150);
        assert_eq!(m.count(Split::Test, Label::Abnormal), 288);
    }

    #[test]
    fn text_round_trip_and_leaky_split_rejected() {
        let entries = vec![entry("a", Label::Normal, "s1"), entry("b", Label::Abnormal, "s2")];
        let split: BTreeMap<_, _> = [("a".to_string(), Split::Train), ("b".to_string(), Split::Test)].into();
        let m = DatasetManifest::new(entries.clone(), split).unwrap();
        assert_eq!(DatasetManifest::from_text(&m.to_text()).unwrap(), m);

        let shared = vec![entry("a", Label::Normal, "s1"), entry("b", Label::Abnormal, "s1")];
        let split: BTreeMap<_, _> = [("a".to_string(), Split::Train), ("b".to_string(), Split::Test)].into();
        assert!(DatasetManifest::new(shared, split).is_err());
    }

    proptest! {
        #[test]
        fn splits_partition_ids_and_keep_subjects_whole(
            groups in prop::collection::vec((0usize..8, prop::bool::ANY), 1..60),
            seed in any::<u64>(),
            frac in 0.1f64..0.9,
        ) {
            let entries: Vec<_> = groups
                .iter()
                .enumerate()
                .map(|(i, &(subj, abn))| {
                    let label = if abn { Label::Abnormal } else { Label::Normal };
                    entry(&format!("r{i}"), label, &format!("s{subj}"))
                })
                .collect();
            let split = assign_split(&entries, seed, frac);
            prop_assert_eq!(split.len(), entries.len());
            let m = DatasetManifest::new(entries, split);
            prop_assert!(m.is_ok());
        }

        #[test]
        fn singleton_subjects_hit_class_targets(
            labels in prop::collection::vec(prop::bool::ANY, 2..80),
            seed in any::<u64>(),
            frac in 0.1f64..0.9,
        ) {
            let entries: Vec<_> = labels
                .iter()
                .enumerate()
                .map(|(i, &abn)| {
                    let label = if abn { Label::Abnormal } else { Label::Normal };
                    entry(&format!("r{i}"), label, &format!("s{i}"))
                })
                .collect();
            let m = DatasetManifest::new(entries.clone(), assign_split(&entries, seed, frac)).unwrap();
            for label in Label::ALL {
                let n = entries.iter().filter(|e| e.label == label).count() as f64;
                let got = m.count(Split::Test, label) as f64;
                prop_assert!((got - n * frac).abs() <= 1.0);
            }
        }
    }
}
