//! Labeled document collections: preprocessing, JSONL I/O, manifests and
//! stratified folds.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::mix64;

/// One document: lowercase punctuation-free tokens and an optional binary label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    pub tokens: Vec<String>,
    pub label: Option<u8>,
}

impl Document {
    pub fn new(id: usize, text: &str, label: Option<u8>) -> Self {
        Document {
            id,
            tokens: preprocess(text),
            label,
        }
    }
}

/// Where a corpus came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    File(PathBuf),
    Generated { seed: u64 },
    Derived(String),
}

/// A domain sample. Immutable once built; share it by reference across workers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub name: String,
    pub documents: Vec<Document>,
    pub provenance: Provenance,
}

impl LabeledCorpus {
    pub fn new(name: impl Into<String>, documents: Vec<Document>, provenance: Provenance) -> Self {
        LabeledCorpus {
            name: name.into(),
            documents,
            provenance,
        }
    }

    /// Builds a corpus from raw texts, preprocessing each and numbering ids from zero.
    pub fn from_texts<'a, I>(name: impl Into<String>, texts: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, Option<u8>)>,
    {
        let name = name.into();
        let documents = texts
            .into_iter()
            .enumerate()
            .map(|(id, (text, label))| Document::new(id, text, label))
            .collect();
        let provenance = Provenance::Derived(format!("in-memory:{name}"));
        LabeledCorpus::new(name, documents, provenance)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.documents.iter().all(|d| d.label.is_some())
    }

    /// Count of documents per class, `[negatives, positives]`. Unlabeled documents are skipped.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for doc in &self.documents {
            if let Some(label) = doc.label {
                counts[label as usize] += 1;
            }
        }
        counts
    }

    /// Fails with `MissingLabels(context)` unless every document carries a label.
    pub fn require_labels(&self, context: &str) -> Result<()> {
        if self.is_fully_labeled() {
            Ok(())
        } else {
            Err(Error::MissingLabels(context.to_string()))
        }
    }

    /// Copy with every label removed. Used to keep target labels out of selection.
    pub fn without_labels(&self) -> Self {
        let mut out = self.clone();
        for doc in &mut out.documents {
            doc.label = None;
        }
        out
    }

    pub fn with_flipped_labels(&self) -> Self {
        let mut out = self.clone();
        for doc in &mut out.documents {
            doc.label = doc.label.map(|l| 1 - l);
        }
        out
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Lowercases, strips the 32 ASCII punctuation symbols and splits on whitespace.
///
/// Non-ASCII characters are kept verbatim.
pub fn preprocess(raw_text: &str) -> Vec<String> {
    let cleaned: String = raw_text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    text: String,
    #[serde(default)]
    label: Option<i64>,
}

#[derive(Serialize)]
struct OutRecord {
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
}

/// Reads a JSONL corpus. Labels are optional per line; callers that need
/// labels check with [`LabeledCorpus::require_labels`].
///
/// Blank lines are skipped but still counted for error line numbers.
pub fn load_corpus(path: &Path, name: &str) -> Result<LabeledCorpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut documents = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        let label = match record.label {
            None => None,
            Some(l @ (0 | 1)) => Some(l as u8),
            Some(_) => return Err(Error::InvalidLabel { line: line_no }),
        };
        let id = documents.len();
        documents.push(Document::new(id, &record.text, label));
    }
    if documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(LabeledCorpus::new(
        name,
        documents,
        Provenance::File(path.to_path_buf()),
    ))
}

/// Writes a corpus as JSONL with tokens joined by single spaces.
pub fn save_corpus(corpus: &LabeledCorpus, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in &corpus.documents {
        let record = OutRecord {
            text: doc.tokens.join(" "),
            label: doc.label,
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::json(path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Candidate,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
    pub role: Role,
}

/// List of corpora with their roles. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!(
                "duplicate corpus name {} in manifest",
                w[0]
            )));
        }
        Ok(Manifest {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::new(entries, base)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.entries).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    /// Loads every corpus, preserving manifest order.
    pub fn load_all(&self) -> Result<Vec<(Role, LabeledCorpus)>> {
        self.entries
            .iter()
            .map(|e| {
                let path = self.resolve(e);
                let corpus = load_corpus(&path, &e.name).map_err(|err| err.in_file(&path))?;
                Ok((e.role, corpus))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fold_count: usize,
    pub seed: u64,
}

/// Index sets into `corpus.documents`, both sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold partition.
///
/// Within each class documents are ordered by a hash of `(seed, id)`; the two
/// class lists are concatenated and dealt round-robin into folds. The class
/// whose first hashed document sorts lower goes first, so the partition does
/// not change when every label is flipped.
pub fn stratified_folds(corpus: &LabeledCorpus, spec: SplitSpec) -> Result<Vec<Fold>> {
    corpus.require_labels("stratified_folds")?;
    if spec.fold_count < 2 {
        return Err(Error::InvalidConfig("fold_count must be at least 2".into()));
    }
    let counts = corpus.class_counts();
    let min_class = counts[0].min(counts[1]);
    if spec.fold_count > min_class {
        return Err(Error::TooManyFolds {
            folds: spec.fold_count,
            min_class,
        });
    }

    let key = |id: usize| (mix64(spec.seed ^ mix64(id as u64)), id);
    let mut classes: [Vec<(u64, usize, usize)>; 2] = [Vec::new(), Vec::new()];
    for (idx, doc) in corpus.documents.iter().enumerate() {
        let (h, id) = key(doc.id);
        classes[doc.label.expect("checked above") as usize].push((h, id, idx));
    }
    for class in &mut classes {
        class.sort_unstable();
    }
    let [neg, pos] = classes;
    let (first, second) = if neg[0] <= pos[0] {
        (neg, pos)
    } else {
        (pos, neg)
    };

    let k = spec.fold_count;
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (position, &(_, _, idx)) in first.iter().chain(second.iter()).enumerate() {
        tests[position % k].push(idx);
    }
    let n = corpus.len();
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; n];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect())
}
