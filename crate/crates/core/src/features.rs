//! Bag-of-words features: unigram/bigram vocabularies, TF-IDF rows and
//! top-K token-frequency distributions.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, LabeledCorpus};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

pub const DEFAULT_MIN_COUNT: usize = 4;
pub const DEFAULT_MAX_DF_FRACTION: f64 = 0.40;

/// Unigrams followed by space-joined bigrams, in document order.
pub fn ngrams(tokens: &[String]) -> impl Iterator<Item = String> + '_ {
    tokens
        .iter()
        .cloned()
        .chain(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])))
}

/// Feature columns with their document frequencies in the fitting corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    /// Keeps n-grams seen more than `min_count` times that occur in at most
    /// `max_df_fraction` of the documents.
    pub fn fit<'a, I>(docs: I, min_count: usize, max_df_fraction: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        if !(max_df_fraction > 0.0 && max_df_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "max_df_fraction must lie in (0, 1], got {max_df_fraction}"
            )));
        }
        let mut stats: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        let mut n_docs = 0usize;
        let mut seen: HashMap<String, ()> = HashMap::new();
        for doc in docs {
            n_docs += 1;
            seen.clear();
            for gram in ngrams(&doc.tokens) {
                let entry = stats.entry(gram.clone()).or_insert((0, 0));
                entry.0 += 1;
                if seen.insert(gram, ()).is_none() {
                    entry.1 += 1;
                }
            }
        }
        if n_docs == 0 {
            return Err(Error::EmptyCorpus);
        }
        let df_cap = max_df_fraction * n_docs as f64;
        let (terms, doc_freq): (Vec<String>, Vec<usize>) = stats
            .into_iter()
            .filter(|(_, (count, df))| *count > min_count && (*df as f64) <= df_cap)
            .map(|(term, (_, df))| (term, df))
            .unzip();
        if terms.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Self::from_parts(terms, doc_freq, n_docs))
    }

    /// Vocabulary over a fixed term list, with document frequencies counted on `docs`.
    pub fn from_terms<'a, I>(terms: &[String], docs: I) -> Self
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut sorted: Vec<String> = terms.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let index: HashMap<String, usize> = sorted
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let mut doc_freq = vec![0usize; sorted.len()];
        let mut n_docs = 0;
        let mut last_seen = vec![usize::MAX; sorted.len()];
        for doc in docs {
            for gram in ngrams(&doc.tokens) {
                if let Some(&col) = index.get(&gram) {
                    if last_seen[col] != n_docs {
                        last_seen[col] = n_docs;
                        doc_freq[col] += 1;
                    }
                }
            }
            n_docs += 1;
        }
        Vocabulary {
            terms: sorted,
            index,
            doc_freq,
            n_docs,
        }
    }

    /// Rebuilds a vocabulary from stored terms (sorted), frequencies and corpus size.
    pub fn from_parts(terms: Vec<String>, doc_freq: Vec<usize>, n_docs: usize) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            index,
            doc_freq,
            n_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Smoothed inverse document frequency `1 + ln((1 + N) / (1 + df))`.
    pub fn idf(&self, column: usize) -> f64 {
        let n = self.n_docs as f64;
        let df = self.doc_freq[column] as f64;
        1.0 + ((1.0 + n) / (1.0 + df)).ln()
    }
}

/// `build_vocabulary` over a whole corpus.
pub fn build_vocabulary(
    corpus: &LabeledCorpus,
    min_count: usize,
    max_df_fraction: f64,
) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Vocabulary::fit(&corpus.documents, min_count, max_df_fraction)
}

/// Sparse row with strictly increasing column indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow<T> {
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> SparseRow<T> {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn squared_norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum()
    }

    /// Dot product against a dense vector.
    pub fn dot_dense(&self, dense: &[T]) -> T {
        self.indices
            .iter()
            .zip(&self.values)
            .fold(T::zero(), |acc, (&i, &v)| acc + v * dense[i])
    }

    pub fn to_dense(&self, dim: usize) -> Vec<T> {
        let mut out = vec![T::zero(); dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    RawCount,
    TfIdf,
}

/// One sparse non-negative row per document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVectorMatrix<T> {
    pub rows: Vec<SparseRow<T>>,
    pub dim: usize,
    pub weighting: Weighting,
}

impl<T: Scalar> DocVectorMatrix<T> {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        DocVectorMatrix {
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            dim: self.dim,
            weighting: self.weighting,
        }
    }
}

fn count_row(doc: &Document, vocab: &Vocabulary) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for gram in ngrams(&doc.tokens) {
        if let Some(col) = vocab.column(&gram) {
            *counts.entry(col).or_insert(0) += 1;
        }
    }
    counts
}

/// Raw in-vocabulary n-gram counts.
pub fn count_vectorize<'a, T: Scalar, I>(docs: I, vocab: &Vocabulary) -> DocVectorMatrix<T>
where
    I: IntoIterator<Item = &'a Document>,
{
    let rows = docs
        .into_iter()
        .map(|doc| {
            let (indices, values) = count_row(doc, vocab)
                .into_iter()
                .map(|(c, n)| (c, T::from_count(n)))
                .unzip();
            SparseRow { indices, values }
        })
        .collect();
    DocVectorMatrix {
        rows,
        dim: vocab.len(),
        weighting: Weighting::RawCount,
    }
}

/// TF-IDF row for one document: `count * idf`, then L2-normalized. Rows with
/// no in-vocabulary n-grams stay empty.
pub fn tfidf_row<T: Scalar>(doc: &Document, vocab: &Vocabulary, idf: &[T]) -> SparseRow<T> {
    let (indices, mut values): (Vec<usize>, Vec<T>) = count_row(doc, vocab)
        .into_iter()
        .map(|(c, n)| (c, T::from_count(n) * idf[c]))
        .unzip();
    let norm = values.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm > T::zero() {
        for v in &mut values {
            *v /= norm;
        }
    }
    SparseRow { indices, values }
}

pub fn idf_vector<T: Scalar>(vocab: &Vocabulary) -> Vec<T> {
    (0..vocab.len()).map(|c| T::lit(vocab.idf(c))).collect()
}

pub fn tfidf_rows<'a, T: Scalar, I>(docs: I, vocab: &Vocabulary) -> DocVectorMatrix<T>
where
    I: IntoIterator<Item = &'a Document>,
{
    let idf = idf_vector::<T>(vocab);
    DocVectorMatrix {
        rows: docs
            .into_iter()
            .map(|doc| tfidf_row(doc, vocab, &idf))
            .collect(),
        dim: vocab.len(),
        weighting: Weighting::TfIdf,
    }
}

pub fn tfidf_vectorize<T: Scalar>(
    corpus: &LabeledCorpus,
    vocab: &Vocabulary,
) -> DocVectorMatrix<T> {
    tfidf_rows(&corpus.documents, vocab)
}

fn ngram_counts<'a, I>(docs: I, counts: &mut HashMap<String, usize>)
where
    I: IntoIterator<Item = &'a Document>,
{
    for doc in docs {
        for gram in ngrams(&doc.tokens) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
}

/// The `k` n-grams with the highest summed count over both corpora. Ties go
/// to the lexicographically smaller feature.
pub fn top_k_support(corpus_a: &LabeledCorpus, corpus_b: &LabeledCorpus, k: usize) -> Vec<String> {
    let mut counts = HashMap::new();
    ngram_counts(&corpus_a.documents, &mut counts);
    ngram_counts(&corpus_b.documents, &mut counts);
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
    ranked.truncate(k);
    ranked.into_iter().map(|(t, _)| t).collect()
}

/// Probability vector over an ordered support.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDistribution<T> {
    pub support: Arc<Vec<String>>,
    pub mass: Vec<T>,
    /// Support-token occurrences the mass was computed from.
    pub token_total: usize,
    /// Set when no support feature occurred and the mass fell back to uniform.
    pub uniform_fallback: bool,
}

impl<T: Scalar> FeatureDistribution<T> {
    /// Distribution from explicit masses. Masses must be non-negative and sum to one.
    pub fn from_mass(support: Arc<Vec<String>>, mass: Vec<T>) -> Result<Self> {
        if support.len() != mass.len() || mass.is_empty() {
            return Err(Error::InvalidInput(format!(
                "support of {} features with {} masses",
                support.len(),
                mass.len()
            )));
        }
        let total: T = mass.iter().copied().sum();
        if mass.iter().any(|&m| m < T::zero() || !m.is_finite())
            || (total - T::one()).abs() > T::lit(1e-6)
        {
            return Err(Error::InvalidInput(
                "mass is not a probability vector".into(),
            ));
        }
        Ok(FeatureDistribution {
            support,
            mass,
            token_total: 0,
            uniform_fallback: false,
        })
    }

    /// Convenience constructor with placeholder feature names `f0..fK`.
    pub fn from_probabilities(mass: &[T]) -> Result<Self> {
        let support = Arc::new((0..mass.len()).map(|i| format!("f{i}")).collect());
        Self::from_mass(support, mass.to_vec())
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn same_support(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.support, &other.support) || self.support == other.support
    }
}

/// Occurrence counts of each support feature over a corpus.
pub fn support_counts(corpus: &LabeledCorpus, support: &[String]) -> Vec<usize> {
    let index: HashMap<&str, usize> = support
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let mut counts = vec![0usize; support.len()];
    for doc in &corpus.documents {
        for gram in ngrams(&doc.tokens) {
            if let Some(&i) = index.get(gram.as_str()) {
                counts[i] += 1;
            }
        }
    }
    counts
}

/// Normalizes counts to a distribution. When `token_budget` is below the
/// total, occurrences are first subsampled uniformly without replacement.
pub fn distribution_from_counts<T: Scalar>(
    support: Arc<Vec<String>>,
    counts: &[usize],
    token_budget: Option<usize>,
    seed: u64,
) -> Result<FeatureDistribution<T>> {
    if support.is_empty() {
        return Err(Error::InvalidInput("support must be non-empty".into()));
    }
    let total: usize = counts.iter().sum();
    let counts: Vec<usize> = match token_budget {
        Some(budget) if total > budget => subsample_counts(counts, budget, seed),
        _ => counts.to_vec(),
    };
    let kept: usize = counts.iter().sum();
    let k = counts.len();
    let (mass, uniform_fallback) = if kept == 0 {
        (vec![T::one() / T::from_count(k); k], true)
    } else {
        let denom = T::from_count(kept);
        (
            counts.iter().map(|&c| T::from_count(c) / denom).collect(),
            false,
        )
    };
    Ok(FeatureDistribution {
        support,
        mass,
        token_total: kept,
        uniform_fallback,
    })
}

fn subsample_counts(counts: &[usize], budget: usize, seed: u64) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let mut boundaries = Vec::with_capacity(counts.len());
    let mut acc = 0;
    for &c in counts {
        acc += c;
        boundaries.push(acc);
    }
    let mut rng = seed::rng(seed);
    let mut out = vec![0usize; counts.len()];
    for position in index::sample(&mut rng, total, budget) {
        let feature = boundaries.partition_point(|&b| b <= position);
        out[feature] += 1;
    }
    out
}

pub fn feature_distribution<T: Scalar>(
    corpus: &LabeledCorpus,
    support: Arc<Vec<String>>,
    token_budget: Option<usize>,
    seed: u64,
) -> Result<FeatureDistribution<T>> {
    let counts = support_counts(corpus, &support);
    distribution_from_counts(support, &counts, token_budget, seed)
}

/// Writes `feature,mass_a,mass_b` for a compared pair.
pub fn write_pair_csv<T: Scalar>(
    a: &FeatureDistribution<T>,
    b: &FeatureDistribution<T>,
    path: &Path,
) -> Result<()> {
    if !a.same_support(b) {
        return Err(Error::SupportMismatch);
    }
    let mut out = String::from("feature,mass_a,mass_b\n");
    for ((feature, ma), mb) in a.support.iter().zip(&a.mass).zip(&b.mass) {
        out.push_str(&format!("{},{},{}\n", csv_field(feature), ma, mb));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
