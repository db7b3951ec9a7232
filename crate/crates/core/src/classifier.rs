//! Logistic-regression hypothesis over TF-IDF features, with inner-domain
//! (cross-validated) and cross-domain error estimates.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{stratified_folds, Document, LabeledCorpus, SplitSpec};
use crate::error::{Error, Result};
use crate::features::{
    idf_vector, tfidf_row, Vocabulary, DEFAULT_MAX_DF_FRACTION, DEFAULT_MIN_COUNT,
};
use crate::logistic::{LbfgsOptions, LogisticProblem};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: Real,
    pub max_iterations: usize,
    pub tolerance: Real,
    pub seed: u64,
    /// Vocabulary keeps n-grams seen more than this many times.
    pub min_count: usize,
    pub max_df_fraction: Real,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            max_iterations: 1000,
            tolerance: 1e-6,
            seed: 0,
            min_count: DEFAULT_MIN_COUNT,
            max_df_fraction: DEFAULT_MAX_DF_FRACTION,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidConfig("alpha must be non-negative".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if !(self.max_df_fraction > 0.0 && self.max_df_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "max_df_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// A trained linear classifier and the feature space it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub vocab: Vocabulary,
    pub idf: Vec<Real>,
    pub weights: Vec<Real>,
    pub bias: Real,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: Real,
}

impl Hypothesis {
    /// Fixed-parameter hypothesis, mostly for tests.
    pub fn with_parameters(vocab: Vocabulary, weights: Vec<Real>, bias: Real) -> Self {
        assert_eq!(vocab.len(), weights.len(), "one weight per vocabulary term");
        let idf = idf_vector(&vocab);
        Hypothesis {
            vocab,
            idf,
            weights,
            bias,
            converged: true,
            iterations: 0,
            grad_norm: 0.0,
        }
    }

    /// `w·x + b` for the document's TF-IDF row; out-of-vocabulary n-grams are ignored.
    pub fn decision(&self, doc: &Document) -> Real {
        tfidf_row(doc, &self.vocab, &self.idf).dot_dense(&self.weights) + self.bias
    }

    pub fn to_json(&self) -> HypothesisJson {
        HypothesisJson {
            terms: self.vocab.terms().to_vec(),
            doc_freq: self.vocab.doc_freq().to_vec(),
            n_docs: self.vocab.n_docs(),
            idf: self.idf.clone(),
            weights: self.weights.clone(),
            bias: self.bias,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(&self.to_json()).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let json: HypothesisJson = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Hypothesis::try_from(json)
    }
}

/// Audit export: vocabulary, idf, weights and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisJson {
    pub terms: Vec<String>,
    pub doc_freq: Vec<usize>,
    pub n_docs: usize,
    pub idf: Vec<Real>,
    pub weights: Vec<Real>,
    pub bias: Real,
}

impl TryFrom<HypothesisJson> for Hypothesis {
    type Error = Error;

    fn try_from(json: HypothesisJson) -> Result<Self> {
        let n = json.terms.len();
        if json.doc_freq.len() != n || json.idf.len() != n || json.weights.len() != n {
            return Err(Error::InvalidInput(
                "hypothesis arrays differ in length".into(),
            ));
        }
        if json.weights.iter().chain(&json.idf).any(|v| !v.is_finite()) || !json.bias.is_finite() {
            return Err(Error::InvalidInput(
                "hypothesis contains non-finite values".into(),
            ));
        }
        Ok(Hypothesis {
            vocab: Vocabulary::from_parts(json.terms, json.doc_freq, json.n_docs),
            idf: json.idf,
            weights: json.weights,
            bias: json.bias,
            converged: true,
            iterations: 0,
            grad_norm: 0.0,
        })
    }
}

/// Fits vocabulary, idf and weights on `docs`. All documents must be labeled
/// and both classes present.
pub fn train_on(name: &str, docs: &[&Document], cfg: &TrainConfig) -> Result<Hypothesis> {
    cfg.validate()?;
    let mut labels = Vec::with_capacity(docs.len());
    for doc in docs {
        labels.push(
            doc.label
                .ok_or_else(|| Error::MissingLabels("train".into()))?
                == 1,
        );
    }
    if !(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)) {
        return Err(Error::SingleClass(name.to_string()));
    }
    let vocab = Vocabulary::fit(docs.iter().copied(), cfg.min_count, cfg.max_df_fraction)?;
    let idf = idf_vector::<Real>(&vocab);
    let rows: Vec<_> = docs.iter().map(|d| tfidf_row(d, &vocab, &idf)).collect();
    let problem = LogisticProblem::new(&rows, &labels, vocab.len(), cfg.alpha);
    let fit = problem.fit(&LbfgsOptions {
        max_iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
        ..LbfgsOptions::default()
    });
    Ok(Hypothesis {
        vocab,
        idf,
        weights: fit.weights,
        bias: fit.bias,
        converged: fit.converged,
        iterations: fit.iterations,
        grad_norm: fit.grad_norm,
    })
}

pub fn train(corpus: &LabeledCorpus, cfg: &TrainConfig) -> Result<Hypothesis> {
    let docs: Vec<&Document> = corpus.documents.iter().collect();
    train_on(&corpus.name, &docs, cfg)
}

/// 1 iff `w·x + b > 0`.
pub fn classify(h: &Hypothesis, doc: &Document) -> u8 {
    u8::from(h.decision(doc) > 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    InnerCv,
    CrossDomain,
    Holdout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub error: Real,
    pub misclassified: usize,
    pub n_evaluated: usize,
    pub kind: ErrorKind,
}

impl ErrorEstimate {
    fn new(misclassified: usize, n_evaluated: usize, kind: ErrorKind) -> Self {
        ErrorEstimate {
            error: misclassified as Real / n_evaluated as Real,
            misclassified,
            n_evaluated,
            kind,
        }
    }
}

fn count_errors<'a>(
    h: &Hypothesis,
    docs: impl IntoIterator<Item = &'a Document>,
) -> Result<(usize, usize)> {
    let mut wrong = 0;
    let mut total = 0;
    for doc in docs {
        let label = doc
            .label
            .ok_or_else(|| Error::MissingLabels("cross_error".into()))?;
        if classify(h, doc) != label {
            wrong += 1;
        }
        total += 1;
    }
    Ok((wrong, total))
}

/// 0/1 error of `h` on every document of a labeled corpus.
pub fn evaluate(h: &Hypothesis, corpus: &LabeledCorpus, kind: ErrorKind) -> Result<ErrorEstimate> {
    corpus.require_labels("cross_error")?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (wrong, total) = count_errors(h, &corpus.documents)?;
    Ok(ErrorEstimate::new(wrong, total, kind))
}

/// Stratified k-fold error; vocabulary and idf are refit on each training split.
pub fn inner_error(
    corpus: &LabeledCorpus,
    cfg: &TrainConfig,
    folds: usize,
) -> Result<ErrorEstimate> {
    let splits = stratified_folds(
        corpus,
        SplitSpec {
            fold_count: folds,
            seed: cfg.seed,
        },
    )?;
    let mut wrong = 0;
    for fold in &splits {
        let train_docs: Vec<&Document> = fold.train.iter().map(|&i| &corpus.documents[i]).collect();
        let h = train_on(&corpus.name, &train_docs, cfg)?;
        wrong += count_errors(&h, fold.test.iter().map(|&i| &corpus.documents[i]))?.0;
    }
    Ok(ErrorEstimate::new(wrong, corpus.len(), ErrorKind::InnerCv))
}

/// Train on all of `source`, score on all of `target`.
pub fn cross_error(
    source: &LabeledCorpus,
    target: &LabeledCorpus,
    cfg: &TrainConfig,
) -> Result<ErrorEstimate> {
    target.require_labels("cross_error")?;
    let h = train(source, cfg)?;
    evaluate(&h, target, ErrorKind::CrossDomain)
}
