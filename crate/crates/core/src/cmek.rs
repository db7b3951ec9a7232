//! The CMEK selection model: distance-feature vectors, the leave-one-out
//! training set, the non-negative LAD fit, prediction and source ranking.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate, inner_error, train, ErrorEstimate, ErrorKind, Hypothesis};
use crate::config::GlobalConfig;
use crate::corpus::{Document, LabeledCorpus, Provenance};
use crate::distances::{distance_vector, DistanceVector};
use crate::error::{Error, Result};
use crate::features::csv_field;
use crate::lad::{fit_nonnegative_lad, LadOptions};
use crate::scalar::Scalar;
use crate::seed::pair_seed;
use crate::Real;

pub const FEATURE_COUNT: usize = 6;
pub const FEATURE_ORDER: [&str; FEATURE_COUNT] =
    ["chi2", "mmd", "emd", "kld", "inner_error", "const"];

/// `[chi2, mmd, emd, kld, inner_error, 1]` for an ordered (source, target) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceFeatureVector<T> {
    pub values: [T; FEATURE_COUNT],
    pub source_name: String,
    pub target_name: String,
}

impl<T: Scalar> DistanceFeatureVector<T> {
    pub fn new(
        source_name: impl Into<String>,
        target_name: impl Into<String>,
        distances: &DistanceVector<T>,
        inner_error: T,
    ) -> Self {
        DistanceFeatureVector {
            values: [
                distances.chi2,
                distances.mmd,
                distances.emd,
                distances.kld,
                inner_error,
                T::one(),
            ],
            source_name: source_name.into(),
            target_name: target_name.into(),
        }
    }

    /// Bare vector with placeholder names.
    pub fn from_values(values: [T; FEATURE_COUNT]) -> Self {
        DistanceFeatureVector {
            values,
            source_name: String::new(),
            target_name: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair<T> {
    pub features: DistanceFeatureVector<T>,
    pub true_error: T,
}

/// Fitted non-negative weights with LP diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorWeights<T> {
    pub beta: [T; FEATURE_COUNT],
    /// Σ|ξ − β·s| over the training pairs.
    pub objective: T,
    pub n_pairs: usize,
    pub duality_gap: T,
    pub possibly_non_unique: bool,
    pub pivots: usize,
}

impl<T: Scalar> PredictorWeights<T> {
    pub fn from_beta(beta: [T; FEATURE_COUNT]) -> Self {
        PredictorWeights {
            beta,
            objective: T::zero(),
            n_pairs: 0,
            duality_gap: T::zero(),
            possibly_non_unique: false,
            pivots: 0,
        }
    }
}

/// On-disk weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsJson {
    pub beta: Vec<Real>,
    pub objective: Real,
    pub n_pairs: usize,
    pub feature_order: Vec<String>,
}

impl PredictorWeights<Real> {
    pub fn to_json(&self) -> WeightsJson {
        WeightsJson {
            beta: self.beta.to_vec(),
            objective: self.objective,
            n_pairs: self.n_pairs,
            feature_order: FEATURE_ORDER.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(&self.to_json()).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let json: WeightsJson = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if json.feature_order != FEATURE_ORDER {
            return Err(Error::InvalidInput(format!(
                "weights feature order {:?} does not match {:?}",
                json.feature_order, FEATURE_ORDER
            )));
        }
        let beta: [Real; FEATURE_COUNT] = json
            .beta
            .try_into()
            .map_err(|_| Error::InvalidInput("weights need exactly 6 coefficients".into()))?;
        if beta.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(Error::InvalidInput(
                "weights must be finite and non-negative".into(),
            ));
        }
        Ok(PredictorWeights {
            objective: json.objective,
            n_pairs: json.n_pairs,
            ..PredictorWeights::from_beta(beta)
        })
    }
}

/// Minimizes Σ|ξ_i − β·s_i| over β ≥ 0 as an exact linear program.
pub fn fit_weights<T: Scalar>(
    pairs: &[TrainingPair<T>],
    standardize: bool,
) -> Result<PredictorWeights<T>> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput(
            "fit_weights needs at least one pair".into(),
        ));
    }
    let features: Vec<Vec<T>> = pairs.iter().map(|p| p.features.values.to_vec()).collect();
    let targets: Vec<T> = pairs.iter().map(|p| p.true_error).collect();
    let sol = fit_nonnegative_lad(&features, &targets, LadOptions { standardize })?;
    let mut beta = [T::zero(); FEATURE_COUNT];
    beta.copy_from_slice(&sol.beta);
    Ok(PredictorWeights {
        beta,
        objective: sol.objective,
        n_pairs: pairs.len(),
        duality_gap: sol.gap,
        possibly_non_unique: sol.possibly_non_unique,
        pivots: sol.pivots,
    })
}

/// Predicted cross-domain error `β·s`.
pub fn predict<T: Scalar>(weights: &PredictorWeights<T>, features: &DistanceFeatureVector<T>) -> T {
    weights
        .beta
        .iter()
        .zip(&features.values)
        .fold(T::zero(), |acc, (&b, &s)| acc + b * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub name: String,
    pub predicted: Real,
}

/// Sorts by prediction ascending, ties by name, and keeps the first `n`.
pub fn rank(predictions: Vec<(String, Real)>, n: usize) -> Result<Vec<Ranked>> {
    if n == 0 || n > predictions.len() {
        return Err(Error::SelectionSize {
            n,
            max: predictions.len(),
        });
    }
    let mut ranked: Vec<Ranked> = predictions
        .into_iter()
        .map(|(name, predicted)| Ranked { name, predicted })
        .collect();
    ranked.sort_by(|a, b| {
        a.predicted
            .total_cmp(&b.predicted)
            .then_with(|| a.name.cmp(&b.name))
    });
    ranked.truncate(n);
    Ok(ranked)
}

pub fn write_selection_csv(ranking: &[Ranked], path: &Path) -> Result<()> {
    let mut out = String::from("rank,candidate,predicted_error\n");
    for (i, r) in ranking.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            csv_field(&r.name),
            r.predicted
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Distance features of one ordered pair. Reads only the target's tokens.
pub fn assemble_features(
    source: &LabeledCorpus,
    target: &LabeledCorpus,
    cfg: &GlobalConfig,
) -> Result<DistanceFeatureVector<Real>> {
    let inner = inner_error(source, &cfg.train, cfg.fold_count)?;
    assemble_with_inner(source, target, cfg, inner.error)
}

fn assemble_with_inner(
    source: &LabeledCorpus,
    target: &LabeledCorpus,
    cfg: &GlobalConfig,
    inner: Real,
) -> Result<DistanceFeatureVector<Real>> {
    let seed = pair_seed(cfg.seed, &source.name, &target.name);
    let d = distance_vector(source, target, &cfg.distance, cfg.top_k_features, seed)?;
    Ok(DistanceFeatureVector::new(
        &source.name,
        &target.name,
        &d,
        inner,
    ))
}

/// Everything measured on a set of corpora: inner errors, every ordered
/// pair's distances and, optionally, true cross errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    pub names: Vec<String>,
    /// Cross-validated error per corpus; `None` for unlabeled corpora.
    pub inner: Vec<Option<ErrorEstimate>>,
    /// `distances[s][t]`, `None` on the diagonal.
    pub distances: Vec<Vec<Option<DistanceVector<Real>>>>,
    /// `cross[s][t]` when both corpora are labeled and cross errors were requested.
    pub cross: Vec<Vec<Option<Real>>>,
}

impl PairTable {
    pub fn compute(
        corpora: &[LabeledCorpus],
        cfg: &GlobalConfig,
        with_cross: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        check_unique_names(corpora)?;
        let n = corpora.len();

        let inner: Vec<Option<ErrorEstimate>> = corpora
            .par_iter()
            .map(|c| {
                if c.is_fully_labeled() {
                    inner_error(c, &cfg.train, cfg.fold_count).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;

        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|s| (0..n).filter(move |&t| t != s).map(move |t| (s, t)))
            .collect();
        let computed: Vec<DistanceVector<Real>> = pairs
            .par_iter()
            .map(|&(s, t)| {
                let seed = pair_seed(cfg.seed, &corpora[s].name, &corpora[t].name);
                distance_vector(
                    &corpora[s],
                    &corpora[t],
                    &cfg.distance,
                    cfg.top_k_features,
                    seed,
                )
            })
            .collect::<Result<_>>()?;
        let mut distances = vec![vec![None; n]; n];
        for (&(s, t), d) in pairs.iter().zip(computed) {
            distances[s][t] = Some(d);
        }

        let mut cross = vec![vec![None; n]; n];
        if with_cross {
            let hypotheses: Vec<Option<Hypothesis>> = corpora
                .par_iter()
                .map(|c| {
                    if c.is_fully_labeled() {
                        train(c, &cfg.train).map(Some)
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<_>>()?;
            let errors: Vec<Option<Real>> = pairs
                .par_iter()
                .map(
                    |&(s, t)| match (&hypotheses[s], corpora[t].is_fully_labeled()) {
                        (Some(h), true) => {
                            evaluate(h, &corpora[t], ErrorKind::CrossDomain).map(|e| Some(e.error))
                        }
                        _ => Ok(None),
                    },
                )
                .collect::<Result<_>>()?;
            for (&(s, t), e) in pairs.iter().zip(errors) {
                cross[s][t] = e;
            }
        }

        Ok(PairTable {
            names: corpora.iter().map(|c| c.name.clone()).collect(),
            inner,
            distances,
            cross,
        })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Feature vector for `(source, target)`; needs the source's inner error.
    pub fn features(&self, source: usize, target: usize) -> Option<DistanceFeatureVector<Real>> {
        let d = self.distances[source][target].as_ref()?;
        let inner = self.inner[source]?;
        Some(DistanceFeatureVector::new(
            &self.names[source],
            &self.names[target],
            d,
            inner.error,
        ))
    }

    /// `source,target,chi2,mmd,emd,kld,inner_error` for every ordered pair;
    /// `NA` marks a missing inner error (unlabeled source).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,target,chi2,mmd,emd,kld,inner_error\n");
        for (s, row) in self.distances.iter().enumerate() {
            for (t, d) in row.iter().enumerate() {
                let Some(d) = d else { continue };
                let inner = self.inner[s].map_or_else(|| "NA".to_string(), |e| e.error.to_string());
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    csv_field(&self.names[s]),
                    csv_field(&self.names[t]),
                    d.chi2,
                    d.mmd,
                    d.emd,
                    d.kld,
                    inner
                ));
            }
        }
        out
    }

    /// Leave-one-out pairs over the corpora at `members`, in (source, target) order.
    pub fn training_pairs(&self, members: &[usize]) -> Result<Vec<TrainingPair<Real>>> {
        let mut pairs = Vec::with_capacity(members.len() * members.len().saturating_sub(1));
        for &s in members {
            for &t in members {
                if s == t {
                    continue;
                }
                let features = self.features(s, t).ok_or_else(|| {
                    Error::MissingLabels(format!("training pair {}", self.names[s]))
                })?;
                let true_error = self.cross[s][t].ok_or_else(|| {
                    Error::MissingLabels(format!("training pair target {}", self.names[t]))
                })?;
                pairs.push(TrainingPair {
                    features,
                    true_error,
                });
            }
        }
        Ok(pairs)
    }
}

fn check_unique_names(corpora: &[LabeledCorpus]) -> Result<()> {
    let mut names: Vec<&str> = corpora.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    match names.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(Error::InvalidInput(format!(
            "duplicate corpus name {}",
            w[0]
        ))),
        None => Ok(()),
    }
}

/// All `N(N−1)` ordered (source, proxy-target) pairs over the candidates.
/// Candidate labels are used for the true cross errors.
pub fn build_loo_training_set(
    candidates: &[LabeledCorpus],
    cfg: &GlobalConfig,
) -> Result<Vec<TrainingPair<Real>>> {
    if candidates.len() < 3 {
        return Err(Error::InsufficientCandidates(candidates.len()));
    }
    for c in candidates {
        c.require_labels(&format!("candidate {}", c.name))?;
    }
    let table = PairTable::compute(candidates, cfg, true)?;
    let members: Vec<usize> = (0..candidates.len()).collect();
    table.training_pairs(&members)
}

/// Ranks candidates for `target` by predicted error and returns the best `n`.
/// Target labels are stripped before any computation.
pub fn select(
    weights: &PredictorWeights<Real>,
    candidates: &[LabeledCorpus],
    target: &LabeledCorpus,
    n: usize,
    cfg: &GlobalConfig,
) -> Result<Vec<Ranked>> {
    check_selection_size(n, candidates.len())?;
    let inner: Vec<Real> = candidates
        .par_iter()
        .map(|c| inner_error(c, &cfg.train, cfg.fold_count).map(|e| e.error))
        .collect::<Result<_>>()?;
    select_with_inner(weights, candidates, &inner, target, n, cfg)
}

/// [`select`] with the candidates' inner errors already known.
pub fn select_with_inner(
    weights: &PredictorWeights<Real>,
    candidates: &[LabeledCorpus],
    inner: &[Real],
    target: &LabeledCorpus,
    n: usize,
    cfg: &GlobalConfig,
) -> Result<Vec<Ranked>> {
    check_selection_size(n, candidates.len())?;
    if inner.len() != candidates.len() {
        return Err(Error::InvalidInput(
            "one inner error per candidate required".into(),
        ));
    }
    let target = target.without_labels();
    let predictions: Vec<(String, Real)> = candidates
        .par_iter()
        .zip(inner)
        .map(|(c, &e)| {
            let features = assemble_with_inner(c, &target, cfg, e)?;
            Ok((c.name.clone(), predict(weights, &features)))
        })
        .collect::<Result<_>>()?;
    rank(predictions, n)
}

fn check_selection_size(n: usize, max: usize) -> Result<()> {
    if n == 0 || n > max {
        return Err(Error::SelectionSize { n, max });
    }
    Ok(())
}

/// Concatenates corpora in the given order, renumbering document ids.
pub fn union_corpus(corpora: &[&LabeledCorpus]) -> Result<LabeledCorpus> {
    if corpora.is_empty() {
        return Err(Error::InvalidInput("union of zero corpora".into()));
    }
    let names: Vec<&str> = corpora.iter().map(|c| c.name.as_str()).collect();
    let documents: Vec<Document> = corpora
        .iter()
        .flat_map(|c| c.documents.iter())
        .enumerate()
        .map(|(id, d)| Document {
            id,
            tokens: d.tokens.clone(),
            label: d.label,
        })
        .collect();
    Ok(LabeledCorpus::new(
        names.join("+"),
        documents,
        Provenance::Derived(format!("union of {}", names.join(", "))),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(r: &[Ranked]) -> Vec<&str> {
        r.iter().map(|x| x.name.as_str()).collect()
    }

    #[test]
    fn rank_examples() {
        let preds = vec![
            ("A".to_string(), 0.3),
            ("B".to_string(), 0.1),
            ("C".to_string(), 0.2),
        ];
        assert_eq!(names(&rank(preds.clone(), 1).unwrap()), vec!["B"]);
        assert_eq!(names(&rank(preds.clone(), 3).unwrap()), vec!["B", "C", "A"]);
        let tie = vec![
            ("C".to_string(), 0.2),
            ("A".to_string(), 0.2),
            ("B".to_string(), 0.5),
        ];
        assert_eq!(names(&rank(tie, 2).unwrap()), vec!["A", "C"]);
        assert!(matches!(
            rank(preds.clone(), 0),
            Err(Error::SelectionSize { .. })
        ));
        assert!(matches!(
            rank(preds, 4),
            Err(Error::SelectionSize { n: 4, max: 3 })
        ));
    }

    #[test]
    fn predict_examples() {
        let s = DistanceFeatureVector::from_values([0.2, 0.4, 0.1, 0.3, 0.15, 1.0]);
        let zero = PredictorWeights::from_beta([0.0; 6]);
        assert_eq!(predict(&zero, &s), 0.0);
        let constant = PredictorWeights::from_beta([0.0, 0.0, 0.0, 0.0, 0.0, 0.3]);
        assert_eq!(predict(&constant, &s), 0.3);
        let homogeneous = PredictorWeights::<f64>::from_beta([0.13, 0.52, 1.02, 0.00, 0.00, 0.11]);
        let identical = DistanceFeatureVector::<f64>::from_values([0.0, 0.0, 0.0, 0.0, 0.17, 1.0]);
        assert!((predict(&homogeneous, &identical) - 0.11).abs() < 1e-15);
    }

    #[test]
    fn fit_examples() {
        let zero_pairs: Vec<TrainingPair<f64>> = (0..4)
            .map(|i| TrainingPair {
                features: DistanceFeatureVector::from_values([i as f64, 0.5, 0.1, 0.0, 0.2, 1.0]),
                true_error: 0.0,
            })
            .collect();
        let w = fit_weights(&zero_pairs, false).unwrap();
        assert_eq!(w.objective, 0.0);
        assert_eq!(w.beta, [0.0; 6]);

        let single = [TrainingPair::<f64> {
            features: DistanceFeatureVector::from_values([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            true_error: 0.3,
        }];
        let w = fit_weights(&single, false).unwrap();
        assert!((w.beta[5] - 0.3).abs() < 1e-15);
        assert!(w.objective.abs() < 1e-15);
    }

    #[test]
    fn weights_json_round_trip() {
        let w = PredictorWeights {
            objective: 0.5,
            n_pairs: 12,
            ..PredictorWeights::from_beta([0.1, 0.0, 1.5, 0.0, 0.25, 0.05])
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        w.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"feature_order\""));
        let back = PredictorWeights::load(&path).unwrap();
        assert_eq!(back.beta, w.beta);
        assert_eq!(back.n_pairs, 12);
    }

    #[test]
    fn union_renumbers_and_renames() {
        let a = LabeledCorpus::from_texts("a", (0..10).map(|_| ("x", Some(0))));
        let b = LabeledCorpus::from_texts("b", (0..10).map(|_| ("y", Some(1))));
        let u = union_corpus(&[&a, &b]).unwrap();
        assert_eq!(u.len(), 20);
        assert_eq!(u.name, "a+b");
        assert!(u.documents.iter().enumerate().all(|(i, d)| d.id == i));
        let single = union_corpus(&[&a]).unwrap();
        assert_eq!(single.documents, a.documents);
        assert!(union_corpus(&[]).is_err());
    }

    #[test]
    fn too_few_candidates() {
        let a = LabeledCorpus::from_texts("a", [("x", Some(0))]);
        let b = LabeledCorpus::from_texts("b", [("x", Some(0))]);
        let err = build_loo_training_set(&[a, b], &GlobalConfig::default()).unwrap_err();
        assert!(err
            .to_string()
            .starts_with("insufficient candidates for LOO fit"));
    }

    #[test]
    fn selection_csv_layout() {
        let ranking = vec![
            Ranked {
                name: "b".into(),
                predicted: 0.125,
            },
            Ranked {
                name: "a".into(),
                predicted: 0.25,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sel.csv");
        write_selection_csv(&ranking, &path).unwrap();
        assert_eq!(
            fs::read_to_string(path).unwrap(),
            "rank,candidate,predicted_error\n1,b,0.125\n2,a,0.25\n"
        );
    }
}
