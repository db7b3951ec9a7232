//! χ², KL, MMD and EMD between domain marginals.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::features::{
    distribution_from_counts, support_counts, tfidf_rows, top_k_support, DocVectorMatrix,
    FeatureDistribution, SparseRow, Vocabulary,
};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng};
use crate::transport;

pub const FLAG_UNIFORM_SOURCE: &str = "uniform_source";
pub const FLAG_UNIFORM_TARGET: &str = "uniform_target";
pub const FLAG_MMD_ZERO_BANDWIDTH: &str = "mmd_zero_bandwidth";

/// Ground cost between support features for EMD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GroundMetric<T> {
    /// 0 on the diagonal, 1 elsewhere. EMD reduces to total variation.
    #[default]
    Binary,
    /// Square, symmetric, non-negative, zero diagonal.
    Custom(Vec<Vec<T>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig<T> {
    pub chi2_lambda: T,
    pub kld_lambda: T,
    /// RBF bandwidth; `None` selects the median pairwise distance.
    pub mmd_sigma: Option<T>,
    pub mmd_max_samples: usize,
    pub ground_metric: GroundMetric<T>,
}

impl<T: Scalar> Default for DistanceConfig<T> {
    fn default() -> Self {
        DistanceConfig {
            chi2_lambda: T::lit(0.05),
            kld_lambda: T::lit(1e-5),
            mmd_sigma: None,
            mmd_max_samples: 5000,
            ground_metric: GroundMetric::Binary,
        }
    }
}

impl<T: Scalar> DistanceConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi2_lambda > T::zero() && self.kld_lambda > T::zero()) {
            return Err(Error::InvalidConfig(
                "smoothing lambdas must be positive".into(),
            ));
        }
        if self.mmd_max_samples < 2 {
            return Err(Error::InvalidConfig(
                "mmd_max_samples must be at least 2".into(),
            ));
        }
        if let Some(sigma) = self.mmd_sigma {
            if !(sigma >= T::zero()) || !sigma.is_finite() {
                return Err(Error::InvalidConfig(
                    "mmd_sigma must be finite and non-negative".into(),
                ));
            }
        }
        if let GroundMetric::Custom(g) = &self.ground_metric {
            validate_ground(g)?;
        }
        Ok(())
    }
}

fn validate_ground<T: Scalar>(g: &[Vec<T>]) -> Result<()> {
    let k = g.len();
    if let Some(row) = g.iter().find(|r| r.len() != k) {
        return Err(Error::GroundMatrixShape {
            rows: k,
            cols: row.len(),
            expected: k,
        });
    }
    for i in 0..k {
        if g[i][i] != T::zero() {
            return Err(Error::InvalidConfig(
                "ground matrix diagonal must be zero".into(),
            ));
        }
        for j in 0..k {
            if !(g[i][j] >= T::zero()) || !g[i][j].is_finite() {
                return Err(Error::InvalidConfig(
                    "ground matrix entries must be finite and non-negative".into(),
                ));
            }
            if g[i][j] != g[j][i] {
                return Err(Error::InvalidConfig(
                    "ground matrix must be symmetric".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Reads a K×K ground matrix from headerless CSV.
pub fn read_ground_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MalformedLine {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        rows.push(row);
    }
    validate_ground(&rows)?;
    Ok(rows)
}

/// The four distances for an ordered (source, target) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceVector<T> {
    pub chi2: T,
    pub mmd: T,
    pub emd: T,
    pub kld: T,
    pub degenerate_flags: BTreeSet<String>,
}

/// Add-λ smoothing followed by renormalization.
pub fn smooth<T: Scalar>(p: &FeatureDistribution<T>, lambda: T) -> FeatureDistribution<T> {
    let denom = T::one() + T::from_count(p.len()) * lambda;
    FeatureDistribution {
        support: Arc::clone(&p.support),
        mass: p.mass.iter().map(|&m| (m + lambda) / denom).collect(),
        token_total: p.token_total,
        uniform_fallback: p.uniform_fallback,
    }
}

fn check_support<T: Scalar>(p: &FeatureDistribution<T>, q: &FeatureDistribution<T>) -> Result<()> {
    if p.same_support(q) {
        Ok(())
    } else {
        Err(Error::SupportMismatch)
    }
}

/// Σ (p'−q')²/q' over λ-smoothed copies of both arguments.
pub fn chi2_divergence<T: Scalar>(
    p: &FeatureDistribution<T>,
    q: &FeatureDistribution<T>,
    cfg: &DistanceConfig<T>,
) -> Result<T> {
    check_support(p, q)?;
    let (p, q) = (smooth(p, cfg.chi2_lambda), smooth(q, cfg.chi2_lambda));
    Ok(chi2_raw(&p.mass, &q.mass))
}

pub(crate) fn chi2_raw<T: Scalar>(p: &[T], q: &[T]) -> T {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let d = pi - qi;
            if d == T::zero() {
                T::zero()
            } else {
                d * d / qi
            }
        })
        .sum()
}

/// Σ p' ln(p'/q') over λ-smoothed copies of both arguments, natural log.
pub fn kl_divergence<T: Scalar>(
    p: &FeatureDistribution<T>,
    q: &FeatureDistribution<T>,
    cfg: &DistanceConfig<T>,
) -> Result<T> {
    check_support(p, q)?;
    let (p, q) = (smooth(p, cfg.kld_lambda), smooth(q, cfg.kld_lambda));
    Ok(kl_raw(&p.mass, &q.mass))
}

pub(crate) fn kl_raw<T: Scalar>(p: &[T], q: &[T]) -> T {
    let total: T = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi == T::zero() || pi == qi {
                T::zero()
            } else {
                pi * (pi / qi).ln()
            }
        })
        .sum();
    // rounding can leave a tiny negative sum for nearly equal inputs
    total.max(T::zero())
}

/// Transport cost between `p` and `q`. Binary ground metric uses the closed
/// form ½‖p − q‖₁.
pub fn emd<T: Scalar>(
    p: &FeatureDistribution<T>,
    q: &FeatureDistribution<T>,
    cfg: &DistanceConfig<T>,
) -> Result<T> {
    check_support(p, q)?;
    match &cfg.ground_metric {
        GroundMetric::Binary => Ok(total_variation(&p.mass, &q.mass)),
        GroundMetric::Custom(g) => emd_with_ground(&p.mass, &q.mass, g),
    }
}

pub fn total_variation<T: Scalar>(p: &[T], q: &[T]) -> T {
    p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<T>() / T::lit(2.0)
}

pub fn emd_with_ground<T: Scalar>(p: &[T], q: &[T], ground: &[Vec<T>]) -> Result<T> {
    let k = p.len();
    if ground.len() != k || ground.iter().any(|r| r.len() != k) {
        return Err(Error::GroundMatrixShape {
            rows: ground.len(),
            cols: ground.first().map_or(0, Vec::len),
            expected: k,
        });
    }
    if p == q {
        return Ok(T::zero());
    }
    let cost: Vec<T> = ground.iter().flatten().copied().collect();
    Ok(transport::solve(p, q, &cost)?.cost.max(T::zero()))
}

/// Outcome of the MMD estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdEstimate<T> {
    pub value: T,
    pub sigma: T,
    pub sample_size: usize,
    /// Bandwidth came out as zero (all pooled points identical).
    pub degenerate: bool,
}

fn sample_rows<T: Scalar>(m: &DocVectorMatrix<T>, size: usize, seed: u64) -> DocVectorMatrix<T> {
    if m.n_rows() <= size {
        return m.clone();
    }
    let mut picked = index::sample(&mut rng(seed), m.n_rows(), size).into_vec();
    picked.sort_unstable();
    m.select_rows(&picked)
}

/// Visits squared Euclidean distances between rows of `a` and rows of `b`,
/// row-major. With `upper_only` and `a` = `b`, only pairs `i < j` are visited.
fn visit_squared_distances<T: Scalar>(
    a: &[SparseRow<T>],
    b: &[SparseRow<T>],
    dim: usize,
    upper_only: bool,
    mut visit: impl FnMut(T),
) {
    let b_norms: Vec<T> = b.iter().map(SparseRow::squared_norm).collect();
    let mut dense = vec![T::zero(); dim];
    for (row, x) in a.iter().enumerate() {
        for (&i, &v) in x.indices.iter().zip(&x.values) {
            dense[i] = v;
        }
        let x_norm = x.squared_norm();
        let start = if upper_only { row + 1 } else { 0 };
        for (y, &y_norm) in b[start..].iter().zip(&b_norms[start..]) {
            let cross = y.dot_dense(&dense);
            visit((x_norm + y_norm - T::lit(2.0) * cross).max(T::zero()));
        }
        for &i in &x.indices {
            dense[i] = T::zero();
        }
    }
}

fn median<T: Scalar>(mut values: Vec<T>) -> T {
    let n = values.len();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("distances are finite");
    let mid = n / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max);
        (lower + upper) / T::lit(2.0)
    }
}

/// Median heuristic: median Euclidean distance over distinct pooled pairs.
fn median_bandwidth<T: Scalar>(a: &[SparseRow<T>], b: &[SparseRow<T>], dim: usize) -> T {
    let pooled: Vec<SparseRow<T>> = a.iter().chain(b).cloned().collect();
    let n = pooled.len();
    let mut distances = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    visit_squared_distances(&pooled, &pooled, dim, true, |d| distances.push(d.sqrt()));
    if distances.is_empty() {
        return T::zero();
    }
    median(distances)
}

fn kernel_mean<T: Scalar>(a: &[SparseRow<T>], b: &[SparseRow<T>], dim: usize, gamma: T) -> T {
    let mut total = T::zero();
    visit_squared_distances(a, b, dim, false, |d| total += (-d * gamma).exp());
    total / T::from_count(a.len() * b.len())
}

/// Biased (V-statistic) MMD with a Gaussian RBF kernel.
///
/// Sets larger than `mmd_max_samples` are subsampled to the cap, then the
/// larger set is subsampled to the smaller one's size. Row subsets are drawn
/// from `seed` alone, so swapping the arguments draws the same rows.
pub fn mmd<T: Scalar>(
    samples_a: &DocVectorMatrix<T>,
    samples_b: &DocVectorMatrix<T>,
    cfg: &DistanceConfig<T>,
    seed: u64,
) -> Result<MmdEstimate<T>> {
    if samples_a.n_rows() == 0 || samples_b.n_rows() == 0 {
        return Err(Error::InvalidInput(
            "mmd needs non-empty sample sets".into(),
        ));
    }
    if samples_a.dim != samples_b.dim {
        return Err(Error::InvalidInput(
            "mmd sample sets differ in dimension".into(),
        ));
    }
    let cap_seed = derive_seed(seed, &["mmd-cap"]);
    let a = sample_rows(samples_a, cfg.mmd_max_samples, cap_seed);
    let b = sample_rows(samples_b, cfg.mmd_max_samples, cap_seed);
    let n = a.n_rows().min(b.n_rows());
    let match_seed = derive_seed(seed, &["mmd-match"]);
    let a = sample_rows(&a, n, match_seed);
    let b = sample_rows(&b, n, match_seed);
    let dim = a.dim;

    let sigma = match cfg.mmd_sigma {
        Some(s) => s,
        None => median_bandwidth(&a.rows, &b.rows, dim),
    };
    if sigma == T::zero() {
        return Ok(MmdEstimate {
            value: T::zero(),
            sigma,
            sample_size: n,
            degenerate: true,
        });
    }
    let gamma = T::one() / (T::lit(2.0) * sigma * sigma);
    let kaa = kernel_mean(&a.rows, &a.rows, dim, gamma);
    let kbb = kernel_mean(&b.rows, &b.rows, dim, gamma);
    let kab = kernel_mean(&a.rows, &b.rows, dim, gamma);
    let value = (kaa + kbb - T::lit(2.0) * kab).max(T::zero()).sqrt();
    Ok(MmdEstimate {
        value,
        sigma,
        sample_size: n,
        degenerate: false,
    })
}

/// All four distances from `source` to `target`.
///
/// Distributions share the top-`k` support of the pair and are length-matched:
/// both are reduced to the smaller support-token total before comparison.
/// MMD runs on TF-IDF rows over the same support with idf fit on the pooled pair.
/// Target labels are never read.
pub fn distance_vector<T: Scalar>(
    source: &LabeledCorpus,
    target: &LabeledCorpus,
    cfg: &DistanceConfig<T>,
    k: usize,
    seed: u64,
) -> Result<DistanceVector<T>> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if k == 0 {
        return Err(Error::InvalidConfig(
            "top_k_features must be at least 1".into(),
        ));
    }
    cfg.validate()?;
    let support = Arc::new(top_k_support(source, target, k));
    if support.is_empty() {
        return Err(Error::InvalidInput(format!(
            "corpora {} and {} contain no tokens",
            source.name, target.name
        )));
    }
    let counts_s = support_counts(source, &support);
    let counts_t = support_counts(target, &support);
    let budget = counts_s.iter().sum::<usize>().min(counts_t.iter().sum());
    let p: FeatureDistribution<T> = distribution_from_counts(
        Arc::clone(&support),
        &counts_s,
        Some(budget),
        derive_seed(seed, &["tokens", "source"]),
    )?;
    let q: FeatureDistribution<T> = distribution_from_counts(
        Arc::clone(&support),
        &counts_t,
        Some(budget),
        derive_seed(seed, &["tokens", "target"]),
    )?;

    let mut flags = BTreeSet::new();
    if p.uniform_fallback {
        flags.insert(FLAG_UNIFORM_SOURCE.to_string());
    }
    if q.uniform_fallback {
        flags.insert(FLAG_UNIFORM_TARGET.to_string());
    }

    let vocab = Vocabulary::from_terms(&support, source.documents.iter().chain(&target.documents));
    let rows_s: DocVectorMatrix<T> = tfidf_rows(&source.documents, &vocab);
    let rows_t: DocVectorMatrix<T> = tfidf_rows(&target.documents, &vocab);
    let mmd_est = mmd(&rows_s, &rows_t, cfg, derive_seed(seed, &["mmd"]))?;
    if mmd_est.degenerate {
        flags.insert(FLAG_MMD_ZERO_BANDWIDTH.to_string());
    }

    Ok(DistanceVector {
        chi2: chi2_divergence(&p, &q, cfg)?,
        mmd: mmd_est.value,
        emd: emd(&p, &q, cfg)?,
        kld: kl_divergence(&p, &q, cfg)?,
        degenerate_flags: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Weighting;
    use proptest::prelude::*;

    fn dist(m: &[f64]) -> FeatureDistribution<f64> {
        FeatureDistribution::from_probabilities(m).unwrap()
    }

    fn raw_cfg() -> DistanceConfig<f64> {
        // λ = 0 reproduces the unsmoothed hand values; only reachable in tests
        DistanceConfig {
            chi2_lambda: 0.0,
            kld_lambda: 0.0,
            ..DistanceConfig::default()
        }
    }

    #[test]
    fn smoothing_examples() {
        let s = smooth(&dist(&[1.0, 0.0]), 0.05);
        assert!((s.mass[0] - 1.05 / 1.1).abs() < 1e-15);
        assert!((s.mass[1] - 0.05 / 1.1).abs() < 1e-15);
        assert!((s.mass[0] - 0.954545).abs() < 1e-6);
        let u = smooth(&dist(&[0.25; 4]), 0.3);
        assert!(u.mass.iter().all(|&m| (m - 0.25).abs() < 1e-15));
        let tiny = smooth(&dist(&[0.7, 0.3]), 1e-15);
        assert!((tiny.mass[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn chi2_hand_values() {
        let cfg = raw_cfg();
        let v = chi2_divergence(&dist(&[0.75, 0.25]), &dist(&[0.5, 0.5]), &cfg).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        let fwd = chi2_divergence(&dist(&[0.9, 0.1]), &dist(&[0.5, 0.5]), &cfg).unwrap();
        let rev = chi2_divergence(&dist(&[0.5, 0.5]), &dist(&[0.9, 0.1]), &cfg).unwrap();
        // 0.16/0.5 + 0.16/0.5
        assert!((fwd - 0.64).abs() < 1e-12);
        // 0.16/0.9 + 0.16/0.1
        assert!((rev - (0.16 / 0.9 + 0.16 / 0.1)).abs() < 1e-12);
        assert!(fwd != rev);
    }

    #[test]
    fn kl_hand_values() {
        let cfg = raw_cfg();
        let p = dist(&[0.75, 0.25]);
        let q = dist(&[0.5, 0.5]);
        assert!((kl_divergence(&p, &q, &cfg).unwrap() - 0.130812).abs() < 1e-6);
        assert!((kl_divergence(&q, &p, &cfg).unwrap() - 0.143841).abs() < 1e-6);
    }

    #[test]
    fn emd_binary_examples() {
        let cfg = DistanceConfig::default();
        assert_eq!(
            emd(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0]), &cfg).unwrap(),
            1.0
        );
        assert!((emd(&dist(&[0.8, 0.2]), &dist(&[0.5, 0.5]), &cfg).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn emd_custom_ground_shape_errors() {
        let cfg = DistanceConfig {
            ground_metric: GroundMetric::Custom(vec![vec![0.0]]),
            ..DistanceConfig::default()
        };
        let err = emd(&dist(&[0.5, 0.5]), &dist(&[0.5, 0.5]), &cfg).unwrap_err();
        assert!(matches!(err, Error::GroundMatrixShape { expected: 2, .. }));
    }

    #[test]
    fn mismatched_support_is_rejected() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.2, 0.3, 0.5]);
        let cfg = DistanceConfig::default();
        assert!(matches!(
            chi2_divergence(&p, &q, &cfg),
            Err(Error::SupportMismatch)
        ));
        assert!(matches!(
            kl_divergence(&p, &q, &cfg),
            Err(Error::SupportMismatch)
        ));
        assert!(matches!(emd(&p, &q, &cfg), Err(Error::SupportMismatch)));
    }

    fn dense_matrix(rows: &[Vec<f64>]) -> DocVectorMatrix<f64> {
        DocVectorMatrix {
            rows: rows
                .iter()
                .map(|r| {
                    let (indices, values) = r
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(i, v)| (i, *v))
                        .unzip();
                    SparseRow { indices, values }
                })
                .collect(),
            dim: rows[0].len(),
            weighting: Weighting::TfIdf,
        }
    }

    #[test]
    fn mmd_single_points_closed_form() {
        // ‖a − b‖² = 2σ² with σ = 1
        let a = dense_matrix(&[vec![0.0, 0.0]]);
        let b = dense_matrix(&[vec![1.0, 1.0]]);
        let cfg = DistanceConfig {
            mmd_sigma: Some(1.0),
            ..DistanceConfig::default()
        };
        let v = mmd(&a, &b, &cfg, 0).unwrap().value;
        assert!((v - (2.0 - 2.0 * (-1.0f64).exp()).sqrt()).abs() < 1e-12);
        assert!((v - 1.1243848).abs() < 1e-7);
    }

    #[test]
    fn mmd_identical_sets_and_wide_kernel() {
        let a = dense_matrix(&[vec![0.1, 0.9], vec![0.5, 0.2], vec![0.0, 0.3]]);
        let cfg = DistanceConfig::default();
        assert_eq!(mmd(&a, &a, &cfg, 9).unwrap().value, 0.0);
        let b = dense_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.7]]);
        let wide = DistanceConfig {
            mmd_sigma: Some(1e8),
            ..DistanceConfig::default()
        };
        assert!(mmd(&a, &b, &wide, 9).unwrap().value < 1e-6);
    }

    #[test]
    fn mmd_zero_bandwidth_is_flagged() {
        let a = dense_matrix(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let est = mmd(&a, &a, &DistanceConfig::default(), 0).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn mmd_caps_and_matches_sizes() {
        let a = dense_matrix(&(0..9).map(|i| vec![i as f64, 1.0]).collect::<Vec<_>>());
        let b = dense_matrix(&(0..4).map(|i| vec![1.0, i as f64]).collect::<Vec<_>>());
        let cfg = DistanceConfig {
            mmd_max_samples: 3,
            ..DistanceConfig::default()
        };
        let est = mmd(&a, &b, &cfg, 1).unwrap();
        assert_eq!(est.sample_size, 3);
        let rev = mmd(&b, &a, &cfg, 1).unwrap();
        assert!((est.value - rev.value).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn ground_matrix_csv() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("g.csv");
        fs::write(&good, "0,1\n1,0\n").unwrap();
        assert_eq!(
            read_ground_matrix(&good).unwrap(),
            vec![vec![0.0, 1.0], vec![1.0, 0.0]]
        );
        let asym = dir.path().join("a.csv");
        fs::write(&asym, "0,1\n2,0\n").unwrap();
        assert!(read_ground_matrix(&asym).is_err());
    }

    #[test]
    fn distance_vector_on_same_corpus_is_zero() {
        let c = LabeledCorpus::from_texts(
            "s",
            [
                ("good movie", Some(1)),
                ("bad plot", Some(0)),
                ("good acting here", Some(1)),
            ],
        );
        let v: DistanceVector<f64> =
            distance_vector(&c, &c, &DistanceConfig::default(), 1000, 5).unwrap();
        assert_eq!(v.chi2, 0.0);
        assert_eq!(v.kld, 0.0);
        assert_eq!(v.emd, 0.0);
        assert!(v.mmd <= 1e-9);
    }

    fn simplex_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, len).prop_map(|v| {
            let s: f64 = v.iter().sum();
            if s == 0.0 {
                vec![1.0 / v.len() as f64; v.len()]
            } else {
                v.iter().map(|x| x / s).collect()
            }
        })
    }

    proptest! {
        #[test]
        fn distances_non_negative_with_identity(
            (p, q) in (1usize..12).prop_flat_map(|k| (simplex_vec(k), simplex_vec(k))),
            lambda in 1e-6f64..1.0,
        ) {
            let cfg = DistanceConfig { chi2_lambda: lambda, kld_lambda: lambda, ..DistanceConfig::default() };
            let (p, q) = (dist(&p), dist(&q));
            for v in [
                chi2_divergence(&p, &q, &cfg).unwrap(),
                kl_divergence(&p, &q, &cfg).unwrap(),
                emd(&p, &q, &cfg).unwrap(),
            ] {
                prop_assert!(v >= 0.0 && v.is_finite());
            }
            prop_assert_eq!(chi2_divergence(&p, &p, &cfg).unwrap(), 0.0);
            prop_assert_eq!(kl_divergence(&p, &p, &cfg).unwrap(), 0.0);
            prop_assert_eq!(emd(&p, &p, &cfg).unwrap(), 0.0);
            prop_assert_eq!(emd(&p, &q, &cfg).unwrap(), emd(&q, &p, &cfg).unwrap());
        }

        #[test]
        fn smoothing_stays_on_simplex(p in (1usize..20).prop_flat_map(simplex_vec), lambda in 1e-9f64..10.0) {
            let s = smooth(&dist(&p), lambda);
            prop_assert!((s.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.mass.iter().all(|&m| m > 0.0));
        }

        #[test]
        fn binary_emd_triangle_inequality(
            (p, q, r) in (1usize..10).prop_flat_map(|k| (simplex_vec(k), simplex_vec(k), simplex_vec(k))),
        ) {
            let cfg = DistanceConfig::default();
            let (p, q, r) = (dist(&p), dist(&q), dist(&r));
            let pq = emd(&p, &q, &cfg).unwrap();
            let qr = emd(&q, &r, &cfg).unwrap();
            let pr = emd(&p, &r, &cfg).unwrap();
            prop_assert!(pr <= pq + qr + 1e-9);
        }

        #[test]
        fn custom_binary_ground_matches_total_variation(
            (p, q) in (1usize..7).prop_flat_map(|k| (simplex_vec(k), simplex_vec(k))),
        ) {
            let k = p.len();
            let g: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
            let lp = emd_with_ground(&p, &q, &g).unwrap();
            prop_assert!((lp - total_variation(&p, &q)).abs() < 1e-9);
        }
    }
}
