use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::PathBuf;

use cmek::bench::{outer_loo_benchmark_with, random_baseline, Predictor};
use cmek::classifier::{cross_error, inner_error, train, TrainConfig};
use cmek::cmek::{
    fit_weights, select, union_corpus, DistanceFeatureVector, PairTable, TrainingPair,
};
use cmek::corpus::{load_corpus, Manifest};
use cmek::distances::{distance_vector, DistanceConfig};
use cmek::synthgen::{generate_family, DomainSpec};
use cmek::{Error, GlobalConfig, LabeledCorpus, PredictorWeights};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DOMAINS: [&str; 4] = ["books", "dvd", "electronics", "kitchen"];

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn fixtures() -> Vec<LabeledCorpus> {
    DOMAINS
        .iter()
        .map(|d| load_corpus(&fixture_dir().join(format!("{d}.jsonl")), d).unwrap())
        .collect()
}

fn fixture_config() -> GlobalConfig {
    GlobalConfig {
        fold_count: 5,
        random_subsets: 5,
        worst_k: 1,
        ..GlobalConfig::default()
    }
}

// ---- straight-line oracle over the raw fixture files ----

fn raw_docs(domain: &str) -> Vec<Vec<String>> {
    let text = fs::read_to_string(fixture_dir().join(format!("{domain}.jsonl"))).unwrap();
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            let s = v["text"].as_str().unwrap().to_lowercase();
            let s: String = s.chars().filter(|c| !c.is_ascii_punctuation()).collect();
            s.split_whitespace().map(String::from).collect()
        })
        .collect()
}

fn grams(doc: &[String]) -> Vec<String> {
    let mut out: Vec<String> = doc.to_vec();
    for i in 1..doc.len() {
        out.push(format!("{} {}", doc[i - 1], doc[i]));
    }
    out
}

fn count_all(docs: &[Vec<String>]) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for d in docs {
        for g in grams(d) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

fn oracle_distances(a: &[Vec<String>], b: &[Vec<String>], k: usize) -> [f64; 4] {
    let (ca, cb) = (count_all(a), count_all(b));
    let mut pooled: Vec<(String, usize)> = ca
        .keys()
        .chain(cb.keys())
        .cloned()
        .collect::<HashSet<_>>()
        .into_iter()
        .map(|g| {
            let n = ca.get(&g).copied().unwrap_or(0) + cb.get(&g).copied().unwrap_or(0);
            (g, n)
        })
        .collect();
    pooled.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    pooled.truncate(k);
    let support: Vec<String> = pooled.into_iter().map(|(g, _)| g).collect();
    let dist = |c: &HashMap<String, usize>| -> Vec<f64> {
        let v: Vec<f64> = support
            .iter()
            .map(|g| c.get(g).copied().unwrap_or(0) as f64)
            .collect();
        let t: f64 = v.iter().sum();
        v.iter().map(|x| x / t).collect()
    };
    let (p, q) = (dist(&ca), dist(&cb));
    let smooth = |v: &[f64], l: f64| -> Vec<f64> {
        v.iter()
            .map(|x| (x + l) / (1.0 + l * v.len() as f64))
            .collect()
    };
    let (p2, q2) = (smooth(&p, 0.05), smooth(&q, 0.05));
    let chi2: f64 = p2.iter().zip(&q2).map(|(x, y)| (x - y).powi(2) / y).sum();
    let (pk, qk) = (smooth(&p, 1e-5), smooth(&q, 1e-5));
    let kld: f64 = pk.iter().zip(&qk).map(|(x, y)| x * (x / y).ln()).sum();
    let emd: f64 = p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;

    // TF-IDF over the pooled pair, L2-normalized rows, median bandwidth, V-statistic.
    let all: Vec<&Vec<String>> = a.iter().chain(b).collect();
    let col: HashMap<&str, usize> = support
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let mut df = vec![0usize; support.len()];
    for d in &all {
        let seen: HashSet<usize> = grams(d)
            .iter()
            .filter_map(|g| col.get(g.as_str()).copied())
            .collect();
        for c in seen {
            df[c] += 1;
        }
    }
    let n = all.len() as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&f| 1.0 + ((1.0 + n) / (1.0 + f as f64)).ln())
        .collect();
    let row = |d: &Vec<String>| -> Vec<f64> {
        let mut v = vec![0.0; support.len()];
        for g in grams(d) {
            if let Some(&c) = col.get(g.as_str()) {
                v[c] += idf[c];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect()
    };
    let ra: Vec<Vec<f64>> = a.iter().map(row).collect();
    let rb: Vec<Vec<f64>> = b.iter().map(row).collect();
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
    let pooled_rows: Vec<&Vec<f64>> = ra.iter().chain(&rb).collect();
    let mut ds = Vec::new();
    for i in 0..pooled_rows.len() {
        for j in i + 1..pooled_rows.len() {
            ds.push(sq(pooled_rows[i], pooled_rows[j]).sqrt());
        }
    }
    ds.sort_by(f64::total_cmp);
    let m = ds.len() / 2;
    let sigma = if ds.len() % 2 == 1 {
        ds[m]
    } else {
        (ds[m - 1] + ds[m]) / 2.0
    };
    let kmean = |x: &[Vec<f64>], y: &[Vec<f64>]| -> f64 {
        let mut t = 0.0;
        for u in x {
            for v in y {
                t += (-sq(u, v) / (2.0 * sigma * sigma)).exp();
            }
        }
        t / (x.len() * y.len()) as f64
    };
    let mmd = (kmean(&ra, &ra) + kmean(&rb, &rb) - 2.0 * kmean(&ra, &rb))
        .max(0.0)
        .sqrt();
    [chi2, mmd, emd, kld]
}

#[test]
fn fixture_distances_match_straight_line_oracle() {
    let corpora = fixtures();
    let cfg = DistanceConfig::<f64>::default();
    for (i, a) in DOMAINS.iter().enumerate() {
        for (j, b) in DOMAINS.iter().enumerate() {
            if i == j {
                continue;
            }
            // a support covering every n-gram keeps both token totals at 220,
            // so no length-matching subsample is drawn
            let got = distance_vector(&corpora[i], &corpora[j], &cfg, 1000, 7).unwrap();
            let want = oracle_distances(&raw_docs(a), &raw_docs(b), 1000);
            let got = [got.chi2, got.mmd, got.emd, got.kld];
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-9, "{a}->{b}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn manifest_loads_all_fixtures_in_order() {
    let loaded = Manifest::load(&fixture_dir().join("manifest.json"))
        .unwrap()
        .load_all()
        .unwrap();
    let names: Vec<&str> = loaded.iter().map(|(_, c)| c.name.as_str()).collect();
    assert_eq!(names, DOMAINS);
    assert!(loaded
        .iter()
        .all(|(_, c)| c.len() == 20 && c.class_counts() == [10, 10]));
}

#[test]
fn malformed_line_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.jsonl"),
        "{\"text\": \"fine\", \"label\": 1}\nnot json\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("manifest.json"),
        r#"[{"name": "bad", "path": "bad.jsonl", "role": "candidate"}]"#,
    )
    .unwrap();
    let err = Manifest::load(&dir.path().join("manifest.json"))
        .unwrap()
        .load_all()
        .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("bad.jsonl") && msg.contains('2'), "{msg}");
}

fn fitted(corpora: &[LabeledCorpus], cfg: &GlobalConfig) -> PredictorWeights {
    let table = PairTable::compute(corpora, cfg, true).unwrap();
    let members: Vec<usize> = (0..corpora.len()).collect();
    fit_weights(&table.training_pairs(&members).unwrap(), false).unwrap()
}

#[test]
fn selection_never_reads_target_labels() {
    let corpora = fixtures();
    let cfg = fixture_config();
    let candidates = &corpora[..3];
    let weights = fitted(candidates, &cfg);
    let target = &corpora[3];
    let plain = select(&weights, candidates, target, 3, &cfg).unwrap();
    let stripped = select(&weights, candidates, &target.without_labels(), 3, &cfg).unwrap();
    let flipped = select(&weights, candidates, &target.with_flipped_labels(), 3, &cfg).unwrap();
    assert_eq!(plain, stripped);
    assert_eq!(plain, flipped);
}

#[test]
fn selection_is_invariant_to_weight_scale_and_candidate_order() {
    let corpora = fixtures();
    let cfg = fixture_config();
    let candidates = corpora[..3].to_vec();
    let weights = fitted(&candidates, &cfg);
    let base = select(&weights, &candidates, &corpora[3], 3, &cfg).unwrap();
    let names = |r: &[cmek::cmek::Ranked]| r.iter().map(|x| x.name.clone()).collect::<Vec<_>>();

    let scaled = PredictorWeights::from_beta(weights.beta.map(|b| b * 3.5));
    assert_eq!(
        names(&base),
        names(&select(&scaled, &candidates, &corpora[3], 3, &cfg).unwrap())
    );

    let reversed: Vec<LabeledCorpus> = candidates.iter().rev().cloned().collect();
    let again = select(&weights, &reversed, &corpora[3], 3, &cfg).unwrap();
    assert_eq!(base, again);
}

#[test]
fn selection_size_is_checked() {
    let corpora = fixtures();
    let cfg = fixture_config();
    let weights = PredictorWeights::from_beta([0.1; 6]);
    for n in [0, 4] {
        let err = select(&weights, &corpora[..3], &corpora[3], n, &cfg).unwrap_err();
        assert!(matches!(err, Error::SelectionSize { .. }), "{err}");
    }
}

#[test]
fn union_training_is_reproducible() {
    let corpora = fixtures();
    let cfg = TrainConfig::default();
    let ab = union_corpus(&[&corpora[0], &corpora[1]]).unwrap();
    let ab_again = union_corpus(&[&corpora[0], &corpora[1]]).unwrap();
    assert_eq!(ab.len(), 40);
    assert_eq!(ab.name, "books+dvd");
    let h1 = train(&ab, &cfg).unwrap();
    let h2 = train(&ab_again, &cfg).unwrap();
    assert_eq!(h1.weights, h2.weights);
    assert_eq!(h1.bias, h2.bias);
}

#[test]
fn random_baseline_matches_monte_carlo() {
    let errors: BTreeMap<String, f64> = [
        ("a", 0.10),
        ("b", 0.25),
        ("c", 0.25),
        ("d", 0.40),
        ("e", 0.05),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let stats = random_baseline(&errors, 2).unwrap();
    let values: Vec<f64> = errors.values().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 1_000_000;
    let (mut sum, mut best, mut worst) = (0.0, 0usize, 0usize);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let kth = sorted[1];
    for _ in 0..draws {
        let v = *values.choose(&mut rng).unwrap();
        sum += v;
        best += usize::from(v == min);
        worst += usize::from(v >= kth);
    }
    let n = draws as f64;
    let se_p = |p: f64| (p * (1.0 - p) / n).sqrt();
    assert!((stats.avg_error - sum / n).abs() < 3.0 * 0.13 / n.sqrt());
    assert!((stats.prob_best - best as f64 / n).abs() < 3.0 * se_p(stats.prob_best));
    assert!((stats.prob_worst_k - worst as f64 / n).abs() < 3.0 * se_p(stats.prob_worst_k));
}

fn small_spec(seed: u64) -> DomainSpec {
    DomainSpec {
        seed,
        n_docs: 300,
        ..DomainSpec::default()
    }
}

#[test]
fn synthetic_identical_domains_transfer_like_inner() {
    let family = generate_family(11, &[0.0, 0.0], &small_spec(5)).unwrap();
    let cfg = TrainConfig::default();
    let inner = inner_error(&family[1], &cfg, 5).unwrap().error;
    let cross = cross_error(&family[0], &family[1], &cfg).unwrap().error;
    assert!((cross - inner).abs() < 0.05, "cross {cross} inner {inner}");
}

#[test]
fn synthetic_full_shift_is_near_chance() {
    let family = generate_family(11, &[0.0, 1.0], &small_spec(5)).unwrap();
    let cross = cross_error(&family[0], &family[1], &TrainConfig::default())
        .unwrap()
        .error;
    assert!((cross - 0.5).abs() < 0.1, "cross {cross}");
}

#[test]
fn synthetic_label_noise_half_is_unlearnable() {
    let spec = DomainSpec {
        noise: 0.5,
        ..small_spec(9)
    };
    let family = generate_family(11, &[0.0], &spec).unwrap();
    let inner = inner_error(&family[0], &TrainConfig::default(), 5)
        .unwrap()
        .error;
    assert!((inner - 0.5).abs() < 0.1, "inner {inner}");
}

#[test]
fn fixture_benchmark_runs_every_target() {
    let corpora = fixtures();
    let cfg = fixture_config();
    let report = outer_loo_benchmark_with(&corpora, &cfg, Predictor::Cmek).unwrap();
    assert_eq!(report.runs.len(), 4);
    let targets: Vec<&str> = report.runs.iter().map(|r| r.target_name.as_str()).collect();
    assert_eq!(targets, DOMAINS);
    for run in &report.runs {
        assert_eq!(run.per_candidate_true_error.len(), 3);
        assert!(run.relative_error >= -1e-12);
        assert!(run.selected_error >= run.optimal_error);
    }
    // worst_k = 1 with 3 candidates still leaves the worst-k statistic defined
    assert!(report.prob_worst5.is_some());
}

#[test]
fn oracle_topn_curve_never_rises_at_n_one() {
    let corpora = fixtures();
    let cfg = fixture_config();
    let report = outer_loo_benchmark_with(&corpora, &cfg, Predictor::Oracle).unwrap();
    assert_eq!(report.avg_abs_error, report.optimal.avg_abs_error);
    assert_eq!(report.prob_best, 1.0);
    for run in &report.runs {
        let first = &run.topn[0];
        assert_eq!(first.cmek_error, run.optimal_error);
    }
}

#[test]
fn benchmark_needs_four_labeled_corpora() {
    let corpora = fixtures();
    let err =
        outer_loo_benchmark_with(&corpora[..3], &fixture_config(), Predictor::Cmek).unwrap_err();
    assert!(err.to_string().contains("at least 4"), "{err}");
}

fn feature_strategy() -> impl Strategy<Value = Vec<([f64; 6], f64)>> {
    prop::collection::vec((prop::array::uniform6(0.0..2.0f64), 0.0..0.6f64), 6..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lad_weights_are_nonnegative_and_beat_zero(rows in feature_strategy()) {
        let pairs: Vec<TrainingPair<f64>> = rows
            .iter()
            .map(|(x, y)| TrainingPair { features: DistanceFeatureVector::from_values(*x), true_error: *y })
            .collect();
        let w = fit_weights(&pairs, false).unwrap();
        prop_assert!(w.beta.iter().all(|&b| b >= 0.0));
        let zero_loss: f64 = rows.iter().map(|(_, y)| y.abs()).sum();
        prop_assert!(w.objective <= zero_loss + 1e-9);
        let loss: f64 = rows
            .iter()
            .map(|(x, y)| (y - x.iter().zip(&w.beta).map(|(a, b)| a * b).sum::<f64>()).abs())
            .sum();
        prop_assert!((loss - w.objective).abs() < 1e-7 * (1.0 + loss));
    }

    #[test]
    fn shuffling_pairs_keeps_the_objective(rows in feature_strategy(), seed in any::<u64>()) {
        let pairs: Vec<TrainingPair<f64>> = rows
            .iter()
            .map(|(x, y)| TrainingPair { features: DistanceFeatureVector::from_values(*x), true_error: *y })
            .collect();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = fit_weights(&pairs, false).unwrap();
        let b = fit_weights(&shuffled, false).unwrap();
        prop_assert!((a.objective - b.objective).abs() < 1e-7 * (1.0 + a.objective));
    }
}
