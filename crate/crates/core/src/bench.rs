//! Outer leave-one-out evaluation: each corpus in turn is the unseen target,
//! the predictor is fit on the rest, and the selection is scored against the
//! optimal, random and all-domains baselines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate, train, ErrorKind, Hypothesis};
use crate::cmek::{fit_weights, predict, rank, union_corpus, PairTable};
use crate::config::GlobalConfig;
use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::features::csv_field;
use crate::seed::{derive_seed, rng};
use crate::stats::paired_ttest;
use crate::Real;

/// Width of the default relative-error histogram bins.
pub const FIG3_BIN_WIDTH: Real = 0.025;

/// Source of the per-candidate predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    #[default]
    Cmek,
    /// Predictions are the true cross errors; a soundness check of the harness.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopnPoint {
    pub n: usize,
    pub cmek_error: Real,
    pub random_error: Real,
    pub all_domains_error: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub target_name: String,
    pub per_candidate_true_error: BTreeMap<String, Real>,
    pub per_candidate_predicted: BTreeMap<String, Real>,
    /// Every candidate, best prediction first.
    pub selected: Vec<String>,
    /// True error of the top selection.
    pub selected_error: Real,
    pub optimal_error: Real,
    /// `selected_error − optimal_error`.
    pub relative_error: Real,
    pub all_domains_error: Real,
    pub weights: Vec<Real>,
    pub topn: Vec<TopnPoint>,
}

/// Closed-form expectation of picking one candidate uniformly at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub avg_error: Real,
    pub prob_best: Real,
    pub prob_worst_k: Real,
}

/// Per-method aggregates over runs. `prob_worst5` counts the worst
/// `worst_k` candidates and is `None` when there are too few candidates for
/// the metric to mean anything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub avg_abs_error: Real,
    pub prob_best: Real,
    pub prob_worst5: Option<Real>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub comparison: String,
    pub t: Option<Real>,
    pub p: Option<Real>,
    pub normality_stat: Option<Real>,
    /// Why the test could not be computed.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub predictor: Predictor,
    pub seed: u64,
    pub worst_k: usize,
    pub random_subsets: usize,
    pub runs: Vec<RunResult>,
    pub prob_best: Real,
    pub prob_worst5: Option<Real>,
    pub avg_abs_error: Real,
    pub random_baseline: Aggregates,
    pub optimal: Aggregates,
    pub all_domains_avg_error: Real,
    pub topn_curve: Vec<TopnPoint>,
    pub ttests: Vec<TTestRow>,
}

impl SelectionReport {
    pub fn cmek(&self) -> Aggregates {
        Aggregates {
            avg_abs_error: self.avg_abs_error,
            prob_best: self.prob_best,
            prob_worst5: self.prob_worst5,
        }
    }
}

/// Whether `error` is among the `k` largest values (ties with the k-th included).
fn in_worst_k(errors: &[Real], error: Real, k: usize) -> bool {
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k.min(sorted.len()) - 1];
    error >= threshold
}

fn min_error(errors: &BTreeMap<String, Real>) -> Real {
    errors.values().copied().fold(Real::INFINITY, Real::min)
}

/// Exact uniform expectation over the candidates.
pub fn random_baseline(errors: &BTreeMap<String, Real>, worst_k: usize) -> Result<BaselineStats> {
    if errors.is_empty() {
        return Err(Error::InvalidInput(
            "random baseline over zero candidates".into(),
        ));
    }
    if worst_k == 0 {
        return Err(Error::InvalidInput("worst_k must be at least 1".into()));
    }
    let n = errors.len() as Real;
    let values: Vec<Real> = errors.values().copied().collect();
    let best = min_error(errors);
    let hits =
        |pred: &dyn Fn(Real) -> bool| values.iter().filter(|&&e| pred(e)).count() as Real / n;
    Ok(BaselineStats {
        avg_error: values.iter().sum::<Real>() / n,
        prob_best: hits(&|e| e == best),
        prob_worst_k: hits(&|e| in_worst_k(&values, e, worst_k)),
    })
}

/// Mean of the per-run curves, point by point.
pub fn topn_curve(runs: &[RunResult]) -> Vec<TopnPoint> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let m = runs.len() as Real;
    (0..first.topn.len())
        .map(|i| {
            let mean = |f: &dyn Fn(&TopnPoint) -> Real| {
                runs.iter().map(|r| f(&r.topn[i])).sum::<Real>() / m
            };
            TopnPoint {
                n: first.topn[i].n,
                cmek_error: mean(&|p| p.cmek_error),
                random_error: mean(&|p| p.random_error),
                all_domains_error: mean(&|p| p.all_domains_error),
            }
        })
        .collect()
}

/// Runs the full protocol with the CMEK predictor.
pub fn outer_loo_benchmark(
    corpora: &[LabeledCorpus],
    cfg: &GlobalConfig,
) -> Result<SelectionReport> {
    outer_loo_benchmark_with(corpora, cfg, Predictor::Cmek)
}

pub fn outer_loo_benchmark_with(
    corpora: &[LabeledCorpus],
    cfg: &GlobalConfig,
    predictor: Predictor,
) -> Result<SelectionReport> {
    check_corpora(corpora)?;
    let table = PairTable::compute(corpora, cfg, true)?;
    benchmark_from_table(&table, corpora, cfg, predictor)
}

fn check_corpora(corpora: &[LabeledCorpus]) -> Result<()> {
    if corpora.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "benchmark needs at least 4 labeled corpora, got {}",
            corpora.len()
        )));
    }
    for c in corpora {
        c.require_labels(&format!("benchmark corpus {}", c.name))?;
    }
    Ok(())
}

/// Sorted member names: the canonical identity of a training union.
type MemberSet = Vec<String>;

struct RunPlan {
    target: usize,
    true_errors: BTreeMap<String, Real>,
    predicted: BTreeMap<String, Real>,
    ranking: Vec<String>,
    weights: Vec<Real>,
    /// Per n: the CMEK top-n set and the random subsets.
    topn_sets: Vec<(MemberSet, Vec<MemberSet>)>,
    all_set: MemberSet,
}

/// The protocol over an already computed pair table (which must hold cross errors).
pub fn benchmark_from_table(
    table: &PairTable,
    corpora: &[LabeledCorpus],
    cfg: &GlobalConfig,
    predictor: Predictor,
) -> Result<SelectionReport> {
    cfg.validate()?;
    check_corpora(corpora)?;
    let n_total = corpora.len();
    let n_cand = n_total - 1;
    let n_max = cfg.topn_max.unwrap_or(n_cand);
    if n_max == 0 || n_max > n_cand {
        return Err(Error::InvalidConfig(format!(
            "topn_max {n_max} must lie in 1..={n_cand}"
        )));
    }

    let plans: Vec<RunPlan> = (0..n_total)
        .into_par_iter()
        .map(|t| plan_run(table, t, cfg, predictor, n_max))
        .collect::<Result<_>>()?;

    // train every distinct union once
    let sets: BTreeSet<&MemberSet> = plans
        .iter()
        .flat_map(|p| {
            p.topn_sets
                .iter()
                .flat_map(|(top, random)| std::iter::once(top).chain(random))
                .chain(std::iter::once(&p.all_set))
        })
        .collect();
    let by_name: BTreeMap<&str, &LabeledCorpus> =
        corpora.iter().map(|c| (c.name.as_str(), c)).collect();
    let hypotheses: BTreeMap<&MemberSet, Hypothesis> = sets
        .into_par_iter()
        .map(|set| {
            let members: Vec<&LabeledCorpus> = set.iter().map(|n| by_name[n.as_str()]).collect();
            let h = if members.len() == 1 {
                train(members[0], &cfg.train)?
            } else {
                train(&union_corpus(&members)?, &cfg.train)?
            };
            Ok((set, h))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    let runs: Vec<RunResult> = plans
        .par_iter()
        .map(|plan| score_run(plan, corpora, &hypotheses))
        .collect::<Result<_>>()?;
    assemble_report(runs, cfg, predictor)
}

fn plan_run(
    table: &PairTable,
    t: usize,
    cfg: &GlobalConfig,
    predictor: Predictor,
    n_max: usize,
) -> Result<RunPlan> {
    let target_name = &table.names[t];
    let members: Vec<usize> = (0..table.names.len()).filter(|&i| i != t).collect();
    let mut true_errors = BTreeMap::new();
    for &c in &members {
        let e = table.cross[c][t]
            .ok_or_else(|| Error::MissingLabels(format!("cross error {}", table.names[c])))?;
        true_errors.insert(table.names[c].clone(), e);
    }

    let (predicted, weights) = match predictor {
        Predictor::Oracle => (true_errors.clone(), Vec::new()),
        Predictor::Cmek => {
            // the target contributes nothing to the fit
            let pairs = table.training_pairs(&members)?;
            let w = fit_weights(&pairs, cfg.standardize_features)?;
            let mut predicted = BTreeMap::new();
            for &c in &members {
                let features = table
                    .features(c, t)
                    .ok_or_else(|| Error::MissingLabels(format!("candidate {}", table.names[c])))?;
                predicted.insert(table.names[c].clone(), predict(&w, &features));
            }
            (predicted, w.beta.to_vec())
        }
    };
    let ranking: Vec<String> = rank(predicted.clone().into_iter().collect(), members.len())?
        .into_iter()
        .map(|r| r.name)
        .collect();

    let names: Vec<&String> = true_errors.keys().collect();
    let canonical = |mut v: Vec<String>| {
        v.sort();
        v
    };
    let topn_sets = (1..=n_max)
        .map(|n| {
            let top = canonical(ranking[..n].to_vec());
            let mut r = rng(derive_seed(
                cfg.seed,
                &["topn-random", target_name, &n.to_string()],
            ));
            let random = (0..cfg.random_subsets)
                .map(|_| {
                    let picked = sample(&mut r, names.len(), n);
                    canonical(picked.into_iter().map(|i| names[i].clone()).collect())
                })
                .collect();
            (top, random)
        })
        .collect();
    let all_set = canonical(names.iter().map(|s| s.to_string()).collect());

    Ok(RunPlan {
        target: t,
        true_errors,
        predicted,
        ranking,
        weights,
        topn_sets,
        all_set,
    })
}

fn score_run(
    plan: &RunPlan,
    corpora: &[LabeledCorpus],
    hypotheses: &BTreeMap<&MemberSet, Hypothesis>,
) -> Result<RunResult> {
    let target = &corpora[plan.target];
    let score = |set: &MemberSet| evaluate(&hypotheses[set], target, ErrorKind::CrossDomain);
    let all_domains_error = score(&plan.all_set)?.error;
    let topn = plan
        .topn_sets
        .iter()
        .enumerate()
        .map(|(i, (top, random))| {
            // pooled counts keep the mean exact when every subset scores the same
            let (mut wrong, mut total) = (0usize, 0usize);
            for set in random {
                let e = score(set)?;
                wrong += e.misclassified;
                total += e.n_evaluated;
            }
            Ok(TopnPoint {
                n: i + 1,
                cmek_error: score(top)?.error,
                random_error: wrong as Real / total as Real,
                all_domains_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let selected_error = plan.true_errors[&plan.ranking[0]];
    let optimal_error = min_error(&plan.true_errors);
    Ok(RunResult {
        target_name: target.name.clone(),
        per_candidate_true_error: plan.true_errors.clone(),
        per_candidate_predicted: plan.predicted.clone(),
        selected: plan.ranking.clone(),
        selected_error,
        optimal_error,
        relative_error: selected_error - optimal_error,
        all_domains_error,
        weights: plan.weights.clone(),
        topn,
    })
}

fn mean(values: impl Iterator<Item = Real>) -> Real {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as Real
}

/// Aggregates, baselines and t-tests over finished runs.
pub fn assemble_report(
    runs: Vec<RunResult>,
    cfg: &GlobalConfig,
    predictor: Predictor,
) -> Result<SelectionReport> {
    if runs.is_empty() {
        return Err(Error::NoRuns);
    }
    let k = cfg.worst_k;
    let n_cand = runs[0].per_candidate_true_error.len();
    let worst_applicable = n_cand > k;
    let worst = |pick: &dyn Fn(&RunResult) -> Real| -> Option<Real> {
        worst_applicable.then(|| {
            mean(runs.iter().map(|r| {
                let values: Vec<Real> = r.per_candidate_true_error.values().copied().collect();
                Real::from(u8::from(in_worst_k(&values, pick(r), k)))
            }))
        })
    };

    let baselines: Vec<BaselineStats> = runs
        .iter()
        .map(|r| random_baseline(&r.per_candidate_true_error, k))
        .collect::<Result<_>>()?;
    let random = Aggregates {
        avg_abs_error: mean(baselines.iter().map(|b| b.avg_error)),
        prob_best: mean(baselines.iter().map(|b| b.prob_best)),
        prob_worst5: worst_applicable.then(|| mean(baselines.iter().map(|b| b.prob_worst_k))),
    };
    let optimal = Aggregates {
        avg_abs_error: mean(runs.iter().map(|r| r.optimal_error)),
        prob_best: 1.0,
        prob_worst5: worst(&|r| r.optimal_error),
    };

    let cmek: Vec<Real> = runs.iter().map(|r| r.selected_error).collect();
    let comparisons: [(&str, Vec<Real>); 3] = [
        (
            "cmek_vs_random",
            baselines.iter().map(|b| b.avg_error).collect(),
        ),
        (
            "cmek_vs_optimal",
            runs.iter().map(|r| r.optimal_error).collect(),
        ),
        (
            "cmek_vs_all_domains",
            runs.iter().map(|r| r.all_domains_error).collect(),
        ),
    ];
    let ttests = comparisons
        .into_iter()
        .map(|(name, other)| match paired_ttest(&cmek, &other) {
            Ok(t) => TTestRow {
                comparison: name.into(),
                t: Some(t.t),
                p: Some(t.p),
                normality_stat: Some(t.normality),
                note: None,
            },
            Err(e) => TTestRow {
                comparison: name.into(),
                t: None,
                p: None,
                normality_stat: None,
                note: Some(e.to_string()),
            },
        })
        .collect();

    Ok(SelectionReport {
        predictor,
        seed: cfg.seed,
        worst_k: k,
        random_subsets: cfg.random_subsets,
        prob_best: mean(
            runs.iter()
                .map(|r| Real::from(u8::from(r.relative_error == 0.0))),
        ),
        prob_worst5: worst(&|r| r.selected_error),
        avg_abs_error: mean(cmek.iter().copied()),
        random_baseline: random,
        optimal,
        all_domains_avg_error: mean(runs.iter().map(|r| r.all_domains_error)),
        topn_curve: topn_curve(&runs),
        ttests,
        runs,
    })
}

fn opt(v: Option<Real>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes report.json, table1.csv, fig3.csv and fig4.csv into `out_dir`.
pub fn emit_report(report: &SelectionReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.runs.is_empty() {
        return Err(Error::NoRuns);
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, content: String| -> Result<PathBuf> {
        let path = out_dir.join(name);
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::json(&out_dir.join("report.json"), e))?;
    Ok(vec![
        write("report.json", json + "\n")?,
        write("table1.csv", table1_csv(report))?,
        write("fig3.csv", fig3_csv(report))?,
        write("fig4.csv", fig4_csv(report))?,
    ])
}

fn table1_csv(report: &SelectionReport) -> String {
    let mut out = String::from("method,avg_abs_error,prob_best,prob_worst5\n");
    let rows = [
        ("optimal", report.optimal),
        ("cmek", report.cmek()),
        ("random", report.random_baseline),
    ];
    for (name, a) in rows {
        let _ = writeln!(
            out,
            "{name},{},{},{}",
            a.avg_abs_error,
            a.prob_best,
            opt(a.prob_worst5)
        );
    }
    let _ = writeln!(out, "all_domains,{},NA,NA", report.all_domains_avg_error);
    out
}

/// Raw per-run relative errors followed by fixed-width histogram bins.
/// Random rows carry the expected relative error of a uniform pick; its
/// histogram spreads each run uniformly over the candidates.
fn fig3_csv(report: &SelectionReport) -> String {
    let mut out = String::from("record,method,target,bin_lower,bin_upper,value\n");
    let mut cmek_points = Vec::new();
    let mut random_points = Vec::new();
    for r in &report.runs {
        let best = r.optimal_error;
        let weight = 1.0 / r.per_candidate_true_error.len() as Real;
        let expected = mean(r.per_candidate_true_error.values().map(|e| e - best));
        let target = csv_field(&r.target_name);
        let _ = writeln!(out, "raw,cmek,{target},,,{}", r.relative_error);
        let _ = writeln!(out, "raw,random,{target},,,{expected}");
        cmek_points.push((r.relative_error, 1.0));
        random_points.extend(
            r.per_candidate_true_error
                .values()
                .map(|e| (e - best, weight)),
        );
    }
    let bin = |x: Real| ((x / FIG3_BIN_WIDTH) + 1e-9).floor().max(0.0) as usize;
    let n_bins = cmek_points
        .iter()
        .chain(&random_points)
        .map(|&(x, _)| bin(x))
        .max()
        .unwrap_or(0)
        + 1;
    let runs = report.runs.len() as Real;
    for (method, points) in [("cmek", &cmek_points), ("random", &random_points)] {
        let mut mass = vec![0.0; n_bins];
        for &(x, w) in points {
            mass[bin(x)] += w;
        }
        for (i, m) in mass.iter().enumerate() {
            let lower = i as Real * FIG3_BIN_WIDTH;
            let _ = writeln!(
                out,
                "bin,{method},,{lower:.3},{:.3},{}",
                lower + FIG3_BIN_WIDTH,
                m / runs
            );
        }
    }
    out
}

fn fig4_csv(report: &SelectionReport) -> String {
    let mut out = String::from("target,n,cmek_error,random_error,all_domains_error\n");
    let rows = report
        .runs
        .iter()
        .flat_map(|r| r.topn.iter().map(move |p| (csv_field(&r.target_name), p)))
        .chain(report.topn_curve.iter().map(|p| ("mean".to_string(), p)));
    for (target, p) in rows {
        let _ = writeln!(
            out,
            "{target},{},{},{},{}",
            p.n, p.cmek_error, p.random_error, p.all_domains_error
        );
    }
    out
}
