//! Synthetic domain families with a scalar shift knob.
//!
//! Every domain draws documents from a two-class mixture of multinomials:
//! each token is, with probability `sentiment_rate`, a word of the label's
//! sentiment lexicon and otherwise a neutral word. A domain at shift `s`
//! keeps the reference lexicon words `[round(s·n), n)` and fills the front
//! with the first `round(s·n)` words of a shared drift pool, per polarity.
//! Two domains therefore share `n − |round(s₁n) − round(s₂n)|` sentiment words
//! per polarity, so lexicon overlap falls linearly with the shift gap and
//! shift 1 is disjoint from shift 0.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    save_corpus, Document, LabeledCorpus, Manifest, ManifestEntry, Provenance, Role,
};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainSpec {
    /// Seed for this domain's documents.
    pub seed: u64,
    pub n_docs: usize,
    /// Inclusive token-count range per document.
    pub doc_len_range: (usize, usize),
    /// Size of the shared neutral vocabulary.
    pub vocab: usize,
    /// Sentiment words per polarity.
    pub n_sentiment_words: usize,
    pub shift: Real,
    /// Label-flip probability.
    pub noise: Real,
    /// Probability that a token is drawn from the sentiment lexicon.
    pub sentiment_rate: Real,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            seed: 1,
            n_docs: 1000,
            doc_len_range: (20, 60),
            vocab: 500,
            n_sentiment_words: 60,
            shift: 0.0,
            noise: 0.0,
            sentiment_rate: 0.12,
        }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_docs < 4 || self.n_docs % 2 != 0 {
            return bad("n_docs must be even and at least 4");
        }
        let (lo, hi) = self.doc_len_range;
        if lo == 0 || lo > hi {
            return bad("doc_len_range must satisfy 1 <= min <= max");
        }
        if self.vocab == 0 || self.n_sentiment_words == 0 {
            return bad("vocab and n_sentiment_words must be positive");
        }
        if !(0.0..=1.0).contains(&self.shift) {
            return Err(Error::InvalidConfig(format!(
                "shift {} outside [0, 1]",
                self.shift
            )));
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return Err(Error::InvalidConfig(format!(
                "noise {} outside [0, 0.5]",
                self.noise
            )));
        }
        if !(self.sentiment_rate > 0.0 && self.sentiment_rate <= 1.0) {
            return bad("sentiment_rate must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Shared word pools derived from the reference seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub neutral: Vec<String>,
    /// `[negative, positive]` reference lexicons.
    pub reference: [Vec<String>; 2],
    /// `[negative, positive]` replacement words, consumed from the front.
    pub drift: [Vec<String>; 2],
}

impl Lexicon {
    pub fn build(reference_seed: u64, vocab: usize, n_sentiment: usize) -> Self {
        let mut r = rng(derive_seed(reference_seed, &["lexicon"]));
        let total = vocab + 4 * n_sentiment;
        let mut seen = HashSet::with_capacity(total);
        let mut words = Vec::with_capacity(total);
        while words.len() < total {
            let len = r.gen_range(4..=8);
            let w: String = (0..len)
                .map(|_| char::from(b'a' + r.gen_range(0..26u8)))
                .collect();
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        let mut it = words.into_iter();
        let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<_>>();
        let neutral = take(vocab);
        let reference = [take(n_sentiment), take(n_sentiment)];
        let drift = [take(n_sentiment), take(n_sentiment)];
        Lexicon {
            neutral,
            reference,
            drift,
        }
    }

    /// Sentiment lexicon of `polarity` at the given shift.
    pub fn shifted(&self, polarity: usize, shift: Real) -> Vec<String> {
        let n = self.reference[polarity].len();
        let m = ((shift * n as Real).round() as usize).min(n);
        self.drift[polarity][..m]
            .iter()
            .chain(&self.reference[polarity][m..])
            .cloned()
            .collect()
    }
}

/// One domain from `spec` over the given lexicon.
pub fn generate_domain(name: &str, lexicon: &Lexicon, spec: &DomainSpec) -> Result<LabeledCorpus> {
    spec.validate()?;
    let mut r = rng(spec.seed);
    let sentiment = [
        lexicon.shifted(0, spec.shift),
        lexicon.shifted(1, spec.shift),
    ];
    let mut labels: Vec<u8> = (0..spec.n_docs).map(|i| u8::from(i % 2 == 1)).collect();
    labels.shuffle(&mut r);
    let (lo, hi) = spec.doc_len_range;
    let documents = labels
        .into_iter()
        .enumerate()
        .map(|(id, label)| {
            let len = r.gen_range(lo..=hi);
            let pool = &sentiment[label as usize];
            let tokens = (0..len)
                .map(|_| {
                    if r.gen::<Real>() < spec.sentiment_rate {
                        pool[r.gen_range(0..pool.len())].clone()
                    } else {
                        lexicon.neutral[r.gen_range(0..lexicon.neutral.len())].clone()
                    }
                })
                .collect();
            let label = if r.gen::<Real>() < spec.noise {
                1 - label
            } else {
                label
            };
            Document {
                id,
                tokens,
                label: Some(label),
            }
        })
        .collect();
    Ok(LabeledCorpus::new(
        name,
        documents,
        Provenance::Generated { seed: spec.seed },
    ))
}

/// Input of a family generation: the template is copied per domain with the
/// shift replaced and the document seed derived from `template.seed` and the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub reference_seed: u64,
    pub shifts: Vec<Real>,
    #[serde(default)]
    pub template: DomainSpec,
}

impl FamilySpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Name and concrete spec of every domain.
    pub fn domains(&self) -> Result<Vec<(String, DomainSpec)>> {
        if self.shifts.is_empty() {
            return Err(Error::InvalidConfig("shifts must be non-empty".into()));
        }
        self.shifts
            .iter()
            .enumerate()
            .map(|(i, &shift)| {
                let spec = DomainSpec {
                    shift,
                    seed: derive_seed(self.template.seed, &["domain", &i.to_string()]),
                    ..self.template.clone()
                };
                spec.validate()?;
                Ok((format!("domain_{i:02}"), spec))
            })
            .collect()
    }
}

/// Generates one corpus per shift, all sharing the reference lexicon.
pub fn generate_family(
    reference_seed: u64,
    shifts: &[Real],
    template: &DomainSpec,
) -> Result<Vec<LabeledCorpus>> {
    let family = FamilySpec {
        reference_seed,
        shifts: shifts.to_vec(),
        template: template.clone(),
    };
    generate_from_spec(&family)
}

pub fn generate_from_spec(family: &FamilySpec) -> Result<Vec<LabeledCorpus>> {
    let domains = family.domains()?;
    let lexicon = Lexicon::build(
        family.reference_seed,
        family.template.vocab,
        family.template.n_sentiment_words,
    );
    domains
        .iter()
        .map(|(name, spec)| generate_domain(name, &lexicon, spec))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SidecarDomain {
    name: String,
    file: PathBuf,
    spec: DomainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    reference_seed: u64,
    shifts: Vec<Real>,
    template: DomainSpec,
    domains: Vec<SidecarDomain>,
}

/// Writes `<name>.jsonl` per domain, `family.json` with every generator
/// parameter and a `manifest.json` listing the domains as candidates.
pub fn write_family(family: &FamilySpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let domains = family.domains()?;
    let corpora = generate_from_spec(family)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    let mut sidecar_domains = Vec::new();
    for ((name, spec), corpus) in domains.into_iter().zip(&corpora) {
        let file = PathBuf::from(format!("{name}.jsonl"));
        let path = out_dir.join(&file);
        save_corpus(corpus, &path)?;
        written.push(path);
        entries.push(ManifestEntry {
            name: name.clone(),
            path: file.clone(),
            role: Role::Candidate,
        });
        sidecar_domains.push(SidecarDomain { name, file, spec });
    }
    let sidecar = Sidecar {
        reference_seed: family.reference_seed,
        shifts: family.shifts.clone(),
        template: family.template.clone(),
        domains: sidecar_domains,
    };
    let sidecar_path = out_dir.join("family.json");
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&sidecar_path, e))?;
    fs::write(&sidecar_path, text + "\n").map_err(|e| Error::io(&sidecar_path, e))?;
    written.push(sidecar_path);
    let manifest_path = out_dir.join("manifest.json");
    Manifest::new(entries, out_dir)?.save(&manifest_path)?;
    written.push(manifest_path);
    Ok(written)
}
