//! Source-domain selection for text classification.
//!
//! Candidate source corpora are ranked for an unlabeled target by a
//! non-negative linear combination of inter-domain distances (χ², MMD, EMD,
//! KL) and the source's own cross-validated error. The [`bench`] module runs
//! the leave-one-out evaluation protocol and [`synthgen`] builds synthetic
//! domain families with a controllable shift.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the corpus
//! pipeline runs at [`Real`] precision.

pub mod bench;
pub mod classifier;
pub mod cmek;
pub mod config;
pub mod corpus;
pub mod distances;
pub mod error;
pub mod features;
pub mod lad;
pub mod logistic;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod synthgen;
pub mod transport;

/// Working precision of the end-to-end pipeline.
pub type Real = f64;

pub type FeatureDistribution = features::FeatureDistribution<Real>;
pub type DocVectorMatrix = features::DocVectorMatrix<Real>;
pub type DistanceConfig = distances::DistanceConfig<Real>;
pub type DistanceVector = distances::DistanceVector<Real>;
pub type DistanceFeatureVector = cmek::DistanceFeatureVector<Real>;
pub type TrainingPair = cmek::TrainingPair<Real>;
pub type PredictorWeights = cmek::PredictorWeights<Real>;

pub use bench::{emit_report, outer_loo_benchmark, random_baseline, RunResult, SelectionReport};
pub use classifier::{
    classify, cross_error, inner_error, train, ErrorEstimate, Hypothesis, TrainConfig,
};
pub use cmek::{
    build_loo_training_set, fit_weights, predict, rank, select, union_corpus, PairTable,
};
pub use config::GlobalConfig;
pub use corpus::{load_corpus, save_corpus, Document, LabeledCorpus, Manifest, Role};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use stats::paired_ttest;
pub use synthgen::{generate_family, DomainSpec};
