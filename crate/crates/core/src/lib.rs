//! Face-track matching: aggregation of per-frame embeddings into one
//! vector per track, track distances, online and agglomerative clustering,
//! verification metrics, synthetic data and file formats.

pub mod aggregation;
pub mod bench;
pub mod clustering;
pub mod dissimilarity;
pub mod error;
pub mod evaluation;
pub mod feature;
pub mod io;
pub mod synth;

pub use aggregation::{
    aggregate, aggregate_all, aggregate_posterior_set, aggregate_posteriors, aggregate_with, average_pool, medoid,
    medoid_index, AggregationMethod, Normalization, PoolKind, TrackRepresentation,
};
pub use clustering::{
    estimate_demographics, hac_cluster, online_cluster, purity, update_cluster, Cluster, ClusteringConfig,
    Demographics, Gender, Linkage, PurityReport,
};
pub use dissimilarity::{
    euclidean, kl_divergence, pairwise_average_distance, representation_distance, track_distance, track_distance_with,
    DistanceKind, FrameNormalization, TrackDistanceMethod,
};
pub use error::{Error, Result};
pub use evaluation::{
    auc, calibrate_threshold, eer, frr_at_far, kfold_report, kfold_report_scored, roc, score_pairs, EvalReport,
    MetricReport, RocCurve, ScoredPair, VerificationPair,
};
pub use feature::{
    l1_normalize, l2_normalize, validate_dataset, FeatureVector, PosteriorSet, Posteriors, ProbabilityVector, Track,
    TrackDataset, TrackPosteriors,
};
pub use io::Labels;
pub use synth::{generate, make_pairs, SynthConfig, SynthData, SynthRng};
