//! Distances between frames, distributions, representations and whole
//! tracks.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_with, AggregationMethod, Normalization, PoolKind, TrackRepresentation};
use crate::error::{Error, Result};
use crate::feature::{l2_normalize_slice, FeatureVector, ProbabilityVector, Track};

/// Additive smoothing applied to both distributions before taking KL.
pub const KL_SMOOTHING: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceKind {
    #[default]
    Euclidean,
    /// Mean of KL(p‖q) and KL(q‖p), in nats. Inputs must be nonnegative;
    /// they are smoothed and renormalized to unit sum first.
    KlSymmetric,
}

impl DistanceKind {
    pub fn between(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        match self {
            DistanceKind::Euclidean => Ok(euclidean_unchecked(a, b)),
            DistanceKind::KlSymmetric => {
                let p = smooth(a)?;
                let q = smooth(b)?;
                Ok((kl_smoothed(&p, &q) + kl_smoothed(&q, &p)) / 2.0)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::KlSymmetric => "kl",
        }
    }
}

pub(crate) fn euclidean_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn euclidean(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    DistanceKind::Euclidean.between(a.as_slice(), b.as_slice())
}

fn smooth(p: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = p.iter().enumerate().find(|(_, x)| **x < 0.0) {
        return Err(Error::NegativeComponent { index, value });
    }
    let total: f64 = p.iter().map(|x| x + KL_SMOOTHING).sum();
    Ok(p.iter().map(|x| (x + KL_SMOOTHING) / total).collect())
}

fn kl_smoothed(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum()
}

/// KL divergence in nats after additive smoothing. With `symmetric` the
/// mean of both directions is returned.
pub fn kl_divergence(p: &ProbabilityVector, q: &ProbabilityVector, symmetric: bool) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let ps = smooth(p.as_slice())?;
    let qs = smooth(q.as_slice())?;
    let forward = kl_smoothed(&ps, &qs);
    if symmetric {
        Ok((forward + kl_smoothed(&qs, &ps)) / 2.0)
    } else {
        Ok(forward)
    }
}

/// Whether frames are L2-normalized before the pairwise double sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameNormalization {
    Raw,
    L2PerFrame,
}

/// How two tracks are compared: by averaging all frame-pair distances, or
/// by the distance between fixed-size representations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackDistanceMethod {
    PairwiseAverage(FrameNormalization),
    Representation(AggregationMethod),
}

impl TrackDistanceMethod {
    /// The seven compared configurations, in reporting order.
    pub const TABLE_ROWS: [TrackDistanceMethod; 7] = [
        Self::PairwiseAverage(FrameNormalization::Raw),
        Self::PairwiseAverage(FrameNormalization::L2PerFrame),
        Self::Representation(AggregationMethod::new(PoolKind::Medoid, Normalization::None)),
        Self::Representation(AggregationMethod::new(
            PoolKind::Medoid,
            Normalization::AggregateThenNormalize,
        )),
        Self::Representation(AggregationMethod::new(PoolKind::AvePool, Normalization::None)),
        Self::Representation(AggregationMethod::new(
            PoolKind::AvePool,
            Normalization::NormalizeThenAggregate,
        )),
        Self::Representation(AggregationMethod::new(
            PoolKind::AvePool,
            Normalization::AggregateThenNormalize,
        )),
    ];

    /// Command-line name.
    pub fn name(&self) -> &'static str {
        match self {
            Self::PairwiseAverage(FrameNormalization::Raw) => "raw-pairwise",
            Self::PairwiseAverage(FrameNormalization::L2PerFrame) => "l2-pairwise",
            Self::Representation(m) => m.name(),
        }
    }

    /// Row label used in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            Self::PairwiseAverage(FrameNormalization::Raw) => "Distance (1)",
            Self::PairwiseAverage(FrameNormalization::L2PerFrame) => "L2-norm -> Distance (1)",
            Self::Representation(m) => match (m.kind, m.normalization) {
                (PoolKind::Medoid, Normalization::None) => "Medoid (2)",
                (PoolKind::Medoid, Normalization::NormalizeThenAggregate) => "L2-norm -> Medoid (2)",
                (PoolKind::Medoid, Normalization::AggregateThenNormalize) => "Medoid (2) -> L2-norm",
                (PoolKind::AvePool, Normalization::None) => "AvePool (3)",
                (PoolKind::AvePool, Normalization::NormalizeThenAggregate) => "L2-norm -> AvePool (3)",
                (PoolKind::AvePool, Normalization::AggregateThenNormalize) => "AvePool (3) -> L2-norm",
            },
        }
    }

    /// Parses one of the seven command-line names.
    pub fn parse(name: &str) -> Result<Self> {
        Self::TABLE_ROWS
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::UnknownMethod {
                name: name.to_string(),
                valid: Self::valid_names(),
            })
    }

    pub fn valid_names() -> String {
        Self::TABLE_ROWS.map(|m| m.name()).join(", ")
    }

    pub fn aggregation(&self) -> Option<AggregationMethod> {
        match self {
            Self::Representation(m) => Some(*m),
            Self::PairwiseAverage(_) => None,
        }
    }
}

impl fmt::Display for TrackDistanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Value and evaluation count of a pairwise-average computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseOutcome {
    pub distance: f64,
    /// Frame-distance evaluations performed, always Δt₁·Δt₂.
    pub evaluations: u64,
}

fn frames_for(track: &Track, norm: FrameNormalization) -> Result<Vec<Vec<f64>>> {
    track.require_nonempty()?;
    track
        .frames
        .iter()
        .map(|f| match norm {
            FrameNormalization::Raw => Ok(f.as_slice().to_vec()),
            FrameNormalization::L2PerFrame => l2_normalize_slice(f.as_slice()),
        })
        .collect()
}

fn cmp_tracks(a: &Track, b: &Track) -> Ordering {
    for (x, y) in a.frames.iter().zip(&b.frames) {
        match x.lex_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.frames
        .len()
        .cmp(&b.frames.len())
        .then_with(|| a.track_id.cmp(&b.track_id))
}

/// Orders a pair canonically so that every pairwise computation sums in the
/// same order regardless of argument order.
fn canonical<'a>(a: &'a Track, b: &'a Track) -> (&'a Track, &'a Track) {
    if cmp_tracks(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    }
}

/// Row sums of the frame-distance matrix between `t1` and `t2`: entry `i` is
/// Σⱼ ρ(x₁(i), x₂(j)). Rows are independent and can be computed in parallel
/// by the caller via [`pairwise_row`].
pub fn pairwise_rows(t1: &Track, t2: &Track, norm: FrameNormalization, kind: DistanceKind) -> Result<Vec<f64>> {
    let a = frames_for(t1, norm)?;
    let b = frames_for(t2, norm)?;
    a.iter().map(|row| pairwise_row(row, &b, kind)).collect()
}

/// Σⱼ ρ(frame, others[j]).
pub fn pairwise_row<V: AsRef<[f64]>>(frame: &[f64], others: &[V], kind: DistanceKind) -> Result<f64> {
    let mut sum = 0.0;
    for o in others {
        sum += kind.between(frame, o.as_ref())?;
    }
    Ok(sum)
}

/// Mean Euclidean distance over all frame pairs of the two tracks.
pub fn pairwise_average_distance(t1: &Track, t2: &Track, norm: FrameNormalization) -> Result<f64> {
    pairwise_average_with(t1, t2, norm, DistanceKind::Euclidean).map(|o| o.distance)
}

/// Mean frame-pair distance under `kind`, together with the number of frame
/// distances evaluated.
pub fn pairwise_average_with(
    t1: &Track,
    t2: &Track,
    norm: FrameNormalization,
    kind: DistanceKind,
) -> Result<PairwiseOutcome> {
    let (first, second) = canonical(t1, t2);
    let a = frames_for(first, norm)?;
    let b = frames_for(second, norm)?;
    let mut total = 0.0;
    let mut evaluations = 0u64;
    for row in &a {
        for col in &b {
            total += kind.between(row, col)?;
            evaluations += 1;
        }
    }
    Ok(PairwiseOutcome {
        distance: total / (a.len() * b.len()) as f64,
        evaluations,
    })
}

/// Euclidean distance between two representations of the same method.
pub fn representation_distance(r1: &TrackRepresentation, r2: &TrackRepresentation) -> Result<f64> {
    representation_distance_with(r1, r2, DistanceKind::Euclidean)
}

pub fn representation_distance_with(
    r1: &TrackRepresentation,
    r2: &TrackRepresentation,
    kind: DistanceKind,
) -> Result<f64> {
    if r1.method != r2.method {
        return Err(Error::MethodMismatch(r1.method.to_string(), r2.method.to_string()));
    }
    kind.between(r1.vector.as_slice(), r2.vector.as_slice())
}

/// Dispatches to the pairwise average or to aggregate-then-compare.
pub fn track_distance(t1: &Track, t2: &Track, method: TrackDistanceMethod) -> Result<f64> {
    track_distance_with(t1, t2, method, DistanceKind::Euclidean)
}

/// As [`track_distance`] with a chosen frame distance; medoids are also
/// computed under `kind`.
pub fn track_distance_with(t1: &Track, t2: &Track, method: TrackDistanceMethod, kind: DistanceKind) -> Result<f64> {
    match method {
        TrackDistanceMethod::PairwiseAverage(norm) => pairwise_average_with(t1, t2, norm, kind).map(|o| o.distance),
        TrackDistanceMethod::Representation(m) => {
            let r1 = aggregate_with(t1, m, kind)?;
            let r2 = aggregate_with(t2, m, kind)?;
            representation_distance_with(&r1, &r2, kind)
        }
    }
}
