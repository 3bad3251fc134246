//! Fixed-size track representations: medoid and average pooling under each
//! L2-normalization ordering.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dissimilarity::DistanceKind;
use crate::error::{Error, Result};
use crate::feature::{
    l1_normalize_slice, l2_normalize_slice, FeatureVector, PosteriorSet, Posteriors, ProbabilityVector, Track,
    TrackPosteriors,
};
use std::collections::BTreeMap;

/// Relative tolerance under which two medoid cost sums count as tied.
pub const MEDOID_TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoolKind {
    Medoid,
    AvePool,
}

/// Where the L2 normalization sits relative to pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Normalization {
    None,
    NormalizeThenAggregate,
    AggregateThenNormalize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggregationMethod {
    pub kind: PoolKind,
    pub normalization: Normalization,
}

impl AggregationMethod {
    pub const fn new(kind: PoolKind, normalization: Normalization) -> Self {
        Self { kind, normalization }
    }

    pub const ALL: [AggregationMethod; 6] = [
        Self::new(PoolKind::Medoid, Normalization::None),
        Self::new(PoolKind::Medoid, Normalization::NormalizeThenAggregate),
        Self::new(PoolKind::Medoid, Normalization::AggregateThenNormalize),
        Self::new(PoolKind::AvePool, Normalization::None),
        Self::new(PoolKind::AvePool, Normalization::NormalizeThenAggregate),
        Self::new(PoolKind::AvePool, Normalization::AggregateThenNormalize),
    ];

    /// True when the final step is an L2 normalization of the pooled vector.
    pub fn ends_with_l2(&self) -> bool {
        self.normalization == Normalization::AggregateThenNormalize
    }

    /// Short name, e.g. `avepool-l2` or `l2-medoid`.
    pub fn name(&self) -> &'static str {
        match (self.kind, self.normalization) {
            (PoolKind::Medoid, Normalization::None) => "medoid",
            (PoolKind::Medoid, Normalization::NormalizeThenAggregate) => "l2-medoid",
            (PoolKind::Medoid, Normalization::AggregateThenNormalize) => "medoid-l2",
            (PoolKind::AvePool, Normalization::None) => "avepool",
            (PoolKind::AvePool, Normalization::NormalizeThenAggregate) => "l2-avepool",
            (PoolKind::AvePool, Normalization::AggregateThenNormalize) => "avepool-l2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A track reduced to one vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRepresentation {
    pub track_id: String,
    pub vector: FeatureVector,
    /// The pooled vector before any final L2 step. Equal to `vector` unless
    /// the method ends with normalization.
    pub pooled: FeatureVector,
    pub method: AggregationMethod,
    pub frame_count: usize,
}

impl TrackRepresentation {
    /// Wraps an externally computed vector (e.g. read back from a file).
    pub fn new(
        track_id: impl Into<String>,
        vector: FeatureVector,
        method: AggregationMethod,
        frame_count: usize,
    ) -> Self {
        Self {
            track_id: track_id.into(),
            pooled: vector.clone(),
            vector,
            method,
            frame_count,
        }
    }
}

/// Index of the medoid among `frames`: the frame with the smallest summed
/// distance to all frames. Near-ties resolve to the lexicographically
/// smallest vector so the answer does not depend on frame order.
pub(crate) fn medoid_index_of<V: AsRef<[f64]>>(frames: &[V], metric: DistanceKind) -> Result<usize> {
    let n = frames.len();
    if n == 0 {
        return Err(Error::EmptyVector);
    }
    let mut sums = vec![0.0f64; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = metric.between(frames[i].as_ref(), frames[j].as_ref())?;
            sums[i] += d;
            sums[j] += d;
        }
    }
    let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = MEDOID_TIE_TOL * min.abs().max(1.0);
    let mut best: Option<usize> = None;
    for (i, &s) in sums.iter().enumerate() {
        if s > min + tol {
            continue;
        }
        best = match best {
            Some(b) if lex_cmp(frames[b].as_ref(), frames[i].as_ref()).is_le() => Some(b),
            _ => Some(i),
        };
    }
    Ok(best.expect("at least one frame attains the minimum"))
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn check_dims(track: &Track) -> Result<usize> {
    track.require_nonempty()?;
    let dim = track.frames[0].dim();
    for f in &track.frames {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: f.dim(),
            });
        }
    }
    Ok(dim)
}

/// Position of the medoid frame within `track.frames`.
pub fn medoid_index(track: &Track, metric: DistanceKind) -> Result<usize> {
    check_dims(track)?;
    medoid_index_of(&frame_slices(track), metric)
}

/// The frame minimizing the summed distance to every other frame.
/// Always an element of the track.
pub fn medoid(track: &Track, metric: DistanceKind) -> Result<FeatureVector> {
    let i = medoid_index(track, metric)?;
    Ok(track.frames[i].clone())
}

fn frame_slices(track: &Track) -> Vec<&[f64]> {
    track.frames.iter().map(FeatureVector::as_slice).collect()
}

fn mean_of<V: AsRef<[f64]>>(rows: &[V], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0f64; dim];
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r.as_ref()) {
            *a += x;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Componentwise mean of the track's frames.
pub fn average_pool(track: &Track) -> Result<FeatureVector> {
    let dim = check_dims(track)?;
    Ok(FeatureVector::new_unchecked(mean_of(&frame_slices(track), dim)))
}

/// Aggregates with Euclidean medoid cost.
pub fn aggregate(track: &Track, method: AggregationMethod) -> Result<TrackRepresentation> {
    aggregate_with(track, method, DistanceKind::Euclidean)
}

/// Aggregates a track, using `metric` for the medoid cost when the method is
/// medoid-based.
pub fn aggregate_with(track: &Track, method: AggregationMethod, metric: DistanceKind) -> Result<TrackRepresentation> {
    let dim = check_dims(track)?;
    let frames: Vec<Vec<f64>> = match method.normalization {
        Normalization::NormalizeThenAggregate => track
            .frames
            .iter()
            .map(|f| l2_normalize_slice(f.as_slice()))
            .collect::<Result<_>>()?,
        _ => track.frames.iter().map(|f| f.as_slice().to_vec()).collect(),
    };
    let pooled = match method.kind {
        PoolKind::Medoid => {
            let i = medoid_index_of(&frames, metric)?;
            frames[i].clone()
        }
        PoolKind::AvePool => mean_of(&frames, dim),
    };
    let vector = if method.ends_with_l2() {
        l2_normalize_slice(&pooled)?
    } else {
        pooled.clone()
    };
    Ok(TrackRepresentation {
        track_id: track.track_id.clone(),
        vector: FeatureVector::new_unchecked(vector),
        pooled: FeatureVector::new_unchecked(pooled),
        method,
        frame_count: track.frame_count(),
    })
}

/// Aggregates every track in parallel, preserving input order.
pub fn aggregate_all(tracks: &[Track], method: AggregationMethod) -> Result<Vec<TrackRepresentation>> {
    tracks.par_iter().map(|t| aggregate(t, method)).collect()
}

/// Mean of per-frame posteriors, renormalized to unit sum.
pub fn aggregate_probabilities(track: &Track, probs: &[ProbabilityVector]) -> Result<ProbabilityVector> {
    track.require_nonempty()?;
    if probs.len() != track.frame_count() {
        return Err(Error::LengthMismatch {
            expected: track.frame_count(),
            found: probs.len(),
        });
    }
    mean_probabilities(probs)
}

/// Mean of a nonempty list of equal-length distributions, renormalized.
pub fn mean_probabilities(probs: &[ProbabilityVector]) -> Result<ProbabilityVector> {
    let first = probs.first().ok_or(Error::EmptyVector)?;
    let k = first.len();
    if let Some(p) = probs.iter().find(|p| p.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: p.len(),
        });
    }
    let rows: Vec<&[f64]> = probs.iter().map(ProbabilityVector::as_slice).collect();
    let mean = mean_of(&rows, k);
    ProbabilityVector::new(l1_normalize_slice(&mean)?)
}

/// Pools a track's per-frame age and gender posteriors.
pub fn aggregate_posteriors(track: &TrackPosteriors) -> Result<Posteriors> {
    let ages: Vec<ProbabilityVector> = track.frames.iter().map(|p| p.age.clone()).collect();
    let genders: Vec<ProbabilityVector> = track.frames.iter().map(|p| p.gender.clone()).collect();
    Posteriors::new(mean_probabilities(&ages)?, mean_probabilities(&genders)?)
}

/// [`aggregate_posteriors`] for every track in the set.
pub fn aggregate_posterior_set(set: &PosteriorSet) -> Result<BTreeMap<String, Posteriors>> {
    set.iter()
        .map(|(id, tp)| aggregate_posteriors(tp).map(|p| (id.clone(), p)))
        .collect()
}

/// Medoid positions computed on raw and on per-frame normalized features.
/// The two agree whenever all frames share one norm, but not in general.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedoidOrderDiagnostic {
    pub raw_index: usize,
    pub normalized_index: usize,
}

impl MedoidOrderDiagnostic {
    pub fn agree(&self) -> bool {
        self.raw_index == self.normalized_index
    }
}

pub fn medoid_order_diagnostic(track: &Track) -> Result<MedoidOrderDiagnostic> {
    check_dims(track)?;
    let raw_index = medoid_index_of(&frame_slices(track), DistanceKind::Euclidean)?;
    let normalized: Vec<Vec<f64>> = track
        .frames
        .iter()
        .map(|f| l2_normalize_slice(f.as_slice()))
        .collect::<Result<_>>()?;
    let normalized_index = medoid_index_of(&normalized, DistanceKind::Euclidean)?;
    Ok(MedoidOrderDiagnostic {
        raw_index,
        normalized_index,
    })
}
