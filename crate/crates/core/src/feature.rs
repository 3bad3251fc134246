//! Frame embeddings, tracks and datasets, plus the normalization primitives
//! every other module builds on.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this value are treated as zero.
pub const ZERO_NORM_EPS: f64 = 1e-30;

/// Default tolerance on the unit sum of a [`ProbabilityVector`].
pub const PROBABILITY_SUM_TOL: f64 = 1e-6;

/// A D-dimensional embedding of one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Builds a vector, rejecting empty input and non-finite values.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    /// Wraps values without checking them. [`validate_dataset`] reports
    /// anything this lets through.
    pub fn new_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// Lexicographic comparison under `f64::total_cmp`.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// A discrete distribution, e.g. age (8 categories) or gender (2) posteriors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(values, PROBABILITY_SUM_TOL)
    }

    /// Validates with a custom tolerance on the unit sum. Values are kept as
    /// given, never rescaled.
    pub fn with_tolerance(values: Vec<f64>, sum_tol: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidProbability(format!(
                    "component {index} = {v} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > sum_tol {
            return Err(Error::InvalidProbability(format!("components sum to {sum}")));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest component; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// One detected person segment: the frames between `start_frame` and
/// `end_frame()` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: String,
    pub subject_id: Option<String>,
    pub start_frame: i64,
    pub frames: Vec<FeatureVector>,
}

impl Track {
    pub fn new(track_id: impl Into<String>, start_frame: i64, frames: Vec<FeatureVector>) -> Self {
        Self {
            track_id: track_id.into(),
            subject_id: None,
            start_frame,
            frames,
        }
    }

    pub fn with_subject(mut self, subject_id: impl Into<String>) -> Self {
        self.subject_id = Some(subject_id.into());
        self
    }

    /// Builds a track from raw rows, checking every frame.
    pub fn from_rows(track_id: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let frames = rows.into_iter().map(FeatureVector::new).collect::<Result<Vec<_>>>()?;
        Ok(Self::new(track_id, 0, frames))
    }

    /// Number of frames, Δt = t₂ − t₁ + 1.
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn end_frame(&self) -> i64 {
        self.start_frame + self.frames.len() as i64 - 1
    }

    /// Dimension of the first frame, if any.
    pub fn dim(&self) -> Option<usize> {
        self.frames.first().map(FeatureVector::dim)
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.frames.is_empty() {
            Err(Error::EmptyTrack(self.track_id.clone()))
        } else {
            Ok(())
        }
    }
}

/// A set of tracks cut from one video, indexed by track id.
#[derive(Clone, Debug, Default)]
pub struct TrackDataset {
    tracks: Vec<Track>,
    index: HashMap<String, usize>,
}

impl TrackDataset {
    /// Duplicate ids are kept (see [`validate_dataset`]); lookups resolve to
    /// the first occurrence.
    pub fn new(tracks: Vec<Track>) -> Self {
        let mut index = HashMap::with_capacity(tracks.len());
        for (i, t) in tracks.iter().enumerate() {
            index.entry(t.track_id.clone()).or_insert(i);
        }
        Self { tracks, index }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn into_tracks(self) -> Vec<Track> {
        self.tracks
    }

    pub fn get(&self, track_id: &str) -> Option<&Track> {
        self.index.get(track_id).map(|&i| &self.tracks[i])
    }

    pub fn require(&self, track_id: &str) -> Result<&Track> {
        self.get(track_id)
            .ok_or_else(|| Error::UnknownTrack(track_id.to_string()))
    }

    /// M, the number of tracks.
    pub fn track_count(&self) -> usize {
        self.tracks.len()
    }

    /// T, the total number of frames over all tracks.
    pub fn total_frames(&self) -> usize {
        self.tracks.iter().map(Track::frame_count).sum()
    }

    pub fn dim(&self) -> Option<usize> {
        self.tracks.iter().find_map(Track::dim)
    }

    /// Sets `subject_id` on every track found in `labels`.
    pub fn attach_labels(&mut self, labels: &crate::io::Labels) {
        for t in &mut self.tracks {
            if let Some(s) = labels.get(&t.track_id) {
                t.subject_id = Some(s.clone());
            }
        }
    }
}

impl PartialEq for TrackDataset {
    fn eq(&self, other: &Self) -> bool {
        self.tracks == other.tracks
    }
}

/// Number of age categories in a posterior block.
pub const AGE_CATEGORIES: usize = 8;
/// Number of gender categories; index 0 is male, 1 is female.
pub const GENDER_CATEGORIES: usize = 2;

/// Age and gender posteriors for one frame (or pooled over many).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posteriors {
    pub age: ProbabilityVector,
    pub gender: ProbabilityVector,
}

impl Posteriors {
    pub fn new(age: ProbabilityVector, gender: ProbabilityVector) -> Result<Self> {
        if age.len() != AGE_CATEGORIES {
            return Err(Error::DimensionMismatch {
                expected: AGE_CATEGORIES,
                found: age.len(),
            });
        }
        if gender.len() != GENDER_CATEGORIES {
            return Err(Error::DimensionMismatch {
                expected: GENDER_CATEGORIES,
                found: gender.len(),
            });
        }
        Ok(Self { age, gender })
    }

    /// Age block followed by gender block, scaled to unit total mass.
    pub fn joint(&self) -> Vec<f64> {
        self.age
            .as_slice()
            .iter()
            .chain(self.gender.as_slice())
            .map(|x| x / 2.0)
            .collect()
    }
}

/// Per-frame posteriors of one track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackPosteriors {
    pub start_frame: i64,
    pub frames: Vec<Posteriors>,
}

/// Posteriors of many tracks, keyed by track id.
pub type PosteriorSet = std::collections::BTreeMap<String, TrackPosteriors>;

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn l2_normalize_slice(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if norm <= ZERO_NORM_EPS {
        return Err(Error::ZeroNorm);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Divides `v` by its Euclidean norm.
pub fn l2_normalize(v: &FeatureVector) -> Result<FeatureVector> {
    l2_normalize_slice(v.as_slice()).map(FeatureVector)
}

/// Divides a nonnegative vector by its sum, yielding a distribution.
pub fn l1_normalize(v: &FeatureVector) -> Result<ProbabilityVector> {
    l1_normalize_slice(v.as_slice()).map(ProbabilityVector)
}

pub(crate) fn l1_normalize_slice(v: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| **x < 0.0) {
        return Err(Error::NegativeComponent { index, value });
    }
    let sum: f64 = v.iter().sum();
    if sum <= ZERO_NORM_EPS {
        return Err(Error::ZeroNorm);
    }
    Ok(v.iter().map(|x| x / sum).collect())
}

/// A single problem found by [`validate_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Finding {
    EmptyTrack {
        track_id: String,
    },
    DuplicateId {
        track_id: String,
    },
    /// `track_id` has dimension `found` where `reference_track` set `expected`.
    DimensionMismatch {
        track_id: String,
        reference_track: String,
        expected: usize,
        found: usize,
    },
    NonFinite {
        track_id: String,
        frame: usize,
        component: usize,
    },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::EmptyTrack { track_id } => write!(f, "track '{track_id}' has no frames"),
            Finding::DuplicateId { track_id } => write!(f, "duplicate track id '{track_id}'"),
            Finding::DimensionMismatch {
                track_id,
                reference_track,
                expected,
                found,
            } => write!(
                f,
                "track '{track_id}' has D={found} but track '{reference_track}' has D={expected}"
            ),
            Finding::NonFinite {
                track_id,
                frame,
                component,
            } => write!(
                f,
                "track '{track_id}' frame {frame} component {component} is not finite"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Collects every structural problem in `dataset` instead of stopping at the
/// first one.
pub fn validate_dataset(dataset: &TrackDataset) -> ValidationReport {
    let mut findings = Vec::new();
    let mut seen: HashMap<&str, ()> = HashMap::new();
    let mut reference: Option<(&str, usize)> = None;

    for track in dataset.tracks() {
        if seen.insert(track.track_id.as_str(), ()).is_some() {
            findings.push(Finding::DuplicateId {
                track_id: track.track_id.clone(),
            });
        }
        if track.frames.is_empty() {
            findings.push(Finding::EmptyTrack {
                track_id: track.track_id.clone(),
            });
            continue;
        }
        let mut reported_dim = false;
        for (fi, frame) in track.frames.iter().enumerate() {
            match reference {
                None => reference = Some((track.track_id.as_str(), frame.dim())),
                Some((ref_id, expected)) if frame.dim() != expected && !reported_dim => {
                    findings.push(Finding::DimensionMismatch {
                        track_id: track.track_id.clone(),
                        reference_track: ref_id.to_string(),
                        expected,
                        found: frame.dim(),
                    });
                    reported_dim = true;
                }
                _ => {}
            }
            if let Some(component) = frame.as_slice().iter().position(|v| !v.is_finite()) {
                findings.push(Finding::NonFinite {
                    track_id: track.track_id.clone(),
                    frame: fi,
                    component,
                });
            }
        }
    }
    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn l2_pythagorean() {
        let n = l2_normalize(&fv(&[3.0, 4.0])).unwrap();
        assert_eq!(n.as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn l2_unit_vector_unchanged() {
        let n = l2_normalize(&fv(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(n.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn l2_zero_norm() {
        assert!(matches!(l2_normalize(&fv(&[0.0, 0.0])), Err(Error::ZeroNorm)));
        assert!(matches!(l2_normalize(&fv(&[1e-31])), Err(Error::ZeroNorm)));
        assert!(l2_normalize(&fv(&[1e-20])).is_ok());
    }

    #[test]
    fn l1_exact_fractions() {
        let p = l1_normalize(&fv(&[1.0, 1.0, 2.0])).unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.25, 0.5]);
        let p = l1_normalize(&fv(&[0.3, 0.7])).unwrap();
        assert_eq!(p.as_slice(), &[0.3, 0.7]);
    }

    #[test]
    fn l1_errors() {
        assert!(matches!(l1_normalize(&fv(&[0.0, 0.0])), Err(Error::ZeroNorm)));
        assert!(matches!(
            l1_normalize(&fv(&[0.5, -0.1])),
            Err(Error::NegativeComponent { index: 1, .. })
        ));
    }

    #[test]
    fn feature_vector_rejects_nan() {
        assert!(matches!(
            FeatureVector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(matches!(FeatureVector::new(vec![]), Err(Error::EmptyVector)));
    }

    #[test]
    fn probability_vector_checks() {
        assert!(ProbabilityVector::new(vec![0.2, 0.8]).is_ok());
        assert!(ProbabilityVector::new(vec![0.2, 0.7]).is_err());
        assert!(ProbabilityVector::new(vec![1.2, -0.2]).is_err());
        assert_eq!(ProbabilityVector::new(vec![0.5, 0.5]).unwrap().argmax(), 0);
    }

    #[test]
    fn validate_well_formed() {
        let ds = TrackDataset::new(vec![
            Track::from_rows("a", vec![vec![1.0, 0.0]]).unwrap(),
            Track::from_rows("b", vec![vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            Track::from_rows("c", vec![vec![2.0, 2.0]]).unwrap(),
        ]);
        assert!(validate_dataset(&ds).is_ok());
        assert_eq!(ds.track_count(), 3);
        assert_eq!(ds.total_frames(), 4);
    }

    #[test]
    fn validate_empty_track() {
        let ds = TrackDataset::new(vec![
            Track::from_rows("a", vec![vec![1.0]]).unwrap(),
            Track::new("empty", 0, vec![]),
        ]);
        let report = validate_dataset(&ds);
        assert_eq!(
            report.findings,
            vec![Finding::EmptyTrack {
                track_id: "empty".into()
            }]
        );
    }

    #[test]
    fn validate_dimension_mismatch_names_both_tracks() {
        let ds = TrackDataset::new(vec![
            Track::from_rows("wide", vec![vec![0.5; 64]]).unwrap(),
            Track::from_rows("narrow", vec![vec![0.5; 32]]).unwrap(),
        ]);
        let report = validate_dataset(&ds);
        assert_eq!(
            report.findings,
            vec![Finding::DimensionMismatch {
                track_id: "narrow".into(),
                reference_track: "wide".into(),
                expected: 64,
                found: 32,
            }]
        );
    }

    #[test]
    fn validate_duplicates_and_nonfinite() {
        let ds = TrackDataset::new(vec![
            Track::from_rows("a", vec![vec![1.0]]).unwrap(),
            Track::new("a", 0, vec![FeatureVector::new_unchecked(vec![f64::INFINITY])]),
        ]);
        let report = validate_dataset(&ds);
        assert_eq!(report.findings.len(), 2);
        assert!(report.findings.contains(&Finding::DuplicateId { track_id: "a".into() }));
    }

    fn nonzero_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, len).prop_filter("nonzero", |v| l2_norm(v) > 1e-6)
    }

    proptest! {
        #[test]
        fn l2_matches_per_component_division(v in nonzero_vec(64)) {
            let n = l2_normalize(&fv(&v)).unwrap();
            let mut sq = 0.0;
            for x in &v { sq += x * x; }
            let norm = sq.sqrt();
            for (a, x) in n.as_slice().iter().zip(&v) {
                prop_assert!((a - x / norm).abs() <= 1e-12);
            }
            prop_assert!((n.l2_norm() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn l2_idempotent_and_scale_invariant(v in nonzero_vec(16), c in 1e-3f64..1e3) {
            let once = l2_normalize(&fv(&v)).unwrap();
            let twice = l2_normalize(&once).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let from_scaled = l2_normalize(&fv(&scaled)).unwrap();
            for ((a, b), s) in once.as_slice().iter().zip(twice.as_slice()).zip(from_scaled.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12);
                prop_assert!((a - s).abs() <= 1e-12);
            }
        }

        #[test]
        fn l1_sums_to_one(v in prop::collection::vec(0.0f64..10.0, 8).prop_filter("positive", |v| v.iter().sum::<f64>() > 1e-6)) {
            let p = l1_normalize(&fv(&v)).unwrap();
            let sum: f64 = v.iter().sum();
            for (a, x) in p.as_slice().iter().zip(&v) {
                prop_assert!((a - x / sum).abs() <= 1e-15);
            }
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
