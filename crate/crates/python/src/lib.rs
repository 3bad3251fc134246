//! Python bindings: tracks, aggregation, track distances, verification
//! metrics, clustering, synthetic data and track files.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use trackfold::aggregation::{aggregate_with, AggregationMethod, TrackRepresentation};
use trackfold::clustering::{hac_cluster, online_cluster, Cluster, ClusteringConfig, Linkage};
use trackfold::dissimilarity::{DistanceKind, FrameNormalization, TrackDistanceMethod};
use trackfold::evaluation;
use trackfold::feature::{FeatureVector, ProbabilityVector, Track, TrackDataset};
use trackfold::synth::SynthConfig;

fn to_py(e: trackfold::Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn metric(name: &str) -> PyResult<DistanceKind> {
    match name {
        "euclidean" => Ok(DistanceKind::Euclidean),
        "kl" => Ok(DistanceKind::KlSymmetric),
        other => Err(PyValueError::new_err(format!(
            "unknown distance '{other}'; expected 'euclidean' or 'kl'"
        ))),
    }
}

/// Aggregation method from a representation method name or one of the
/// aggregation-only names such as `l2-medoid`.
fn aggregation_method(name: &str) -> PyResult<AggregationMethod> {
    if let Some(m) = AggregationMethod::from_name(name) {
        return Ok(m);
    }
    TrackDistanceMethod::parse(name)
        .map_err(to_py)?
        .aggregation()
        .ok_or_else(|| PyValueError::new_err(format!("'{name}' has no per-track representation")))
}

/// A sequence of per-frame feature vectors for one face.
#[pyclass(name = "Track", module = "pytrackfold")]
struct PyTrack {
    inner: Track,
}

#[pymethods]
impl PyTrack {
    #[new]
    #[pyo3(signature = (track_id, frames, start_frame = 0, subject_id = None))]
    fn new(track_id: String, frames: Vec<Vec<f64>>, start_frame: i64, subject_id: Option<String>) -> PyResult<Self> {
        let frames = frames
            .into_iter()
            .map(FeatureVector::new)
            .collect::<trackfold::Result<Vec<_>>>()
            .map_err(to_py)?;
        let mut inner = Track::new(track_id, start_frame, frames);
        inner.subject_id = subject_id;
        Ok(PyTrack { inner })
    }

    #[getter]
    fn track_id(&self) -> &str {
        &self.inner.track_id
    }

    #[getter]
    fn subject_id(&self) -> Option<&str> {
        self.inner.subject_id.as_deref()
    }

    #[getter]
    fn start_frame(&self) -> i64 {
        self.inner.start_frame
    }

    #[getter]
    fn frame_count(&self) -> usize {
        self.inner.frame_count()
    }

    #[getter]
    fn dim(&self) -> Option<usize> {
        self.inner.dim()
    }

    #[getter]
    fn frames(&self) -> Vec<Vec<f64>> {
        self.inner.frames.iter().map(|f| f.as_slice().to_vec()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.frame_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Track('{}', frames={}, dim={})",
            self.inner.track_id,
            self.inner.frame_count(),
            self.inner.dim().unwrap_or(0)
        )
    }
}

fn wrap(tracks: Vec<Track>) -> Vec<PyTrack> {
    tracks.into_iter().map(|inner| PyTrack { inner }).collect()
}

/// Names of the seven track distance methods, in table order.
#[pyfunction]
fn method_names() -> Vec<&'static str> {
    TrackDistanceMethod::TABLE_ROWS.iter().map(|m| m.name()).collect()
}

#[pyfunction]
fn l2_normalize(v: Vec<f64>) -> PyResult<Vec<f64>> {
    let v = FeatureVector::new(v).map_err(to_py)?;
    Ok(trackfold::l2_normalize(&v).map_err(to_py)?.into_inner())
}

#[pyfunction]
#[pyo3(signature = (p, q, symmetric = true))]
fn kl_divergence(p: Vec<f64>, q: Vec<f64>, symmetric: bool) -> PyResult<f64> {
    let p = ProbabilityVector::new(p).map_err(to_py)?;
    let q = ProbabilityVector::new(q).map_err(to_py)?;
    trackfold::kl_divergence(&p, &q, symmetric).map_err(to_py)
}

/// Aggregated representation of one track.
#[pyfunction]
#[pyo3(signature = (track, method, distance = "euclidean"))]
fn aggregate(track: PyRef<'_, PyTrack>, method: &str, distance: &str) -> PyResult<Vec<f64>> {
    let rep = aggregate_with(&track.inner, aggregation_method(method)?, metric(distance)?).map_err(to_py)?;
    Ok(rep.vector.into_inner())
}

#[pyfunction]
#[pyo3(signature = (a, b, l2 = false))]
fn pairwise_average_distance(a: PyRef<'_, PyTrack>, b: PyRef<'_, PyTrack>, l2: bool) -> PyResult<f64> {
    let norm = if l2 {
        FrameNormalization::L2PerFrame
    } else {
        FrameNormalization::Raw
    };
    trackfold::pairwise_average_distance(&a.inner, &b.inner, norm).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, b, method, distance = "euclidean"))]
fn track_distance(a: PyRef<'_, PyTrack>, b: PyRef<'_, PyTrack>, method: &str, distance: &str) -> PyResult<f64> {
    let m = TrackDistanceMethod::parse(method).map_err(to_py)?;
    trackfold::track_distance_with(&a.inner, &b.inner, m, metric(distance)?).map_err(to_py)
}

fn labelled(same: Vec<bool>, distances: Vec<f64>) -> PyResult<Vec<(bool, f64)>> {
    if same.len() != distances.len() {
        return Err(PyValueError::new_err(format!(
            "{} labels but {} distances",
            same.len(),
            distances.len()
        )));
    }
    Ok(same.into_iter().zip(distances).collect())
}

/// AUC, EER and FRR at the given FAR for labelled pair distances, as
/// fractions.
#[pyfunction]
#[pyo3(signature = (same, distances, far = 0.01))]
fn verification_metrics(same: Vec<bool>, distances: Vec<f64>, far: f64) -> PyResult<BTreeMap<&'static str, f64>> {
    let s = labelled(same, distances)?;
    let (auc, eer, frr) = evaluation::fold_metrics(&s, far).map_err(to_py)?;
    Ok(BTreeMap::from([("auc", auc), ("eer", eer), ("frr_at_far", frr)]))
}

/// ROC points as (threshold, far, frr) tuples.
#[pyfunction]
fn roc(same: Vec<bool>, distances: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let curve = evaluation::roc(&labelled(same, distances)?).map_err(to_py)?;
    Ok(curve.points.iter().map(|p| (p.threshold, p.far, p.frr)).collect())
}

#[pyfunction]
#[pyo3(signature = (same, distances, far = 0.01))]
fn calibrate_threshold(same: Vec<bool>, distances: Vec<f64>, far: f64) -> PyResult<f64> {
    evaluation::calibrate_threshold(&labelled(same, distances)?, far).map_err(to_py)
}

fn cluster_ids(clusters: &[Cluster]) -> Vec<Vec<String>> {
    clusters.iter().map(|c| c.track_ids.clone()).collect()
}

fn representations(tracks: &[PyRef<'_, PyTrack>], method: AggregationMethod) -> PyResult<Vec<TrackRepresentation>> {
    tracks
        .iter()
        .map(|t| trackfold::aggregate(&t.inner, method))
        .collect::<trackfold::Result<_>>()
        .map_err(to_py)
}

/// Clusters tracks and returns the member track ids of each cluster.
/// `mode` is `online` (single pass in the given order) or `hac`.
#[pyfunction]
#[pyo3(signature = (tracks, threshold, method = "avepool-l2", mode = "online"))]
fn cluster(tracks: Vec<PyRef<'_, PyTrack>>, threshold: f64, method: &str, mode: &str) -> PyResult<Vec<Vec<String>>> {
    let method = aggregation_method(method)?;
    let reps = representations(&tracks, method)?;
    let linkage = match mode {
        "online" => Linkage::NearestCluster,
        "hac" => Linkage::AverageLinkage,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown mode '{other}'; expected 'online' or 'hac'"
            )))
        }
    };
    let cfg = ClusteringConfig {
        threshold,
        method,
        linkage,
    };
    let clusters = match linkage {
        Linkage::NearestCluster => online_cluster(&reps, None, &cfg),
        Linkage::AverageLinkage => hac_cluster(&reps, None, &cfg),
    };
    clusters.map(|c| cluster_ids(&c)).map_err(to_py)
}

/// Seeded synthetic dataset: returns (tracks, labels) where labels maps
/// track id to subject id.
#[pyfunction]
#[pyo3(signature = (seed = 0, dim = 64, identities = 50, tracks_per_identity = 3, frames = 20, noise_sigma = 0.3, gain_spread = 0.5))]
#[allow(clippy::too_many_arguments)]
fn synth(
    seed: u64,
    dim: usize,
    identities: usize,
    tracks_per_identity: usize,
    frames: usize,
    noise_sigma: f64,
    gain_spread: f64,
) -> PyResult<(Vec<PyTrack>, BTreeMap<String, String>)> {
    let cfg = SynthConfig {
        seed,
        dim,
        identities,
        tracks_per_identity,
        frames_min: frames,
        frames_max: frames,
        noise_sigma,
        gain_spread,
        ..SynthConfig::default()
    };
    let data = trackfold::generate(&cfg).map_err(to_py)?;
    Ok((wrap(data.dataset.into_tracks()), data.labels))
}

#[pyfunction]
fn read_tracks(path: &str) -> PyResult<Vec<PyTrack>> {
    Ok(wrap(trackfold::io::read_tracks(path).map_err(to_py)?.into_tracks()))
}

#[pyfunction]
fn write_tracks(tracks: Vec<PyRef<'_, PyTrack>>, path: &str) -> PyResult<()> {
    let dataset = TrackDataset::new(tracks.iter().map(|t| t.inner.clone()).collect());
    trackfold::io::write_tracks(&dataset, path).map_err(to_py)
}

#[pymodule]
fn pytrackfold(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrack>()?;
    m.add_function(wrap_pyfunction!(method_names, m)?)?;
    m.add_function(wrap_pyfunction!(l2_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_average_distance, m)?)?;
    m.add_function(wrap_pyfunction!(track_distance, m)?)?;
    m.add_function(wrap_pyfunction!(verification_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(cluster, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(read_tracks, m)?)?;
    m.add_function(wrap_pyfunction!(write_tracks, m)?)?;
    Ok(())
}
