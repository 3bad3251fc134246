//! Grouping track representations into persons: single-pass online
//! clustering against running cluster aggregates, and average-linkage
//! agglomerative clustering cut at a distance threshold.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{medoid_index_of, AggregationMethod, PoolKind, TrackRepresentation};
use crate::dissimilarity::{euclidean_unchecked, DistanceKind};
use crate::error::{Error, Result};
use crate::feature::{l1_normalize_slice, l2_normalize_slice, FeatureVector, Posteriors, ProbabilityVector};
use crate::io::Labels;

/// Relative tolerance under which two merge candidates count as tied.
pub const HAC_TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    /// Position in a gender posterior: 0 = male, 1 = female.
    pub fn index(&self) -> usize {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "male" => Some(Gender::Male),
            "female" => Some(Gender::Female),
            _ => None,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Gender::Male),
            1 => Some(Gender::Female),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Linkage {
    /// Online: each arriving track joins its nearest cluster.
    NearestCluster,
    /// Offline agglomerative clustering with average linkage.
    AverageLinkage,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub threshold: f64,
    pub method: AggregationMethod,
    pub linkage: Linkage,
}

impl ClusteringConfig {
    fn validate(&self, linkage: Linkage) -> Result<()> {
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "threshold must be >= 0, got {}",
                self.threshold
            )));
        }
        if self.linkage != linkage {
            return Err(Error::InvalidConfig(format!(
                "expected {linkage:?} linkage, got {:?}",
                self.linkage
            )));
        }
        Ok(())
    }
}

/// A person: member tracks plus their pooled representation and posteriors.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub cluster_id: usize,
    pub track_ids: Vec<String>,
    pub representation: FeatureVector,
    pub total_frames: usize,
    pub age_posterior: Option<ProbabilityVector>,
    pub gender_posterior: Option<ProbabilityVector>,
    method: AggregationMethod,
    // Σ frame_count · pooled over members (average pooling methods)
    weighted_sum: Vec<f64>,
    // member vectors (medoid methods)
    members: Vec<FeatureVector>,
    age_sum: Option<Vec<f64>>,
    gender_sum: Option<Vec<f64>>,
    posterior_frames: usize,
}

impl Cluster {
    pub fn new(cluster_id: usize, rep: &TrackRepresentation, posteriors: Option<&Posteriors>) -> Result<Self> {
        let mut c = Self {
            cluster_id,
            track_ids: Vec::new(),
            representation: rep.vector.clone(),
            total_frames: 0,
            age_posterior: None,
            gender_posterior: None,
            method: rep.method,
            weighted_sum: vec![0.0; rep.vector.dim()],
            members: Vec::new(),
            age_sum: None,
            gender_sum: None,
            posterior_frames: 0,
        };
        c.absorb(rep, posteriors)?;
        Ok(c)
    }

    pub fn method(&self) -> AggregationMethod {
        self.method
    }

    pub fn len(&self) -> usize {
        self.track_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.track_ids.is_empty()
    }

    /// Adds a track and refreshes the pooled representation and posteriors.
    pub fn absorb(&mut self, rep: &TrackRepresentation, posteriors: Option<&Posteriors>) -> Result<()> {
        if rep.method != self.method {
            return Err(Error::MethodMismatch(self.method.to_string(), rep.method.to_string()));
        }
        if rep.vector.dim() != self.weighted_sum.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weighted_sum.len(),
                found: rep.vector.dim(),
            });
        }
        if self.track_ids.contains(&rep.track_id) {
            return Err(Error::DuplicateTrack(rep.track_id.clone()));
        }
        let w = rep.frame_count as f64;
        self.track_ids.push(rep.track_id.clone());
        self.total_frames += rep.frame_count;

        self.representation = match self.method.kind {
            PoolKind::AvePool => {
                for (s, x) in self.weighted_sum.iter_mut().zip(rep.pooled.as_slice()) {
                    *s += w * x;
                }
                let n = self.total_frames as f64;
                let mean: Vec<f64> = self.weighted_sum.iter().map(|s| s / n).collect();
                if self.method.ends_with_l2() {
                    FeatureVector::new_unchecked(l2_normalize_slice(&mean)?)
                } else {
                    FeatureVector::new_unchecked(mean)
                }
            }
            PoolKind::Medoid => {
                self.members.push(rep.vector.clone());
                let i = medoid_index_of(
                    &self.members.iter().map(FeatureVector::as_slice).collect::<Vec<_>>(),
                    DistanceKind::Euclidean,
                )?;
                self.members[i].clone()
            }
        };

        if let Some(p) = posteriors {
            add_weighted(&mut self.age_sum, p.age.as_slice(), w);
            add_weighted(&mut self.gender_sum, p.gender.as_slice(), w);
            self.posterior_frames += rep.frame_count;
            self.age_posterior = Some(ProbabilityVector::new(l1_normalize_slice(
                self.age_sum.as_ref().unwrap(),
            )?)?);
            self.gender_posterior = Some(ProbabilityVector::new(l1_normalize_slice(
                self.gender_sum.as_ref().unwrap(),
            )?)?);
        }
        Ok(())
    }
}

fn add_weighted(acc: &mut Option<Vec<f64>>, values: &[f64], w: f64) {
    let acc = acc.get_or_insert_with(|| vec![0.0; values.len()]);
    for (a, v) in acc.iter_mut().zip(values) {
        *a += w * v;
    }
}

/// Returns `c` with `rep` added; `c` itself is left untouched.
pub fn update_cluster(c: &Cluster, rep: &TrackRepresentation, posteriors: Option<&Posteriors>) -> Result<Cluster> {
    let mut next = c.clone();
    next.absorb(rep, posteriors)?;
    Ok(next)
}

fn check_methods(reps: &[TrackRepresentation], method: AggregationMethod) -> Result<()> {
    match reps.iter().find(|r| r.method != method) {
        Some(r) => Err(Error::MethodMismatch(method.to_string(), r.method.to_string())),
        None => Ok(()),
    }
}

fn posterior_for<'a>(posteriors: Option<&'a BTreeMap<String, Posteriors>>, id: &str) -> Option<&'a Posteriors> {
    posteriors.and_then(|m| m.get(id))
}

/// Single pass over `stream`: each track joins the nearest existing cluster
/// when that distance is within the threshold, otherwise it opens a new one.
/// Equidistant clusters resolve to the lowest id.
pub fn online_cluster(
    stream: &[TrackRepresentation],
    posteriors: Option<&BTreeMap<String, Posteriors>>,
    cfg: &ClusteringConfig,
) -> Result<Vec<Cluster>> {
    cfg.validate(Linkage::NearestCluster)?;
    check_methods(stream, cfg.method)?;
    let mut clusters: Vec<Cluster> = Vec::new();
    for rep in stream {
        let x = rep.vector.as_slice();
        let nearest = clusters
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                if c.representation.dim() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: c.representation.dim(),
                        found: x.len(),
                    });
                }
                Ok((euclidean_unchecked(c.representation.as_slice(), x), i))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let post = posterior_for(posteriors, &rep.track_id);
        match nearest {
            Some((d, i)) if d <= cfg.threshold => clusters[i].absorb(rep, post)?,
            _ => {
                let id = clusters.len();
                clusters.push(Cluster::new(id, rep, post)?);
            }
        }
    }
    Ok(clusters)
}

/// Average-linkage agglomerative clustering: repeatedly merges the closest
/// pair of clusters until the closest pair is farther apart than the
/// threshold. Near-ties merge the pair with the smallest ids first.
pub fn hac_cluster(
    reps: &[TrackRepresentation],
    posteriors: Option<&BTreeMap<String, Posteriors>>,
    cfg: &ClusteringConfig,
) -> Result<Vec<Cluster>> {
    cfg.validate(Linkage::AverageLinkage)?;
    check_methods(reps, cfg.method)?;
    let groups = average_linkage_groups(reps, cfg.threshold)?;
    groups
        .into_iter()
        .enumerate()
        .map(|(cid, members)| {
            let first = &reps[members[0]];
            let mut c = Cluster::new(cid, first, posterior_for(posteriors, &first.track_id))?;
            for &m in &members[1..] {
                c.absorb(&reps[m], posterior_for(posteriors, &reps[m].track_id))?;
            }
            Ok(c)
        })
        .collect()
}

/// Member index lists, ordered by smallest member.
fn average_linkage_groups(reps: &[TrackRepresentation], threshold: f64) -> Result<Vec<Vec<usize>>> {
    let n = reps.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let dim = reps[0].vector.dim();
    if let Some(r) = reps.iter().find(|r| r.vector.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: r.vector.dim(),
        });
    }
    let mut dist: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| euclidean_unchecked(reps[i].vector.as_slice(), reps[j].vector.as_slice()))
                .collect()
        })
        .collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut active: Vec<usize> = (0..n).collect();

    while active.len() > 1 {
        let mut min = f64::INFINITY;
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                min = min.min(dist[i][j]);
            }
        }
        if min > threshold {
            break;
        }
        let tol = HAC_TIE_TOL * min.abs().max(1.0);
        let (i, j) = active
            .iter()
            .enumerate()
            .flat_map(|(a, &i)| active[a + 1..].iter().map(move |&j| (i, j)))
            .find(|&(i, j)| dist[i][j] <= min + tol)
            .expect("minimum is attained");

        let (ni, nj) = (members[i].len() as f64, members[j].len() as f64);
        for &k in &active {
            if k == i || k == j {
                continue;
            }
            let d = (ni * dist[k][i] + nj * dist[k][j]) / (ni + nj);
            dist[k][i] = d;
            dist[i][k] = d;
        }
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        members[i].sort_unstable();
        active.retain(|&k| k != j);
    }
    Ok(active.into_iter().map(|i| std::mem::take(&mut members[i])).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Gender,
    pub age_category: usize,
}

/// Argmax of the pooled posteriors; ties go to the lower index.
pub fn estimate_demographics(c: &Cluster) -> Result<Demographics> {
    match (&c.gender_posterior, &c.age_posterior) {
        (Some(g), Some(a)) => Ok(Demographics {
            gender: Gender::from_index(g.argmax())
                .ok_or_else(|| Error::InvalidProbability(format!("gender posterior has {} entries", g.len())))?,
            age_category: a.argmax(),
        }),
        _ => Err(Error::MissingPosteriors(c.cluster_id)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    /// Σ over clusters of the majority subject count, over all tracks.
    pub purity: f64,
    /// Clusters holding tracks of two or more subjects.
    pub impure_clusters: usize,
    pub clusters: usize,
    pub tracks: usize,
}

pub fn purity(clusters: &[Cluster], labels: &Labels) -> Result<PurityReport> {
    let mut majority_total = 0usize;
    let mut tracks = 0usize;
    let mut impure = 0usize;
    for c in clusters {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in &c.track_ids {
            let subject = labels.get(t).ok_or_else(|| Error::MissingLabel(t.clone()))?;
            *counts.entry(subject.as_str()).or_default() += 1;
        }
        majority_total += counts.values().copied().max().unwrap_or(0);
        tracks += c.track_ids.len();
        if counts.len() >= 2 {
            impure += 1;
        }
    }
    Ok(PurityReport {
        purity: if tracks == 0 {
            1.0
        } else {
            majority_total as f64 / tracks as f64
        },
        impure_clusters: impure,
        clusters: clusters.len(),
        tracks,
    })
}
