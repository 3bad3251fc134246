//! Verification protocol: pair scoring, ROC, AUC, EER, FRR at a fixed FAR,
//! threshold calibration and k-fold mean ± std reports.
//!
//! Distances are dissimilarities: a pair is accepted as "same person" when
//! its distance is at or below the threshold.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_with, TrackRepresentation};
use crate::dissimilarity::{representation_distance_with, track_distance_with, DistanceKind, TrackDistanceMethod};
use crate::error::{Error, Result};
use crate::feature::{FeatureVector, PosteriorSet, Track, TrackDataset};

/// Default FAR operating point.
pub const DEFAULT_FAR: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VerificationPair {
    pub track_a: String,
    pub track_b: String,
    pub same: bool,
    pub fold: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: VerificationPair,
    pub distance: f64,
}

impl ScoredPair {
    pub fn labelled(&self) -> (bool, f64) {
        (self.pair.same, self.distance)
    }
}

fn check_pair(p: &VerificationPair) -> Result<()> {
    if p.track_a == p.track_b {
        return Err(Error::InvalidArgument(format!(
            "pair compares track '{}' with itself",
            p.track_a
        )));
    }
    Ok(())
}

/// Scores every pair with Euclidean frame distance.
pub fn score_pairs(
    dataset: &TrackDataset,
    pairs: &[VerificationPair],
    method: TrackDistanceMethod,
) -> Result<Vec<ScoredPair>> {
    score_pairs_with(dataset, pairs, method, DistanceKind::Euclidean)
}

/// Scores every pair. Representation methods aggregate each referenced
/// track once; output order follows `pairs`.
pub fn score_pairs_with(
    dataset: &TrackDataset,
    pairs: &[VerificationPair],
    method: TrackDistanceMethod,
    kind: DistanceKind,
) -> Result<Vec<ScoredPair>> {
    for p in pairs {
        check_pair(p)?;
        dataset.require(&p.track_a)?;
        dataset.require(&p.track_b)?;
    }
    match method {
        TrackDistanceMethod::PairwiseAverage(_) => pairs
            .par_iter()
            .map(|p| {
                let a = dataset.require(&p.track_a)?;
                let b = dataset.require(&p.track_b)?;
                Ok(ScoredPair {
                    pair: p.clone(),
                    distance: track_distance_with(a, b, method, kind)?,
                })
            })
            .collect(),
        TrackDistanceMethod::Representation(agg) => {
            let mut ids: Vec<&str> = pairs
                .iter()
                .flat_map(|p| [p.track_a.as_str(), p.track_b.as_str()])
                .collect();
            ids.sort_unstable();
            ids.dedup();
            let reps: HashMap<&str, TrackRepresentation> = ids
                .par_iter()
                .map(|id| Ok((*id, aggregate_with(dataset.require(id)?, agg, kind)?)))
                .collect::<Result<_>>()?;
            pairs
                .iter()
                .map(|p| {
                    Ok(ScoredPair {
                        pair: p.clone(),
                        distance: representation_distance_with(
                            &reps[p.track_a.as_str()],
                            &reps[p.track_b.as_str()],
                            kind,
                        )?,
                    })
                })
                .collect()
        }
    }
}

/// Which posterior block is matched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PosteriorFeature {
    Age,
    Gender,
    /// Age and gender blocks concatenated, scaled to unit total mass.
    AgeGender,
}

impl PosteriorFeature {
    pub fn name(&self) -> &'static str {
        match self {
            PosteriorFeature::Age => "age",
            PosteriorFeature::Gender => "gender",
            PosteriorFeature::AgeGender => "age-gender",
        }
    }
}

/// Views a track's per-frame posteriors as a track of feature vectors.
pub fn posterior_track(track_id: &str, posteriors: &PosteriorSet, feature: PosteriorFeature) -> Result<Track> {
    let tp = posteriors
        .get(track_id)
        .ok_or_else(|| Error::UnknownTrack(track_id.to_string()))?;
    let frames = tp
        .frames
        .iter()
        .map(|p| {
            FeatureVector::new(match feature {
                PosteriorFeature::Age => p.age.as_slice().to_vec(),
                PosteriorFeature::Gender => p.gender.as_slice().to_vec(),
                PosteriorFeature::AgeGender => p.joint(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Track::new(track_id, tp.start_frame, frames))
}

/// Scores pairs on age/gender posteriors instead of face embeddings.
pub fn score_posterior_pairs(
    posteriors: &PosteriorSet,
    pairs: &[VerificationPair],
    feature: PosteriorFeature,
    method: TrackDistanceMethod,
    kind: DistanceKind,
) -> Result<Vec<ScoredPair>> {
    let mut tracks = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for p in pairs {
        for id in [&p.track_a, &p.track_b] {
            if seen.insert(id.as_str()) {
                tracks.push(posterior_track(id, posteriors, feature)?);
            }
        }
    }
    score_pairs_with(&TrackDataset::new(tracks), pairs, method, kind)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// FAR/FRR at −∞, at every distinct distance and at +∞, in ascending
/// threshold order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub same_count: usize,
    pub diff_count: usize,
}

pub fn roc(scored: &[(bool, f64)]) -> Result<RocCurve> {
    if let Some((_, d)) = scored.iter().find(|(_, d)| d.is_nan()) {
        return Err(Error::InvalidArgument(format!("distance {d} is not a number")));
    }
    let positives = scored.iter().filter(|(s, _)| *s).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels(format!(
            "{positives} same pairs and {negatives} different pairs"
        )));
    }
    let mut sorted: Vec<(bool, f64)> = scored.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = Vec::with_capacity(sorted.len() + 2);
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    let (mut accepted_same, mut accepted_diff) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].1;
        while i < sorted.len() && sorted[i].1 == threshold {
            if sorted[i].0 {
                accepted_same += 1;
            } else {
                accepted_diff += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            far: accepted_diff as f64 / n,
            frr: (positives - accepted_same) as f64 / p,
        });
    }
    points.push(RocPoint {
        threshold: f64::INFINITY,
        far: 1.0,
        frr: 0.0,
    });
    Ok(RocCurve {
        points,
        same_count: positives,
        diff_count: negatives,
    })
}

/// Trapezoidal area under TAR = 1 − FRR against FAR.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].far - w[0].far) * ((1.0 - w[0].frr) + (1.0 - w[1].frr)) / 2.0)
        .sum()
}

/// Error rate where FAR meets FRR, interpolating linearly between the two
/// curve points that bracket the crossing.
pub fn eer(curve: &RocCurve) -> f64 {
    let pts = &curve.points;
    for k in 0..pts.len() {
        let gap = pts[k].far - pts[k].frr;
        if gap == 0.0 {
            return pts[k].far;
        }
        if gap > 0.0 {
            if k == 0 {
                return pts[0].far;
            }
            let (a, b) = (pts[k - 1], pts[k]);
            let s = (a.frr - a.far) / ((b.far - a.far) - (b.frr - a.frr));
            return a.far + s * (b.far - a.far);
        }
    }
    // FAR reaches 1 and FRR 0 at +∞, so a crossing always exists.
    unreachable!("roc curve without a FAR/FRR crossing")
}

fn check_far(far_target: f64) -> Result<()> {
    if far_target > 0.0 && far_target < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "FAR target must lie strictly between 0 and 1, got {far_target}"
        )))
    }
}

/// FRR at the largest threshold whose FAR does not exceed `far_target`,
/// without interpolation.
pub fn frr_at_far(curve: &RocCurve, far_target: f64) -> Result<f64> {
    check_far(far_target)?;
    Ok(curve
        .points
        .iter()
        .rev()
        .find(|p| p.far <= far_target)
        .map(|p| p.frr)
        .unwrap_or(1.0))
}

/// Largest observed distance whose FAR on the training pairs does not
/// exceed `far_target`. When even the smallest distance is too permissive,
/// returns the largest float strictly below the closest different pair.
pub fn calibrate_threshold(scored_train: &[(bool, f64)], far_target: f64) -> Result<f64> {
    check_far(far_target)?;
    let mut diffs: Vec<f64> = scored_train.iter().filter(|(s, _)| !s).map(|(_, d)| *d).collect();
    if diffs.is_empty() {
        return Err(Error::DegenerateLabels("no different-subject training pairs".into()));
    }
    if diffs.iter().any(|d| d.is_nan()) || scored_train.iter().any(|(_, d)| d.is_nan()) {
        return Err(Error::InvalidArgument("NaN distance in training pairs".into()));
    }
    diffs.sort_by(f64::total_cmp);
    let n = diffs.len() as f64;
    let mut candidates: Vec<f64> = scored_train.iter().map(|(_, d)| *d).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = None;
    for &theta in &candidates {
        let accepted = diffs.partition_point(|d| *d <= theta);
        if accepted as f64 / n <= far_target {
            best = Some(theta);
        } else {
            break;
        }
    }
    Ok(best.unwrap_or_else(|| diffs[0].next_down()))
}

/// Metrics of one fold, as fractions in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub pairs: usize,
    pub auc: f64,
    pub eer: f64,
    pub frr_at_far: f64,
}

/// Mean and sample standard deviation over folds, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc_mean: f64,
    pub auc_std: f64,
    pub eer_mean: f64,
    pub eer_std: f64,
    pub frr_at_far_mean: f64,
    pub frr_at_far_std: f64,
    pub far_operating_point: f64,
    pub folds: Vec<FoldMetrics>,
}

/// AUC, EER and FRR@FAR for one set of scored pairs.
pub fn fold_metrics(scored: &[(bool, f64)], far_target: f64) -> Result<(f64, f64, f64)> {
    let curve = roc(scored)?;
    Ok((auc(&curve), eer(&curve), frr_at_far(&curve, far_target)?))
}

/// Mean and sample (n − 1) standard deviation. Identical values give a zero
/// deviation exactly; a single value has zero deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Per-fold metrics and their mean ± std over the folds present in `scored`.
pub fn kfold_report_scored(scored: &[ScoredPair], far_target: f64) -> Result<MetricReport> {
    check_far(far_target)?;
    let mut by_fold: BTreeMap<usize, Vec<(bool, f64)>> = BTreeMap::new();
    for s in scored {
        by_fold.entry(s.pair.fold).or_default().push(s.labelled());
    }
    if by_fold.is_empty() {
        return Err(Error::DegenerateLabels("no pairs".into()));
    }
    let folds = by_fold
        .into_par_iter()
        .map(|(fold, pairs)| {
            let (auc, eer, frr) = fold_metrics(&pairs, far_target).map_err(|e| match e {
                Error::DegenerateLabels(m) => Error::DegenerateLabels(format!("fold {fold}: {m}")),
                other => other,
            })?;
            Ok(FoldMetrics {
                fold,
                pairs: pairs.len(),
                auc,
                eer,
                frr_at_far: frr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pct = |f: fn(&FoldMetrics) -> f64| {
        let v: Vec<f64> = folds.iter().map(|m| 100.0 * f(m)).collect();
        mean_std(&v)
    };
    let (auc_mean, auc_std) = pct(|m| m.auc);
    let (eer_mean, eer_std) = pct(|m| m.eer);
    let (frr_at_far_mean, frr_at_far_std) = pct(|m| m.frr_at_far);
    Ok(MetricReport {
        auc_mean,
        auc_std,
        eer_mean,
        eer_std,
        frr_at_far_mean,
        frr_at_far_std,
        far_operating_point: far_target,
        folds,
    })
}

pub fn kfold_report(
    dataset: &TrackDataset,
    pairs: &[VerificationPair],
    method: TrackDistanceMethod,
    far_target: f64,
) -> Result<MetricReport> {
    let scored = score_pairs(dataset, pairs, method)?;
    kfold_report_scored(&scored, far_target)
}

/// One table row: a method and its report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub label: String,
    pub report: MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub far_target: f64,
    pub rows: Vec<ReportRow>,
}

fn cell(mean: f64, std: f64) -> String {
    format!("{mean:.1}±{std:.1}")
}

/// Aligned plain-text table: one row per method, cells as `mean±std`.
pub fn format_table(report: &EvalReport) -> String {
    let far_pct = 100.0 * report.far_target;
    let headers = [
        "Method".to_string(),
        "AUC(%)".to_string(),
        "EER(%)".to_string(),
        format!("FRR@FAR={far_pct}%"),
    ];
    let rows: Vec<[String; 4]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                cell(r.report.auc_mean, r.report.auc_std),
                cell(r.report.eer_mean, r.report.eer_std),
                cell(r.report.frr_at_far_mean, r.report.frr_at_far_std),
            ]
        })
        .collect();
    let mut widths = headers.each_ref().map(|h| h.chars().count());
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String; 4]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&headers);
    for r in &rows {
        line(r);
    }
    out
}
