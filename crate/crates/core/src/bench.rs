//! Wall-clock comparison of pairwise-average matching against matching of
//! pre-aggregated representations.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::aggregation::aggregate;
use crate::dissimilarity::{
    pairwise_average_with, representation_distance, DistanceKind, FrameNormalization, TrackDistanceMethod,
};
use crate::error::{Error, Result};
use crate::feature::{FeatureVector, Track};
use crate::synth::SynthRng;

/// Minimum wall time per measurement; fast loops are repeated until reached.
pub const MIN_MEASURE: Duration = Duration::from_millis(20);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub frames_per_track: usize,
    pub dim: usize,
    pub pairs: usize,
    pub methods: Vec<TrackDistanceMethod>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            frames_per_track: 50,
            dim: 256,
            pairs: 100,
            methods: TrackDistanceMethod::TABLE_ROWS.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub label: String,
    /// Matching time per pair, excluding aggregation.
    pub seconds_per_pair: f64,
    /// One-time aggregation cost per track; zero for pairwise methods.
    pub aggregation_seconds_per_track: f64,
    /// Frame-distance evaluations per pair.
    pub evaluations_per_pair: u64,
    /// Baseline time per pair divided by this method's time per pair.
    pub speedup: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// Pairwise method the speedups are measured against.
    pub baseline: Option<String>,
    pub rows: Vec<BenchRow>,
}

fn random_track(rng: &mut SynthRng, id: usize, frames: usize, dim: usize) -> Track {
    let frames = (0..frames)
        .map(|_| FeatureVector::new_unchecked((0..dim).map(|_| rng.normal()).collect()))
        .collect();
    Track::new(format!("b{id:05}"), 0, frames)
}

/// Runs `f` repeatedly until `MIN_MEASURE` has elapsed; returns seconds per call.
fn measure(mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let start = Instant::now();
    let mut calls = 0u64;
    loop {
        f()?;
        calls += 1;
        let elapsed = start.elapsed();
        if elapsed >= MIN_MEASURE {
            return Ok(elapsed.as_secs_f64() / calls as f64);
        }
    }
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.frames_per_track == 0 || cfg.dim == 0 || cfg.pairs == 0 {
        return Err(Error::InvalidConfig(
            "frames per track, dimension and pair count must be positive".into(),
        ));
    }
    if cfg.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods to benchmark".into()));
    }
    let mut rng = SynthRng::new(cfg.seed);
    let tracks: Vec<Track> = (0..2 * cfg.pairs)
        .map(|i| random_track(&mut rng, i, cfg.frames_per_track, cfg.dim))
        .collect();
    let pairs: Vec<(&Track, &Track)> = tracks.chunks(2).map(|c| (&c[0], &c[1])).collect();

    let mut rows = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        let row = match *method {
            TrackDistanceMethod::PairwiseAverage(norm) => {
                let evaluations =
                    pairwise_average_with(pairs[0].0, pairs[0].1, norm, DistanceKind::Euclidean)?.evaluations;
                let per_pass = measure(|| {
                    for (a, b) in &pairs {
                        black_box(pairwise_average_with(a, b, norm, DistanceKind::Euclidean)?);
                    }
                    Ok(())
                })?;
                BenchRow {
                    method: method.name().into(),
                    label: method.label().into(),
                    seconds_per_pair: per_pass / pairs.len() as f64,
                    aggregation_seconds_per_track: 0.0,
                    evaluations_per_pair: evaluations,
                    speedup: None,
                }
            }
            TrackDistanceMethod::Representation(agg) => {
                let mut reps = Vec::new();
                let agg_pass = measure(|| {
                    reps = tracks.iter().map(|t| aggregate(t, agg)).collect::<Result<Vec<_>>>()?;
                    Ok(())
                })?;
                let per_pass = measure(|| {
                    for pair in reps.chunks(2) {
                        black_box(representation_distance(&pair[0], &pair[1])?);
                    }
                    Ok(())
                })?;
                BenchRow {
                    method: method.name().into(),
                    label: method.label().into(),
                    seconds_per_pair: per_pass / pairs.len() as f64,
                    aggregation_seconds_per_track: agg_pass / tracks.len() as f64,
                    evaluations_per_pair: 1,
                    speedup: None,
                }
            }
        };
        rows.push(row);
    }

    let preferred = [
        TrackDistanceMethod::PairwiseAverage(FrameNormalization::L2PerFrame),
        TrackDistanceMethod::PairwiseAverage(FrameNormalization::Raw),
    ];
    let baseline = preferred
        .iter()
        .find_map(|m| rows.iter().find(|r| r.method == m.name()))
        .map(|r| (r.method.clone(), r.seconds_per_pair));
    if let Some((_, base)) = &baseline {
        for r in &mut rows {
            r.speedup = Some(base / r.seconds_per_pair);
        }
    }
    Ok(BenchReport {
        config: cfg.clone(),
        baseline: baseline.map(|b| b.0),
        rows,
    })
}

pub fn format_bench_table(report: &BenchReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "L={} D={} pairs={} baseline={}",
        report.config.frames_per_track,
        report.config.dim,
        report.config.pairs,
        report.baseline.as_deref().unwrap_or("none")
    );
    let _ = writeln!(
        out,
        "{:<26} {:>14} {:>16} {:>12} {:>10}",
        "Method", "us/pair", "agg us/track", "distances", "speedup"
    );
    for r in &report.rows {
        let speedup = r.speedup.map_or("-".to_string(), |s| format!("{s:.1}x"));
        let _ = writeln!(
            out,
            "{:<26} {:>14.3} {:>16.3} {:>12} {:>10}",
            r.label,
            r.seconds_per_pair * 1e6,
            r.aggregation_seconds_per_track * 1e6,
            r.evaluations_per_pair,
            speedup
        );
    }
    out
}
