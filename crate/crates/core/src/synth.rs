//! Seeded synthetic embeddings with known identities.
//!
//! Every identity owns a unit-norm prototype. A frame is
//! `gain · (prototype + σ·z)` with `z ~ N(0, I)` and a per-frame gain drawn
//! uniformly from `[1 − s, 1 + s]`, so frame norms vary and the order of
//! pooling and L2 normalization changes the result.
//!
//! Randomness comes from [`SynthRng`], which is fully specified so another
//! implementation can reproduce datasets bit for bit:
//!
//! * generator: ChaCha20 keystream (RFC 8439 block function, 20 rounds),
//!   key = seed as 8 little-endian bytes followed by 24 zero bytes,
//!   nonce 0, block counter starting at 0;
//! * `next_u64`: two consecutive keystream words, the first as the low half;
//! * `uniform`: `(next_u64 >> 11) · 2⁻⁵³`, in `[0, 1)`;
//! * `normal`: Box–Muller cosine branch, `√(−2 ln(1 − u₁)) · cos(2π u₂)`,
//!   consuming two uniforms per sample;
//! * `below(n)`: `⌊uniform · n⌋`.
//!
//! Draw order: per identity, `dim` normals for the prototype (skipped when
//! prototypes are supplied), then `below(2)` for gender and `below(8)` for
//! age. Then per identity and per track: `below(range)` for the frame count,
//! and per frame one uniform for the gain, `dim` normals for the noise,
//! 8 uniforms for age noise and 2 for gender noise.

use std::collections::{BTreeMap, HashSet};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::Gender;
use crate::error::{Error, Result};
use crate::evaluation::VerificationPair;
use crate::feature::{
    l1_normalize_slice, l2_normalize_slice, FeatureVector, PosteriorSet, Posteriors, ProbabilityVector, Track,
    TrackDataset, TrackPosteriors, AGE_CATEGORIES, GENDER_CATEGORIES,
};
use crate::io::Labels;

/// Portable seeded generator; see the module docs for the exact algorithm.
#[derive(Clone, Debug)]
pub struct SynthRng {
    inner: ChaCha20Rng,
}

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self {
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        let lo = self.inner.next_u32() as u64;
        let hi = self.inner.next_u32() as u64;
        (hi << 32) | lo
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }

    /// Fisher–Yates, walking from the last element down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub dim: usize,
    pub identities: usize,
    pub tracks_per_identity: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub noise_sigma: f64,
    pub gain_spread: f64,
    pub demographics_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 64,
            identities: 50,
            tracks_per_identity: 3,
            frames_min: 20,
            frames_max: 20,
            noise_sigma: 0.3,
            gain_spread: 0.5,
            demographics_noise: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.identities == 0 {
            return bad("identities must be positive");
        }
        if self.tracks_per_identity == 0 {
            return bad("tracks per identity must be positive");
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return bad("frame range must satisfy 1 <= min <= max");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise sigma must be a finite value >= 0");
        }
        if !(0.0..1.0).contains(&self.gain_spread) {
            return bad("gain spread must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.demographics_noise) {
            return bad("demographics noise must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Ground truth for one generated person.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub subject_id: String,
    pub prototype: Vec<f64>,
    pub gender: Gender,
    pub age_category: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    /// Tracks carry their `subject_id`.
    pub dataset: TrackDataset,
    pub labels: Labels,
    pub posteriors: PosteriorSet,
    pub identities: Vec<Identity>,
}

pub fn subject_name(identity: usize) -> String {
    format!("id{identity:05}")
}

pub fn track_name(identity: usize, track: usize) -> String {
    format!("s{identity:05}_t{track:03}")
}

/// Generates a dataset with random prototypes on the unit sphere.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = SynthRng::new(cfg.seed);
    let mut identities = Vec::with_capacity(cfg.identities);
    for c in 0..cfg.identities {
        let raw: Vec<f64> = (0..cfg.dim).map(|_| rng.normal()).collect();
        let prototype = l2_normalize_slice(&raw)?;
        identities.push(draw_identity(&mut rng, c, prototype));
    }
    generate_tracks(cfg, &mut rng, identities)
}

/// Generates a dataset around caller-supplied prototypes; `cfg.identities`
/// is ignored in favour of `prototypes.len()`.
pub fn generate_from_prototypes(cfg: &SynthConfig, prototypes: Vec<Vec<f64>>) -> Result<SynthData> {
    let cfg = SynthConfig {
        identities: prototypes.len(),
        ..cfg.clone()
    };
    cfg.validate()?;
    if let Some(p) = prototypes.iter().find(|p| p.len() != cfg.dim) {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            found: p.len(),
        });
    }
    let mut rng = SynthRng::new(cfg.seed);
    let identities = prototypes
        .into_iter()
        .enumerate()
        .map(|(c, p)| draw_identity(&mut rng, c, p))
        .collect();
    generate_tracks(&cfg, &mut rng, identities)
}

fn draw_identity(rng: &mut SynthRng, c: usize, prototype: Vec<f64>) -> Identity {
    let gender = if rng.below(GENDER_CATEGORIES) == 0 {
        Gender::Male
    } else {
        Gender::Female
    };
    let age_category = rng.below(AGE_CATEGORIES);
    Identity {
        subject_id: subject_name(c),
        prototype,
        gender,
        age_category,
    }
}

fn noisy_one_hot(rng: &mut SynthRng, k: usize, hot: usize, eta: f64) -> Result<ProbabilityVector> {
    let raw: Vec<f64> = (0..k)
        .map(|i| {
            let base = if i == hot { 1.0 } else { 0.0 };
            (1.0 - eta) * base + eta * rng.uniform()
        })
        .collect();
    ProbabilityVector::new(l1_normalize_slice(&raw)?)
}

fn generate_tracks(cfg: &SynthConfig, rng: &mut SynthRng, identities: Vec<Identity>) -> Result<SynthData> {
    let span = cfg.frames_max - cfg.frames_min + 1;
    let mut tracks = Vec::with_capacity(identities.len() * cfg.tracks_per_identity);
    let mut labels = Labels::new();
    let mut posteriors = BTreeMap::new();
    let mut clock: i64 = 0;

    for (c, identity) in identities.iter().enumerate() {
        for k in 0..cfg.tracks_per_identity {
            let n = cfg.frames_min + rng.below(span);
            let mut frames = Vec::with_capacity(n);
            let mut post = Vec::with_capacity(n);
            for _ in 0..n {
                let gain = 1.0 - cfg.gain_spread + 2.0 * cfg.gain_spread * rng.uniform();
                let values: Vec<f64> = identity
                    .prototype
                    .iter()
                    .map(|p| gain * (p + cfg.noise_sigma * rng.normal()))
                    .collect();
                frames.push(FeatureVector::new(values)?);
                let age = noisy_one_hot(rng, AGE_CATEGORIES, identity.age_category, cfg.demographics_noise)?;
                let gender = noisy_one_hot(rng, GENDER_CATEGORIES, identity.gender.index(), cfg.demographics_noise)?;
                post.push(Posteriors::new(age, gender)?);
            }
            let id = track_name(c, k);
            labels.insert(id.clone(), identity.subject_id.clone());
            posteriors.insert(
                id.clone(),
                TrackPosteriors {
                    start_frame: clock,
                    frames: post,
                },
            );
            tracks.push(Track::new(id, clock, frames).with_subject(identity.subject_id.clone()));
            clock += n as i64;
        }
    }

    Ok(SynthData {
        dataset: TrackDataset::new(tracks),
        labels,
        posteriors,
        identities,
    })
}

/// Samples `n` distinct items from `candidates` (partial Fisher–Yates).
fn sample_without_replacement<T: Clone>(rng: &mut SynthRng, mut candidates: Vec<T>, n: usize) -> Vec<T> {
    for i in 0..n {
        let j = i + rng.below(candidates.len() - i);
        candidates.swap(i, j);
    }
    candidates.truncate(n);
    candidates
}

/// Draws `n_same` same-subject and `n_diff` different-subject pairs without
/// replacement. Each class is dealt round-robin over `folds`, so every fold
/// gets a balanced share. Same pairs come first in the output.
pub fn make_pairs(
    labels: &Labels,
    n_same: usize,
    n_diff: usize,
    folds: usize,
    seed: u64,
) -> Result<Vec<VerificationPair>> {
    if folds == 0 {
        return Err(Error::InvalidConfig("folds must be positive".into()));
    }
    let ids: Vec<(&String, &String)> = labels.iter().collect();
    let m = ids.len();
    let mut rng = SynthRng::new(seed);

    let mut same_candidates = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            if ids[i].1 == ids[j].1 {
                same_candidates.push((i, j));
            }
        }
    }
    if same_candidates.len() < n_same {
        return Err(Error::InsufficientTracks(format!(
            "{} same-subject pairs requested, {} available",
            n_same,
            same_candidates.len()
        )));
    }
    let same = sample_without_replacement(&mut rng, same_candidates.clone(), n_same);

    let diff_available = m * m.saturating_sub(1) / 2 - same_candidates.len();
    if diff_available < n_diff {
        return Err(Error::InsufficientTracks(format!(
            "{n_diff} different-subject pairs requested, {diff_available} available"
        )));
    }
    let diff = if n_diff * 2 <= diff_available {
        // Rejection sampling keeps memory flat on large label sets.
        let mut chosen = Vec::with_capacity(n_diff);
        let mut seen = HashSet::with_capacity(n_diff);
        while chosen.len() < n_diff {
            let a = rng.below(m);
            let b = rng.below(m);
            let (i, j) = (a.min(b), a.max(b));
            if i == j || ids[i].1 == ids[j].1 || !seen.insert((i, j)) {
                continue;
            }
            chosen.push((i, j));
        }
        chosen
    } else {
        let mut all = Vec::with_capacity(diff_available);
        for i in 0..m {
            for j in (i + 1)..m {
                if ids[i].1 != ids[j].1 {
                    all.push((i, j));
                }
            }
        }
        sample_without_replacement(&mut rng, all, n_diff)
    };

    let pair = |(i, j): (usize, usize), same: bool, k: usize| VerificationPair {
        track_a: ids[i].0.clone(),
        track_b: ids[j].0.clone(),
        same,
        fold: k % folds,
    };
    Ok(same
        .into_iter()
        .enumerate()
        .map(|(k, p)| pair(p, true, k))
        .chain(diff.into_iter().enumerate().map(|(k, p)| pair(p, false, k)))
        .collect())
}
