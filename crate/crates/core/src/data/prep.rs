use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, FeatureSequence, LABEL_MAX, LABEL_MIN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    /// Each frame scaled to unit L2 norm.
    #[default]
    FrameL2,
    /// Each feature dimension standardised over the utterance's frames.
    UtteranceZscore,
    None,
}

/// Scales every frame (row) to unit L2 norm; all-zero frames stay zero.
pub fn normalize_frames(h: &FeatureSequence) -> FeatureSequence {
    let mut out = h.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Per-dimension z-score across frames; constant dimensions are centred only.
pub fn zscore_frames(h: &FeatureSequence) -> FeatureSequence {
    let (t, d) = h.shape();
    let mut out = h.clone();
    if t == 0 {
        return out;
    }
    for k in 0..d {
        let mean = (0..t).map(|r| h.get(r, k)).sum::<f64>() / t as f64;
        let var = (0..t).map(|r| (h.get(r, k) - mean).powi(2)).sum::<f64>() / t as f64;
        let std = var.sqrt();
        for r in 0..t {
            let c = h.get(r, k) - mean;
            out.set(r, k, if std > 0.0 { c / std } else { c });
        }
    }
    out
}

pub fn apply_normalization(h: &FeatureSequence, mode: NormalizeMode) -> FeatureSequence {
    match mode {
        NormalizeMode::FrameL2 => normalize_frames(h),
        NormalizeMode::UtteranceZscore => zscore_frames(h),
        NormalizeMode::None => h.clone(),
    }
}

/// Nearest-integer severity bin in 1..=7, `⌊y + ½⌋`.
pub fn label_bin(y: f64) -> i64 {
    ((y + 0.5).floor() as i64).clamp(LABEL_MIN as i64, LABEL_MAX as i64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerWeights {
    pub weights: Vec<f64>,
}

/// Inverse bin-frequency weights so every non-empty severity bin is drawn equally often.
pub fn sampler_weights(corpus: &Corpus) -> Result<SamplerWeights> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("sampler_weights on an empty corpus"));
    }
    let bins = corpus
        .utterances
        .iter()
        .map(|u| {
            u.label
                .map(label_bin)
                .ok_or_else(|| Error::Precondition(format!("utterance {} has no label for sampling", u.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &b in &bins {
        *counts.entry(b).or_default() += 1;
    }
    Ok(SamplerWeights {
        weights: bins.iter().map(|b| 1.0 / counts[b] as f64).collect(),
    })
}

/// Draws indices with replacement according to [`SamplerWeights`].
pub struct WeightedSampler {
    dist: WeightedIndex<f64>,
}

impl WeightedSampler {
    pub fn new(weights: &SamplerWeights) -> Result<Self> {
        let dist = WeightedIndex::new(&weights.weights)
            .map_err(|e| Error::Parameter(format!("sampler weights: {e}")))?;
        Ok(Self { dist })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

/// Speaker-disjoint train/val/test partition.
pub fn split(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    let speakers: BTreeSet<&str> = corpus.utterances.iter().map(|u| u.speaker_id.as_str()).collect();
    let n = speakers.len();
    if n < ratios.len() {
        return Err(Error::Partition(format!("{n} speakers cannot fill {} splits", ratios.len())));
    }
    let mut order: Vec<&str> = speakers.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // largest remainder, then make sure every part has at least one speaker
    let raw: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
    let mut by_rem: Vec<usize> = (0..3).collect();
    by_rem.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let mut left = n - sizes.iter().sum::<usize>();
    for &i in by_rem.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        while sizes[i] == 0 {
            let donor = (0..3).max_by_key(|&j| sizes[j]).expect("three parts");
            sizes[donor] -= 1;
            sizes[i] += 1;
        }
    }

    let mut assignment: BTreeMap<&str, usize> = BTreeMap::new();
    let mut cursor = 0;
    for (part, &size) in sizes.iter().enumerate() {
        for s in &order[cursor..cursor + size] {
            assignment.insert(s, part);
        }
        cursor += size;
    }
    let mut parts: [Vec<_>; 3] = Default::default();
    for u in &corpus.utterances {
        parts[assignment[u.speaker_id.as_str()]].push(u.clone());
    }
    let [train, val, test] = parts;
    Ok((
        Corpus { name: format!("{}-train", corpus.name), utterances: train },
        Corpus { name: format!("{}-val", corpus.name), utterances: val },
        Corpus { name: format!("{}-test", corpus.name), utterances: test },
    ))
}
