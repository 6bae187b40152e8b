//! Synthetic frame-feature corpora with a controllable severity signal.
//!
//! Every corpus shares one feature layout: the first `signal_dims` dimensions
//! carry a frame mean that increases with the severity label, the next
//! `nuisance_dims` carry speaker offsets plus a corpus-level domain offset, and
//! the rest are a constant carrier with noise. `domain_shift` scales both the
//! domain offset and the speaker spread so shifted corpora differ from the
//! training distribution only in nuisance directions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Provenance, Utterance, LABEL_MAX, LABEL_MIN};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub name: String,
    pub n_utts: usize,
    pub dim: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub n_speakers: usize,
    pub signal_dims: usize,
    pub nuisance_dims: usize,
    pub domain_shift: f64,
    /// Selects the direction of the domain offset.
    pub domain_seed: u64,
    /// Relative weight of severity bins 1..=7.
    pub label_histogram: [f64; 7],
    /// Forces every label to this value (typical speech uses 1).
    pub fixed_label: Option<f64>,
    /// Each speaker draws one severity; utterances jitter around it.
    pub per_speaker_labels: bool,
    pub label_jitter: f64,
    pub signal_strength: f64,
    pub frame_noise: f64,
    pub speaker_scale: f64,
    pub carrier: f64,
    pub provenance: Provenance,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            n_utts: 1000,
            dim: 16,
            frames_min: 8,
            frames_max: 16,
            n_speakers: 50,
            signal_dims: 4,
            nuisance_dims: 6,
            domain_shift: 0.0,
            domain_seed: 0,
            label_histogram: [0.26, 0.22, 0.16, 0.12, 0.10, 0.08, 0.06],
            fixed_label: None,
            per_speaker_labels: false,
            label_jitter: 0.3,
            signal_strength: 0.6,
            frame_noise: 0.35,
            speaker_scale: 0.5,
            carrier: 0.5,
            provenance: Provenance::Labeled,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(format!("synthetic spec {}: {msg}", self.name)));
        if self.dim == 0 || self.signal_dims == 0 {
            return bad("dim and signal_dims must be positive".into());
        }
        if self.signal_dims + self.nuisance_dims > self.dim {
            return bad(format!(
                "signal_dims {} + nuisance_dims {} exceed dim {}",
                self.signal_dims, self.nuisance_dims, self.dim
            ));
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return bad(format!("frame range {}..={} invalid", self.frames_min, self.frames_max));
        }
        if self.n_speakers == 0 || self.n_utts == 0 {
            return bad("need at least one speaker and one utterance".into());
        }
        if self.label_histogram.iter().any(|w| !(*w >= 0.0)) || self.label_histogram.iter().sum::<f64>() <= 0.0 {
            return bad("label histogram must be nonnegative with positive mass".into());
        }
        if let Some(y) = self.fixed_label {
            if !(LABEL_MIN..=LABEL_MAX).contains(&y) {
                return bad(format!("fixed label {y} outside [1, 7]"));
            }
        }
        if self.provenance == Provenance::Typical && self.fixed_label != Some(1.0) {
            return bad("typical provenance requires fixed_label = 1".into());
        }
        if !(self.frame_noise >= 0.0 && self.speaker_scale >= 0.0 && self.label_jitter >= 0.0 && self.domain_shift >= 0.0) {
            return bad("noise scales and domain shift must be nonnegative".into());
        }
        Ok(())
    }

    /// Typical-speech variant: every label is exactly 1.
    pub fn typical(mut self) -> Self {
        self.fixed_label = Some(1.0);
        self.provenance = Provenance::Typical;
        self
    }
}

fn draw_label<R: Rng>(hist: &[f64; 7], rng: &mut R) -> f64 {
    let total: f64 = hist.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut bin = 6;
    for (i, w) in hist.iter().enumerate() {
        if u < *w {
            bin = i;
            break;
        }
        u -= w;
    }
    let centre = bin as f64 + 1.0;
    (centre + rng.random_range(-0.5..0.5)).clamp(LABEL_MIN, LABEL_MAX)
}

pub fn gen_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut domain_rng = ChaCha8Rng::seed_from_u64(spec.domain_seed ^ 0x9E37_79B9_7F4A_7C15);
    let domain_offset: Vec<f64> = (0..spec.nuisance_dims).map(|_| normal.sample(&mut domain_rng)).collect();

    let spread = spec.speaker_scale * (1.0 + spec.domain_shift);
    let speaker_offsets: Vec<Vec<f64>> = (0..spec.n_speakers)
        .map(|_| (0..spec.nuisance_dims).map(|_| spread * normal.sample(&mut rng)).collect())
        .collect();
    let speaker_labels: Vec<f64> = (0..spec.n_speakers)
        .map(|_| draw_label(&spec.label_histogram, &mut rng))
        .collect();

    let sig_end = spec.signal_dims;
    let nui_end = sig_end + spec.nuisance_dims;
    let mut utterances = Vec::with_capacity(spec.n_utts);
    for i in 0..spec.n_utts {
        let s = i % spec.n_speakers;
        let label = match spec.fixed_label {
            Some(y) => y,
            None if spec.per_speaker_labels => {
                let j = rng.random_range(-1.0..=1.0) * spec.label_jitter;
                (speaker_labels[s] + j).clamp(LABEL_MIN, LABEL_MAX)
            }
            None => draw_label(&spec.label_histogram, &mut rng),
        };
        let severity = (label - 4.0) / 3.0;
        let frames = rng.random_range(spec.frames_min..=spec.frames_max);
        let mut m = Matrix::zeros(frames, spec.dim);
        for t in 0..frames {
            let row = m.row_mut(t);
            for (k, v) in row.iter_mut().enumerate() {
                let noise = spec.frame_noise * normal.sample(&mut rng);
                *v = if k < sig_end {
                    spec.carrier + spec.signal_strength * severity + noise
                } else if k < nui_end {
                    let n = k - sig_end;
                    speaker_offsets[s][n] + spec.domain_shift * domain_offset[n] + noise
                } else {
                    spec.carrier + noise
                };
            }
        }
        let (label, provenance) = match spec.provenance {
            Provenance::Unlabeled => (None, Provenance::Unlabeled),
            p => (Some(label), p),
        };
        utterances.push(Utterance {
            id: format!("{}-{i:06}", spec.name),
            speaker_id: format!("{}-spk{s:04}", spec.name),
            features: m,
            label,
            provenance,
        });
    }
    Corpus::new(spec.name.clone(), utterances)
}

/// Ground-truth labels for an unlabeled synthetic corpus (same draws as the labeled variant).
pub fn gen_with_hidden_labels(spec: &SyntheticSpec, seed: u64) -> Result<(Corpus, Vec<f64>)> {
    let labeled = SyntheticSpec {
        provenance: Provenance::Labeled,
        ..spec.clone()
    };
    let corpus = gen_synthetic_corpus(&labeled, seed)?;
    let labels = corpus.labels().expect("labeled variant");
    Ok((corpus.without_labels(), labels))
}
