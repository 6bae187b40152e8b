//! Feature-space augmentations used to build the two contrastive views.
//!
//! Views are produced by noise → time mask → crop, each stage gated by its own
//! coin flip per view.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::FeatureSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub noise_sigma: f64,
    pub mask_max_frac: f64,
    pub mask_spans: usize,
    pub crop_min_frac: f64,
    pub per_transform_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.01,
            mask_max_frac: 0.20,
            mask_spans: 1,
            crop_min_frac: 0.70,
            per_transform_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.noise_sigma >= 0.0)
            || !frac(self.mask_max_frac)
            || !(self.crop_min_frac > 0.0 && self.crop_min_frac <= 1.0)
            || !frac(self.per_transform_prob)
        {
            return Err(Error::Parameter(format!("invalid augmentation config {self:?}")));
        }
        Ok(())
    }

    /// No transform ever fires.
    pub fn identity() -> Self {
        Self {
            per_transform_prob: 0.0,
            ..Self::default()
        }
    }
}

pub fn add_gaussian_noise<R: Rng + ?Sized>(h: &FeatureSequence, sigma: f64, rng: &mut R) -> Result<FeatureSequence> {
    if !(sigma >= 0.0) {
        return Err(Error::Parameter(format!("noise sigma {sigma} must be nonnegative")));
    }
    if sigma == 0.0 {
        return Ok(h.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut out = h.clone();
    out.data_mut().iter_mut().for_each(|v| *v += normal.sample(rng));
    Ok(out)
}

/// Zeroes `spans` contiguous runs of frames, each of length uniform in `0..=⌊max_frac·T⌋`.
pub fn time_mask<R: Rng + ?Sized>(h: &FeatureSequence, max_frac: f64, spans: usize, rng: &mut R) -> Result<FeatureSequence> {
    if !(0.0..=1.0).contains(&max_frac) {
        return Err(Error::Parameter(format!("mask fraction {max_frac} outside [0, 1]")));
    }
    let t = h.rows();
    let max_len = ((max_frac * t as f64) + 1e-9).floor() as usize;
    let mut out = h.clone();
    if max_len == 0 {
        return Ok(out);
    }
    for _ in 0..spans {
        let len = rng.random_range(0..=max_len);
        if len == 0 {
            continue;
        }
        let start = rng.random_range(0..=t - len);
        for r in start..start + len {
            out.row_mut(r).fill(0.0);
        }
    }
    Ok(out)
}

/// Contiguous window with length uniform in `⌈min_frac·T⌉..=T` at a uniform offset.
pub fn random_crop<R: Rng + ?Sized>(h: &FeatureSequence, min_frac: f64, rng: &mut R) -> Result<FeatureSequence> {
    if !(min_frac > 0.0 && min_frac <= 1.0) {
        return Err(Error::Parameter(format!("crop fraction {min_frac} outside (0, 1]")));
    }
    let t = h.rows();
    if t == 0 {
        return Err(Error::EmptyInput("random_crop on an empty sequence"));
    }
    let min_len = ((min_frac * t as f64) - 1e-9).ceil().max(1.0) as usize;
    let len = rng.random_range(min_len.min(t)..=t);
    let start = rng.random_range(0..=t - len);
    Ok(h.slice_rows(start, start + len))
}

fn augment_once<R: Rng + ?Sized>(h: &FeatureSequence, cfg: &AugmentConfig, rng: &mut R) -> Result<FeatureSequence> {
    let mut v = h.clone();
    if rng.random::<f64>() < cfg.per_transform_prob {
        v = add_gaussian_noise(&v, cfg.noise_sigma, rng)?;
    }
    if rng.random::<f64>() < cfg.per_transform_prob {
        v = time_mask(&v, cfg.mask_max_frac, cfg.mask_spans, rng)?;
    }
    if rng.random::<f64>() < cfg.per_transform_prob {
        v = random_crop(&v, cfg.crop_min_frac, rng)?;
    }
    Ok(v)
}

/// Two independent augmented views of `h`.
pub fn make_views<R: Rng + ?Sized>(
    h: &FeatureSequence,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(FeatureSequence, FeatureSequence)> {
    cfg.validate()?;
    if h.rows() == 0 {
        return Err(Error::EmptyInput("make_views on an empty sequence"));
    }
    let a = augment_once(h, cfg, rng)?;
    let b = augment_once(h, cfg, rng)?;
    Ok((a, b))
}
