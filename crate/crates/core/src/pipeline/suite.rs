//! A complete synthetic experiment: labeled, unlabeled, typical and shifted
//! cross-domain corpora, plus their on-disk layout.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::derive_seed;
use super::experiment::ExperimentData;
use crate::data::{gen_synthetic_corpus, load_corpus, save_corpus, Corpus, Provenance, SyntheticSpec};
use crate::error::{Error, Result};

pub const DATASETS_FILE: &str = "datasets.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSuite {
    pub seed: u64,
    pub labeled: SyntheticSpec,
    pub unlabeled: Option<SyntheticSpec>,
    /// Parts of the typical corpus; each may come from its own domain.
    pub typical: Vec<SyntheticSpec>,
    pub cross: Vec<SyntheticSpec>,
}

impl Default for SyntheticSuite {
    fn default() -> Self {
        let base = SyntheticSpec {
            frames_min: 6,
            frames_max: 10,
            ..SyntheticSpec::default()
        };
        let typical = (0..4)
            .map(|k| {
                SyntheticSpec {
                    name: format!("typical{k}"),
                    n_utts: 100,
                    n_speakers: 10,
                    domain_shift: 1.0,
                    domain_seed: 200 + k,
                    ..base.clone()
                }
                .typical()
            })
            .collect();
        let cross = (0..2)
            .map(|k| SyntheticSpec {
                name: format!("cross{k}"),
                n_utts: 360,
                n_speakers: 60,
                per_speaker_labels: true,
                domain_shift: 1.0,
                domain_seed: 100 + k,
                ..base.clone()
            })
            .collect();
        Self {
            seed: 0,
            labeled: SyntheticSpec {
                name: "labeled".into(),
                n_utts: 800,
                n_speakers: 80,
                ..base.clone()
            },
            unlabeled: Some(SyntheticSpec {
                name: "unlabeled".into(),
                n_utts: 1200,
                n_speakers: 120,
                provenance: Provenance::Unlabeled,
                ..base
            }),
            typical,
            cross,
        }
    }
}

impl SyntheticSuite {
    /// Scales every corpus size (utterances and speakers) by `factor`, keeping at least one of each.
    pub fn scaled(mut self, factor: f64) -> Self {
        let scale = |s: &mut SyntheticSpec| {
            s.n_utts = ((s.n_utts as f64 * factor).round() as usize).max(1);
            s.n_speakers = ((s.n_speakers as f64 * factor).round() as usize).clamp(1, s.n_utts);
        };
        scale(&mut self.labeled);
        self.unlabeled.iter_mut().for_each(scale);
        self.typical.iter_mut().for_each(scale);
        self.cross.iter_mut().for_each(scale);
        self
    }

    pub fn generate(&self) -> Result<ExperimentData> {
        let gen = |s: &SyntheticSpec| gen_synthetic_corpus(s, derive_seed(self.seed, &s.name));
        let labeled = gen(&self.labeled)?;
        let unlabeled = self.unlabeled.as_ref().map(gen).transpose()?;
        let typical = if self.typical.is_empty() {
            None
        } else {
            let mut utts = Vec::new();
            for s in &self.typical {
                if s.provenance != Provenance::Typical {
                    return Err(Error::Parameter(format!("typical part {} is not typical speech", s.name)));
                }
                utts.extend(gen(s)?.utterances);
            }
            Some(Corpus::new("typical", utts)?)
        };
        let cross = self.cross.iter().map(gen).collect::<Result<Vec<_>>>()?;
        Ok(ExperimentData {
            labeled,
            unlabeled,
            typical,
            cross,
        })
    }
}

/// Directory names of each corpus, stored as `datasets.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIndex {
    pub labeled: String,
    pub unlabeled: Option<String>,
    pub typical: Option<String>,
    pub cross: Vec<String>,
}

pub fn save_experiment_data(dir: impl AsRef<Path>, data: &ExperimentData) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut index = DatasetIndex {
        labeled: "labeled".into(),
        unlabeled: None,
        typical: None,
        cross: Vec::new(),
    };
    save_corpus(dir.join(&index.labeled), &data.labeled)?;
    if let Some(u) = &data.unlabeled {
        save_corpus(dir.join("unlabeled"), u)?;
        index.unlabeled = Some("unlabeled".into());
    }
    if let Some(t) = &data.typical {
        save_corpus(dir.join("typical"), t)?;
        index.typical = Some("typical".into());
    }
    for (k, c) in data.cross.iter().enumerate() {
        let name = format!("cross-{k}");
        save_corpus(dir.join(&name), c)?;
        index.cross.push(name);
    }
    fs::write(dir.join(DATASETS_FILE), serde_json::to_vec_pretty(&index)?)?;
    Ok(())
}

pub fn load_experiment_data(dir: impl AsRef<Path>) -> Result<ExperimentData> {
    let dir = dir.as_ref();
    let index: DatasetIndex = serde_json::from_slice(&fs::read(dir.join(DATASETS_FILE))?)?;
    let load = |name: &String| load_corpus(dir.join(name));
    Ok(ExperimentData {
        labeled: load(&index.labeled)?,
        unlabeled: index.unlabeled.as_ref().map(load).transpose()?,
        typical: index.typical.as_ref().map(load).transpose()?,
        cross: index.cross.iter().map(load).collect::<Result<Vec<_>>>()?,
    })
}
