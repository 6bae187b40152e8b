use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::{read_feature_file, write_feature_file};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Frame-level features of one utterance, T×D.
pub type FeatureSequence = Matrix;

pub const LABEL_MIN: f64 = 1.0;
pub const LABEL_MAX: f64 = 7.0;
/// Label assigned to typical (non-dysarthric) speech.
pub const TYPICAL_LABEL: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Labeled,
    Pseudo,
    Typical,
    /// Awaiting pseudo-labels.
    Unlabeled,
}

impl Provenance {
    pub fn as_byte(self) -> u8 {
        match self {
            Provenance::Labeled => 0,
            Provenance::Pseudo => 1,
            Provenance::Typical => 2,
            Provenance::Unlabeled => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Labeled => "labeled",
            Provenance::Pseudo => "pseudo",
            Provenance::Typical => "typical",
            Provenance::Unlabeled => "unlabeled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker_id: String,
    pub features: FeatureSequence,
    pub label: Option<f64>,
    pub provenance: Provenance,
}

impl Utterance {
    pub fn validate(&self) -> Result<()> {
        if self.features.rows() == 0 {
            return Err(Error::Precondition(format!("utterance {} has no frames", self.id)));
        }
        if let Some(y) = self.label {
            if !(LABEL_MIN..=LABEL_MAX).contains(&y) {
                return Err(Error::Precondition(format!(
                    "utterance {} label {y} outside [1, 7]",
                    self.id
                )));
            }
        }
        match (self.provenance, self.label) {
            (Provenance::Typical, Some(y)) if y != TYPICAL_LABEL => Err(Error::Precondition(format!(
                "typical utterance {} must carry label 1, found {y}",
                self.id
            ))),
            (Provenance::Labeled | Provenance::Pseudo | Provenance::Typical, None) => Err(Error::Precondition(
                format!("{} utterance {} has no label", self.provenance.as_str(), self.id),
            )),
            (Provenance::Unlabeled, Some(_)) => Err(Error::Precondition(format!(
                "unlabeled utterance {} carries a label",
                self.id
            ))),
            _ => Ok(()),
        }
    }

    pub fn frames(&self) -> usize {
        self.features.rows()
    }
}

/// Utterance counts by provenance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub labeled: usize,
    pub pseudo: usize,
    pub typical: usize,
    pub unlabeled: usize,
}

impl CorpusCounts {
    pub fn total(&self) -> usize {
        self.labeled + self.pseudo + self.typical + self.unlabeled
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, utterances: Vec<Utterance>) -> Result<Self> {
        let corpus = Self {
            name: name.into(),
            utterances,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.utterances.len());
        let mut dim = None;
        for u in &self.utterances {
            if !seen.insert(u.id.as_str()) {
                return Err(Error::Merge(u.id.clone()));
            }
            u.validate()?;
            match dim {
                None => dim = Some(u.features.cols()),
                Some(d) if d != u.features.cols() => {
                    return Err(Error::dim("corpus feature dims", d, u.features.cols()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Feature dimension D, if the corpus is non-empty.
    pub fn feature_dim(&self) -> Option<usize> {
        self.utterances.first().map(|u| u.features.cols())
    }

    pub fn counts(&self) -> CorpusCounts {
        let mut c = CorpusCounts::default();
        for u in &self.utterances {
            match u.provenance {
                Provenance::Labeled => c.labeled += 1,
                Provenance::Pseudo => c.pseudo += 1,
                Provenance::Typical => c.typical += 1,
                Provenance::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }

    pub fn labels(&self) -> Option<Vec<f64>> {
        self.utterances.iter().map(|u| u.label).collect()
    }

    pub fn speaker_map(&self) -> BTreeMap<String, String> {
        self.utterances
            .iter()
            .map(|u| (u.id.clone(), u.speaker_id.clone()))
            .collect()
    }

    /// Copy with labels removed and provenance set to unlabeled.
    pub fn without_labels(&self) -> Corpus {
        Corpus {
            name: self.name.clone(),
            utterances: self
                .utterances
                .iter()
                .map(|u| Utterance {
                    label: None,
                    provenance: Provenance::Unlabeled,
                    ..u.clone()
                })
                .collect(),
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub speaker_id: String,
    pub label: Option<f64>,
    pub provenance: Provenance,
    /// Feature file path relative to the manifest's directory.
    pub features: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub name: String,
    pub utterances: Vec<ManifestEntry>,
}

/// Writes `manifest.json` plus one DSQF file per utterance under `dir/features/`.
pub fn save_corpus(dir: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let dir = dir.as_ref();
    corpus.validate()?;
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir)?;
    let mut entries = Vec::with_capacity(corpus.len());
    for (i, u) in corpus.utterances.iter().enumerate() {
        let rel = format!("features/{i:06}.dsqf");
        write_feature_file(dir.join(&rel), &u.features)?;
        entries.push(ManifestEntry {
            id: u.id.clone(),
            speaker_id: u.speaker_id.clone(),
            label: u.label,
            provenance: u.provenance,
            features: rel,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        name: corpus.name.clone(),
        utterances: entries,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Precondition(format!(
            "manifest version {} unsupported",
            manifest.version
        )));
    }
    let utterances = manifest
        .utterances
        .into_iter()
        .map(|e| {
            Ok(Utterance {
                features: read_feature_file(dir.join(&e.features))?,
                id: e.id,
                speaker_id: e.speaker_id,
                label: e.label,
                provenance: e.provenance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(manifest.name, utterances)
}
