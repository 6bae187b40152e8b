//! Correlation metrics, per-speaker aggregation, reports and embedding dumps.

mod metrics;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use metrics::{pcc, rank, speaker_aggregate, srcc};

use crate::data::{Corpus, FeatureSequence};
use crate::error::{Error, Result};
use crate::model::AdaptorNet;
use crate::pipeline::predict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Utterance,
    Speaker,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Utterance => "utterance",
            Level::Speaker => "speaker",
        }
    }
}

/// Correlations for one dataset. `error` is set (and the metrics absent) when
/// the correlation is undefined, e.g. for a constant predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub level: Level,
    pub srcc: Option<f64>,
    pub pcc: Option<f64>,
    pub n: usize,
    pub error: Option<String>,
}

impl EvalReport {
    /// Scores both correlations; an undefined correlation becomes a flagged report.
    pub fn from_scores(dataset: &str, level: Level, pred: &[f64], target: &[f64]) -> Result<Self> {
        let (s, p) = match (srcc(pred, target), pcc(pred, target)) {
            (Ok(s), Ok(p)) => (Some(s), Some(p)),
            (Err(Error::UndefinedCorrelation(msg)), _) | (_, Err(Error::UndefinedCorrelation(msg))) => {
                return Ok(Self {
                    dataset: dataset.to_string(),
                    level,
                    srcc: None,
                    pcc: None,
                    n: pred.len(),
                    error: Some(msg),
                })
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        Ok(Self {
            dataset: dataset.to_string(),
            level,
            srcc: s,
            pcc: p,
            n: pred.len(),
            error: None,
        })
    }
}

/// Predicts, optionally averages per speaker, and correlates with the labels.
pub fn evaluate(model: &AdaptorNet, corpus: &Corpus, level: Level) -> Result<EvalReport> {
    let labels = corpus
        .labels()
        .ok_or_else(|| Error::Precondition(format!("evaluation corpus `{}` has unlabeled utterances", corpus.name)))?;
    let preds = predict(model, corpus)?;
    match level {
        Level::Utterance => EvalReport::from_scores(&corpus.name, level, &preds, &labels),
        Level::Speaker => {
            let ids: Vec<String> = corpus.utterances.iter().map(|u| u.id.clone()).collect();
            let map = corpus.speaker_map();
            let p = speaker_aggregate(&ids, &preds, &map)?;
            let y = speaker_aggregate(&ids, &labels, &map)?;
            let p: Vec<f64> = p.into_values().collect();
            let y: Vec<f64> = y.into_values().collect();
            EvalReport::from_scores(&corpus.name, level, &p, &y)
        }
    }
}

/// Writes via a sibling temp file and a rename so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut name = path
        .file_name()
        .ok_or_else(|| Error::Parameter(format!("{} is not a file path", path.display())))?
        .to_os_string();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One line of results.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub strategy: String,
    pub dataset: String,
    pub level: Level,
    pub seed: u64,
    pub srcc: Option<f64>,
    pub pcc: Option<f64>,
    pub n: usize,
}

impl ResultRow {
    pub fn new(run_id: &str, strategy: &str, seed: u64, r: &EvalReport) -> Self {
        Self {
            run_id: run_id.to_string(),
            strategy: strategy.to_string(),
            dataset: r.dataset.clone(),
            level: r.level,
            seed,
            srcc: r.srcc,
            pcc: r.pcc,
            n: r.n,
        }
    }
}

pub const RESULTS_HEADER: &str = "run_id,strategy,dataset,level,seed,srcc,pcc,n";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.run_id,
            r.strategy,
            r.dataset,
            r.level.as_str(),
            r.seed,
            opt(r.srcc),
            opt(r.pcc),
            r.n
        ));
    }
    s
}

pub fn write_results_csv(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    write_atomic(path.as_ref(), results_csv(rows).as_bytes())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path.as_ref(), &bytes)
}

pub const EMBEDDING_MAGIC: &[u8; 4] = b"DSQE";
pub const EMBEDDING_VERSION: u32 = 1;

/// Post-pooling vectors in the DSQE layout: magic, version, N, dim, then per
/// row `dim` f32 values, an f32 label (NaN when absent) and a provenance byte.
pub fn encode_embeddings(model: &AdaptorNet, corpus: &Corpus) -> Result<Vec<u8>> {
    let refs: Vec<&FeatureSequence> = corpus.utterances.iter().map(|u| &u.features).collect();
    let dim = model.pooled_dim();
    let emb = if refs.is_empty() {
        crate::numerics::Matrix::zeros(0, dim)
    } else {
        model.pooled_embeddings(&refs)?
    };
    let n = u32::try_from(corpus.len()).map_err(|_| Error::Parameter("too many utterances".into()))?;
    let mut out = Vec::with_capacity(16 + corpus.len() * (dim * 4 + 5));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (row, u) in emb.row_iter().zip(&corpus.utterances) {
        for v in row {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.extend_from_slice(&(u.label.map_or(f32::NAN, |y| y as f32)).to_le_bytes());
        out.push(u.provenance.as_byte());
    }
    Ok(out)
}

pub fn dump_embeddings(model: &AdaptorNet, corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_embeddings(model, corpus)?)
}
