//! Browser demo: pairing masks, loss against temperature, and a synthetic
//! feature scatter. Each export has a plain-Rust twin returning JSON so the
//! logic is testable off the browser.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use dsqa_core::contrastive::{ntxent_loss, positive_pairs, PairingSpec, PairingStrategy};
use dsqa_core::data::{gen_synthetic_corpus, label_bin, SyntheticSpec};
use dsqa_core::model::l2_normalize_rows;
use dsqa_core::numerics::Matrix;

fn parse_strategy(s: &str) -> Result<PairingStrategy, String> {
    PairingStrategy::ALL
        .into_iter()
        .find(|p| p.as_str() == s.trim())
        .ok_or_else(|| format!("unknown strategy `{s}`"))
}

fn parse_labels(text: &str) -> Result<Vec<f64>, String> {
    let labels = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if labels.is_empty() {
        return Err("enter at least one label".into());
    }
    Ok(labels)
}

/// Source labels duplicated into the 2B view layout.
fn view_labels(sources: &[f64]) -> Vec<f64> {
    sources.iter().chain(sources).copied().collect()
}

#[derive(Debug, Serialize)]
pub struct PairingView {
    pub labels: Vec<f64>,
    /// `mask[i][j]` is true when view j is a positive for anchor i.
    pub mask: Vec<Vec<bool>>,
    pub positives_per_anchor: Vec<usize>,
}

pub fn pairing_matrix(labels: &str, strategy: &str, alpha: f64, beta: f64) -> Result<PairingView, String> {
    let labels = view_labels(&parse_labels(labels)?);
    let spec = PairingSpec {
        alpha,
        beta,
        ..PairingSpec::new(parse_strategy(strategy)?, 1.0)
    };
    let pairs = positive_pairs(&labels, &spec).map_err(|e| e.to_string())?;
    let n = labels.len();
    let mask = pairs
        .iter()
        .map(|p| {
            let mut row = vec![false; n];
            p.iter().for_each(|&j| row[j] = true);
            row
        })
        .collect();
    Ok(PairingView {
        positives_per_anchor: pairs.iter().map(Vec::len).collect(),
        labels,
        mask,
    })
}

#[derive(Debug, Serialize)]
pub struct TauPoint {
    pub tau: f64,
    pub loss: f64,
}

/// NT-Xent on fixed clustered embeddings: views share a severity-dependent
/// direction plus per-view noise.
pub fn loss_vs_tau(labels: &str, strategy: &str, taus: &[f64], seed: u64) -> Result<Vec<TauPoint>, String> {
    let labels = view_labels(&parse_labels(labels)?);
    let strategy = parse_strategy(strategy)?;
    let dim = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..7).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let b = labels.len() / 2;
    let per_source: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            let c = &centres[(label_bin(labels[i]) - 1) as usize];
            c.iter().map(|v| v + 0.3 * rng.random_range(-1.0..1.0)).collect()
        })
        .collect();
    let mut z = Matrix::zeros(labels.len(), dim);
    for i in 0..labels.len() {
        let src = &per_source[i % b];
        for (k, v) in z.row_mut(i).iter_mut().enumerate() {
            *v = src[k] + 0.1 * rng.random_range(-1.0..1.0);
        }
    }
    let z = l2_normalize_rows(&z);
    taus.iter()
        .map(|&tau| {
            let spec = PairingSpec::new(strategy, tau);
            let pairs = positive_pairs(&labels, &spec).map_err(|e| e.to_string())?;
            let out = ntxent_loss(&z, &pairs, tau).map_err(|e| e.to_string())?;
            Ok(TauPoint { tau, loss: out.loss })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct ScatterPoint {
    pub label: f64,
    pub signal: f64,
    pub nuisance: f64,
}

/// Utterance means of the severity and nuisance feature blocks.
pub fn synthetic_scatter(n: usize, shift: f64, seed: u64) -> Result<Vec<ScatterPoint>, String> {
    let spec = SyntheticSpec {
        n_utts: n,
        n_speakers: (n / 5).max(1),
        domain_shift: shift,
        ..SyntheticSpec::default()
    };
    let corpus = gen_synthetic_corpus(&spec, seed).map_err(|e| e.to_string())?;
    let block_mean = |m: &Matrix, lo: usize, hi: usize| {
        m.row_iter().map(|r| r[lo..hi].iter().sum::<f64>()).sum::<f64>() / (m.rows() * (hi - lo)) as f64
    };
    let sig = spec.signal_dims;
    let nui = sig + spec.nuisance_dims;
    Ok(corpus
        .utterances
        .iter()
        .map(|u| ScatterPoint {
            label: u.label.unwrap_or(f64::NAN),
            signal: block_mean(&u.features, 0, sig),
            nuisance: block_mean(&u.features, sig, nui),
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = pairingMatrix)]
pub fn pairing_matrix_js(labels: &str, strategy: &str, alpha: f64, beta: f64) -> Result<String, JsError> {
    to_js(pairing_matrix(labels, strategy, alpha, beta))
}

#[wasm_bindgen(js_name = lossVsTau)]
pub fn loss_vs_tau_js(labels: &str, strategy: &str, taus: Vec<f64>, seed: u32) -> Result<String, JsError> {
    to_js(loss_vs_tau(labels, strategy, &taus, u64::from(seed)))
}

#[wasm_bindgen(js_name = syntheticScatter)]
pub fn synthetic_scatter_js(n: u32, shift: f64, seed: u32) -> Result<String, JsError> {
    to_js(synthetic_scatter(n as usize, shift, u64::from(seed)))
}
