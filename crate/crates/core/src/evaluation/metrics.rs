use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Ascending 1-based ranks; tied values share the mean of the ranks they cover.
pub fn rank(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim("correlation inputs", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("need at least 2 points, got {}", a.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Precondition("correlation inputs must be finite".into()));
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of tie-averaged ranks.
pub fn srcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pcc(&rank(a), &rank(b))
}

/// Mean utterance score per speaker, keyed by speaker id.
pub fn speaker_aggregate(
    utterance_ids: &[String],
    scores: &[f64],
    speaker_of: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, f64>> {
    if utterance_ids.len() != scores.len() {
        return Err(Error::dim("speaker_aggregate", utterance_ids.len(), scores.len()));
    }
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (id, &s) in utterance_ids.iter().zip(scores) {
        let spk = speaker_of.get(id).ok_or_else(|| Error::Mapping(id.clone()))?;
        let e = acc.entry(spk.clone()).or_insert((0.0, 0));
        e.0 += s;
        e.1 += 1;
    }
    Ok(acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
}
