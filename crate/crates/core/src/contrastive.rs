//! Positive-pair construction and the Stage-2 objectives: NT-Xent / SimCLR,
//! label-supervised NT-Xent with discretised, continuous-threshold and coarse
//! binary pairing, and the hinge variance regulariser.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{make_views, AugmentConfig};
use crate::data::{label_bin, FeatureSequence};
use crate::error::{Error, Result};
use crate::numerics::{matmul_nn, matmul_nt, Matrix};

/// Which pairs count as positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingStrategy {
    /// Only the other view of the same source.
    Simclr,
    /// Exactly equal labels.
    Sup,
    /// Equal nearest-integer labels.
    Dis,
    /// Label distance below `alpha`.
    Con,
    /// Same side of the `beta` threshold (typical vs dysarthric).
    Coarse,
}

impl PairingStrategy {
    pub const ALL: [PairingStrategy; 5] = [
        PairingStrategy::Simclr,
        PairingStrategy::Sup,
        PairingStrategy::Dis,
        PairingStrategy::Con,
        PairingStrategy::Coarse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PairingStrategy::Simclr => "simclr",
            PairingStrategy::Sup => "sup",
            PairingStrategy::Dis => "dis",
            PairingStrategy::Con => "con",
            PairingStrategy::Coarse => "coarse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingSpec {
    pub strategy: PairingStrategy,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl PairingSpec {
    pub fn new(strategy: PairingStrategy, tau: f64) -> Self {
        Self {
            strategy,
            alpha: 0.5,
            beta: 1.5,
            tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Parameter(format!("temperature must be positive, got {}", self.tau)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Parameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(1.0..=7.0).contains(&self.beta) {
            return Err(Error::Parameter(format!("beta {} outside the label range", self.beta)));
        }
        Ok(())
    }

    /// Whether `a` and `b` (distinct indices) would be positives given their labels.
    pub fn labels_match(&self, a: f64, b: f64) -> bool {
        match self.strategy {
            PairingStrategy::Simclr => false,
            PairingStrategy::Sup => a == b,
            PairingStrategy::Dis => label_bin(a) == label_bin(b),
            PairingStrategy::Con => (a - b).abs() < self.alpha,
            PairingStrategy::Coarse => (a > self.beta) == (b > self.beta),
        }
    }
}

/// Augmented batch of 2B views: indices `i` and `B + i` come from source `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub views: Vec<FeatureSequence>,
    pub labels: Vec<f64>,
    pub sources: usize,
}

impl Batch {
    pub fn from_sources<R: Rng + ?Sized>(
        sources: &[(&FeatureSequence, f64)],
        augment: &AugmentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let b = sources.len();
        let mut first = Vec::with_capacity(b);
        let mut second = Vec::with_capacity(b);
        for (h, _) in sources {
            let (v1, v2) = make_views(h, augment, rng)?;
            first.push(v1);
            second.push(v2);
        }
        first.extend(second);
        let labels: Vec<f64> = sources.iter().chain(sources).map(|(_, y)| *y).collect();
        Ok(Self {
            views: first,
            labels,
            sources: b,
        })
    }

    /// Index of the other view of the same source.
    pub fn partner(&self, i: usize) -> usize {
        partner(i, self.sources)
    }
}

#[inline]
fn partner(i: usize, b: usize) -> usize {
    if i < b {
        i + b
    } else {
        i - b
    }
}

/// Positive index set P(i) ⊆ I∖{i} for every anchor of a 2B-label batch.
pub fn positive_pairs(labels: &[f64], spec: &PairingSpec) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if !n.is_multiple_of(2) || n < 2 {
        return Err(Error::Precondition(format!("augmented batch needs an even size >= 2, got {n}")));
    }
    let b = n / 2;
    for i in 0..b {
        if labels[i] != labels[i + b] {
            return Err(Error::Precondition(format!("views {i} and {} carry different labels", i + b)));
        }
    }
    Ok((0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    j != i
                        && (j == partner(i, b)
                            || spec.strategy != PairingStrategy::Simclr && spec.labels_match(labels[i], labels[j]))
                })
                .collect()
        })
        .collect())
}

/// SimCLR positives: P(i) = {k(i)}.
pub fn simclr_pairs(n: usize) -> Vec<Vec<usize>> {
    let b = n / 2;
    (0..n).map(|i| vec![partner(i, b)]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// ∂loss/∂Z, same shape as Z.
    pub grad: Matrix,
    /// Anchors with an empty positive set; excluded from the average.
    pub skipped_anchors: usize,
}

/// Supervised NT-Xent over the rows of `z` with positive sets `positives`.
///
/// Anchors with empty P(i) are skipped and the average runs over the remaining anchors.
pub fn ntxent_loss(z: &Matrix, positives: &[Vec<usize>], tau: f64) -> Result<LossOutput> {
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!("temperature must be positive, got {tau}")));
    }
    let n = z.rows();
    if positives.len() != n {
        return Err(Error::dim("ntxent_loss positive sets", n, positives.len()));
    }
    if n < 2 {
        return Err(Error::Precondition("NT-Xent needs at least two embeddings".into()));
    }
    let active = positives.iter().filter(|p| !p.is_empty()).count();
    if active == 0 {
        return Ok(LossOutput {
            loss: 0.0,
            grad: Matrix::zeros(n, z.cols()),
            skipped_anchors: n,
        });
    }

    let gram = matmul_nt(z, z)?;
    // coefficient matrix: ∂loss/∂s_ij scaled, so that ∂loss/∂Z = (C + Cᵀ)·Z
    let mut c = Matrix::zeros(n, n);
    let mut total = 0.0;
    let scale = 1.0 / active as f64;
    for (i, pos) in positives.iter().enumerate() {
        if pos.is_empty() {
            continue;
        }
        let logits: Vec<f64> = gram.row(i).iter().map(|g| g / tau).collect();
        let max = logits
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &s)| (s - max).exp())
            .sum();
        let lse = max + sum.ln();
        let inv_p = 1.0 / pos.len() as f64;
        let pos_mean: f64 = pos.iter().map(|&p| logits[p]).sum::<f64>() * inv_p;
        total += lse - pos_mean;

        // ∂loss_i/∂s_ij = softmax_ij − 1{j∈P(i)}/|P(i)|
        let row = c.row_mut(i);
        for j in 0..n {
            if j != i {
                row[j] = (logits[j] - lse).exp();
            }
        }
        for &p in pos {
            row[p] -= inv_p;
        }
        row.iter_mut().for_each(|v| *v *= scale / tau);
    }
    let ct = c.transpose();
    for (a, b) in c.data_mut().iter_mut().zip(ct.data()) {
        *a += b;
    }
    Ok(LossOutput {
        loss: total * scale,
        grad: matmul_nn(&c, z)?,
        skipped_anchors: n - active,
    })
}

pub fn simclr_loss(z: &Matrix, tau: f64) -> Result<LossOutput> {
    if !z.rows().is_multiple_of(2) {
        return Err(Error::Precondition(format!("SimCLR needs an even batch, got {}", z.rows())));
    }
    ntxent_loss(z, &simclr_pairs(z.rows()), tau)
}

/// ε inside the square root of the variance hinge.
pub const VARIANCE_EPS: f64 = 1e-4;

/// `(1/d) Σ_k max(0, γ − sqrt(Var(z_:,k) + ε))` with population variance.
pub fn variance_reg(z: &Matrix, gamma: f64, eps: f64) -> Result<(f64, Matrix)> {
    let (n, d) = z.shape();
    if n < 2 {
        return Err(Error::Precondition(format!("variance regulariser needs >= 2 rows, got {n}")));
    }
    let inv_n = 1.0 / n as f64;
    let inv_d = 1.0 / d as f64;
    let mut mean = vec![0.0; d];
    for row in z.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v * inv_n;
        }
    }
    let mut var = vec![0.0; d];
    for row in z.row_iter() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m) * inv_n;
        }
    }
    let mut loss = 0.0;
    // per-column multiplier on (z_ik − mean_k)
    let mut col_coef = vec![0.0; d];
    for k in 0..d {
        let std = (var[k] + eps).sqrt();
        if std < gamma {
            loss += (gamma - std) * inv_d;
            col_coef[k] = -inv_d * inv_n / std;
        }
    }
    let mut grad = Matrix::zeros(n, d);
    for i in 0..n {
        let zi = z.row(i);
        let gi = grad.row_mut(i);
        for k in 0..d {
            gi[k] = col_coef[k] * (zi[k] - mean[k]);
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Loss {
    pub total: f64,
    pub contrastive: f64,
    pub variance: f64,
    pub grad: Matrix,
    pub skipped_anchors: usize,
}

/// Contrastive term plus `lambda` times the variance hinge.
pub fn stage2_loss(
    z: &Matrix,
    labels: &[f64],
    spec: &PairingSpec,
    gamma: f64,
    lambda: f64,
    eps: f64,
) -> Result<Stage2Loss> {
    spec.validate()?;
    if labels.len() != z.rows() {
        return Err(Error::dim("stage2_loss labels", z.rows(), labels.len()));
    }
    let pairs = positive_pairs(labels, spec)?;
    let con = ntxent_loss(z, &pairs, spec.tau)?;
    let mut grad = con.grad;
    let mut variance = 0.0;
    if lambda != 0.0 {
        let (v, vg) = variance_reg(z, gamma, eps)?;
        variance = v;
        for (g, h) in grad.data_mut().iter_mut().zip(vg.data()) {
            *g += lambda * h;
        }
    }
    Ok(Stage2Loss {
        total: con.loss + lambda * variance,
        contrastive: con.loss,
        variance,
        grad,
        skipped_anchors: con.skipped_anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dis_and_con_boundary_examples() {
        let dis = PairingSpec::new(PairingStrategy::Dis, 1.0);
        let con = PairingSpec::new(PairingStrategy::Con, 1.0);
        assert!(!dis.labels_match(2.4, 2.6));
        assert!(dis.labels_match(2.4, 1.7));
        assert!(con.labels_match(2.4, 2.6));
        assert!(!con.labels_match(2.4, 1.7));
    }

    #[test]
    fn coarse_groups() {
        let spec = PairingSpec::new(PairingStrategy::Coarse, 10.0);
        let labels = [1.0, 1.2, 3.0, 5.0, 1.0, 1.2, 3.0, 5.0];
        let p = positive_pairs(&labels, &spec).unwrap();
        assert_eq!(p[0], vec![1, 4, 5]);
        assert_eq!(p[2], vec![3, 6, 7]);
        assert_eq!(p[7], vec![2, 3, 6]);
    }

    #[test]
    fn partner_always_positive() {
        let labels = [1.0, 2.0, 5.5, 1.0, 2.0, 5.5];
        for strategy in PairingStrategy::ALL {
            let p = positive_pairs(&labels, &PairingSpec::new(strategy, 1.0)).unwrap();
            for (i, set) in p.iter().enumerate() {
                assert!(set.contains(&((i + 3) % 6)), "{strategy:?} anchor {i}");
                assert!(!set.contains(&i));
            }
        }
    }

    #[test]
    fn mismatched_view_labels_rejected() {
        let spec = PairingSpec::new(PairingStrategy::Sup, 1.0);
        assert!(positive_pairs(&[1.0, 2.0, 1.0, 3.0], &spec).is_err());
        assert!(positive_pairs(&[1.0, 2.0, 1.0], &spec).is_err());
    }

    #[test]
    fn identical_views_give_zero() {
        let z = Matrix::from_rows(&[[0.6, 0.8], [0.6, 0.8]]).unwrap();
        let out = ntxent_loss(&z, &simclr_pairs(2), 0.5).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(simclr_loss(&z, 0.1).unwrap().loss, 0.0);
    }

    #[test]
    fn bad_temperature() {
        let z = Matrix::identity(2);
        assert!(matches!(ntxent_loss(&z, &simclr_pairs(2), 0.0), Err(Error::Parameter(_))));
        assert!(ntxent_loss(&z, &simclr_pairs(2), -1.0).is_err());
    }

    #[test]
    fn empty_positive_sets_are_skipped() {
        let z = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [0.8, 0.6]]).unwrap();
        let pos = vec![vec![2], vec![], vec![0], vec![]];
        let out = ntxent_loss(&z, &pos, 1.0).unwrap();
        assert_eq!(out.skipped_anchors, 2);
        let only = ntxent_loss(&z, &[vec![2], vec![], vec![], vec![]], 1.0).unwrap();
        let other = ntxent_loss(&z, &[vec![], vec![], vec![0], vec![]], 1.0).unwrap();
        assert!((out.loss - 0.5 * (only.loss + other.loss)).abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        let same = Matrix::filled(6, 4, 0.3);
        let (v, _) = variance_reg(&same, 1.0, VARIANCE_EPS).unwrap();
        assert!((v - (1.0 - VARIANCE_EPS.sqrt())).abs() < 1e-12);

        let wide = Matrix::from_rows(&[[-2.0, 3.0], [2.0, -3.0]]).unwrap();
        assert_eq!(variance_reg(&wide, 1.0, VARIANCE_EPS).unwrap().0, 0.0);

        // column stds 0.5 and 2.0
        let z = Matrix::from_rows(&[[-0.5, -2.0], [0.5, 2.0]]).unwrap();
        let (v, _) = variance_reg(&z, 1.0, VARIANCE_EPS).unwrap();
        let expect = 0.5 * (1.0 - (0.25f64 + VARIANCE_EPS).sqrt());
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.25).abs() < 1e-3);

        assert!(variance_reg(&Matrix::zeros(1, 3), 1.0, VARIANCE_EPS).is_err());
    }

    #[test]
    fn stage2_components() {
        let z = Matrix::from_rows(&[[0.6, 0.8], [0.6, 0.8]]).unwrap();
        let spec = PairingSpec::new(PairingStrategy::Coarse, 10.0);
        let no_var = stage2_loss(&z, &[3.0, 3.0], &spec, 1.0, 0.0, VARIANCE_EPS).unwrap();
        assert_eq!(no_var.total, no_var.contrastive);
        assert_eq!(no_var.total, 0.0);
        let with_var = stage2_loss(&z, &[3.0, 3.0], &spec, 1.0, 0.1, VARIANCE_EPS).unwrap();
        let expect = 0.1 * (1.0 - VARIANCE_EPS.sqrt());
        assert!((with_var.total - expect).abs() < 1e-12);
        assert!((with_var.total - 0.099).abs() < 1e-3);
    }
}
