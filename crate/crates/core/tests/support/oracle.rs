//! Independent reference implementations and identity checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsqa_core::contrastive::{
    ntxent_loss, positive_pairs, simclr_loss, variance_reg, PairingSpec, PairingStrategy, VARIANCE_EPS,
};
use dsqa_core::evaluation::{pcc, rank, srcc};
use dsqa_core::numerics::Matrix;

use super::{grid_labels, unit_rows};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

const STRATEGIES: [PairingStrategy; 4] =
    [PairingStrategy::Sup, PairingStrategy::Dis, PairingStrategy::Con, PairingStrategy::Coarse];

/// Rule table written out directly from the strategy definitions.
fn brute_match(strategy: PairingStrategy, a: f64, b: f64) -> bool {
    match strategy {
        PairingStrategy::Simclr => false,
        PairingStrategy::Sup => a == b,
        PairingStrategy::Dis => a.round() == b.round(),
        PairingStrategy::Con => (a - b).abs() < 0.5,
        PairingStrategy::Coarse => (a <= 1.5) == (b <= 1.5),
    }
}

pub fn brute_positive_sets(labels: &[f64], strategy: PairingStrategy) -> Vec<Vec<usize>> {
    let n = labels.len();
    let b = n / 2;
    let mut out = vec![Vec::new(); n];
    for (i, set) in out.iter_mut().enumerate() {
        for j in 0..n {
            if i == j {
                continue;
            }
            let partner = i % b == j % b;
            if partner || brute_match(strategy, labels[i], labels[j]) {
                set.push(j);
            }
        }
    }
    out
}

/// Textbook NT-Xent: no max shift, explicit double loop over anchors and positives.
#[allow(clippy::needless_range_loop)]
pub fn naive_ntxent(z: &Matrix, positives: &[Vec<usize>], tau: f64) -> f64 {
    let n = z.rows();
    let sim = |i: usize, j: usize| -> f64 { (0..z.cols()).map(|k| z.get(i, k) * z.get(j, k)).sum::<f64>() / tau };
    let mut total = 0.0;
    let mut anchors = 0;
    for i in 0..n {
        if positives[i].is_empty() {
            continue;
        }
        let mut denom = 0.0;
        for a in 0..n {
            if a != i {
                denom += sim(i, a).exp();
            }
        }
        let mut li = 0.0;
        for &p in &positives[i] {
            li += -(sim(i, p).exp() / denom).ln();
        }
        total += li / positives[i].len() as f64;
        anchors += 1;
    }
    total / anchors as f64
}

pub fn ntxent_matches_naive(batches: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for t in 0..batches {
        let b = rng.random_range(1..=16);
        let d = rng.random_range(2..9);
        let tau = [0.1, 0.5, 1.0, 10.0][rng.random_range(0..4)];
        let z = unit_rows(&mut rng, 2 * b, d);
        let labels = grid_labels(&mut rng, b);
        let (fast, slow) = if t % 5 == 0 {
            let naive = naive_ntxent(&z, &brute_positive_sets(&labels, PairingStrategy::Simclr), tau);
            (simclr_loss(&z, tau).unwrap().loss, naive)
        } else {
            let s = STRATEGIES[t % 4];
            let sets = brute_positive_sets(&labels, s);
            let pairs = positive_pairs(&labels, &PairingSpec::new(s, tau)).unwrap();
            (ntxent_loss(&z, &pairs, tau).unwrap().loss, naive_ntxent(&z, &sets, tau))
        };
        worst = worst.max((fast - slow).abs());
    }
    Check::new(
        "ntxent/simclr vs naive oracle",
        worst <= 1e-10,
        format!("{batches} batches, 2B<=32, max |diff| {worst:.2e}"),
    )
}

pub fn positive_pairs_match_brute_force(batches: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut mismatches = 0;
    for s in STRATEGIES.into_iter().chain([PairingStrategy::Simclr]) {
        for _ in 0..batches {
            let b = rng.random_range(1..=16);
            let labels = grid_labels(&mut rng, b);
            let got = positive_pairs(&labels, &PairingSpec::new(s, 1.0)).unwrap();
            if got != brute_positive_sets(&labels, s) {
                mismatches += 1;
            }
        }
    }
    Check::new(
        "positive_pairs vs brute force",
        mismatches == 0,
        format!("{batches} batches x 5 strategies, {mismatches} mismatches"),
    )
}

pub fn identical_views_give_zero() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut bad = Vec::new();
    for _ in 0..20 {
        let d = rng.random_range(2..10);
        let row = unit_rows(&mut rng, 1, d);
        let z = Matrix::vstack([&row, &row]).unwrap();
        let y = f64::from(rng.random_range(10..=70)) / 10.0;
        for tau in [0.1, 1.0, 10.0, 100.0] {
            let mut losses = vec![simclr_loss(&z, tau).unwrap().loss];
            for s in STRATEGIES {
                let pairs = positive_pairs(&[y, y], &PairingSpec::new(s, tau)).unwrap();
                losses.push(ntxent_loss(&z, &pairs, tau).unwrap().loss);
            }
            bad.extend(losses.into_iter().filter(|&l| l != 0.0));
        }
    }
    Check::new("B=1 identical views -> loss 0", bad.is_empty(), format!("nonzero: {bad:?}"))
}

pub fn sup_equals_simclr_for_distinct_labels() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut diffs = 0;
    for _ in 0..50 {
        let b = rng.random_range(1..=16);
        let mut pool: Vec<f64> = (10..=70).map(|v| f64::from(v) / 10.0).collect();
        pool.shuffle(&mut rng);
        let src = &pool[..b];
        let labels: Vec<f64> = src.iter().chain(src).copied().collect();
        let tau = [0.1, 1.0, 10.0][rng.random_range(0..3)];
        let d = rng.random_range(2..9);
        let z = unit_rows(&mut rng, 2 * b, d);
        let sup = ntxent_loss(&z, &positive_pairs(&labels, &PairingSpec::new(PairingStrategy::Sup, tau)).unwrap(), tau)
            .unwrap();
        let sim = simclr_loss(&z, tau).unwrap();
        if sup.loss.to_bits() != sim.loss.to_bits() || sup.grad != sim.grad {
            diffs += 1;
        }
    }
    Check::new("sup == simclr on distinct labels", diffs == 0, format!("50 batches, {diffs} differ"))
}

pub fn variance_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let mut worst_wide = 0.0f64;
    let mut worst_flat = 0.0f64;
    let target = 1.0 - VARIANCE_EPS.sqrt();
    for _ in 0..20 {
        let (n, d) = (rng.random_range(2..20), rng.random_range(1..10));
        // ±3 around a random centre makes every column std exactly 3
        let mut z = Matrix::zeros(2 * n, d);
        for k in 0..d {
            let c = rng.random_range(-5.0..5.0);
            for i in 0..2 * n {
                z.set(i, k, if i % 2 == 0 { c + 3.0 } else { c - 3.0 });
            }
        }
        worst_wide = worst_wide.max(variance_reg(&z, 1.0, VARIANCE_EPS).unwrap().0.abs());

        let row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let flat = Matrix::from_rows(&vec![row; n]).unwrap();
        let (v, _) = variance_reg(&flat, 1.0, VARIANCE_EPS).unwrap();
        worst_flat = worst_flat.max((v - target).abs());
    }
    Check::new(
        "variance_reg identities",
        worst_wide == 0.0 && worst_flat < 1e-12,
        format!("max loss with std>=γ {worst_wide:.1e}; identical rows |v-(γ-√ε)| {worst_flat:.1e}"),
    )
}

/// Anchor-level semantics of the refined pairing rules.
pub fn pairing_semantics() -> Check {
    let pos = |labels: &[f64], s: PairingStrategy, anchor: usize, other: usize| {
        positive_pairs(labels, &PairingSpec::new(s, 1.0)).unwrap()[anchor].contains(&other)
    };
    let l = [2.4, 2.6, 1.7, 2.4, 2.6, 1.7];
    let mut failures = Vec::new();
    let mut expect = |what: &str, got: bool, want: bool| {
        if got != want {
            failures.push(what.to_string());
        }
    };
    expect("2.4~2.6 dis", pos(&l, PairingStrategy::Dis, 0, 1), false);
    expect("2.4~2.6 con", pos(&l, PairingStrategy::Con, 0, 1), true);
    expect("2.4~1.7 dis", pos(&l, PairingStrategy::Dis, 0, 2), true);
    expect("2.4~1.7 con", pos(&l, PairingStrategy::Con, 0, 2), false);

    let c = [1.0, 1.5, 1.2, 1.51, 4.0, 7.0, 1.0, 1.5, 1.2, 1.51, 4.0, 7.0];
    expect("1~1.5 coarse", pos(&c, PairingStrategy::Coarse, 0, 1), true);
    expect("1~1.2 coarse", pos(&c, PairingStrategy::Coarse, 0, 2), true);
    expect("1~1.51 coarse", pos(&c, PairingStrategy::Coarse, 0, 3), false);
    expect("1~4 coarse", pos(&c, PairingStrategy::Coarse, 0, 4), false);
    expect("4~7 coarse", pos(&c, PairingStrategy::Coarse, 4, 5), true);
    Check::new("pairing semantics", failures.is_empty(), format!("wrong: {failures:?}"))
}

pub fn metric_examples() -> Check {
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    let mut failures = Vec::new();
    let mut expect = |what: &str, ok: bool| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    expect("rank [10,20,30]", rank(&[10.0, 20.0, 30.0]) == [1.0, 2.0, 3.0]);
    expect("rank [5,5]", rank(&[5.0, 5.0]) == [1.5, 1.5]);
    expect("rank [3,1,4,1]", rank(&[3.0, 1.0, 4.0, 1.0]) == [3.0, 1.5, 4.0, 1.5]);
    expect("srcc increasing", close(srcc(&[1.0, 2.0, 5.0], &[0.1, 0.3, 9.0]).unwrap(), 1.0, 1e-15));
    expect("srcc reversed", close(srcc(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0, 1e-15));
    expect("srcc 0.8", close(srcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(), 0.8, 1e-12));
    let a = [0.3, 1.7, -2.0, 4.5];
    let affine: Vec<f64> = a.iter().map(|x| 2.0 * x + 3.0).collect();
    let neg: Vec<f64> = a.iter().map(|x| -x).collect();
    expect("pcc affine", close(pcc(&a, &affine).unwrap(), 1.0, 1e-12));
    expect("pcc negated", close(pcc(&a, &neg).unwrap(), -1.0, 1e-12));
    // means 2 and 7/3: r = 3 / sqrt(2 * 42/9)
    let want = 3.0 / (2.0f64 * 42.0 / 9.0).sqrt();
    expect("pcc [1,2,3]/[1,2,4]", close(pcc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), want, 1e-12));
    expect("pcc ≈0.9819", close(want, 0.9819, 1e-4));
    expect("srcc constant errors", srcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    expect("pcc constant errors", pcc(&[1.0, 2.0], &[3.0, 3.0]).is_err());
    Check::new("metric examples", failures.is_empty(), format!("wrong: {failures:?}"))
}

pub fn srcc_monotone_invariance(trials: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let transforms: [fn(f64) -> f64; 3] = [f64::exp, |x| x * x * x, |x| 2.0 * x + 1.0];
    let mut failures = 0;
    for _ in 0..trials {
        let n = rng.random_range(3..60);
        // coarse grid so ties occur
        let a: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-30..=30)) / 10.0).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let Ok(base) = srcc(&a, &b) else { continue };
        for f in transforms {
            let fa: Vec<f64> = a.iter().map(|&x| f(x)).collect();
            if srcc(&fa, &b).unwrap().to_bits() != base.to_bits() {
                failures += 1;
            }
        }
    }
    Check::new(
        "srcc invariant under increasing maps",
        failures == 0,
        format!("{trials} trials x exp/cube/2x+1, {failures} differ"),
    )
}

pub fn srcc_closed_form(trials: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.random_range(2..200);
        let a: Vec<f64> = (0..n).map(|i| i as f64 + rng.random::<f64>() * 0.5).collect();
        let mut b = a.clone();
        b.shuffle(&mut rng);
        // ranks of a are 1..n in order; ranks of b found by counting
        let d2: f64 = (0..n)
            .map(|i| {
                let rb = 1 + b.iter().filter(|&&v| v < b[i]).count();
                let d = (i + 1) as f64 - rb as f64;
                d * d
            })
            .sum();
        let nf = n as f64;
        let closed = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
        worst = worst.max((srcc(&a, &b).unwrap() - closed).abs());
    }
    Check::new("srcc closed form", worst <= 1e-12, format!("{trials} tie-free trials, max |diff| {worst:.2e}"))
}

pub fn all_identity_checks() -> Vec<Check> {
    vec![identical_views_give_zero(), sup_equals_simclr_for_distinct_labels(), variance_identities()]
}

pub fn all_metric_checks() -> Vec<Check> {
    vec![metric_examples(), srcc_monotone_invariance(200), srcc_closed_form(200)]
}
