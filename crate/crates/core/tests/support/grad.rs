//! Central-difference checks of every analytic gradient on random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsqa_core::contrastive::{ntxent_loss, positive_pairs, simclr_loss, stage2_loss, variance_reg, PairingSpec, PairingStrategy};
use dsqa_core::model::{AdaptorNet, ModelConfig};
use dsqa_core::numerics::{
    dropout, finite_diff_check, huber_loss, linear_backward, linear_forward, relu, relu_backward, stats_pool,
    stats_pool_backward, Linear, Matrix, PoolingMode,
};

use super::{grid_labels, random_matrix};

pub const EPS: f64 = 1e-5;
pub const RTOL: f64 = 1e-4;
pub const RTOL_CONTRASTIVE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradResult {
    pub name: String,
    pub instances: usize,
    pub worst_rel_err: f64,
    pub rtol: f64,
}

impl GradResult {
    pub fn passed(&self) -> bool {
        self.instances >= 20 && self.worst_rel_err <= self.rtol
    }
}

fn sum_prod(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn run(name: &str, rtol: f64, instances: usize, seed: u64, mut one: impl FnMut(&mut ChaCha8Rng) -> f64) -> GradResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let worst = (0..instances).map(|_| one(&mut rng)).fold(0.0, f64::max);
    GradResult {
        name: name.to_string(),
        instances,
        worst_rel_err: worst,
        rtol,
    }
}

pub fn linear(instances: usize) -> GradResult {
    run("linear", RTOL, instances, 1, |rng| {
        let (n, i, o) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..6));
        let layer = Linear::init(i, o, rng);
        let x = random_matrix(rng, n, i, 1.0);
        let r = random_matrix(rng, n, o, 1.0);
        let (dx, g) = linear_backward(&layer, &x, &r).unwrap();
        let flat: Vec<f64> = [x.data(), layer.weight.data(), &layer.bias].concat();
        let analytic: Vec<f64> = [dx.data(), g.weight.data(), &g.bias].concat();
        let f = |v: &[f64]| {
            let x = Matrix::from_vec(n, i, v[..n * i].to_vec()).unwrap();
            let w = Matrix::from_vec(o, i, v[n * i..n * i + o * i].to_vec()).unwrap();
            let l = Linear::new(w, v[n * i + o * i..].to_vec()).unwrap();
            sum_prod(&linear_forward(&l, &x).unwrap(), &r)
        };
        finite_diff_check(f, &flat, &analytic, EPS).max_rel_err
    })
}

pub fn relu_op(instances: usize) -> GradResult {
    run("relu", RTOL, instances, 2, |rng| {
        let (n, d) = (rng.random_range(1..5), rng.random_range(1..6));
        // keep inputs away from the kink
        let x = random_matrix(rng, n, d, 1.0).map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
        let r = random_matrix(rng, n, d, 1.0);
        let analytic = relu_backward(&x, &r);
        let f = |v: &[f64]| sum_prod(&relu(&Matrix::from_vec(n, d, v.to_vec()).unwrap()), &r);
        finite_diff_check(f, x.data(), analytic.data(), EPS).max_rel_err
    })
}

/// Dropout in eval mode (identity) and with a frozen training mask.
pub fn dropout_op(instances: usize) -> GradResult {
    run("dropout", RTOL, instances, 3, |rng| {
        let (n, d) = (rng.random_range(1..5), rng.random_range(1..6));
        let x = random_matrix(rng, n, d, 1.0);
        let r = random_matrix(rng, n, d, 1.0);
        let training = rng.random::<bool>();
        let (_, mask) = dropout(&x, 0.3, rng, training).unwrap();
        let analytic = mask.apply(&r);
        let f = |v: &[f64]| sum_prod(&mask.apply(&Matrix::from_vec(n, d, v.to_vec()).unwrap()), &r);
        finite_diff_check(f, x.data(), analytic.data(), EPS).max_rel_err
    })
}

pub fn stats_pool_op(instances: usize) -> GradResult {
    run("stats_pool", RTOL, instances, 4, |rng| {
        let (t, d) = (rng.random_range(2..7), rng.random_range(1..5));
        let mode = if rng.random::<bool>() {
            PoolingMode::MeanStd
        } else {
            PoolingMode::MeanOnly
        };
        let h = random_matrix(rng, t, d, 1.0);
        let pooled = stats_pool(&h, mode).unwrap();
        let r: Vec<f64> = (0..pooled.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic = stats_pool_backward(&h, &pooled, &r, mode).unwrap();
        let f = |v: &[f64]| {
            let p = stats_pool(&Matrix::from_vec(t, d, v.to_vec()).unwrap(), mode).unwrap();
            p.iter().zip(&r).map(|(a, b)| a * b).sum()
        };
        finite_diff_check(f, h.data(), analytic.data(), EPS).max_rel_err
    })
}

pub fn huber(instances: usize) -> GradResult {
    run("huber", RTOL, instances, 5, |rng| {
        let delta: f64 = rng.random_range(0.1..2.0);
        let target: f64 = rng.random_range(1.0..7.0);
        let mut pred: f64 = rng.random_range(0.0..8.0);
        if ((pred - target).abs() - delta).abs() < 1e-3 {
            pred += 0.01;
        }
        let (_, g) = huber_loss(pred, target, delta).unwrap();
        let f = |v: &[f64]| huber_loss(v[0], target, delta).unwrap().0;
        finite_diff_check(f, &[pred], &[g], EPS).max_rel_err
    })
}

fn small_model_cfg(rng: &mut ChaCha8Rng) -> ModelConfig {
    ModelConfig {
        hidden_dim: rng.random_range(3..7),
        proj_dim: rng.random_range(2..5),
        pooling: if rng.random::<bool>() {
            PoolingMode::MeanStd
        } else {
            PoolingMode::MeanOnly
        },
        ..ModelConfig::default()
    }
}

fn sequences(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Matrix> {
    (0..n)
        .map(|_| {
            let t = rng.random_range(2..5);
            random_matrix(rng, t, d, 1.0)
        })
        .collect()
}

/// Full projector (two layers, pooling, projection, L2 normalisation) w.r.t. all parameters.
pub fn projector(instances: usize) -> GradResult {
    run("projector", RTOL, instances, 6, |rng| {
        let d = rng.random_range(2..5);
        let cfg = small_model_cfg(rng);
        let net = AdaptorNet::init_projector(d, &cfg, rng).unwrap();
        let n = rng.random_range(1..4);
        let xs = sequences(rng, n, d);
        let refs: Vec<&Matrix> = xs.iter().collect();
        let cache = net.forward(&refs, None).unwrap();
        let r = random_matrix(rng, cache.output().rows(), cache.output().cols(), 1.0);
        let analytic = net.backward(&cache, &r).unwrap().flatten();
        let f = |v: &[f64]| {
            let mut m = net.clone();
            m.set_flat_params(v).unwrap();
            sum_prod(m.forward(&refs, None).unwrap().output(), &r)
        };
        finite_diff_check(f, &net.flatten_params(), &analytic, EPS).max_rel_err
    })
}

/// Regressor with a mean Huber loss on top, as trained in Stages 1 and 3.
pub fn regressor(instances: usize) -> GradResult {
    run("regressor+huber", RTOL, instances, 7, |rng| {
        let d = rng.random_range(2..5);
        let cfg = small_model_cfg(rng);
        let net = AdaptorNet::init_regressor(d, &cfg, rng).unwrap();
        let n = rng.random_range(1..4);
        let xs = sequences(rng, n, d);
        let ys: Vec<f64> = xs.iter().map(|_| rng.random_range(1.0..7.0)).collect();
        let refs: Vec<&Matrix> = xs.iter().collect();
        let loss_of = |m: &AdaptorNet| -> (f64, Matrix) {
            let out = m.forward(&refs, None).unwrap().output().clone();
            let mut g = Matrix::zeros(out.rows(), 1);
            let mut l = 0.0;
            for (i, y) in ys.iter().enumerate() {
                let (li, gi) = huber_loss(out.get(i, 0), *y, 0.5).unwrap();
                l += li / ys.len() as f64;
                g.set(i, 0, gi / ys.len() as f64);
            }
            (l, g)
        };
        let cache = net.forward(&refs, None).unwrap();
        let (_, dout) = loss_of(&net);
        let analytic = net.backward(&cache, &dout).unwrap().flatten();
        let f = |v: &[f64]| {
            let mut m = net.clone();
            m.set_flat_params(v).unwrap();
            loss_of(&m).0
        };
        finite_diff_check(f, &net.flatten_params(), &analytic, EPS).max_rel_err
    })
}

fn random_tau(rng: &mut ChaCha8Rng) -> f64 {
    [0.1, 0.5, 1.0, 10.0][rng.random_range(0..4)]
}

pub fn simclr(instances: usize) -> GradResult {
    run("simclr_loss", RTOL_CONTRASTIVE, instances, 8, |rng| {
        let (b, d) = (rng.random_range(1..6), rng.random_range(2..6));
        let z = random_matrix(rng, 2 * b, d, 0.5);
        let tau = random_tau(rng);
        let out = simclr_loss(&z, tau).unwrap();
        let f = |v: &[f64]| simclr_loss(&Matrix::from_vec(2 * b, d, v.to_vec()).unwrap(), tau).unwrap().loss;
        finite_diff_check(f, z.data(), out.grad.data(), EPS).max_rel_err
    })
}

pub fn ntxent(strategy: PairingStrategy, instances: usize) -> GradResult {
    let name = format!("ntxent_loss[{}]", strategy.as_str());
    run(&name, RTOL_CONTRASTIVE, instances, 9 + strategy as u64, |rng| {
        let (b, d) = (rng.random_range(1..7), rng.random_range(2..6));
        let labels = grid_labels(rng, b);
        let tau = random_tau(rng);
        let spec = PairingSpec::new(strategy, tau);
        let pairs = positive_pairs(&labels, &spec).unwrap();
        let z = random_matrix(rng, 2 * b, d, 0.5);
        let out = ntxent_loss(&z, &pairs, tau).unwrap();
        let f = |v: &[f64]| ntxent_loss(&Matrix::from_vec(2 * b, d, v.to_vec()).unwrap(), &pairs, tau).unwrap().loss;
        finite_diff_check(f, z.data(), out.grad.data(), EPS).max_rel_err
    })
}

pub fn variance(instances: usize) -> GradResult {
    run("variance_reg", RTOL, instances, 20, |rng| {
        let (n, d) = (rng.random_range(2..10), rng.random_range(1..6));
        // per-column scales well clear of the hinge at std = γ = 1
        let scales: Vec<f64> = (0..d).map(|_| if rng.random::<bool>() { 0.4 } else { 4.0 }).collect();
        let mut z = random_matrix(rng, n, d, 1.0);
        for r in 0..n {
            for (v, s) in z.row_mut(r).iter_mut().zip(&scales) {
                *v *= s;
            }
        }
        let (_, g) = variance_reg(&z, 1.0, 1e-4).unwrap();
        let f = |v: &[f64]| variance_reg(&Matrix::from_vec(n, d, v.to_vec()).unwrap(), 1.0, 1e-4).unwrap().0;
        finite_diff_check(f, z.data(), g.data(), EPS).max_rel_err
    })
}

pub fn stage2(instances: usize) -> GradResult {
    run("stage2_loss", RTOL_CONTRASTIVE, instances, 21, |rng| {
        let (b, d) = (rng.random_range(1..7), rng.random_range(2..6));
        let labels = grid_labels(rng, b);
        let strategy = [PairingStrategy::Dis, PairingStrategy::Con, PairingStrategy::Coarse][rng.random_range(0..3)];
        let spec = PairingSpec::new(strategy, random_tau(rng));
        let z = random_matrix(rng, 2 * b, d, 0.5);
        let out = stage2_loss(&z, &labels, &spec, 1.0, 0.1, 1e-4).unwrap();
        let f = |v: &[f64]| {
            stage2_loss(&Matrix::from_vec(2 * b, d, v.to_vec()).unwrap(), &labels, &spec, 1.0, 0.1, 1e-4)
                .unwrap()
                .total
        };
        finite_diff_check(f, z.data(), out.grad.data(), EPS).max_rel_err
    })
}

pub fn suite(instances: usize) -> Vec<GradResult> {
    let mut out = vec![
        linear(instances),
        relu_op(instances),
        dropout_op(instances),
        stats_pool_op(instances),
        huber(instances),
        projector(instances),
        regressor(instances),
        simclr(instances),
    ];
    for s in [PairingStrategy::Sup, PairingStrategy::Dis, PairingStrategy::Con, PairingStrategy::Coarse] {
        out.push(ntxent(s, instances));
    }
    out.push(variance(instances));
    out.push(stage2(instances));
    out
}
