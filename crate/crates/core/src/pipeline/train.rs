use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::config::{derive_seed, RegressionConfig, RunConfig};
use crate::contrastive::{stage2_loss, Batch};
use crate::data::{
    label_bin, sampler_weights, Corpus, CorpusCounts, FeatureSequence, Provenance, Utterance, WeightedSampler,
    LABEL_MAX, LABEL_MIN, TYPICAL_LABEL,
};
use crate::error::{Error, Result};
use crate::evaluation::srcc;
use crate::model::{AdaptorNet, NetGrads};
use crate::numerics::{huber_loss, Matrix, OptimState};

/// Random stream names. Stage 3 deliberately shares the regression streams with
/// Stage 1 so that, absent transfer, the two are the same computation.
const REGRESSION_INIT: &str = "regression.init";
const REGRESSION_TRAIN: &str = "regression.train";
const STAGE2_INIT: &str = "stage2.init";
const STAGE2_TRAIN: &str = "stage2.train";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_srcc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_srcc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: AdaptorNet,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage2Epoch {
    pub epoch: usize,
    pub loss: f64,
    pub contrastive: f64,
    pub variance: f64,
    pub batches: usize,
    pub skipped_anchors: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Stage2History {
    pub epochs: Vec<Stage2Epoch>,
}

#[derive(Debug, Clone)]
pub struct TrainedEncoder {
    pub model: AdaptorNet,
    pub history: Stage2History,
}

fn feature_dim(c: &Corpus) -> Result<usize> {
    c.feature_dim().ok_or(Error::EmptyInput("corpus has no utterances"))
}

fn require_labels(c: &Corpus, what: &str) -> Result<Vec<f64>> {
    c.labels()
        .ok_or_else(|| Error::Precondition(format!("{what} corpus `{}` has unlabeled utterances", c.name)))
}

fn diverged(stage: &'static str, step: u64, loss: f64, model: &AdaptorNet) -> Error {
    let norms: Vec<String> = model
        .params()
        .iter()
        .zip(crate::model::PARAM_NAMES)
        .map(|(p, n)| format!("{n}={:.4e}", p.iter().map(|v| v * v).sum::<f64>().sqrt()))
        .collect();
    Error::TrainingDiverged {
        stage,
        step,
        detail: format!("loss {loss}; parameter norms {}", norms.join(" ")),
    }
}

fn apply_step(opt: &mut OptimState, model: &mut AdaptorNet, grads: &NetGrads) -> Result<()> {
    let g = grads.slices();
    let mut p = model.params_mut();
    opt.step(&mut p, &g)
}

/// Fresh regression network drawn from the shared regression init stream.
pub fn init_regression_model(in_dim: usize, cfg: &RunConfig) -> Result<AdaptorNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, REGRESSION_INIT));
    AdaptorNet::init_regressor(in_dim, &cfg.model, &mut rng)
}

fn batch_indices(n: usize, cfg: &RegressionConfig, sampler: Option<&WeightedSampler>, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let steps = n.div_ceil(cfg.batch_size);
    match sampler {
        Some(s) => (0..steps)
            .map(|_| (0..cfg.batch_size).map(|_| s.draw(rng)).collect())
            .collect(),
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
        }
    }
}

/// Huber-regression training with best-validation-SRCC selection.
fn fit_regression(
    mut model: AdaptorNet,
    train: &Corpus,
    val: &Corpus,
    cfg: &RegressionConfig,
    seed: u64,
    stage: &'static str,
) -> Result<TrainedModel> {
    let labels = require_labels(train, "training")?;
    let val_labels = require_labels(val, "validation")?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput("training and validation corpora must be non-empty"));
    }
    for c in [train, val] {
        if feature_dim(c)? != model.input_dim() {
            return Err(Error::dim("regression corpus features", model.input_dim(), feature_dim(c)?));
        }
    }
    if cfg.head_bias_at_label_mean {
        model.head.bias[0] = labels.iter().sum::<f64>() / labels.len() as f64;
    }
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok(TrainedModel { model, history });
    }

    let prepared: Vec<FeatureSequence> = train.utterances.iter().map(|u| model.prepare(&u.features)).collect();
    let sampler = if cfg.weighted_sampling {
        Some(WeightedSampler::new(&sampler_weights(train)?)?)
    } else {
        None
    };
    let mut opt = OptimState::new(cfg.optimizer(), &model.param_sizes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, usize, AdaptorNet)> = None;
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for idx in batch_indices(train.len(), cfg, sampler.as_ref(), &mut rng) {
            let refs: Vec<&FeatureSequence> = idx.iter().map(|&i| &prepared[i]).collect();
            let cache = model.forward(&refs, Some(&mut rng as &mut dyn RngCore))?;
            let out = cache.output();
            let mut dout = Matrix::zeros(idx.len(), 1);
            let mut batch_loss = 0.0;
            for (r, &i) in idx.iter().enumerate() {
                let (l, g) = huber_loss(out.get(r, 0), labels[i], cfg.huber_delta)?;
                batch_loss += l;
                dout.set(r, 0, g / idx.len() as f64);
            }
            if !batch_loss.is_finite() {
                return Err(diverged(stage, step, batch_loss, &model));
            }
            let grads = model.backward(&cache, &dout)?;
            apply_step(&mut opt, &mut model, &grads).map_err(|_| diverged(stage, step, batch_loss, &model))?;
            loss_sum += batch_loss;
            count += idx.len();
            step += 1;
        }
        let val_srcc = srcc(&predict(&model, val)?, &val_labels).ok();
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / count as f64,
            val_srcc,
        });
        if let Some(s) = val_srcc {
            if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
                best = Some((s, epoch, model.clone()));
            }
        }
    }
    if let Some((s, e, m)) = best {
        history.best_epoch = Some(e);
        history.best_val_srcc = Some(s);
        model = m;
    }
    Ok(TrainedModel { model, history })
}

/// Stage 1: supervised regression on the labeled training split.
pub fn train_stage1(train: &Corpus, val: &Corpus, cfg: &RunConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let model = init_regression_model(feature_dim(train)?, cfg)?;
    fit_regression(model, train, val, &cfg.stage1, derive_seed(cfg.seed, REGRESSION_TRAIN), "stage1")
}

/// Stage 3 without a pretrained encoder: the Stage-1 procedure under the Stage-3 settings.
pub fn train_stage3_scratch(train: &Corpus, val: &Corpus, cfg: &RunConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let model = init_regression_model(feature_dim(train)?, cfg)?;
    fit_regression(model, train, val, &cfg.stage3, derive_seed(cfg.seed, REGRESSION_TRAIN), "stage3")
}

/// Loads the two frame-level layers of `encoder` into a fresh regression network.
pub fn transfer_encoder(encoder: &AdaptorNet, in_dim: usize, cfg: &RunConfig) -> Result<AdaptorNet> {
    let mut model = init_regression_model(in_dim, cfg)?;
    let mut bad = Vec::new();
    for (name, src, dst) in [
        ("layer1", &encoder.layer1, &model.layer1),
        ("layer2", &encoder.layer2, &model.layer2),
    ] {
        if src.weight.shape() != dst.weight.shape() {
            bad.push(format!(
                "{name}.weight (checkpoint {:?}, expected {:?})",
                src.weight.shape(),
                dst.weight.shape()
            ));
        }
        if src.bias.len() != dst.bias.len() {
            bad.push(format!("{name}.bias (checkpoint {}, expected {})", src.bias.len(), dst.bias.len()));
        }
    }
    if !bad.is_empty() {
        return Err(Error::Transfer(bad));
    }
    model.layer1 = encoder.layer1.clone();
    model.layer2 = encoder.layer2.clone();
    Ok(model)
}

/// Stage 3: transfer the pretrained frame layers, add a fresh head, fine-tune everything.
pub fn train_stage3(train: &Corpus, val: &Corpus, encoder: &Checkpoint, cfg: &RunConfig) -> Result<TrainedModel> {
    train_stage3_from(train, val, &encoder.to_model()?, cfg)
}

pub fn train_stage3_from(train: &Corpus, val: &Corpus, encoder: &AdaptorNet, cfg: &RunConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let model = transfer_encoder(encoder, feature_dim(train)?, cfg)?;
    fit_regression(model, train, val, &cfg.stage3, derive_seed(cfg.seed, REGRESSION_TRAIN), "stage3")
}

/// Eval-mode severity predictions clamped to the label range.
pub fn predict(model: &AdaptorNet, corpus: &Corpus) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&FeatureSequence> = corpus.utterances.iter().map(|u| &u.features).collect();
    let out = model.infer(&refs)?;
    if out.cols() != 1 {
        return Err(Error::Precondition("predict requires a regression head".into()));
    }
    Ok(out.into_vec().into_iter().map(|v| v.clamp(LABEL_MIN, LABEL_MAX)).collect())
}

/// Counts per rounded severity bin 1..=7.
pub fn label_histogram(labels: &[f64]) -> [usize; 7] {
    let mut h = [0usize; 7];
    for &y in labels {
        h[(label_bin(y) - 1) as usize] += 1;
    }
    h
}

#[derive(Debug, Clone)]
pub struct PseudoLabeled {
    pub corpus: Corpus,
    pub histogram: [usize; 7],
}

/// Labels every unlabeled utterance with the model's clamped prediction.
pub fn pseudo_label(model: &AdaptorNet, unlabeled: &Corpus) -> Result<PseudoLabeled> {
    if let Some(u) = unlabeled.utterances.iter().find(|u| u.label.is_some()) {
        return Err(Error::Precondition(format!("utterance {} already carries a label", u.id)));
    }
    let preds = predict(model, unlabeled)?;
    Ok(PseudoLabeled {
        histogram: label_histogram(&preds),
        corpus: relabel(unlabeled, "pseudo", |i| preds[i])?,
    })
}

/// Copy of `unlabeled` with every label set to `label` (the no-Stage-1 ablation).
pub fn constant_label(unlabeled: &Corpus, label: f64) -> Result<Corpus> {
    relabel(unlabeled, "const", |_| label)
}

fn relabel(c: &Corpus, suffix: &str, label: impl Fn(usize) -> f64) -> Result<Corpus> {
    let utterances = c
        .utterances
        .iter()
        .enumerate()
        .map(|(i, u)| Utterance {
            label: Some(label(i)),
            provenance: Provenance::Pseudo,
            ..u.clone()
        })
        .collect();
    Corpus::new(format!("{}-{suffix}", c.name), utterances)
}

/// Merges labeled, pseudo-labeled and typical data for contrastive pretraining.
pub fn build_stage2_corpus(
    labeled: &Corpus,
    pseudo: Option<&Corpus>,
    typical: Option<&Corpus>,
) -> Result<(Corpus, CorpusCounts)> {
    require_labels(labeled, "labeled")?;
    if let Some(p) = pseudo {
        require_labels(p, "pseudo-labeled")?;
    }
    if let Some(t) = typical {
        if let Some(u) = t.utterances.iter().find(|u| u.label != Some(TYPICAL_LABEL)) {
            return Err(Error::Precondition(format!(
                "typical utterance {} has label {:?}, expected {TYPICAL_LABEL}",
                u.id, u.label
            )));
        }
    }
    let mut all = labeled.utterances.clone();
    for c in [pseudo, typical].into_iter().flatten() {
        all.extend(c.utterances.iter().cloned());
    }
    let merged = Corpus::new("stage2", all)?;
    let counts = merged.counts();
    Ok((merged, counts))
}

/// Endless reshuffling cursor over a pool of indices.
struct Pool {
    items: Vec<usize>,
    pos: usize,
}

impl Pool {
    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.items.len() {
            self.items.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.items[self.pos - 1]
    }
}

fn stage2_batches(mixed: &Corpus, batch: usize, typical_fraction: Option<f64>, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let n = mixed.len();
    let (typ, rest): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| mixed.utterances[i].provenance == Provenance::Typical);
    match typical_fraction {
        Some(f) if !typ.is_empty() && !rest.is_empty() => {
            let k = ((f * batch as f64).round() as usize).min(batch);
            let len = typ.len();
            let mut tp = Pool { items: typ, pos: len };
            let len = rest.len();
            let mut rp = Pool { items: rest, pos: len };
            (0..n.div_ceil(batch))
                .map(|_| {
                    let mut b: Vec<usize> = (0..k).map(|_| tp.next(rng)).collect();
                    b.extend((k..batch).map(|_| rp.next(rng)));
                    b
                })
                .collect()
        }
        _ => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            order.chunks(batch).map(<[usize]>::to_vec).collect()
        }
    }
}

/// Stage 2: contrastive pretraining of the projector; returns the final weights.
pub fn train_stage2(mixed: &Corpus, cfg: &RunConfig) -> Result<TrainedEncoder> {
    cfg.validate()?;
    let spec = cfg
        .pairing()
        .ok_or_else(|| Error::Precondition("the baseline strategy has no Stage-2 objective".into()))?;
    let labels = require_labels(mixed, "stage-2")?;
    let s2 = &cfg.stage2;
    let mut init = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STAGE2_INIT));
    let mut model = AdaptorNet::init_projector(feature_dim(mixed)?, &cfg.model, &mut init)?;
    let prepared: Vec<FeatureSequence> = mixed.utterances.iter().map(|u| model.prepare(&u.features)).collect();
    let mut opt = OptimState::new(s2.optimizer(), &model.param_sizes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STAGE2_TRAIN));
    let mut history = Stage2History::default();
    let mut step: u64 = 0;

    for epoch in 0..s2.epochs {
        let mut rec = Stage2Epoch {
            epoch,
            loss: 0.0,
            contrastive: 0.0,
            variance: 0.0,
            batches: 0,
            skipped_anchors: 0,
        };
        for idx in stage2_batches(mixed, s2.batch_size, s2.typical_fraction, &mut rng) {
            let sources: Vec<(&FeatureSequence, f64)> = idx.iter().map(|&i| (&prepared[i], labels[i])).collect();
            let batch = Batch::from_sources(&sources, &s2.augment, &mut rng)?;
            let refs: Vec<&FeatureSequence> = batch.views.iter().collect();
            let cache = if s2.projector_dropout {
                model.forward(&refs, Some(&mut rng as &mut dyn RngCore))?
            } else {
                model.forward(&refs, None)?
            };
            let loss = stage2_loss(cache.output(), &batch.labels, &spec, s2.gamma, s2.lambda, s2.var_eps)?;
            if !loss.total.is_finite() {
                return Err(diverged("stage2", step, loss.total, &model));
            }
            let grads = model.backward(&cache, &loss.grad)?;
            apply_step(&mut opt, &mut model, &grads).map_err(|_| diverged("stage2", step, loss.total, &model))?;
            rec.loss += loss.total;
            rec.contrastive += loss.contrastive;
            rec.variance += loss.variance;
            rec.skipped_anchors += loss.skipped_anchors;
            rec.batches += 1;
            step += 1;
        }
        if rec.batches > 0 {
            let b = rec.batches as f64;
            rec.loss /= b;
            rec.contrastive /= b;
            rec.variance /= b;
        }
        history.epochs.push(rec);
    }
    Ok(TrainedEncoder { model, history })
}

/// Metrics stored alongside a checkpoint.
pub fn history_metrics(h: &TrainHistory) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    if let Some(s) = h.best_val_srcc {
        m.insert("best_val_srcc".into(), s);
    }
    if let Some(e) = h.best_epoch {
        m.insert("best_epoch".into(), e as f64);
    }
    if let Some(last) = h.epochs.last() {
        m.insert("final_train_loss".into(), last.train_loss);
    }
    m
}

pub fn stage2_metrics(h: &Stage2History) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    if let Some(last) = h.epochs.last() {
        m.insert("final_loss".into(), last.loss);
        m.insert("final_contrastive".into(), last.contrastive);
        m.insert("final_variance".into(), last.variance);
    }
    m.insert(
        "skipped_anchors".into(),
        h.epochs.iter().map(|e| e.skipped_anchors).sum::<usize>() as f64,
    );
    m
}
