//! End-to-end runs: split, the three stages, and evaluation on every test set.

use serde::Serialize;

use super::config::{RunConfig, Strategy};
use super::train::{
    build_stage2_corpus, constant_label, pseudo_label, train_stage1, train_stage2, train_stage3_from,
    train_stage3_scratch, TrainedEncoder, TrainedModel,
};
use crate::data::{split, Corpus, CorpusCounts};
use crate::error::Result;
use crate::evaluation::{evaluate, EvalReport, Level};
use crate::model::AdaptorNet;

pub const CROSS_AVERAGE: &str = "cross-average";

/// Corpora an experiment draws from. `labeled` is split speaker-disjointly
/// into train/val/test; `cross` sets are scored at speaker level.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub labeled: Corpus,
    pub unlabeled: Option<Corpus>,
    pub typical: Option<Corpus>,
    pub cross: Vec<Corpus>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub label: String,
    pub reports: Vec<EvalReport>,
    pub stage1: Option<TrainedModel>,
    /// Scores of the Stage-1 model on the same test sets, when Stage 1 ran.
    pub stage1_reports: Vec<EvalReport>,
    pub pseudo_histogram: Option<[usize; 7]>,
    pub stage2: Option<TrainedEncoder>,
    pub stage2_counts: Option<CorpusCounts>,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutcomeSummary<'a> {
    pub label: &'a str,
    pub reports: &'a [EvalReport],
    pub stage1_reports: &'a [EvalReport],
    pub pseudo_histogram: Option<[usize; 7]>,
    pub stage2_counts: Option<CorpusCounts>,
    pub stage1_history: Option<&'a super::train::TrainHistory>,
    pub stage2_history: Option<&'a super::train::Stage2History>,
    pub final_history: &'a super::train::TrainHistory,
}

impl ExperimentOutcome {
    pub fn summary(&self) -> OutcomeSummary<'_> {
        OutcomeSummary {
            label: &self.label,
            reports: &self.reports,
            stage1_reports: &self.stage1_reports,
            pseudo_histogram: self.pseudo_histogram,
            stage2_counts: self.stage2_counts,
            stage1_history: self.stage1.as_ref().map(|t| &t.history),
            stage2_history: self.stage2.as_ref().map(|t| &t.history),
            final_history: &self.model.history,
        }
    }

    pub fn report(&self, dataset: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.dataset == dataset)
    }
}

/// In-domain utterance-level report, one speaker-level report per cross set,
/// and their mean when there is more than one defined cross set.
pub fn evaluate_suite(model: &AdaptorNet, test: &Corpus, cross: &[Corpus]) -> Result<Vec<EvalReport>> {
    let mut out = vec![evaluate(model, test, Level::Utterance)?];
    for c in cross {
        out.push(evaluate(model, c, Level::Speaker)?);
    }
    let cross_reports = &out[1..];
    if cross_reports.len() > 1 {
        let defined: Vec<&EvalReport> = cross_reports.iter().filter(|r| r.error.is_none()).collect();
        let mean = |f: fn(&EvalReport) -> Option<f64>| {
            (defined.len() == cross_reports.len())
                .then(|| defined.iter().filter_map(|r| f(r)).sum::<f64>() / defined.len() as f64)
        };
        let avg = EvalReport {
            dataset: CROSS_AVERAGE.to_string(),
            level: Level::Speaker,
            srcc: mean(|r| r.srcc),
            pcc: mean(|r| r.pcc),
            n: cross_reports.iter().map(|r| r.n).sum(),
            error: (defined.len() != cross_reports.len()).then(|| "undefined correlation in a cross set".to_string()),
        };
        out.push(avg);
    }
    Ok(out)
}

pub fn run_experiment(data: &ExperimentData, cfg: &RunConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (train, val, test) = split(&data.labeled, cfg.data.split, cfg.data.split_seed)?;
    let label = cfg.run_label();

    if cfg.strategy == Strategy::Baseline {
        let s1 = train_stage1(&train, &val, cfg)?;
        let reports = evaluate_suite(&s1.model, &test, &data.cross)?;
        return Ok(ExperimentOutcome {
            label,
            stage1_reports: reports.clone(),
            reports,
            stage1: Some(s1.clone()),
            pseudo_histogram: None,
            stage2: None,
            stage2_counts: None,
            model: s1,
        });
    }

    let unlabeled = data.unlabeled.as_ref().filter(|_| cfg.data.use_unlabeled);
    let run_stage1 = cfg.strategy.uses_pseudo_labels() && !cfg.ablation.skip_stage1 && unlabeled.is_some();
    let stage1 = if run_stage1 {
        Some(train_stage1(&train, &val, cfg)?)
    } else {
        None
    };
    let stage1_reports = match &stage1 {
        Some(s1) => evaluate_suite(&s1.model, &test, &data.cross)?,
        None => Vec::new(),
    };

    let (pseudo, pseudo_histogram) = match (unlabeled, &stage1) {
        (Some(u), Some(s1)) => {
            let p = pseudo_label(&s1.model, u)?;
            (Some(p.corpus), Some(p.histogram))
        }
        (Some(u), None) => (Some(constant_label(u, cfg.ablation.unlabeled_label)?), None),
        (None, _) => (None, None),
    };
    let typical = data.typical.as_ref().filter(|_| cfg.data.use_typical);

    let (model, stage2, stage2_counts) = if cfg.ablation.skip_stage2 {
        (train_stage3_scratch(&train, &val, cfg)?, None, None)
    } else {
        let (mixed, counts) = build_stage2_corpus(&train, pseudo.as_ref(), typical)?;
        let enc = train_stage2(&mixed, cfg)?;
        let model = train_stage3_from(&train, &val, &enc.model, cfg)?;
        (model, Some(enc), Some(counts))
    };
    let reports = evaluate_suite(&model.model, &test, &data.cross)?;
    Ok(ExperimentOutcome {
        label,
        reports,
        stage1,
        stage1_reports,
        pseudo_histogram,
        stage2,
        stage2_counts,
        model,
    })
}

/// The full model followed by the single-factor ablations.
pub fn ablation_configs(base: &RunConfig) -> Vec<RunConfig> {
    let mut out = vec![base.clone()];
    let mut push = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        out.push(c);
    };
    push(&|c| c.data.use_typical = false);
    push(&|c| c.data.use_unlabeled = false);
    push(&|c| c.stage2.lambda = 0.0);
    push(&|c| c.ablation.skip_stage1 = true);
    push(&|c| c.ablation.skip_stage2 = true);
    out
}

pub const TAU_GRID: [f64; 5] = [0.1, 1.0, 10.0, 50.0, 100.0];

/// Relative change of `value` over `baseline`, in percent.
pub fn improvement_pct(value: f64, baseline: f64) -> f64 {
    (value - baseline) / baseline.abs() * 100.0
}
