//! Stage orchestration: regression, pseudo-labels, contrastive pretraining,
//! weight transfer, checkpoints and seeding.

mod checkpoint;
mod config;
mod experiment;
mod suite;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedTensor, StageTag, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{
    derive_seed, AblationConfig, DataConfig, RegressionConfig, RunConfig, Stage2Config, Strategy, TauTable,
};
pub use experiment::{
    ablation_configs, evaluate_suite, improvement_pct, run_experiment, ExperimentData, ExperimentOutcome,
    OutcomeSummary, CROSS_AVERAGE, TAU_GRID,
};
pub use suite::{load_experiment_data, save_experiment_data, DatasetIndex, SyntheticSuite, DATASETS_FILE};
pub use train::{
    build_stage2_corpus, constant_label, history_metrics, init_regression_model, label_histogram, predict,
    pseudo_label, stage2_metrics, train_stage1, train_stage2, train_stage3, train_stage3_from, train_stage3_scratch,
    transfer_encoder, EpochRecord, PseudoLabeled, Stage2Epoch, Stage2History, TrainHistory, TrainedEncoder,
    TrainedModel,
};
