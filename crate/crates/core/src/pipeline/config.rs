use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::augment::AugmentConfig;
use crate::contrastive::{PairingSpec, PairingStrategy};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::AdamConfig;

/// Which model row of the comparison a run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Stage 3 only: regression on labeled data.
    Baseline,
    /// Stage 2 with plain NT-Xent (no labels) followed by Stage 3.
    Simclr,
    Dis,
    Con,
    Coarse,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Baseline,
        Strategy::Simclr,
        Strategy::Dis,
        Strategy::Con,
        Strategy::Coarse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Simclr => "simclr",
            Strategy::Dis => "dis",
            Strategy::Con => "con",
            Strategy::Coarse => "coarse",
        }
    }

    pub fn pairing(self) -> Option<PairingStrategy> {
        match self {
            Strategy::Baseline => None,
            Strategy::Simclr => Some(PairingStrategy::Simclr),
            Strategy::Dis => Some(PairingStrategy::Dis),
            Strategy::Con => Some(PairingStrategy::Con),
            Strategy::Coarse => Some(PairingStrategy::Coarse),
        }
    }

    /// Whether the Stage-2 pairing needs labels on unlabeled data.
    pub fn uses_pseudo_labels(self) -> bool {
        matches!(self, Strategy::Dis | Strategy::Con | Strategy::Coarse)
    }
}

/// Stage 1 and Stage 3 regression settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub huber_delta: f64,
    pub weight_decay: f64,
    pub decoupled_weight_decay: bool,
    pub weighted_sampling: bool,
    /// Start the head bias at the mean training label.
    pub head_bias_at_label_mean: bool,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 32,
            epochs: 10,
            huber_delta: 0.5,
            weight_decay: 0.01,
            decoupled_weight_decay: true,
            weighted_sampling: true,
            head_bias_at_label_mean: true,
        }
    }
}

impl RegressionConfig {
    pub fn optimizer(&self) -> AdamConfig {
        AdamConfig {
            decoupled: self.decoupled_weight_decay,
            ..AdamConfig::adamw(self.lr, self.weight_decay)
        }
    }

    fn validate(&self, which: &str) -> Result<()> {
        self.optimizer().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Parameter(format!("{which}.batch_size must be positive")));
        }
        if !(self.huber_delta > 0.0) {
            return Err(Error::Parameter(format!(
                "{which}.huber_delta must be positive, got {}",
                self.huber_delta
            )));
        }
        Ok(())
    }
}

/// Per-strategy temperatures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauTable {
    pub simclr: f64,
    pub dis: f64,
    pub con: f64,
    pub coarse: f64,
}

impl Default for TauTable {
    fn default() -> Self {
        Self {
            simclr: 0.1,
            dis: 1.0,
            con: 0.1,
            coarse: 10.0,
        }
    }
}

impl TauTable {
    pub fn get(&self, s: PairingStrategy) -> f64 {
        match s {
            PairingStrategy::Simclr => self.simclr,
            // repeated-label supervision shares the discretised temperature
            PairingStrategy::Sup | PairingStrategy::Dis => self.dis,
            PairingStrategy::Con => self.con,
            PairingStrategy::Coarse => self.coarse,
        }
    }

    pub fn set(&mut self, s: PairingStrategy, tau: f64) {
        match s {
            PairingStrategy::Simclr => self.simclr = tau,
            PairingStrategy::Sup | PairingStrategy::Dis => self.dis = tau,
            PairingStrategy::Con => self.con = tau,
            PairingStrategy::Coarse => self.coarse = tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Source utterances per batch (twice as many views).
    pub batch_size: usize,
    pub tau: TauTable,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub var_eps: f64,
    pub augment: AugmentConfig,
    /// Dropout on the two frame-level layers while pretraining.
    pub projector_dropout: bool,
    /// Fixed share of typical utterances per batch; uniform sampling when unset.
    pub typical_fraction: Option<f64>,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-5,
            epochs: 2,
            batch_size: 64,
            tau: TauTable::default(),
            alpha: 0.5,
            beta: 1.5,
            gamma: 1.0,
            lambda: 0.1,
            var_eps: 1e-4,
            augment: AugmentConfig::default(),
            projector_dropout: true,
            typical_fraction: None,
        }
    }
}

impl Stage2Config {
    pub fn optimizer(&self) -> AdamConfig {
        AdamConfig::adam(self.lr, self.weight_decay)
    }

    pub fn pairing(&self, strategy: PairingStrategy) -> PairingSpec {
        PairingSpec {
            strategy,
            alpha: self.alpha,
            beta: self.beta,
            tau: self.tau.get(strategy),
        }
    }

    fn validate(&self) -> Result<()> {
        self.optimizer().validate()?;
        self.augment.validate()?;
        for s in PairingStrategy::ALL {
            self.pairing(s).validate()?;
        }
        if self.batch_size < 2 {
            return Err(Error::Parameter("stage2.batch_size must be at least 2".into()));
        }
        if !(self.gamma >= 0.0) || !(self.lambda >= 0.0) || !(self.var_eps > 0.0) {
            return Err(Error::Parameter("stage2 gamma/lambda must be >= 0 and var_eps > 0".into()));
        }
        if let Some(f) = self.typical_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Parameter(format!("stage2.typical_fraction {f} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Train/val/test shares of the labeled corpus (speaker-disjoint).
    pub split: [f64; 3],
    pub split_seed: u64,
    pub use_unlabeled: bool,
    pub use_typical: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            split: [0.8, 0.1, 0.1],
            split_seed: 0,
            use_unlabeled: true,
            use_typical: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// No Stage-1 pseudo-labels: unlabeled data takes `unlabeled_label`.
    pub skip_stage1: bool,
    /// No contrastive pretraining: Stage 3 starts from a fresh initialisation.
    pub skip_stage2: bool,
    /// Label for unlabeled utterances when no pseudo-labels exist (dysarthric side of beta).
    pub unlabeled_label: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            skip_stage1: false,
            skip_stage2: false,
            unlabeled_label: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub strategy: Strategy,
    pub model: ModelConfig,
    pub stage1: RegressionConfig,
    pub stage2: Stage2Config,
    pub stage3: RegressionConfig,
    pub data: DataConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            strategy: Strategy::Coarse,
            model: ModelConfig::default(),
            stage1: RegressionConfig::default(),
            stage2: Stage2Config::default(),
            stage3: RegressionConfig::default(),
            data: DataConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.stage1.validate("stage1")?;
        self.stage3.validate("stage3")?;
        self.stage2.validate()?;
        let s = self.data.split;
        if s.iter().any(|r| !(*r > 0.0)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("data.split {s:?} must be positive and sum to 1")));
        }
        if !(1.0..=7.0).contains(&self.ablation.unlabeled_label) {
            return Err(Error::Parameter("ablation.unlabeled_label outside [1, 7]".into()));
        }
        Ok(())
    }

    pub fn pairing(&self) -> Option<PairingSpec> {
        self.strategy.pairing().map(|p| self.stage2.pairing(p))
    }

    /// Human-readable row label: strategy plus any active ablations.
    pub fn run_label(&self) -> String {
        let mut label = self.strategy.as_str().to_string();
        if self.strategy == Strategy::Baseline {
            return label;
        }
        if !self.data.use_typical {
            label.push_str("-wo-typical");
        }
        if !self.data.use_unlabeled {
            label.push_str("-wo-unlabeled");
        }
        if self.stage2.lambda == 0.0 {
            label.push_str("-wo-var");
        }
        if self.ablation.skip_stage1 {
            label.push_str("-skip-stage1");
        }
        if self.ablation.skip_stage2 {
            label.push_str("-skip-stage2");
        }
        label
    }

    /// Applies a dotted-path override such as `stage1.huber_delta=-1`.
    ///
    /// The value is parsed as JSON when possible and as a string otherwise. The
    /// key must already exist in the schema.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("override `{assignment}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut tree = serde_json::to_value(&*self)?;
        let mut slot = &mut tree;
        for key in path.split('.') {
            slot = match slot {
                Value::Object(map) => map
                    .get_mut(key)
                    .ok_or_else(|| Error::Parameter(format!("unknown config key `{path}`")))?,
                _ => return Err(Error::Parameter(format!("unknown config key `{path}`"))),
            };
        }
        *slot = value;
        *self = serde_json::from_value(tree)
            .map_err(|e| Error::Parameter(format!("override `{assignment}`: {e}")))?;
        Ok(())
    }
}

/// Deterministic sub-seed for a named random stream.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    // FNV-1a over the stream name, then a splitmix64 finaliser
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_experimental_setup() {
        let c = RunConfig::default();
        assert_eq!(c.stage1.lr, 1e-4);
        assert_eq!(c.stage1.batch_size, 32);
        assert_eq!(c.stage1.epochs, 10);
        assert_eq!(c.stage1.huber_delta, 0.5);
        assert_eq!(c.model.dropout, 0.1);
        assert_eq!(c.model.hidden_dim, 320);
        assert_eq!(c.model.proj_dim, 128);
        assert_eq!(c.stage2.lr, 1e-3);
        assert_eq!(c.stage2.weight_decay, 1e-5);
        assert_eq!(c.stage2.epochs, 2);
        assert_eq!(c.stage2.gamma, 1.0);
        assert_eq!(c.stage2.lambda, 0.1);
        assert_eq!((c.stage2.alpha, c.stage2.beta), (0.5, 1.5));
        assert_eq!(c.stage2.augment, AugmentConfig::default());
        assert_eq!(c.stage3, c.stage1);
        assert!(!c.stage2.optimizer().decoupled);
        assert!(c.stage1.optimizer().decoupled);
        c.validate().unwrap();
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::default();
        c.apply_override("stage2.tau.coarse=50").unwrap();
        assert_eq!(c.stage2.tau.coarse, 50.0);
        c.apply_override("strategy=dis").unwrap();
        assert_eq!(c.strategy, Strategy::Dis);
        c.apply_override("stage2.typical_fraction=0.25").unwrap();
        assert_eq!(c.stage2.typical_fraction, Some(0.25));

        let err = c.apply_override("stage1.nope=1").unwrap_err();
        assert!(err.to_string().contains("stage1.nope"));
        assert!(c.apply_override("strategy=bogus").is_err());
        assert!(c.apply_override("seed").is_err());

        c.apply_override("stage1.huber_delta=-1").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_fields_rejected_in_files() {
        let r: std::result::Result<RunConfig, _> = serde_json::from_str(r#"{"stage1": {"lrr": 1}}"#);
        assert!(r.is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 3, "stage2": {"lambda": 0}}"#).unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.stage2.lambda, 0.0);
        assert_eq!(partial.stage2.gamma, 1.0);
    }

    #[test]
    fn labels_distinguish_ablations() {
        let mut c = RunConfig::default();
        assert_eq!(c.run_label(), "coarse");
        c.data.use_typical = false;
        c.stage2.lambda = 0.0;
        assert_eq!(c.run_label(), "coarse-wo-typical-wo-var");
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_eq!(derive_seed(7, "stage1.init"), derive_seed(7, "stage1.init"));
    }
}
