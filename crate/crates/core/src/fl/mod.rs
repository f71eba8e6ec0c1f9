//! Federated training: client selection, local SGD, weighted FedAvg, one-vs-rest
//! evaluation, and the once-before-training data poisoning of malicious clients.

mod attack;
mod round;
mod train;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub use attack::{apply_attack, AttackTag};
pub use round::{
    probe_all_clients, run_federated, FlOutcome, MetricsLog, MetricsRow, PeriodObserver,
    PeriodRecord, RoundRecord,
};
pub use train::{aggregate, evaluate, local_train, one_vs_rest_accuracy, select_clients};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalTrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for LocalTrainSpec {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 32,
            lr: 0.01,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlConfig {
    /// N
    pub clients: usize,
    /// K
    pub per_round: usize,
    /// T
    pub rounds: usize,
    pub local: LocalTrainSpec,
    /// Hidden widths of the ReLU/softmax classifier.
    pub hidden: Vec<usize>,
    /// Set by the caller from the run's seed tree, never read from config.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            clients: 60,
            per_round: 10,
            rounds: 200,
            local: LocalTrainSpec::default(),
            hidden: vec![64],
            seed: 0,
        }
    }
}

impl FlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::config("fl.clients", "must be at least 1"));
        }
        if self.per_round == 0 || self.per_round > self.clients {
            return Err(Error::config(
                "fl.per_round",
                format!("{} not in 1..={}", self.per_round, self.clients),
            ));
        }
        if self.rounds == 0 {
            return Err(Error::config("fl.rounds", "must be at least 1"));
        }
        if self.local.batch_size == 0 {
            return Err(Error::config("fl.local.batch_size", "must be at least 1"));
        }
        if !(self.local.lr > 0.0) {
            return Err(Error::config("fl.local.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.local.momentum) {
            return Err(Error::config("fl.local.momentum", "must lie in [0, 1)"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("fl.hidden", "widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    pub dataset: Dataset,
    pub is_malicious: bool,
    pub attack: AttackTag,
}

impl ClientState {
    pub fn benign(id: usize, dataset: Dataset) -> Self {
        Self {
            id,
            dataset,
            is_malicious: false,
            attack: AttackTag::None,
        }
    }

    pub fn malicious(id: usize, dataset: Dataset, attack: AttackTag) -> Result<Self> {
        if attack == AttackTag::None {
            return Err(Error::precondition("a malicious client needs an attack"));
        }
        Ok(Self {
            id,
            dataset,
            is_malicious: true,
            attack,
        })
    }
}
