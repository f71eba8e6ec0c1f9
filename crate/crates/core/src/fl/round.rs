use std::io::Write;

use super::train::{aggregate, evaluate, local_train, select_clients};
use super::{AttackTag, ClientState, FlConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{ArchSpec, Network, ParamVector};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub accuracy: f64,
    pub selected: Vec<usize>,
}

/// Per-round global accuracy of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub attack: AttackTag,
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    /// CSV with columns `round,accuracy,selected_ids,attack_tag`; ids are
    /// space-separated.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "accuracy", "selected_ids", "attack_tag"])?;
        for row in &self.rows {
            let ids: Vec<String> = row.selected.iter().map(usize::to_string).collect();
            w.write_record([
                row.round.to_string(),
                format!("{:.17e}", row.accuracy),
                ids.join(" "),
                self.attack.name().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("metrics csv", e))?;
        Ok(())
    }

    /// Mean accuracy over the last `window` rounds.
    pub fn tail_mean(&self, window: usize) -> f64 {
        let k = window.min(self.rows.len()).max(1);
        let tail = &self.rows[self.rows.len().saturating_sub(k)..];
        tail.iter().map(|r| r.accuracy).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Everything uploaded in one round, kept until the period closes.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    /// Global model broadcast at the start of the round.
    pub global: ParamVector,
    pub uploads: Vec<(usize, ParamVector)>,
    /// Server shadow model trained on its own clean shard; never aggregated.
    pub shadow: Option<ParamVector>,
}

#[derive(Debug, Clone)]
pub struct PeriodRecord {
    pub period: usize,
    pub rounds: Vec<RoundRecord>,
}

/// Defense hook called when a period closes; returns ids to stop aggregating.
pub trait PeriodObserver {
    /// Rounds per period.
    fn period_len(&self) -> usize;

    fn end_of_period(&mut self, record: &PeriodRecord, trusted: &[bool]) -> Result<Vec<usize>>;
}

pub struct FlOutcome {
    pub metrics: MetricsLog,
    pub global: Network,
    /// Ids excluded from aggregation, in the order they were flagged.
    pub excluded: Vec<usize>,
}

fn classifier(cfg: &FlConfig, test: &Dataset) -> Result<ArchSpec> {
    let mut dims = vec![test.feature_dim()];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(test.num_classes);
    ArchSpec::classifier(&dims)
}

pub fn initial_global(cfg: &FlConfig, test: &Dataset) -> Result<Network> {
    let arch = classifier(cfg, test)?;
    Ok(Network::new(ParamVector::glorot(arch, &mut rng::stream(cfg.seed, "global-init", &[]))))
}

/// The round loop: select K of N, train locally, FedAvg over trusted uploads
/// weighted by shard size, evaluate. Rounds are numbered from 0 and period
/// `f` covers rounds `f*T'..(f+1)*T'`.
pub fn run_federated(
    cfg: &FlConfig,
    clients: &[ClientState],
    test: &Dataset,
    server_shard: Option<&Dataset>,
    mut observer: Option<&mut dyn PeriodObserver>,
) -> Result<FlOutcome> {
    cfg.validate()?;
    if clients.len() != cfg.clients {
        return Err(Error::config(
            "fl.clients",
            format!("{} declared but {} client datasets supplied", cfg.clients, clients.len()),
        ));
    }
    if test.is_empty() {
        return Err(Error::precondition("federated run needs a nonempty test set"));
    }
    if server_shard.is_some_and(Dataset::is_empty) {
        return Err(Error::precondition("server shard is empty"));
    }
    let attack = clients
        .iter()
        .map(|c| c.attack)
        .find(|&a| a != AttackTag::None)
        .unwrap_or(AttackTag::None);
    let mut global = initial_global(cfg, test)?;
    let mut trusted = vec![true; cfg.clients];
    let mut excluded = Vec::new();
    let mut rows = Vec::with_capacity(cfg.rounds);
    let period_len = observer.as_ref().map_or(cfg.rounds, |o| o.period_len().max(1));
    let mut period = PeriodRecord {
        period: 0,
        rounds: Vec::new(),
    };
    for t in 0..cfg.rounds {
        let selected = select_clients(cfg.clients, cfg.per_round, &mut rng::stream(cfg.seed, "select", &[t as u64]))?;
        let mut uploads = Vec::with_capacity(selected.len());
        for &id in &selected {
            let mut r = rng::stream(cfg.seed, "local", &[id as u64, t as u64]);
            let local = local_train(&global, &clients[id].dataset, &cfg.local, &mut r).map_err(|e| e.for_client(id))?;
            uploads.push((id, local));
        }
        let shadow = match (server_shard, observer.is_some()) {
            (Some(shard), true) => {
                let mut r = rng::stream(cfg.seed, "shadow", &[t as u64]);
                Some(local_train(&global, shard, &cfg.local, &mut r)?.params)
            }
            _ => None,
        };
        let kept: Vec<&(usize, Network)> = uploads.iter().filter(|(id, _)| trusted[*id]).collect();
        let next = if kept.is_empty() {
            global.clone()
        } else {
            let models: Vec<&ParamVector> = kept.iter().map(|(_, n)| &n.params).collect();
            let weights: Vec<f64> = kept.iter().map(|(id, _)| clients[*id].dataset.len() as f64).collect();
            Network::new(aggregate(&models, &weights)?)
        };
        if observer.is_some() {
            period.rounds.push(RoundRecord {
                round: t,
                global: global.params.clone(),
                uploads: uploads.into_iter().map(|(id, n)| (id, n.params)).collect(),
                shadow,
            });
        }
        global = next;
        rows.push(MetricsRow {
            round: t,
            accuracy: evaluate(&global, test)?,
            selected,
        });
        let closes = (t + 1) % period_len == 0 || t + 1 == cfg.rounds;
        if let (true, Some(obs)) = (closes, observer.as_deref_mut()) {
            for id in obs.end_of_period(&period, &trusted)? {
                if id < trusted.len() && trusted[id] {
                    trusted[id] = false;
                    excluded.push(id);
                }
            }
            period = PeriodRecord {
                period: (t + 1) / period_len,
                rounds: Vec::new(),
            };
        }
    }
    Ok(FlOutcome {
        metrics: MetricsLog { attack, rows },
        global,
        excluded,
    })
}

/// Local models every client (selected or not) would upload from `global`;
/// instrumentation for attacker-side metrics, never aggregated.
pub fn probe_all_clients(
    cfg: &FlConfig,
    clients: &[ClientState],
    global: &Network,
    round: usize,
) -> Result<Vec<ParamVector>> {
    clients
        .iter()
        .map(|c| {
            let mut r = rng::stream(cfg.seed, "probe", &[c.id as u64, round as u64]);
            local_train(global, &c.dataset, &cfg.local, &mut r)
                .map(|n| n.params)
                .map_err(|e| e.for_client(c.id))
        })
        .collect()
}
