//! Period-end detection inside the round loop. The configured detector's flags
//! exclude clients; the others, when compared, only observe the same records.

use std::collections::BTreeMap;

use serde::Serialize;

use super::config::{DefenseKind, DefenseSpec};
use crate::error::{Error, Result};
use crate::fl::{PeriodObserver, PeriodRecord};
use crate::mcd::{
    angle_deviation_defense, cosine_pairs_defense, detect_period, kmeans2_defense, metric_pair,
    pca_outlier_defense, reduce_period, BaselineFlags, DetectionReport, ModelTraceStore, TraceKey,
};
use crate::rng;
use crate::stealth::Point;

#[derive(Debug, Clone, Serialize)]
pub struct PeriodDetections {
    pub period: usize,
    pub first_round: usize,
    pub last_round: usize,
    pub mcd: Option<DetectionReport>,
    /// Flags of every detector that ran, keyed by detector name.
    pub flags: BTreeMap<String, BaselineFlags>,
    /// Detectors that could not run this period, with the reason.
    pub skipped: BTreeMap<String, String>,
    /// Clients the active detector removed from aggregation.
    pub excluded_now: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionLog {
    pub active: String,
    pub period_len: usize,
    pub periods: Vec<PeriodDetections>,
}

impl DetectionLog {
    /// Every client a detector flagged in any period.
    pub fn flagged_by(&self, detector: DefenseKind) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .periods
            .iter()
            .filter_map(|p| p.flags.get(detector.name()))
            .flat_map(|f| f.flagged.iter().copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

pub(crate) struct DefenseObserver {
    spec: DefenseSpec,
    num_clients: usize,
    seed: u64,
    pub store: ModelTraceStore,
    pub log: DetectionLog,
}

impl DefenseObserver {
    pub fn new(spec: &DefenseSpec, num_clients: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            store: ModelTraceStore::new(spec.mcd.period)?,
            log: DetectionLog {
                active: spec.kind.name().to_string(),
                period_len: spec.mcd.period,
                periods: Vec::new(),
            },
            spec: spec.clone(),
            num_clients,
            seed,
        })
    }

    fn detectors(&self) -> Vec<DefenseKind> {
        if self.spec.compare {
            DefenseKind::DETECTORS.to_vec()
        } else {
            vec![self.spec.kind]
        }
    }
}

/// Per-client mean of `upload - global` over the rounds it was selected.
fn mean_updates(record: &PeriodRecord, trusted: &[usize]) -> Vec<(usize, Vec<f64>)> {
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for r in &record.rounds {
        let g = r.global.values();
        for (id, m) in &r.uploads {
            if !trusted.contains(id) {
                continue;
            }
            let (acc, n) = sums.entry(*id).or_insert_with(|| (vec![0.0; g.len()], 0));
            for ((a, v), g) in acc.iter_mut().zip(m.values()).zip(g) {
                *a += v - g;
            }
            *n += 1;
        }
    }
    sums.into_iter()
        .map(|(id, (acc, n))| (id, acc.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

impl PeriodObserver for DefenseObserver {
    fn period_len(&self) -> usize {
        self.spec.mcd.period
    }

    fn end_of_period(&mut self, record: &PeriodRecord, trusted: &[bool]) -> Result<Vec<usize>> {
        let (Some(first), Some(last)) = (record.rounds.first(), record.rounds.last()) else {
            return Ok(Vec::new());
        };
        let (first_round, last_round) = (first.round, last.round);
        reduce_period(record, self.num_clients, &mut self.store)?;
        let period = self.store.period_of(first_round);
        let ids: Vec<usize> = (0..self.num_clients).filter(|&i| trusted[i]).collect();
        let mut entry = PeriodDetections {
            period,
            first_round,
            last_round,
            mcd: None,
            flags: BTreeMap::new(),
            skipped: BTreeMap::new(),
            excluded_now: Vec::new(),
        };
        // Per-client centroids in the shared period embedding feed the 2-D detectors.
        let centroids: Vec<(usize, Point)> = ids
            .iter()
            .filter_map(|&id| {
                let t = self.store.trace(period, TraceKey::Client(id))?;
                Some((id, metric_pair(&t)?.centroid))
            })
            .collect();
        let updates = mean_updates(record, &ids);
        for kind in self.detectors() {
            let outcome = match kind {
                DefenseKind::None => continue,
                DefenseKind::Mcd => detect_period(&self.store, period, &self.spec.mcd, Some(&ids)).map(|rep| {
                    let flags = BaselineFlags {
                        flagged: rep.flagged.clone(),
                        excluded: rep.skipped.clone(),
                    };
                    entry.mcd = Some(rep);
                    flags
                }),
                DefenseKind::PcaOutlier => pca_outlier_defense(&centroids, self.spec.z_thresh),
                DefenseKind::CosinePairs => cosine_pairs_defense(&updates),
                DefenseKind::AngleDeviation => angle_deviation_defense(&updates),
                DefenseKind::Kmeans2 => kmeans2_defense(&centroids, rng::derive_seed(self.seed, "kmeans2", &[period as u64])),
            };
            match outcome {
                Ok(f) => {
                    entry.flags.insert(kind.name().to_string(), f);
                }
                // Too few clients with traces is a property of the period, not a failure.
                Err(Error::Precondition(why)) => {
                    entry.skipped.insert(kind.name().to_string(), why);
                }
                Err(e) => return Err(e),
            }
        }
        entry.excluded_now = entry
            .flags
            .get(self.spec.kind.name())
            .map(|f| f.flagged.clone())
            .unwrap_or_default();
        let out = entry.excluded_now.clone();
        self.log.periods.push(entry);
        Ok(out)
    }
}
