use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::trace::{ModelTraceStore, TraceKey};
use crate::error::{Error, Result};
use crate::fl::select_clients;
use crate::rng;

/// Shape of a synthetic single-period trace population: benign footprints
/// uniform in `[0.8, 1.2] * d0`, malicious ones uniform in
/// `malicious_footprint * d0`, every centroid drawn from the same Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub clients: usize,
    pub malicious: usize,
    pub per_round: usize,
    pub rounds: usize,
    pub d0: f64,
    /// Per-coordinate centroid standard deviation, as a multiple of `d0`.
    pub centroid_spread: f64,
    pub malicious_footprint: (f64, f64),
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            clients: 20,
            malicious: 4,
            per_round: 5,
            rounds: 80,
            d0: 5.0,
            centroid_spread: 0.3,
            malicious_footprint: (0.1, 0.3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPopulation {
    pub store: ModelTraceStore,
    pub malicious: Vec<usize>,
}

pub fn synthetic_population(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticPopulation> {
    if spec.malicious > spec.clients || spec.per_round == 0 || spec.per_round > spec.clients || spec.rounds == 0 {
        return Err(Error::precondition("inconsistent synthetic population spec"));
    }
    let (lo, hi) = spec.malicious_footprint;
    if !(0.0 <= lo && lo <= hi && spec.d0 > 0.0 && spec.centroid_spread >= 0.0) {
        return Err(Error::precondition("synthetic footprints must satisfy 0 <= lo <= hi and d0 > 0"));
    }
    let mut r = rng::stream(seed, "synthetic-population", &[]);
    let mut malicious = rand::seq::index::sample(&mut r, spec.clients, spec.malicious).into_vec();
    malicious.sort_unstable();
    let spread = Normal::new(0.0, spec.centroid_spread * spec.d0).expect("spread >= 0");
    let mut profile = |bad: bool| {
        let c = [spread.sample(&mut r), spread.sample(&mut r)];
        let f = if bad {
            spec.d0 * r.random_range(lo..=hi)
        } else {
            spec.d0 * r.random_range(0.8..=1.2)
        };
        (c, f)
    };
    let server = profile(false);
    let server = (server.0, spec.d0);
    let clients: Vec<_> = (0..spec.clients).map(|i| profile(malicious.contains(&i))).collect();
    let mut store = ModelTraceStore::new(spec.rounds)?;
    let mut angles = rng::stream(seed, "synthetic-angles", &[]);
    let mut point = |(c, f): ([f64; 2], f64)| {
        let a = angles.random_range(0.0..std::f64::consts::TAU);
        [c[0] + f * a.cos(), c[1] + f * a.sin()]
    };
    for t in 0..spec.rounds {
        let sel = select_clients(spec.clients, spec.per_round, &mut rng::stream(seed, "synthetic-select", &[t as u64]))?;
        store.record(t, TraceKey::Server, Some(point(server)))?;
        for (i, &prof) in clients.iter().enumerate() {
            let p = sel.contains(&i).then(|| point(prof));
            store.record(t, TraceKey::Client(i), p)?;
        }
    }
    Ok(SyntheticPopulation { store, malicious })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcd::{detect_period, McdConfig};

    #[test]
    fn population_shape() {
        let pop = synthetic_population(&SyntheticSpec::default(), 1).unwrap();
        assert_eq!(pop.malicious.len(), 4);
        assert_eq!(pop.store.clients(0).len(), 20);
        assert_eq!(pop.store.trace(0, TraceKey::Server).unwrap().len(), 80);
        let report = detect_period(&pop.store, 0, &McdConfig::default(), None).unwrap();
        assert_eq!(report.scores.len(), 20);
    }
}
