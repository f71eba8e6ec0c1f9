use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionMode {
    Iid,
    /// Per-class client proportions drawn from a symmetric Dirichlet.
    Dirichlet { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub mode: PartitionMode,
    pub clients: usize,
    pub seed: u64,
}

/// Split `ds` into `plan.clients` disjoint shards that cover it.
pub fn partition(ds: &Dataset, plan: &PartitionPlan) -> Result<Vec<Dataset>> {
    let n_clients = plan.clients;
    if n_clients == 0 {
        return Err(Error::precondition("partition needs at least one client"));
    }
    if ds.len() < n_clients {
        return Err(Error::precondition(format!(
            "{} samples cannot cover {n_clients} clients",
            ds.len()
        )));
    }
    let shards = match plan.mode {
        PartitionMode::Iid => {
            let mut r = rng::stream(plan.seed, "partition-iid", &[]);
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut r);
            let base = ds.len() / n_clients;
            let extra = ds.len() % n_clients;
            let mut out = Vec::with_capacity(n_clients);
            let mut start = 0;
            for c in 0..n_clients {
                let size = base + usize::from(c < extra);
                let mut idx = order[start..start + size].to_vec();
                idx.sort_unstable();
                out.push(idx);
                start += size;
            }
            out
        }
        PartitionMode::Dirichlet { beta } => {
            if !(beta > 0.0) {
                return Err(Error::precondition(format!("dirichlet beta {beta} must be > 0")));
            }
            let mut attempt = 0;
            loop {
                let idx = dirichlet_split(ds, n_clients, beta, plan.seed, attempt);
                if idx.iter().all(|s| !s.is_empty()) {
                    break idx;
                }
                attempt += 1;
                if attempt >= MAX_ATTEMPTS {
                    return Err(Error::precondition(format!(
                        "dirichlet(beta={beta}) left a client empty after {MAX_ATTEMPTS} draws"
                    )));
                }
            }
        }
    };
    Ok(shards.iter().map(|idx| ds.subset(idx)).collect())
}

fn dirichlet_split(
    ds: &Dataset,
    n_clients: usize,
    beta: f64,
    seed: u64,
    attempt: u64,
) -> Vec<Vec<usize>> {
    let mut r = rng::stream(seed, "partition-dirichlet", &[attempt]);
    let gamma = Gamma::new(beta, 1.0).expect("beta > 0");
    let mut shards = vec![Vec::new(); n_clients];
    for class in 0..ds.num_classes {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut r);
        let draws: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut r)).collect();
        let total: f64 = draws.iter().sum();
        let m = members.len();
        let mut cum = 0.0;
        let mut start = 0;
        for (c, d) in draws.iter().enumerate() {
            cum += if total > 0.0 { d / total } else { 1.0 / n_clients as f64 };
            let end = if c + 1 == n_clients {
                m
            } else {
                ((cum * m as f64).round() as usize).clamp(start, m)
            };
            shards[c].extend_from_slice(&members[start..end]);
            start = end;
        }
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    shards
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    fn plan(mode: PartitionMode, clients: usize, seed: u64) -> PartitionPlan {
        PartitionPlan { mode, clients, seed }
    }

    #[test]
    fn single_iid_client_gets_everything() {
        let ds = gen_synthetic(3, 9, 30, 1.0, 1).unwrap();
        let shards = partition(&ds, &plan(PartitionMode::Iid, 1, 5)).unwrap();
        assert_eq!(shards, vec![ds]);
    }

    #[test]
    fn iid_shards_are_balanced() {
        let ds = gen_synthetic(4, 8, 400, 1.0, 2).unwrap();
        let global: Vec<f64> = ds.label_counts().iter().map(|&c| c as f64 / 400.0).collect();
        let seeds = 20;
        let mut mean_props = vec![vec![0.0; 4]; 4];
        for seed in 0..seeds {
            let shards = partition(&ds, &plan(PartitionMode::Iid, 4, seed)).unwrap();
            for (s, shard) in shards.iter().enumerate() {
                assert_eq!(shard.len(), 100);
                for (c, &count) in shard.label_counts().iter().enumerate() {
                    mean_props[s][c] += count as f64 / 100.0 / seeds as f64;
                }
            }
        }
        for props in &mean_props {
            for (p, g) in props.iter().zip(&global) {
                assert!((p - g).abs() <= 0.1 * g, "shard proportion {p} vs global {g}");
            }
        }
    }

    #[test]
    fn small_beta_means_lower_label_entropy() {
        let ds = gen_synthetic(10, 10, 1000, 1.0, 3).unwrap();
        let mean_entropy = |beta: f64| {
            let mut total = 0.0;
            for seed in 0..20 {
                let shards = partition(&ds, &plan(PartitionMode::Dirichlet { beta }, 10, seed)).unwrap();
                total += shards.iter().map(Dataset::label_entropy).sum::<f64>() / shards.len() as f64;
            }
            total / 20.0
        };
        assert!(mean_entropy(0.1) < mean_entropy(100.0));
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let ds = gen_synthetic(2, 4, 3, 1.0, 4).unwrap();
        assert!(partition(&ds, &plan(PartitionMode::Iid, 4, 0)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rows(ds: &Dataset) -> Vec<(Vec<u64>, usize)> {
            let mut v: Vec<_> = ds
                .features
                .rows()
                .into_iter()
                .zip(&ds.labels)
                .map(|(r, &l)| (r.iter().map(|x| x.to_bits()).collect(), l))
                .collect();
            v.sort();
            v
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn shards_cover_the_input_exactly(
                n in 20usize..200, clients in 1usize..12, seed in any::<u64>(),
                beta in prop::option::of(0.05..10.0f64),
            ) {
                let ds = gen_synthetic(4, 4, n, 1.0, seed).unwrap();
                let mode = beta.map_or(PartitionMode::Iid, |beta| PartitionMode::Dirichlet { beta });
                let Ok(shards) = partition(&ds, &plan(mode, clients, seed)) else {
                    // dirichlet draws may legitimately fail to give every client a sample
                    prop_assert!(beta.is_some());
                    return Ok(());
                };
                prop_assert_eq!(shards.len(), clients);
                let mut all = Dataset::empty(4, 4);
                for s in &shards {
                    prop_assert!(!s.is_empty());
                    all = all.concat(s).unwrap();
                }
                prop_assert_eq!(rows(&all), rows(&ds));
            }
        }
    }
}
