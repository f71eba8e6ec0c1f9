//! κ / E trade-off sweeps. Each seed shares one clean run; each (seed, κ)
//! trains its GANs once up to the largest E and poisons from checkpoints.

use std::io::Write;

use serde::Serialize;

use super::config::{DefenseKind, ExperimentConfig};
use super::run::{gan_poisoned, prepare, simulate, summarize};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub epochs: usize,
    pub seed: u64,
    /// A over the final `report.tail` rounds.
    pub a: f64,
    /// S at the final round (infinite when the clusters coincide).
    pub s: f64,
}

/// One row per (κ, E, seed), ordered by seed, then κ, then E. Defense is
/// disabled: every cell is an attack-only run.
pub fn sweep(cfg: &ExperimentConfig, kappas: &[f64], epochs: &[usize], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    if kappas.is_empty() || epochs.is_empty() || seeds.is_empty() {
        return Err(Error::config("sweep", "kappa, epoch and seed grids must be nonempty"));
    }
    let mut sorted = epochs.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut rows = Vec::new();
    for &seed in seeds {
        let mut base = cfg.clone();
        base.seed = seed;
        base.defense.kind = DefenseKind::None;
        let clean_pop = prepare(&base)?;
        let clean = simulate(&clean_pop, &clean_pop.clients, false)?;
        for &kappa in kappas {
            let mut c = base.clone();
            c.gan.kappa = kappa;
            c.gan.epochs = *sorted.last().expect("nonempty");
            c.validate()?;
            let pop = prepare(&c)?;
            let sets = gan_poisoned(&pop, &sorted)?;
            let mut cells = Vec::with_capacity(sorted.len());
            for (e, clients) in sorted.iter().zip(&sets) {
                let sim = simulate(&pop, clients, false)?;
                let s = summarize(&pop, &sim, Some(&clean));
                cells.push((*e, s.effectiveness.expect("clean run present"), sim.stealthiness.unwrap_or(f64::NAN)));
            }
            for &e in epochs {
                let (_, a, s) = cells.iter().find(|(ce, _, _)| *ce == e).copied().expect("checkpoint trained");
                rows.push(SweepRow { kappa, epochs: e, seed, a, s });
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kappa", "epochs", "seed", "A", "S"])?;
    for r in rows {
        w.write_record([
            format!("{:?}", r.kappa),
            r.epochs.to_string(),
            r.seed.to_string(),
            format!("{:.17e}", r.a),
            format!("{:.17e}", r.s),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sweep csv>", e))
}
