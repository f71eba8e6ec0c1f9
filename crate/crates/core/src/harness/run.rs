use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use super::config::{DefenseKind, Deployment, ExperimentConfig};
use super::data::load_data;
use super::defense::{DefenseObserver, DetectionLog};
use crate::data::{partition, Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::fl::{apply_attack, probe_all_clients, run_federated, AttackTag, ClientState, FlConfig, MetricsLog};
use crate::mcd::ModelTraceStore;
use crate::nn::{write_param_vector, ParamVector};
use crate::rng;
use crate::stealth::{effectiveness, pca_2d, stealthiness, write_points_csv, LabeledPoint, Point};
use crate::vaguegan::{
    generate_poisoned_seeded, train_unsupervised_checkpoints, train_vaguegan_checkpoints, GanConfig,
};

/// Environment variable that replaces the root relative output directories resolve against.
pub const OUTPUT_ROOT_ENV: &str = "FEDPOISON_OUTPUT_ROOT";

/// Human-readable statement of the averaging conventions, echoed in manifests.
pub const CONVENTIONS: &str = "accuracy_tail and A average the last `report.tail` rounds of one run; \
seed averaging is left to sweeps; S is measured on the final-round probe models of all clients";

/// Clean clients, held-out data and the planted malicious ids.
#[derive(Debug, Clone)]
pub struct Population {
    pub clients: Vec<ClientState>,
    pub test: Dataset,
    pub server: Option<Dataset>,
    pub malicious: Vec<usize>,
    pub config: ExperimentConfig,
}

/// The FL settings the harness hands to the round loop.
pub fn fl_config(cfg: &ExperimentConfig) -> FlConfig {
    FlConfig {
        seed: rng::derive_seed(cfg.seed, "fl", &[]),
        ..cfg.fl.clone()
    }
}

fn attack_seed(master: u64, id: usize) -> u64 {
    rng::derive_seed(master, "attack", &[id as u64])
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Population> {
    cfg.validate()?;
    let data = load_data(&cfg.dataset, cfg.seed)?;
    let n = cfg.fl.clients;
    let plan = PartitionPlan {
        mode: cfg.partition.to_mode(),
        clients: n,
        seed: rng::derive_seed(cfg.seed, "partition", &[]),
    };
    let shards = partition(&data.pool, &plan)?;
    let m = cfg.malicious_count()?;
    let mut malicious = rand::seq::index::sample(&mut rng::stream(cfg.seed, "malicious", &[]), n, m).into_vec();
    malicious.sort_unstable();
    let clients = shards.into_iter().enumerate().map(|(i, s)| ClientState::benign(i, s)).collect();
    let mut config = cfg.clone();
    config.dataset = data.resolved;
    Ok(Population {
        clients,
        test: data.test,
        server: data.server,
        malicious,
        config,
    })
}

fn gan_for(cfg: &ExperimentConfig, seed: u64, epochs: usize) -> GanConfig {
    let mut g = cfg.gan.clone();
    g.seed = seed;
    g.epochs = epochs;
    if cfg.attack.kind == AttackTag::VagueGanUnsupervised {
        g.code.get_or_insert_with(Default::default);
    }
    g
}

fn train_checkpoints(cfg: &ExperimentConfig, ds: &Dataset, seed: u64, epochs: &[usize]) -> Result<Vec<crate::vaguegan::GanModel>> {
    let max = *epochs.last().expect("nonempty checkpoint list");
    let g = gan_for(cfg, seed, max);
    g.validate(false).map_err(|e| Error::config("gan", e.to_string()))?;
    match cfg.attack.kind {
        AttackTag::VagueGanUnsupervised => train_unsupervised_checkpoints(ds, &g, epochs),
        _ => train_vaguegan_checkpoints(ds, &g, epochs),
    }
}

/// Poisoned client lists for each GAN epoch budget in `epochs` (strictly increasing).
/// One GAN per malicious client (distributed) or one on their pooled shards (centralized).
pub fn gan_poisoned(pop: &Population, epochs: &[usize]) -> Result<Vec<Vec<ClientState>>> {
    let cfg = &pop.config;
    if !matches!(cfg.attack.kind, AttackTag::VagueGan | AttackTag::VagueGanUnsupervised) {
        return Err(Error::config("attack.kind", "epoch checkpoints need a VagueGAN attack"));
    }
    if epochs.is_empty() || epochs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("gan.epochs", "checkpoints must be strictly increasing and nonempty"));
    }
    let mut out: Vec<Vec<ClientState>> = vec![pop.clients.clone(); epochs.len()];
    let mark = |set: &mut Vec<ClientState>, id: usize, ds: Dataset| -> Result<()> {
        set[id] = ClientState::malicious(id, ds, cfg.attack.kind)?;
        Ok(())
    };
    match cfg.attack.deployment {
        Deployment::Distributed => {
            for &id in &pop.malicious {
                let ds = &pop.clients[id].dataset;
                let seed = attack_seed(cfg.seed, id);
                let models = train_checkpoints(cfg, ds, seed, epochs).map_err(|e| e.for_client(id))?;
                for (set, gan) in out.iter_mut().zip(&models) {
                    mark(set, id, generate_poisoned_seeded(gan, ds, seed).map_err(|e| e.for_client(id))?)?;
                }
            }
        }
        Deployment::Centralized => {
            let mut pooled = Dataset::empty(pop.test.feature_dim(), pop.test.num_classes);
            pooled.image_shape = pop.test.image_shape;
            for &id in &pop.malicious {
                pooled = pooled.concat(&pop.clients[id].dataset)?;
            }
            let models = train_checkpoints(cfg, &pooled, rng::derive_seed(cfg.seed, "attack-central", &[]), epochs)?;
            for (set, gan) in out.iter_mut().zip(&models) {
                for &id in &pop.malicious {
                    let ds = &pop.clients[id].dataset;
                    mark(set, id, generate_poisoned_seeded(gan, ds, attack_seed(cfg.seed, id))?)?;
                }
            }
        }
    }
    Ok(out)
}

/// Clients after the configured attack has poisoned the malicious shards.
pub fn poisoned_clients(pop: &Population) -> Result<Vec<ClientState>> {
    let cfg = &pop.config;
    match cfg.attack.kind {
        AttackTag::None => Ok(pop.clients.clone()),
        AttackTag::VagueGan | AttackTag::VagueGanUnsupervised => {
            Ok(gan_poisoned(pop, &[cfg.gan.epochs])?.pop().expect("one checkpoint"))
        }
        kind => {
            if cfg.attack.deployment == Deployment::Centralized {
                return Err(Error::config("attack.deployment", format!("centralized deployment needs a VagueGAN attack, not {kind}")));
            }
            let mut out = pop.clients.clone();
            for &id in &pop.malicious {
                let c = ClientState::malicious(id, pop.clients[id].dataset.clone(), kind)?;
                out[id] = apply_attack(&c, Some(&cfg.gan), attack_seed(cfg.seed, id))?;
            }
            Ok(out)
        }
    }
}

/// Outcome of one federated run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub metrics: MetricsLog,
    pub global: ParamVector,
    pub excluded: Vec<usize>,
    pub detections: Option<DetectionLog>,
    pub traces: Option<ModelTraceStore>,
    /// Final-round probe embedding of every client.
    pub points: Vec<LabeledPoint>,
    pub stealthiness: Option<f64>,
}

pub fn simulate(pop: &Population, clients: &[ClientState], with_defense: bool) -> Result<Simulation> {
    let cfg = &pop.config;
    let fl = fl_config(cfg);
    let defended = with_defense && cfg.defense.kind != DefenseKind::None;
    let mut observer = if defended {
        Some(DefenseObserver::new(&cfg.defense, fl.clients, rng::derive_seed(cfg.seed, "defense", &[]))?)
    } else {
        None
    };
    let outcome = run_federated(
        &fl,
        clients,
        &pop.test,
        pop.server.as_ref(),
        observer.as_mut().map(|o| o as &mut dyn crate::fl::PeriodObserver),
    )?;
    let probes = probe_all_clients(&fl, clients, &outcome.global, fl.rounds)?;
    let d = probes[0].len();
    let mut x = Array2::zeros((probes.len(), d));
    for (mut row, p) in x.rows_mut().into_iter().zip(&probes) {
        row.assign(&ndarray::ArrayView1::from(p.values()));
    }
    let reduced = pca_2d(x.view())?;
    let points: Vec<LabeledPoint> = clients
        .iter()
        .zip(&reduced.points)
        .map(|(c, p)| LabeledPoint {
            client: c.id,
            round: fl.rounds,
            x: p[0],
            y: p[1],
            is_malicious: c.is_malicious,
        })
        .collect();
    let split = |mal: bool| -> Vec<Point> { points.iter().filter(|p| p.is_malicious == mal).map(|p| [p.x, p.y]).collect() };
    let poisoned = split(true);
    let stealth = if poisoned.is_empty() {
        None
    } else {
        Some(stealthiness(&split(false), &poisoned)?)
    };
    let (detections, traces) = match observer {
        Some(o) => (Some(o.log), Some(o.store)),
        None => (None, None),
    };
    Ok(Simulation {
        metrics: outcome.metrics,
        global: outcome.global.params,
        excluded: outcome.excluded,
        detections,
        traces,
        points,
        stealthiness: stealth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub malicious: Vec<usize>,
    pub accuracy_tail: f64,
    pub clean_accuracy_tail: Option<f64>,
    /// A: clean minus poisoned tail accuracy.
    pub effectiveness: Option<f64>,
    /// S at the final round; `null` when undefined or infinite.
    pub stealthiness: Option<f64>,
    /// Ids flagged by the active detector in any period.
    pub flagged: Vec<usize>,
    pub excluded: Vec<usize>,
    /// Fraction of the malicious clients each detector flagged.
    pub recall: BTreeMap<String, f64>,
    pub false_positives: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub poisoned: Simulation,
    pub clean: Option<Simulation>,
    pub summary: Summary,
}

/// Summary of a poisoned run against its clean counterpart.
pub fn summarize(pop: &Population, poisoned: &Simulation, clean: Option<&Simulation>) -> Summary {
    let tail = pop.config.report.tail;
    let acc = poisoned.metrics.tail_mean(tail);
    let clean_acc = clean.map(|c| c.metrics.tail_mean(tail));
    let mut recall = BTreeMap::new();
    let mut false_positives = BTreeMap::new();
    let mut flagged = Vec::new();
    if let Some(log) = &poisoned.detections {
        for kind in DefenseKind::DETECTORS {
            if !log.periods.iter().any(|p| p.flags.contains_key(kind.name())) {
                continue;
            }
            let ids = log.flagged_by(kind);
            let hits = ids.iter().filter(|i| pop.malicious.contains(i)).count();
            if !pop.malicious.is_empty() {
                recall.insert(kind.name().to_string(), hits as f64 / pop.malicious.len() as f64);
            }
            false_positives.insert(kind.name().to_string(), ids.len() - hits);
            if kind == pop.config.defense.kind {
                flagged = ids;
            }
        }
    }
    Summary {
        malicious: pop.malicious.clone(),
        accuracy_tail: acc,
        clean_accuracy_tail: clean_acc,
        effectiveness: clean_acc.map(|c| effectiveness(c, acc)),
        stealthiness: poisoned.stealthiness.filter(|s| s.is_finite()),
        flagged,
        excluded: poisoned.excluded.clone(),
        recall,
        false_positives,
    }
}

/// Run the configured experiment and, when an attack is set, its clean
/// counterpart (same seed and defense, no poisoning).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let pop = prepare(cfg)?;
    let clients = poisoned_clients(&pop)?;
    let poisoned = simulate(&pop, &clients, true)?;
    let clean = if pop.malicious.is_empty() {
        None
    } else {
        Some(simulate(&pop, &pop.clients, true)?)
    };
    let mut summary = summarize(&pop, &poisoned, clean.as_ref());
    if clean.is_none() {
        summary.clean_accuracy_tail = Some(summary.accuracy_tail);
        summary.effectiveness = Some(0.0);
    }
    Ok(RunOutput {
        config: pop.config,
        poisoned,
        clean,
        summary,
    })
}

/// Where a run writes: an explicit override, else `output_dir` placed under
/// the output-root variable when it is set.
pub fn resolve_output_dir(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if cfg.output_dir.is_relative() => Path::new(&root).join(&cfg.output_dir),
        Some(root) => Path::new(&root).join(cfg.output_dir.file_name().unwrap_or_default()),
        None => cfg.output_dir.clone(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    conventions: &'static str,
    files: Vec<&'static str>,
    summary: &'a Summary,
    config: &'a ExperimentConfig,
}

/// Write the result bundle and return the list of files written.
pub fn write_bundle(out: &RunOutput, dir: &Path) -> Result<Vec<&'static str>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec!["metrics.csv", "points.csv", "global.pvec"];
    let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let path = dir.join(name);
        let mut w = create(&path)?;
        f(&mut w)?;
        finish(w, &path)
    };
    write("metrics.csv", &|w| out.poisoned.metrics.write_csv(w))?;
    write("points.csv", &|w| write_points_csv(&out.poisoned.points, w))?;
    write("global.pvec", &|w| write_param_vector(&out.poisoned.global, w))?;
    if let Some(clean) = &out.clean {
        write("metrics_clean.csv", &|w| clean.metrics.write_csv(w))?;
        files.push("metrics_clean.csv");
    }
    if let Some(t) = &out.poisoned.traces {
        write("traces.csv", &|w| t.write_csv(w))?;
        files.push("traces.csv");
    }
    if let Some(d) = &out.poisoned.detections {
        write("detections.json", &|w| {
            serde_json::to_writer_pretty(&mut *w, d)?;
            w.write_all(b"\n").map_err(|e| Error::io(dir.join("detections.json"), e))
        })?;
        files.push("detections.json");
    }
    files.push("manifest.json");
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: out.config.seed,
        conventions: CONVENTIONS,
        files: files.clone(),
        summary: &out.summary,
        config: &out.config,
    };
    write("manifest.json", &|w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        w.write_all(b"\n").map_err(|e| Error::io(dir.join("manifest.json"), e))
    })?;
    Ok(files)
}
