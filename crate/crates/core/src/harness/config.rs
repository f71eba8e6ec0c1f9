//! Experiment configuration: a TOML document with strict keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::PartitionMode;
use crate::error::{Error, Result};
use crate::fl::{AttackTag, FlConfig};
use crate::mcd::McdConfig;
use crate::vaguegan::GanConfig;

/// Environment variable naming an MNIST directory (standard IDX file names).
pub const MNIST_DIR_ENV: &str = "FEDPOISON_MNIST_DIR";

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub partition: PartitionSpec,
    #[serde(default)]
    pub fl: FlConfig,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub gan: GanConfig,
    #[serde(default)]
    pub defense: DefenseSpec,
    #[serde(default)]
    pub report: ReportSpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Gaussian blobs (`classes`, `dim`, `separation`).
    Synthetic,
    /// Procedural 28x28 digit glyphs.
    Glyphs,
    /// MNIST from `dir` or the `FEDPOISON_MNIST_DIR` variable; falls back to
    /// glyphs when neither holds the four IDX files.
    Mnist,
    /// Explicit IDX files (`train_images`, `train_labels`, `test_images`, `test_labels`).
    Idx,
}

/// `[dataset]`: one flat table; only the keys of the chosen `kind` may appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DataKind,
    pub train: usize,
    pub test: usize,
    /// Extra samples held by the server for its shadow model; carved off
    /// beyond the client pool so the defense never perturbs client data.
    #[serde(default = "default_server_shard")]
    pub server_shard: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
}

fn default_server_shard() -> usize {
    100
}

impl DatasetSpec {
    fn normalize(&mut self) -> Result<()> {
        let mut allowed: Vec<&str> = Vec::new();
        match self.kind {
            DataKind::Synthetic => {
                self.classes.get_or_insert(10);
                self.dim.get_or_insert(16);
                self.separation.get_or_insert(1.0);
                allowed.extend(["classes", "dim", "separation"]);
            }
            DataKind::Glyphs => {}
            DataKind::Mnist => allowed.push("dir"),
            DataKind::Idx => allowed.extend(["classes", "train_images", "train_labels", "test_images", "test_labels"]),
        }
        let present = [
            ("classes", self.classes.is_some()),
            ("dim", self.dim.is_some()),
            ("separation", self.separation.is_some()),
            ("dir", self.dir.is_some()),
            ("train_images", self.train_images.is_some()),
            ("train_labels", self.train_labels.is_some()),
            ("test_images", self.test_images.is_some()),
            ("test_labels", self.test_labels.is_some()),
        ];
        for (key, set) in present {
            if set && !allowed.contains(&key) {
                return Err(Error::config(format!("dataset.{key}"), format!("not a key of {:?} datasets", self.kind)));
            }
        }
        Ok(())
    }

    /// IDX paths in the order train images, train labels, test images, test labels.
    pub fn idx_paths(&self) -> Option<[&Path; 4]> {
        Some([
            self.train_images.as_deref()?,
            self.train_labels.as_deref()?,
            self.test_images.as_deref()?,
            self.test_labels.as_deref()?,
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    #[default]
    Iid,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSpec {
    pub mode: PartitionKind,
    /// Dirichlet concentration; required for `dirichlet`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl PartitionSpec {
    pub fn to_mode(self) -> PartitionMode {
        match self.mode {
            PartitionKind::Iid => PartitionMode::Iid,
            PartitionKind::Dirichlet => PartitionMode::Dirichlet {
                beta: self.beta.unwrap_or(f64::NAN),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Deployment {
    /// Each malicious client trains its own GAN on its shard.
    #[default]
    Distributed,
    /// One GAN trained on the union of the malicious shards.
    Centralized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSpec {
    pub kind: AttackTag,
    /// α; `α * N` must be a whole number of clients.
    pub fraction: f64,
    pub deployment: Deployment,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            kind: AttackTag::None,
            fraction: 0.0,
            deployment: Deployment::Distributed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum DefenseKind {
    #[default]
    None,
    Mcd,
    PcaOutlier,
    CosinePairs,
    AngleDeviation,
    Kmeans2,
}

impl DefenseKind {
    pub const DETECTORS: [DefenseKind; 5] = [
        DefenseKind::Mcd,
        DefenseKind::PcaOutlier,
        DefenseKind::CosinePairs,
        DefenseKind::AngleDeviation,
        DefenseKind::Kmeans2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DefenseKind::None => "none",
            DefenseKind::Mcd => "mcd",
            DefenseKind::PcaOutlier => "pca_outlier",
            DefenseKind::CosinePairs => "cosine_pairs",
            DefenseKind::AngleDeviation => "angle_deviation",
            DefenseKind::Kmeans2 => "kmeans2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefenseSpec {
    pub kind: DefenseKind,
    /// Detection parameters; `mcd.period` (T') sets the period of every detector.
    pub mcd: McdConfig,
    /// Modified z-score cut of the PCA-outlier detector.
    pub z_thresh: f64,
    /// Also run every other detector passively on the same period records.
    pub compare: bool,
}

impl Default for DefenseSpec {
    fn default() -> Self {
        Self {
            kind: DefenseKind::None,
            mcd: McdConfig::default(),
            z_thresh: 3.5,
            compare: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSpec {
    /// Rounds averaged for the reported accuracy and A.
    pub tail: usize,
}

impl Default for ReportSpec {
    fn default() -> Self {
        Self { tail: 10 }
    }
}

impl ExperimentConfig {
    /// Parse and validate a TOML document.
    pub fn from_toml(source: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(source).map_err(|e| toml_error(source, &e))?;
        cfg.finish()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Read a TOML config, or the `config` object of a bundle manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::config("config", e.to_string()))?;
            let inner = doc
                .get("config")
                .cloned()
                .ok_or_else(|| Error::config("config", "manifest has no `config` object"))?;
            let cfg: Self =
                serde_json::from_value(inner).map_err(|e| Error::config("config", e.to_string()))?;
            cfg.finish()
        } else {
            Self::from_toml(&text)
        }
    }

    fn finish(mut self) -> Result<Self> {
        self.dataset.normalize()?;
        self.validate()?;
        Ok(self)
    }

    /// M, the number of malicious clients.
    pub fn malicious_count(&self) -> Result<usize> {
        let a = self.attack.fraction;
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::config("attack.fraction", format!("{a} outside [0, 1]")));
        }
        let m = a * self.fl.clients as f64;
        let rounded = m.round();
        if (m - rounded).abs() > 1e-9 {
            return Err(Error::config(
                "attack.fraction",
                format!("{a} of {} clients is {m}, not a whole number", self.fl.clients),
            ));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.fl.validate()?;
        let m = self.malicious_count()?;
        match (self.attack.kind, m) {
            (AttackTag::None, 0) => {}
            (AttackTag::None, _) => {
                return Err(Error::config("attack.fraction", "nonzero without an attack kind"))
            }
            (kind, 0) => {
                return Err(Error::config("attack.fraction", format!("attack {kind} needs at least one client")))
            }
            _ => {}
        }
        if self.attack.kind.needs_gan() {
            self.gan
                .validate(self.attack.kind == AttackTag::LabelFlipAugment)
                .map_err(|e| prefix_key(e, "gan"))?;
        }
        self.defense.mcd.validate().map_err(|e| prefix_key(e, "defense"))?;
        if !(self.defense.z_thresh > 0.0) {
            return Err(Error::config("defense.z_thresh", "must be positive"));
        }
        if self.defense.kind == DefenseKind::Mcd && self.dataset.server_shard == 0 {
            return Err(Error::config("dataset.server_shard", "MCD needs a server shard"));
        }
        if self.report.tail == 0 || self.report.tail > self.fl.rounds {
            return Err(Error::config("report.tail", format!("must lie in 1..={}", self.fl.rounds)));
        }
        let ds = &self.dataset;
        if ds.train < self.fl.clients {
            return Err(Error::config("dataset.train", "fewer samples than clients"));
        }
        if ds.test == 0 {
            return Err(Error::config("dataset.test", "must be at least 1"));
        }
        match (self.partition.mode, self.partition.beta) {
            (PartitionKind::Dirichlet, Some(b)) if b > 0.0 => {}
            (PartitionKind::Dirichlet, _) => return Err(Error::config("partition.beta", "dirichlet needs beta > 0")),
            (PartitionKind::Iid, Some(_)) => return Err(Error::config("partition.beta", "only used by dirichlet")),
            (PartitionKind::Iid, None) => {}
        }
        match ds.kind {
            DataKind::Synthetic => {
                let (classes, dim, sep) = (ds.classes.unwrap_or(10), ds.dim.unwrap_or(16), ds.separation.unwrap_or(1.0));
                if classes < 2 {
                    return Err(Error::config("dataset.classes", "need at least 2"));
                }
                if dim < classes {
                    return Err(Error::config("dataset.dim", "must be at least the class count"));
                }
                if !(sep > 0.0) {
                    return Err(Error::config("dataset.separation", "must be positive"));
                }
            }
            DataKind::Idx => {
                for (key, p) in [
                    ("dataset.train_images", &ds.train_images),
                    ("dataset.train_labels", &ds.train_labels),
                    ("dataset.test_images", &ds.test_images),
                    ("dataset.test_labels", &ds.test_labels),
                ] {
                    match p {
                        None => return Err(Error::config(key, "required for idx datasets")),
                        Some(p) if !p.is_file() => {
                            return Err(Error::config(key, format!("{} does not exist", p.display())))
                        }
                        Some(_) => {}
                    }
                }
            }
            DataKind::Glyphs | DataKind::Mnist => {}
        }
        Ok(())
    }
}

fn prefix_key(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { key, message } => Error::Config {
            key: format!("{prefix}.{key}"),
            message,
        },
        other => other,
    }
}

/// Turn a TOML error into a config error naming the dotted key it concerns.
fn toml_error(source: &str, e: &toml::de::Error) -> Error {
    let message = e.message().to_string();
    if let Some(name) = backticked(&message) {
        let table = e.span().map(|s| table_at(source, s.start)).unwrap_or_default();
        let key = if matches!(message.split_whitespace().next(), Some("unknown" | "missing")) && !table.is_empty() {
            format!("{table}.{name}")
        } else {
            name
        };
        return Error::config(key, message);
    }
    let key = e.span().map(|s| key_at(source, s.start)).unwrap_or_else(|| "<document>".into());
    Error::config(key, message)
}

fn backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    let name = &message[start..start + len];
    (!name.contains(' ')).then(|| name.to_string())
}

/// Innermost `[table]` header above byte `at`.
fn table_at(source: &str, at: usize) -> String {
    source[..at.min(source.len())]
        .lines()
        .rev()
        .find_map(|l| {
            let l = l.trim();
            (l.starts_with('[') && l.ends_with(']')).then(|| l.trim_matches(|c| c == '[' || c == ']').trim().to_string())
        })
        .unwrap_or_default()
}

/// Dotted key of the `key = value` line containing byte `at`.
fn key_at(source: &str, at: usize) -> String {
    let at = at.min(source.len());
    let line_start = source[..at].rfind('\n').map_or(0, |i| i + 1);
    let line = source[line_start..].lines().next().unwrap_or("");
    let key = line.split('=').next().unwrap_or("").trim();
    let table = table_at(source, line_start);
    match (table.is_empty(), key.is_empty() || key.starts_with('[')) {
        (_, true) if !table.is_empty() => table,
        (_, true) => "<document>".into(),
        (true, false) => key.to_string(),
        (false, false) => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[dataset]\nkind = \"synthetic\"\ntrain = 600\ntest = 100\n";

    fn key_of(src: &str) -> String {
        match ExperimentConfig::from_toml(src) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!((cfg.fl.clients, cfg.fl.per_round, cfg.fl.rounds), (60, 10, 200));
        assert_eq!(cfg.attack.kind, AttackTag::None);
        assert_eq!(cfg.defense.kind, DefenseKind::None);
        assert_eq!(cfg.malicious_count().unwrap(), 0);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn malicious_count_must_be_whole() {
        let with = |a: f64| format!("{MINIMAL}[attack]\nkind = \"label_flip\"\nfraction = {a}\n");
        assert_eq!(ExperimentConfig::from_toml(&with(0.05)).unwrap().malicious_count().unwrap(), 3);
        assert_eq!(key_of(&with(0.07)), "attack.fraction");
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(&format!("{MINIMAL}[fl]\nclientz = 3\n")), "fl.clientz");
        assert_eq!(key_of(&format!("{MINIMAL}[fl]\nclients = \"many\"\n")), "fl.clients");
        assert_eq!(key_of("seed = 1\n"), "dataset");
        assert_eq!(key_of(&format!("{MINIMAL}[fl]\nper_round = 70\n")), "fl.per_round");
        assert_eq!(
            key_of(&format!("{MINIMAL}[attack]\nkind = \"vague_gan\"\nfraction = 0.1\n[gan]\nkappa = 1.5\n")),
            "gan.kappa"
        );
        assert_eq!(key_of(&format!("{MINIMAL}[defense]\nkind = \"mcd\"\nmcd = {{ delta = 4.0 }}\n")), "defense.mcd.delta");
    }

    #[test]
    fn idx_files_must_exist() {
        let src = "[dataset]\nkind = \"idx\"\ntrain = 10\ntest = 5\ntrain_images = \"/nonexistent/a\"\n\
                   train_labels = \"/nonexistent/b\"\ntest_images = \"/nonexistent/c\"\ntest_labels = \"/nonexistent/d\"\n[fl]\nclients = 5\nper_round = 2\n";
        assert_eq!(key_of(src), "dataset.train_images");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn config() -> impl Strategy<Value = ExperimentConfig> {
            (
                any::<u64>(),
                (2usize..40, 1usize..10, 10usize..300),
                prop::sample::select(AttackTag::ALL.to_vec()),
                1usize..5,
                (0.01..0.99f64, 1usize..900),
                prop::sample::select(vec![
                    DefenseKind::None,
                    DefenseKind::Mcd,
                    DefenseKind::PcaOutlier,
                    DefenseKind::CosinePairs,
                    DefenseKind::AngleDeviation,
                    DefenseKind::Kmeans2,
                ]),
                prop::option::of(0.05..5.0f64),
            )
                .prop_map(|(seed, (n, k, t), attack, m, (kappa, epochs), defense, beta)| {
                    let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
                    cfg.seed = seed;
                    cfg.fl.clients = n;
                    cfg.fl.per_round = k.min(n);
                    cfg.fl.rounds = t;
                    cfg.attack.kind = attack;
                    let m = if attack == AttackTag::None { 0 } else { m.min(n) };
                    cfg.attack.fraction = m as f64 / n as f64;
                    cfg.gan.kappa = kappa;
                    cfg.gan.epochs = epochs;
                    cfg.defense.kind = defense;
                    if let Some(beta) = beta {
                        cfg.partition = PartitionSpec { mode: PartitionKind::Dirichlet, beta: Some(beta) };
                    }
                    cfg
                })
        }

        proptest! {
            #[test]
            fn toml_round_trip(cfg in config()) {
                let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
                prop_assert_eq!(back, cfg);
            }
        }
    }
}
