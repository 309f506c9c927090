//! Experiment configuration.
//!
//! Configs are TOML files (JSON is accepted too, chosen by extension):
//!
//! ```toml
//! seed = 7
//! rounds = 100
//! clients = 20
//! malicious_fraction = 0.2
//!
//! [setting]
//! kind = "cross-silo"            # or "cross-device" with `participation = 0.1`
//!
//! [data]
//! source = "blobs"               # or "csv" / "idx"
//! samples = 2000
//! classes = 10
//! dim = 20
//! spread = 1.0
//! test_fraction = 0.2
//!
//! [partition]
//! non_iid = 0.5                  # omit for an IID split
//!
//! [model]
//! kind = "mlp"
//! hidden = [32]
//!
//! [training]
//! learning_rate = 0.1
//! batch_size = 16
//! local_iterations = 1
//!
//! [server]
//! kind = "fed-avg"
//!
//! [attack]
//! kind = "xfed"
//! [attack.xfed]
//! lambda = 4.0
//! ```
//!
//! Relative data paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::{AggregatorConfig, AggregatorKind, ClipThreshold};
use crate::attacks::baselines::BaselineAttackConfig;
use crate::attacks::XfedConfig;
use crate::data::{self, Dataset, RootDatasetConfig};
use crate::defenses::DefenseKind;
use crate::error::{FedError, Result};
use crate::model::{ModelKind, ModelSpec, TrainingConfig};
use crate::stats::OutlierTestConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rounds: usize,
    /// Number of genuine clients `k`.
    pub clients: usize,
    /// Fraction `m` of malicious participants. For fake-client attacks this
    /// many fakes are added on top of the `k` genuine clients.
    #[serde(default)]
    pub malicious_fraction: f64,
    /// Overrides the fake-client count derived from `malicious_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fake_clients: Option<usize>,
    #[serde(default)]
    pub setting: Setting,
    pub data: DataSource,
    #[serde(default)]
    pub partition: PartitionSpec,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub server: ServerConfig,
    #[serde(default)]
    pub attack: AttackConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Setting {
    /// Every client participates in every round.
    #[default]
    CrossSilo,
    /// `ceil(participation * k)` clients are sampled per round.
    CrossDevice { participation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSource {
    Blobs {
        samples: usize,
        classes: usize,
        dim: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    /// Headered CSV with a `label` column. Without `test_path` the file is split.
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<usize>,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    /// IDX image/label pairs (MNIST layout).
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_images: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_labels: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<usize>,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_spread() -> f64 {
    1.0
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    /// Degree of non-IID `p`; `None` deals samples uniformly at random.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub non_iid: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden layer widths (MLP only).
    #[serde(default)]
    pub hidden: Vec<usize>,
}

impl ModelConfig {
    pub fn spec(&self, features: usize, classes: usize) -> Result<ModelSpec> {
        if self.kind == ModelKind::LogisticRegression && !self.hidden.is_empty() {
            return Err(FedError::config("model.hidden", "logistic regression has no hidden layers"));
        }
        let mut layers = vec![features];
        layers.extend(&self.hidden);
        layers.push(classes);
        ModelSpec::new(self.kind, layers)
    }
}

/// Either a stateless aggregation rule or a stateful defense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServerKind {
    FedAvg,
    Median,
    TrimmedMean,
    MultiKrum,
    ClippedClustering,
    SignGuard,
    Fltrust,
    Flame,
    Foolsgold,
    Freqfed,
}

impl ServerKind {
    pub fn aggregator(self) -> Option<AggregatorKind> {
        Some(match self {
            ServerKind::FedAvg => AggregatorKind::FedAvg,
            ServerKind::Median => AggregatorKind::Median,
            ServerKind::TrimmedMean => AggregatorKind::TrimmedMean,
            ServerKind::MultiKrum => AggregatorKind::MultiKrum,
            ServerKind::ClippedClustering => AggregatorKind::ClippedClustering,
            ServerKind::SignGuard => AggregatorKind::SignGuard,
            _ => return None,
        })
    }

    pub fn defense(self) -> Option<DefenseKind> {
        Some(match self {
            ServerKind::Fltrust => DefenseKind::Fltrust,
            ServerKind::Flame => DefenseKind::Flame,
            ServerKind::Foolsgold => DefenseKind::Foolsgold,
            ServerKind::Freqfed => DefenseKind::Freqfed,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ServerKind::FedAvg => "fed-avg",
            ServerKind::Median => "median",
            ServerKind::TrimmedMean => "trimmed-mean",
            ServerKind::MultiKrum => "multi-krum",
            ServerKind::ClippedClustering => "clipped-clustering",
            ServerKind::SignGuard => "sign-guard",
            ServerKind::Fltrust => "fltrust",
            ServerKind::Flame => "flame",
            ServerKind::Foolsgold => "foolsgold",
            ServerKind::Freqfed => "freqfed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub kind: ServerKind,
    /// Assumed compromised count `c`. Defaults to the number of malicious
    /// participants actually present in each round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compromised: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub krum_select: Option<usize>,
    #[serde(default = "default_clip")]
    pub clip: ClipThreshold,
    #[serde(default = "default_true")]
    pub sign_guard_norm_filter: bool,
    #[serde(default = "default_root_size")]
    pub root_size: usize,
    #[serde(default = "default_root_bias")]
    pub root_bias: f64,
    #[serde(default = "default_freq_cutoff")]
    pub freq_cutoff: f64,
    #[serde(default)]
    pub outlier: OutlierTestConfig,
}

fn default_clip() -> ClipThreshold {
    ClipThreshold::Adaptive
}

fn default_true() -> bool {
    true
}

fn default_root_size() -> usize {
    RootDatasetConfig::default().size
}

fn default_root_bias() -> f64 {
    RootDatasetConfig::default().bias
}

fn default_freq_cutoff() -> f64 {
    0.25
}

impl ServerConfig {
    pub fn new(kind: ServerKind) -> Self {
        ServerConfig {
            kind,
            compromised: None,
            krum_select: None,
            clip: default_clip(),
            sign_guard_norm_filter: true,
            root_size: default_root_size(),
            root_bias: default_root_bias(),
            freq_cutoff: default_freq_cutoff(),
            outlier: OutlierTestConfig::default(),
        }
    }

    /// Aggregator settings for a round with `compromised` assumed attackers.
    pub fn aggregator_config(&self, kind: AggregatorKind, compromised: usize) -> AggregatorConfig {
        AggregatorConfig {
            kind,
            compromised: self.compromised.unwrap_or(compromised),
            krum_select: self.krum_select,
            clip: self.clip,
            sign_guard_norm_filter: self.sign_guard_norm_filter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    #[default]
    None,
    Xfed,
    Lie,
    FangKrum,
    FangTrmean,
    MinMax,
    MinSum,
    Mpaf,
    Poisonedfl,
}

impl AttackKind {
    /// Attacks run by attacker-created clients that hold no data.
    pub fn uses_fake_clients(self) -> bool {
        matches!(self, AttackKind::Mpaf | AttackKind::Poisonedfl)
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Xfed => "xfed",
            AttackKind::Lie => "lie",
            AttackKind::FangKrum => "fang-krum",
            AttackKind::FangTrmean => "fang-trmean",
            AttackKind::MinMax => "min-max",
            AttackKind::MinSum => "min-sum",
            AttackKind::Mpaf => "mpaf",
            AttackKind::Poisonedfl => "poisonedfl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default)]
    pub kind: AttackKind,
    #[serde(default)]
    pub xfed: XfedConfig,
    #[serde(default)]
    pub baseline: BaselineAttackConfig,
}

impl AttackConfig {
    /// Display label, e.g. `xfed-uv` or `lie`.
    pub fn label(&self) -> String {
        match self.kind {
            AttackKind::Xfed => match self.xfed.perturbation {
                crate::attacks::PerturbationKind::InverseUnitVector => "xfed-uv".into(),
                crate::attacks::PerturbationKind::InverseSign => "xfed-sgn".into(),
            },
            k => k.name().into(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML (or `.json`) config and resolves relative data paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FedError::ingest(path, e.to_string()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| match e {
            FedError::Ingest { reason, .. } => FedError::ingest(path, reason),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.data.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FedError::ingest("<toml>", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FedError::ingest("<json>", e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FedError::Report(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes to JSON")
    }

    /// Range checks that do not need the data loaded.
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 10 {
            return Err(FedError::config("rounds", "need at least 10 rounds"));
        }
        if self.clients == 0 {
            return Err(FedError::config("clients", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.malicious_fraction) {
            return Err(FedError::config("malicious_fraction", "must lie in [0, 1)"));
        }
        if let Setting::CrossDevice { participation } = self.setting {
            if !(participation > 0.0 && participation <= 1.0) {
                return Err(FedError::config("setting.participation", "must lie in (0, 1]"));
            }
        }
        match &self.data {
            DataSource::Blobs { test_fraction, .. }
            | DataSource::Csv { test_fraction, .. }
            | DataSource::Idx { test_fraction, .. } => {
                if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                    return Err(FedError::config("data.test_fraction", "must lie in (0, 1)"));
                }
            }
        }
        if let Some(p) = self.partition.non_iid {
            if !(p > 0.0 && p <= 1.0) {
                return Err(FedError::config("partition.non_iid", "p must lie in (0, 1]"));
            }
        }
        if self.model.kind == ModelKind::LogisticRegression && !self.model.hidden.is_empty() {
            return Err(FedError::config("model.hidden", "logistic regression has no hidden layers"));
        }
        if self.model.hidden.contains(&0) {
            return Err(FedError::config("model.hidden", "layer widths must be positive"));
        }
        self.training.validate()?;
        let s = &self.server;
        if let ClipThreshold::Fixed(t) = s.clip {
            if !(t > 0.0 && t.is_finite()) {
                return Err(FedError::config("server.clip", "must be positive or \"adaptive\""));
            }
        }
        if !(s.freq_cutoff > 0.0 && s.freq_cutoff <= 1.0) {
            return Err(FedError::config("server.freq_cutoff", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&s.root_bias) {
            return Err(FedError::config("server.root_bias", "must lie in [0, 1)"));
        }
        if s.root_size == 0 {
            return Err(FedError::config("server.root_size", "must be positive"));
        }
        if !(s.outlier.threshold > 0.0 && s.outlier.consistency > 0.0) {
            return Err(FedError::config("server.outlier", "threshold and consistency must be positive"));
        }
        self.attack.xfed.validate()?;
        self.attack.baseline.validate()?;
        Ok(())
    }

    /// Number of compromised genuine clients, fixed for the run.
    pub fn malicious_count(&self) -> usize {
        if self.attack.kind.uses_fake_clients() {
            0
        } else {
            (self.malicious_fraction * self.clients as f64).floor() as usize
        }
    }

    /// Number of attacker-created clients (fake-client attacks only).
    pub fn fake_count(&self) -> usize {
        if !self.attack.kind.uses_fake_clients() {
            return 0;
        }
        self.fake_clients
            .unwrap_or_else(|| (self.malicious_fraction * self.clients as f64).floor() as usize)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes to JSON");
        hex_sha256(json.as_bytes())
    }

    /// Digest with the attack section reset, shared by a run and its
    /// no-attack baseline.
    pub fn base_digest(&self) -> String {
        let mut base = self.clone();
        base.attack = AttackConfig::default();
        base.digest()
    }

    /// The paired no-attack configuration.
    pub fn without_attack(&self) -> Self {
        let mut base = self.clone();
        base.attack = AttackConfig::default();
        base
    }
}

fn hex_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl DataSource {
    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        match self {
            DataSource::Blobs { .. } => {}
            DataSource::Csv { path, test_path, .. } => {
                fix(path);
                test_path.iter_mut().for_each(fix);
            }
            DataSource::Idx {
                images,
                labels,
                test_images,
                test_labels,
                ..
            } => {
                fix(images);
                fix(labels);
                test_images.iter_mut().for_each(fix);
                test_labels.iter_mut().for_each(fix);
            }
        }
    }

    /// Loads `(train, test)`. `seed` drives generation and the split.
    pub fn load(&self, seed: u64, split_seed: u64) -> Result<(Dataset, Dataset)> {
        match self {
            DataSource::Blobs {
                samples,
                classes,
                dim,
                spread,
                test_fraction,
            } => data::generate_blobs(*samples, *classes, *dim, *spread, seed)?.split(*test_fraction, split_seed),
            DataSource::Csv {
                path,
                test_path,
                classes,
                test_fraction,
            } => {
                let train = data::load_csv(path, *classes)?;
                match test_path {
                    Some(t) => {
                        let test = data::load_csv(t, Some(train.classes()))?;
                        check_compatible(&train, &test, t)?;
                        Ok((train, test))
                    }
                    None => train.split(*test_fraction, split_seed),
                }
            }
            DataSource::Idx {
                images,
                labels,
                test_images,
                test_labels,
                classes,
                test_fraction,
            } => {
                let train = data::load_idx(images, labels, *classes)?;
                match (test_images, test_labels) {
                    (Some(ti), Some(tl)) => {
                        let test = data::load_idx(ti, tl, Some(train.classes()))?;
                        check_compatible(&train, &test, ti)?;
                        Ok((train, test))
                    }
                    (None, None) => train.split(*test_fraction, split_seed),
                    _ => Err(FedError::config(
                        "data.test_images",
                        "test_images and test_labels must be given together",
                    )),
                }
            }
        }
    }
}

fn check_compatible(train: &Dataset, test: &Dataset, path: &Path) -> Result<()> {
    if train.dim() != test.dim() {
        return Err(FedError::ingest(
            path,
            format!("test set has {} features, training set {}", test.dim(), train.dim()),
        ));
    }
    Ok(())
}
