//! Experiment configuration: a TOML file with sections, plus dotted
//! `key=value` overrides applied before deserialisation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{EncodingConfig, FusionMode, DEFAULT_VALUE_PRECISION, DEFAULT_WEIGHT_PRECISION};
use crate::group_math::{gen_group, GroupParams};
use crate::tdsa::DpConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub encoding: EncodingSection,
    #[serde(default)]
    pub trainer: TrainerSpec,
    #[serde(default)]
    pub dp: Option<DpConfig>,
    #[serde(default)]
    pub dropout: Vec<DropoutEvent>,
    #[serde(default)]
    pub adversary: Option<AdversarySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_parties: usize,
    pub s_aggregators: usize,
    pub threshold_t: usize,
    /// Agreeing DK requests needed before a key is issued; defaults to `t`.
    #[serde(default)]
    pub trust_threshold: Option<usize>,
    pub max_rounds_q: u64,
    #[serde(default = "one")]
    pub local_epochs: usize,
    #[serde(default = "default_lambda")]
    pub lambda_bits: u32,
    #[serde(default)]
    pub seed: u64,
    /// Seed for group generation; the pinned 256-bit group is used when
    /// absent and `lambda_bits = 256`.
    #[serde(default)]
    pub group_seed: Option<u64>,
    #[serde(default = "default_fusion")]
    pub fusion_mode: FusionMode,
    /// Minimum updates an aggregator waits for before requesting a key.
    #[serde(default = "one")]
    pub party_quorum: usize,
}

fn one() -> usize {
    1
}

fn default_lambda() -> u32 {
    256
}

fn default_fusion() -> FusionMode {
    FusionMode::FedAvg
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingSection {
    pub value_precision: u32,
    pub weight_precision: u32,
    pub value_bound: f64,
}

impl Default for EncodingSection {
    fn default() -> Self {
        Self {
            value_precision: DEFAULT_VALUE_PRECISION,
            weight_precision: DEFAULT_WEIGHT_PRECISION,
            value_bound: 16.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    LinearRegression,
    LogisticRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    Iid,
    LabelSkew,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSpec {
    pub family: ModelFamily,
    pub features: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Distance between the two class means along a random direction.
    pub class_separation: f64,
    pub partition: PartitionMode,
    /// Dirichlet concentration for label-skew partitions.
    pub concentration: f64,
    pub data_seed: u64,
    /// CSV of features followed by the label; replaces the synthetic data.
    pub dataset_csv: Option<String>,
    /// Fraction of a CSV dataset held out for testing.
    pub test_fraction: f64,
}

impl Default for TrainerSpec {
    fn default() -> Self {
        Self {
            family: ModelFamily::LogisticRegression,
            features: 10,
            train_samples: 1000,
            test_samples: 500,
            learning_rate: 0.5,
            l2: 0.01,
            class_separation: 2.0,
            partition: PartitionMode::Iid,
            concentration: 1.0,
            data_seed: 7,
            dataset_csv: None,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityKind {
    Party,
    Aggregator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropPhase {
    /// Gone before any update arrives.
    BeforeReceipt,
    /// Receives the updates (and may obtain a key) but never sends a partial.
    AfterReceipt,
}

/// A party drop always means the party sits the round out; `phase` only
/// matters for aggregators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutEvent {
    pub round: u64,
    pub kind: EntityKind,
    pub id: u32,
    #[serde(default = "default_phase")]
    pub phase: DropPhase,
}

fn default_phase() -> DropPhase {
    DropPhase::BeforeReceipt
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    /// Requests a key that weights only `target_party`.
    Isolation,
    /// Re-sends `target_party`'s previous-round ciphertext.
    Replay,
    /// Corrupts the aggregated ciphertext in its partial.
    Tamper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub behavior: Behavior,
    pub round: u64,
    /// The malicious aggregator (isolation, tamper) or the aggregator whose
    /// inbound traffic is forged (replay).
    pub aggregator: u32,
    #[serde(default = "first_party")]
    pub target_party: u32,
}

fn first_party() -> u32 {
    1
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text`, applies `key.path=value` overrides, then validates.
    pub fn from_toml_with_overrides(
        text: &str,
        overrides: &[(String, String)],
    ) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn trust_threshold(&self) -> usize {
        self.experiment
            .trust_threshold
            .unwrap_or(self.experiment.threshold_t)
    }

    pub fn encoding_config(&self) -> Result<EncodingConfig, ConfigError> {
        let e = &self.encoding;
        EncodingConfig::new(
            e.value_precision,
            e.weight_precision,
            e.value_bound,
            self.experiment.n_parties,
        )
        .map_err(|err| ConfigError::Invalid(err.to_string()))
    }

    pub fn group(&self) -> Result<GroupParams, ConfigError> {
        let x = &self.experiment;
        match (x.lambda_bits, x.group_seed) {
            (256, None) => Ok(GroupParams::default_256()),
            (bits, seed) => gen_group(bits, Some(seed.unwrap_or(x.seed)))
                .map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let x = &self.experiment;
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if x.n_parties == 0 {
            return invalid("n_parties must be >= 1".into());
        }
        if x.threshold_t == 0 || x.threshold_t > x.s_aggregators {
            return invalid(format!(
                "threshold_t = {} must lie in [1, s_aggregators = {}]",
                x.threshold_t, x.s_aggregators
            ));
        }
        if x.max_rounds_q == 0 {
            return invalid("max_rounds_q must be >= 1".into());
        }
        let trust = self.trust_threshold();
        if trust == 0 || trust > x.s_aggregators {
            return invalid(format!("trust_threshold = {trust} exceeds s_aggregators"));
        }
        if x.party_quorum == 0 || x.party_quorum > x.n_parties {
            return invalid("party_quorum must lie in [1, n_parties]".into());
        }
        if let FusionMode::Personalized(w) = &x.fusion_mode {
            if w.len() != x.n_parties {
                return invalid("personalized weights need one entry per party".into());
            }
        }
        let t = &self.trainer;
        if t.features == 0 || !(t.learning_rate > 0.0) || t.l2 < 0.0 {
            return invalid("trainer needs features >= 1, learning_rate > 0, l2 >= 0".into());
        }
        if t.dataset_csv.is_none() && t.train_samples < x.n_parties {
            return invalid("fewer training samples than parties".into());
        }
        if !(t.concentration > 0.0) {
            return invalid("concentration must be positive".into());
        }
        for d in &self.dropout {
            let max = match d.kind {
                EntityKind::Party => x.n_parties,
                EntityKind::Aggregator => x.s_aggregators,
            };
            if d.id == 0 || d.id as usize > max || d.round == 0 {
                return invalid(format!("dropout entry {d:?} is out of range"));
            }
        }
        if let Some(a) = &self.adversary {
            if a.aggregator == 0 || a.aggregator as usize > x.s_aggregators {
                return invalid(format!(
                    "adversary aggregator {} out of range",
                    a.aggregator
                ));
            }
            if a.target_party == 0 || a.target_party as usize > x.n_parties {
                return invalid(format!(
                    "adversary target party {} out of range",
                    a.target_party
                ));
            }
        }
        let enc = self.encoding_config()?;
        if x.lambda_bits == 256 && x.group_seed.is_none() {
            enc.check_group(&GroupParams::default_256())
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        } else if u64::from(x.lambda_bits) <= 64 - enc.dlog_bound.leading_zeros() as u64 + 1 {
            return invalid(format!(
                "a {}-bit group cannot hold dlog bound {}",
                x.lambda_bits, enc.dlog_bound
            ));
        }
        Ok(())
    }
}

/// Sets `a.b.c = value`, creating tables on the way. The value is read as a
/// TOML literal when it parses as one and as a bare string otherwise.
fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Parse(format!("bad override key {key:?}")));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, path) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Parse(format!("override {key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses `key=value`.
pub fn parse_override(arg: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| ConfigError::Parse(format!("override {arg:?} is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
