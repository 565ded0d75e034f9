//! Fixed-point bridge between float model updates / fusion weights and the
//! integer spaces of the scheme.
//!
//! Values are scaled by `10^pr`, weights by `10^prw`; after decryption the
//! combined scale `10^(pr + prw)` is divided out in one step.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group_math::{GroupParams, ScalarVector};
use crate::wire::{tag, Decode, Encode, FieldReader, FieldWriter, WireError};

pub const DEFAULT_VALUE_PRECISION: u32 = 4;
pub const DEFAULT_WEIGHT_PRECISION: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("coordinate {index} = {value} exceeds the value bound {bound}")]
    EncodingRange {
        index: usize,
        value: f64,
        bound: f64,
    },
    #[error("fusion weights are degenerate: {0}")]
    DegenerateWeights(String),
    #[error("invalid encoding config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub value_precision: u32,
    pub weight_precision: u32,
    pub value_bound: f64,
    /// Dlog search radius; always covers the largest possible aggregate.
    pub dlog_bound: u64,
}

impl EncodingConfig {
    /// Derives the dlog bound for `n_parties` with weights at most 1.
    pub fn new(
        value_precision: u32,
        weight_precision: u32,
        value_bound: f64,
        n_parties: usize,
    ) -> Result<Self, CodecError> {
        if value_precision < 1 {
            return Err(CodecError::InvalidConfig(
                "value precision must be >= 1".into(),
            ));
        }
        if !(value_bound.is_finite() && value_bound > 0.0) {
            return Err(CodecError::InvalidConfig(
                "value bound must be positive".into(),
            ));
        }
        if n_parties == 0 {
            return Err(CodecError::InvalidConfig("at least one party".into()));
        }
        let mut cfg = Self {
            value_precision,
            weight_precision,
            value_bound,
            dlog_bound: 0,
        };
        cfg.dlog_bound = cfg.required_bound(n_parties, 1.0)?;
        Ok(cfg)
    }

    pub fn value_scale(&self) -> f64 {
        10f64.powi(self.value_precision as i32)
    }

    pub fn weight_scale(&self) -> f64 {
        10f64.powi(self.weight_precision as i32)
    }

    /// `n * round(max_weight 10^prw) * round(value_bound 10^pr)`: no
    /// aggregate of encoded values with encoded weights can exceed it.
    pub fn required_bound(&self, n_parties: usize, max_weight: f64) -> Result<u64, CodecError> {
        let w = (max_weight * self.weight_scale()).round();
        let v = (self.value_bound * self.value_scale()).round();
        let b = n_parties as f64 * w * v;
        if !b.is_finite() || b >= (i64::MAX / 4) as f64 {
            return Err(CodecError::InvalidConfig(format!(
                "dlog bound {b:e} overflows the signed result range"
            )));
        }
        Ok(b as u64)
    }

    /// The group order must exceed the full symmetric search range.
    pub fn check_group(&self, group: &GroupParams) -> Result<(), CodecError> {
        if BigUint::from(self.dlog_bound) * 2u32 >= group.order_p {
            return Err(CodecError::InvalidConfig(format!(
                "dlog bound {} does not fit a {}-bit group",
                self.dlog_bound, group.lambda_bits
            )));
        }
        Ok(())
    }
}

/// `round(v 10^pr)` for one coordinate.
pub fn encode_value(value: f64, cfg: &EncodingConfig) -> i64 {
    (value * cfg.value_scale()).round() as i64
}

/// Entry-wise `round(v 10^pr)`, negatives represented as `p - |m|`.
pub fn encode_vector(
    values: &[f64],
    cfg: &EncodingConfig,
    group: &GroupParams,
) -> Result<ScalarVector, CodecError> {
    let ints = encode_integers(values, cfg)?;
    Ok(ScalarVector::from_i64s(&ints, group))
}

pub fn encode_integers(values: &[f64], cfg: &EncodingConfig) -> Result<Vec<i64>, CodecError> {
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if !value.is_finite() || value.abs() > cfg.value_bound {
                return Err(CodecError::EncodingRange {
                    index,
                    value,
                    bound: cfg.value_bound,
                });
            }
            Ok(encode_value(value, cfg))
        })
        .collect()
}

/// Removes both the value and weight scale from a decrypted aggregate.
pub fn decode_result(raw: i64, cfg: &EncodingConfig) -> f64 {
    raw as f64 / (cfg.value_scale() * cfg.weight_scale())
}

pub fn decode_vector(raw: &[i64], cfg: &EncodingConfig) -> Vec<f64> {
    raw.iter().map(|&r| decode_result(r, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    IterAvg,
    FedAvg,
    /// Caller-chosen per-party weights, renormalised over active parties.
    Personalized(Vec<f64>),
}

/// Fusion weights for one round, the unit checked by DK compliance.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSpec {
    /// One weight per party (1-based party `i` at index `i - 1`); zero for
    /// inactive parties.
    pub weights: Vec<f64>,
    pub scaled_weights: Vec<u64>,
    pub label: Vec<u8>,
    pub participant_mask: BTreeSet<u32>,
}

impl FusionSpec {
    pub fn n_parties(&self) -> usize {
        self.weights.len()
    }

    /// Compliance equality: same label, participants and integer weights.
    pub fn agrees_with(&self, other: &FusionSpec) -> bool {
        self.label == other.label
            && self.participant_mask == other.participant_mask
            && self.scaled_weights == other.scaled_weights
    }

    /// Scaled weights as the party-weight vector of the key.
    pub fn weight_scalars(&self, group: &GroupParams) -> ScalarVector {
        ScalarVector::new(
            self.scaled_weights
                .iter()
                .map(|&w| BigUint::from(w) % &group.order_p)
                .collect(),
        )
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    /// Builds a spec from explicit weights (already normalised).
    pub fn from_weights(
        weights: Vec<f64>,
        label: &[u8],
        cfg: &EncodingConfig,
    ) -> Result<Self, CodecError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CodecError::DegenerateWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        let participant_mask = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i as u32 + 1)
            .collect();
        let scaled_weights = weights
            .iter()
            .map(|w| (w * cfg.weight_scale()).round() as u64)
            .collect();
        Ok(Self {
            weights,
            scaled_weights,
            label: label.to_vec(),
            participant_mask,
        })
    }
}

/// Derives the round's fusion weights from the parties whose updates
/// arrived. `active` maps 1-based party id to its sample count. Absent
/// parties get weight zero and the rest are renormalised to sum to one.
pub fn make_fusion_spec(
    mode: &FusionMode,
    n_parties: usize,
    active: &BTreeMap<u32, u64>,
    label: &[u8],
    cfg: &EncodingConfig,
) -> Result<FusionSpec, CodecError> {
    if active.is_empty() {
        return Err(CodecError::DegenerateWeights("no active parties".into()));
    }
    if let Some(&bad) = active.keys().find(|&&i| i == 0 || i as usize > n_parties) {
        return Err(CodecError::DegenerateWeights(format!(
            "unknown party {bad}"
        )));
    }
    let mut raw = vec![0.0; n_parties];
    match mode {
        FusionMode::IterAvg => {
            for &i in active.keys() {
                raw[i as usize - 1] = 1.0;
            }
        }
        FusionMode::FedAvg => {
            for (&i, &count) in active {
                raw[i as usize - 1] = count as f64;
            }
        }
        FusionMode::Personalized(custom) => {
            if custom.len() != n_parties {
                return Err(CodecError::DegenerateWeights(format!(
                    "{} personalised weights for {n_parties} parties",
                    custom.len()
                )));
            }
            for &i in active.keys() {
                raw[i as usize - 1] = custom[i as usize - 1];
            }
        }
    }
    let total: f64 = raw.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(CodecError::DegenerateWeights(
            "weights of active parties sum to zero".into(),
        ));
    }
    let weights = raw.into_iter().map(|w| w / total).collect();
    let mut spec = FusionSpec::from_weights(weights, label, cfg)?;
    // a zero-sample party that did send an update is still a participant
    spec.participant_mask = active.keys().copied().collect();
    Ok(spec)
}

impl Encode for FusionSpec {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = FieldWriter::new();
        w.bytes(&self.label)
            .uint(self.weights.len() as u64)
            .uint(self.participant_mask.len() as u64);
        for &i in &self.participant_mask {
            w.uint(u64::from(i));
        }
        for &x in &self.weights {
            w.float(x);
        }
        for &x in &self.scaled_weights {
            w.uint(x);
        }
        w.finish(tag::FUSION_SPEC)
    }
}

impl Decode for FusionSpec {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::FUSION_SPEC)?;
        let label = r.bytes()?.to_vec();
        let n = r.count()?;
        let m = r.count()?;
        let participant_mask = (0..m).map(|_| r.index()).collect::<Result<_, _>>()?;
        let weights = (0..n).map(|_| r.float()).collect::<Result<_, _>>()?;
        let scaled_weights = (0..n).map(|_| r.uint()).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(Self {
            weights,
            scaled_weights,
            label,
            participant_mask,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_math::gen_group;
    use proptest::prelude::*;

    fn cfg() -> EncodingConfig {
        EncodingConfig::new(4, 4, 10.0, 5).unwrap()
    }

    #[test]
    fn encode_examples() {
        let group = gen_group(64, Some(1)).unwrap();
        let c = cfg();
        let v = encode_vector(&[0.0, 0.1234, -0.5], &c, &group).unwrap();
        assert_eq!(v.entries[0], BigUint::from(0u32));
        assert_eq!(v.entries[1], BigUint::from(1234u32));
        assert_eq!(v.entries[2], &group.order_p - 5000u32);
    }

    #[test]
    fn encode_rejects_out_of_bound() {
        let group = gen_group(64, Some(1)).unwrap();
        assert!(matches!(
            encode_vector(&[1.0, 10.5], &cfg(), &group),
            Err(CodecError::EncodingRange { index: 1, .. })
        ));
        assert!(encode_vector(&[f64::NAN], &cfg(), &group).is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_result(0, &cfg()), 0.0);
        let c = EncodingConfig::new(4, 0, 10.0, 1).unwrap();
        assert!((decode_result(12340, &c) - 1.234).abs() < 1e-12);
    }

    #[test]
    fn average_of_two_by_hand() {
        // 1.0 and 3.0 averaged with weight 0.5 each, pr = prw = 4:
        // 10000 * 5000 + 30000 * 5000 = 2e8, divided by 1e8
        let c = cfg();
        let spec = make_fusion_spec(
            &FusionMode::IterAvg,
            2,
            &BTreeMap::from([(1, 1), (2, 1)]),
            b"l",
            &c,
        )
        .unwrap();
        let raw: i64 = [1.0, 3.0]
            .iter()
            .zip(&spec.scaled_weights)
            .map(|(&x, &w)| encode_value(x, &c) * w as i64)
            .sum();
        assert_eq!(raw, 200_000_000);
        assert!((decode_result(raw, &c) - 2.0).abs() <= 2e-4);
    }

    #[test]
    fn dlog_bound_formula() {
        let c = cfg();
        assert_eq!(c.dlog_bound, 5 * 10_000 * 100_000);
        assert!(c.check_group(&gen_group(32, Some(1)).unwrap()).is_err());
        assert!(c.check_group(&gen_group(40, Some(1)).unwrap()).is_ok());
        assert!(EncodingConfig::new(0, 4, 1.0, 1).is_err());
    }

    #[test]
    fn iter_avg_weights() {
        let active = (1..=4).map(|i| (i, 10)).collect();
        let spec = make_fusion_spec(&FusionMode::IterAvg, 4, &active, b"l", &cfg()).unwrap();
        assert_eq!(spec.weights, vec![0.25; 4]);
        assert_eq!(spec.scaled_weights, vec![2500; 4]);
    }

    #[test]
    fn fedavg_weights() {
        let active = BTreeMap::from([(1, 100), (2, 300)]);
        let spec = make_fusion_spec(&FusionMode::FedAvg, 2, &active, b"l", &cfg()).unwrap();
        assert_eq!(spec.weights, vec![0.25, 0.75]);
    }

    #[test]
    fn dropped_party_is_excluded_and_rest_renormalised() {
        let active = (1..=4).map(|i| (i, 1)).collect();
        let spec = make_fusion_spec(&FusionMode::IterAvg, 5, &active, b"l", &cfg()).unwrap();
        assert_eq!(spec.weights, vec![0.25, 0.25, 0.25, 0.25, 0.0]);
        assert_eq!(spec.participant_mask, (1..=4).collect());
        assert_eq!(spec.scaled_weights[4], 0);
    }

    #[test]
    fn degenerate_weights_rejected() {
        let active = BTreeMap::from([(1, 0), (2, 0)]);
        assert!(matches!(
            make_fusion_spec(&FusionMode::FedAvg, 2, &active, b"l", &cfg()),
            Err(CodecError::DegenerateWeights(_))
        ));
        let active = BTreeMap::from([(3, 1)]);
        assert!(make_fusion_spec(&FusionMode::IterAvg, 2, &active, b"l", &cfg()).is_err());
        assert!(make_fusion_spec(&FusionMode::IterAvg, 2, &BTreeMap::new(), b"l", &cfg()).is_err());
    }

    #[test]
    fn personalized_weights_follow_caller() {
        let active = (1..=3).map(|i| (i, 1)).collect();
        let spec = make_fusion_spec(
            &FusionMode::Personalized(vec![2.0, 1.0, 1.0]),
            3,
            &active,
            b"l",
            &cfg(),
        )
        .unwrap();
        assert_eq!(spec.weights, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn fusion_spec_wire_round_trip() {
        let active = (1..=3).map(|i| (i, i as u64 * 7)).collect();
        let spec = make_fusion_spec(&FusionMode::FedAvg, 3, &active, b"round-2", &cfg()).unwrap();
        assert_eq!(FusionSpec::from_bytes(&spec.to_bytes()).unwrap(), spec);
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 10_000, ..ProptestConfig::default() })]

        #[test]
        fn encode_decode_round_trip(v in -10.0f64..=10.0, pr in 1u32..=6) {
            let c = EncodingConfig::new(pr, 0, 10.0, 1).unwrap();
            let back = decode_result(encode_value(v, &c), &c);
            prop_assert!((back - v).abs() <= 10f64.powi(-(pr as i32)));
        }
    }

    proptest! {
        #[test]
        fn uniform_scaled_weights_sum_close_to_scale(n in 1usize..=50, prw in 0u32..=6) {
            let c = EncodingConfig::new(4, prw, 1.0, n).unwrap();
            let active = (1..=n as u32).map(|i| (i, 1)).collect();
            let spec = make_fusion_spec(&FusionMode::IterAvg, n, &active, b"l", &c).unwrap();
            let sum: u64 = spec.scaled_weights.iter().sum();
            let scale = c.weight_scale();
            prop_assert!((sum as f64 - scale).abs() <= n as f64 / 2.0);
        }
    }
}
