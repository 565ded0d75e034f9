//! Protocol roles on top of the scheme: parties protect their updates,
//! aggregators obtain a key share through DK compliance and partially
//! decrypt, parties recombine.
//!
//! Aggregators hold no channel to one another; everything they learn comes
//! from parties and the crypto infrastructure.

mod compliance;
mod envelope;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{
    decode_vector, encode_vector, make_fusion_spec, CodecError, EncodingConfig, FusionMode,
    FusionSpec,
};
use crate::group_math::{seeded_or_os_rng, DlogSolver};
use crate::tmcfe::{
    combine_decrypt_vector, encrypt, share_decrypt_vector, Ciphertext, PartySecretKey,
    PublicParams, TmcfeError, VectorKeyShare, VectorPartialDecryption,
};
use crate::wire::{tag, Decode, Encode, FieldReader, FieldWriter, WireError};

pub use compliance::{ComplianceState, CryptoInfrastructure, DkDecision, IssuedKey, RejectReason};
pub use envelope::{Envelope, MessageKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdsaError {
    #[error(transparent)]
    Tmcfe(#[from] TmcfeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("party {party} already used label {label}")]
    LabelReuse { party: u32, label: String },
    #[error("updates carry mixed labels")]
    LabelMismatch,
    #[error("two updates from party {0}")]
    DuplicateUpdate(u32),
    #[error("update length {got}, expected {expected}")]
    UpdateLength { got: usize, expected: usize },
}

/// Encryption label of one training round, optionally scoped to one party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoundLabel {
    pub round_index: u64,
    pub scope: Option<u32>,
}

impl RoundLabel {
    pub fn new(round_index: u64) -> Self {
        Self {
            round_index,
            scope: None,
        }
    }

    pub fn scoped(round_index: u64, party_id: u32) -> Self {
        Self {
            round_index,
            scope: Some(party_id),
        }
    }

    /// `tapfed/round/<k>` or `tapfed/round/<k>/party/<i>`, decimal without
    /// leading zeros, so distinct labels never share bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self.scope {
            None => format!("tapfed/round/{}", self.round_index),
            Some(p) => format!("tapfed/round/{}/party/{p}", self.round_index),
        }
        .into_bytes()
    }
}

impl std::fmt::Display for RoundLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.to_bytes()))
    }
}

// scope is written as a uint with 0 meaning unscoped; party ids start at 1
fn write_label(w: &mut FieldWriter, label: &RoundLabel) {
    w.uint(label.round_index)
        .uint(label.scope.map_or(0, u64::from));
}

fn read_label(r: &mut FieldReader<'_>) -> Result<RoundLabel, WireError> {
    let round_index = r.uint()?;
    let scope = match r.index()? {
        0 => None,
        p => Some(p),
    };
    Ok(RoundLabel { round_index, scope })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DkRequest {
    pub aggregator_id: u32,
    pub fusion: FusionSpec,
    pub label: RoundLabel,
}

impl Encode for DkRequest {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = FieldWriter::new();
        w.uint(u64::from(self.aggregator_id));
        write_label(&mut w, &self.label);
        w.nested(&self.fusion);
        w.finish(tag::DK_REQUEST)
    }
}

impl Decode for DkRequest {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::DK_REQUEST)?;
        let aggregator_id = r.index()?;
        let label = read_label(&mut r)?;
        let fusion = r.nested()?;
        r.finish()?;
        Ok(Self {
            aggregator_id,
            fusion,
            label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectedUpdate {
    pub party_id: u32,
    pub label: RoundLabel,
    pub ciphertext: Ciphertext,
    pub sample_count: u64,
    pub dp_applied: bool,
}

impl ProtectedUpdate {
    /// Encodes with every group element at least `element_width` bytes wide.
    pub fn to_bytes_padded(&self, element_width: usize) -> Vec<u8> {
        let mut w = FieldWriter::new();
        w.uint(u64::from(self.party_id));
        write_label(&mut w, &self.label);
        w.uint(self.sample_count)
            .uint(u64::from(self.dp_applied))
            .bytes(&self.ciphertext.to_bytes_padded(element_width));
        w.finish(tag::PROTECTED_UPDATE)
    }
}

impl Encode for ProtectedUpdate {
    fn to_bytes(&self) -> Vec<u8> {
        self.to_bytes_padded(0)
    }
}

impl Decode for ProtectedUpdate {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::PROTECTED_UPDATE)?;
        let party_id = r.index()?;
        let label = read_label(&mut r)?;
        let sample_count = r.uint()?;
        let dp_applied = match r.uint()? {
            0 => false,
            1 => true,
            other => return Err(WireError::Malformed(format!("dp flag {other}"))),
        };
        let ciphertext = r.nested()?;
        r.finish()?;
        Ok(Self {
            party_id,
            label,
            ciphertext,
            sample_count,
            dp_applied,
        })
    }
}

/// Noise added by each party before encoding; calibration is left to the
/// caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "kebab-case")]
pub enum DpConfig {
    Gaussian { sigma: f64 },
    Laplace { scale: f64 },
}

impl DpConfig {
    /// One draw of the full-strength noise vector `N`.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            DpConfig::Gaussian { sigma } => {
                let dist = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
                (0..len).map(|_| dist.sample(rng)).collect()
            }
            DpConfig::Laplace { scale } => {
                if scale <= 0.0 {
                    return vec![0.0; len];
                }
                let dist = Exp::new(1.0 / scale).expect("positive rate");
                (0..len)
                    .map(|_| {
                        let magnitude = dist.sample(rng);
                        if rng.random::<bool>() {
                            magnitude
                        } else {
                            -magnitude
                        }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug)]
pub struct PartyState {
    pub party_id: u32,
    pub n_parties: usize,
    pub cfg: EncodingConfig,
    pub sample_count: u64,
    sk: PartySecretKey,
    used_labels: BTreeSet<Vec<u8>>,
    last_noise: Vec<f64>,
    rng: ChaCha20Rng,
    solver: Arc<DlogSolver>,
}

impl PartyState {
    pub fn new(
        sk: PartySecretKey,
        cfg: EncodingConfig,
        sample_count: u64,
        seed: Option<u64>,
        solver: Arc<DlogSolver>,
    ) -> Self {
        Self {
            party_id: sk.client_index,
            n_parties: sk.pp.client_count_n,
            cfg,
            sample_count,
            sk,
            used_labels: BTreeSet::new(),
            last_noise: Vec::new(),
            rng: seeded_or_os_rng(seed),
            solver,
        }
    }

    pub fn public_params(&self) -> &PublicParams {
        &self.sk.pp
    }

    /// The scaled noise `N / n` added to the most recent update, empty when
    /// DP was off.
    pub fn last_noise(&self) -> &[f64] {
        &self.last_noise
    }
}

/// Encrypts one model update under `label`; a party never encrypts twice
/// under the same label.
pub fn tdsa_protect(
    party: &mut PartyState,
    update: &[f64],
    label: &RoundLabel,
    dp: Option<&DpConfig>,
) -> Result<ProtectedUpdate, TdsaError> {
    let expected = party.sk.pp.vector_len(party.party_id);
    if update.len() != expected {
        return Err(TdsaError::UpdateLength {
            got: update.len(),
            expected,
        });
    }
    let label_bytes = label.to_bytes();
    if party.used_labels.contains(&label_bytes) {
        return Err(TdsaError::LabelReuse {
            party: party.party_id,
            label: label.to_string(),
        });
    }
    let n = party.n_parties as f64;
    party.last_noise = match dp {
        Some(dp) => dp
            .sample(update.len(), &mut party.rng)
            .into_iter()
            .map(|x| x / n)
            .collect(),
        None => Vec::new(),
    };
    let noisy: Vec<f64> = if party.last_noise.is_empty() {
        update.to_vec()
    } else {
        update
            .iter()
            .zip(&party.last_noise)
            .map(|(v, e)| v + e)
            .collect()
    };
    let x = encode_vector(&noisy, &party.cfg, &party.sk.pp.group)?;
    let ciphertext = encrypt(&party.sk, &x, &label_bytes, &mut party.rng)?;
    party.used_labels.insert(label_bytes);
    Ok(ProtectedUpdate {
        party_id: party.party_id,
        label: *label,
        ciphertext,
        sample_count: party.sample_count,
        dp_applied: dp.is_some(),
    })
}

/// Aggregator role. It has no handle to other aggregators.
#[derive(Debug, Clone)]
pub struct AggregatorState {
    pub aggregator_id: u32,
    pub n_parties: usize,
    pub fusion_mode: FusionMode,
    pub cfg: EncodingConfig,
}

impl AggregatorState {
    pub fn new(
        aggregator_id: u32,
        n_parties: usize,
        fusion_mode: FusionMode,
        cfg: EncodingConfig,
    ) -> Self {
        Self {
            aggregator_id,
            n_parties,
            fusion_mode,
            cfg,
        }
    }

    pub fn request(&self, fusion: FusionSpec, label: &RoundLabel) -> DkRequest {
        DkRequest {
            aggregator_id: self.aggregator_id,
            fusion,
            label: *label,
        }
    }

    /// Fusion weights over the parties whose updates arrived.
    pub fn prepare_fusion(
        &self,
        updates: &[ProtectedUpdate],
        label: &RoundLabel,
    ) -> Result<FusionSpec, TdsaError> {
        check_updates(updates, label)?;
        let active: BTreeMap<u32, u64> = updates
            .iter()
            .map(|u| (u.party_id, u.sample_count))
            .collect();
        Ok(make_fusion_spec(
            &self.fusion_mode,
            self.n_parties,
            &active,
            &label.to_bytes(),
            &self.cfg,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggregateOutcome {
    Partial(VectorPartialDecryption),
    /// Compliance has not yet seen enough agreeing requests; resubmit later.
    Pending,
    Denied(RejectReason),
}

fn check_updates(updates: &[ProtectedUpdate], label: &RoundLabel) -> Result<(), TdsaError> {
    let mut seen = BTreeSet::new();
    for u in updates {
        if u.label != *label {
            return Err(TdsaError::LabelMismatch);
        }
        if !seen.insert(u.party_id) {
            return Err(TdsaError::DuplicateUpdate(u.party_id));
        }
    }
    Ok(())
}

pub fn tdsa_aggregate(
    agg: &AggregatorState,
    updates: &[ProtectedUpdate],
    label: &RoundLabel,
    infra: &CryptoInfrastructure,
) -> Result<AggregateOutcome, TdsaError> {
    let fusion = agg.prepare_fusion(updates, label)?;
    tdsa_aggregate_with_spec(agg, updates, label, fusion, infra)
}

/// As [`tdsa_aggregate`] but with a caller-supplied fusion spec, which is
/// how a misbehaving aggregator would request an isolating key.
pub fn tdsa_aggregate_with_spec(
    agg: &AggregatorState,
    updates: &[ProtectedUpdate],
    label: &RoundLabel,
    fusion: FusionSpec,
    infra: &CryptoInfrastructure,
) -> Result<AggregateOutcome, TdsaError> {
    check_updates(updates, label)?;
    let share = match infra.compliance_submit(agg.request(fusion, label))? {
        DkDecision::Granted(share) => share,
        DkDecision::Pending => return Ok(AggregateOutcome::Pending),
        DkDecision::Rejected(reason) => return Ok(AggregateOutcome::Denied(reason)),
    };
    let partial = share_decrypt_updates(infra.public_params(), updates, label, &share)?;
    Ok(AggregateOutcome::Partial(partial))
}

/// The share-decrypt step once a key share has been granted.
pub fn share_decrypt_updates(
    pp: &PublicParams,
    updates: &[ProtectedUpdate],
    label: &RoundLabel,
    share: &VectorKeyShare,
) -> Result<VectorPartialDecryption, TdsaError> {
    check_updates(updates, label)?;
    let cts: Vec<Ciphertext> = updates.iter().map(|u| u.ciphertext.clone()).collect();
    Ok(share_decrypt_vector(pp, &cts, &share.party_weights, share)?)
}

/// Recombines at least `t` partials into the fused global update.
pub fn tdsa_recover(
    party: &PartyState,
    partials: &[VectorPartialDecryption],
) -> Result<Vec<f64>, TdsaError> {
    let raw = combine_decrypt_vector(&party.sk.pp, partials, &party.solver, party.cfg.dlog_bound)?;
    Ok(decode_vector(&raw, &party.cfg))
}
