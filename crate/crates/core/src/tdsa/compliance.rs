//! DK compliance: the crypto infrastructure's gate on functional-key
//! requests. Requests for a label accumulate until a group of mutually
//! agreeing fusion specs reaches the trust threshold and outnumbers every
//! dissenting request; the key for that spec is generated once, cached, and
//! it is the only key ever issued for the label.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use rand_chacha::ChaCha20Rng;

use super::{DkRequest, TdsaError};
use crate::codec::FusionSpec;
use crate::group_math::seeded_or_os_rng;
use crate::tmcfe::{
    dk_generate_vector, sk_distribute, MasterSecretKey, PartySecretKey, PublicParams,
    VectorKeyShare,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    /// A different spec was already issued for this label.
    OneKeyPerLabel,
    /// The agreeing majority settled on a different spec.
    NotMajority,
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DkDecision {
    Granted(VectorKeyShare),
    Pending,
    Rejected(RejectReason),
}

#[derive(Debug, Clone)]
pub struct IssuedKey {
    pub spec: FusionSpec,
    pub shares: Vec<VectorKeyShare>,
}

#[derive(Debug, Clone)]
pub struct ComplianceState {
    pub pending: BTreeMap<Vec<u8>, Vec<DkRequest>>,
    pub trust_threshold: usize,
    pub issued: BTreeMap<Vec<u8>, IssuedKey>,
}

impl ComplianceState {
    pub fn new(trust_threshold: usize) -> Self {
        Self {
            pending: BTreeMap::new(),
            trust_threshold: trust_threshold.max(1),
            issued: BTreeMap::new(),
        }
    }

    /// Processes one request. `issue` generates the full share set and is
    /// called at most once per label.
    pub fn submit<F>(
        &mut self,
        request: DkRequest,
        all_expected: &BTreeSet<u32>,
        n_parties: usize,
        issue: F,
    ) -> Result<DkDecision, TdsaError>
    where
        F: FnOnce(&FusionSpec) -> Result<Vec<VectorKeyShare>, TdsaError>,
    {
        if let Err(reason) = validate(&request, all_expected, n_parties) {
            return Ok(DkDecision::Rejected(RejectReason::Malformed(reason)));
        }
        let label = request.label.to_bytes();
        if let Some(issued) = self.issued.get(&label) {
            return Ok(grant_or_reject(issued, &request));
        }
        let queue = self.pending.entry(label.clone()).or_default();
        match queue
            .iter_mut()
            .find(|r| r.aggregator_id == request.aggregator_id)
        {
            Some(previous) => *previous = request.clone(),
            None => queue.push(request.clone()),
        }
        let Some(winner) = majority(queue, self.trust_threshold) else {
            return Ok(DkDecision::Pending);
        };
        let spec = queue[winner].fusion.clone();
        let shares = issue(&spec)?;
        let issued = IssuedKey { spec, shares };
        let decision = grant_or_reject(&issued, &request);
        self.issued.insert(label, issued);
        Ok(decision)
    }

    pub fn issued_spec(&self, label: &[u8]) -> Option<&FusionSpec> {
        self.issued.get(label).map(|k| &k.spec)
    }
}

fn validate(
    request: &DkRequest,
    all_expected: &BTreeSet<u32>,
    n_parties: usize,
) -> Result<(), String> {
    if !all_expected.contains(&request.aggregator_id) {
        return Err(format!("unknown aggregator {}", request.aggregator_id));
    }
    let fusion = &request.fusion;
    if fusion.label != request.label.to_bytes() {
        return Err("fusion spec label differs from the request label".into());
    }
    if fusion.weights.len() != n_parties || fusion.scaled_weights.len() != n_parties {
        return Err(format!(
            "weight vector covers {} parties, expected {n_parties}",
            fusion.weights.len()
        ));
    }
    if fusion
        .participant_mask
        .iter()
        .any(|&i| i == 0 || i as usize > n_parties)
    {
        return Err("participant mask references unknown parties".into());
    }
    let outside_mask = fusion
        .scaled_weights
        .iter()
        .enumerate()
        .any(|(idx, &w)| w != 0 && !fusion.participant_mask.contains(&(idx as u32 + 1)));
    if outside_mask {
        return Err("non-zero weight for a non-participant".into());
    }
    Ok(())
}

fn grant_or_reject(issued: &IssuedKey, request: &DkRequest) -> DkDecision {
    if !issued.spec.agrees_with(&request.fusion) {
        return DkDecision::Rejected(RejectReason::OneKeyPerLabel);
    }
    issued
        .shares
        .iter()
        .find(|s| s.share_index == request.aggregator_id)
        .cloned()
        .map(DkDecision::Granted)
        .unwrap_or_else(|| {
            DkDecision::Rejected(RejectReason::Malformed(format!(
                "no share for aggregator {}",
                request.aggregator_id
            )))
        })
}

/// Index of a request in the winning group, if any group has at least
/// `threshold` members and strictly more than all other requests combined.
fn majority(queue: &[DkRequest], threshold: usize) -> Option<usize> {
    let total = queue.len();
    (0..total).find(|&i| {
        let size = queue
            .iter()
            .filter(|r| r.fusion.agrees_with(&queue[i].fusion))
            .count();
        size >= threshold && size > total - size
    })
}

/// The trusted key authority: holds the master secret, hands out party
/// keys and runs DK compliance. Submissions are serialised by one lock.
#[derive(Debug)]
pub struct CryptoInfrastructure {
    pp: PublicParams,
    msk: MasterSecretKey,
    aggregators: BTreeSet<u32>,
    state: Mutex<(ComplianceState, ChaCha20Rng)>,
}

impl CryptoInfrastructure {
    /// Aggregator ids are `1..=s`, matching share indices.
    pub fn new(
        pp: PublicParams,
        msk: MasterSecretKey,
        trust_threshold: usize,
        seed: Option<u64>,
    ) -> Self {
        let aggregators = (1..=pp.share_count_s as u32).collect();
        Self {
            pp,
            msk,
            aggregators,
            state: Mutex::new((
                ComplianceState::new(trust_threshold),
                seeded_or_os_rng(seed),
            )),
        }
    }

    pub fn public_params(&self) -> &PublicParams {
        &self.pp
    }

    pub fn aggregator_ids(&self) -> &BTreeSet<u32> {
        &self.aggregators
    }

    pub fn party_key(&self, party_id: u32) -> Result<PartySecretKey, TdsaError> {
        Ok(sk_distribute(&self.pp, &self.msk, party_id)?)
    }

    pub fn compliance_submit(&self, request: DkRequest) -> Result<DkDecision, TdsaError> {
        let mut guard = self.state.lock().expect("compliance lock poisoned");
        let (state, rng) = &mut *guard;
        let (pp, msk) = (&self.pp, &self.msk);
        state.submit(request, &self.aggregators, pp.client_count_n, |spec| {
            let weights = spec.weight_scalars(&pp.group);
            Ok(dk_generate_vector(pp, msk, &weights, &spec.label, rng)?)
        })
    }

    /// The spec issued for `label`, if any.
    pub fn issued_spec(&self, label: &[u8]) -> Option<FusionSpec> {
        let guard = self.state.lock().expect("compliance lock poisoned");
        guard.0.issued_spec(label).cloned()
    }

    /// Snapshot of the compliance ledger.
    pub fn compliance_state(&self) -> ComplianceState {
        self.state
            .lock()
            .expect("compliance lock poisoned")
            .0
            .clone()
    }
}
