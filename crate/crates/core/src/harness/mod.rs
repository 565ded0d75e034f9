//! In-process simulation of a full training run: parties with a toy
//! trainer, independent aggregators, the crypto infrastructure, a transport
//! with dropout schedules, and adversary plugins that act only at message
//! boundaries.

pub mod config;
pub mod report;
pub mod scenario;
pub mod trainer;
pub mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use rand::RngCore;
use serde::Serialize;
use thiserror::Error;

use crate::codec::{make_fusion_spec, CodecError, EncodingConfig, FusionSpec};
use crate::group_math::{seeded_or_os_rng, DlogSolver};
use crate::tdsa::{
    share_decrypt_updates, tdsa_protect, tdsa_recover, AggregatorState, CryptoInfrastructure,
    DkDecision, DkRequest, MessageKind, PartyState, ProtectedUpdate, RoundLabel, TdsaError,
};
use crate::tmcfe::{setup_with_group, TmcfeError, VectorKeyShare, VectorPartialDecryption};
use crate::wire::{Decode, Encode, WireError};

pub use config::{
    AdversarySpec, Behavior, ConfigError, DropPhase, DropoutEvent, EntityKind, ExperimentConfig,
    ModelFamily, PartitionMode, TrainerSpec,
};
pub use scenario::{run_attack_scenario, Scenario, ScenarioVerdict, Verdict};
pub use trainer::{partition_data, synthetic_dataset, DataError, Dataset, ToyModel};
pub use transport::{Entity, Transport, TransportError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tdsa(#[from] TdsaError),
    #[error(transparent)]
    Tmcfe(#[from] TmcfeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("scenario precondition: {0}")]
    Scenario(String),
}

/// Keys, roles and the shared dlog table for one configuration.
#[derive(Debug)]
pub struct Deployment {
    pub cfg: ExperimentConfig,
    pub enc: EncodingConfig,
    pub infra: CryptoInfrastructure,
    pub parties: Vec<PartyState>,
    pub aggregators: Vec<AggregatorState>,
    pub solver: Arc<DlogSolver>,
}

impl Deployment {
    /// `sample_counts[i]` is party `i + 1`'s local dataset size.
    pub fn new(
        cfg: &ExperimentConfig,
        vector_len: usize,
        sample_counts: &[u64],
    ) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let x = &cfg.experiment;
        let enc = cfg.encoding_config()?;
        let group = cfg.group()?;
        enc.check_group(&group)?;
        let mut rng = seeded_or_os_rng(Some(x.seed));
        let (pp, msk) = setup_with_group(
            group,
            &vec![vector_len; x.n_parties],
            x.threshold_t,
            x.s_aggregators,
            x.n_parties,
            &mut rng,
        )?;
        let solver = Arc::new(DlogSolver::for_bound(
            &pp.group,
            &pp.group.generator_g,
            enc.dlog_bound,
        ));
        let infra = CryptoInfrastructure::new(pp, msk, cfg.trust_threshold(), Some(rng.next_u64()));
        let parties = (1..=x.n_parties as u32)
            .map(|i| {
                let count = sample_counts.get(i as usize - 1).copied().unwrap_or(1);
                Ok(PartyState::new(
                    infra.party_key(i)?,
                    enc,
                    count,
                    Some(rng.next_u64()),
                    solver.clone(),
                ))
            })
            .collect::<Result<_, TdsaError>>()?;
        let aggregators = (1..=x.s_aggregators as u32)
            .map(|j| AggregatorState::new(j, x.n_parties, x.fusion_mode.clone(), enc))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            enc,
            infra,
            parties,
            aggregators,
            solver,
        })
    }

    pub fn element_bytes(&self) -> usize {
        self.infra.public_params().group.element_byte_len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum RoundEvent {
    PartyDropped { party: u32 },
    AggregatorDropped { aggregator: u32, phase: DropPhase },
    PartyError { party: u32, error: String },
    Adversary { aggregator: u32, behavior: Behavior },
    KeyDenied { aggregator: u32, reason: String },
    KeyPending { aggregator: u32 },
    AggregateFailed { aggregator: u32, error: String },
    Abort { party: u32, reason: String },
    Divergence,
    RoundFailed { reason: String },
}

impl std::fmt::Display for RoundEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RoundEvent::PartyDropped { party } => write!(f, "party-dropped:p{party}"),
            RoundEvent::AggregatorDropped { aggregator, phase } => {
                let phase = match phase {
                    DropPhase::BeforeReceipt => "before",
                    DropPhase::AfterReceipt => "after",
                };
                write!(f, "aggregator-dropped-{phase}:a{aggregator}")
            }
            RoundEvent::PartyError { party, error } => write!(f, "party-error:p{party}:{error}"),
            RoundEvent::Adversary {
                aggregator,
                behavior,
            } => {
                write!(f, "adversary:a{aggregator}:{behavior:?}")
            }
            RoundEvent::KeyDenied { aggregator, reason } => {
                write!(f, "key-denied:a{aggregator}:{reason}")
            }
            RoundEvent::KeyPending { aggregator } => write!(f, "key-pending:a{aggregator}"),
            RoundEvent::AggregateFailed { aggregator, error } => {
                write!(f, "aggregate-failed:a{aggregator}:{error}")
            }
            RoundEvent::Abort { party, reason } => write!(f, "abort:p{party}:{reason}"),
            RoundEvent::Divergence => f.write_str("divergence"),
            RoundEvent::RoundFailed { reason } => write!(f, "round-failed:{reason}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimes {
    pub train_ms: f64,
    pub protect_ms: f64,
    pub aggregate_ms: f64,
    pub recover_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round_index: u64,
    /// Loss of the incoming global model on each party's shard; `None` for
    /// parties that sat the round out.
    pub party_loss: Vec<Option<f64>>,
    pub contributors: Vec<u32>,
    /// The fused update every recovering party adopted.
    pub recovered: Option<Vec<f64>>,
    /// Plaintext weighted average of exactly what the contributors
    /// encrypted, under the issued fusion weights.
    pub oracle: Option<Vec<f64>>,
    pub oracle_deviation: Option<f64>,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub bytes_per_edge: BTreeMap<(Entity, Entity), u64>,
    /// Size of one protected-update envelope per contributing party.
    pub ciphertext_bytes: BTreeMap<u32, u64>,
    pub partial_bytes: u64,
    pub phase_ms: PhaseTimes,
    pub events: Vec<RoundEvent>,
}

impl RoundRecord {
    pub fn completed(&self) -> bool {
        self.recovered.is_some()
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes_per_edge.values().sum()
    }

    pub fn mean_loss(&self) -> Option<f64> {
        let losses: Vec<f64> = self.party_loss.iter().flatten().copied().collect();
        (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

/// Shards and the held-out set for a configuration.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<(Vec<Dataset>, Dataset), HarnessError> {
    let t = &cfg.trainer;
    let (train, test) = match &t.dataset_csv {
        Some(path) => {
            Dataset::from_csv(std::path::Path::new(path))?.split(t.test_fraction, t.data_seed)
        }
        None => (
            synthetic_dataset(t, t.train_samples, 1),
            synthetic_dataset(t, t.test_samples, 2),
        ),
    };
    let shards = partition_data(
        &train,
        cfg.experiment.n_parties,
        t.partition,
        t.concentration,
        t.data_seed.wrapping_add(1),
    )?;
    Ok((shards, test))
}

fn scheduled(
    cfg: &ExperimentConfig,
    k: u64,
    kind: EntityKind,
    phase: Option<DropPhase>,
) -> BTreeSet<u32> {
    cfg.dropout
        .iter()
        .filter(|d| d.round == k && d.kind == kind && phase.is_none_or(|p| p == d.phase))
        .map(|d| d.id)
        .collect()
}

/// Float weighted average under `spec`'s weights.
pub fn weighted_average(spec: &FusionSpec, values: &BTreeMap<u32, Vec<f64>>) -> Vec<f64> {
    let len = values.values().next().map_or(0, Vec::len);
    let mut out = vec![0.0; len];
    for (&i, v) in values {
        let w = spec.weights[i as usize - 1];
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug)]
pub struct Simulation {
    pub dep: Deployment,
    pub transport: Transport,
    shards: Vec<Dataset>,
    test: Dataset,
    global: ToyModel,
    round: u64,
    /// Last update seen from each party, as an eavesdropper would hold it.
    captured: BTreeMap<u32, ProtectedUpdate>,
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let (shards, test) = prepare_data(cfg)?;
        let dim = shards[0].dim();
        let counts: Vec<u64> = shards.iter().map(|s| s.len() as u64).collect();
        let dep = Deployment::new(cfg, dim + 1, &counts)?;
        Ok(Self {
            dep,
            transport: Transport::new(),
            global: ToyModel::zeros(dim, cfg.trainer.family),
            shards,
            test,
            round: 0,
            captured: BTreeMap::new(),
        })
    }

    pub fn global_model(&self) -> &ToyModel {
        &self.global
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn rounds_done(&self) -> u64 {
        self.round
    }

    /// One round: train, protect, deliver, key requests, share-decrypt,
    /// partial delivery, recover, adopt.
    pub fn run_round(&mut self) -> Result<RoundRecord, HarnessError> {
        let k = self.round + 1;
        self.round = k;
        let cfg = self.dep.cfg.clone();
        let x = &cfg.experiment;
        let label = RoundLabel::new(k);
        let mut events = Vec::new();
        let mut times = PhaseTimes::default();
        let adversary = cfg.adversary.filter(|a| a.round == k);
        let dropped_parties = scheduled(&cfg, k, EntityKind::Party, None);
        let before = scheduled(
            &cfg,
            k,
            EntityKind::Aggregator,
            Some(DropPhase::BeforeReceipt),
        );
        let after = scheduled(
            &cfg,
            k,
            EntityKind::Aggregator,
            Some(DropPhase::AfterReceipt),
        );

        let clock = Instant::now();
        let mut party_loss = vec![None; x.n_parties];
        let mut local = BTreeMap::new();
        for i in 1..=x.n_parties as u32 {
            if dropped_parties.contains(&i) {
                events.push(RoundEvent::PartyDropped { party: i });
                continue;
            }
            let mut model = self.global.clone();
            let t = &cfg.trainer;
            let loss = model.train(
                &self.shards[i as usize - 1],
                x.local_epochs,
                t.learning_rate,
                t.l2,
            );
            party_loss[i as usize - 1] = Some(loss);
            local.insert(i, model.weights);
        }
        times.train_ms = ms(clock);

        let clock = Instant::now();
        let mut updates = BTreeMap::new();
        let mut encrypted_values = BTreeMap::new();
        for (&i, w) in &local {
            let party = &mut self.dep.parties[i as usize - 1];
            match tdsa_protect(party, w, &label, cfg.dp.as_ref()) {
                Ok(u) => {
                    let noise = party.last_noise();
                    let values = if noise.is_empty() {
                        w.clone()
                    } else {
                        w.iter().zip(noise).map(|(a, b)| a + b).collect()
                    };
                    encrypted_values.insert(i, values);
                    updates.insert(i, u);
                }
                Err(e) => events.push(RoundEvent::PartyError {
                    party: i,
                    error: e.to_string(),
                }),
            }
        }
        times.protect_ms = ms(clock);

        let clock = Instant::now();
        let mut ciphertext_bytes = BTreeMap::new();
        let width = self.dep.element_bytes();
        for j in 1..=x.s_aggregators as u32 {
            for (&i, u) in &updates {
                let mut payload = u.to_bytes_padded(width);
                if let Some(adv) = adversary.filter(|a| {
                    a.behavior == Behavior::Replay && a.aggregator == j && a.target_party == i
                }) {
                    if let Some(old) = self.captured.get(&i) {
                        let mut forged = old.clone();
                        forged.label = label;
                        payload = forged.to_bytes_padded(width);
                        events.push(RoundEvent::Adversary {
                            aggregator: j,
                            behavior: adv.behavior,
                        });
                    }
                }
                let size = self.transport.send(
                    Entity::Party(i),
                    Entity::Aggregator(j),
                    MessageKind::ProtectedUpdate,
                    k,
                    payload,
                )?;
                ciphertext_bytes.entry(i).or_insert(size as u64);
            }
        }
        self.captured = updates.clone();

        let mut inputs: BTreeMap<u32, Vec<ProtectedUpdate>> = BTreeMap::new();
        let mut requests: BTreeMap<u32, Vec<u8>> = BTreeMap::new();
        for agg in &self.dep.aggregators {
            let j = agg.aggregator_id;
            let me = Entity::Aggregator(j);
            if before.contains(&j) {
                self.transport.discard(me);
                events.push(RoundEvent::AggregatorDropped {
                    aggregator: j,
                    phase: DropPhase::BeforeReceipt,
                });
                continue;
            }
            let received: Result<Vec<ProtectedUpdate>, WireError> = self
                .transport
                .receive(me)
                .iter()
                .map(|env| ProtectedUpdate::from_bytes(&env.payload))
                .collect();
            let fail = |e: String| RoundEvent::AggregateFailed {
                aggregator: j,
                error: e,
            };
            let received = match received {
                Ok(r) => r,
                Err(e) => {
                    events.push(fail(e.to_string()));
                    continue;
                }
            };
            if received.len() < x.party_quorum {
                events.push(fail(format!("{} updates below quorum", received.len())));
                continue;
            }
            let mut fusion = match agg.prepare_fusion(&received, &label) {
                Ok(f) => f,
                Err(e) => {
                    events.push(fail(e.to_string()));
                    continue;
                }
            };
            if let Some(adv) =
                adversary.filter(|a| a.behavior == Behavior::Isolation && a.aggregator == j)
            {
                let mut w = vec![0.0; x.n_parties];
                w[adv.target_party as usize - 1] = 1.0;
                fusion = FusionSpec::from_weights(w, &label.to_bytes(), &self.dep.enc)?;
                events.push(RoundEvent::Adversary {
                    aggregator: j,
                    behavior: adv.behavior,
                });
            }
            let request = agg.request(fusion, &label).to_bytes();
            self.transport.send(
                me,
                Entity::Infrastructure,
                MessageKind::DkRequest,
                k,
                request.clone(),
            )?;
            requests.insert(j, request);
            inputs.insert(j, received);
        }

        let mut keys: BTreeMap<u32, VectorKeyShare> = BTreeMap::new();
        let mut pending: BTreeSet<u32> = requests.keys().copied().collect();
        // first pass collects requests; the second lets early requesters
        // pick up a key issued after they asked
        for pass in 0..2 {
            if pass == 1 {
                for &j in &pending {
                    self.transport.send(
                        Entity::Aggregator(j),
                        Entity::Infrastructure,
                        MessageKind::DkRequest,
                        k,
                        requests[&j].clone(),
                    )?;
                }
            }
            self.serve_infrastructure(k)?;
            for &j in &pending.clone() {
                for env in self.transport.receive(Entity::Aggregator(j)) {
                    match env.kind {
                        MessageKind::DkGrant => {
                            keys.insert(j, VectorKeyShare::from_bytes(&env.payload)?);
                            pending.remove(&j);
                        }
                        MessageKind::Abort => {
                            events.push(RoundEvent::KeyDenied {
                                aggregator: j,
                                reason: String::from_utf8_lossy(&env.payload).into_owned(),
                            });
                            pending.remove(&j);
                        }
                        _ => {}
                    }
                }
            }
        }
        for &j in &pending {
            events.push(RoundEvent::KeyPending { aggregator: j });
        }

        let live_parties: Vec<u32> = (1..=x.n_parties as u32)
            .filter(|i| !dropped_parties.contains(i))
            .collect();
        let mut partial_bytes = 0u64;
        let pp = self.dep.infra.public_params().clone();
        for (&j, share) in &keys {
            let mut partial = match share_decrypt_updates(&pp, &inputs[&j], &label, share) {
                Ok(p) => p,
                Err(e) => {
                    events.push(RoundEvent::AggregateFailed {
                        aggregator: j,
                        error: e.to_string(),
                    });
                    continue;
                }
            };
            if let Some(adv) =
                adversary.filter(|a| a.behavior == Behavior::Tamper && a.aggregator == j)
            {
                tamper(&mut partial, &pp.group);
                events.push(RoundEvent::Adversary {
                    aggregator: j,
                    behavior: adv.behavior,
                });
            }
            if after.contains(&j) {
                events.push(RoundEvent::AggregatorDropped {
                    aggregator: j,
                    phase: DropPhase::AfterReceipt,
                });
                continue;
            }
            let payload = partial.to_bytes();
            for &i in &live_parties {
                partial_bytes += self.transport.send(
                    Entity::Aggregator(j),
                    Entity::Party(i),
                    MessageKind::Partial,
                    k,
                    payload.clone(),
                )? as u64;
            }
        }
        times.aggregate_ms = ms(clock);

        let clock = Instant::now();
        let mut results: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut short = 0usize;
        for &i in &dropped_parties {
            self.transport.discard(Entity::Party(i));
        }
        for &i in &live_parties {
            let partials: Result<Vec<VectorPartialDecryption>, WireError> = self
                .transport
                .receive(Entity::Party(i))
                .iter()
                .filter(|env| env.kind == MessageKind::Partial)
                .map(|env| VectorPartialDecryption::from_bytes(&env.payload))
                .collect();
            let partials = partials?;
            if partials.len() < x.threshold_t {
                short = partials.len();
                continue;
            }
            match tdsa_recover(&self.dep.parties[i as usize - 1], &partials) {
                Ok(v) => {
                    results.insert(i, v);
                }
                Err(e) => events.push(RoundEvent::Abort {
                    party: i,
                    reason: e.to_string(),
                }),
            }
        }
        times.recover_ms = ms(clock);

        let recovered = results.values().next().cloned();
        if results.values().any(|v| Some(v) != recovered.as_ref()) {
            events.push(RoundEvent::Divergence);
        }
        let mut oracle = None;
        let mut oracle_deviation = None;
        match &recovered {
            Some(v) => {
                self.global.weights = v.clone();
                if let Some(spec) = self.dep.infra.issued_spec(&label.to_bytes()) {
                    let contributed: BTreeMap<u32, Vec<f64>> = encrypted_values
                        .iter()
                        .filter(|(i, _)| spec.participant_mask.contains(i))
                        .map(|(&i, v)| (i, v.clone()))
                        .collect();
                    let o = weighted_average(&spec, &contributed);
                    oracle_deviation = Some(max_abs_diff(v, &o));
                    oracle = Some(o);
                }
            }
            None => {
                let has_abort = events.iter().any(|e| matches!(e, RoundEvent::Abort { .. }));
                let reason = if has_abort {
                    "combine aborted".to_string()
                } else {
                    format!("only {short} partials, need {}", x.threshold_t)
                };
                events.push(RoundEvent::RoundFailed { reason });
            }
        }
        let contributors = self
            .dep
            .infra
            .issued_spec(&label.to_bytes())
            .map(|s| s.participant_mask.into_iter().collect())
            .unwrap_or_default();
        Ok(RoundRecord {
            round_index: k,
            party_loss,
            contributors,
            recovered,
            oracle,
            oracle_deviation,
            test_accuracy: self.global.accuracy(&self.test),
            test_loss: self.global.loss(&self.test, cfg.trainer.l2),
            bytes_per_edge: self.transport.take_round_bytes(),
            ciphertext_bytes,
            partial_bytes,
            phase_ms: times,
            events,
        })
    }

    /// Answers every queued DK request: a grant carries the key share, a
    /// rejection an abort with the reason, a pending request gets nothing.
    fn serve_infrastructure(&mut self, k: u64) -> Result<(), HarnessError> {
        for env in self.transport.receive(Entity::Infrastructure) {
            let request = DkRequest::from_bytes(&env.payload)?;
            let to = Entity::Aggregator(request.aggregator_id);
            match self.dep.infra.compliance_submit(request)? {
                DkDecision::Granted(share) => {
                    self.transport.send(
                        Entity::Infrastructure,
                        to,
                        MessageKind::DkGrant,
                        k,
                        share.to_bytes(),
                    )?;
                }
                DkDecision::Rejected(reason) => {
                    self.transport.send(
                        Entity::Infrastructure,
                        to,
                        MessageKind::Abort,
                        k,
                        format!("{reason:?}").into_bytes(),
                    )?;
                }
                DkDecision::Pending => {}
            }
        }
        Ok(())
    }
}

/// Multiplies every coordinate's aggregated ciphertext by `g`.
pub fn tamper(partial: &mut VectorPartialDecryption, group: &crate::group_math::GroupParams) {
    for c in &mut partial.coords {
        c.ct0_agg = group.mul(&c.ct0_agg, &group.generator_g);
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<RoundRecord>,
    pub final_model: ToyModel,
    pub final_accuracy: f64,
}

/// Runs `max_rounds_q` rounds; the final model is the global model after
/// the last round.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let mut sim = Simulation::new(cfg)?;
    let records = (0..cfg.experiment.max_rounds_q)
        .map(|_| sim.run_round())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentResult {
        final_accuracy: sim.global.accuracy(&sim.test),
        final_model: sim.global,
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlainRound {
    pub round_index: u64,
    pub global: Vec<f64>,
    pub test_accuracy: f64,
}

/// The same training with float aggregation and no cryptography; party
/// dropouts are honoured, aggregator events are irrelevant.
pub fn run_plaintext_baseline(
    cfg: &ExperimentConfig,
) -> Result<(Vec<PlainRound>, ToyModel), HarnessError> {
    cfg.validate()?;
    let enc = cfg.encoding_config()?;
    let (shards, test) = prepare_data(cfg)?;
    let x = &cfg.experiment;
    let t = &cfg.trainer;
    let mut global = ToyModel::zeros(shards[0].dim(), t.family);
    let mut rounds = Vec::new();
    for k in 1..=x.max_rounds_q {
        let dropped = scheduled(cfg, k, EntityKind::Party, None);
        let mut values = BTreeMap::new();
        let mut active = BTreeMap::new();
        for i in 1..=x.n_parties as u32 {
            if dropped.contains(&i) {
                continue;
            }
            let mut model = global.clone();
            model.train(
                &shards[i as usize - 1],
                x.local_epochs,
                t.learning_rate,
                t.l2,
            );
            values.insert(i, model.weights);
            active.insert(i, shards[i as usize - 1].len() as u64);
        }
        if !values.is_empty() {
            let spec = make_fusion_spec(
                &x.fusion_mode,
                x.n_parties,
                &active,
                &RoundLabel::new(k).to_bytes(),
                &enc,
            )?;
            global.weights = weighted_average(&spec, &values);
        }
        rounds.push(PlainRound {
            round_index: k,
            global: global.weights.clone(),
            test_accuracy: global.accuracy(&test),
        });
    }
    Ok((rounds, global))
}

#[cfg(test)]
mod tests;
