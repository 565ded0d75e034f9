//! Attack scenarios. Each builds a fresh deployment from the configuration,
//! runs honest traffic, lets the adversary act on messages it could really
//! see or send, and reports whether the attack got through.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::Serialize;

use super::{tamper, Deployment, Entity, ExperimentConfig, HarnessError, Transport};
use crate::codec::{encode_integers, FusionSpec};
use crate::group_math::{random_below, seeded_or_os_rng};
use crate::tdsa::{
    tdsa_aggregate, tdsa_aggregate_with_spec, tdsa_protect, tdsa_recover, AggregateOutcome,
    MessageKind, ProtectedUpdate, RoundLabel, TdsaError,
};
use crate::tmcfe::{
    combine_decrypt_vector, combine_decrypt_with, share_decrypt_unchecked, share_decrypt_vector,
    Ciphertext, PublicParams, TmcfeError, VectorKeyShare, VectorPartialDecryption,
};

/// Coordinates per party in scenario traffic.
const SCENARIO_LEN: usize = 2;
/// Forged-completion attempts per collusion run.
pub const COLLUSION_TRIALS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Isolation,
    Replay,
    Tamper,
    /// `None` means a coalition of `t - 1`.
    Collusion {
        coalition: Option<usize>,
    },
    DisaggregationProbe,
}

impl Scenario {
    /// The five attacks plus the collusion boundary at `t`.
    pub fn suite(t: usize) -> Vec<Scenario> {
        vec![
            Scenario::Isolation,
            Scenario::Replay,
            Scenario::Tamper,
            Scenario::Collusion { coalition: None },
            Scenario::Collusion { coalition: Some(t) },
            Scenario::DisaggregationProbe,
        ]
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Isolation => f.write_str("isolation"),
            Scenario::Replay => f.write_str("replay"),
            Scenario::Tamper => f.write_str("tamper"),
            Scenario::Collusion { coalition: None } => f.write_str("collusion"),
            Scenario::Collusion { coalition: Some(c) } => write!(f, "collusion:{c}"),
            Scenario::DisaggregationProbe => f.write_str("disaggregation-probe"),
        }
    }
}

impl FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || HarnessError::UnknownScenario(s.to_string());
        Ok(match s {
            "isolation" => Scenario::Isolation,
            "replay" => Scenario::Replay,
            "tamper" => Scenario::Tamper,
            "collusion" => Scenario::Collusion { coalition: None },
            "disaggregation-probe" => Scenario::DisaggregationProbe,
            other => {
                let size = other.strip_prefix("collusion:").ok_or_else(unknown)?;
                Scenario::Collusion {
                    coalition: Some(size.parse().map_err(|_| unknown())?),
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Prevented,
    Succeeded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioVerdict {
    pub scenario: String,
    pub expected: Verdict,
    pub observed: Verdict,
    pub detail: String,
}

impl ScenarioVerdict {
    pub fn matches(&self) -> bool {
        self.expected == self.observed
    }
}

pub fn run_attack_scenario(
    scenario: Scenario,
    cfg: &ExperimentConfig,
) -> Result<ScenarioVerdict, HarnessError> {
    let mut dep = Deployment::new(cfg, SCENARIO_LEN, &vec![1; cfg.experiment.n_parties])?;
    let t = cfg.experiment.threshold_t;
    let (expected, (observed, mut detail)) = match scenario {
        Scenario::Isolation => (Verdict::Prevented, isolation(&mut dep)?),
        Scenario::Replay => (Verdict::Prevented, replay(&mut dep)?),
        Scenario::Tamper => (Verdict::Prevented, tamper_partial(&mut dep)?),
        Scenario::Collusion { coalition } => {
            let c = coalition.unwrap_or(t.saturating_sub(1));
            let expected = if c >= t {
                Verdict::Succeeded
            } else {
                Verdict::Prevented
            };
            (expected, collusion(&mut dep, c)?)
        }
        Scenario::DisaggregationProbe => (Verdict::Prevented, disaggregation_probe(&mut dep)?),
    };
    // aggregators have no channel to each other in any scenario
    let mut probe = Transport::new();
    let refused = probe
        .send(
            Entity::Aggregator(1),
            Entity::Aggregator(2),
            MessageKind::Partial,
            0,
            Vec::new(),
        )
        .is_err();
    detail.push_str(&format!("; peer channel refused: {refused}"));
    let observed = if refused {
        observed
    } else {
        Verdict::Succeeded
    };
    Ok(ScenarioVerdict {
        scenario: scenario.to_string(),
        expected,
        observed,
        detail,
    })
}

/// Small non-zero values well inside the value bound.
fn scenario_values(dep: &Deployment, party: u32, round: u64) -> Vec<f64> {
    let scale = (dep.enc.value_bound / 8.0).min(1.0);
    (0..SCENARIO_LEN)
        .map(|c| {
            let m = (u64::from(party) * 7 + c as u64 * 3 + round * 5) % 11;
            (0.5 + 0.25 * m as f64) * scale
        })
        .collect()
}

fn protect_round(
    dep: &mut Deployment,
    label: &RoundLabel,
) -> Result<Vec<ProtectedUpdate>, HarnessError> {
    let k = label.round_index;
    (1..=dep.parties.len() as u32)
        .map(|i| {
            let values = scenario_values(dep, i, k);
            Ok(tdsa_protect(
                &mut dep.parties[i as usize - 1],
                &values,
                label,
                None,
            )?)
        })
        .collect()
}

/// Every aggregator requests; pending ones retry once.
fn aggregate_all(
    dep: &Deployment,
    updates: &[ProtectedUpdate],
    label: &RoundLabel,
) -> Result<Vec<AggregateOutcome>, HarnessError> {
    let mut out = dep
        .aggregators
        .iter()
        .map(|a| tdsa_aggregate(a, updates, label, &dep.infra))
        .collect::<Result<Vec<_>, _>>()?;
    for (a, o) in dep.aggregators.iter().zip(out.iter_mut()) {
        if *o == AggregateOutcome::Pending {
            *o = tdsa_aggregate(a, updates, label, &dep.infra)?;
        }
    }
    Ok(out)
}

fn partials_of(outcomes: &[AggregateOutcome]) -> Vec<VectorPartialDecryption> {
    outcomes
        .iter()
        .filter_map(|o| match o {
            AggregateOutcome::Partial(p) => Some(p.clone()),
            _ => None,
        })
        .collect()
}

fn issued_shares(dep: &Deployment, label: &RoundLabel) -> Vec<VectorKeyShare> {
    dep.infra
        .compliance_state()
        .issued
        .get(&label.to_bytes())
        .map(|k| k.shares.clone())
        .unwrap_or_default()
}

fn isolation(dep: &mut Deployment) -> Result<(Verdict, String), HarnessError> {
    let label = RoundLabel::new(1);
    let updates = protect_round(dep, &label)?;
    let s = dep.aggregators.len();
    let n = dep.parties.len();
    let evil = &dep.aggregators[s - 1];
    let mut w = vec![0.0; n];
    w[0] = 1.0;
    let isolating = FusionSpec::from_weights(w, &label.to_bytes(), &dep.enc)?;
    // the attacker asks first, before and after the honest aggregators
    let mut evil_outcomes = vec![tdsa_aggregate_with_spec(
        evil,
        &updates,
        &label,
        isolating.clone(),
        &dep.infra,
    )?];
    let mut honest: Vec<AggregateOutcome> = dep.aggregators[..s - 1]
        .iter()
        .map(|a| tdsa_aggregate(a, &updates, &label, &dep.infra))
        .collect::<Result<_, _>>()?;
    for (a, o) in dep.aggregators[..s - 1].iter().zip(honest.iter_mut()) {
        if *o == AggregateOutcome::Pending {
            *o = tdsa_aggregate(a, &updates, &label, &dep.infra)?;
        }
    }
    evil_outcomes.push(tdsa_aggregate_with_spec(
        evil, &updates, &label, isolating, &dep.infra,
    )?);
    let evil_got_key = evil_outcomes
        .iter()
        .any(|o| matches!(o, AggregateOutcome::Partial(_)));
    let honest_keys = honest
        .iter()
        .filter(|o| matches!(o, AggregateOutcome::Partial(_)))
        .count();
    let observed = if evil_got_key {
        Verdict::Succeeded
    } else {
        Verdict::Prevented
    };
    Ok((
        observed,
        format!(
            "isolating aggregator a{s}: {:?}; honest aggregators granted {honest_keys} of {}",
            evil_outcomes.last().expect("two attempts"),
            s - 1
        ),
    ))
}

fn replay(dep: &mut Deployment) -> Result<(Verdict, String), HarnessError> {
    let old_label = RoundLabel::new(1);
    let stale = protect_round(dep, &old_label)?;
    aggregate_all(dep, &stale, &old_label)?;
    let label = RoundLabel::new(2);
    let fresh = protect_round(dep, &label)?;
    let honest = partials_of(&aggregate_all(dep, &fresh, &label)?);
    let pp = dep.infra.public_params().clone();
    let t = pp.threshold_t;
    if honest.len() < t {
        return Err(HarnessError::Scenario(
            "honest round did not complete".into(),
        ));
    }
    let truth = combine_decrypt_vector(&pp, &honest, &dep.solver, dep.enc.dlog_bound)?;
    let agg = &dep.aggregators[0];

    // old update as-is
    let mut forged = fresh.clone();
    forged[0] = stale[0].clone();
    let as_is = tdsa_aggregate(agg, &forged, &label, &dep.infra);
    let caught_envelope = matches!(as_is, Err(TdsaError::LabelMismatch));

    // old ciphertext under a new wrapper
    forged[0].label = label;
    let rewrapped = tdsa_aggregate(agg, &forged, &label, &dep.infra);
    let caught_decrypt = matches!(rewrapped, Err(TdsaError::Tmcfe(TmcfeError::LabelMismatch)));

    // bypassing the label check: the old ciphertext decrypts to garbage
    let shares = issued_shares(dep, &label);
    let cts: Vec<Ciphertext> = forged.iter().map(|u| u.ciphertext.clone()).collect();
    let key = shares[0].coordinate(&pp, 0);
    let partials = shares[..t]
        .iter()
        .map(|s| share_decrypt_unchecked(&pp, &cts, &key.weights, &s.coordinate(&pp, 0)))
        .collect::<Result<Vec<_>, _>>()?;
    let bypass = combine_decrypt_with(
        &pp,
        &partials,
        &key.weights,
        &dep.solver,
        dep.enc.dlog_bound,
    );
    let bypass_wrong = bypass.as_ref().map_or(true, |&v| v != truth[0]);
    let prevented = caught_envelope && caught_decrypt && bypass_wrong;
    Ok((
        if prevented {
            Verdict::Prevented
        } else {
            Verdict::Succeeded
        },
        format!(
            "stale label rejected: {caught_envelope}; rewrapped ciphertext rejected: {caught_decrypt}; \
             unchecked decrypt gave {bypass:?} against true {}",
            truth[0]
        ),
    ))
}

fn tamper_partial(dep: &mut Deployment) -> Result<(Verdict, String), HarnessError> {
    let label = RoundLabel::new(1);
    let updates = protect_round(dep, &label)?;
    let mut partials = partials_of(&aggregate_all(dep, &updates, &label)?);
    let t = dep.infra.public_params().threshold_t;
    if partials.len() < t {
        return Err(HarnessError::Scenario(
            "honest round did not complete".into(),
        ));
    }
    let group = dep.infra.public_params().group.clone();
    tamper(&mut partials[0], &group);
    let party = &dep.parties[0];
    let tampered = tdsa_recover(party, &partials);
    let aborted = matches!(tampered, Err(TdsaError::Tmcfe(TmcfeError::TamperDetected)));
    let without = if partials.len() > t {
        format!(
            "{:?}",
            tdsa_recover(party, &partials[1..]).map(|_| "recovered")
        )
    } else {
        "not enough honest partials to retry".into()
    };
    Ok((
        if aborted {
            Verdict::Prevented
        } else {
            Verdict::Succeeded
        },
        format!("recover with tampered partial: {tampered:?}; without it: {without}"),
    ))
}

fn collusion(dep: &mut Deployment, coalition: usize) -> Result<(Verdict, String), HarnessError> {
    let pp: PublicParams = dep.infra.public_params().clone();
    let (t, s) = (pp.threshold_t, pp.share_count_s);
    if coalition == 0 || coalition > s {
        return Err(HarnessError::Scenario(format!(
            "coalition of {coalition} among {s} aggregators"
        )));
    }
    let label = RoundLabel::new(1);
    let updates = protect_round(dep, &label)?;
    let all = partials_of(&aggregate_all(dep, &updates, &label)?);
    if all.len() < t {
        return Err(HarnessError::Scenario(
            "honest round did not complete".into(),
        ));
    }
    let bound = dep.enc.dlog_bound;
    let truth = combine_decrypt_vector(&pp, &all, &dep.solver, bound)?;
    let held: Vec<VectorPartialDecryption> = all[..coalition].to_vec();
    if coalition >= t {
        let got = combine_decrypt_vector(&pp, &held, &dep.solver, bound);
        let ok = got.as_ref() == Ok(&truth);
        return Ok((
            if ok {
                Verdict::Succeeded
            } else {
                Verdict::Prevented
            },
            format!("{coalition} colluding shares recovered {got:?}, true {truth:?}"),
        ));
    }
    let direct = combine_decrypt_vector(&pp, &held, &dep.solver, bound);
    // forged completion: invent the missing shares and hope
    let shares = issued_shares(dep, &label);
    let weights = shares[0].party_weights.clone();
    let cts: Vec<Ciphertext> = updates.iter().map(|u| u.ciphertext.clone()).collect();
    let mut rng = seeded_or_os_rng(Some(dep.cfg.experiment.seed ^ 0xc011));
    let p = &pp.group.order_p;
    let n = pp.client_count_n;
    let mut successes = 0;
    for _ in 0..COLLUSION_TRIALS {
        let mut attempt = held.clone();
        for j in (coalition + 1)..=t {
            let fake = VectorKeyShare {
                share_index: j as u32,
                party_weights: weights.clone(),
                label: label.to_bytes(),
                v0: (0..SCENARIO_LEN)
                    .map(|_| random_below(&mut rng, p))
                    .collect(),
                v1: (0..SCENARIO_LEN)
                    .map(|_| {
                        (0..n)
                            .map(|_| random_below(&mut rng, p))
                            .collect::<Vec<BigUint>>()
                    })
                    .collect(),
            };
            attempt.push(share_decrypt_vector(&pp, &cts, &weights, &fake)?);
        }
        if combine_decrypt_vector(&pp, &attempt, &dep.solver, bound).as_ref() == Ok(&truth) {
            successes += 1;
        }
    }
    let rate = successes as f64 / COLLUSION_TRIALS as f64;
    let insufficient = matches!(direct, Err(TmcfeError::InsufficientShares { .. }));
    Ok((
        if insufficient && rate <= 0.01 {
            Verdict::Prevented
        } else {
            Verdict::Succeeded
        },
        format!(
            "{coalition} colluding shares: direct combine {direct:?}; forged completions matched \
             the aggregate in {successes}/{COLLUSION_TRIALS}"
        ),
    ))
}

fn disaggregation_probe(dep: &mut Deployment) -> Result<(Verdict, String), HarnessError> {
    let label = RoundLabel::new(1);
    let values: BTreeMap<u32, Vec<f64>> = (1..=dep.parties.len() as u32)
        .map(|i| (i, scenario_values(dep, i, 1)))
        .collect();
    let updates = protect_round(dep, &label)?;
    let outcomes = aggregate_all(dep, &updates, &label)?;
    let pp = dep.infra.public_params().clone();
    let partials = partials_of(&outcomes);
    if partials.len() < pp.threshold_t {
        return Err(HarnessError::Scenario(
            "honest round did not complete".into(),
        ));
    }
    let raw = combine_decrypt_vector(&pp, &partials, &dep.solver, dep.enc.dlog_bound)?;

    let mut targets: BTreeSet<i64> = raw.iter().copied().collect();
    for v in values.values() {
        targets.extend(encode_integers(v, &dep.enc)?);
    }
    let scale = dep.enc.weight_scale();
    targets.extend(raw.iter().map(|r| (*r as f64 / scale).round() as i64));
    targets.remove(&0);

    // aggregator 1's memory: the updates it received and the partial it made
    let mut elements: Vec<BigUint> = Vec::new();
    for u in &updates {
        elements.push(u.ciphertext.ct1.clone());
        elements.extend(u.ciphertext.ct0.iter().cloned());
    }
    for c in &partials[0].coords {
        elements.push(c.ct0_agg.clone());
        elements.push(c.ct2_share.clone());
        elements.extend(c.ct1_shares.iter().cloned());
    }
    let leaks = |xs: &[BigUint]| {
        xs.iter()
            .filter(|e| {
                dep.solver
                    .solve(e, dep.enc.dlog_bound)
                    .is_ok_and(|v| targets.contains(&v))
            })
            .count()
    };
    let leaked = leaks(&elements);
    // the probe must see g^aggregate when it is actually present
    let control: Vec<BigUint> = raw
        .iter()
        .map(|&r| pp.group.pow_g(&pp.group.scalar_from_i128(i128::from(r))))
        .collect();
    let control_hits = leaks(&control);
    let observed = if leaked == 0 && control_hits == control.len() {
        Verdict::Prevented
    } else {
        Verdict::Succeeded
    };
    Ok((
        observed,
        format!(
            "{} group elements in aggregator a1's view, {leaked} with a plaintext dlog; \
             positive control found {control_hits}/{}",
            elements.len(),
            control.len()
        ),
    ))
}
