//! Acceptance criteria, one test each. Every test prints a single
//! `acceptance N: PASS|FAIL: ...` line and then asserts.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::Rng;

use common::{fedavg_step, group32, max_abs_diff, verdict};
use tapfed::group_math::{random_below, seeded_or_os_rng, DlogSolver, ScalarVector};
use tapfed::harness::{
    prepare_data, run_attack_scenario, run_experiment, run_plaintext_baseline, ExperimentConfig,
    ExperimentResult, RoundEvent, Scenario, ToyModel,
};
use tapfed::tmcfe::{
    combine_decrypt_with, dk_generate, encrypt, setup_with_group, share_decrypt, sk_distribute,
    FunctionalKeyShare, TmcfeError,
};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

fn five_party(s: usize, t: usize, rounds: u64, extra: &str) -> ExperimentConfig {
    config(&format!(
        "
[experiment]
n_parties = 5
s_aggregators = {s}
threshold_t = {t}
max_rounds_q = {rounds}
lambda_bits = 256
seed = 2024

[encoding]
value_precision = 4
weight_precision = 4
value_bound = 16.0

[trainer]
family = \"logistic-regression\"
features = 10
train_samples = 1000
test_samples = 500
{extra}"
    ))
}

/// Largest per-coordinate gap between each recovered global update and an
/// independent plaintext FedAvg step from the previous recovered model.
fn oracle_gap(cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<f64, String> {
    let (shards, _) = prepare_data(cfg).unwrap();
    let mut global = ToyModel::zeros(shards[0].dim(), cfg.trainer.family);
    let mut worst: f64 = 0.0;
    for r in &result.records {
        let recovered = r
            .recovered
            .as_ref()
            .ok_or_else(|| format!("round {} failed: {:?}", r.round_index, r.events))?;
        let expected = fedavg_step(cfg, &global, &shards, &r.contributors);
        worst = worst.max(max_abs_diff(recovered, &expected));
        global.weights = recovered.clone();
    }
    Ok(worst)
}

fn quantization_tolerance(cfg: &ExperimentConfig) -> f64 {
    (cfg.experiment.n_parties as f64 + 1.0) * 10f64.powi(-(cfg.encoding.value_precision as i32))
}

#[test]
fn criterion_1_oracle_equivalence_every_subset() {
    let started = Instant::now();
    let g = group32();
    let mut rng = seeded_or_os_rng(Some(0xacc1));
    let solver = DlogSolver::for_bound(&g, &g.generator_g, 4 * 5 * 2500);
    let mut subsets_checked = 0usize;
    let mut failures = Vec::new();
    let instances = 200;
    for inst in 0..instances {
        let n = rng.random_range(1..=4usize);
        let etas: Vec<usize> = (0..n).map(|_| rng.random_range(1..=5)).collect();
        let s = rng.random_range(1..=4usize);
        let t = rng.random_range(1..=s);
        let total: usize = etas.iter().sum();
        let xs: Vec<Vec<i64>> = etas
            .iter()
            .map(|&e| (0..e).map(|_| rng.random_range(-50..=50)).collect())
            .collect();
        let y: Vec<i64> = (0..total).map(|_| rng.random_range(-50..=50)).collect();
        let expected: i64 = xs.iter().flatten().zip(&y).map(|(a, b)| a * b).sum();

        let (pp, msk) = setup_with_group(g.clone(), &etas, t, s, n, &mut rng).unwrap();
        let label = format!("acceptance/1/{inst}").into_bytes();
        let yv = ScalarVector::from_i64s(&y, &g);
        let shares = dk_generate(&pp, &msk, &yv, &label, &mut rng).unwrap();
        let cts: Vec<_> = (1..=n as u32)
            .map(|i| {
                let sk = sk_distribute(&pp, &msk, i).unwrap();
                let x = ScalarVector::from_i64s(&xs[i as usize - 1], &g);
                encrypt(&sk, &x, &label, &mut rng).unwrap()
            })
            .collect();
        let partials: Vec<_> = shares
            .iter()
            .map(|k| share_decrypt(&pp, &cts, &yv, k).unwrap())
            .collect();
        let bound = (total * 2500) as u64;
        for subset in common::subsets(s as u32).into_iter().filter(|x| x.len() == t) {
            let chosen: Vec<_> = subset.iter().map(|&j| partials[j as usize - 1].clone()).collect();
            let got = combine_decrypt_with(&pp, &chosen, &yv, &solver, bound);
            subsets_checked += 1;
            if got != Ok(expected) {
                failures.push(format!("instance {inst} subset {subset:?}: {got:?} != {expected}"));
            }
        }
    }
    let elapsed = started.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(60);
    verdict(
        1,
        ok,
        &format!(
            "{instances} instances, {subsets_checked} t-subsets, {} mismatches, {:.1}s (budget 60s)",
            failures.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok, "{failures:?}");
}

#[test]
fn criterion_2_threshold_boundary() {
    let started = Instant::now();
    let g = group32();
    let mut rng = seeded_or_os_rng(Some(0xacc2));
    let (t, s, n, eta) = (3usize, 5usize, 3usize, 2usize);
    let (pp, msk) = setup_with_group(g.clone(), &vec![eta; n], t, s, n, &mut rng).unwrap();
    let xs: Vec<Vec<i64>> = (0..n).map(|_| (0..eta).map(|_| rng.random_range(-50..=50)).collect()).collect();
    let y: Vec<i64> = (0..n * eta).map(|_| rng.random_range(-50..=50)).collect();
    let expected: i64 = xs.iter().flatten().zip(&y).map(|(a, b)| a * b).sum();
    let label = b"acceptance/2".to_vec();
    let yv = ScalarVector::from_i64s(&y, &g);
    let shares = dk_generate(&pp, &msk, &yv, &label, &mut rng).unwrap();
    let cts: Vec<_> = (1..=n as u32)
        .map(|i| {
            let sk = sk_distribute(&pp, &msk, i).unwrap();
            encrypt(&sk, &ScalarVector::from_i64s(&xs[i as usize - 1], &g), &label, &mut rng).unwrap()
        })
        .collect();
    let partials: Vec<_> = shares.iter().map(|k| share_decrypt(&pp, &cts, &yv, k).unwrap()).collect();
    let bound = (n * eta * 2500) as u64;
    let solver = DlogSolver::for_bound(&g, &g.generator_g, bound);

    let trials_per_pair = 100;
    let (mut pairs, mut pairs_refused, mut forged, mut forged_hits) = (0, 0, 0, 0);
    let (mut triples, mut triples_exact) = (0, 0);
    for subset in common::subsets(s as u32) {
        let chosen: Vec<_> = subset.iter().map(|&j| partials[j as usize - 1].clone()).collect();
        match subset.len() {
            2 => {
                pairs += 1;
                let direct = combine_decrypt_with(&pp, &chosen, &yv, &solver, bound);
                if matches!(direct, Err(TmcfeError::InsufficientShares { .. })) {
                    pairs_refused += 1;
                }
                // complete the pair with an invented third share
                let missing = (1..=s as u32).find(|j| !subset.contains(j)).unwrap();
                for _ in 0..trials_per_pair {
                    let fake = FunctionalKeyShare {
                        share_index: missing,
                        v0: random_below(&mut rng, &g.order_p),
                        v1: (0..n).map(|_| random_below(&mut rng, &g.order_p)).collect::<Vec<BigUint>>(),
                        weights: yv.clone(),
                        label: label.clone(),
                    };
                    let mut attempt = chosen.clone();
                    attempt.push(share_decrypt(&pp, &cts, &yv, &fake).unwrap());
                    forged += 1;
                    if combine_decrypt_with(&pp, &attempt, &yv, &solver, bound) == Ok(expected) {
                        forged_hits += 1;
                    }
                }
            }
            3 => {
                triples += 1;
                if combine_decrypt_with(&pp, &chosen, &yv, &solver, bound) == Ok(expected) {
                    triples_exact += 1;
                }
            }
            _ => {}
        }
    }
    let elapsed = started.elapsed();
    let fail_rate = 1.0 - forged_hits as f64 / forged as f64;
    let ok = pairs == 10
        && pairs_refused == 10
        && fail_rate >= 0.99
        && triples == 10
        && triples_exact == 10
        && elapsed < Duration::from_secs(30);
    verdict(
        2,
        ok,
        &format!(
            "{pairs_refused}/{pairs} pairs refused, forged completions failed {:.2}% of {forged}, \
             {triples_exact}/{triples} triples exact, {:.1}s (budget 30s)",
            100.0 * fail_rate,
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_3_aggregation_matches_plaintext() {
    let started = Instant::now();
    let cfg = five_party(2, 2, 20, "");
    let result = run_experiment(&cfg).unwrap();
    let tol = quantization_tolerance(&cfg);
    let gap = oracle_gap(&cfg, &result);
    let (plain, _) = run_plaintext_baseline(&cfg).unwrap();
    let baseline_acc = plain.last().unwrap().test_accuracy;
    let trajectory = plain
        .iter()
        .zip(&result.records)
        .filter_map(|(p, r)| r.recovered.as_ref().map(|v| max_abs_diff(&p.global, v)))
        .fold(0.0, f64::max);
    let acc_gap = (result.final_accuracy - baseline_acc).abs();
    let elapsed = started.elapsed();
    let ok = result.records.len() == 20
        && gap.as_ref().is_ok_and(|g| *g <= tol)
        && acc_gap <= 0.01
        && elapsed < Duration::from_secs(600);
    verdict(
        3,
        ok,
        &format!(
            "20 rounds, max per-round gap {gap:?} (tol {tol:.1e}), trajectory drift {trajectory:.2e}, \
             accuracy {:.4} vs plaintext {:.4}, {:.1}s (budget 600s)",
            result.final_accuracy,
            baseline_acc,
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_4_attack_suite() {
    let started = Instant::now();
    let cfg = config(
        "
[experiment]
n_parties = 3
s_aggregators = 3
threshold_t = 2
max_rounds_q = 1
lambda_bits = 64
group_seed = 11
seed = 4
",
    );
    let mut lines = Vec::new();
    let mut ok = true;
    for sc in Scenario::suite(cfg.experiment.threshold_t) {
        let v = run_attack_scenario(sc, &cfg).unwrap();
        ok &= v.matches();
        lines.push(format!("{}={:?}", v.scenario, v.observed));
    }
    let elapsed = started.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    verdict(
        4,
        ok,
        &format!("{}, {:.1}s (budget 120s)", lines.join(" "), elapsed.as_secs_f64()),
    );
    assert!(ok);
}

#[test]
fn criterion_5_dropout() {
    let started = Instant::now();
    let cfg = five_party(
        5,
        3,
        5,
        "
[[dropout]]
round = 2
kind = \"aggregator\"
id = 5
phase = \"before-receipt\"

[[dropout]]
round = 3
kind = \"aggregator\"
id = 1
phase = \"after-receipt\"

[[dropout]]
round = 3
kind = \"party\"
id = 4

[[dropout]]
round = 4
kind = \"aggregator\"
id = 2
phase = \"before-receipt\"

[[dropout]]
round = 4
kind = \"aggregator\"
id = 3
phase = \"after-receipt\"

[[dropout]]
round = 4
kind = \"party\"
id = 1
",
    );
    let result = run_experiment(&cfg).unwrap();
    let tol = quantization_tolerance(&cfg);
    let gap = oracle_gap(&cfg, &result);
    let completed = result.records.iter().filter(|r| r.completed()).count();
    let survivors_ok = result.records.iter().all(|r| {
        let dropped: BTreeSet<u32> = r
            .events
            .iter()
            .filter_map(|e| match e {
                RoundEvent::PartyDropped { party } => Some(*party),
                _ => None,
            })
            .collect();
        r.contributors.iter().all(|c| !dropped.contains(c))
            && r.contributors.len() + dropped.len() == 5
    });
    let r4 = &result.records[3];
    let both_phases = r4.events.iter().filter(|e| matches!(e, RoundEvent::AggregatorDropped { .. })).count() == 2
        && r4.contributors == vec![2, 3, 4, 5];
    let elapsed = started.elapsed();
    let ok = completed == 5
        && gap.as_ref().is_ok_and(|g| *g <= tol)
        && survivors_ok
        && both_phases
        && elapsed < Duration::from_secs(120);
    verdict(
        5,
        ok,
        &format!(
            "s=5 t=3, {completed}/5 rounds completed, round 4 lost a2 before and a3 after receipt plus p1, \
             max oracle gap {gap:?} (tol {tol:.1e}), {:.1}s (budget 120s)",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

fn uint_len(v: u64) -> usize {
    (64 - v.leading_zeros() as usize).div_ceil(8)
}

/// Envelope plus update framing around `(eta + 1)` elements, counted field
/// by field: kind, round, sender length, sender, then tag, field count and a
/// length prefix per field of the update and of the nested ciphertext.
fn expected_update_bytes(eta: usize, elem: usize, party: u32, round: u64, samples: u64) -> usize {
    let label_len = format!("tapfed/round/{round}").len();
    let ciphertext = 1 + 4
        + (4 + uint_len(party.into()))
        + (4 + label_len)
        + (4 + uint_len(elem as u64))
        + (4 + (eta + 1) * elem);
    let update = 1 + 4
        + (4 + uint_len(party.into()))
        + (4 + uint_len(round))
        + 4
        + (4 + uint_len(samples))
        + 4
        + (4 + ciphertext);
    1 + 8 + 4 + format!("p{party}").len() + update
}

#[test]
fn criterion_6_payload_accounting() {
    let started = Instant::now();
    let cfg = five_party(2, 2, 2, "");
    let (shards, _) = prepare_data(&cfg).unwrap();
    let elem = cfg.group().unwrap().element_byte_len();
    let result = run_experiment(&cfg).unwrap();
    let eta = result.final_model.weights.len();
    let mut worst_rel: f64 = 0.0;
    let mut checked = 0;
    for r in &result.records {
        for (&party, &bytes) in &r.ciphertext_bytes {
            let samples = shards[party as usize - 1].len() as u64;
            let want = expected_update_bytes(eta, elem, party, r.round_index, samples);
            worst_rel = worst_rel.max((bytes as f64 - want as f64).abs() / want as f64);
            checked += 1;
        }
    }
    let per_aggregator: Vec<f64> = (2..=5)
        .map(|s| {
            let res = run_experiment(&five_party(s, 2, 1, "")).unwrap();
            res.records[0].partial_bytes as f64 / s as f64
        })
        .collect();
    let spread = per_aggregator
        .iter()
        .map(|v| (v / per_aggregator[0] - 1.0).abs())
        .fold(0.0, f64::max);
    let elapsed = started.elapsed();
    let ok = checked == 10 && worst_rel <= 0.01 && spread <= 0.01;
    verdict(
        6,
        ok,
        &format!(
            "{checked} updates of ({eta}+1)x{elem} B elements, worst relative error {:.3}%; \
             partial bytes per aggregator over s=2..5 {per_aggregator:?} (spread {:.3}%), {:.1}s",
            100.0 * worst_rel,
            100.0 * spread,
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_7_precision_sweep() {
    let started = Instant::now();
    let mut gaps = Vec::new();
    let mut payloads = Vec::new();
    let mut ok = true;
    for pr in [3u32, 4, 5, 6] {
        let mut cfg = five_party(2, 2, 3, "");
        cfg.encoding.value_precision = pr;
        let result = run_experiment(&cfg).unwrap();
        let gap = oracle_gap(&cfg, &result).unwrap_or(f64::INFINITY);
        ok &= gap <= quantization_tolerance(&cfg);
        gaps.push(gap);
        payloads.push(
            result
                .records
                .iter()
                .map(|r| r.ciphertext_bytes.clone())
                .collect::<Vec<_>>(),
        );
    }
    let payload_invariant = payloads.windows(2).all(|w| w[0] == w[1]);
    let shrinking = gaps.windows(2).all(|w| w[1] < w[0]) && gaps[3] * 100.0 < gaps[0];
    ok &= payload_invariant && shrinking;
    let scaled: Vec<String> = gaps
        .iter()
        .zip(3..)
        .map(|(g, pr)| format!("pr{pr}: {g:.2e} ({:.2}x10^-pr)", g * 10f64.powi(pr)))
        .collect();
    verdict(
        7,
        ok,
        &format!(
            "{}; payload identical across pr: {payload_invariant}, {:.1}s",
            scaled.join(", "),
            started.elapsed().as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_8_property_suites() {
    let started = Instant::now();
    let results = [
        ("shamir exhaustive to s=6", common::shamir_exhaustive(32, 0xacc8)),
        ("bsgs exhaustive to B=1000", common::bsgs_exhaustive(1000)),
        ("exponent recombination", common::exponent_recombination(128, 0xacc8)),
    ];
    let ok = results.iter().all(|(_, r)| r.is_ok());
    let parts: Vec<String> = results
        .iter()
        .map(|(name, r)| format!("{name} {}", if r.is_ok() { "ok" } else { "failed" }))
        .collect();
    verdict(
        8,
        ok,
        &format!("{}, fixed seeds, {:.1}s", parts.join(", "), started.elapsed().as_secs_f64()),
    );
    for (name, r) in &results {
        assert!(r.is_ok(), "{name}: {r:?}");
    }
}
