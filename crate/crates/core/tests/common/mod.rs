//! Helpers shared by the property and acceptance suites. Oracles here use
//! plain integer and float arithmetic only.
#![allow(dead_code)]

use std::io::Write;

use num_bigint::BigUint;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestRunner};

use tapfed::group_math::{
    gen_group, interpolate_at_zero, lagrange_coeffs_at_zero, seeded_or_os_rng, shamir_share,
    DlogSolver, GroupError, GroupParams,
};
use tapfed::harness::{Dataset, ExperimentConfig, ToyModel};

pub fn fixed(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn group32() -> GroupParams {
    gen_group(32, Some(1)).unwrap()
}

/// Writes straight to stdout so the line survives test output capture.
pub fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

pub fn verdict(criterion: u32, ok: bool, summary: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    report(&format!("acceptance {criterion}: {status}: {summary}"));
}

/// All non-empty subsets of `1..=s`.
pub fn subsets(s: u32) -> Vec<Vec<u32>> {
    (1u32..1 << s)
        .map(|mask| (1..=s).filter(|i| mask & (1 << (i - 1)) != 0).collect())
        .collect()
}

/// Every subset of at least `t` shares recovers the secret, smaller ones
/// do not, for all `1 <= t <= s <= 6`.
pub fn shamir_exhaustive(cases: u32, seed: u64) -> Result<(), String> {
    let g = group32();
    let mut runner = TestRunner::new(fixed(cases, seed));
    runner
        .run(&(any::<u64>(), any::<u64>()), |(secret, seed)| {
            let secret = BigUint::from(secret) % &g.order_p;
            let mut rng = seeded_or_os_rng(Some(seed));
            for s in 1..=6usize {
                for t in 1..=s {
                    let set = shamir_share(&secret, t, s, &g, &mut rng).unwrap();
                    for subset in subsets(s as u32) {
                        let shares: Vec<_> = subset
                            .iter()
                            .map(|&j| set.shares[j as usize - 1].clone())
                            .collect();
                        let got = interpolate_at_zero(&shares, &g).unwrap();
                        if subset.len() >= t {
                            prop_assert_eq!(&got, &secret, "t={} s={} {:?}", t, s, subset);
                        } else {
                            prop_assert_ne!(&got, &secret, "t={} s={} {:?}", t, s, subset);
                        }
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// `g^v` for every `|v| <= bound`, built by repeated multiplication.
pub fn bsgs_exhaustive(bound: u64) -> Result<(), String> {
    let g = group32();
    let solver = DlogSolver::for_bound(&g, &g.generator_g, bound);
    let g_inv = g.inv(&g.generator_g);
    let (mut up, mut down) = (g.identity(), g.identity());
    for v in 0..=bound as i64 {
        for (elem, want) in [(&up, v), (&down, -v)] {
            let got = solver.solve(elem, bound);
            if got != Ok(want) {
                return Err(format!("dlog of g^{want} gave {got:?}"));
            }
        }
        up = g.mul(&up, &g.generator_g);
        down = g.mul(&down, &g_inv);
    }
    for elem in [&up, &down] {
        if !matches!(solver.solve(elem, bound), Err(GroupError::DlogOutOfBound(_))) {
            return Err("value just past the bound was accepted".into());
        }
    }
    Ok(())
}

/// `prod_j (g^f(j))^lambda_j = g^f(0)` for random polynomials and any
/// index set of at least `deg + 1` points.
pub fn exponent_recombination(cases: u32, seed: u64) -> Result<(), String> {
    let g = group32();
    let p_u128 = u128::from(g.order_p.to_u64_digits()[0]);
    let mut runner = TestRunner::new(fixed(cases, seed));
    runner
        .run(
            &(prop::collection::vec(any::<u64>(), 1..6), 0usize..3),
            |(coeffs, extra)| {
                let coeffs: Vec<u128> = coeffs.into_iter().map(|c| u128::from(c) % p_u128).collect();
                let eval = |x: u32| {
                    coeffs
                        .iter()
                        .rev()
                        .fold(0u128, |acc, c| (acc * u128::from(x) + c) % p_u128)
                };
                let subset: Vec<u32> = (1..=(coeffs.len() + extra) as u32).collect();
                let lambdas = lagrange_coeffs_at_zero(&subset, &g).unwrap();
                let combined = subset
                    .iter()
                    .zip(&lambdas)
                    .fold(g.identity(), |acc, (&j, l)| {
                        let share = g.pow_g(&BigUint::from(eval(j)));
                        g.mul(&acc, &share.modpow(l, &g.modulus_q))
                    });
                prop_assert_eq!(combined, g.pow_g(&BigUint::from(coeffs[0])));
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

/// One plaintext FedAvg round: each participant trains from `global` on
/// its shard; updates are averaged with weights proportional to shard size.
pub fn fedavg_step(
    cfg: &ExperimentConfig,
    global: &ToyModel,
    shards: &[Dataset],
    participants: &[u32],
) -> Vec<f64> {
    let t = &cfg.trainer;
    let total: usize = participants.iter().map(|&i| shards[i as usize - 1].len()).sum();
    let mut out = vec![0.0; global.weights.len()];
    for &i in participants {
        let shard = &shards[i as usize - 1];
        let mut model = global.clone();
        model.train(shard, cfg.experiment.local_epochs, t.learning_rate, t.l2);
        let w = shard.len() as f64 / total as f64;
        for (o, x) in out.iter_mut().zip(&model.weights) {
            *o += w * x;
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
