use super::*;

fn toy(extra: &str) -> ExperimentConfig {
    let text = format!(
        "
[experiment]
n_parties = 3
s_aggregators = 3
threshold_t = 2
max_rounds_q = 4
lambda_bits = 64
group_seed = 11
seed = 5

[trainer]
train_samples = 300
test_samples = 200
{extra}"
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

fn strip_times(mut records: Vec<RoundRecord>) -> Vec<RoundRecord> {
    for r in &mut records {
        r.phase_ms = PhaseTimes::default();
    }
    records
}

#[test]
fn honest_run_tracks_the_oracle() {
    let cfg = toy("");
    let tol = (cfg.experiment.n_parties as f64 + 1.0) * 10f64.powi(-4);
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.records.len(), 4);
    for r in &res.records {
        assert!(
            r.completed(),
            "round {} events {:?}",
            r.round_index,
            r.events
        );
        assert_eq!(r.contributors, vec![1, 2, 3]);
        assert!(
            r.oracle_deviation.unwrap() <= tol,
            "{:?}",
            r.oracle_deviation
        );
        assert!(r.events.is_empty(), "{:?}", r.events);
        assert!(r.partial_bytes > 0);
        assert_eq!(r.ciphertext_bytes.len(), 3);
    }
}

#[test]
fn loss_goes_down() {
    let res = run_experiment(&toy("")).unwrap();
    let first = res.records[0].mean_loss().unwrap();
    let last = res.records.last().unwrap().test_loss;
    assert!(last < first, "{first} -> {last}");
    assert!(res.final_accuracy > 0.7, "{}", res.final_accuracy);
}

#[test]
fn same_seed_same_records() {
    let cfg = toy("");
    let a = strip_times(run_experiment(&cfg).unwrap().records);
    let b = strip_times(run_experiment(&cfg).unwrap().records);
    assert_eq!(a, b);
    assert_eq!(report::rounds_csv(&a), report::rounds_csv(&b));
}

#[test]
fn aggregator_drops_before_and_after_receipt() {
    let cfg = toy("
[[dropout]]
round = 2
kind = \"aggregator\"
id = 1
phase = \"before-receipt\"

[[dropout]]
round = 3
kind = \"aggregator\"
id = 2
phase = \"after-receipt\"

[[dropout]]
round = 3
kind = \"party\"
id = 3
");
    let res = run_experiment(&cfg).unwrap();
    for r in &res.records {
        assert!(
            r.completed(),
            "round {} events {:?}",
            r.round_index,
            r.events
        );
        assert!(r.oracle_deviation.unwrap() <= 4e-4);
    }
    let r2 = &res.records[1];
    assert!(r2.events.contains(&RoundEvent::AggregatorDropped {
        aggregator: 1,
        phase: DropPhase::BeforeReceipt
    }));
    // parties still send to it but it never answers
    assert!(r2
        .bytes_per_edge
        .contains_key(&(Entity::Party(1), Entity::Aggregator(1))));
    assert!(!r2
        .bytes_per_edge
        .keys()
        .any(|(from, _)| *from == Entity::Aggregator(1)));
    let r3 = &res.records[2];
    assert_eq!(r3.contributors, vec![1, 2]);
    assert!(r3
        .bytes_per_edge
        .contains_key(&(Entity::Party(1), Entity::Aggregator(2))));
    // it took delivery, then went silent before sending any partial
    assert!(!r3
        .bytes_per_edge
        .keys()
        .any(|(from, to)| *from == Entity::Aggregator(2) && matches!(to, Entity::Party(_))));
}

#[test]
fn too_many_aggregator_drops_fail_the_round_only() {
    let cfg = toy("
[[dropout]]
round = 2
kind = \"aggregator\"
id = 1

[[dropout]]
round = 2
kind = \"aggregator\"
id = 2
");
    let res = run_experiment(&cfg).unwrap();
    assert!(!res.records[1].completed());
    assert!(res.records[2].completed());
}

#[test]
fn isolation_attempt_is_recorded_and_training_continues() {
    let cfg = toy("
[adversary]
behavior = \"isolation\"
round = 3
aggregator = 3
");
    let res = run_experiment(&cfg).unwrap();
    let r3 = &res.records[2];
    assert!(
        r3.events
            .iter()
            .any(|e| matches!(e, RoundEvent::KeyDenied { aggregator: 3, .. })),
        "{:?}",
        r3.events
    );
    assert!(r3.completed());
    assert!(r3.oracle_deviation.unwrap() <= 4e-4);
    assert!(res.records[3].completed());
}

#[test]
fn plaintext_baseline_agrees_with_the_protected_run() {
    let cfg = toy("");
    let res = run_experiment(&cfg).unwrap();
    let (plain, _) = run_plaintext_baseline(&cfg).unwrap();
    let last = plain.last().unwrap();
    assert!(max_abs_diff(&last.global, &res.final_model.weights) < 0.01);
    assert!((last.test_accuracy - res.final_accuracy).abs() <= 0.01);
}

#[test]
fn scenario_names_parse() {
    for name in [
        "isolation",
        "replay",
        "tamper",
        "collusion",
        "collusion:3",
        "disaggregation-probe",
    ] {
        assert_eq!(name.parse::<Scenario>().unwrap().to_string(), name);
    }
    assert!(matches!(
        "dos".parse::<Scenario>(),
        Err(HarnessError::UnknownScenario(_))
    ));
    assert!("collusion:x".parse::<Scenario>().is_err());
}

#[test]
fn attack_suite_verdicts() {
    let cfg = toy("");
    for sc in Scenario::suite(2) {
        let v = run_attack_scenario(sc, &cfg).unwrap();
        assert!(v.matches(), "{v:?}");
    }
}
