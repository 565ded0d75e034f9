use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tapfed::group_math::{seeded_or_os_rng, DlogSolver, ScalarVector};
use tapfed::harness::report::{self, write_atomic, ExperimentSummary};
use tapfed::harness::{
    config::parse_override, run_attack_scenario, run_experiment, run_plaintext_baseline,
    ConfigError, Deployment, ExperimentConfig, HarnessError, Scenario,
};
use tapfed::tdsa::{tdsa_aggregate, tdsa_protect, tdsa_recover, AggregateOutcome, RoundLabel};
use tapfed::tmcfe::{
    combine_decrypt_vector, dk_generate_vector, encrypt, setup_with_group, share_decrypt_vector,
    sk_distribute,
};

const DEFAULT_CONFIG: &str = include_str!("../../../configs/toy.toml");

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SCENARIO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tapfed",
    version,
    about = "Threshold secure aggregation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML). Defaults to the built-in toy config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replaces experiment.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted override, e.g. --set experiment.s_aggregators=4
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run setup and key distribution, then check one protected round.
    Keygen(Common),
    /// Train for max_rounds_q rounds and write metrics.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also run the float baseline and write baseline.csv.
        #[arg(long)]
        baseline: bool,
    },
    /// Run attack scenarios; exits 3 if any verdict is unexpected.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Scenario names (isolation, replay, tamper, collusion[:k],
        /// disaggregation-probe). Defaults to the full suite.
        scenarios: Vec<String>,
    },
    /// Time encrypt, share-decrypt and combine per coordinate.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Vector lengths to sweep.
        #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
        eta: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Dlog bound for the combine step.
        #[arg(long, default_value_t = 1_000_000)]
        bound: u64,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Scenario(String),
    Other(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => CliError::Config(c.to_string()),
            HarnessError::UnknownScenario(s) => CliError::Config(format!("unknown scenario {s:?}")),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

fn other<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Other(e.to_string())
}

fn load_config(c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut overrides = c
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = c.seed {
        overrides.push(("experiment.seed".into(), seed.to_string()));
    }
    let cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path, &overrides)?,
        None => ExperimentConfig::from_toml_with_overrides(DEFAULT_CONFIG, &overrides)?,
    };
    Ok(cfg)
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(&out.join(name), bytes)?;
    Ok(())
}

fn prepare_out(c: &Common, cfg: &ExperimentConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&c.out)?;
    write(&c.out, "config.toml", cfg.to_toml().as_bytes())
}

fn keygen(c: &Common) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    prepare_out(c, &cfg)?;
    let x = &cfg.experiment;
    let started = Instant::now();
    let mut dep = Deployment::new(&cfg, 1, &vec![1; x.n_parties])?;
    let setup_ms = started.elapsed().as_secs_f64() * 1e3;
    let label = RoundLabel::new(0);
    let updates = dep
        .parties
        .iter_mut()
        .map(|p| tdsa_protect(p, &[0.5], &label, None))
        .collect::<Result<Vec<_>, _>>()
        .map_err(other)?;
    let mut outcomes = Vec::new();
    for agg in &dep.aggregators {
        outcomes.push(tdsa_aggregate(agg, &updates, &label, &dep.infra).map_err(other)?);
    }
    // early requesters pick up keys issued after they asked
    for (agg, o) in dep.aggregators.iter().zip(outcomes.iter_mut()) {
        if *o == AggregateOutcome::Pending {
            *o = tdsa_aggregate(agg, &updates, &label, &dep.infra).map_err(other)?;
        }
    }
    let partials: Vec<_> = outcomes
        .into_iter()
        .filter_map(|o| match o {
            AggregateOutcome::Partial(p) => Some(p),
            _ => None,
        })
        .collect();
    let recovered = tdsa_recover(&dep.parties[0], &partials).map_err(other)?;
    let ok = (recovered[0] - 0.5).abs() <= 10f64.powi(-(cfg.encoding.value_precision as i32));
    let pp = dep.infra.public_params();
    write(&c.out, "group.txt", pp.group.to_text().as_bytes())?;
    let summary = json!({
        "lambda_bits": pp.group.lambda_bits,
        "modulus_bits": pp.group.modulus_q.bits(),
        "element_bytes": dep.element_bytes(),
        "n_parties": pp.client_count_n,
        "s_aggregators": pp.share_count_s,
        "threshold_t": pp.threshold_t,
        "trust_threshold": cfg.trust_threshold(),
        "dlog_bound": dep.enc.dlog_bound,
        "dlog_table_size": dep.solver.table_size(),
        "setup_ms": setup_ms,
        "check_partials": partials.len(),
        "check_recovered": recovered[0],
        "check_passed": ok,
    });
    write(
        &c.out,
        "keygen.json",
        serde_json::to_string_pretty(&summary)
            .map_err(other)?
            .as_bytes(),
    )?;
    println!(
        "keygen: {}-bit group, n={} s={} t={}, check {}",
        pp.group.lambda_bits,
        pp.client_count_n,
        pp.share_count_s,
        pp.threshold_t,
        if ok { "passed" } else { "FAILED" }
    );
    if ok {
        Ok(())
    } else {
        Err(CliError::Other(format!(
            "check round recovered {}",
            recovered[0]
        )))
    }
}

fn run(c: &Common, baseline: bool) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    prepare_out(c, &cfg)?;
    let result = run_experiment(&cfg)?;
    let element_bytes = cfg.group()?.element_byte_len();
    let eta = result.final_model.weights.len();
    write(&c.out, "rounds.csv", &report::rounds_csv(&result.records))?;
    write(&c.out, "timings.csv", &report::timings_csv(&result.records))?;
    write(
        &c.out,
        "payload.csv",
        &report::payload_csv(&result.records, eta, element_bytes),
    )?;
    let summary = ExperimentSummary::from_result(&result, element_bytes);
    write(&c.out, "summary.json", summary.to_json().as_bytes())?;
    if baseline {
        let (rounds, _) = run_plaintext_baseline(&cfg)?;
        let mut text = String::from("round,test_accuracy\n");
        for r in rounds {
            text.push_str(&format!("{},{:.6}\n", r.round_index, r.test_accuracy));
        }
        write(&c.out, "baseline.csv", text.as_bytes())?;
    }
    println!(
        "run: {}/{} rounds completed, final accuracy {:.4}, {} bytes",
        summary.rounds_completed, summary.rounds, summary.final_accuracy, summary.total_bytes
    );
    Ok(())
}

fn attack(c: &Common, names: &[String]) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    let scenarios = if names.is_empty() {
        Scenario::suite(cfg.experiment.threshold_t)
    } else {
        names
            .iter()
            .map(|n| n.parse::<Scenario>())
            .collect::<Result<Vec<_>, _>>()?
    };
    prepare_out(c, &cfg)?;
    let mut verdicts = Vec::new();
    for sc in scenarios {
        let v = run_attack_scenario(sc, &cfg)?;
        println!(
            "{} {:<22} expected {:?}, observed {:?}: {}",
            if v.matches() { "ok  " } else { "FAIL" },
            v.scenario,
            v.expected,
            v.observed,
            v.detail
        );
        verdicts.push(v);
    }
    let text = serde_json::to_string_pretty(&verdicts).map_err(other)?;
    write(&c.out, "verdicts.json", text.as_bytes())?;
    let bad = verdicts.iter().filter(|v| !v.matches()).count();
    if bad == 0 {
        Ok(())
    } else {
        Err(CliError::Scenario(format!(
            "{bad} scenario(s) did not match expectation"
        )))
    }
}

struct Timing {
    mean_ms: f64,
    min_ms: f64,
    max_ms: f64,
}

fn time_reps<T>(reps: usize, mut f: impl FnMut() -> T) -> (Timing, T) {
    let mut samples = Vec::with_capacity(reps);
    let mut last = None;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        last = Some(f());
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let timing = Timing {
        mean_ms: samples.iter().sum::<f64>() / samples.len() as f64,
        min_ms: samples.iter().copied().fold(f64::INFINITY, f64::min),
        max_ms: samples.iter().copied().fold(0.0, f64::max),
    };
    (timing, last.expect("at least one rep"))
}

fn bench(c: &Common, etas: &[usize], reps: usize, bound: u64) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    prepare_out(c, &cfg)?;
    let x = &cfg.experiment;
    let (n, s, t) = (x.n_parties, x.s_aggregators, x.threshold_t);
    let group = cfg.group()?;
    let mut rng = seeded_or_os_rng(Some(x.seed));
    let (table, solver) = time_reps(1, || {
        DlogSolver::for_bound(&group, &group.generator_g, bound)
    });
    let mut rows = vec![
        "op,eta,bound,reps,mean_ms,per_coord_ms,min_ms,max_ms".to_string(),
        format!(
            "dlog_table,0,{bound},1,{:.4},{:.4},{:.4},{:.4}",
            table.mean_ms, table.mean_ms, table.min_ms, table.max_ms
        ),
    ];
    let label = b"bench".to_vec();
    // each party contributes bound / 2n per coordinate, so sums sit mid-range
    let v = (bound / (2 * n as u64)).max(1) as i64;
    for &eta in etas {
        if eta == 0 {
            return Err(CliError::Config("eta must be positive".into()));
        }
        let (pp, msk) =
            setup_with_group(group.clone(), &vec![eta; n], t, s, n, &mut rng).map_err(other)?;
        let weights = ScalarVector::from_i64s(&vec![1; n], &pp.group);
        let shares = dk_generate_vector(&pp, &msk, &weights, &label, &mut rng).map_err(other)?;
        let keys = (1..=n as u32)
            .map(|i| sk_distribute(&pp, &msk, i))
            .collect::<Result<Vec<_>, _>>()
            .map_err(other)?;
        let x_vec = ScalarVector::from_i64s(&vec![v; eta], &pp.group);
        let (enc, _) = time_reps(reps, || encrypt(&keys[0], &x_vec, &label, &mut rng));
        let cts = keys
            .iter()
            .map(|k| encrypt(k, &x_vec, &label, &mut rng))
            .collect::<Result<Vec<_>, _>>()
            .map_err(other)?;
        let (dec, _) = time_reps(reps, || {
            share_decrypt_vector(&pp, &cts, &weights, &shares[0])
        });
        let partials = shares[..t]
            .iter()
            .map(|sh| share_decrypt_vector(&pp, &cts, &weights, sh))
            .collect::<Result<Vec<_>, _>>()
            .map_err(other)?;
        let (comb, out) = time_reps(reps, || {
            combine_decrypt_vector(&pp, &partials, &solver, bound)
        });
        let out = out.map_err(other)?;
        if out != vec![v * n as i64; eta] {
            return Err(CliError::Other(format!("bench combine returned {out:?}")));
        }
        for (op, tm) in [
            ("encrypt", enc),
            ("share_decrypt", dec),
            ("combine_dlog", comb),
        ] {
            rows.push(format!(
                "{op},{eta},{bound},{reps},{:.4},{:.4},{:.4},{:.4}",
                tm.mean_ms,
                tm.mean_ms / eta as f64,
                tm.min_ms,
                tm.max_ms
            ));
        }
    }
    let text = rows.join("\n") + "\n";
    write(&c.out, "bench.csv", text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Keygen(c) => keygen(c),
        Command::Run { common, baseline } => run(common, *baseline),
        Command::Attack { common, scenarios } => attack(common, scenarios),
        Command::Bench {
            common,
            eta,
            reps,
            bound,
        } => bench(common, eta, *reps, *bound),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CliError::Scenario(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_SCENARIO)
        }
        Err(CliError::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
