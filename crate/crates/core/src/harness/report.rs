//! Run artifacts: per-round CSV, timings CSV, payload breakdown and a JSON
//! summary. Files are written to a temporary name and renamed into place.

use std::io;
use std::path::Path;

use serde::Serialize;

use super::{ExperimentResult, RoundRecord};

/// Bytes needed by a minimal big-endian unsigned integer (zero is empty).
fn uint_len(v: u64) -> usize {
    (64 - v.leading_zeros() as usize).div_ceil(8)
}

/// Wire size of one protected update in its envelope: `(eta + 1)` group
/// elements of `element_bytes` each plus fixed framing.
pub fn protected_update_size(
    eta: usize,
    element_bytes: usize,
    party_id: u32,
    round: u64,
    sample_count: u64,
    dp_applied: bool,
    label_len: usize,
) -> usize {
    let field = |len: usize| 4 + len;
    let ciphertext = 1
        + 4
        + field(uint_len(u64::from(party_id)))
        + field(label_len)
        + field(uint_len(element_bytes as u64))
        + field((eta + 1) * element_bytes);
    let update = 1
        + 4
        + field(uint_len(u64::from(party_id)))
        + field(uint_len(round))
        + field(0)
        + field(uint_len(sample_count))
        + field(uint_len(u64::from(dp_applied)))
        + field(ciphertext);
    let sender = format!("p{party_id}").len();
    13 + sender + update
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

/// One row per round. Wall-clock times are kept out so that reruns with the
/// same seed reproduce the file exactly.
pub fn rounds_csv(records: &[RoundRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "round",
        "completed",
        "contributors",
        "mean_loss",
        "test_loss",
        "test_accuracy",
        "oracle_deviation",
        "total_bytes",
        "ciphertext_bytes_mean",
        "partial_bytes",
        "events",
    ])
    .expect("in-memory csv");
    for r in records {
        let ct_mean = if r.ciphertext_bytes.is_empty() {
            0.0
        } else {
            r.ciphertext_bytes.values().sum::<u64>() as f64 / r.ciphertext_bytes.len() as f64
        };
        let contributors: Vec<String> = r.contributors.iter().map(u32::to_string).collect();
        let events: Vec<String> = r.events.iter().map(ToString::to_string).collect();
        w.write_record([
            r.round_index.to_string(),
            r.completed().to_string(),
            contributors.join(" "),
            fmt_opt(r.mean_loss()),
            format!("{:.9}", r.test_loss),
            format!("{:.6}", r.test_accuracy),
            fmt_opt(r.oracle_deviation),
            r.total_bytes().to_string(),
            format!("{ct_mean:.1}"),
            r.partial_bytes.to_string(),
            events.join(";"),
        ])
        .expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn timings_csv(records: &[RoundRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "round",
        "train_ms",
        "protect_ms",
        "aggregate_ms",
        "recover_ms",
    ])
    .expect("in-memory csv");
    for r in records {
        let t = &r.phase_ms;
        w.write_record([
            r.round_index.to_string(),
            format!("{:.3}", t.train_ms),
            format!("{:.3}", t.protect_ms),
            format!("{:.3}", t.aggregate_ms),
            format!("{:.3}", t.recover_ms),
        ])
        .expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Measured protected-update bytes per party, split into the `eta + 1`
/// group elements and everything else.
pub fn payload_csv(records: &[RoundRecord], eta: usize, element_bytes: usize) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "round",
        "party",
        "ciphertext_bytes",
        "elements",
        "element_bytes",
        "group_element_bytes",
        "framing_bytes",
    ])
    .expect("in-memory csv");
    let elements = (eta + 1) * element_bytes;
    for r in records {
        for (party, bytes) in &r.ciphertext_bytes {
            w.write_record([
                r.round_index.to_string(),
                party.to_string(),
                bytes.to_string(),
                (eta + 1).to_string(),
                element_bytes.to_string(),
                elements.to_string(),
                bytes.saturating_sub(elements as u64).to_string(),
            ])
            .expect("in-memory csv");
        }
    }
    w.into_inner().expect("in-memory csv")
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub rounds: usize,
    pub rounds_completed: usize,
    pub rounds_failed: usize,
    pub final_accuracy: f64,
    pub final_test_loss: Option<f64>,
    pub total_bytes: u64,
    pub total_ms: f64,
    pub max_oracle_deviation: Option<f64>,
    pub vector_len: usize,
    pub element_bytes: usize,
    pub mean_ciphertext_bytes: f64,
    pub mean_partial_bytes_per_round: f64,
}

impl ExperimentSummary {
    pub fn from_result(result: &ExperimentResult, element_bytes: usize) -> Self {
        let records = &result.records;
        let completed = records.iter().filter(|r| r.completed()).count();
        let ct: Vec<u64> = records
            .iter()
            .flat_map(|r| r.ciphertext_bytes.values().copied())
            .collect();
        let mean = |xs: &[f64]| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        Self {
            rounds: records.len(),
            rounds_completed: completed,
            rounds_failed: records.len() - completed,
            final_accuracy: result.final_accuracy,
            final_test_loss: records.last().map(|r| r.test_loss),
            total_bytes: records.iter().map(RoundRecord::total_bytes).sum(),
            total_ms: records
                .iter()
                .map(|r| {
                    let t = &r.phase_ms;
                    t.train_ms + t.protect_ms + t.aggregate_ms + t.recover_ms
                })
                .sum(),
            max_oracle_deviation: records
                .iter()
                .filter_map(|r| r.oracle_deviation)
                .reduce(f64::max),
            vector_len: result.final_model.weights.len(),
            element_bytes,
            mean_ciphertext_bytes: mean(&ct.iter().map(|&b| b as f64).collect::<Vec<_>>()),
            mean_partial_bytes_per_round: mean(
                &records
                    .iter()
                    .map(|r| r.partial_bytes as f64)
                    .collect::<Vec<_>>(),
            ),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is serialisable")
    }
}
