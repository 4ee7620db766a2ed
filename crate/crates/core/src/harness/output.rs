//! CSV files consumed by the plotting tools.

use std::path::Path;

use serde::Serialize;

use super::experiment::RunSummary;
use super::RoundRecord;
use crate::error::Result;

pub const ROUND_HEADER: [&str; 11] = [
    "setup_id",
    "privacy_vector_id",
    "seed",
    "t",
    "phase",
    "inst_regret",
    "cum_regret",
    "term1",
    "term2",
    "safety_violation",
    "coverage",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "setup_id",
    "privacy_vector_id",
    "seed",
    "final_cum_regret",
    "normalized_final",
    "violations_total",
    "coverage_fraction",
    "bound_value",
];

#[derive(Serialize)]
struct RoundRow<'a> {
    setup_id: &'a str,
    privacy_vector_id: &'a str,
    seed: u64,
    t: usize,
    phase: &'static str,
    inst_regret: f64,
    cum_regret: f64,
    term1: f64,
    term2: f64,
    safety_violation: u8,
    coverage: u8,
}

pub fn write_rounds(
    path: &Path,
    setup_id: &str,
    vector_id: &str,
    seed: u64,
    records: &[RoundRecord],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(ROUND_HEADER)?;
    }
    for r in records {
        w.serialize(RoundRow {
            setup_id,
            privacy_vector_id: vector_id,
            seed,
            t: r.t,
            phase: r.phase.as_str(),
            inst_regret: r.inst_regret,
            cum_regret: r.cum_regret,
            term1: r.term1,
            term2: r.term2,
            safety_violation: r.safety_violated as u8,
            coverage: r.covered as u8,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(SUMMARY_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_episode, ExperimentConfig};

    #[test]
    fn round_file_layout() {
        let mut cfg = ExperimentConfig::experiment(1, 12, vec![2]).unwrap();
        cfg.t_prime_override = Some(5);
        let ep = run_episode(&cfg, &[1.0, 0.25, 0.5], 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_rounds(&path, "1", "1-0.25-0.5", 2, &ep.records).unwrap();
        let mut rd = csv::Reader::from_path(&path).unwrap();
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), ROUND_HEADER);
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 12);
        assert_eq!(&rows[0][4], "explore");
        assert_eq!(&rows[5][4], "exploit");
        assert_eq!(&rows[11][3], "12");
        let cum: f64 = rows[11][6].parse().unwrap();
        assert_eq!(cum, ep.final_regret());
    }

    #[test]
    fn empty_files_keep_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_summary(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), SUMMARY_HEADER.join(","));
    }
}
