//! Analysis reports: the JSON artifact `analyze` writes and the
//! human-readable rendering `report` produces from it.
//!
//! A report is self-contained evidence: for every gate it records the
//! measured statistics, the thresholds they were held to, the verdict, and
//! the exact command line that reproduces the run. Report files are named
//! by configuration hash and are never overwritten — a second analysis of
//! the same experiment gets a numeric suffix.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Outcome of one verification gate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateResult {
    /// Gate name as listed in the configuration.
    pub gate: String,
    pub pass: bool,
    /// Everything that was measured, keyed by quantity.
    pub statistics: BTreeMap<String, f64>,
    /// The bounds the measurements were compared against.
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    /// Exact command line that reproduces this result.
    pub reproduce: String,
}

/// The full JSON report for one `analyze` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    /// Report format version.
    pub version: u32,
    pub config_hash: String,
    pub master_seed: u64,
    pub n: u32,
    pub a: u32,
    pub b: u32,
    pub alpha: f64,
    pub replicas: u64,
    pub horizon: u64,
    pub gates: Vec<GateResult>,
    /// True when every gate passed (vacuously true for an empty selection).
    pub all_pass: bool,
}

pub const REPORT_VERSION: u32 = 1;

/// First unused report path for this hash: `report-<hash>.json`, then
/// `report-<hash>-1.json`, `-2`, … Reports are append-only by contract.
pub fn fresh_report_path(out: &Path, config_hash: &str) -> PathBuf {
    let first = out.join(format!("report-{config_hash}.json"));
    if !first.exists() {
        return first;
    }
    for k in 1u32.. {
        let candidate = out.join(format!("report-{config_hash}-{k}.json"));
        if !candidate.exists() {
            return candidate;
        }
    }
    unreachable!("u32 report suffixes exhausted");
}

/// Writes the report as pretty JSON to the first free path and returns it.
pub fn write_report(out: &Path, report: &Report) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let path = fresh_report_path(out, &report.config_hash);
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Report(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Report(format!("{} is not a report: {e}", path.display())))
}

/// Renders the report as a fixed-width text table.
pub fn render_table(report: &Report) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "experiment {}  n={} a={} b={} alpha={}  replicas={}  horizon={}  seed={}\n\n",
        report.config_hash,
        report.n,
        report.a,
        report.b,
        report.alpha,
        report.replicas,
        report.horizon,
        report.master_seed
    ));
    let width = report
        .gates
        .iter()
        .map(|g| g.gate.len())
        .chain(["gate".len()])
        .max()
        .unwrap_or(4);
    s.push_str(&format!("{:width$}  result  details\n", "gate"));
    for g in &report.gates {
        let stats = join_map(&g.statistics);
        let bounds = join_map(&g.thresholds);
        let verdict = if g.pass { "PASS" } else { "FAIL" };
        s.push_str(&format!("{:width$}  {verdict}    {stats}", g.gate));
        if !bounds.is_empty() {
            s.push_str(&format!("  [{bounds}]"));
        }
        if let Some(notes) = &g.notes {
            s.push_str(&format!("  ({notes})"));
        }
        s.push('\n');
    }
    if report.gates.is_empty() {
        s.push_str("(no gates selected)\n");
    }
    let passed = report.gates.iter().filter(|g| g.pass).count();
    s.push_str(&format!(
        "\noverall: {} ({passed}/{} gates)\n",
        if report.all_pass { "PASS" } else { "FAIL" },
        report.gates.len()
    ));
    s
}

fn join_map(map: &BTreeMap<String, f64>) -> String {
    map.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Long-format CSV for plotting: one row per quantity, with the gate name,
/// the quantity, whether it is a measurement or a bound, and the value.
pub fn render_csv(report: &Report) -> String {
    let mut s = String::from("gate,quantity,kind,value\n");
    for g in &report.gates {
        for (k, v) in &g.statistics {
            s.push_str(&format!("{},{k},statistic,{v}\n", g.gate));
        }
        for (k, v) in &g.thresholds {
            s.push_str(&format!("{},{k},threshold,{v}\n", g.gate));
        }
        s.push_str(&format!(
            "{},pass,outcome,{}\n",
            g.gate,
            if g.pass { 1 } else { 0 }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> Report {
        let mut statistics = BTreeMap::new();
        statistics.insert("slope".to_string(), -1.002);
        statistics.insert("points".to_string(), 23.0);
        let mut thresholds = BTreeMap::new();
        thresholds.insert("slope_lo".to_string(), -1.1);
        thresholds.insert("slope_hi".to_string(), -0.9);
        Report {
            version: REPORT_VERSION,
            config_hash: "00112233aabbccdd".to_string(),
            master_seed: 7,
            n: 2,
            a: 1,
            b: 1,
            alpha: 0.8,
            replicas: 4000,
            horizon: 5000,
            gates: vec![GateResult {
                gate: "scaling".to_string(),
                pass: true,
                statistics,
                thresholds,
                notes: None,
                reproduce: "urnlab analyze --config exp.cfg".to_string(),
            }],
            all_pass: true,
        }
    }

    #[test]
    fn report_round_trips_through_json() {
        let report = sample_report();
        let text = serde_json::to_string(&report).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back.config_hash, report.config_hash);
        assert_eq!(back.gates.len(), 1);
        assert_eq!(back.gates[0].statistics["slope"], -1.002);
        assert!(back.all_pass);
    }

    #[test]
    fn fresh_paths_never_collide() {
        let dir = tempfile::tempdir().unwrap();
        let first = fresh_report_path(dir.path(), "feedc0de00000000");
        std::fs::write(&first, "{}").unwrap();
        let second = fresh_report_path(dir.path(), "feedc0de00000000");
        assert_ne!(first, second);
        std::fs::write(&second, "{}").unwrap();
        let third = fresh_report_path(dir.path(), "feedc0de00000000");
        assert_ne!(third, first);
        assert_ne!(third, second);
        assert!(third
            .file_name()
            .unwrap()
            .to_string_lossy()
            .ends_with("-2.json"));
    }

    #[test]
    fn table_shows_verdict_and_counts() {
        let table = render_table(&sample_report());
        assert!(table.contains("scaling"));
        assert!(table.contains("PASS"));
        assert!(table.contains("slope=-1.002"));
        assert!(table.contains("overall: PASS (1/1 gates)"));
    }

    #[test]
    fn table_handles_empty_reports() {
        let mut report = sample_report();
        report.gates.clear();
        let table = render_table(&report);
        assert!(table.contains("(no gates selected)"));
        assert!(table.contains("overall: PASS (0/0 gates)"));
    }

    #[test]
    fn csv_is_long_format() {
        let csv = render_csv(&sample_report());
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "gate,quantity,kind,value");
        assert!(csv.contains("scaling,slope,statistic,-1.002"));
        assert!(csv.contains("scaling,slope_lo,threshold,-1.1"));
        assert!(csv.contains("scaling,pass,outcome,1"));
    }
}
