//! Aggregates per-seed evaluation reports laid out as
//! `<runs>/<condition>_<scenario>/seed_<n>/report.json`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{load_report, EvalReport};
use crate::error::{Error, Result};
use crate::pairgen::Scenario;
use crate::training::LabelCondition;

/// Written next to the seed directories; records which seeds were planned.
pub const RUN_GROUP_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunGroupInfo {
    pub condition: LabelCondition,
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Config(format!("unknown report format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAcc {
    pub seed: u64,
    pub acc: f64,
}

/// One scenario under one label condition, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: LabelCondition,
    pub scenario: Scenario,
    /// Absent when no seed finished.
    pub mean_acc: Option<f64>,
    pub acc_per_seed: Vec<SeedAcc>,
    pub utt_srcc: Option<f64>,
    pub sys_srcc: Option<f64>,
    pub n_pairs: usize,
    pub n_ties: usize,
    pub missing_seeds: Vec<u64>,
    pub incomplete: bool,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn parse_group_name(name: &str) -> Option<(LabelCondition, Scenario)> {
    let (cond, scenario) = name.rsplit_once('_')?;
    Some((cond.parse().ok()?, scenario.parse().ok()?))
}

fn scenario_rank(s: &Scenario) -> usize {
    Scenario::ALL.iter().position(|x| x == s).unwrap_or(usize::MAX)
}

fn read_group(dir: &Path) -> Result<Option<ReportRow>> {
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let info_path = dir.join(RUN_GROUP_FILE);
    let info: Option<RunGroupInfo> = if info_path.exists() {
        let text = std::fs::read_to_string(&info_path).map_err(|e| Error::io(&info_path, e))?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", info_path.display())))?)
    } else {
        None
    };
    let Some((condition, scenario)) = info
        .as_ref()
        .map(|i| (i.condition, i.scenario))
        .or_else(|| parse_group_name(name))
    else {
        return Ok(None);
    };
    let mut reports: Vec<(u64, EvalReport)> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(seed) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("seed_"))
            .and_then(|n| n.parse::<u64>().ok())
        else {
            continue;
        };
        let report_path = path.join("report.json");
        if report_path.exists() {
            reports.push((seed, load_report(&report_path)?));
        }
    }
    reports.sort_by_key(|(seed, _)| *seed);
    let found: BTreeSet<u64> = reports.iter().map(|(s, _)| *s).collect();
    let missing_seeds: Vec<u64> = info
        .map(|i| i.seeds.into_iter().filter(|s| !found.contains(s)).collect())
        .unwrap_or_default();
    if reports.is_empty() {
        return Ok(Some(ReportRow {
            condition,
            scenario,
            mean_acc: None,
            acc_per_seed: Vec::new(),
            utt_srcc: None,
            sys_srcc: None,
            n_pairs: 0,
            n_ties: 0,
            incomplete: true,
            missing_seeds,
        }));
    }
    let accs: Vec<f64> = reports.iter().map(|(_, r)| r.acc).collect();
    let utt: Vec<f64> = reports.iter().filter_map(|(_, r)| r.utt_srcc).collect();
    let sys: Vec<f64> = reports.iter().filter_map(|(_, r)| r.sys_srcc).collect();
    Ok(Some(ReportRow {
        condition,
        scenario,
        mean_acc: mean(&accs),
        acc_per_seed: reports.iter().map(|(seed, r)| SeedAcc { seed: *seed, acc: r.acc }).collect(),
        utt_srcc: mean(&utt),
        sys_srcc: mean(&sys),
        n_pairs: reports[0].1.n_pairs,
        n_ties: reports[0].1.n_ties,
        incomplete: !missing_seeds.is_empty(),
        missing_seeds,
    }))
}

/// One row per `<condition>_<scenario>` directory, ordered by condition
/// (LA, LM, MOS_ONLY) and then scenario (m-m, nm-m, m-nm, nm-nm).
pub fn collect_runs(runs_dir: &Path) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for entry in std::fs::read_dir(runs_dir).map_err(|e| Error::io(runs_dir, e))? {
        let path = entry.map_err(|e| Error::io(runs_dir, e))?.path();
        if path.is_dir() {
            if let Some(row) = read_group(&path)? {
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("no runs under {}", runs_dir.display())));
    }
    rows.sort_by_key(|r| (r.condition, scenario_rank(&r.scenario)));
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

pub fn render_report(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(rows).map(|s| s + "\n").map_err(|e| Error::Serde(e.to_string()))
        }
        ReportFormat::Csv => {
            let k = rows.iter().map(|r| r.acc_per_seed.len()).max().unwrap_or(0);
            let mut header: Vec<String> = vec!["condition".into(), "scenario".into(), "mean_acc".into()];
            header.extend((1..=k).map(|i| format!("acc_seed_{i}")));
            header.extend(["utt_srcc", "sys_srcc", "n_pairs", "n_ties", "incomplete"].map(String::from));
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            let io = |e: csv::Error| Error::Serde(e.to_string());
            w.write_record(&header).map_err(io)?;
            for r in rows {
                let mut rec = vec![
                    r.condition.to_string(),
                    r.scenario.to_string(),
                    r.mean_acc.map(|v| v.to_string()).unwrap_or_default(),
                ];
                for i in 0..k {
                    rec.push(r.acc_per_seed.get(i).map(|s| s.acc.to_string()).unwrap_or_default());
                }
                rec.push(r.utt_srcc.map(|v| v.to_string()).unwrap_or_default());
                rec.push(r.sys_srcc.map(|v| v.to_string()).unwrap_or_default());
                rec.push(r.n_pairs.to_string());
                rec.push(r.n_ties.to_string());
                rec.push(r.incomplete.to_string());
                w.write_record(&rec).map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Text => {
            let mut out = String::new();
            let scenarios: Vec<Scenario> = Scenario::ALL
                .into_iter()
                .filter(|s| rows.iter().any(|r| r.scenario == *s))
                .collect();
            let conditions: BTreeSet<LabelCondition> = rows.iter().map(|r| r.condition).collect();
            let _ = write!(out, "{:<10}", "ACC");
            for s in &scenarios {
                let _ = write!(out, "{:>10}", s.to_string());
            }
            out.push('\n');
            for c in &conditions {
                let _ = write!(out, "{:<10}", c.to_string());
                for s in &scenarios {
                    let v = rows
                        .iter()
                        .find(|r| r.condition == *c && r.scenario == *s)
                        .map(|r| format!("{}{}", cell(r.mean_acc), if r.incomplete { "*" } else { "" }));
                    let _ = write!(out, "{:>10}", v.unwrap_or_else(|| "-".into()));
                }
                out.push('\n');
            }
            out.push('\n');
            let _ = writeln!(
                out,
                "{:<10}{:<8}{:>9}{:>6}{:>10}{:>10}{:>8}{:>7}  per-seed ACC",
                "condition", "scenario", "mean_acc", "seeds", "utt_srcc", "sys_srcc", "pairs", "ties"
            );
            for r in rows {
                let seeds: Vec<String> = r.acc_per_seed.iter().map(|s| format!("{}:{:.4}", s.seed, s.acc)).collect();
                let _ = write!(
                    out,
                    "{:<10}{:<8}{:>9}{:>6}{:>10}{:>10}{:>8}{:>7}  {}",
                    r.condition.to_string(),
                    r.scenario.to_string(),
                    cell(r.mean_acc),
                    r.acc_per_seed.len(),
                    cell(r.utt_srcc),
                    cell(r.sys_srcc),
                    r.n_pairs,
                    r.n_ties,
                    seeds.join(" ")
                );
                if r.incomplete {
                    let missing: Vec<String> = r.missing_seeds.iter().map(u64::to_string).collect();
                    let _ = write!(out, "  [incomplete: missing seed(s) {}]", missing.join(", "));
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}
