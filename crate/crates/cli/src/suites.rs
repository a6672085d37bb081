//! Named suites, each a group of acceptance criteria, and report writing.

use std::fs;
use std::path::Path;

use freefield::acceptance::{self, CRITERIA};
use freefield::report::CheckReport;
use serde::Serialize;

use crate::config::RunConfig;

pub const SUITES: [(&str, &[u8]); 8] = [
    ("propagators", &[1, 2, 9]),
    ("algebra", &[3, 4, 12]),
    ("bv", &[6, 7]),
    ("cohomology", &[8]),
    ("net", &[5, 10]),
    ("factorization", &[13]),
    ("comparison", &[11]),
    ("all", &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13]),
];

pub fn criteria_for(suite: &str) -> Option<&'static [u8]> {
    SUITES.iter().find(|(n, _)| *n == suite).map(|(_, c)| *c)
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub passed: bool,
    pub criteria: Vec<CriterionOutcome>,
    #[serde(skip)]
    pub report: CheckReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema: u32,
    pub passed: bool,
    pub suites: Vec<SuiteOutcome>,
}

/// Runs one suite. A criterion that errors becomes a failed record named
/// after the criterion, so the exit status still reflects it.
pub fn run_suite(suite: &str, cfg: &RunConfig) -> Option<SuiteOutcome> {
    let ids = criteria_for(suite)?;
    let acc = cfg.acceptance();
    // the output directory does not affect results; keep it out of reports
    let mut scenario = serde_json::to_value(cfg).unwrap_or_default();
    if let Some(m) = scenario.as_object_mut() {
        m.remove("out");
    }
    let mut report = CheckReport::new(suite, scenario);
    let mut criteria = Vec::new();
    for &id in ids {
        let name = CRITERIA[id as usize - 1].1;
        let prefix = format!("{id:02}_{name}");
        let outcome = match acceptance::run(id, &acc) {
            Ok(rep) => {
                report.wall_time_s += rep.wall_time_s;
                let failures = rep.failures().map(|r| r.name.clone()).collect();
                let o = CriterionOutcome {
                    id,
                    name,
                    passed: rep.passed(),
                    checks: rep.records.len(),
                    failures,
                };
                report.records.extend(rep.records.into_iter().map(|mut r| {
                    r.name = format!("{prefix}.{}", r.name);
                    r
                }));
                o
            }
            Err(e) => {
                report.push(freefield::report::CheckRecord::boolean(
                    format!("{prefix}.error"),
                    e.to_string(),
                    false,
                ));
                CriterionOutcome {
                    id,
                    name,
                    passed: false,
                    checks: 1,
                    failures: vec![format!("error: {e}")],
                }
            }
        };
        criteria.push(outcome);
    }
    report.sort();
    Some(SuiteOutcome {
        suite: suite.to_string(),
        passed: report.passed(),
        criteria,
        report,
    })
}

/// Writes `<suite>.json` per suite and `summary.json`.
pub fn write_reports(out: &Path, outcomes: &[SuiteOutcome]) -> std::io::Result<Summary> {
    fs::create_dir_all(out)?;
    for o in outcomes {
        let text = serde_json::to_string_pretty(&o.report)?;
        fs::write(out.join(format!("{}.json", o.suite)), text)?;
    }
    let summary = Summary {
        schema: 1,
        passed: outcomes.iter().all(|o| o.passed),
        suites: outcomes.to_vec(),
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_covers_every_criterion_once() {
        let all = criteria_for("all").unwrap();
        assert_eq!(all.len(), CRITERIA.len());
        let mut named: Vec<u8> = SUITES.iter().filter(|(n, _)| *n != "all").flat_map(|(_, c)| c.iter().copied()).collect();
        named.sort_unstable();
        assert_eq!(named, all);
        assert!(criteria_for("everything").is_none());
    }
}
