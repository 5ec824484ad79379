use std::collections::BTreeSet;
use std::io;

use super::{BenchmarkReport, HarnessReport};
use crate::error::{Error, Result};
use crate::persist::to_canonical_json;

fn ratio(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (report, benchmark); an `ALL` row is added per report when it
/// spans several benchmarks. Trailing columns count how often each model was
/// chosen. `with_slope` inserts the mean chosen cost slope after `cost_ratio`.
pub fn write_report_csv<W: io::Write>(reports: &[HarnessReport], out: W, with_slope: bool) -> Result<()> {
    let models: BTreeSet<&String> = reports
        .iter()
        .flat_map(|r| r.overall.selection_counts.keys())
        .collect();
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec![
        "benchmark",
        "strategy",
        "beta",
        "routed_score",
        "best_single",
        "performance_ratio",
        "routed_cost",
        "cost_ratio",
    ];
    if with_slope {
        header.push("cost_slope");
    }
    header.extend(models.iter().map(|m| m.as_str()));
    writer.write_record(&header).map_err(csv_error)?;

    for report in reports {
        let mut rows: Vec<(&str, &BenchmarkReport)> =
            report.benchmarks.iter().map(|(b, r)| (b.as_str(), r)).collect();
        if rows.len() > 1 {
            rows.push(("ALL", &report.overall));
        }
        for (bench, r) in rows {
            let mut row = vec![
                bench.to_string(),
                report.strategy.clone(),
                report.beta.to_string(),
                r.routed_score.to_string(),
                r.best_single_model_id.clone(),
                ratio(r.performance_ratio),
                r.routed_cost.to_string(),
                ratio(r.cost_ratio),
            ];
            if with_slope {
                row.push(ratio(r.mean_cost_slope));
            }
            row.extend(
                models
                    .iter()
                    .map(|m| r.selection_counts.get(*m).copied().unwrap_or(0).to_string()),
            );
            writer.write_record(&row).map_err(csv_error)?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e))
}

/// Pretty JSON with sorted keys.
pub fn summary_json(reports: &[HarnessReport]) -> Result<String> {
    to_canonical_json(&reports)
}
