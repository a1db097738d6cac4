//! Result tables as CSV, curve data as JSON, and the decisions CSV.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::Decision;
use crate::error::DataError;
use crate::eval::experiment::ResultsTable;

pub const RESULTS_HEADER: [&str; 14] = [
    "scenario",
    "policy",
    "param",
    "budget_per_item",
    "crowd_acc",
    "seed_count",
    "cost_mean",
    "cost_std",
    "f1_mean",
    "f1_std",
    "f3_mean",
    "f3_std",
    "precision_mean",
    "recall_mean",
];

/// One CSV row per grid cell. Empty `param`/`crowd_acc` mean "none" and
/// "scenario default"; a failed cell has `seed_count` 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub policy: String,
    pub param: Option<f64>,
    pub budget_per_item: f64,
    pub crowd_acc: Option<f64>,
    pub seed_count: usize,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub f3_mean: f64,
    pub f3_std: f64,
    pub precision_mean: f64,
    pub recall_mean: f64,
}

impl ResultRow {
    pub fn is_failed(&self) -> bool {
        self.seed_count == 0
    }
}

pub fn result_rows(table: &ResultsTable) -> Vec<ResultRow> {
    table
        .cells
        .iter()
        .map(|c| {
            let nan = crate::eval::experiment::Stat {
                mean: f64::NAN,
                std: f64::NAN,
            };
            let ok = c.failed.is_none();
            let pick = |s: crate::eval::experiment::Stat| if ok { s } else { nan };
            let f1 = pick(c.summary.f(1.0).unwrap_or(nan));
            let f3 = pick(c.summary.f(3.0).unwrap_or(nan));
            let cost = pick(c.summary.cost);
            ResultRow {
                scenario: c.scenario.clone(),
                policy: c.policy.clone(),
                param: c.param,
                budget_per_item: c.budget_per_item,
                crowd_acc: c.crowd_acc,
                seed_count: if ok { c.outcomes.len() } else { 0 },
                cost_mean: cost.mean,
                cost_std: cost.std,
                f1_mean: f1.mean,
                f1_std: f1.std,
                f3_mean: f3.mean,
                f3_std: f3.std,
                precision_mean: pick(c.summary.precision).mean,
                recall_mean: pick(c.summary.recall).mean,
            }
        })
        .collect()
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], writer: W) -> csv::Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(RESULTS_HEADER)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(reader: R, origin: &Path) -> Result<Vec<ResultRow>, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_error(origin, 1, e.to_string()))?;
    if header.iter().ne(RESULTS_HEADER) {
        return Err(parse_error(origin, 1, format!("expected header {}", RESULTS_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        rows.push(rec.map_err(|e: csv::Error| parse_error(origin, i as u64 + 2, e.to_string()))?);
    }
    Ok(rows)
}

fn parse_error(path: &Path, line: u64, message: String) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFamily {
    /// x = mean cost per item, one point per policy parameter.
    CostVsF,
    /// x = budget per item.
    FVsBudget,
    /// x = crowd accuracy.
    FVsAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub param: Option<f64>,
    pub cost_mean: f64,
    pub f1_mean: f64,
    pub f3_mean: f64,
    pub f3_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub family: CurveFamily,
    pub scenario: String,
    pub policy: String,
    /// The cell coordinates held fixed along the curve.
    pub fixed: BTreeMap<String, Option<f64>>,
    pub points: Vec<CurvePoint>,
}

fn key(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

/// Groups successful rows into curves. A curve needs at least two points;
/// points are ordered by their sweep coordinate.
pub fn plot_curves(rows: &[ResultRow]) -> Vec<Curve> {
    let ok: Vec<&ResultRow> = rows.iter().filter(|r| !r.is_failed()).collect();
    let mut out = Vec::new();
    let families: [(CurveFamily, fn(&ResultRow) -> Option<f64>); 3] = [
        (CurveFamily::CostVsF, |r| r.param),
        (CurveFamily::FVsBudget, |r| Some(r.budget_per_item)),
        (CurveFamily::FVsAccuracy, |r| r.crowd_acc),
    ];
    for (family, sweep) in families {
        let mut groups: BTreeMap<(String, String, Vec<String>), Vec<&ResultRow>> = BTreeMap::new();
        for r in &ok {
            if sweep(r).is_none() {
                continue;
            }
            let fixed = match family {
                CurveFamily::CostVsF => vec![key(Some(r.budget_per_item)), key(r.crowd_acc)],
                CurveFamily::FVsBudget => vec![key(r.param), key(r.crowd_acc)],
                CurveFamily::FVsAccuracy => vec![key(r.param), key(Some(r.budget_per_item))],
            };
            groups
                .entry((r.scenario.clone(), r.policy.clone(), fixed))
                .or_default()
                .push(r);
        }
        for ((scenario, policy, _), mut members) in groups {
            if members.len() < 2 {
                continue;
            }
            members.sort_by(|a, b| sweep(a).partial_cmp(&sweep(b)).expect("finite sweep values"));
            let first = members[0];
            let fixed: BTreeMap<String, Option<f64>> = match family {
                CurveFamily::CostVsF => [
                    ("budget_per_item", Some(first.budget_per_item)),
                    ("crowd_acc", first.crowd_acc),
                ],
                CurveFamily::FVsBudget => [("param", first.param), ("crowd_acc", first.crowd_acc)],
                CurveFamily::FVsAccuracy => [
                    ("param", first.param),
                    ("budget_per_item", Some(first.budget_per_item)),
                ],
            }
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            let points = members
                .iter()
                .map(|r| CurvePoint {
                    x: match family {
                        CurveFamily::CostVsF => r.cost_mean,
                        _ => sweep(r).unwrap_or(f64::NAN),
                    },
                    param: r.param,
                    cost_mean: r.cost_mean,
                    f1_mean: r.f1_mean,
                    f3_mean: r.f3_mean,
                    f3_std: r.f3_std,
                })
                .collect();
            out.push(Curve {
                family,
                scenario,
                policy,
                fixed,
                points,
            });
        }
    }
    out
}

pub fn write_plot_json<W: Write>(rows: &[ResultRow], writer: W) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(writer, &plot_curves(rows))
}

/// Decisions CSV: `item_id,verdict,source`.
pub fn write_decisions_csv<W: Write>(decisions: &[Decision], writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for d in decisions {
        wtr.serialize(d)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_decisions_csv<R: Read>(reader: R, origin: &Path) -> Result<Vec<Decision>, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e: csv::Error| parse_error(origin, i as u64 + 2, e.to_string()))?);
    }
    Ok(out)
}
