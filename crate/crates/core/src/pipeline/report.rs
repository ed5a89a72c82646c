use std::fmt::Write as _;
use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::features::{format_timestamp, parse_timestamp, Variant};

pub const MAPE_NOTE: &str = "MAPE averages |pred - actual| / actual over entries with nonzero actual demand; zero-demand entries are excluded.";

/// Metrics of one variant on one scenario. Metrics are `None` when the
/// scenario subset is empty (or, for MAPE, has no nonzero actuals).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub scenario: String,
    pub mse: Option<f64>,
    pub mape: Option<f64>,
    pub hours: usize,
    pub zero_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

fn io_err(e: csv::Error) -> PipelineError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => PipelineError::Io(e),
        other => PipelineError::Empty(format!("csv: {other:?}")),
    }
}

impl MetricsReport {
    /// Appends rows, keeping variants in reporting order.
    pub fn merge(&mut self, rows: Vec<MetricsRow>) {
        self.rows.extend(rows);
        let rank = |name: &str| {
            name.parse::<Variant>()
                .ok()
                .and_then(|v| Variant::all().iter().position(|x| *x == v))
                .unwrap_or(usize::MAX)
        };
        self.rows.sort_by_key(|r| rank(&r.variant));
    }

    pub fn get(&self, variant: &str, scenario: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.variant == variant && r.scenario == scenario)
    }

    fn variants(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.variant.as_str()) {
                out.push(&r.variant);
            }
        }
        out
    }

    fn scenarios(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.scenario.as_str()) {
                out.push(&r.scenario);
            }
        }
        out
    }

    /// CSV with header `variant,scenario,mse,mape,hours,zero_fraction`.
    /// Floats use shortest round-trip formatting; absent values are empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PipelineError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["variant", "scenario", "mse", "mape", "hours", "zero_fraction"]).map_err(io_err)?;
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            wr.write_record([
                r.variant.clone(),
                r.scenario.clone(),
                f(r.mse),
                f(r.mape),
                r.hours.to_string(),
                f(r.zero_fraction),
            ])
            .map_err(io_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, PipelineError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(io_err)?;
            if rec.len() != 6 {
                return Err(PipelineError::Empty(format!("report row has {} fields, expected 6", rec.len())));
            }
            let opt = |s: &str| -> Result<Option<f64>, PipelineError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| PipelineError::Empty(format!("bad number {s:?} in report")))
                }
            };
            rows.push(MetricsRow {
                variant: rec[0].to_string(),
                scenario: rec[1].to_string(),
                mse: opt(&rec[2])?,
                mape: opt(&rec[3])?,
                hours: rec[4].parse().map_err(|_| PipelineError::Empty(format!("bad hour count {:?}", &rec[4])))?,
                zero_fraction: opt(&rec[5])?,
            });
        }
        Ok(Self { rows })
    }

    /// Aligned text tables: an overall table, then one table per context
    /// family (weather, car flow, time embedding) across all scenarios, each
    /// with the baseline and the combined variant for reference.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Note: {MAPE_NOTE}\n");
        let variants = self.variants();
        let scenarios = self.scenarios();

        if let Some(first) = variants.first() {
            let _ = writeln!(out, "Scenarios");
            let mut t = vec![vec!["scenario".to_string(), "hours".into(), "% zeros".into()]];
            for s in &scenarios {
                if let Some(r) = self.get(first, s) {
                    t.push(vec![
                        s.to_string(),
                        r.hours.to_string(),
                        r.zero_fraction.map(|z| format!("{:.1}", 100.0 * z)).unwrap_or_else(|| "-".into()),
                    ]);
                }
            }
            out.push_str(&render(&t));
            out.push('\n');
        }

        let _ = writeln!(out, "Overall performance");
        let mut t = vec![vec!["variant".to_string(), "MSE".into(), "MAPE".into()]];
        for v in &variants {
            let r = self.get(v, "all");
            t.push(vec![v.to_string(), num(r.and_then(|r| r.mse)), num(r.and_then(|r| r.mape))]);
        }
        out.push_str(&render(&t));

        for (family, title) in [("W", "Weather variants"), ("I", "Car-flow variants"), ("T", "Time-embedding variants")] {
            let members: Vec<&str> = variants
                .iter()
                .copied()
                .filter(|v| {
                    v.parse::<Variant>()
                        .map(|x| x.family() == family || x == Variant::X || x == Variant::Wit)
                        .unwrap_or(false)
                })
                .collect();
            let has_family = members.iter().any(|v| v.parse::<Variant>().map(|x| x.family() == family).unwrap_or(false));
            if !has_family {
                continue;
            }
            let _ = writeln!(out, "\n{title} by scenario");
            let mut header = vec!["variant".to_string()];
            for s in &scenarios {
                header.push(format!("{s} MSE"));
                header.push(format!("{s} MAPE"));
            }
            let mut t = vec![header];
            for v in members {
                let mut row = vec![v.to_string()];
                for s in &scenarios {
                    let r = self.get(v, s);
                    row.push(num(r.and_then(|r| r.mse)));
                    row.push(num(r.and_then(|r| r.mape)));
                }
                t.push(row);
            }
            out.push_str(&render(&t));
        }
        out
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn render(table: &[Vec<String>]) -> String {
    let cols = table.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

/// One dumped prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub ts: NaiveDateTime,
    pub od_index: usize,
    pub actual: f64,
    pub predicted: f64,
}

/// CSV with header `ts,od_index,actual,predicted`, round-trip float formatting.
pub fn write_predictions<W: Write>(w: W, records: &[PredictionRecord]) -> Result<(), PipelineError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["ts", "od_index", "actual", "predicted"]).map_err(io_err)?;
    for r in records {
        wr.write_record([
            format_timestamp(r.ts),
            r.od_index.to_string(),
            r.actual.to_string(),
            r.predicted.to_string(),
        ])
        .map_err(io_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_predictions<R: Read>(r: R) -> Result<Vec<PredictionRecord>, PipelineError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(io_err)?;
        let bad = |what: &str| PipelineError::Empty(format!("bad {what} in prediction dump"));
        out.push(PredictionRecord {
            ts: parse_timestamp(rec.get(0).ok_or_else(|| bad("ts"))?)?,
            od_index: rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("od_index"))?,
            actual: rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("actual"))?,
            predicted: rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("predicted"))?,
        });
    }
    Ok(out)
}
