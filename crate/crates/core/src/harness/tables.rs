use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::experiment::ExperimentReport;
use crate::consensus::RoundRecord;
use crate::{Error, Result};

/// Strategy × model grid of one error metric, averaged over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub metric: String,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl Grid {
    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.columns.iter().position(|x| x == column)?;
        self.cells[r][c]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub model: String,
    pub agents: usize,
    pub seed: u64,
    pub rounds_run: usize,
    pub rounds_to_tolerance: Option<usize>,
    pub test_mse: Option<f64>,
    pub final_worst_mse: Option<f64>,
    pub final_train_loss: f64,
    pub total_messages: usize,
    pub total_bytes: usize,
    pub mean_edges: f64,
    pub server_messages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunicationRow {
    pub strategy: String,
    pub runs: usize,
    pub messages: f64,
    pub bytes: f64,
    pub mean_edges: f64,
    pub messages_per_round: f64,
    pub server_messages: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SeriesRow {
    round: usize,
    train_loss: f64,
    validation_loss: Option<f64>,
    worst_mse: Option<f64>,
    disagreement: f64,
    edges: usize,
    messages: usize,
    bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub summary: Vec<SummaryRow>,
    pub accuracy: Grid,
    pub communication: Vec<CommunicationRow>,
    /// File stem and per-round records, round 0 first.
    pub series: Vec<(String, Vec<RoundRecord>)>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Comparison grid of test error (final worst-case error when no test set
/// exists), communication totals per strategy and per-round series.
pub fn emit_tables(reports: &[ExperimentReport]) -> Result<Tables> {
    if reports.is_empty() {
        return Err(Error::Empty("no reports to tabulate"));
    }
    let summary: Vec<SummaryRow> = reports
        .iter()
        .map(|r| SummaryRow {
            strategy: r.header.strategy.name().to_string(),
            model: r.header.model.clone(),
            agents: r.config.agents,
            seed: r.header.seed,
            rounds_run: r.summary.rounds_run,
            rounds_to_tolerance: r.summary.rounds_to_tolerance,
            test_mse: r.summary.test_mse,
            final_worst_mse: r.summary.final_worst_mse,
            final_train_loss: r.summary.final_train_loss,
            total_messages: r.summary.total_messages,
            total_bytes: r.summary.total_bytes,
            mean_edges: r.summary.mean_edges,
            server_messages: r.summary.server_messages,
        })
        .collect();

    let any_test = summary.iter().any(|s| s.test_mse.is_some());
    let metric = if any_test {
        "test_mse"
    } else {
        "final_worst_mse"
    };
    let value = |s: &SummaryRow| {
        if any_test {
            s.test_mse
        } else {
            s.final_worst_mse
        }
    };
    let mut rows: Vec<String> = Vec::new();
    let mut columns: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for s in &summary {
        if !rows.contains(&s.strategy) {
            rows.push(s.strategy.clone());
        }
        if !columns.contains(&s.model) {
            columns.push(s.model.clone());
        }
        if let Some(v) = value(s) {
            cells
                .entry((s.strategy.clone(), s.model.clone()))
                .or_default()
                .push(v);
        }
    }
    let grid_cells = rows
        .iter()
        .map(|r| {
            columns
                .iter()
                .map(|c| cells.get(&(r.clone(), c.clone())).map(|v| mean(v)))
                .collect()
        })
        .collect();
    let accuracy = Grid {
        metric: metric.to_string(),
        rows: rows.clone(),
        columns,
        cells: grid_cells,
    };

    let communication = rows
        .iter()
        .map(|strategy| {
            let runs: Vec<&SummaryRow> =
                summary.iter().filter(|s| &s.strategy == strategy).collect();
            let avg = |f: &dyn Fn(&SummaryRow) -> f64| {
                mean(&runs.iter().map(|s| f(s)).collect::<Vec<_>>())
            };
            CommunicationRow {
                strategy: strategy.clone(),
                runs: runs.len(),
                messages: avg(&|s| s.total_messages as f64),
                bytes: avg(&|s| s.total_bytes as f64),
                mean_edges: avg(&|s| s.mean_edges),
                messages_per_round: avg(&|s| s.total_messages as f64 / s.rounds_run.max(1) as f64),
                server_messages: avg(&|s| s.server_messages as f64),
            }
        })
        .collect();

    let series = reports
        .iter()
        .map(|r| {
            let stem = format!(
                "{}_{}_seed{}",
                r.header.strategy.name(),
                r.header.model,
                r.header.seed
            );
            let records = std::iter::once(&r.initial)
                .chain(&r.rounds)
                .cloned()
                .collect();
            (stem, records)
        })
        .collect();
    Ok(Tables {
        summary,
        accuracy,
        communication,
        series,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

impl Tables {
    /// `summary.csv` (one row per run), `accuracy_grid.csv`,
    /// `communication.csv` and `series/<run>.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir.join("series"))?;
        let mut written = Vec::new();

        let path = dir.join("summary.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        for row in &self.summary {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join("accuracy_grid.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        let mut head = vec![format!("strategy/{}", self.accuracy.metric)];
        head.extend(self.accuracy.columns.iter().cloned());
        w.write_record(&head).map_err(csv_err)?;
        for (r, cells) in self.accuracy.rows.iter().zip(&self.accuracy.cells) {
            let mut rec = vec![r.clone()];
            rec.extend(
                cells
                    .iter()
                    .map(|c| c.map(|v| v.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join("communication.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        for row in &self.communication {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        written.push(path);

        for (stem, records) in &self.series {
            let path = dir.join("series").join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
            for r in records {
                w.serialize(SeriesRow {
                    round: r.round,
                    train_loss: r.train_loss,
                    validation_loss: r.validation_loss,
                    worst_mse: r.worst_mse,
                    disagreement: r.disagreement,
                    edges: r.metrics.edges,
                    messages: r.metrics.messages,
                    bytes: r.metrics.bytes,
                })
                .map_err(csv_err)?;
            }
            w.flush()?;
            written.push(path);
        }
        Ok(written)
    }
}
