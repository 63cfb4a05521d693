//! Metrics files and the ratio metrics computed from them.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use askac_core::ask::{MetricsRow, Observer};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};

/// Iterations averaged when deciding whether a run reached its target.
pub const CROSSING_WINDOW: usize = 10;

/// First iteration at which the trailing mean training return reached the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub iteration: u64,
    pub global_step: u64,
    /// Advisor queries up to and including that iteration.
    pub queries: u64,
}

/// Scans for the first full `window` of iterations whose mean training
/// return is at least `target`.
pub fn first_crossing(rows: &[MetricsRow], target: f64, window: usize) -> Option<Crossing> {
    let window = window.max(1);
    let mut queries = 0;
    let mut sum = 0.0;
    for (k, row) in rows.iter().enumerate() {
        queries += row.ask_count;
        sum += row.train_return;
        if k >= window {
            sum -= rows[k - window].train_return;
        }
        if k + 1 >= window && sum / window as f64 >= target {
            return Some(Crossing {
                iteration: row.iteration,
                global_step: row.global_step,
                queries,
            });
        }
    }
    None
}

fn crossing_of(rows: &[MetricsRow], target: f64, name: &str) -> Result<Crossing> {
    first_crossing(rows, target, CROSSING_WINDOW)
        .ok_or_else(|| Error::Undefined(format!("{name} never reaches {target}")))
}

/// `T_inter / T_org`: steps the interactive run needed to reach `target`
/// over the steps the original run needed.
pub fn compute_ser(interactive: &[MetricsRow], original: &[MetricsRow], target: f64) -> Result<f64> {
    let a = crossing_of(interactive, target, "interactive run")?;
    let b = crossing_of(original, target, "reference run")?;
    Ok(a.global_step as f64 / b.global_step as f64)
}

/// `T_ask / T_cm`: advisor queries of the asking run at the target over those
/// of the continuous-monitoring run.
pub fn compute_anr(asking: &[MetricsRow], monitoring: &[MetricsRow], target: f64) -> Result<f64> {
    let a = crossing_of(asking, target, "asking run")?;
    let b = crossing_of(monitoring, target, "monitoring run")?;
    if b.queries == 0 {
        return Err(Error::Undefined("reference run made no queries".into()));
    }
    Ok(a.queries as f64 / b.queries as f64)
}

/// Writes one CSV row per iteration and flushes it, so a crashed run keeps
/// every finished iteration.
pub struct CsvSink {
    writer: csv::Writer<File>,
    path: PathBuf,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(io_at(path))?;
        Ok(Self {
            writer: csv::Writer::from_writer(file),
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush().map_err(io_at(&self.path))?;
        Ok(())
    }
}

impl Observer for CsvSink {
    fn on_iteration(&mut self, row: &MetricsRow) -> askac_core::Result<()> {
        self.write(row).map_err(|e| match e {
            Error::Core(c) => c,
            other => askac_core::Error::Io(std::io::Error::other(other.to_string())),
        })
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(io_at(path))?;
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(file).deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = File::create(path).map_err(io_at(path))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n").map_err(io_at(path))?;
    Ok(())
}

#[cfg(test)]
pub(crate) fn row(iteration: u64, step: u64, ret: f64, asks: u64) -> MetricsRow {
    MetricsRow {
        iteration,
        global_step: step,
        train_return: ret,
        roa: 0.0,
        ask_count: asks,
        value_loss: 0.0,
        ewma_value_loss: 0.0,
        unstable_rate: 0.0,
        unstable_count: 0,
        wall_time: 0.0,
        episodes: 0,
        policy_loss: 0.0,
        critic_loss: 0.0,
        entropy: 0.0,
        advisor_loss: 0.0,
        ask_loss: 0.0,
        total_loss: 0.0,
        approx_kl: 0.0,
        clip_fraction: 0.0,
        grad_norm: 0.0,
        learning_rate: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Returns reach `target` from iteration `at` on; each iteration is 1000
    /// steps with `asks` queries.
    fn ramp(at: u64, len: u64, asks: u64) -> Vec<MetricsRow> {
        (1..=len)
            .map(|i| row(i, i * 1000, if i >= at { 500.0 } else { 0.0 }, asks))
            .collect()
    }

    #[test]
    fn crossing_needs_a_full_window() {
        let rows = ramp(1, 30, 0);
        assert_eq!(first_crossing(&rows, 450.0, 10).unwrap().iteration, 10);
        let rows = ramp(5, 30, 0);
        // mean of the last 10 is 500·k/10, first ≥ 450 when 9 of them are 500
        assert_eq!(first_crossing(&rows, 450.0, 10).unwrap().iteration, 13);
        assert!(first_crossing(&ramp(25, 30, 0), 450.0, 10).is_none());
    }

    #[test]
    fn crossing_counts_queries_up_to_it() {
        let c = first_crossing(&ramp(1, 30, 7), 450.0, 10).unwrap();
        assert_eq!(c.queries, 70);
        assert_eq!(c.global_step, 10_000);
    }

    #[test]
    fn ser_examples() {
        // a full window of 500s first averages ≥ 450 eight iterations after the
        // ramp, so these cross at 20 000 and 100 000 steps
        let fast = ramp(12, 200, 0);
        let slow = ramp(92, 200, 0);
        assert_eq!(first_crossing(&fast, 450.0, 10).unwrap().global_step, 20_000);
        assert!((compute_ser(&fast, &slow, 450.0).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(compute_ser(&slow, &slow, 450.0).unwrap(), 1.0);
        assert!(matches!(compute_ser(&ramp(500, 200, 0), &slow, 450.0), Err(Error::Undefined(_))));
    }

    #[test]
    fn anr_examples() {
        let cm = ramp(1, 20, 1000);
        let ask = ramp(1, 20, 50);
        assert!((compute_anr(&ask, &cm, 450.0).unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(compute_anr(&cm, &cm, 450.0).unwrap(), 1.0);
        assert!(compute_anr(&ask, &ramp(1, 20, 0), 450.0).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_column_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut sink = CsvSink::create(&path).unwrap();
        let rows = ramp(3, 5, 2);
        for r in &rows {
            sink.write(r).unwrap();
        }
        drop(sink);
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with(
            "iteration,global_step,train_return,roa,ask_count,value_loss,ewma_value_loss,unstable_rate,unstable_count,wall_time"
        ));
        assert_eq!(read_metrics(&path).unwrap(), rows);
    }
}
