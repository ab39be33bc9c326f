//! Metrics records, their CSV form, and cross-seed aggregation.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::HarnessError;

pub const CSV_HEADER: &str = "seed,epoch,train_loss,val_loss,val_acc,wall_seconds";

/// One evaluation point of one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub seed: u64,
    pub epoch: u32,
    /// Mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Accuracy in percent; synthetic runs report 0.
    pub val_acc: f64,
    pub wall_seconds: f64,
}

/// Which column of a record a plot or aggregation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    TrainLoss,
    ValLoss,
    ValAcc,
}

impl Metric {
    pub fn of(&self, record: &MetricsRecord) -> f64 {
        match self {
            Metric::TrainLoss => record.train_loss,
            Metric::ValLoss => record.val_loss,
            Metric::ValAcc => record.val_acc,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Metric::TrainLoss => "train loss",
            Metric::ValLoss => "validation loss",
            Metric::ValAcc => "validation accuracy (%)",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train_loss" => Ok(Metric::TrainLoss),
            "val_loss" => Ok(Metric::ValLoss),
            "val_acc" => Ok(Metric::ValAcc),
            other => Err(format!(
                "unknown metric {other:?} (expected train_loss, val_loss or val_acc)"
            )),
        }
    }
}

/// Formats with `sig` significant digits, plain decimal in the readable
/// range and scientific notation outside it.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    if exponent < -4 || exponent >= sig as i32 {
        format!("{:.*e}", sig - 1, x)
    } else {
        let decimals = (sig as i32 - 1 - exponent).max(0) as usize;
        format!("{:.*}", decimals, x)
    }
}

/// Writes records in a stable order (seed, then epoch), six significant
/// digits per float.
pub fn write_metrics_csv(records: &[MetricsRecord], path: &Path) -> Result<(), HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut rows: Vec<&MetricsRecord> = records.iter().collect();
    rows.sort_by_key(|r| (r.seed, r.epoch));
    let mut out = Vec::new();
    writeln!(out, "{CSV_HEADER}").map_err(io_err)?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.seed,
            r.epoch,
            fmt_sig(r.train_loss, 6),
            fmt_sig(r.val_loss, 6),
            fmt_sig(r.val_acc, 6),
            fmt_sig(r.wall_seconds, 6),
        )
        .map_err(io_err)?;
    }
    std::fs::write(path, out).map_err(io_err)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad_row = |line: usize, message: String| HarnessError::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(bad_row(1, format!("unexpected header {header:?}")));
        }
        None => return Err(bad_row(1, "empty file".to_string())),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad_row(idx + 1, format!("expected 6 fields, got {}", fields.len())));
        }
        let parse = |field: &str| -> Result<f64, HarnessError> {
            field
                .parse()
                .map_err(|e| bad_row(idx + 1, format!("bad float {field:?}: {e}")))
        };
        records.push(MetricsRecord {
            seed: fields[0]
                .parse()
                .map_err(|e| bad_row(idx + 1, format!("bad seed: {e}")))?,
            epoch: fields[1]
                .parse()
                .map_err(|e| bad_row(idx + 1, format!("bad epoch: {e}")))?,
            train_loss: parse(fields[2])?,
            val_loss: parse(fields[3])?,
            val_acc: parse(fields[4])?,
            wall_seconds: parse(fields[5])?,
        });
    }
    Ok(records)
}

/// Per-epoch mean and sample standard deviation of one metric across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochAggregate {
    pub epoch: u32,
    pub mean: f64,
    pub std: f64,
}

/// Groups records by epoch across seeds. Every seed must report the same
/// epoch set; a single seed aggregates with zero deviation.
pub fn aggregate(records: &[MetricsRecord], metric: Metric) -> Result<Vec<EpochAggregate>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();

    let epochs_of = |seed: u64| -> Vec<u32> {
        let mut epochs: Vec<u32> = records
            .iter()
            .filter(|r| r.seed == seed)
            .map(|r| r.epoch)
            .collect();
        epochs.sort_unstable();
        epochs
    };
    let reference = epochs_of(seeds[0]);
    for &seed in &seeds[1..] {
        if epochs_of(seed) != reference {
            return Err(HarnessError::InconsistentEpochs {
                seed_a: seeds[0],
                seed_b: seed,
            });
        }
    }

    let mut output = Vec::with_capacity(reference.len());
    for &epoch in &reference {
        let values: Vec<f64> = seeds
            .iter()
            .map(|&seed| {
                records
                    .iter()
                    .find(|r| r.seed == seed && r.epoch == epoch)
                    .map(|r| metric.of(r))
                    .expect("epoch sets were checked consistent")
            })
            .collect();
        let n = values.len() as f64;
        // identical values across seeds aggregate exactly, with no rounding
        // residue from the division
        let (mean, std) = if values.windows(2).all(|w| w[0] == w[1]) {
            (values[0], 0.0)
        } else {
            let mean = values.iter().sum::<f64>() / n;
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (mean, (ss / (n - 1.0)).sqrt())
        };
        output.push(EpochAggregate { epoch, mean, std });
    }
    Ok(output)
}

/// `<stem>.csv` inside the output directory, one file per optimizer.
pub fn metrics_path(output_dir: &Path, optimizer: &str) -> PathBuf {
    output_dir.join(format!("metrics-{optimizer}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64, epoch: u32, value: f64) -> MetricsRecord {
        MetricsRecord {
            seed,
            epoch,
            train_loss: value,
            val_loss: value + 0.5,
            val_acc: 90.0 + value,
            wall_seconds: 1.25,
        }
    }

    #[test]
    fn fmt_sig_covers_the_ranges() {
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_sig(92.51, 6), "92.5100");
        assert_eq!(fmt_sig(0.287682, 6), "0.287682");
        assert_eq!(fmt_sig(-0.003, 6), "-0.00300000");
        assert_eq!(fmt_sig(1e-9, 6), "1.00000e-9");
        assert_eq!(fmt_sig(123456789.0, 6), "1.23457e8");
        assert_eq!(fmt_sig(45.0, 6), "45.0000");
    }

    #[test]
    fn empty_records_write_a_header_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics_csv(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        assert_eq!(read_metrics_csv(&path).unwrap(), vec![]);
    }

    #[test]
    fn rows_are_ordered_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        // deliberately unsorted input
        let records = vec![
            record(2, 2, 0.25),
            record(1, 1, 0.5),
            record(2, 1, 0.3),
            record(1, 2, 0.45),
        ];
        write_metrics_csv(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let seeds: Vec<&str> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(seeds, vec!["1", "1", "2", "2"]);

        let back = read_metrics_csv(&path).unwrap();
        assert_eq!(back.len(), 4);
        for r in &back {
            let original = records
                .iter()
                .find(|o| o.seed == r.seed && o.epoch == r.epoch)
                .unwrap();
            assert!((r.train_loss - original.train_loss).abs() < 1e-5);
            assert!((r.val_acc - original.val_acc).abs() < 1e-3);
        }
    }

    #[test]
    fn three_seeds_by_45_epochs_writes_135_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut records = Vec::new();
        for seed in 1..=3 {
            for epoch in 1..=45 {
                records.push(record(seed, epoch, epoch as f64 * 0.01));
            }
        }
        write_metrics_csv(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 136);
    }

    #[test]
    fn malformed_csv_is_rejected_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "wrong,header\n").unwrap();
        assert!(matches!(
            read_metrics_csv(&path).unwrap_err(),
            HarnessError::Csv { line: 1, .. }
        ));

        std::fs::write(&path, format!("{CSV_HEADER}\n1,2,3\n")).unwrap();
        assert!(matches!(
            read_metrics_csv(&path).unwrap_err(),
            HarnessError::Csv { line: 2, .. }
        ));
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let records = vec![record(1, 5, 1.0), record(2, 5, 2.0), record(3, 5, 3.0)];
        // values 91, 92, 93 in the accuracy column: mean 92, sample std 1
        let agg = aggregate(&records, Metric::ValAcc).unwrap();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].epoch, 5);
        assert!((agg[0].mean - 92.0).abs() < 1e-12);
        assert!((agg[0].std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_degenerate_cases() {
        // identical records across seeds: std 0
        let records = vec![record(1, 1, 0.7), record(2, 1, 0.7), record(3, 1, 0.7)];
        let agg = aggregate(&records, Metric::TrainLoss).unwrap();
        assert_eq!(agg[0].std, 0.0);

        // a single seed aggregates to the value itself
        let records = vec![record(9, 1, 0.4), record(9, 2, 0.3)];
        let agg = aggregate(&records, Metric::TrainLoss).unwrap();
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].mean, 0.4);
        assert_eq!(agg[0].std, 0.0);

        assert!(matches!(
            aggregate(&[], Metric::TrainLoss).unwrap_err(),
            HarnessError::NoRecords
        ));
    }

    #[test]
    fn aggregate_rejects_inconsistent_epoch_sets() {
        let records = vec![record(1, 1, 0.5), record(1, 2, 0.4), record(2, 1, 0.5)];
        assert!(matches!(
            aggregate(&records, Metric::ValLoss).unwrap_err(),
            HarnessError::InconsistentEpochs { .. }
        ));
    }
}
