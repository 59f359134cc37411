//! Binned calibration error: ECE, D-ECE, D-UCE and reliability tables.
//!
//! Bins are `B` equal-width intervals over `[0, 1]`, left-closed and
//! right-open except the last, which also contains 1.0. Each bin reports
//! the mean of the binned quantity and the mean outcome; the error is the
//! count-weighted mean absolute gap between the two.
//!
//! Outcome sums are integer counts, and confidence sums use compensated
//! summation. Partial accumulators can therefore be merged across
//! partitions without the result depending on the partitioning.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MatchedDetection;
use crate::numeric::CompensatedSum;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "ECE")]
    Ece,
    #[serde(rename = "D-ECE")]
    DEce,
    #[serde(rename = "D-UCE")]
    DUce,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            MetricKind::Ece => "ECE",
            MetricKind::DEce => "D-ECE",
            MetricKind::DUce => "D-UCE",
        })
    }
}

/// Statistics for one bin. Means are `None` for empty bins.
///
/// For D-UCE the bins are over uncertainty: `mean_uncertainty` holds the
/// binned value, `mean_outcome` is the error rate, and `mean_confidence`
/// is the mean detection score of the members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub mean_outcome: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_uncertainty: Option<f64>,
}

impl BinSummary {
    /// Mean of the quantity this bin was formed over.
    pub fn binned_mean(&self) -> Option<f64> {
        self.mean_uncertainty.or(self.mean_confidence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub metric_kind: MetricKind,
    pub error: f64,
    pub total: usize,
    pub bins: Vec<BinSummary>,
}

/// Lower edge of bin `b` out of `bins`.
pub fn bin_lower_edge(b: usize, bins: usize) -> f64 {
    b as f64 / bins as f64
}

/// Bin index for a value in `[0, 1]`, consistent with [`bin_lower_edge`].
pub fn bin_index(value: f64, bins: usize) -> usize {
    let mut idx = ((value * bins as f64).floor() as usize).min(bins - 1);
    while idx > 0 && value < bin_lower_edge(idx, bins) {
        idx -= 1;
    }
    while idx + 1 < bins && value >= bin_lower_edge(idx + 1, bins) {
        idx += 1;
    }
    idx
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BinState {
    count: usize,
    positives: usize,
    value_sum: CompensatedSum,
    aux_sum: CompensatedSum,
}

/// Mergeable per-bin sums.
#[derive(Debug, Clone, PartialEq)]
pub struct BinAccumulator {
    kind: MetricKind,
    bins: Vec<BinState>,
}

impl BinAccumulator {
    pub fn new(kind: MetricKind, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("bin count must be >= 1".into()));
        }
        Ok(Self {
            kind,
            bins: vec![BinState::default(); bins],
        })
    }

    /// Adds one sample. `value` decides the bin; `outcome` is 0 or 1;
    /// `aux` is an extra per-sample value averaged per bin (the detection
    /// score for D-UCE, ignored otherwise).
    pub fn push(&mut self, value: f64, outcome: bool, aux: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument(format!(
                "binned value {value} outside [0, 1]"
            )));
        }
        let idx = bin_index(value, self.bins.len());
        let b = &mut self.bins[idx];
        b.count += 1;
        b.positives += usize::from(outcome);
        b.value_sum.add(value);
        b.aux_sum.add(aux);
        Ok(())
    }

    pub fn merge(&mut self, other: &BinAccumulator) -> Result<()> {
        if self.kind != other.kind || self.bins.len() != other.bins.len() {
            return Err(Error::InvalidArgument("incompatible accumulators".into()));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.count += b.count;
            a.positives += b.positives;
            a.value_sum.merge(&b.value_sum);
            a.aux_sum.merge(&b.aux_sum);
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn finish(&self) -> Result<CalibrationReport> {
        let total = self.total();
        if total == 0 {
            return Err(match self.kind {
                MetricKind::Ece => Error::NoSamples,
                _ => Error::NoDetectionsAboveFloor,
            });
        }
        let n_bins = self.bins.len();
        let mut error = CompensatedSum::new();
        let mut summaries = Vec::with_capacity(n_bins);
        for (i, b) in self.bins.iter().enumerate() {
            let lo = bin_lower_edge(i, n_bins);
            let hi = bin_lower_edge(i + 1, n_bins);
            if b.count == 0 {
                summaries.push(BinSummary {
                    lo,
                    hi,
                    count: 0,
                    mean_confidence: None,
                    mean_outcome: None,
                    mean_uncertainty: None,
                });
                continue;
            }
            let n = b.count as f64;
            let mean_value = b.value_sum.value() / n;
            let positive_rate = b.positives as f64 / n;
            let (outcome, summary) = match self.kind {
                MetricKind::Ece | MetricKind::DEce => (
                    positive_rate,
                    BinSummary {
                        lo,
                        hi,
                        count: b.count,
                        mean_confidence: Some(mean_value),
                        mean_outcome: Some(positive_rate),
                        mean_uncertainty: None,
                    },
                ),
                MetricKind::DUce => {
                    let error_rate = (b.count - b.positives) as f64 / n;
                    (
                        error_rate,
                        BinSummary {
                            lo,
                            hi,
                            count: b.count,
                            mean_confidence: Some(b.aux_sum.value() / n),
                            mean_outcome: Some(error_rate),
                            mean_uncertainty: Some(mean_value),
                        },
                    )
                }
            };
            error.add(n / total as f64 * (outcome - mean_value).abs());
            summaries.push(summary);
        }
        Ok(CalibrationReport {
            metric_kind: self.kind,
            error: error.value().clamp(0.0, 1.0),
            total,
            bins: summaries,
        })
    }
}

/// Expected calibration error for classification samples
/// `(confidence, correct)`.
pub fn ece(samples: &[(f64, bool)], bins: usize) -> Result<CalibrationReport> {
    let mut acc = BinAccumulator::new(MetricKind::Ece, bins)?;
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    for &(conf, correct) in samples {
        acc.push(conf, correct, 0.0)?;
    }
    acc.finish()
}

/// Detection expected calibration error over matched detections. Scores
/// below `score_floor` are dropped first.
pub fn d_ece(
    matched: &[MatchedDetection],
    bins: usize,
    score_floor: f64,
) -> Result<CalibrationReport> {
    if !(0.0..1.0).contains(&score_floor) {
        return Err(Error::InvalidArgument(format!(
            "score floor must lie in [0, 1), got {score_floor}"
        )));
    }
    let mut acc = BinAccumulator::new(MetricKind::DEce, bins)?;
    for m in matched.iter().filter(|m| m.detection.score >= score_floor) {
        acc.push(m.detection.score, m.is_correct(), 0.0)?;
    }
    acc.finish()
}

/// D-ECE from bare `(score, f)` pairs, for callers that have no boxes.
pub fn d_ece_from_pairs(pairs: &[(f64, bool)], bins: usize) -> Result<CalibrationReport> {
    let mut acc = BinAccumulator::new(MetricKind::DEce, bins)?;
    for &(s, f) in pairs {
        acc.push(s, f, 0.0)?;
    }
    acc.finish()
}

/// Detection uncertainty calibration error: bins over uncertainty and
/// compares each bin's error rate with its mean uncertainty.
pub fn d_uce(matched: &[(MatchedDetection, f64)], bins: usize) -> Result<CalibrationReport> {
    let mut acc = BinAccumulator::new(MetricKind::DUce, bins)?;
    for (m, u) in matched {
        acc.push(*u, m.is_correct(), m.detection.score)?;
    }
    acc.finish()
}

/// D-UCE from bare `(uncertainty, f, score)` triples.
pub fn d_uce_from_triples(items: &[(f64, bool, f64)], bins: usize) -> Result<CalibrationReport> {
    let mut acc = BinAccumulator::new(MetricKind::DUce, bins)?;
    for &(u, f, s) in items {
        acc.push(u, f, s)?;
    }
    acc.finish()
}

/// One row of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub mean_outcome: f64,
    pub gap: f64,
}

/// Non-empty bins as reliability rows, ordered by lower edge. For D-UCE
/// reports the `mean_confidence` column carries the mean uncertainty.
pub fn reliability_table(report: &CalibrationReport) -> Vec<ReliabilityRow> {
    let mut rows: Vec<ReliabilityRow> = report
        .bins
        .iter()
        .filter(|b| b.count > 0)
        .filter_map(|b| {
            let x = b.binned_mean()?;
            let y = b.mean_outcome?;
            Some(ReliabilityRow {
                bin_lo: b.lo,
                bin_hi: b.hi,
                count: b.count,
                mean_confidence: x,
                mean_outcome: y,
                gap: y - x,
            })
        })
        .collect();
    rows.sort_by(|a, b| a.bin_lo.total_cmp(&b.bin_lo));
    rows
}

pub const RELIABILITY_CSV_HEADER: [&str; 6] = [
    "bin_lo",
    "bin_hi",
    "count",
    "mean_confidence",
    "mean_outcome",
    "gap",
];

pub fn write_reliability_csv<W: Write>(rows: &[ReliabilityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(RELIABILITY_CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.bin_lo.to_string(),
            r.bin_hi.to_string(),
            r.count.to_string(),
            r.mean_confidence.to_string(),
            r.mean_outcome.to_string(),
            r.gap.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn reliability_csv_string(rows: &[ReliabilityRow]) -> String {
    let mut buf = Vec::new();
    write_reliability_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn read_reliability_csv(text: &str) -> Result<Vec<ReliabilityRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse {
        path: "csv header".into(),
        message: e.to_string(),
    })?;
    if headers.iter().ne(RELIABILITY_CSV_HEADER) {
        return Err(Error::Parse {
            path: "csv header".into(),
            message: format!("expected {}", RELIABILITY_CSV_HEADER.join(",")),
        });
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                path: format!("csv line {}", i + 2),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn reliability_json(rows: &[ReliabilityRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_index_edges() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.1, 10), 1);
        assert_eq!(bin_index(0.3, 10), 3);
        assert_eq!(bin_index(0.7, 10), 7);
        assert_eq!(bin_index(0.999, 10), 9);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.5, 2), 1);
        assert_eq!(bin_index(0.49999, 2), 0);
        for b in 1..=20 {
            for i in 0..b {
                assert_eq!(bin_index(bin_lower_edge(i, b), b), i);
            }
        }
    }

    #[test]
    fn ece_golden_values() {
        let r = ece(&[(0.9, true), (0.6, false)], 2).unwrap();
        assert!((r.error - 0.25).abs() < 1e-15);
        assert_eq!(r.bins[0].count, 0);
        assert_eq!(r.bins[1].count, 2);
        assert_eq!(r.bins[1].mean_confidence, Some(0.75));

        let r = ece(&[(0.8, false)], 1).unwrap();
        assert!((r.error - 0.8).abs() < 1e-15);

        // confidences equal to their bin accuracy
        let samples = [(0.25, true), (0.25, false), (0.25, false), (0.25, false), (1.0, true)];
        assert!(ece(&samples, 4).unwrap().error.abs() < 1e-15);
    }

    #[test]
    fn ece_errors() {
        assert_eq!(ece(&[], 10).unwrap_err().to_string(), "no samples");
        assert!(ece(&[(0.5, true)], 0).is_err());
        assert!(ece(&[(1.5, true)], 10).is_err());
    }

    #[test]
    fn d_ece_golden_values() {
        let r = d_ece_from_pairs(&[(0.8, true)], 1).unwrap();
        assert!((r.error - 0.2).abs() < 1e-15);
        let r = d_ece_from_pairs(&[(0.9, true), (0.9, false)], 10).unwrap();
        assert!((r.error - 0.4).abs() < 1e-15);
        assert_eq!(r.bins[9].count, 2);
        let r = d_ece_from_pairs(&[(0.5, true), (0.5, false), (0.05, false)], 10).unwrap();
        assert!((r.error - 0.05 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn d_uce_golden_values() {
        let r = d_uce_from_triples(&[(0.6, false, 0.3)], 1).unwrap();
        assert!((r.error - 0.4).abs() < 1e-15);
        assert_eq!(r.bins[0].mean_confidence, Some(0.3));
        assert_eq!(r.bins[0].mean_uncertainty, Some(0.6));
        let r = d_uce_from_triples(&[(0.0, true, 0.9)], 1).unwrap();
        assert_eq!(r.error, 0.0);
        let r = d_uce_from_triples(&[(0.5, true, 0.9), (0.5, false, 0.4)], 4).unwrap();
        assert_eq!(r.error, 0.0);
        assert!(d_uce_from_triples(&[], 4).is_err());
    }

    #[test]
    fn reliability_rows() {
        let r = d_ece_from_pairs(&[(0.8, true)], 1).unwrap();
        let rows = reliability_table(&r);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].gap - 0.2).abs() < 1e-15);

        let r = ece(&[(0.9, true), (0.6, false)], 2).unwrap();
        let rows = reliability_table(&r);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].gap + 0.25).abs() < 1e-15);

        let r = ece(&[(0.05, true), (0.95, true), (0.55, false)], 10).unwrap();
        assert_eq!(reliability_table(&r).len(), 3);
    }

    #[test]
    fn csv_round_trip() {
        let r = ece(&[(0.05, true), (0.95, true), (0.55, false), (0.123456789, true)], 10).unwrap();
        let rows = reliability_table(&r);
        let text = reliability_csv_string(&rows);
        assert!(text.starts_with("bin_lo,bin_hi,count,mean_confidence,mean_outcome,gap\n"));
        assert_eq!(read_reliability_csv(&text).unwrap(), rows);
        assert!(read_reliability_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn accumulator_merge_is_partition_independent() {
        let samples: Vec<(f64, bool)> = (0..200)
            .map(|i| (((i * 37) % 101) as f64 / 100.0, i % 3 == 0))
            .collect();
        let whole = ece(&samples, 7).unwrap();
        let mut a = BinAccumulator::new(MetricKind::Ece, 7).unwrap();
        let mut b = BinAccumulator::new(MetricKind::Ece, 7).unwrap();
        for (i, &(c, f)) in samples.iter().enumerate() {
            if i % 5 == 0 { a.push(c, f, 0.0).unwrap() } else { b.push(c, f, 0.0).unwrap() }
        }
        b.merge(&a).unwrap();
        let merged = b.finish().unwrap();
        assert!((merged.error - whole.error).abs() < 1e-12);
        assert_eq!(merged.total, whole.total);
    }
}
