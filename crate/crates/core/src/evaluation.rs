//! Confusion-matrix metrics, 0.01° grid aggregation, and the
//! detection-rate statistic.
//!
//! Metrics with a zero denominator are reported as explicitly undefined
//! (`None`), never silently as 0.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ddm::{grid_index, WaterMask};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Tally one (prediction, truth) pair; 1 = water.
    pub fn add(&mut self, pred: u8, truth: u8) {
        match (pred, truth) {
            (1, 1) => self.tp += 1,
            (1, 0) => self.fp += 1,
            (0, 0) => self.tn += 1,
            (0, 1) => self.fn_ += 1,
            _ => debug_assert!(false, "labels must be 0 or 1"),
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// All six metrics; `None` marks an undefined value (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub oa: Option<f64>,
    pub pe: Option<f64>,
    pub kappa: Option<f64>,
}

impl MetricsReport {
    pub fn undefined() -> Self {
        MetricsReport {
            recall: None,
            precision: None,
            f1: None,
            oa: None,
            pe: None,
            kappa: None,
        }
    }
}

/// Exact confusion-matrix metrics. κ = (OA − Pe)/(1 − Pe) with the
/// chance-agreement term Pe in its quadratic form.
pub fn metrics(c: &ConfusionCounts) -> Result<MetricsReport> {
    let total = c.total();
    if total == 0 {
        return Err(Error::domain("metrics need at least one sample"));
    }
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let n = total as f64;
    let recall = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    let oa = (tp + tn) / n;
    let pe = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n);
    let kappa = if pe < 1.0 {
        Some((oa - pe) / (1.0 - pe))
    } else {
        None
    };
    Ok(MetricsReport {
        recall,
        precision,
        f1,
        oa: Some(oa),
        pe: Some(pe),
        kappa,
    })
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else {
        None
    }
}

/// Geometry of the aggregation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_size_deg: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn from_mask(mask: &WaterMask) -> Self {
        GridSpec {
            origin_lat: mask.origin_lat,
            origin_lon: mask.origin_lon,
            cell_size_deg: mask.cell_size_deg,
            rows: mask.rows,
            cols: mask.cols,
        }
    }

    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        let r = grid_index(lat, self.origin_lat, self.cell_size_deg)?;
        let c = grid_index(lon, self.origin_lon, self.cell_size_deg)?;
        (r < self.rows && c < self.cols).then_some((r, c))
    }
}

/// One grid cell: running sums for predictions and ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GridCell {
    pub sum_p: f64,
    pub n: u64,
    pub gt_sum: f64,
    pub gt_n: u64,
}

impl GridCell {
    pub fn mean_p(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum_p / self.n as f64)
    }

    pub fn gt_mean(&self) -> Option<f64> {
        (self.gt_n > 0).then(|| self.gt_sum / self.gt_n as f64)
    }

    /// Mean-then-threshold at 0.5, for both predictions and ground truth.
    pub fn predicted_label(&self) -> Option<u8> {
        self.mean_p().map(|m| u8::from(m >= 0.5))
    }

    pub fn gt_label(&self) -> Option<u8> {
        self.gt_mean().map(|m| u8::from(m >= 0.5))
    }
}

/// Order-independent binned aggregation. Every input sample is either
/// binned exactly once or counted as skipped.
#[derive(Debug, Clone)]
pub struct GridAggregate {
    pub spec: GridSpec,
    cells: BTreeMap<(usize, usize), GridCell>,
    pub skipped: u64,
    pub total_samples: u64,
}

impl GridAggregate {
    pub fn new(spec: GridSpec) -> Self {
        GridAggregate {
            spec,
            cells: BTreeMap::new(),
            skipped: 0,
            total_samples: 0,
        }
    }

    pub fn add_prediction(&mut self, lat: f64, lon: f64, p: f64) {
        self.total_samples += 1;
        match self.spec.cell_of(lat, lon) {
            Some(key) => {
                let cell = self.cells.entry(key).or_default();
                cell.sum_p += p;
                cell.n += 1;
            }
            None => self.skipped += 1,
        }
    }

    pub fn add_ground_truth(&mut self, lat: f64, lon: f64, value: f64) {
        if let Some(key) = self.spec.cell_of(lat, lon) {
            let cell = self.cells.entry(key).or_default();
            cell.gt_sum += value;
            cell.gt_n += 1;
        }
    }

    /// Sample the mask at cell centers, aggregated with the same
    /// mean-then-threshold rule as predictions.
    pub fn add_mask(&mut self, mask: &WaterMask) {
        for r in 0..mask.rows {
            for c in 0..mask.cols {
                let lat = mask.origin_lat + (r as f64 + 0.5) * mask.cell_size_deg;
                let lon = mask.origin_lon + (c as f64 + 0.5) * mask.cell_size_deg;
                self.add_ground_truth(lat, lon, mask.get(r, c) as f64);
            }
        }
    }

    /// Associative merge of partial aggregates over the same grid.
    pub fn merge(mut self, other: GridAggregate) -> Self {
        debug_assert_eq!(self.spec, other.spec);
        for (key, cell) in other.cells {
            let slot = self.cells.entry(key).or_default();
            slot.sum_p += cell.sum_p;
            slot.n += cell.n;
            slot.gt_sum += cell.gt_sum;
            slot.gt_n += cell.gt_n;
        }
        self.skipped += other.skipped;
        self.total_samples += other.total_samples;
        self
    }

    pub fn cells(&self) -> impl Iterator<Item = (&(usize, usize), &GridCell)> {
        self.cells.iter()
    }

    pub fn binned_samples(&self) -> u64 {
        self.cells.values().map(|c| c.n).sum()
    }

    /// Cell-level confusion over cells holding both predictions and truth.
    pub fn confusion(&self) -> ConfusionCounts {
        let mut counts = ConfusionCounts::default();
        for cell in self.cells.values() {
            if let (Some(pred), Some(gt)) = (cell.predicted_label(), cell.gt_label()) {
                counts.add(pred, gt);
            }
        }
        counts
    }
}

/// Detected points over total observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionRate {
    pub detected: u64,
    pub total: u64,
    /// None when there are no observations.
    pub rate: Option<f64>,
}

impl DetectionRate {
    pub fn percent_string(&self) -> String {
        match self.rate {
            Some(r) => format!("{:.1}%", 100.0 * r),
            None => "undefined".to_string(),
        }
    }
}

pub fn detection_rate(classes: impl IntoIterator<Item = u8>) -> DetectionRate {
    let mut detected = 0;
    let mut total = 0;
    for c in classes {
        total += 1;
        detected += u64::from(c == 1);
    }
    DetectionRate {
        detected,
        total,
        rate: (total > 0).then(|| detected as f64 / total as f64),
    }
}
