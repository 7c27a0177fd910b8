//! Delay-Doppler map domain types and preprocessing.
//!
//! A DDM is a 17×11 grid of received power (delay bins × Doppler bins).
//! This module carries SNR computation, CYGNSS-style quality filtering,
//! central-region extraction, per-map max-normalization, and the
//! river-width → binary water-mask conversion via Otsu thresholding.

mod io;
mod otsu;

pub use io::{read_mask_pgm, read_records_jsonl, write_mask_pgm, write_records_jsonl, MaskSidecar};
pub use otsu::otsu_threshold;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DELAY_BINS: usize = 17;
pub const DOPPLER_BINS: usize = 11;

/// Fixed central block: delay rows 7..=9, Doppler columns 3..=7
/// (the 3×5 window around the specular bin).
pub const CENTRAL_ROW0: usize = 7;
pub const CENTRAL_COL0: usize = 3;
pub const CENTRAL_ROWS: usize = 3;
pub const CENTRAL_COLS: usize = 5;

/// 17×11 matrix of non-negative received power; row = delay bin,
/// column = Doppler bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DelayDopplerMap {
    power: Vec<f64>,
}

impl DelayDopplerMap {
    pub fn new(power: Vec<f64>) -> Result<Self> {
        if power.len() != DELAY_BINS * DOPPLER_BINS {
            return Err(Error::domain(format!(
                "DDM needs {}×{} = {} entries, got {}",
                DELAY_BINS,
                DOPPLER_BINS,
                DELAY_BINS * DOPPLER_BINS,
                power.len()
            )));
        }
        if !power.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::domain("DDM entries must be finite and >= 0"));
        }
        Ok(DelayDopplerMap { power })
    }

    pub fn zeros() -> Self {
        DelayDopplerMap {
            power: vec![0.0; DELAY_BINS * DOPPLER_BINS],
        }
    }

    pub fn get(&self, delay: usize, doppler: usize) -> f64 {
        self.power[delay * DOPPLER_BINS + doppler]
    }

    pub fn set(&mut self, delay: usize, doppler: usize, v: f64) {
        self.power[delay * DOPPLER_BINS + doppler] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.power
    }

    pub fn max(&self) -> f64 {
        self.power.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }
}

impl TryFrom<Vec<Vec<f64>>> for DelayDopplerMap {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != DELAY_BINS || rows.iter().any(|r| r.len() != DOPPLER_BINS) {
            return Err(Error::domain(format!(
                "DDM must be {DELAY_BINS} rows x {DOPPLER_BINS} cols"
            )));
        }
        DelayDopplerMap::new(rows.into_iter().flatten().collect())
    }
}

impl From<DelayDopplerMap> for Vec<Vec<f64>> {
    fn from(d: DelayDopplerMap) -> Self {
        d.power
            .chunks(DOPPLER_BINS)
            .map(|row| row.to_vec())
            .collect()
    }
}

/// One geolocated DDM observation: the unit of ingestion, filtering, and
/// inference. `label` = 1 marks an inland waterbody.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdmRecord {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    /// RFC 3339 UTC timestamp.
    pub time: String,
    pub sp_inc_angle_deg: f64,
    pub ant_gain_db: f64,
    /// 0 = clean; any set bit marks a quality problem.
    pub quality_flags: u32,
    /// Average per-bin noise count; must be positive.
    pub noise_avg: f64,
    pub ddm: DelayDopplerMap,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

impl DdmRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.lat.is_finite() && (-90.0..=90.0).contains(&self.lat)) {
            return Err(Error::domain(format!("latitude {} out of range", self.lat)));
        }
        if !(self.lon.is_finite() && (-180.0..=180.0).contains(&self.lon)) {
            return Err(Error::domain(format!("longitude {} out of range", self.lon)));
        }
        if !(self.noise_avg.is_finite() && self.noise_avg > 0.0) {
            return Err(Error::domain(format!(
                "noise_avg must be positive, got {}",
                self.noise_avg
            )));
        }
        if !self.sp_inc_angle_deg.is_finite() || self.sp_inc_angle_deg < 0.0 {
            return Err(Error::domain("sp_inc_angle_deg must be finite and >= 0"));
        }
        if !self.ant_gain_db.is_finite() {
            return Err(Error::domain("ant_gain_db must be finite"));
        }
        if let Some(l) = self.label {
            if l > 1 {
                return Err(Error::domain(format!("label must be 0 or 1, got {l}")));
            }
        }
        Ok(())
    }
}

/// CYGNSS-style quality thresholds. Boundary values pass: the cuts exclude
/// angles *exceeding* the max and SNRs *below* the min.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub max_inc_angle_deg: f64,
    pub min_ant_gain_db: f64,
    pub min_snr_db: f64,
    pub require_clean_flags: bool,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            max_inc_angle_deg: 65.0,
            min_ant_gain_db: 0.0,
            min_snr_db: 2.0,
            require_clean_flags: true,
        }
    }
}

/// Why a record was rejected by [`passes_filter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterReason {
    QualityFlags,
    IncidenceAngle,
    AntennaGain,
    LowSnr,
    NoSignal,
    InvalidRecord,
}

impl FilterReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterReason::QualityFlags => "quality_flags",
            FilterReason::IncidenceAngle => "incidence_angle",
            FilterReason::AntennaGain => "antenna_gain",
            FilterReason::LowSnr => "low_snr",
            FilterReason::NoSignal => "no_signal",
            FilterReason::InvalidRecord => "invalid_record",
        }
    }
}

/// SNR in dB: 10·log10(max(ddm)/noise_avg). An all-zero DDM yields the
/// negative-infinity sentinel ("no signal").
pub fn snr_db(ddm: &DelayDopplerMap, noise_avg: f64) -> Result<f64> {
    if !(noise_avg.is_finite() && noise_avg > 0.0) {
        return Err(Error::domain(format!(
            "noise_avg must be positive, got {noise_avg}"
        )));
    }
    let max = ddm.max();
    if max == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (max / noise_avg).log10())
}

/// Full quality filter. Degenerate records fail closed.
pub fn passes_filter(record: &DdmRecord, policy: &FilterPolicy) -> bool {
    filter_reason(record, policy).is_none()
}

/// Like [`passes_filter`], but says why a record was rejected.
pub fn filter_reason(record: &DdmRecord, policy: &FilterPolicy) -> Option<FilterReason> {
    if record.validate().is_err() {
        return Some(FilterReason::InvalidRecord);
    }
    if policy.require_clean_flags && record.quality_flags != 0 {
        return Some(FilterReason::QualityFlags);
    }
    if record.sp_inc_angle_deg > policy.max_inc_angle_deg {
        return Some(FilterReason::IncidenceAngle);
    }
    if record.ant_gain_db < policy.min_ant_gain_db {
        return Some(FilterReason::AntennaGain);
    }
    match snr_db(&record.ddm, record.noise_avg) {
        Ok(s) if s == f64::NEG_INFINITY => Some(FilterReason::NoSignal),
        Ok(s) if s < policy.min_snr_db => Some(FilterReason::LowSnr),
        Ok(_) => None,
        Err(_) => Some(FilterReason::InvalidRecord),
    }
}

/// The fixed 3×5 central block (delay rows 7–9, Doppler columns 3–7),
/// flattened row-major.
pub fn central_region(ddm: &DelayDopplerMap) -> [f64; CENTRAL_ROWS * CENTRAL_COLS] {
    central_region_at(ddm, CENTRAL_ROW0, CENTRAL_COL0).expect("fixed block is in range")
}

/// Central block extraction with a configurable origin, for sensitivity
/// studies of the window placement.
pub fn central_region_at(
    ddm: &DelayDopplerMap,
    row0: usize,
    col0: usize,
) -> Result<[f64; CENTRAL_ROWS * CENTRAL_COLS]> {
    if row0 + CENTRAL_ROWS > DELAY_BINS || col0 + CENTRAL_COLS > DOPPLER_BINS {
        return Err(Error::domain(format!(
            "central window at ({row0},{col0}) exceeds the {DELAY_BINS}x{DOPPLER_BINS} DDM"
        )));
    }
    let mut out = [0.0; CENTRAL_ROWS * CENTRAL_COLS];
    for r in 0..CENTRAL_ROWS {
        for c in 0..CENTRAL_COLS {
            out[r * CENTRAL_COLS + c] = ddm.get(row0 + r, col0 + c);
        }
    }
    Ok(out)
}

/// Fraction of total power inside the central block; scale-invariant.
pub fn central_energy_fraction(ddm: &DelayDopplerMap) -> f64 {
    let total = ddm.total();
    if total == 0.0 {
        return 0.0;
    }
    central_region(ddm).iter().sum::<f64>() / total
}

/// Per-map max-normalization: output max is exactly 1. Idempotent.
pub fn normalize(ddm: &DelayDopplerMap) -> Result<DelayDopplerMap> {
    let max = ddm.max();
    if max == 0.0 {
        return Err(Error::domain("empty DDM: all-zero power matrix"));
    }
    let power = ddm.values().iter().map(|&v| v / max).collect();
    Ok(DelayDopplerMap { power })
}

/// Binary ground-truth raster on a regular lat/lon grid. Row 0 starts at
/// `origin_lat`; latitude grows with the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterMask {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_size_deg: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major; entries are 0 or 1.
    pub labels: Vec<u8>,
}

impl WaterMask {
    pub fn new(
        origin_lat: f64,
        origin_lon: f64,
        cell_size_deg: f64,
        rows: usize,
        cols: usize,
        labels: Vec<u8>,
    ) -> Result<Self> {
        if rows * cols == 0 {
            return Err(Error::domain("mask must have at least one cell"));
        }
        if labels.len() != rows * cols {
            return Err(Error::domain(format!(
                "mask wants {} labels, got {}",
                rows * cols,
                labels.len()
            )));
        }
        if !(cell_size_deg.is_finite() && cell_size_deg > 0.0) {
            return Err(Error::domain("cell size must be positive"));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::domain("mask labels must be 0 or 1"));
        }
        Ok(WaterMask {
            origin_lat,
            origin_lon,
            cell_size_deg,
            rows,
            cols,
            labels,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.cols + col]
    }

    /// Cell indices for a coordinate, or `None` outside the raster.
    /// Edge points land in the higher-index cell (floor convention with a
    /// tiny guard against representation error in the division).
    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        let r = grid_index(lat, self.origin_lat, self.cell_size_deg)?;
        let c = grid_index(lon, self.origin_lon, self.cell_size_deg)?;
        if r < self.rows && c < self.cols {
            Some((r, c))
        } else {
            None
        }
    }

    pub fn label_at(&self, lat: f64, lon: f64) -> Option<u8> {
        self.cell_of(lat, lon).map(|(r, c)| self.get(r, c))
    }

    pub fn water_fraction(&self) -> f64 {
        self.labels.iter().map(|&l| l as f64).sum::<f64>() / self.labels.len() as f64
    }
}

/// Floor binning with an epsilon guard so decimal cell edges (0.01° grids
/// are not exactly representable) bin into the higher-index cell.
pub fn grid_index(coord: f64, origin: f64, cell: f64) -> Option<usize> {
    let x = (coord - origin) / cell + 1e-9;
    if x < 0.0 {
        return None;
    }
    Some(x.floor() as usize)
}

/// Width raster (meters) → grayscale → Otsu-binarized water mask.
///
/// Widths below 1 m map to grayscale 0, widths in [1, 100] m map linearly
/// to (0, 1], widths above 100 m saturate at 1. If the grayscale raster is
/// degenerate (a single occupied histogram bin), binarization falls back to
/// a fixed 0.5 cut so an all-land raster stays valid.
pub fn width_to_mask(
    widths: &[f64],
    rows: usize,
    cols: usize,
    origin_lat: f64,
    origin_lon: f64,
    cell_size_deg: f64,
) -> Result<WaterMask> {
    if rows * cols == 0 || widths.is_empty() {
        return Err(Error::domain("empty width raster"));
    }
    if widths.len() != rows * cols {
        return Err(Error::domain(format!(
            "width raster wants {} cells, got {}",
            rows * cols,
            widths.len()
        )));
    }
    if widths.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::domain("river widths must be finite and >= 0"));
    }
    let gray = width_to_grayscale(widths);
    let threshold = match otsu_threshold(&gray) {
        Ok(t) => t,
        Err(Error::DegenerateHistogram) => 0.5,
        Err(e) => return Err(e),
    };
    let labels = gray.iter().map(|&g| u8::from(g >= threshold)).collect();
    WaterMask::new(origin_lat, origin_lon, cell_size_deg, rows, cols, labels)
}

/// The grayscale leg of [`width_to_mask`].
pub fn width_to_grayscale(widths: &[f64]) -> Vec<f64> {
    widths
        .iter()
        .map(|&w| if w < 1.0 { 0.0 } else { (w / 100.0).min(1.0) })
        .collect()
}
