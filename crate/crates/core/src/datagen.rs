//! Procedural scene and DDM synthesis: the desk-scale stand-in for real
//! GNSS-R collections and hydrography rasters.
//!
//! A scene is a river trunk with procedurally grown tributaries rasterized
//! into a width raster and Otsu-binarized into the ground-truth mask.
//! Specular-point tracks cross the region at ≈0.03° spacing (one sample
//! each 500 ms at 2 Hz), and every point gets a synthetic DDM: water yields
//! a concentrated peak in the central bins, land a broader delay-skewed
//! ridge. Everything is a pure function of (scene, seed).

use chrono::{DateTime, SecondsFormat, Utc};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ddm::{width_to_mask, DdmRecord, DelayDopplerMap, WaterMask, DELAY_BINS, DOPPLER_BINS};
use crate::numerics::derive_rng_seed;
use crate::{Error, Result};

use rand::SeedableRng;

pub const METERS_PER_DEG: f64 = 111_320.0;

/// Control point of a river polyline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RiverPoint {
    pub lat: f64,
    pub lon: f64,
    pub width_m: f64,
}

/// Shape statistics of the synthetic DDMs plus metadata distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DdmSynthParams {
    /// Coherent peak amplitude range, in units of the noise floor.
    pub coherent_amp: (f64, f64),
    /// Peak spread in delay bins.
    pub coherent_sigma_delay: f64,
    /// Peak spread in Doppler bins.
    pub coherent_sigma_doppler: f64,
    /// Incoherent spread multiplier (> 1).
    pub incoherent_spread_mult: f64,
    /// Tail elongation along late delays for incoherent returns.
    pub incoherent_tail_skew: f64,
    /// Incoherent peak amplitude, as a fraction of the coherent draw.
    pub incoherent_amp_factor: (f64, f64),
    pub noise_floor_mean: f64,
    pub noise_jitter: f64,
    /// Peak center jitter in bins.
    pub center_jitter: f64,
    pub inc_angle_range: (f64, f64),
    pub gain_range: (f64, f64),
    /// Fraction of records that intentionally violate the quality filter.
    pub violator_fraction: f64,
}

impl Default for DdmSynthParams {
    fn default() -> Self {
        DdmSynthParams {
            coherent_amp: (40.0, 120.0),
            coherent_sigma_delay: 0.8,
            coherent_sigma_doppler: 1.1,
            incoherent_spread_mult: 3.0,
            incoherent_tail_skew: 2.2,
            incoherent_amp_factor: (0.25, 0.5),
            noise_floor_mean: 1.0,
            noise_jitter: 0.01,
            center_jitter: 0.7,
            inc_angle_range: (5.0, 64.0),
            gain_range: (2.0, 14.0),
            violator_fraction: 0.05,
        }
    }
}

impl DdmSynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.coherent_sigma_delay <= 0.0 || self.coherent_sigma_doppler <= 0.0 {
            return Err(Error::domain("DDM spreads must be positive"));
        }
        if self.incoherent_spread_mult <= 1.0 {
            return Err(Error::domain(
                "incoherent spread must exceed the coherent spread (multiplier > 1)",
            ));
        }
        if self.noise_floor_mean <= 0.0 {
            return Err(Error::domain("noise floor must be positive"));
        }
        if !(0.0..=1.0).contains(&self.violator_fraction) {
            return Err(Error::domain("violator_fraction must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Full scene description, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub cell_size_deg: f64,
    pub seed: u64,
    pub trunk: Vec<RiverPoint>,
    pub branch_depth: u32,
    pub branches_per_level: u32,
    pub width_decay: f64,
    pub branch_length_frac: f64,
    pub n_tracks: u32,
    pub track_spacing_deg: f64,
    pub date_start: String,
    pub date_end: String,
    pub synth: DdmSynthParams,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lat_min < self.lat_max && self.lon_min < self.lon_max) {
            return Err(Error::domain("scene bounds must be well-ordered"));
        }
        if self.cell_size_deg <= 0.0 || self.track_spacing_deg <= 0.0 {
            return Err(Error::domain("cell size and track spacing must be positive"));
        }
        if self.trunk.iter().any(|p| p.width_m <= 0.0) {
            return Err(Error::domain("river widths must be positive"));
        }
        parse_time(&self.date_start)?;
        let (t0, t1) = (parse_time(&self.date_start)?, parse_time(&self.date_end)?);
        if t1 <= t0 {
            return Err(Error::domain("date_end must be after date_start"));
        }
        self.synth.validate()?;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        ((self.lat_max - self.lat_min) / self.cell_size_deg).round() as usize
    }

    pub fn cols(&self) -> usize {
        ((self.lon_max - self.lon_min) / self.cell_size_deg).round() as usize
    }
}

pub fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::domain(format!("bad RFC3339 timestamp '{s}': {e}")))
}

fn format_time(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Rasterize the scene's rivers: returns the binary mask and the width
/// raster (meters) it was thresholded from.
pub fn render_mask(scene: &SceneSpec) -> Result<(WaterMask, Vec<f64>)> {
    scene.validate()?;
    let (rows, cols) = (scene.rows(), scene.cols());
    if rows * cols == 0 {
        return Err(Error::domain("scene raster has no cells"));
    }
    let mut widths = vec![0.0f64; rows * cols];
    let mut rivers: Vec<Vec<RiverPoint>> = Vec::new();
    if !scene.trunk.is_empty() {
        rivers.push(scene.trunk.clone());
        let mut rng = ChaCha12Rng::seed_from_u64(derive_rng_seed(&[scene.seed, 0xA0]));
        let trunk = scene.trunk.clone();
        grow_tributaries(scene, &trunk, scene.branch_depth, &mut rng, &mut rivers);
    }
    for river in &rivers {
        stamp_polyline(scene, river, &mut widths, rows, cols);
    }
    let mask = width_to_mask(
        &widths,
        rows,
        cols,
        scene.lat_min,
        scene.lon_min,
        scene.cell_size_deg,
    )?;
    Ok((mask, widths))
}

fn polyline_length(points: &[RiverPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| ((w[1].lat - w[0].lat).powi(2) + (w[1].lon - w[0].lon).powi(2)).sqrt())
        .sum()
}

/// Point, direction (radians), and width at arc-length fraction t ∈ [0,1].
fn along(points: &[RiverPoint], t: f64) -> (f64, f64, f64, f64) {
    let total = polyline_length(points);
    let mut remaining = t.clamp(0.0, 1.0) * total;
    for w in points.windows(2) {
        let seg = ((w[1].lat - w[0].lat).powi(2) + (w[1].lon - w[0].lon).powi(2)).sqrt();
        if seg >= remaining || seg == 0.0 {
            let f = if seg == 0.0 { 0.0 } else { remaining / seg };
            let lat = w[0].lat + f * (w[1].lat - w[0].lat);
            let lon = w[0].lon + f * (w[1].lon - w[0].lon);
            let dir = (w[1].lat - w[0].lat).atan2(w[1].lon - w[0].lon);
            let width = w[0].width_m + f * (w[1].width_m - w[0].width_m);
            return (lat, lon, dir, width);
        }
        remaining -= seg;
    }
    let last = points[points.len() - 1];
    let prev = points[points.len() - 2];
    let dir = (last.lat - prev.lat).atan2(last.lon - prev.lon);
    (last.lat, last.lon, dir, last.width_m)
}

fn grow_tributaries(
    scene: &SceneSpec,
    parent: &[RiverPoint],
    depth: u32,
    rng: &mut ChaCha12Rng,
    out: &mut Vec<Vec<RiverPoint>>,
) {
    if depth == 0 || parent.len() < 2 {
        return;
    }
    let parent_len = polyline_length(parent);
    for _ in 0..scene.branches_per_level {
        let t = rng.gen_range(0.15..0.85);
        let (lat0, lon0, dir, width0) = along(parent, t);
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let angle = dir + side * rng.gen_range(0.6..1.4);
        let len = parent_len * scene.branch_length_frac * rng.gen_range(0.7..1.1);
        let width = (width0 * scene.width_decay * rng.gen_range(0.8..1.0)).max(1.0);
        let bend = rng.gen_range(-0.35..0.35);
        let mut branch = Vec::with_capacity(4);
        for k in 0..4 {
            let f = k as f64 / 3.0;
            let a = angle + bend * f;
            branch.push(RiverPoint {
                lat: lat0 + len * f * a.sin(),
                lon: lon0 + len * f * a.cos(),
                // Tributaries taper toward the head.
                width_m: width * (1.0 - 0.6 * f),
            });
        }
        grow_tributaries(scene, &branch, depth - 1, rng, out);
        out.push(branch);
    }
}

fn stamp_polyline(
    scene: &SceneSpec,
    river: &[RiverPoint],
    widths: &mut [f64],
    rows: usize,
    cols: usize,
) {
    let cell = scene.cell_size_deg;
    let step = cell / 3.0;
    let total = polyline_length(river);
    if total == 0.0 || river.len() < 2 {
        return;
    }
    let n_steps = (total / step).ceil() as usize + 1;
    for k in 0..=n_steps {
        let t = k as f64 / n_steps as f64;
        let (lat, lon, _, width_m) = along(river, t);
        let radius_deg = width_m / METERS_PER_DEG / 2.0;
        let r_cells = (radius_deg / cell).ceil() as i64;
        let r0 = ((lat - scene.lat_min) / cell).floor() as i64;
        let c0 = ((lon - scene.lon_min) / cell).floor() as i64;
        for dr in -r_cells..=r_cells {
            for dc in -r_cells..=r_cells {
                let (r, c) = (r0 + dr, c0 + dc);
                if r < 0 || c < 0 || r >= rows as i64 || c >= cols as i64 {
                    continue;
                }
                let cell_lat = scene.lat_min + (r as f64 + 0.5) * cell;
                let cell_lon = scene.lon_min + (c as f64 + 0.5) * cell;
                let d = ((cell_lat - lat).powi(2) + (cell_lon - lon).powi(2)).sqrt();
                // Always wet the containing cell so sub-cell rivers still
                // leave a connected line.
                if d <= radius_deg.max(cell * 0.5) {
                    let idx = (r as usize) * cols + c as usize;
                    widths[idx] = widths[idx].max(width_m);
                }
            }
        }
    }
}

/// One specular point of a track.
#[derive(Debug, Clone)]
pub struct TrackPoint {
    pub track: usize,
    pub index: usize,
    pub lat: f64,
    pub lon: f64,
    pub time: String,
}

/// Straight tracks across the region with ≈`track_spacing_deg` along-track
/// spacing (≈3.5 km at 2 Hz); points are strictly inside the bounds and
/// timestamped 500 ms apart.
pub fn sample_tracks(scene: &SceneSpec, n_tracks: usize, seed: u64) -> Result<Vec<TrackPoint>> {
    scene.validate()?;
    if n_tracks == 0 {
        return Err(Error::domain("n_tracks must be positive"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(derive_rng_seed(&[seed, 0xB0]));
    let t0 = parse_time(&scene.date_start)?;
    let t1 = parse_time(&scene.date_end)?;
    let window = (t1 - t0).num_seconds().max(1);
    let mut points = Vec::new();
    for track in 0..n_tracks {
        // Entry and exit on two distinct edges of the bounding box.
        let edges: [usize; 2] = {
            let a = rng.gen_range(0..4usize);
            let mut b = rng.gen_range(0..3usize);
            if b >= a {
                b += 1;
            }
            [a, b]
        };
        let pick = |rng: &mut ChaCha12Rng, edge: usize| -> (f64, f64) {
            let u: f64 = rng.gen_range(0.0..1.0);
            match edge {
                0 => (scene.lat_min, scene.lon_min + u * (scene.lon_max - scene.lon_min)),
                1 => (scene.lat_max, scene.lon_min + u * (scene.lon_max - scene.lon_min)),
                2 => (scene.lat_min + u * (scene.lat_max - scene.lat_min), scene.lon_min),
                _ => (scene.lat_min + u * (scene.lat_max - scene.lat_min), scene.lon_max),
            }
        };
        let (lat_a, lon_a) = pick(&mut rng, edges[0]);
        let (lat_b, lon_b) = pick(&mut rng, edges[1]);
        let chord = ((lat_b - lat_a).powi(2) + (lon_b - lon_a).powi(2)).sqrt();
        let n_pts = (chord / scene.track_spacing_deg).floor() as usize;
        let start = t0 + chrono::Duration::seconds(track as i64 * window / n_tracks as i64);
        let mut emitted = 0usize;
        for k in 1..=n_pts {
            let f = k as f64 * scene.track_spacing_deg / chord;
            let lat = lat_a + f * (lat_b - lat_a);
            let lon = lon_a + f * (lon_b - lon_a);
            let inside = lat > scene.lat_min
                && lat < scene.lat_max
                && lon > scene.lon_min
                && lon < scene.lon_max;
            if !inside {
                continue;
            }
            let time = format_time(start + chrono::Duration::milliseconds(emitted as i64 * 500));
            points.push(TrackPoint {
                track,
                index: emitted,
                lat,
                lon,
                time,
            });
            emitted += 1;
        }
    }
    Ok(points)
}

/// A synthetic record plus whether it was drawn as a filter violator.
pub struct SynthRecord {
    pub record: DdmRecord,
    pub violator: bool,
}

/// Synthesize one record. Label 1 concentrates energy in the central 3×5
/// block; label 0 spreads a delay-skewed ridge. Metadata draws are
/// label-independent.
pub fn synth_record(
    id: String,
    lat: f64,
    lon: f64,
    time: String,
    label: u8,
    params: &DdmSynthParams,
    rng: &mut ChaCha12Rng,
) -> Result<SynthRecord> {
    params.validate()?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Violation plan first so metadata draws stay label-independent.
    let violator = rng.gen_bool(params.violator_fraction);
    let violation = if violator { rng.gen_range(0..4u8) } else { u8::MAX };

    let sp_inc_angle_deg = if violation == 0 {
        rng.gen_range(65.5..80.0)
    } else {
        rng.gen_range(params.inc_angle_range.0..params.inc_angle_range.1)
    };
    let ant_gain_db = if violation == 1 {
        rng.gen_range(-5.0..-0.3)
    } else {
        rng.gen_range(params.gain_range.0..params.gain_range.1)
    };
    let quality_flags: u32 = if violation == 2 { 1 << rng.gen_range(0..8) } else { 0 };
    let amp_scale = if violation == 3 { 0.002 } else { 1.0 };

    // Noise floor.
    let mut power = vec![0.0f64; DELAY_BINS * DOPPLER_BINS];
    let mut noise_sum = 0.0;
    for v in power.iter_mut() {
        let n = params.noise_floor_mean * (1.0 + params.noise_jitter * normal.sample(rng)).max(0.05);
        *v = n;
        noise_sum += n;
    }
    let noise_avg = noise_sum / power.len() as f64;

    // Signal.
    let amp_draw = rng.gen_range(params.coherent_amp.0..=params.coherent_amp.1)
        * params.noise_floor_mean
        * amp_scale;
    let j = params.center_jitter;
    if label == 1 {
        let rc = 8.0 + rng.gen_range(-j..=j);
        let cc = 5.0 + rng.gen_range(-j..=j);
        let sr = params.coherent_sigma_delay * rng.gen_range(0.85..1.15);
        let sc = params.coherent_sigma_doppler * rng.gen_range(0.85..1.15);
        for r in 0..DELAY_BINS {
            for c in 0..DOPPLER_BINS {
                let e = (-0.5 * ((r as f64 - rc) / sr).powi(2)
                    - 0.5 * ((c as f64 - cc) / sc).powi(2))
                .exp();
                let speckle = rng.gen_range(0.95..1.05);
                power[r * DOPPLER_BINS + c] += amp_draw * e * speckle;
            }
        }
    } else {
        let amp = amp_draw
            * rng.gen_range(params.incoherent_amp_factor.0..=params.incoherent_amp_factor.1);
        let rc = 8.0 + rng.gen_range(-2.0 * j..=2.0 * j) + rng.gen_range(0.0..1.5);
        let cc = 5.0 + rng.gen_range(-2.0 * j..=2.0 * j);
        let sr = params.coherent_sigma_delay * params.incoherent_spread_mult * rng.gen_range(0.85..1.15);
        let sc =
            params.coherent_sigma_doppler * params.incoherent_spread_mult * rng.gen_range(0.85..1.15);
        for r in 0..DELAY_BINS {
            for c in 0..DOPPLER_BINS {
                let dr = r as f64 - rc;
                // Slow decay toward late delays (scattering tail).
                let sr_eff = if dr >= 0.0 { sr * params.incoherent_tail_skew } else { sr };
                let e = (-0.5 * (dr / sr_eff).powi(2) - 0.5 * ((c as f64 - cc) / sc).powi(2)).exp();
                let speckle = rng.gen_range(0.7..1.3);
                power[r * DOPPLER_BINS + c] += amp * e * speckle;
            }
        }
    }

    let record = DdmRecord {
        id,
        lat,
        lon,
        time,
        sp_inc_angle_deg,
        ant_gain_db,
        quality_flags,
        noise_avg,
        ddm: DelayDopplerMap::new(power)?,
        label: Some(label),
    };
    Ok(SynthRecord { record, violator })
}

/// Dataset accounting, written as `manifest.json` next to the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_tracks: usize,
    pub n_records: usize,
    pub n_water: usize,
    pub n_land: usize,
    pub water_fraction: f64,
    pub mask_water_fraction: f64,
    pub violator_fraction_configured: f64,
    pub n_violators: usize,
    pub scene: SceneSpec,
}

/// Generate the full dataset in memory: mask, labeled records, manifest.
pub fn generate_dataset(scene: &SceneSpec) -> Result<(WaterMask, Vec<DdmRecord>, Manifest)> {
    scene.validate()?;
    let (mask, _widths) = render_mask(scene)?;
    let points = sample_tracks(scene, scene.n_tracks as usize, scene.seed)?;

    let synths: Vec<SynthRecord> = points
        .par_iter()
        .map(|pt| -> Result<SynthRecord> {
            let label = mask.label_at(pt.lat, pt.lon).ok_or_else(|| {
                Error::domain(format!("track point ({}, {}) missed the mask", pt.lat, pt.lon))
            })?;
            let mut rng = ChaCha12Rng::seed_from_u64(derive_rng_seed(&[
                scene.seed,
                0xC0,
                pt.track as u64,
                pt.index as u64,
            ]));
            synth_record(
                format!("t{:04}p{:04}", pt.track, pt.index),
                pt.lat,
                pt.lon,
                pt.time.clone(),
                label,
                &scene.synth,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let n_records = synths.len();
    let n_water = synths
        .iter()
        .filter(|s| s.record.label == Some(1))
        .count();
    let n_violators = synths.iter().filter(|s| s.violator).count();
    let records: Vec<DdmRecord> = synths.into_iter().map(|s| s.record).collect();
    let manifest = Manifest {
        seed: scene.seed,
        n_tracks: scene.n_tracks as usize,
        n_records,
        n_water,
        n_land: n_records - n_water,
        water_fraction: n_water as f64 / n_records.max(1) as f64,
        mask_water_fraction: mask.water_fraction(),
        violator_fraction_configured: scene.synth.violator_fraction,
        n_violators,
        scene: scene.clone(),
    };
    Ok((mask, records, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddm::{central_energy_fraction, snr_db};

    pub(crate) fn small_scene(seed: u64) -> SceneSpec {
        SceneSpec {
            lat_min: -5.0,
            lat_max: -4.5,
            lon_min: -65.0,
            lon_max: -64.5,
            cell_size_deg: 0.01,
            seed,
            trunk: vec![
                RiverPoint { lat: -4.95, lon: -65.0, width_m: 2500.0 },
                RiverPoint { lat: -4.75, lon: -64.8, width_m: 2200.0 },
                RiverPoint { lat: -4.55, lon: -64.52, width_m: 2000.0 },
            ],
            branch_depth: 2,
            branches_per_level: 3,
            width_decay: 0.5,
            branch_length_frac: 0.4,
            n_tracks: 20,
            track_spacing_deg: 0.03,
            date_start: "2021-01-01T00:00:00Z".into(),
            date_end: "2021-12-31T00:00:00Z".into(),
            synth: DdmSynthParams::default(),
        }
    }

    #[test]
    fn empty_river_scene_is_all_land() {
        let mut scene = small_scene(1);
        scene.trunk.clear();
        let (mask, widths) = render_mask(&scene).unwrap();
        assert!(mask.labels.iter().all(|&l| l == 0));
        assert!(widths.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn trunk_rasterizes_to_connected_water() {
        let mut scene = small_scene(2);
        scene.branch_depth = 0;
        let (mask, _) = render_mask(&scene).unwrap();
        let water: u64 = mask.labels.iter().map(|&l| l as u64).sum();
        assert!(water > 50, "water cells {water}");
        // Every trunk control point sits on water.
        for p in &scene.trunk {
            let lat = p.lat.clamp(scene.lat_min + 1e-6, scene.lat_max - 1e-6);
            let lon = p.lon.clamp(scene.lon_min + 1e-6, scene.lon_max - 1e-6);
            assert_eq!(mask.label_at(lat, lon), Some(1));
        }
    }

    #[test]
    fn mask_is_deterministic_per_seed() {
        let scene = small_scene(3);
        let (m1, _) = render_mask(&scene).unwrap();
        let (m2, _) = render_mask(&scene).unwrap();
        assert_eq!(m1, m2);
        let mut other = small_scene(3);
        other.seed = 4;
        let (m3, _) = render_mask(&other).unwrap();
        assert_ne!(m1.labels, m3.labels);
    }

    #[test]
    fn tracks_spacing_and_bounds() {
        let scene = small_scene(5);
        let pts = sample_tracks(&scene, 1, 99).unwrap();
        // A 0.5° box crossed at 0.03° spacing: tens of points, not hundreds.
        assert!(!pts.is_empty() && pts.len() < 40, "{} points", pts.len());
        for p in &pts {
            assert!(p.lat > scene.lat_min && p.lat < scene.lat_max);
            assert!(p.lon > scene.lon_min && p.lon < scene.lon_max);
        }
        let again = sample_tracks(&scene, 1, 99).unwrap();
        assert_eq!(pts.len(), again.len());
        assert!(pts
            .iter()
            .zip(&again)
            .all(|(a, b)| a.lat == b.lat && a.lon == b.lon && a.time == b.time));
    }

    #[test]
    fn coherent_beats_incoherent_central_fraction() {
        let params = DdmSynthParams::default();
        let mut water_mean = 0.0;
        let mut land_mean = 0.0;
        let n = 1000;
        for i in 0..n {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_rng_seed(&[7, i]));
            let w = synth_record("w".into(), 0.0, 0.0, "2021-01-01T00:00:00Z".into(), 1, &params, &mut rng)
                .unwrap();
            water_mean += central_energy_fraction(&w.record.ddm);
            let mut rng = ChaCha12Rng::seed_from_u64(derive_rng_seed(&[8, i]));
            let l = synth_record("l".into(), 0.0, 0.0, "2021-01-01T00:00:00Z".into(), 0, &params, &mut rng)
                .unwrap();
            land_mean += central_energy_fraction(&l.record.ddm);
        }
        water_mean /= n as f64;
        land_mean /= n as f64;
        assert!(
            water_mean > land_mean + 0.1,
            "separation too small: water {water_mean:.3} vs land {land_mean:.3}"
        );
    }

    #[test]
    fn noise_only_records_have_near_zero_snr() {
        let params = DdmSynthParams {
            coherent_amp: (0.0, 0.0),
            violator_fraction: 0.0,
            ..DdmSynthParams::default()
        };
        let mut snr_sum = 0.0;
        let n = 200;
        for i in 0..n {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_rng_seed(&[9, i]));
            let rec = synth_record("n".into(), 0.0, 0.0, "2021-01-01T00:00:00Z".into(), 1, &params, &mut rng)
                .unwrap()
                .record;
            snr_sum += snr_db(&rec.ddm, rec.noise_avg).unwrap();
        }
        let mean = snr_sum / n as f64;
        assert!(mean.abs() < 0.5, "mean snr {mean} dB");
    }

    #[test]
    fn record_synthesis_is_seed_deterministic() {
        let params = DdmSynthParams::default();
        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(41);
            synth_record("a".into(), 1.0, 2.0, "2021-06-01T00:00:00Z".into(), 1, &params, &mut rng)
                .unwrap()
                .record
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dataset_accounting_holds() {
        let scene = small_scene(11);
        let (mask, records, manifest) = generate_dataset(&scene).unwrap();
        assert_eq!(manifest.n_records, records.len());
        assert_eq!(
            manifest.n_water,
            records.iter().filter(|r| r.label == Some(1)).count()
        );
        // Labels match mask lookups exactly.
        for rec in &records {
            assert_eq!(mask.label_at(rec.lat, rec.lon), rec.label);
        }
        // Violator count is near the configured fraction (binomial noise).
        let expect = manifest.violator_fraction_configured * manifest.n_records as f64;
        let sd = (expect * (1.0 - manifest.violator_fraction_configured)).sqrt();
        assert!(
            (manifest.n_violators as f64 - expect).abs() < 5.0 * sd.max(1.0),
            "violators {} vs expected {expect:.1}",
            manifest.n_violators
        );
    }

    #[test]
    fn metadata_is_label_independent() {
        // Same RNG stream, different labels: identical metadata draws.
        let params = DdmSynthParams::default();
        let mut r1 = ChaCha12Rng::seed_from_u64(77);
        let mut r2 = ChaCha12Rng::seed_from_u64(77);
        let a = synth_record("a".into(), 0.0, 0.0, "2021-01-01T00:00:00Z".into(), 1, &params, &mut r1)
            .unwrap()
            .record;
        let b = synth_record("b".into(), 0.0, 0.0, "2021-01-01T00:00:00Z".into(), 0, &params, &mut r2)
            .unwrap()
            .record;
        assert_eq!(a.sp_inc_angle_deg, b.sp_inc_angle_deg);
        assert_eq!(a.ant_gain_db, b.ant_gain_db);
        assert_eq!(a.quality_flags, b.quality_flags);
    }
}
