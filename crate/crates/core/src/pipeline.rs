//! File-level orchestration of the gen → train → infer → eval flow,
//! shared by the CLI and the acceptance suite.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, NaiveDate, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dat::DatConfig;
use crate::datagen::{generate_dataset, parse_time, synth_record, DdmSynthParams, Manifest, SceneSpec};
use crate::ddm::{
    filter_reason, read_mask_pgm, read_records_jsonl, write_mask_pgm, write_records_jsonl,
    DdmRecord, FilterPolicy, WaterMask,
};
use crate::evaluation::{detection_rate, metrics, DetectionRate, GridAggregate, GridSpec, MetricsReport};
use crate::models::{
    classify, load_checkpoint, save_checkpoint, AnyModel, IwdModel, IwdQueenModel,
    IwdTransformerModel, ModelKind,
};
use crate::numerics::derive_rng_seed;
use crate::qsim::XxPairing;
use crate::training::{split_by_id_hash, train, EpochRow, TrainConfig};
use crate::{Error, Result};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MASK_FILE: &str = "mask.pgm";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn load_scene(path: &Path) -> Result<SceneSpec> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let scene: SceneSpec = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::data(path, format!("bad scene: {e}")))?;
    scene.validate()?;
    Ok(scene)
}

/// Generate and write dataset.jsonl, mask.pgm (+ sidecar), manifest.json.
pub fn run_gen(scene: &SceneSpec, out_dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (mask, records, manifest) = generate_dataset(scene)?;
    write_records_jsonl(&out_dir.join(DATASET_FILE), &records)?;
    write_mask_pgm(&out_dir.join(MASK_FILE), &mask)?;
    let mpath = out_dir.join(MANIFEST_FILE);
    let mfile = File::create(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut w = BufWriter::new(mfile);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n").map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

/// Build a fresh model of the requested kind, seeded.
pub fn init_model(kind: ModelKind, use_se: bool, seed: u64) -> Result<AnyModel> {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_rng_seed(&[seed, 0xE0]));
    Ok(match kind {
        ModelKind::Queen => AnyModel::Queen(IwdQueenModel::init_with(
            &mut rng,
            use_se,
            DatConfig::default(),
            XxPairing::Adjacent,
        )?),
        ModelKind::Transformer => {
            AnyModel::Transformer(IwdTransformerModel::init_with(&mut rng, DatConfig::default(), 1)?)
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub n_loaded: usize,
    pub n_filtered_out: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub final_val: MetricsReport,
}

fn csv_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

pub fn write_metrics_csv(path: &Path, rows: &[EpochRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "epoch,train_loss,train_bce,train_kappa,val_recall,val_precision,val_f1,val_oa,val_kappa_metric,kappa_skips"
    )
    .map_err(|e| Error::io(path, e))?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            row.epoch,
            row.train_loss,
            row.train_bce,
            csv_opt(row.train_kappa),
            csv_opt(row.val.recall),
            csv_opt(row.val.precision),
            csv_opt(row.val.f1),
            csv_opt(row.val.oa),
            csv_opt(row.val.kappa),
            row.kappa_skips
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Load data from `data_dir`, filter, split by id hash, train the model in
/// place, and write checkpoint + per-epoch metrics CSV into `out_dir`.
pub fn run_train(
    model: &mut dyn IwdModel,
    data_dir: &Path,
    cfg: &TrainConfig,
    val_fraction: f64,
    out_dir: &Path,
) -> Result<(TrainSummary, Vec<EpochRow>)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let records = read_records_jsonl(&data_dir.join(DATASET_FILE))?;
    let n_loaded = records.len();
    let policy = FilterPolicy::default();
    let kept: Vec<DdmRecord> = records
        .into_iter()
        .filter(|r| crate::ddm::passes_filter(r, &policy))
        .collect();
    let n_filtered_out = n_loaded - kept.len();
    let (train_set, val_set) = split_by_id_hash(kept, val_fraction);
    let rows = train(model, &train_set, &val_set, cfg, |_| {})?;
    save_checkpoint(&out_dir.join(CHECKPOINT_FILE), model)?;
    write_metrics_csv(&out_dir.join(METRICS_FILE), &rows)?;
    let final_val = rows
        .last()
        .map(|r| r.val)
        .unwrap_or_else(MetricsReport::undefined);
    Ok((
        TrainSummary {
            n_loaded,
            n_filtered_out,
            n_train: train_set.len(),
            n_val: val_set.len(),
            final_val,
        },
        rows,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct InferStats {
    pub input_rows: usize,
    pub emitted_rows: usize,
    pub skipped_rows: usize,
}

/// Skip-log path next to a predictions file.
pub fn skips_path(out: &Path) -> PathBuf {
    out.with_extension("skips.csv")
}

/// Predict every record that passes the quality filter; rejected records go
/// to the skip log with a reason, so emitted + skipped = input.
pub fn run_infer(model: &dyn IwdModel, data: &Path, out: &Path) -> Result<InferStats> {
    let records = read_records_jsonl(data)?;
    let policy = FilterPolicy::default();
    let verdicts: Vec<Option<&'static str>> = records
        .iter()
        .map(|r| filter_reason(r, &policy).map(|reason| reason.as_str()))
        .collect();
    let probs: Vec<Option<f64>> = records
        .par_iter()
        .zip(&verdicts)
        .map(|(rec, verdict)| -> Result<Option<f64>> {
            match verdict {
                Some(_) => Ok(None),
                None => Ok(Some(model.predict_proba(rec)?)),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "id,lat,lon,p,class,time").map_err(|e| Error::io(out, e))?;
    let sk_path = skips_path(out);
    let sk_file = File::create(&sk_path).map_err(|e| Error::io(&sk_path, e))?;
    let mut sk = BufWriter::new(sk_file);
    writeln!(sk, "id,lat,lon,reason,time").map_err(|e| Error::io(&sk_path, e))?;

    let mut emitted = 0usize;
    let mut skipped = 0usize;
    for ((rec, verdict), p) in records.iter().zip(&verdicts).zip(&probs) {
        match (verdict, p) {
            (None, Some(p)) => {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    rec.id,
                    rec.lat,
                    rec.lon,
                    p,
                    classify(*p),
                    rec.time
                )
                .map_err(|e| Error::io(out, e))?;
                emitted += 1;
            }
            (Some(reason), _) => {
                writeln!(sk, "{},{},{},{},{}", rec.id, rec.lat, rec.lon, reason, rec.time)
                    .map_err(|e| Error::io(&sk_path, e))?;
                skipped += 1;
            }
            (None, None) => unreachable!("accepted records always predict"),
        }
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    sk.flush().map_err(|e| Error::io(&sk_path, e))?;
    Ok(InferStats {
        input_rows: records.len(),
        emitted_rows: emitted,
        skipped_rows: skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lon_min: f64,
    pub lat_max: f64,
    pub lon_max: f64,
}

impl BBox {
    /// "lat_min,lon_min,lat_max,lon_max"
    pub fn parse(s: &str) -> Result<BBox> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad bbox '{s}': {e}")))?;
        if parts.len() != 4 {
            return Err(Error::Config(format!(
                "bbox '{s}' needs lat_min,lon_min,lat_max,lon_max"
            )));
        }
        let b = BBox {
            lat_min: parts[0],
            lon_min: parts[1],
            lat_max: parts[2],
            lon_max: parts[3],
        };
        if b.lat_min >= b.lat_max || b.lon_min >= b.lon_max {
            return Err(Error::Config(format!("bbox '{s}' is not well-ordered")));
        }
        Ok(b)
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max
    }
}

#[derive(Debug, Clone, Deserialize)]
struct PredRow {
    #[allow(dead_code)]
    id: String,
    lat: f64,
    lon: f64,
    p: f64,
    class: u8,
    time: String,
}

/// Accepts a full RFC3339 instant or a plain date; a plain date in `end`
/// position covers the whole day.
pub fn parse_date_bound(s: &str, end_of_day: bool) -> Result<DateTime<Utc>> {
    if let Ok(t) = parse_time(s) {
        return Ok(t);
    }
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| Error::Config(format!("bad date '{s}': {e}")))?;
    let time = if end_of_day {
        date.and_hms_milli_opt(23, 59, 59, 999).unwrap()
    } else {
        date.and_hms_opt(0, 0, 0).unwrap()
    };
    Ok(DateTime::from_naive_utc_and_offset(time, Utc))
}

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub bboxes: Vec<BBox>,
    pub from: Option<String>,
    pub to: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionReport {
    pub bbox: Option<BBox>,
    pub cells: u64,
    pub samples: u64,
    pub skipped_samples: u64,
    pub metrics: MetricsReport,
    pub detection: DetectionRate,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub overall: RegionReport,
    pub subregions: Vec<RegionReport>,
    pub date_filtered_out: u64,
}

fn region_report(
    rows: &[PredRow],
    mask: &WaterMask,
    bbox: Option<BBox>,
) -> RegionReport {
    let spec = GridSpec::from_mask(mask);
    let mut agg = GridAggregate::new(spec);
    agg.add_mask(mask);
    let mut classes = Vec::new();
    for row in rows {
        if bbox.map_or(true, |b| b.contains(row.lat, row.lon)) {
            agg.add_prediction(row.lat, row.lon, row.p);
            classes.push(row.class);
        }
    }
    let confusion = agg.confusion();
    let m = metrics(&confusion).unwrap_or_else(|_| MetricsReport::undefined());
    RegionReport {
        bbox,
        cells: confusion.total(),
        samples: classes.len() as u64,
        skipped_samples: agg.skipped,
        metrics: m,
        detection: detection_rate(classes),
    }
}

/// Grid report + metrics + detection rates + a rendered prediction mask.
pub fn run_eval(pred: &Path, mask_path: &Path, args: &EvalArgs, out_dir: &Path) -> Result<EvalSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mask = read_mask_pgm(mask_path)?;
    let mut reader = csv::Reader::from_path(pred)?;
    let mut rows: Vec<PredRow> = Vec::new();
    for row in reader.deserialize() {
        let row: PredRow = row?;
        rows.push(row);
    }
    let total_rows = rows.len() as u64;

    // Date-range filter.
    let from = args
        .from
        .as_deref()
        .map(|s| parse_date_bound(s, false))
        .transpose()?;
    let to = args
        .to
        .as_deref()
        .map(|s| parse_date_bound(s, true))
        .transpose()?;
    if from.is_some() || to.is_some() {
        rows.retain(|row| match parse_time(&row.time) {
            Ok(t) => from.map_or(true, |f| t >= f) && to.map_or(true, |u| t <= u),
            Err(_) => false,
        });
    }
    let date_filtered_out = total_rows - rows.len() as u64;

    let overall = region_report(&rows, &mask, None);
    let subregions: Vec<RegionReport> = args
        .bboxes
        .iter()
        .map(|&b| region_report(&rows, &mask, Some(b)))
        .collect();

    // Grid report CSV over populated cells.
    let spec = GridSpec::from_mask(&mask);
    let mut agg = GridAggregate::new(spec);
    agg.add_mask(&mask);
    for row in &rows {
        agg.add_prediction(row.lat, row.lon, row.p);
    }
    let grid_path = out_dir.join("grid.csv");
    let gfile = File::create(&grid_path).map_err(|e| Error::io(&grid_path, e))?;
    let mut g = BufWriter::new(gfile);
    writeln!(g, "lat_min,lon_min,n,mean_p,pred,gt,agree").map_err(|e| Error::io(&grid_path, e))?;
    let mut pred_labels = vec![0u8; mask.rows * mask.cols];
    for (&(r, c), cell) in agg.cells() {
        let (Some(mean_p), Some(pred_label), Some(gt)) =
            (cell.mean_p(), cell.predicted_label(), cell.gt_label())
        else {
            continue;
        };
        writeln!(
            g,
            "{},{},{},{},{},{},{}",
            spec.origin_lat + r as f64 * spec.cell_size_deg,
            spec.origin_lon + c as f64 * spec.cell_size_deg,
            cell.n,
            mean_p,
            pred_label,
            gt,
            u8::from(pred_label == gt)
        )
        .map_err(|e| Error::io(&grid_path, e))?;
        pred_labels[r * mask.cols + c] = pred_label;
    }
    g.flush().map_err(|e| Error::io(&grid_path, e))?;

    // Rendered predicted-water map (255 = predicted water).
    let pred_mask = WaterMask::new(
        mask.origin_lat,
        mask.origin_lon,
        mask.cell_size_deg,
        mask.rows,
        mask.cols,
        pred_labels,
    )?;
    write_mask_pgm(&out_dir.join("pred_mask.pgm"), &pred_mask)?;

    let summary = EvalSummary {
        overall,
        subregions,
        date_filtered_out,
    };
    let spath = out_dir.join("summary.json");
    let sfile = File::create(&spath).map_err(|e| Error::io(&spath, e))?;
    let mut sw = BufWriter::new(sfile);
    serde_json::to_writer_pretty(&mut sw, &summary)?;
    sw.write_all(b"\n").map_err(|e| Error::io(&spath, e))?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub n: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub single_thread_per_s: f64,
    pub parallel_per_s: f64,
    pub threads: usize,
    /// The published single-DDM reference point, for comparison.
    pub reference_ms: f64,
}

pub const REFERENCE_LATENCY_MS: f64 = 6.0;

/// Median/mean/p95 single-record eval-mode forward latency, plus parallel
/// throughput.
pub fn run_bench(model: &dyn IwdModel, n: usize, seed: u64) -> Result<BenchReport> {
    if n == 0 {
        return Err(Error::Config("bench needs n >= 1".into()));
    }
    let params = DdmSynthParams {
        violator_fraction: 0.0,
        ..DdmSynthParams::default()
    };
    let records: Vec<DdmRecord> = (0..n)
        .map(|i| -> Result<DdmRecord> {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_rng_seed(&[seed, 0xF0, i as u64]));
            Ok(synth_record(
                format!("bench{i:05}"),
                0.0,
                0.0,
                "2021-01-01T00:00:00.000Z".into(),
                (i % 2) as u8,
                &params,
                &mut rng,
            )?
            .record)
        })
        .collect::<Result<Vec<_>>>()?;

    // Warm-up.
    for rec in records.iter().take(5) {
        model.predict_proba(rec)?;
    }
    let mut times_ms = Vec::with_capacity(n);
    let single_start = Instant::now();
    for rec in &records {
        let t = Instant::now();
        let p = model.predict_proba(rec)?;
        times_ms.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(p);
    }
    let single_elapsed = single_start.elapsed().as_secs_f64();
    times_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = times_ms.iter().sum::<f64>() / n as f64;
    let median = times_ms[n / 2];
    let p95 = times_ms[((n as f64 * 0.95) as usize).min(n - 1)];

    let par_start = Instant::now();
    let probs: Vec<f64> = records
        .par_iter()
        .map(|rec| model.predict_proba(rec))
        .collect::<Result<Vec<_>>>()?;
    std::hint::black_box(&probs);
    let par_elapsed = par_start.elapsed().as_secs_f64();

    Ok(BenchReport {
        n,
        mean_ms: mean,
        median_ms: median,
        p95_ms: p95,
        single_thread_per_s: n as f64 / single_elapsed,
        parallel_per_s: n as f64 / par_elapsed,
        threads: rayon::current_num_threads(),
        reference_ms: REFERENCE_LATENCY_MS,
    })
}

/// Re-export for CLI convenience.
pub fn load_model(path: &Path) -> Result<AnyModel> {
    load_checkpoint(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_parsing() {
        let b = BBox::parse("-5.0,-65.0,-4.5,-64.5").unwrap();
        assert_eq!(b.lat_min, -5.0);
        assert_eq!(b.lon_max, -64.5);
        assert!(b.contains(-4.75, -64.75));
        assert!(!b.contains(-4.0, -64.75));
        assert!(BBox::parse("1,2,3").is_err());
        assert!(BBox::parse("3,2,1,4").is_err());
    }

    #[test]
    fn date_bounds() {
        let from = parse_date_bound("2021-04-01", false).unwrap();
        assert_eq!(from.to_rfc3339(), "2021-04-01T00:00:00+00:00");
        let to = parse_date_bound("2021-04-01", true).unwrap();
        assert!(to > from);
        let exact = parse_date_bound("2021-04-01T12:30:00Z", false).unwrap();
        assert_eq!(exact.to_rfc3339(), "2021-04-01T12:30:00+00:00");
        assert!(parse_date_bound("yesterday", false).is_err());
    }
}
