// Temporary calibration harness (removed before ship).
use std::time::Instant;

use iwd_core::datagen::{generate_dataset, DdmSynthParams, RiverPoint, SceneSpec};
use iwd_core::ddm::{central_energy_fraction, passes_filter, FilterPolicy};
use iwd_core::models::{IwdModel, ModelKind};
use iwd_core::pipeline::init_model;
use iwd_core::training::{split_by_id_hash, train, TrainConfig};

fn default_scene() -> SceneSpec {
    SceneSpec {
        lat_min: -5.0,
        lat_max: -4.0,
        lon_min: -65.0,
        lon_max: -64.0,
        cell_size_deg: 0.01,
        seed: 20210401,
        trunk: vec![
            RiverPoint { lat: -4.92, lon: -65.0, width_m: 3200.0 },
            RiverPoint { lat: -4.70, lon: -64.72, width_m: 2900.0 },
            RiverPoint { lat: -4.48, lon: -64.45, width_m: 2600.0 },
            RiverPoint { lat: -4.22, lon: -64.25, width_m: 2400.0 },
            RiverPoint { lat: -4.05, lon: -64.02, width_m: 2200.0 },
        ],
        branch_depth: 3,
        branches_per_level: 3,
        width_decay: 0.55,
        branch_length_frac: 0.45,
        n_tracks: 270,
        track_spacing_deg: 0.03,
        date_start: "2021-01-01T00:00:00Z".into(),
        date_end: "2021-12-31T00:00:00Z".into(),
        synth: DdmSynthParams::default(),
    }
}

fn hard_scene() -> SceneSpec {
    SceneSpec {
        lat_min: -5.0,
        lat_max: -4.5,
        lon_min: -65.0,
        lon_max: -64.5,
        cell_size_deg: 0.01,
        seed: 20230915,
        trunk: vec![
            RiverPoint { lat: -4.95, lon: -65.0, width_m: 2600.0 },
            RiverPoint { lat: -4.76, lon: -64.78, width_m: 2400.0 },
            RiverPoint { lat: -4.60, lon: -64.60, width_m: 2200.0 },
            RiverPoint { lat: -4.52, lon: -64.52, width_m: 2000.0 },
        ],
        branch_depth: 2,
        branches_per_level: 3,
        width_decay: 0.55,
        branch_length_frac: 0.45,
        n_tracks: 110,
        track_spacing_deg: 0.03,
        date_start: "2023-01-01T00:00:00Z".into(),
        date_end: "2023-12-31T00:00:00Z".into(),
        synth: DdmSynthParams {
            coherent_amp: (30.0, 90.0),
            coherent_sigma_delay: 1.25,
            coherent_sigma_doppler: 1.55,
            incoherent_spread_mult: 1.28,
            incoherent_tail_skew: 1.25,
            incoherent_amp_factor: (0.85, 1.0),
            noise_floor_mean: 1.0,
            noise_jitter: 0.08,
            center_jitter: 2.0,
            inc_angle_range: (5.0, 64.0),
            gain_range: (2.0, 14.0),
            violator_fraction: 0.03,
        },
    }
}

fn ablation(seeds: &[u64], epochs: usize) {
    let scene = hard_scene();
    let (_, records, manifest) = generate_dataset(&scene).unwrap();
    println!(
        "hard scene: {} records, water fraction {:.3}",
        manifest.n_records, manifest.water_fraction
    );
    let policy = FilterPolicy::default();
    let kept: Vec<_> = records.iter().filter(|r| passes_filter(r, &policy)).cloned().collect();
    let mut best_acc = 0.0;
    for t in 0..100 {
        let thr = t as f64 / 100.0;
        let correct = kept
            .iter()
            .filter(|r| (central_energy_fraction(&r.ddm) >= thr) == (r.label == Some(1)))
            .count();
        best_acc = f64::max(best_acc, correct as f64 / kept.len() as f64);
    }
    println!("kept {}, trivial accuracy {best_acc:.4}", kept.len());
    let (train_set, val_set) = split_by_id_hash(kept, 0.2);
    println!("train {} / val {}", train_set.len(), val_set.len());
    let mut means = [0.0f64; 2];
    for (slot, use_se) in [(0usize, true), (1usize, false)] {
        for &seed in seeds {
            let mut model = init_model(ModelKind::Queen, use_se, seed).unwrap();
            let cfg = TrainConfig { epochs, seed, ..TrainConfig::default() };
            let t = Instant::now();
            let rows = train(model.as_model_mut(), &train_set, &val_set, &cfg, |_| {}).unwrap();
            let k = rows.last().unwrap().val.kappa.unwrap_or(0.0);
            println!(
                "use_se={use_se} seed={seed}: val kappa {k:.4} f1 {:?} ({:.0}s)",
                rows.last().unwrap().val.f1.map(|v| (v * 1e3).round() / 1e3),
                t.elapsed().as_secs_f64()
            );
            means[slot] += k / seeds.len() as f64;
        }
    }
    println!("MEAN kappa with SE {:.4} vs without {:.4}", means[0], means[1]);
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("data");

    if mode == "emit-scenes" {
        std::fs::write(
            "scenes/default.json",
            serde_json::to_string_pretty(&default_scene()).unwrap() + "\n",
        )
        .unwrap();
        std::fs::write(
            "scenes/hard.json",
            serde_json::to_string_pretty(&hard_scene()).unwrap() + "\n",
        )
        .unwrap();
        println!("wrote scenes/default.json and scenes/hard.json");
        return;
    }

    if mode == "ablation" {
        let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(8);
        ablation(&[11, 22, 33, 44, 55], epochs);
        return;
    }

    let scene = default_scene();
    let t0 = Instant::now();
    let (mask, records, manifest) = generate_dataset(&scene).unwrap();
    println!(
        "gen: {} records in {:.1}s; mask water fraction {:.3}; record water fraction {:.3}; violators {}",
        manifest.n_records,
        t0.elapsed().as_secs_f64(),
        mask.water_fraction(),
        manifest.water_fraction,
        manifest.n_violators,
    );
    let policy = FilterPolicy::default();
    let kept: Vec<_> = records.iter().filter(|r| passes_filter(r, &policy)).cloned().collect();
    println!("kept after filter: {}", kept.len());

    // Trivial classifier on central energy fraction.
    let mut best_acc = 0.0;
    for t in 0..100 {
        let thr = t as f64 / 100.0;
        let correct = kept
            .iter()
            .filter(|r| {
                let frac = central_energy_fraction(&r.ddm);
                (frac >= thr) == (r.label == Some(1))
            })
            .count();
        let acc = correct as f64 / kept.len() as f64;
        if acc > best_acc {
            best_acc = acc;
        }
    }
    println!("trivial central-fraction classifier best accuracy: {best_acc:.4}");

    let (train_set, val_set) = split_by_id_hash(kept, 0.2);
    println!("train {} / val {}", train_set.len(), val_set.len());

    if mode == "data" {
        return;
    }

    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(5);
    let kind = if mode == "transformer" {
        ModelKind::Transformer
    } else {
        ModelKind::Queen
    };
    let mut model = init_model(kind, true, 42).unwrap();
    let cfg = TrainConfig {
        epochs,
        seed: 42,
        ..TrainConfig::default()
    };
    let t1 = Instant::now();
    let rows = train(model.as_model_mut(), &train_set, &val_set, &cfg, |row| {
        println!(
            "epoch {:2} loss {:.4} bce {:.4} kappa {} | val f1 {:?} kappa {:?} ({:.1}s)",
            row.epoch,
            row.train_loss,
            row.train_bce,
            row.train_kappa.map(|k| format!("{k:.4}")).unwrap_or_default(),
            row.val.f1.map(|v| (v * 1e4).round() / 1e4),
            row.val.kappa.map(|v| (v * 1e4).round() / 1e4),
            t1.elapsed().as_secs_f64(),
        );
    })
    .unwrap();
    let last = rows.last().unwrap();
    println!(
        "FINAL {:?}: val f1 {:?} kappa {:?} in {:.1}s",
        model.as_model().kind(),
        last.val.f1,
        last.val.kappa,
        t1.elapsed().as_secs_f64()
    );
}
