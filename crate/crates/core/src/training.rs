//! Loss functions and the deterministic training loop.
//!
//! The loss is BCE plus a differentiable soft-kappa term that counters the
//! land/water imbalance. Batches with a degenerate kappa denominator skip
//! the kappa term and bump a counter. Training is bit-reproducible: data
//! shuffling, dropout masks, and gradient accumulation order are all pure
//! functions of (seed, dataset order, config).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dat::{prep, PreppedDdm};
use crate::ddm::DdmRecord;
use crate::evaluation::{metrics, ConfusionCounts, MetricsReport};
use crate::models::{classify, IwdModel};
use crate::numerics::{derive_rng_seed, AdamHyper, AdamState, FwdCtx, Tape, Tensor, Var};
use crate::{Error, Result};

/// Denominators smaller than this skip the kappa term for the batch.
pub const KAPPA_DEN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    pub bce: f64,
    pub kappa: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { bce: 1.0, kappa: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub clamp_eps: f64,
    /// OFF reproduces the printed kappa-loss formula (which divides only
    /// the cross terms by B and can exceed 1, going negative as a loss);
    /// ON uses the self-consistent normalization that caps the soft kappa
    /// at 1.
    pub kappa_alt_normalization: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            epochs: 150,
            lr: 0.001,
            seed: 42,
            loss_weights: LossWeights::default(),
            clamp_eps: 1e-7,
            kappa_alt_normalization: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.loss_weights.kappa != 0.0 && self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be >= 2 when the kappa loss is enabled".into(),
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("bad learning rate {}", self.lr)));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::Config("clamp_eps must be in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Mean binary cross-entropy with probabilities clamped to [ε, 1−ε].
pub fn bce_loss(p: &[f64], y: &[f64], clamp_eps: f64) -> Result<f64> {
    if p.is_empty() || p.len() != y.len() {
        return Err(Error::domain("bce_loss needs one probability per label"));
    }
    let mut acc = 0.0;
    for (&pi, &yi) in p.iter().zip(y) {
        let pc = pi.clamp(clamp_eps, 1.0 - clamp_eps);
        acc += yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln();
    }
    Ok(-acc / p.len() as f64)
}

/// Soft-kappa loss. Returns `None` when the denominator magnitude falls
/// below [`KAPPA_DEN_EPS`] (degenerate batch, e.g. all-zero p and y).
pub fn kappa_loss(p: &[f64], y: &[f64], alt_normalization: bool) -> Result<Option<f64>> {
    if p.len() < 2 || p.len() != y.len() {
        return Err(Error::domain("kappa_loss needs a batch of at least 2"));
    }
    let b = p.len() as f64;
    let spy: f64 = p.iter().zip(y).map(|(a, b)| a * b).sum();
    let sp: f64 = p.iter().sum();
    let sy: f64 = y.iter().sum();
    let sp2: f64 = p.iter().map(|v| v * v).sum();
    let sy2: f64 = y.iter().map(|v| v * v).sum();
    let (num, den) = if alt_normalization {
        (2.0 * (spy - sp * sy / b), sp2 + sy2 - 2.0 * sp * sy / b)
    } else {
        // The printed formula: only the cross terms divide by B.
        (2.0 * spy - sp * sy / b, sp2 + sy2 - 2.0 * spy / b)
    };
    if den.abs() < KAPPA_DEN_EPS {
        return Ok(None);
    }
    Ok(Some(1.0 - num / den))
}

/// Weighted sum of BCE and (unless skipped) kappa.
pub fn total_loss(
    p: &[f64],
    y: &[f64],
    weights: &LossWeights,
    clamp_eps: f64,
    alt_normalization: bool,
) -> Result<(f64, f64, Option<f64>)> {
    let bce = bce_loss(p, y, clamp_eps)?;
    let kappa = if weights.kappa != 0.0 {
        kappa_loss(p, y, alt_normalization)?
    } else {
        None
    };
    let total = weights.bce * bce + kappa.map_or(0.0, |k| weights.kappa * k);
    Ok((total, bce, kappa))
}

/// Loss nodes over a batch-probability leaf.
pub struct LossGraph {
    pub total: Var,
    pub bce: Var,
    pub kappa: Option<Var>,
}

/// Build the differentiable batch loss over `p` (a 1×B leaf). The kappa
/// skip decision is made from the forward values before graph insertion.
pub fn build_loss_graph(
    tape: &mut Tape,
    p: Var,
    y: &[f64],
    weights: &LossWeights,
    clamp_eps: f64,
    alt_normalization: bool,
) -> Result<LossGraph> {
    let b = y.len();
    if tape.value(p).numel() != b || b == 0 {
        return Err(Error::domain("loss graph needs one probability per label"));
    }
    let bf = b as f64;
    let yv = tape.constant(Tensor::row(y.to_vec())?);
    let one_minus_y = tape.constant(Tensor::row(y.iter().map(|v| 1.0 - v).collect())?);

    // BCE over clamped probabilities.
    let pc = tape.clamp(p, clamp_eps, 1.0 - clamp_eps)?;
    let log_p = tape.log(pc)?;
    let t1 = tape.mul(yv, log_p)?;
    let neg_pc = tape.scale(pc, -1.0)?;
    let omp = tape.add_const(neg_pc, 1.0)?;
    let log_omp = tape.log(omp)?;
    let t2 = tape.mul(one_minus_y, log_omp)?;
    let s = tape.add(t1, t2)?;
    let ssum = tape.sum_all(s)?;
    let bce = tape.scale(ssum, -1.0 / bf)?;

    // Kappa over raw probabilities, exactly as printed.
    let sy: f64 = y.iter().sum();
    let sy2: f64 = y.iter().map(|v| v * v).sum();
    let p_data = tape.value(p).data().to_vec();
    let (_, den_val) = kappa_terms(&p_data, y, alt_normalization);
    let kappa = if weights.kappa != 0.0 && den_val.abs() >= KAPPA_DEN_EPS {
        let py = tape.mul(p, yv)?;
        let spy = tape.sum_all(py)?;
        let sp = tape.sum_all(p)?;
        let pp = tape.mul(p, p)?;
        let sp2 = tape.sum_all(pp)?;
        let (num, den) = if alt_normalization {
            let c = tape.scale(sp, sy / bf)?;
            let diff = tape.sub(spy, c)?;
            let num = tape.scale(diff, 2.0)?;
            let sp2c = tape.add_const(sp2, sy2)?;
            let cross = tape.scale(sp, 2.0 * sy / bf)?;
            (num, tape.sub(sp2c, cross)?)
        } else {
            let lead = tape.scale(spy, 2.0)?;
            let c = tape.scale(sp, sy / bf)?;
            let num = tape.sub(lead, c)?;
            let sp2c = tape.add_const(sp2, sy2)?;
            let cross = tape.scale(spy, 2.0 / bf)?;
            (num, tape.sub(sp2c, cross)?)
        };
        let frac = tape.div(num, den)?;
        let neg = tape.scale(frac, -1.0)?;
        Some(tape.add_const(neg, 1.0)?)
    } else {
        None
    };

    let bce_w = tape.scale(bce, weights.bce)?;
    let total = match kappa {
        Some(k) => {
            let kw = tape.scale(k, weights.kappa)?;
            tape.add(bce_w, kw)?
        }
        None => bce_w,
    };
    Ok(LossGraph { total, bce, kappa })
}

fn kappa_terms(p: &[f64], y: &[f64], alt: bool) -> (f64, f64) {
    let b = p.len() as f64;
    let spy: f64 = p.iter().zip(y).map(|(a, b)| a * b).sum();
    let sp: f64 = p.iter().sum();
    let sy: f64 = y.iter().sum();
    let sp2: f64 = p.iter().map(|v| v * v).sum();
    let sy2: f64 = y.iter().map(|v| v * v).sum();
    if alt {
        (2.0 * (spy - sp * sy / b), sp2 + sy2 - 2.0 * sp * sy / b)
    } else {
        (2.0 * spy - sp * sy / b, sp2 + sy2 - 2.0 * spy / b)
    }
}

/// One line of the per-epoch metrics log.
#[derive(Debug, Clone)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_bce: f64,
    /// Mean kappa term over the batches where it applied.
    pub train_kappa: Option<f64>,
    pub val: MetricsReport,
    pub kappa_skips: u64,
}

/// A labeled, model-ready sample.
struct TrainSample {
    input: PreppedDdm,
    label: f64,
}

fn prepare(records: &[DdmRecord]) -> Result<Vec<TrainSample>> {
    records
        .iter()
        .map(|rec| {
            let label = rec.label.ok_or_else(|| {
                Error::domain(format!("record '{}' has no label; cannot train", rec.id))
            })?;
            Ok(TrainSample {
                input: prep(&rec.ddm)?,
                label: label as f64,
            })
        })
        .collect()
}

/// Eval-mode record-level metrics at the 0.5 decision threshold.
pub fn evaluate_records(model: &dyn IwdModel, records: &[DdmRecord]) -> Result<MetricsReport> {
    if records.is_empty() {
        return Ok(MetricsReport::undefined());
    }
    let pairs: Vec<(u8, u8)> = records
        .par_iter()
        .map(|rec| -> Result<(u8, u8)> {
            let p = model.predict_proba(rec)?;
            let truth = rec.label.ok_or_else(|| {
                Error::domain(format!("record '{}' has no label; cannot evaluate", rec.id))
            })?;
            Ok((classify(p), truth))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = ConfusionCounts::default();
    for (pred, truth) in pairs {
        counts.add(pred, truth);
    }
    metrics(&counts)
}

/// Train in place. Shuffling, dropout, and accumulation order are all
/// derived from `cfg.seed`, so identical (seed, data, config) produce
/// bit-identical parameter trajectories.
pub fn train(
    model: &mut dyn IwdModel,
    train_records: &[DdmRecord],
    val_records: &[DdmRecord],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRow),
) -> Result<Vec<EpochRow>> {
    cfg.validate()?;
    if train_records.is_empty() {
        return Err(Error::domain("empty training set"));
    }
    let samples = prepare(train_records)?;
    let mut adam = AdamState::new(
        AdamHyper {
            lr: cfg.lr,
            ..AdamHyper::default()
        },
        &model.param_entries(),
    );

    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rows = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut shuffle_rng =
            ChaCha12Rng::seed_from_u64(derive_rng_seed(&[cfg.seed, 0xD0, epoch as u64]));
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut bce_sum = 0.0;
        let mut kappa_sum = 0.0;
        let mut kappa_batches = 0u64;
        let mut kappa_skips = 0u64;

        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let step = step_batch(
                model, &samples, batch, cfg, epoch, batch_idx, &mut adam,
            )?;
            let bsz = batch.len() as f64;
            loss_sum += step.total * bsz;
            bce_sum += step.bce * bsz;
            match step.kappa {
                Some(k) => {
                    kappa_sum += k;
                    kappa_batches += 1;
                }
                None => {
                    if cfg.loss_weights.kappa != 0.0 {
                        kappa_skips += 1;
                    }
                }
            }
        }

        let val = evaluate_records(model, val_records)?;
        let row = EpochRow {
            epoch,
            train_loss: loss_sum / n as f64,
            train_bce: bce_sum / n as f64,
            train_kappa: (kappa_batches > 0).then(|| kappa_sum / kappa_batches as f64),
            val,
            kappa_skips,
        };
        on_epoch(&row);
        rows.push(row);
    }
    Ok(rows)
}

struct BatchStep {
    total: f64,
    bce: f64,
    kappa: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn step_batch(
    model: &mut dyn IwdModel,
    samples: &[TrainSample],
    batch: &[usize],
    cfg: &TrainConfig,
    epoch: usize,
    batch_idx: usize,
    adam: &mut AdamState,
) -> Result<BatchStep> {
    // Per-sample forward graphs, in parallel; dropout RNG derives from the
    // sample's dataset index so thread scheduling cannot perturb it.
    let forwards: Vec<(Tape, crate::models::ForwardVars, f64)> = batch
        .par_iter()
        .map(|&idx| -> Result<_> {
            let mut tape = Tape::new();
            let mut rng = ChaCha12Rng::seed_from_u64(derive_rng_seed(&[
                cfg.seed,
                0xD1,
                epoch as u64,
                idx as u64,
            ]));
            let mut ctx = FwdCtx::train(&mut rng);
            let fv = model.forward(&mut tape, &samples[idx].input, &mut ctx)?;
            let p = tape.value(fv.p).scalar_value();
            Ok((tape, fv, p))
        })
        .collect::<Result<Vec<_>>>()?;

    let p_values: Vec<f64> = forwards.iter().map(|(_, _, p)| *p).collect();
    let y_values: Vec<f64> = batch.iter().map(|&idx| samples[idx].label).collect();

    // Batch-level loss graph over the probability vector.
    let mut loss_tape = Tape::new();
    let p_leaf = loss_tape.leaf(Tensor::row(p_values.clone())?);
    let graph = build_loss_graph(
        &mut loss_tape,
        p_leaf,
        &y_values,
        &cfg.loss_weights,
        cfg.clamp_eps,
        cfg.kappa_alt_normalization,
    )?;
    let total = loss_tape.value(graph.total).scalar_value();
    if !total.is_finite() {
        return Err(Error::NumericalAbort(format!(
            "non-finite loss at epoch {epoch} batch {batch_idx} (p range {:?})",
            p_values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
        )));
    }
    let bce = loss_tape.value(graph.bce).scalar_value();
    let kappa = graph.kappa.map(|k| loss_tape.value(k).scalar_value());
    let loss_grads = loss_tape.backward(graph.total)?;
    let dp = loss_grads
        .get(p_leaf)
        .ok_or_else(|| Error::NumericalAbort("loss did not reach the probabilities".into()))?
        .to_vec();

    // Per-sample backward, seeded with ∂L/∂pᵢ; parallel, then accumulated
    // in batch order for bit determinism.
    let per_sample: Vec<Vec<Vec<f64>>> = forwards
        .par_iter()
        .enumerate()
        .map(|(i, (tape, fv, _))| -> Result<Vec<Vec<f64>>> {
            let grads = tape.backward_seeded(fv.p, &[dp[i]])?;
            Ok(fv
                .params
                .iter()
                .map(|&v| {
                    grads
                        .get(v)
                        .map(|g| g.to_vec())
                        .unwrap_or_else(|| vec![0.0; tape.value(v).numel()])
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let group_sizes: Vec<usize> = model.param_entries().iter().map(|(_, t)| t.numel()).collect();
    let mut accum: Vec<Vec<f64>> = group_sizes.iter().map(|&n| vec![0.0; n]).collect();
    for sample_grads in &per_sample {
        for (acc, g) in accum.iter_mut().zip(sample_grads) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }

    let mut params = model.param_entries_mut();
    adam.step(&mut params, &accum)?;
    Ok(BatchStep { total, bce, kappa })
}

/// Deterministic 80/20-style split on a stable hash of the record id.
pub fn split_by_id_hash(records: Vec<DdmRecord>, val_fraction: f64) -> (Vec<DdmRecord>, Vec<DdmRecord>) {
    use sha2::{Digest, Sha256};
    let cut = (val_fraction.clamp(0.0, 1.0) * 10_000.0) as u64;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for rec in records {
        let digest = Sha256::digest(rec.id.as_bytes());
        let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        if h % 10_000 < cut {
            val.push(rec);
        } else {
            train.push(rec);
        }
    }
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_examples() {
        // Perfect (after clamping) predictions.
        let l = bce_loss(&[1.0, 0.0], &[1.0, 0.0], 1e-7).unwrap();
        assert!(l < 1e-6 && l >= 0.0);
        // Coin-flip predictions: ln 2.
        let l = bce_loss(&[0.5, 0.5, 0.5], &[1.0, 0.0, 1.0], 1e-7).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        // B=2, p=(0.9, 0.1), y=(1, 0) → −ln 0.9.
        let l = bce_loss(&[0.9, 0.1], &[1.0, 0.0], 1e-7).unwrap();
        assert!((l - (-(0.9f64.ln()))).abs() < 1e-12);
    }

    #[test]
    fn kappa_printed_formula_examples() {
        // B=2, p=(0.9, 0.1), y=(1, 0): 1 − 1.3/0.92 ≈ −0.41304.
        let k = kappa_loss(&[0.9, 0.1], &[1.0, 0.0], false).unwrap().unwrap();
        assert!((k - (1.0 - 1.3 / 0.92)).abs() < 1e-12);
        assert!((k - (-0.413043478260869)).abs() < 1e-12);
        // B=2, p=(0.5, 0.5), y=(1, 0): 0.5.
        let k = kappa_loss(&[0.5, 0.5], &[1.0, 0.0], false).unwrap().unwrap();
        assert!((k - 0.5).abs() < 1e-12);
        // Degenerate: all zeros.
        assert_eq!(kappa_loss(&[0.0, 0.0], &[0.0, 0.0], false).unwrap(), None);
    }

    #[test]
    fn kappa_alt_normalization_caps_at_one() {
        // Perfect hard agreement scores exactly κ_soft = 1 → loss 0.
        let k = kappa_loss(&[1.0, 0.0], &[1.0, 0.0], true).unwrap().unwrap();
        assert!(k.abs() < 1e-12);
        // The printed form overshoots on the same input (negative loss).
        let k = kappa_loss(&[1.0, 0.0], &[1.0, 0.0], false).unwrap().unwrap();
        assert!(k < 0.0);
    }

    #[test]
    fn total_loss_is_sum_and_respects_skip() {
        let p = [0.8, 0.3, 0.6, 0.1];
        let y = [1.0, 0.0, 1.0, 0.0];
        let w = LossWeights::default();
        let (total, bce, kappa) = total_loss(&p, &y, &w, 1e-7, false).unwrap();
        assert!((total - (bce + kappa.unwrap())).abs() < 1e-12);
        // Degenerate batch: total equals BCE alone.
        let (total, bce, kappa) = total_loss(&[0.0, 0.0], &[0.0, 0.0], &w, 1e-7, false).unwrap();
        assert_eq!(kappa, None);
        assert!((total - bce).abs() < 1e-15);
    }

    #[test]
    fn total_loss_is_permutation_invariant() {
        let p = [0.8, 0.3, 0.6, 0.1, 0.9];
        let y = [1.0, 0.0, 1.0, 0.0, 1.0];
        let perm = [4usize, 2, 0, 3, 1];
        let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let w = LossWeights::default();
        let a = total_loss(&p, &y, &w, 1e-7, false).unwrap().0;
        let b = total_loss(&pp, &yp, &w, 1e-7, false).unwrap().0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn graph_loss_matches_pure_functions() {
        let p = vec![0.73, 0.21, 0.55, 0.98, 0.02];
        let y = vec![1.0, 0.0, 1.0, 1.0, 0.0];
        let w = LossWeights { bce: 1.0, kappa: 1.0 };
        let mut tape = Tape::new();
        let pv = tape.leaf(Tensor::row(p.clone()).unwrap());
        let g = build_loss_graph(&mut tape, pv, &y, &w, 1e-7, false).unwrap();
        let (total, bce, kappa) = total_loss(&p, &y, &w, 1e-7, false).unwrap();
        assert!((tape.value(g.total).scalar_value() - total).abs() < 1e-12);
        assert!((tape.value(g.bce).scalar_value() - bce).abs() < 1e-12);
        assert!(
            (tape.value(g.kappa.unwrap()).scalar_value() - kappa.unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn kappa_gradient_matches_finite_differences() {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for alt in [false, true] {
            for _ in 0..20 {
                let b = 8;
                let p: Vec<f64> = (0..b).map(|_| rng.gen_range(0.05..0.95)).collect();
                let y: Vec<f64> = (0..b).map(|_| f64::from(rng.gen_bool(0.4))).collect();
                let (_, den) = kappa_terms(&p, &y, alt);
                if den.abs() < 1e-6 {
                    continue;
                }
                let grads = {
                    let mut tape = Tape::new();
                    let pv = tape.leaf(Tensor::row(p.clone()).unwrap());
                    let w = LossWeights { bce: 0.0, kappa: 1.0 };
                    let g = build_loss_graph(&mut tape, pv, &y, &w, 1e-7, alt).unwrap();
                    let gr = tape.backward(g.total).unwrap();
                    gr.get(pv).unwrap().to_vec()
                };
                let h = 1e-6;
                for i in 0..b {
                    let mut up = p.clone();
                    let mut dn = p.clone();
                    up[i] += h;
                    dn[i] -= h;
                    let fd = (kappa_loss(&up, &y, alt).unwrap().unwrap()
                        - kappa_loss(&dn, &y, alt).unwrap().unwrap())
                        / (2.0 * h);
                    let an = grads[i];
                    let denom = an.abs().max(fd.abs()).max(1.0);
                    assert!((an - fd).abs() / denom < 1e-6, "i={i} an={an} fd={fd}");
                }
            }
        }
    }

    #[test]
    fn split_is_deterministic_and_roughly_sized() {
        let rec = |id: &str| DdmRecord {
            id: id.into(),
            lat: 0.0,
            lon: 0.0,
            time: "2021-01-01T00:00:00.000Z".into(),
            sp_inc_angle_deg: 10.0,
            ant_gain_db: 3.0,
            quality_flags: 0,
            noise_avg: 1.0,
            ddm: {
                let mut d = crate::ddm::DelayDopplerMap::zeros();
                d.set(8, 5, 5.0);
                d
            },
            label: Some(0),
        };
        let records: Vec<DdmRecord> = (0..2000).map(|i| rec(&format!("id{i:05}"))).collect();
        let (train1, val1) = split_by_id_hash(records.clone(), 0.2);
        let (train2, val2) = split_by_id_hash(records, 0.2);
        assert_eq!(train1.len(), train2.len());
        assert_eq!(val1.len(), val2.len());
        let frac = val1.len() as f64 / 2000.0;
        assert!((frac - 0.2).abs() < 0.04, "val fraction {frac}");
        assert_eq!(
            val1.iter().map(|r| &r.id).collect::<Vec<_>>(),
            val2.iter().map(|r| &r.id).collect::<Vec<_>>()
        );
    }
}
