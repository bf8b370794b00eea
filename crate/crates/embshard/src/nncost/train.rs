//! Minibatch trainers and finite-difference gradient checks.
//!
//! Both trainers run plain MSE regression with Adam: shuffle once into
//! train/validation/test splits, iterate shuffled minibatches, track the
//! best validation loss, and restore that snapshot before reporting
//! metrics. Everything is driven by a single seeded RNG, so a (data, config)
//! pair always produces bit-identical parameters.

use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{CommSample, ComputeSample};
use crate::error::{Error, Result};
use crate::nncost::comm::CommCostModel;
use crate::nncost::compute::{ComputeCostModel, EMBED_DIM};
use crate::nncost::feature::FEATURE_DIM;
use crate::nncost::mlp::{Adam, MlpGrads};
use crate::nncost::sha256_hex;

/// Fewest samples a trainer accepts; below this the 80/10/10 split collapses.
pub const MIN_TRAIN_SAMPLES: usize = 10;

/// Step size for the finite-difference gradient checks.
pub const GRAD_CHECK_H: f64 = 1e-4;

/// Hyperparameters shared by both trainers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of samples used for gradient steps.
    pub train_frac: f64,
    /// Fraction used for best-snapshot selection; the remainder is test.
    pub valid_frac: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 512,
            learning_rate: 1e-3,
            train_frac: 0.8,
            valid_frac: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bad learning rate {}",
                self.learning_rate
            )));
        }
        if !(self.train_frac > 0.0 && self.valid_frac > 0.0)
            || self.train_frac + self.valid_frac >= 1.0
        {
            return Err(Error::InvalidArgument(format!(
                "split fractions ({}, {}) must be positive and leave room for a test set",
                self.train_frac, self.valid_frac
            )));
        }
        Ok(())
    }
}

/// Final losses of a training run, measured with the restored best-validation
/// parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub train_mse: f64,
    pub valid_mse: f64,
    pub test_mse: f64,
    /// 1-based epoch of the restored snapshot; 0 means the initial parameters
    /// were never beaten.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

struct Split {
    train: Vec<usize>,
    valid: Vec<usize>,
    test: Vec<usize>,
}

fn split_indices(n: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Split> {
    if n < MIN_TRAIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_TRAIN_SAMPLES} samples, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = ((n as f64 * cfg.train_frac).floor() as usize).max(1);
    let n_valid = ((n as f64 * cfg.valid_frac).floor() as usize).max(1);
    if n_train + n_valid >= n {
        return Err(Error::InvalidArgument(
            "split fractions leave no test samples".into(),
        ));
    }
    let test = order.split_off(n_train + n_valid);
    let valid = order.split_off(n_train);
    Ok(Split {
        train: order,
        valid,
        test,
    })
}

/// Indices of the held-out test split a trainer would carve from `n` samples
/// under `cfg`. Lets callers score a trained model on exactly the samples it
/// never saw.
pub fn test_indices(n: usize, cfg: &TrainConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(split_indices(n, cfg, &mut rng)?.test)
}

fn train_fingerprint(kind: &str, cfg: &TrainConfig, samples: usize) -> String {
    let cfg_json = serde_json::to_string(cfg).expect("config serializes");
    sha256_hex(format!("{kind};{cfg_json};samples={samples}").as_bytes())
}

// ── Compute model ───────────────────────────────────────────────────────────

struct ComputeBatch {
    /// One feature row per table across the whole batch.
    rows: Array2<f64>,
    /// Row -> sample index within the batch, for sum pooling.
    seg: Vec<usize>,
    y: Array1<f64>,
}

fn compute_batch(samples: &[ComputeSample], idx: &[usize]) -> ComputeBatch {
    let total: usize = idx.iter().map(|&i| samples[i].features.len()).sum();
    let mut rows = Array2::zeros((total, FEATURE_DIM));
    let mut seg = Vec::with_capacity(total);
    let mut y = Array1::zeros(idx.len());
    let mut r = 0;
    for (bi, &i) in idx.iter().enumerate() {
        y[bi] = samples[i].cost_ms;
        for f in &samples[i].features {
            for (c, &v) in f.iter().enumerate() {
                rows[[r, c]] = v;
            }
            seg.push(bi);
            r += 1;
        }
    }
    ComputeBatch { rows, seg, y }
}

fn pool_rows(emb: &Array2<f64>, seg: &[usize], batch_len: usize) -> Array2<f64> {
    let mut pooled = Array2::zeros((batch_len, EMBED_DIM));
    for (r, &s) in seg.iter().enumerate() {
        let mut p = pooled.row_mut(s);
        p += &emb.row(r);
    }
    pooled
}

fn compute_predictions(model: &ComputeCostModel, batch: &ComputeBatch) -> Array1<f64> {
    let enc_acts = model.encoder.forward_batch(&batch.rows);
    let pooled = pool_rows(enc_acts.last().unwrap(), &batch.seg, batch.y.len());
    let head_acts = model.head.forward_batch(&pooled);
    head_acts.last().unwrap().column(0).to_owned()
}

fn compute_mse(
    model: &ComputeCostModel,
    samples: &[ComputeSample],
    idx: &[usize],
    batch_size: usize,
) -> f64 {
    let mut sse = 0.0;
    for chunk in idx.chunks(batch_size) {
        let batch = compute_batch(samples, chunk);
        let preds = compute_predictions(model, &batch);
        sse += (&preds - &batch.y).mapv(|d| d * d).sum();
    }
    sse / idx.len() as f64
}

/// One gradient step on a batch; returns the batch loss.
fn compute_step(
    model: &mut ComputeCostModel,
    batch: &ComputeBatch,
    adam_enc: &mut Adam,
    adam_head: &mut Adam,
    lr: f64,
) -> f64 {
    let enc_acts = model.encoder.forward_batch(&batch.rows);
    let pooled = pool_rows(enc_acts.last().unwrap(), &batch.seg, batch.y.len());
    let head_acts = model.head.forward_batch(&pooled);
    let preds = head_acts.last().unwrap().column(0).to_owned();
    let diff = &preds - &batch.y;
    let loss = diff.mapv(|d| d * d).mean().unwrap();

    let b = batch.y.len() as f64;
    let d_pred = diff.mapv(|d| 2.0 * d / b).insert_axis(Axis(1));
    let (head_grads, d_pooled) = model.head.backward_batch(&pooled, &head_acts, d_pred);
    let mut d_rows = Array2::zeros((batch.rows.nrows(), EMBED_DIM));
    for (r, &s) in batch.seg.iter().enumerate() {
        d_rows.row_mut(r).assign(&d_pooled.row(s));
    }
    let (enc_grads, _) = model.encoder.backward_batch(&batch.rows, &enc_acts, d_rows);
    adam_enc.step(&mut model.encoder, &enc_grads, lr);
    adam_head.step(&mut model.head, &head_grads, lr);
    loss
}

/// Train the fused-kernel cost model. Restores the parameters with the best
/// validation MSE and reports losses for that snapshot.
pub fn train_compute(
    model: &mut ComputeCostModel,
    samples: &[ComputeSample],
    cfg: &TrainConfig,
) -> Result<TrainMetrics> {
    cfg.validate()?;
    if samples.iter().any(|s| s.features.is_empty()) {
        return Err(Error::InvalidArgument(
            "compute sample without tables".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut split = split_indices(samples.len(), cfg, &mut rng)?;

    let mut adam_enc = Adam::new(&model.encoder);
    let mut adam_head = Adam::new(&model.head);
    let mut best_valid = compute_mse(model, samples, &split.valid, cfg.batch_size);
    let mut best_epoch = 0;
    let mut best_params = (model.encoder.clone(), model.head.clone());

    for epoch in 0..cfg.epochs {
        split.train.shuffle(&mut rng);
        for chunk in split.train.chunks(cfg.batch_size) {
            let batch = compute_batch(samples, chunk);
            let loss = compute_step(model, &batch, &mut adam_enc, &mut adam_head, cfg.learning_rate);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
        }
        let valid = compute_mse(model, samples, &split.valid, cfg.batch_size);
        if !valid.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        if valid < best_valid {
            best_valid = valid;
            best_epoch = epoch + 1;
            best_params = (model.encoder.clone(), model.head.clone());
        }
    }
    model.encoder = best_params.0;
    model.head = best_params.1;
    model.train_fingerprint = Some(train_fingerprint("compute", cfg, samples.len()));
    Ok(TrainMetrics {
        train_mse: compute_mse(model, samples, &split.train, cfg.batch_size),
        valid_mse: compute_mse(model, samples, &split.valid, cfg.batch_size),
        test_mse: compute_mse(model, samples, &split.test, cfg.batch_size),
        best_epoch,
        epochs_run: cfg.epochs,
    })
}

// ── Comm model ──────────────────────────────────────────────────────────────

fn comm_batch(
    model: &CommCostModel,
    samples: &[CommSample],
    idx: &[usize],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = model.devices;
    let mut x = Array2::zeros((idx.len(), 2 * d));
    let mut y = Array2::zeros((idx.len(), d));
    for (bi, &i) in idx.iter().enumerate() {
        let s = &samples[i];
        let v = model.input_vector(&s.starts_ms, &s.device_dims)?;
        for (c, &vv) in v.iter().enumerate() {
            x[[bi, c]] = vv;
        }
        for (c, &cost) in s.costs_ms.iter().enumerate() {
            y[[bi, c]] = cost;
        }
    }
    Ok((x, y))
}

fn comm_mse(
    model: &CommCostModel,
    samples: &[CommSample],
    idx: &[usize],
    batch_size: usize,
) -> Result<f64> {
    let mut sse = 0.0;
    for chunk in idx.chunks(batch_size) {
        let (x, y) = comm_batch(model, samples, chunk)?;
        let acts = model.net.forward_batch(&x);
        sse += (acts.last().unwrap() - &y).mapv(|d| d * d).sum();
    }
    Ok(sse / (idx.len() * model.devices) as f64)
}

/// Train an all-to-all cost model for one direction.
pub fn train_comm(
    model: &mut CommCostModel,
    samples: &[CommSample],
    cfg: &TrainConfig,
) -> Result<TrainMetrics> {
    cfg.validate()?;
    for s in samples {
        if s.direction != model.direction {
            return Err(Error::InvalidArgument(format!(
                "sample direction {:?} does not match model direction {:?}",
                s.direction, model.direction
            )));
        }
        if s.costs_ms.len() != model.devices {
            return Err(Error::InvalidArgument(format!(
                "sample has {} device costs, model expects {}",
                s.costs_ms.len(),
                model.devices
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut split = split_indices(samples.len(), cfg, &mut rng)?;

    let mut adam = Adam::new(&model.net);
    let mut best_valid = comm_mse(model, samples, &split.valid, cfg.batch_size)?;
    let mut best_epoch = 0;
    let mut best_params = model.net.clone();

    for epoch in 0..cfg.epochs {
        split.train.shuffle(&mut rng);
        for chunk in split.train.chunks(cfg.batch_size) {
            let (x, y) = comm_batch(model, samples, chunk)?;
            let acts = model.net.forward_batch(&x);
            let diff = acts.last().unwrap() - &y;
            let loss = diff.mapv(|d| d * d).mean().unwrap();
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            let scale = 2.0 / (y.len() as f64);
            let d_out = diff.mapv(|d| scale * d);
            let (grads, _) = model.net.backward_batch(&x, &acts, d_out);
            adam.step(&mut model.net, &grads, cfg.learning_rate);
        }
        let valid = comm_mse(model, samples, &split.valid, cfg.batch_size)?;
        if !valid.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        if valid < best_valid {
            best_valid = valid;
            best_epoch = epoch + 1;
            best_params = model.net.clone();
        }
    }
    model.net = best_params;
    model.train_fingerprint = Some(train_fingerprint("comm", cfg, samples.len()));
    Ok(TrainMetrics {
        train_mse: comm_mse(model, samples, &split.train, cfg.batch_size)?,
        valid_mse: comm_mse(model, samples, &split.valid, cfg.batch_size)?,
        test_mse: comm_mse(model, samples, &split.test, cfg.batch_size)?,
        best_epoch,
        epochs_run: cfg.epochs,
    })
}

// ── Gradient checks ─────────────────────────────────────────────────────────

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Analytic gradients of `(pred - label)^2` for one compute sample.
fn compute_loss_grads(
    model: &ComputeCostModel,
    batch: &ComputeBatch,
) -> (MlpGrads, MlpGrads, f64) {
    let enc_acts = model.encoder.forward_batch(&batch.rows);
    let pooled = pool_rows(enc_acts.last().unwrap(), &batch.seg, 1);
    let head_acts = model.head.forward_batch(&pooled);
    let pred = head_acts.last().unwrap()[[0, 0]];
    let diff = pred - batch.y[0];
    let d_pred = Array2::from_elem((1, 1), 2.0 * diff);
    let (head_grads, d_pooled) = model.head.backward_batch(&pooled, &head_acts, d_pred);
    let mut d_rows = Array2::zeros((batch.rows.nrows(), EMBED_DIM));
    for r in 0..batch.rows.nrows() {
        d_rows.row_mut(r).assign(&d_pooled.row(0));
    }
    let (enc_grads, _) = model.encoder.backward_batch(&batch.rows, &enc_acts, d_rows);
    (enc_grads, head_grads, diff * diff)
}

/// Compare analytic and central-difference gradients of the squared error on
/// one sample, over every parameter. Returns the worst relative error.
pub fn gradient_check_compute(model: &ComputeCostModel, sample: &ComputeSample) -> Result<f64> {
    if sample.features.is_empty() {
        return Err(Error::InvalidArgument(
            "compute sample without tables".into(),
        ));
    }
    let batch = compute_batch(std::slice::from_ref(sample), &[0]);
    let (enc_grads, head_grads, _) = compute_loss_grads(model, &batch);
    let mut analytic = enc_grads.flat();
    analytic.extend(head_grads.flat());

    let enc_n = model.encoder.param_count();
    let mut theta = model.encoder.params_flat();
    theta.extend(model.head.params_flat());
    let mut probe = model.clone();
    let mut loss_at = |theta: &[f64]| -> f64 {
        probe.encoder.set_params_flat(&theta[..enc_n]);
        probe.head.set_params_flat(&theta[enc_n..]);
        let pred = compute_predictions(&probe, &batch)[0];
        let d = pred - batch.y[0];
        d * d
    };

    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + GRAD_CHECK_H;
        let up = loss_at(&theta);
        theta[i] = orig - GRAD_CHECK_H;
        let down = loss_at(&theta);
        theta[i] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_H);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    Ok(worst)
}

/// Gradient check for a comm model: squared error summed over devices on one
/// sample. Returns the worst relative error.
pub fn gradient_check_comm(model: &CommCostModel, sample: &CommSample) -> Result<f64> {
    let (x, y) = comm_batch(model, std::slice::from_ref(sample), &[0])?;
    let acts = model.net.forward_batch(&x);
    let diff = acts.last().unwrap() - &y;
    let d_out = diff.mapv(|d| 2.0 * d);
    let (grads, _) = model.net.backward_batch(&x, &acts, d_out);
    let analytic = grads.flat();

    let mut theta = model.net.params_flat();
    let mut probe = model.clone();
    let mut loss_at = |theta: &[f64]| -> f64 {
        probe.net.set_params_flat(theta);
        let acts = probe.net.forward_batch(&x);
        (acts.last().unwrap() - &y).mapv(|d| d * d).sum()
    };

    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + GRAD_CHECK_H;
        let up = loss_at(&theta);
        theta[i] = orig - GRAD_CHECK_H;
        let down = loss_at(&theta);
        theta[i] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_H);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    Ok(worst)
}

// ── Tests ───────────────────────────────────────────────────────────────────
