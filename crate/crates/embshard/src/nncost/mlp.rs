//! Minimal dense network: enough machinery to train the cost models and to
//! check their gradients, nothing more.

use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One fully connected layer, optionally followed by ReLU.
#[derive(Debug, Clone)]
pub struct Dense {
    /// `out x in`, row per output neuron.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub relu: bool,
}

impl Dense {
    fn he_init(in_dim: usize, out_dim: usize, relu: bool, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| rng.gen_range(-limit..limit));
        Dense {
            w,
            b: Array1::zeros(out_dim),
            relu,
        }
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer gradients, shaped like the parameters.
pub struct MlpGrads {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Mlp {
    /// Build from a shape list like `[5, 128, 32]`. Hidden layers get ReLU;
    /// the final layer is linear unless `relu_out` is set (used when the
    /// stack feeds another stack, as the shared encoder does).
    pub fn new(shape: &[usize], relu_out: bool, rng: &mut ChaCha8Rng) -> Self {
        assert!(shape.len() >= 2, "an mlp needs at least one layer");
        let layers = shape
            .windows(2)
            .enumerate()
            .map(|(i, io)| {
                let last = i == shape.len() - 2;
                Dense::he_init(io[0], io[1], !last || relu_out, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    /// Batched forward pass; returns each layer's post-activation output.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            let mut z = cur.dot(&layer.w.t());
            z += &layer.b;
            if layer.relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
            cur = acts.last().unwrap();
        }
        acts
    }

    /// Backward pass given the forward activations. Returns parameter
    /// gradients and the gradient with respect to the input batch.
    pub fn backward_batch(
        &self,
        x: &Array2<f64>,
        acts: &[Array2<f64>],
        grad_out: Array2<f64>,
    ) -> (MlpGrads, Array2<f64>) {
        let mut gw = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut gb = vec![Array1::zeros(0); self.layers.len()];
        let mut grad = grad_out;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if layer.relu {
                // post-activation > 0 iff pre-activation > 0
                grad.zip_mut_with(&acts[i], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            let input = if i == 0 { x } else { &acts[i - 1] };
            gw[i] = grad.t().dot(input);
            gb[i] = grad.sum_axis(Axis(0));
            grad = grad.dot(&layer.w);
        }
        (MlpGrads { w: gw, b: gb }, grad)
    }

    /// Single-row forward pass with a fixed accumulation order; every
    /// inference path uses this so repeated evaluations agree bit for bit.
    pub fn forward1(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim());
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.clear();
            next.reserve(layer.w.nrows());
            for (row, &bias) in layer.w.rows().into_iter().zip(layer.b.iter()) {
                let mut acc = bias;
                for (w, v) in row.iter().zip(cur.iter()) {
                    acc += w * v;
                }
                next.push(if layer.relu { acc.max(0.0) } else { acc });
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened layer by layer, row-major weights then biases.
    /// Gradient flattening uses the same order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut at = 0;
        for l in &mut self.layers {
            for w in l.w.iter_mut() {
                *w = params[at];
                at += 1;
            }
            for b in l.b.iter_mut() {
                *b = params[at];
                at += 1;
            }
        }
    }

    pub fn zero_params(&mut self) {
        for l in &mut self.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
    }
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

// ── Adam optimizer ──────────────────────────────────────────────────────────

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam state for one `Mlp`.
pub struct Adam {
    mw: Vec<Array2<f64>>,
    vw: Vec<Array2<f64>>,
    mb: Vec<Array1<f64>>,
    vb: Vec<Array1<f64>>,
    step: i32,
}

impl Adam {
    pub fn new(mlp: &Mlp) -> Self {
        Adam {
            mw: mlp.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect(),
            vw: mlp.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect(),
            mb: mlp.layers.iter().map(|l| Array1::zeros(l.b.len())).collect(),
            vb: mlp.layers.iter().map(|l| Array1::zeros(l.b.len())).collect(),
            step: 0,
        }
    }

    pub fn step(&mut self, mlp: &mut Mlp, grads: &MlpGrads, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (i, layer) in mlp.layers.iter_mut().enumerate() {
            update(
                layer.w.iter_mut(),
                grads.w[i].iter(),
                self.mw[i].iter_mut(),
                self.vw[i].iter_mut(),
                lr,
                c1,
                c2,
            );
            update(
                layer.b.iter_mut(),
                grads.b[i].iter(),
                self.mb[i].iter_mut(),
                self.vb[i].iter_mut(),
                lr,
                c1,
                c2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update<'a>(
    params: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'a f64>,
    ms: impl Iterator<Item = &'a mut f64>,
    vs: impl Iterator<Item = &'a mut f64>,
    lr: f64,
    c1: f64,
    c2: f64,
) {
    for (((p, &g), m), v) in params.zip(grads).zip(ms).zip(vs) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let mhat = *m / c1;
        let vhat = *v / c2;
        *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
    }
}

// ── Serialization ───────────────────────────────────────────────────────────

/// On-disk form of one layer: shapes plus row-major weights.
#[derive(Debug, Serialize, Deserialize)]
pub struct DenseFile {
    pub in_dim: usize,
    pub out_dim: usize,
    pub relu: bool,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl From<&Dense> for DenseFile {
    fn from(d: &Dense) -> Self {
        DenseFile {
            in_dim: d.w.ncols(),
            out_dim: d.w.nrows(),
            relu: d.relu,
            w: d.w.iter().copied().collect(),
            b: d.b.to_vec(),
        }
    }
}

impl TryFrom<DenseFile> for Dense {
    type Error = crate::error::Error;

    fn try_from(f: DenseFile) -> crate::error::Result<Dense> {
        let w = Array2::from_shape_vec((f.out_dim, f.in_dim), f.w)
            .map_err(|e| crate::error::Error::InvalidArgument(format!("bad layer shape: {e}")))?;
        if f.b.len() != f.out_dim {
            return Err(crate::error::Error::InvalidArgument(
                "bias length does not match layer output".into(),
            ));
        }
        Ok(Dense {
            w,
            b: Array1::from_vec(f.b),
            relu: f.relu,
        })
    }
}

pub fn mlp_to_files(mlp: &Mlp) -> Vec<DenseFile> {
    mlp.layers.iter().map(DenseFile::from).collect()
}

pub fn mlp_from_files(files: Vec<DenseFile>) -> crate::error::Result<Mlp> {
    if files.is_empty() {
        return Err(crate::error::Error::InvalidArgument(
            "a serialized mlp needs at least one layer".into(),
        ));
    }
    let layers = files
        .into_iter()
        .map(Dense::try_from)
        .collect::<crate::error::Result<Vec<_>>>()?;
    Ok(Mlp { layers })
}

// ── Tests ───────────────────────────────────────────────────────────────────
