//! Dense feed-forward networks with hand-written backpropagation and Adam.
//! Shared by the fidelity regressors and the Q-networks.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MLP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Sigmoid => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Identity => {}
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::with_lr(1e-3)
    }
}

#[derive(Debug, Clone)]
struct Dense {
    /// `inputs x outputs`.
    w: Array2<f64>,
    b: Array1<f64>,
    act: Activation,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

#[derive(Debug, Clone)]
struct AdamState {
    t: u64,
    m: Gradients,
    v: Gradients,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "MlpSnapshot", try_from = "MlpSnapshot")]
pub struct Mlp {
    layers: Vec<Dense>,
    adam: AdamConfig,
    state: AdamState,
}

#[derive(Serialize, Deserialize)]
struct LayerSnapshot {
    activation: Activation,
    /// Row per input unit.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct MlpSnapshot {
    schema_version: u32,
    adam: AdamConfig,
    layers: Vec<LayerSnapshot>,
}

impl Mlp {
    /// Xavier-uniform initialised network. `sizes` lists every layer width
    /// including input and output.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    w: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit)),
                    b: Array1::zeros(fan_out),
                    act: if i + 1 == n { output } else { hidden },
                }
            })
            .collect();
        Self::from_layers(layers, adam)
    }

    fn from_layers(layers: Vec<Dense>, adam: AdamConfig) -> Self {
        let zeros = || Gradients {
            w: layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            b: layers.iter().map(|l| Array1::zeros(l.b.len())).collect(),
        };
        let state = AdamState {
            t: 0,
            m: zeros(),
            v: zeros(),
        };
        Mlp { layers, adam, state }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.adam.lr = lr;
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for l in &self.layers {
            let mut z = a.dot(&l.w) + &l.b;
            l.act.apply(&mut z);
            a = z;
        }
        a
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.forward(view).into_raw_vec_and_offset().0)
    }

    fn forward_cached(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        for l in &self.layers {
            let mut z = acts.last().unwrap().dot(&l.w) + &l.b;
            l.act.apply(&mut z);
            acts.push(z);
        }
        acts
    }

    fn backward(&self, acts: &[Array2<f64>], out_grad: Array2<f64>) -> Gradients {
        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut delta = out_grad;
        for i in (0..n).rev() {
            let l = &self.layers[i];
            let a_out = &acts[i + 1];
            delta.zip_mut_with(a_out, |d, &a| *d *= l.act.derivative(a));
            gw.push(acts[i].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if i > 0 {
                delta = delta.dot(&l.w.t());
            }
        }
        gw.reverse();
        gb.reverse();
        Gradients { w: gw, b: gb }
    }

    /// Gradients for an arbitrary loss: `loss` maps network outputs to the
    /// loss value and its gradient with respect to those outputs.
    pub fn gradients_with<F>(&self, x: ArrayView2<f64>, loss: F) -> (f64, Gradients)
    where
        F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
    {
        let acts = self.forward_cached(x);
        let (value, out_grad) = loss(acts.last().unwrap());
        (value, self.backward(&acts, out_grad))
    }

    /// Mean squared error over all outputs and its gradients.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> (f64, Gradients) {
        self.gradients_with(x, |out| mse_loss(out, y))
    }

    pub fn apply_gradients(&mut self, g: &Gradients) {
        let AdamConfig { lr, beta1, beta2, eps } = self.adam;
        let st = &mut self.state;
        st.t += 1;
        let c1 = 1.0 - beta1.powi(st.t as i32);
        let c2 = 1.0 - beta2.powi(st.t as i32);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (i, l) in self.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut l.w)
                .and(&g.w[i])
                .and(&mut st.m.w[i])
                .and(&mut st.v.w[i])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut l.b)
                .and(&g.b[i])
                .and(&mut st.m.b[i])
                .and(&mut st.v.b[i])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }

    /// One Adam step on a custom loss; returns the pre-update loss.
    pub fn step_with<F>(&mut self, x: ArrayView2<f64>, loss: F) -> Result<f64>
    where
        F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
    {
        let (value, g) = self.gradients_with(x, loss);
        if !value.is_finite() {
            return Err(Error::Diverged {
                step: self.state.t,
                loss: value,
            });
        }
        self.apply_gradients(&g);
        Ok(value)
    }

    /// One Adam step on the MSE loss; returns the pre-update loss.
    pub fn train_step(&mut self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
        self.step_with(x, |out| mse_loss(out, y))
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|p| *p = it.next().unwrap());
            l.b.iter_mut().for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    /// Copies weights from `other` without touching the optimiser state.
    pub fn copy_weights_from(&mut self, other: &Mlp) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.assign(&b.w);
            a.b.assign(&b.b);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl From<Mlp> for MlpSnapshot {
    fn from(net: Mlp) -> Self {
        MlpSnapshot {
            schema_version: MLP_SCHEMA_VERSION,
            adam: net.adam,
            layers: net
                .layers
                .iter()
                .map(|l| LayerSnapshot {
                    activation: l.act,
                    weights: l.w.outer_iter().map(|r| r.to_vec()).collect(),
                    bias: l.b.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MlpSnapshot> for Mlp {
    type Error = Error;

    fn try_from(snap: MlpSnapshot) -> Result<Self> {
        if snap.schema_version != MLP_SCHEMA_VERSION {
            return Err(Error::Schema {
                found: snap.schema_version,
                expected: MLP_SCHEMA_VERSION,
            });
        }
        if snap.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        let mut layers = Vec::with_capacity(snap.layers.len());
        let mut prev: Option<usize> = None;
        for l in snap.layers {
            let rows = l.weights.len();
            let cols = l.bias.len();
            if rows == 0 || l.weights.iter().any(|r| r.len() != cols) || prev.is_some_and(|p| p != rows) {
                return Err(Error::Config("inconsistent layer shapes".into()));
            }
            let flat: Vec<f64> = l.weights.into_iter().flatten().collect();
            if flat.iter().any(|v| !v.is_finite()) || l.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("non-finite network parameter".into()));
            }
            layers.push(Dense {
                w: Array2::from_shape_vec((rows, cols), flat).expect("checked shape"),
                b: Array1::from(l.bias),
                act: l.activation,
            });
            prev = Some(cols);
        }
        Ok(Mlp::from_layers(layers, snap.adam))
    }
}

pub fn mse_loss(out: &Array2<f64>, y: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let diff = out - &y;
    let n = diff.len() as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (loss, diff * (2.0 / n))
}
