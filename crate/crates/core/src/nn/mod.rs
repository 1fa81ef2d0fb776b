//! Small fully connected networks with hand-written backpropagation.
//!
//! Hidden layers use ReLU; the output layer is affine and any squashing is
//! applied by the caller (see [`heads`]). Everything is `f64` and batched:
//! inputs are `batch × features` matrices.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod heads;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheck};
pub use heads::{actor_heads, ActorOutput, STD_FLOOR};

/// Affine map `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// He-uniform weights, zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        Linear {
            weight: Array2::from_shape_simple_fn((outputs, inputs), || {
                rng.random_range(-bound..bound)
            }),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }
}

/// Multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
}

/// Parameter-shaped gradient (or moment) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Linear>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| Linear::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|x| x.is_finite()))
    }
}

impl Mlp {
    /// `sizes = [input, hidden…, output]`, He-uniform initialized.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Linear::he_uniform(w[0], w[1], rng))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs a layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::DimensionMismatch {
                    expected: w[0].outputs(),
                    got: w[1].inputs(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::DimensionMismatch {
                    expected: l.outputs(),
                    got: l.bias.len(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs()];
        sizes.extend(self.layers.iter().map(Linear::outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Multiplies the output layer's weights and biases by `gain`.
    pub fn scale_output(&mut self, gain: f64) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weight *= gain;
        last.bias *= gain;
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn load_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let depth = self.layers.len();
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth - 1);
        let mut h = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(h.view());
            inputs.push(h);
            if k + 1 == depth {
                return Ok((z, MlpCache { inputs, pre }));
            }
            h = z.mapv(|v| v.max(0.0));
            pre.push(z);
        }
        unreachable!("loop returns at the output layer")
    }

    /// Forward without keeping a cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let depth = self.layers.len();
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..depth] {
            h.mapv_inplace(|v| v.max(0.0));
            h = layer.forward(h.view());
        }
        Ok(h)
    }

    /// Single-sample forward.
    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of a scalar loss given `dL/d(output)` for every sample,
    /// summed over the batch.
    pub fn backward(&self, cache: &MlpCache, output_grad: ArrayView2<f64>) -> Result<MlpGrads> {
        let depth = self.layers.len();
        if cache.inputs.len() != depth || cache.pre.len() + 1 != depth {
            return Err(Error::InvalidArgument("cache does not match network".into()));
        }
        let batch = cache.inputs[0].nrows();
        if output_grad.dim() != (batch, self.output_dim()) {
            return Err(Error::InvalidArgument(format!(
                "output gradient shape {:?} does not match ({batch}, {})",
                output_grad.dim(),
                self.output_dim()
            )));
        }
        let mut grads = Vec::with_capacity(depth);
        let mut delta = output_grad.to_owned();
        for k in (0..depth).rev() {
            let layer = &self.layers[k];
            let input = &cache.inputs[k];
            if input.ncols() != layer.inputs() {
                return Err(Error::InvalidArgument("stale cache".into()));
            }
            let weight = delta.t().dot(input);
            let bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut next = delta.dot(&layer.weight);
                Zip::from(&mut next)
                    .and(&cache.pre[k - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = next;
            }
            grads.push(Linear { weight, bias });
        }
        grads.reverse();
        Ok(MlpGrads { layers: grads })
    }
}

fn flatten_layers(layers: &[Linear]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weight.iter());
        out.extend(l.bias.iter());
    }
    out
}

/// Hidden widths `⌈70K⌉, ⌈50K⌉, ⌈30K⌉` with `K = sqrt(N/M)·log2(M+1)`.
pub fn hidden_sizes(sensors: usize, channels: usize) -> [usize; 3] {
    let k = (sensors as f64 / channels as f64).sqrt() * ((channels + 1) as f64).log2();
    [70.0, 50.0, 30.0].map(|c: f64| (c * k).ceil() as usize)
}
