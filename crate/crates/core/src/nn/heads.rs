//! Gaussian policy heads over an affine network output.
//!
//! The actor network emits `2d` values per sample: the first `d` pass
//! through `tanh` to give the mean, the last `d` through softplus to give
//! the standard deviation.

use ndarray::{s, Array2, ArrayView2};

/// Lower bound on the policy standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ActorOutput {
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
}

impl ActorOutput {
    pub fn action_dim(&self) -> usize {
        self.mean.ncols()
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Splits raw outputs `[mean_pre | std_pre]` and applies the squashing maps.
pub fn actor_heads(raw: ArrayView2<f64>) -> ActorOutput {
    let d = raw.ncols() / 2;
    let mean = raw.slice(s![.., ..d]).mapv(f64::tanh);
    let std = raw
        .slice(s![.., d..2 * d])
        .mapv(|z| softplus(z).max(STD_FLOOR));
    ActorOutput { mean, std }
}

/// Chain rule back through [`actor_heads`]: `dL/dmean`, `dL/dstd` to `dL/draw`.
pub fn actor_heads_backward(
    raw: ArrayView2<f64>,
    heads: &ActorOutput,
    d_mean: ArrayView2<f64>,
    d_std: ArrayView2<f64>,
) -> Array2<f64> {
    let (batch, width) = raw.dim();
    let d = width / 2;
    let mut grad = Array2::zeros((batch, width));
    for i in 0..batch {
        for j in 0..d {
            let mu = heads.mean[(i, j)];
            grad[(i, j)] = d_mean[(i, j)] * (1.0 - mu * mu);
            let z = raw[(i, d + j)];
            if softplus(z) > STD_FLOOR {
                grad[(i, d + j)] = d_std[(i, j)] * sigmoid(z);
            }
        }
    }
    grad
}
