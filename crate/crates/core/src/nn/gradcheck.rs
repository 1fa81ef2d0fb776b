//! Central finite-difference verification of analytic gradients.

use super::{Mlp, MlpGrads};
use crate::error::{Error, Result};

/// Denominator floor so near-zero gradients are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Flat parameter index of the worst disagreement.
    pub worst_param: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `loss` with step `h`
/// over every parameter of `net`.
pub fn compare_gradients(
    net: &Mlp,
    loss: impl Fn(&Mlp) -> f64,
    analytic: &MlpGrads,
    h: f64,
) -> GradCheck {
    let base = net.flatten();
    let grad = analytic.flatten();
    assert_eq!(base.len(), grad.len(), "gradient shape mismatch");
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_param: 0,
    };
    for i in 0..base.len() {
        params[i] = base[i] + h;
        probe.load_flat(&params).expect("same shape");
        let up = loss(&probe);
        params[i] = base[i] - h;
        probe.load_flat(&params).expect("same shape");
        let down = loss(&probe);
        params[i] = base[i];
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(grad[i], numeric);
        if err > worst.max_rel_error || err.is_nan() {
            worst = GradCheck {
                max_rel_error: err,
                worst_param: i,
            };
        }
    }
    worst
}

/// Runs [`compare_gradients`] with `h = 1e-5` and fails above `tolerance`.
///
/// `loss_and_grad` returns the scalar loss and its analytic gradient.
pub fn gradient_check(
    net: &Mlp,
    loss_and_grad: impl Fn(&Mlp) -> (f64, MlpGrads),
    tolerance: f64,
) -> Result<GradCheck> {
    let (_, analytic) = loss_and_grad(net);
    let report = compare_gradients(net, |n| loss_and_grad(n).0, &analytic, 1e-5);
    if report.max_rel_error <= tolerance {
        Ok(report)
    } else {
        Err(Error::InvalidArgument(format!(
            "gradient mismatch {:.3e} at parameter {}",
            report.max_rel_error, report.worst_param
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::Array2;
    use rand::Rng;

    fn squared_output_loss(x: &Array2<f64>) -> impl Fn(&Mlp) -> (f64, MlpGrads) + '_ {
        move |net: &Mlp| {
            let (y, cache) = net.forward(x.view()).unwrap();
            let loss = 0.5 * y.iter().map(|v| v * v).sum::<f64>();
            (loss, net.backward(&cache, y.view()).unwrap())
        }
    }

    #[test]
    fn deep_net_passes() {
        let mut rng = rng_from_seed(10);
        let net = Mlp::new(&[5, 16, 16, 16, 3], &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((4, 5), || rng.random_range(-1.0..1.0));
        let report = gradient_check(&net, squared_output_loss(&x), 1e-6).unwrap();
        assert!(report.max_rel_error <= 1e-6);
    }

    #[test]
    fn corrupted_gradient_detected() {
        let mut rng = rng_from_seed(11);
        let net = Mlp::new(&[3, 8, 2], &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((3, 3), || rng.random_range(-1.0..1.0));
        let loss = squared_output_loss(&x);
        let corrupt = |n: &Mlp| {
            let (l, mut g) = loss(n);
            g.layers[0].weight[(2, 1)] += 0.5;
            g.layers[1].bias[0] *= 1.5;
            (l, g)
        };
        let err = gradient_check(&net, corrupt, 1e-6).unwrap_err();
        assert!(err.to_string().contains("parameter"));
        let (_, g) = corrupt(&net);
        let report = compare_gradients(&net, |n| loss(n).0, &g, 1e-5);
        assert!(report.max_rel_error > 1e-2);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut rng = rng_from_seed(12);
        let net = Mlp::new(&[3, 4, 1], &mut rng).unwrap();
        let zero = MlpGrads::zeros_like(&net);
        let report = gradient_check(&net, |_| (3.0, zero.clone()), 1e-12).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }
}
