//! Fast oracle checks runnable from the command line.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;

use crate::codec::{decode_power, decode_selection, encode_selection};
use crate::link::{packet_error_prob, CodeParams};
use crate::nn::gradcheck::compare_gradients;
use crate::nn::Mlp;
use crate::plant::{
    estimation_cost, solve_steady_state_covariance, PlantModel, RICCATI_MAX_ITER, RICCATI_TOL,
};
use crate::ppo::{compute_advantages, critic_loss};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn error_anchor() -> Check {
    let code = CodeParams {
        bits_per_symbol: 2.0,
        blocklength: 200.0,
        noise_power: 1.0,
    };
    let at_capacity = packet_error_prob(3.0, &code);
    let mut prev = 1.0;
    let mut monotone = true;
    for i in 0..1000 {
        let e = packet_error_prob(i as f64 * 0.02, &code);
        monotone &= e <= prev;
        prev = e;
    }
    check(
        "packet error anchor",
        (at_capacity - 0.5).abs() <= 1e-9 && monotone,
        format!("eps(3) = {at_capacity}, monotone = {monotone}"),
    )
}

fn riccati_scalar() -> Check {
    let m = |x: f64| DMatrix::from_element(1, 1, x);
    let result = PlantModel::new(m(1.2), m(1.0), m(1.0), m(1.0))
        .and_then(|p| Ok((solve_steady_state_covariance(&p, RICCATI_TOL, RICCATI_MAX_ITER)?, p)));
    match result {
        Ok((ss, plant)) => {
            let p_bar = ss.p_bar[(0, 0)];
            let mut ok = (p_bar - 0.661_273_433_374_964_6).abs() < 1e-9;
            for tau in 1..20 {
                let lhs = estimation_cost(&plant, &ss, tau + 1).unwrap_or(f64::NAN);
                let rhs = 1.44 * estimation_cost(&plant, &ss, tau).unwrap_or(f64::NAN) + 1.0;
                ok &= (lhs - rhs).abs() <= 1e-12 * rhs.max(1.0);
            }
            check("steady-state covariance", ok, format!("P_bar = {p_bar}"))
        }
        Err(e) => check("steady-state covariance", false, e.to_string()),
    }
}

fn codec_round_trip() -> Check {
    let mut ok = true;
    for channels in 1..=64 {
        for choice in 0..=channels {
            ok &= encode_selection(choice, channels)
                .map(|bits| decode_selection(&bits, channels) == choice)
                .unwrap_or(false);
        }
    }
    ok &= decode_power(-1.0, 0.2) == 0.0 && decode_power(1.0, 0.2) == 0.2;
    check("codec round trip", ok, "M = 1..64".into())
}

fn critic_gradient() -> Check {
    let mut rng = rng_from_seed(7);
    let result = Mlp::new(&[4, 16, 16, 1], &mut rng).and_then(|net| {
        let obs = Array2::from_shape_simple_fn((8, 4), || rng.random_range(-1.0..1.0));
        let targets: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, grads) = critic_loss(&net, obs.view(), &targets)?;
        Ok(compare_gradients(
            &net,
            |n| critic_loss(n, obs.view(), &targets).map(|r| r.0).unwrap_or(f64::NAN),
            &grads,
            1e-5,
        ))
    });
    match result {
        Ok(r) => check(
            "critic gradient",
            r.max_rel_error <= 1e-6,
            format!("max relative error {:e}", r.max_rel_error),
        ),
        Err(e) => check("critic gradient", false, e.to_string()),
    }
}

fn advantage_recursion() -> Check {
    let mut rng = rng_from_seed(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.random_range(1..=10);
        let r: Vec<f64> = (0..t).map(|_| rng.random_range(-5.0..0.0)).collect();
        let v: Vec<f64> = (0..t).map(|_| rng.random_range(-5.0..5.0)).collect();
        let boot = rng.random_range(-5.0..5.0);
        let (lambda, alpha) = (0.95, 0.9);
        let fast = compute_advantages(&r, &v, boot, lambda, alpha);
        for s in 0..t {
            let mut brute = 0.0;
            for k in s..t {
                let next = if k + 1 < t { v[k + 1] } else { boot };
                let delta = r[k] + lambda * next - v[k];
                brute += (lambda * alpha as f64).powi((k - s) as i32) * delta;
            }
            worst = worst.max((brute - fast[s]).abs());
        }
    }
    check("advantage recursion", worst <= 1e-12, format!("max deviation {worst:e}"))
}

/// Runs the built-in checks in a fixed order.
pub fn selftest() -> Vec<Check> {
    vec![
        error_anchor(),
        riccati_scalar(),
        codec_round_trip(),
        critic_gradient(),
        advantage_recursion(),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
