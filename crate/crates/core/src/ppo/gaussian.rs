//! Diagonal Gaussian densities.

use rand::Rng;
use rand_distr::StandardNormal;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-density of `x` under `N(mean, std²)`.
pub fn scalar_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - HALF_LN_2PI
}

/// Sum of per-coordinate log-densities.
pub fn log_density(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((&x, &m), &s)| scalar_log_density(x, m, s))
        .sum()
}

/// `Σ_d (½ ln(2πe) + ln σ_d)`.
pub fn entropy(std: &[f64]) -> f64 {
    std.iter().map(|s| 0.5 + HALF_LN_2PI + s.ln()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicySample {
    pub action: Vec<f64>,
    pub log_density: f64,
    pub entropy: f64,
}

pub fn sample<R: Rng + ?Sized>(mean: &[f64], std: &[f64], rng: &mut R) -> GaussianPolicySample {
    let action: Vec<f64> = mean
        .iter()
        .zip(std)
        .map(|(&m, &s)| m + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    GaussianPolicySample {
        log_density: log_density(&action, mean, std),
        entropy: entropy(std),
        action,
    }
}
