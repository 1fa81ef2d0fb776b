//! Advantage and critic-target estimates over a finished rollout.

/// `A(t) = Σ_{k≥t} (λα)^{k−t} δ(k)` with `δ(k) = r(k) + λV(s(k+1)) − V(s(k))`,
/// computed backwards as `A(t) = δ(t) + λα·A(t+1)`.
///
/// `values[t] = V(s(t))` and `bootstrap = V(s(T))`.
pub fn compute_advantages(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    discount: f64,
    smoothing: f64,
) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len());
    let t_len = rewards.len();
    let decay = discount * smoothing;
    let mut adv = vec![0.0; t_len];
    let mut running = 0.0;
    for t in (0..t_len).rev() {
        let next = if t + 1 < t_len { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + discount * next - values[t];
        running = delta + decay * running;
        adv[t] = running;
    }
    adv
}

/// One-step bootstrap `R(t) = r(t) + λV(s(t+1))`.
pub fn compute_reward_to_go(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    discount: f64,
) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len());
    let t_len = rewards.len();
    (0..t_len)
        .map(|t| {
            let next = if t + 1 < t_len { values[t + 1] } else { bootstrap };
            rewards[t] + discount * next
        })
        .collect()
}

/// Zero-mean, unit-variance copy (left unchanged when the spread vanishes).
pub fn normalize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return xs.to_vec();
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12) {
        return xs.iter().map(|x| x - mean).collect();
    }
    xs.iter().map(|x| (x - mean) / (std + 1e-8)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let a = compute_advantages(&[2.0], &[0.5], 3.0, 0.9, 0.7);
        assert!((a[0] - (2.0 + 0.9 * 3.0 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn targets_with_zero_values() {
        let r = [1.0, -2.0, 0.5];
        assert_eq!(compute_reward_to_go(&r, &[0.0; 3], 0.0, 0.95), r.to_vec());
        let t = compute_reward_to_go(&[0.0; 3], &[4.0; 3], 4.0, 0.95);
        assert!(t.iter().all(|&x| (x - 0.95 * 4.0).abs() < 1e-15));
    }

    #[test]
    fn normalized_moments() {
        let z = normalize(&[1.0, 2.0, 3.0, 10.0]);
        let mean = z.iter().sum::<f64>() / 4.0;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-6);
        assert_eq!(normalize(&[0.0; 4]), vec![0.0; 4]);
    }
}
