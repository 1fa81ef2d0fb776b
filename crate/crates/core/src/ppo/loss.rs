//! Critic regression loss and the clipped actor objective, each with its
//! analytic gradient.

use ndarray::{Array2, ArrayView2};

use super::gaussian::{entropy, log_density};
use crate::error::Result;
use crate::nn::heads::actor_heads_backward;
use crate::nn::{actor_heads, Mlp, MlpGrads};

/// Where the entropy bonus takes its standard deviation from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropySource {
    /// The frozen behaviour policy; the bonus carries no gradient.
    Old,
    /// The policy being optimized.
    Current,
}

/// `(1/B)·Σ (R(t_i) − V(s(t_i)))²` and its gradient.
pub fn critic_loss(
    critic: &Mlp,
    obs: ArrayView2<f64>,
    targets: &[f64],
) -> Result<(f64, MlpGrads)> {
    let (values, cache) = critic.forward(obs)?;
    let b = targets.len() as f64;
    let mut d_out = Array2::zeros(values.dim());
    let mut loss = 0.0;
    for (i, &target) in targets.iter().enumerate() {
        let err = target - values[(i, 0)];
        loss += err * err;
        d_out[(i, 0)] = -2.0 * err / b;
    }
    Ok((loss / b, critic.backward(&cache, d_out.view())?))
}

/// Samples used for one actor update.
#[derive(Debug, Clone, Copy)]
pub struct ActorBatch<'a> {
    pub obs: ArrayView2<'a, f64>,
    pub actions: ArrayView2<'a, f64>,
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    /// `σ(s(t_i); θ_old)`, used when the entropy bonus is taken from the old policy.
    pub old_std: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorLoss {
    /// Objective to be maximized.
    pub objective: f64,
    /// Mean clipped surrogate alone.
    pub surrogate: f64,
    /// Mean entropy of the bonus term.
    pub entropy: f64,
    /// Fraction of samples whose ratio left `[1 − ω, 1 + ω]`.
    pub clip_fraction: f64,
}

/// `(1/B)·Σ [min{p·A, clip(p, 1−ω, 1+ω)·A} + w·H]` with
/// `p = exp(log π_θ − log π_θold)`, returned with its gradient in `θ`.
pub fn actor_loss(
    actor: &Mlp,
    batch: &ActorBatch<'_>,
    clip: f64,
    entropy_weight: f64,
    entropy_source: EntropySource,
) -> Result<(ActorLoss, MlpGrads)> {
    let (raw, cache) = actor.forward(batch.obs)?;
    let heads = actor_heads(raw.view());
    let (b, d) = heads.mean.dim();
    let bf = b as f64;
    let mut d_mean = Array2::zeros((b, d));
    let mut d_std = Array2::zeros((b, d));
    let mut surrogate = 0.0;
    let mut entropy_sum = 0.0;
    let mut clipped = 0usize;
    for i in 0..b {
        let mean = heads.mean.row(i);
        let std = heads.std.row(i);
        let action = batch.actions.row(i);
        let (mean, std, action) = (
            mean.as_slice().expect("contiguous"),
            std.as_slice().expect("contiguous"),
            action.to_vec(),
        );
        let logp = log_density(&action, mean, std);
        let ratio = (logp - batch.old_log_probs[i]).exp();
        let adv = batch.advantages[i];
        let clipped_ratio = ratio.clamp(1.0 - clip, 1.0 + clip);
        let unclipped = ratio * adv;
        let bounded = clipped_ratio * adv;
        if clipped_ratio != ratio {
            clipped += 1;
        }
        // The gradient flows only through the unclipped branch when it is the minimum.
        let d_logp = if unclipped <= bounded { adv * ratio / bf } else { 0.0 };
        surrogate += unclipped.min(bounded);
        for j in 0..d {
            let (a, mu, s) = (action[j], mean[j], std[j]);
            let z = (a - mu) / s;
            d_mean[(i, j)] = d_logp * z / s;
            d_std[(i, j)] = d_logp * (z * z - 1.0) / s;
        }
        let h = match entropy_source {
            EntropySource::Old => entropy(batch.old_std.row(i).as_slice().expect("contiguous")),
            EntropySource::Current => {
                for j in 0..d {
                    d_std[(i, j)] += entropy_weight / (std[j] * bf);
                }
                entropy(std)
            }
        };
        entropy_sum += h;
    }
    let d_raw = actor_heads_backward(raw.view(), &heads, d_mean.view(), d_std.view());
    let grads = actor.backward(&cache, d_raw.view())?;
    let surrogate = surrogate / bf;
    let mean_entropy = entropy_sum / bf;
    Ok((
        ActorLoss {
            objective: surrogate + entropy_weight * mean_entropy,
            surrogate,
            entropy: mean_entropy,
            clip_fraction: clipped as f64 / bf,
        },
        grads,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::compare_gradients;
    use crate::ppo::gaussian;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    struct Fixture {
        obs: Array2<f64>,
        actions: Array2<f64>,
        old_logp: Vec<f64>,
        adv: Vec<f64>,
        old_std: Array2<f64>,
    }

    fn fixture(old: &Mlp, b: usize, seed: u64) -> Fixture {
        let mut rng = rng_from_seed(seed);
        let obs = Array2::from_shape_simple_fn((b, old.input_dim()), || rng.random_range(-1.0..1.0));
        let heads = actor_heads(old.predict(obs.view()).unwrap().view());
        let d = heads.action_dim();
        let mut actions = Array2::zeros((b, d));
        let mut old_logp = Vec::new();
        for i in 0..b {
            let s = gaussian::sample(
                heads.mean.row(i).as_slice().unwrap(),
                heads.std.row(i).as_slice().unwrap(),
                &mut rng,
            );
            actions.row_mut(i).assign(&ndarray::Array1::from(s.action));
            old_logp.push(s.log_density);
        }
        let adv = (0..b).map(|_| rng.random_range(-2.0..2.0)).collect();
        Fixture {
            obs,
            actions,
            old_logp,
            adv,
            old_std: heads.std,
        }
    }

    fn batch(f: &Fixture) -> ActorBatch<'_> {
        ActorBatch {
            obs: f.obs.view(),
            actions: f.actions.view(),
            old_log_probs: &f.old_logp,
            advantages: &f.adv,
            old_std: f.old_std.view(),
        }
    }

    #[test]
    fn identical_policies_give_mean_advantage() {
        let mut rng = rng_from_seed(1);
        let actor = Mlp::new(&[4, 8, 6], &mut rng).unwrap();
        let f = fixture(&actor, 16, 2);
        let (loss, _) = actor_loss(&actor, &batch(&f), 0.2, 0.0, EntropySource::Old).unwrap();
        let mean_adv = f.adv.iter().sum::<f64>() / 16.0;
        assert!((loss.surrogate - mean_adv).abs() < 1e-12);
        assert_eq!(loss.clip_fraction, 0.0);
    }

    #[test]
    fn positive_advantage_capped() {
        // Single sample, ratio forced above 1 + ω by lowering the stored old density.
        let mut rng = rng_from_seed(3);
        let actor = Mlp::new(&[2, 4, 2], &mut rng).unwrap();
        let mut f = fixture(&actor, 1, 4);
        f.adv = vec![1.5];
        f.old_logp[0] -= 1.0;
        let (loss, grads) = actor_loss(&actor, &batch(&f), 0.2, 0.0, EntropySource::Old).unwrap();
        assert!((loss.surrogate - 1.2 * 1.5).abs() < 1e-12);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_advantage_zero_gradient_without_entropy() {
        let mut rng = rng_from_seed(5);
        let actor = Mlp::new(&[3, 8, 4], &mut rng).unwrap();
        let mut f = fixture(&actor, 8, 6);
        f.adv = vec![0.0; 8];
        let (loss, grads) = actor_loss(&actor, &batch(&f), 0.2, 0.0, EntropySource::Old).unwrap();
        assert_eq!(loss.objective, 0.0);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn old_entropy_term_is_constant_in_theta() {
        let mut rng = rng_from_seed(7);
        let old = Mlp::new(&[3, 8, 4], &mut rng).unwrap();
        let f = fixture(&old, 8, 8);
        let other = Mlp::new(&[3, 8, 4], &mut rng).unwrap();
        let bonus = |net: &Mlp| {
            let (with, _) = actor_loss(net, &batch(&f), 0.2, 0.5, EntropySource::Old).unwrap();
            let (without, _) = actor_loss(net, &batch(&f), 0.2, 0.0, EntropySource::Old).unwrap();
            with.objective - without.objective
        };
        assert!((bonus(&old) - bonus(&other)).abs() < 1e-12);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(9);
        let old = Mlp::new(&[5, 8, 8, 6], &mut rng).unwrap();
        let f = fixture(&old, 12, 10);
        // Moderate perturbation keeps ratios away from the clip edges.
        let mut actor = old.clone();
        let mut p = actor.flatten();
        p.iter_mut().for_each(|x| *x += rng.random_range(-0.02..0.02));
        actor.load_flat(&p).unwrap();
        for source in [EntropySource::Old, EntropySource::Current] {
            let (_, g) = actor_loss(&actor, &batch(&f), 10.0, 0.01, source).unwrap();
            let report = compare_gradients(
                &actor,
                |n| actor_loss(n, &batch(&f), 10.0, 0.01, source).unwrap().0.objective,
                &g,
                1e-5,
            );
            assert!(report.max_rel_error <= 1e-6, "{source:?}: {report:?}");
        }
    }

    #[test]
    fn critic_loss_cases() {
        let mut rng = rng_from_seed(11);
        let mut critic = Mlp::new(&[3, 8, 1], &mut rng).unwrap();
        critic.scale_output(0.0);
        let obs = Array2::from_elem((4, 3), 0.5);
        let (loss, _) = critic_loss(&critic, obs.view(), &[1.0; 4]).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
        let (loss, _) = critic_loss(&critic, obs.view(), &[0.0; 4]).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(12);
        let critic = Mlp::new(&[5, 16, 16, 1], &mut rng).unwrap();
        let obs = Array2::from_shape_simple_fn((10, 5), || rng.random_range(-1.0..1.0));
        let targets: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (_, g) = critic_loss(&critic, obs.view(), &targets).unwrap();
        let report = compare_gradients(
            &critic,
            |n| critic_loss(n, obs.view(), &targets).unwrap().0,
            &g,
            1e-5,
        );
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }
}
