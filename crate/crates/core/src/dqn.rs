//! Deep Q-network over the enumerable OMA action space.
//!
//! Every action schedules exactly `M` distinct sensors, one per channel, at
//! full power, so no channel ever carries two packets.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::codec::RealAction;
use crate::env::{Env, EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{hidden_sizes, AdamConfig, AdamState, Mlp};
use crate::policy::{evaluate, Policy};
use crate::ppo::{episodes_for, CurvePoint};
use crate::rng::{derive_rng, Stream};

/// Refuse to enumerate more actions than this.
pub const MAX_OMA_ACTIONS: u128 = 100_000;

/// All ordered selections of `M` distinct sensors; entry `m` of an action
/// is the sensor transmitting on channel `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OmaActionSpace {
    pub sensors: usize,
    pub channels: usize,
    pub actions: Vec<Vec<usize>>,
}

impl OmaActionSpace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn to_real(&self, index: usize, p_max: f64) -> RealAction {
        let mut action = RealAction::idle(self.sensors);
        for (m, &n) in self.actions[index].iter().enumerate() {
            action.selection[n] = m + 1;
            action.power[n] = p_max;
        }
        action
    }
}

/// `N!/(N−M)!`, saturating.
pub fn oma_action_count(sensors: usize, channels: usize) -> u128 {
    ((sensors - channels + 1)..=sensors).fold(1u128, |acc, k| acc.saturating_mul(k as u128))
}

pub fn enumerate_oma_actions(sensors: usize, channels: usize) -> Result<OmaActionSpace> {
    if !(channels >= 1 && channels < sensors) {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= M < N, got N = {sensors}, M = {channels}"
        )));
    }
    let size = oma_action_count(sensors, channels);
    if size > MAX_OMA_ACTIONS {
        return Err(Error::ActionSpaceTooLarge {
            size,
            limit: MAX_OMA_ACTIONS,
        });
    }
    let mut actions = Vec::with_capacity(size as usize);
    let mut current = Vec::with_capacity(channels);
    let mut used = vec![false; sensors];
    extend(&mut actions, &mut current, &mut used, channels);
    Ok(OmaActionSpace {
        sensors,
        channels,
        actions,
    })
}

fn extend(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, used: &mut [bool], depth: usize) {
    if current.len() == depth {
        out.push(current.clone());
        return;
    }
    for n in 0..used.len() {
        if !used[n] {
            used[n] = true;
            current.push(n);
            extend(out, current, used, depth);
            current.pop();
            used[n] = false;
        }
    }
}

/// `ε(t) = max(floor, initial·decay^t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            initial: 1.0,
            decay: 0.999,
            floor: 0.01,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, step: u64) -> f64 {
        let e = self.initial * self.decay.powf(step as f64);
        e.max(self.floor)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn epsilon_greedy<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `count` draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<&Transition> {
        (0..count)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub discount: f64,
    pub lr: f64,
    pub batch: usize,
    /// Environment steps between gradient updates.
    pub train_every: usize,
    /// Updates between target-network refreshes.
    pub target_refresh: usize,
    /// `None` uses `1000·N·M`.
    pub buffer: Option<usize>,
    pub epsilon: EpsilonSchedule,
    /// Steps collected before the first update.
    pub learning_starts: usize,
    pub episode_len: usize,
    /// `None` uses the same count as PPO.
    pub episodes: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    /// `None` divides rewards by the steady-state cost floor.
    pub reward_scale: Option<f64>,
    /// Scaled rewards are floored at `−reward_clip`; `inf` disables the floor.
    pub reward_clip: Option<f64>,
    pub eval_interval: usize,
    pub eval_steps: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            discount: 0.95,
            lr: 1e-3,
            batch: 32,
            train_every: 4,
            target_refresh: 100,
            buffer: None,
            epsilon: EpsilonSchedule::default(),
            learning_starts: 1000,
            episode_len: 128,
            episodes: None,
            hidden: None,
            reward_scale: None,
            reward_clip: Some(100.0),
            eval_interval: 25,
            eval_steps: 2000,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) || !(self.lr >= 0.0) {
            return Err(Error::Config("discount must lie in (0, 1), lr non-negative".into()));
        }
        if self.batch == 0 || self.train_every == 0 || self.target_refresh == 0 || self.episode_len == 0 {
            return Err(Error::Config("batch, intervals and episode length must be positive".into()));
        }
        if self.buffer == Some(0) {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        let e = &self.epsilon;
        if !(0.0..=1.0).contains(&e.initial) || !(0.0..=1.0).contains(&e.floor) || !(e.decay > 0.0 && e.decay <= 1.0) {
            return Err(Error::Config("invalid epsilon schedule".into()));
        }
        if matches!(self.reward_scale, Some(s) if !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("reward scale must be positive".into()));
        }
        if matches!(self.reward_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("reward clip must be positive".into()));
        }
        if matches!(&self.hidden, Some(h) if h.is_empty() || h.contains(&0)) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn buffer_for(&self, sensors: usize, channels: usize) -> usize {
        self.buffer.unwrap_or(1000 * sensors * channels)
    }
}

/// Greedy deployment of a Q-network.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    pub q_net: Mlp,
    pub space: Arc<OmaActionSpace>,
}

impl DqnPolicy {
    pub fn greedy_index(&self, observation: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_net.predict_one(observation)?))
    }

    pub fn to_checkpoint(&self, p_max: f64) -> Checkpoint {
        Checkpoint::new("dqn")
            .with_meta("sensors", self.space.sensors)
            .with_meta("channels", self.space.channels)
            .with_meta("p_max", format!("{p_max:e}"))
            .with_net("q", &self.q_net)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let parse = |k: &str| -> Result<usize> {
            ckpt.meta(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("missing {k}")))
        };
        let space = enumerate_oma_actions(parse("sensors")?, parse("channels")?)?;
        let q_net = ckpt
            .net("q")
            .cloned()
            .ok_or_else(|| Error::Checkpoint("missing q".into()))?;
        if q_net.output_dim() != space.len() {
            return Err(Error::Checkpoint("Q-network width does not match the action space".into()));
        }
        Ok(DqnPolicy {
            q_net,
            space: Arc::new(space),
        })
    }
}

impl Policy for DqnPolicy {
    fn act(&mut self, config: &EnvConfig, state: &EnvState) -> Result<RealAction> {
        let i = self.greedy_index(&config.observe(state))?;
        Ok(self.space.to_real(i, config.p_max()))
    }
}

#[derive(Debug, Clone)]
pub struct DqnOutcome {
    pub best: DqnPolicy,
    pub last: DqnPolicy,
    /// Mean TD loss lands in `critic_loss`; the actor and entropy columns are zero.
    pub curve: Vec<CurvePoint>,
    pub validation: Vec<(usize, f64)>,
    pub updates: u64,
}

/// Affine scaling followed by an optional lower clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardShaping {
    pub scale: f64,
    pub clip: Option<f64>,
}

impl RewardShaping {
    pub fn apply(&self, reward: f64) -> f64 {
        let r = reward * self.scale;
        self.clip.map_or(r, |c| r.max(-c))
    }
}

/// Squared TD loss `(1/B)·Σ (y − Q(s,a))²` and its gradient, with
/// `y = r + λ·max_a' Q_target(s', a')`.
pub fn td_loss(
    q_net: &Mlp,
    target: &Mlp,
    batch: &[&Transition],
    discount: f64,
    shaping: RewardShaping,
) -> Result<(f64, crate::nn::MlpGrads)> {
    let dim = q_net.input_dim();
    let b = batch.len();
    let mut obs = Array2::zeros((b, dim));
    let mut next = Array2::zeros((b, dim));
    for (i, t) in batch.iter().enumerate() {
        obs.row_mut(i).assign(&Array1::from(t.obs.clone()));
        next.row_mut(i).assign(&Array1::from(t.next_obs.clone()));
    }
    let next_q = target.predict(next.view())?;
    let (q, cache) = q_net.forward(obs.view())?;
    let mut grad = Array2::zeros(q.dim());
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let best = next_q.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let y = shaping.apply(t.reward) + discount * best;
        let err = y - q[(i, t.action)];
        loss += err * err;
        grad[(i, t.action)] = -2.0 * err / b as f64;
    }
    Ok((loss / b as f64, q_net.backward(&cache, grad.view())?))
}

pub fn train_dqn(env_config: &Arc<EnvConfig>, config: &DqnConfig, seed: u64) -> Result<DqnOutcome> {
    train_dqn_with(env_config, config, seed, |_| {})
}

pub fn train_dqn_with<F: FnMut(&CurvePoint)>(
    env_config: &Arc<EnvConfig>,
    config: &DqnConfig,
    seed: u64,
    mut on_episode: F,
) -> Result<DqnOutcome> {
    config.validate()?;
    let (n, m) = (env_config.sensors(), env_config.channels());
    let space = Arc::new(enumerate_oma_actions(n, m)?);
    let mut init_rng = derive_rng(seed, Stream::AgentInit);
    let mut explore_rng = derive_rng(seed, Stream::Exploration);
    let mut batch_rng = derive_rng(seed, Stream::Minibatch);
    let val_seed = derive_rng(seed, Stream::Validation).next_u64();
    let mut sizes = vec![env_config.observation_dim()];
    sizes.extend(config.hidden.clone().unwrap_or_else(|| hidden_sizes(n, m).to_vec()));
    sizes.push(space.len());
    let mut q_net = Mlp::new(&sizes, &mut init_rng)?;
    let mut target = q_net.clone();
    let mut opt = AdamState::new(&q_net, AdamConfig::with_lr(config.lr));
    let shaping = RewardShaping {
        scale: config.reward_scale.unwrap_or(1.0 / env_config.cost_floor()),
        clip: config.reward_clip,
    };
    let mut buffer = ReplayBuffer::new(config.buffer_for(n, m));
    let mut env = Env::new(Arc::clone(env_config), seed ^ 0xA5A5_A5A5_5A5A_5A5A);
    let episodes = config.episodes.unwrap_or_else(|| episodes_for(n, m));
    let p_max = env_config.p_max();

    let mut curve = Vec::with_capacity(episodes);
    let mut validation = Vec::new();
    let mut best: Option<(f64, Mlp)> = None;
    let mut step: u64 = 0;
    let mut updates: u64 = 0;
    let mut obs = Vec::new();
    for episode in 1..=episodes {
        env.reset();
        env_config.observe_into(env.state(), &mut obs);
        let mut ret = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for _ in 0..config.episode_len {
            let q = q_net.predict_one(&obs)?;
            let a = epsilon_greedy(&q, config.epsilon.at(step), &mut explore_rng);
            let result = env.step(&space.to_real(a, p_max))?;
            let next_obs = env_config.observe(env.state());
            ret += result.reward;
            buffer.push(Transition {
                obs: std::mem::replace(&mut obs, next_obs.clone()),
                action: a,
                reward: result.reward,
                next_obs,
            });
            step += 1;
            if step as usize >= config.learning_starts
                && buffer.len() >= config.batch
                && step % config.train_every as u64 == 0
            {
                let batch = buffer.sample(config.batch, &mut batch_rng);
                let (loss, grads) = td_loss(&q_net, &target, &batch, config.discount, shaping)?;
                if !loss.is_finite() || !grads.is_finite() {
                    return Err(Error::Diverged {
                        episode,
                        reason: format!("TD loss {loss}"),
                    });
                }
                opt.step(&mut q_net, &grads);
                updates += 1;
                if updates % config.target_refresh as u64 == 0 {
                    target = q_net.clone();
                }
                loss_sum += loss;
                loss_count += 1;
            }
        }
        if !ret.is_finite() {
            return Err(Error::Diverged {
                episode,
                reason: format!("episode return {ret}"),
            });
        }
        let point = CurvePoint {
            episode,
            ret,
            actor_loss: 0.0,
            critic_loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 },
            entropy: 0.0,
        };
        on_episode(&point);
        curve.push(point);
        if config.eval_interval > 0 && (episode % config.eval_interval == 0 || episode == episodes) {
            let mut policy = DqnPolicy {
                q_net: q_net.clone(),
                space: Arc::clone(&space),
            };
            let mse = evaluate(&mut policy, env_config, config.eval_steps, val_seed)?;
            validation.push((episode, mse));
            if best.as_ref().is_none_or(|(b, _)| mse < *b) {
                best = Some((mse, q_net.clone()));
            }
        }
    }
    let last = DqnPolicy {
        q_net,
        space: Arc::clone(&space),
    };
    let best = best.map_or_else(|| last.clone(), |(_, q_net)| DqnPolicy { q_net, space });
    Ok(DqnOutcome {
        best,
        last,
        curve,
        validation,
        updates,
    })
}

/// Distinct greedy actions chosen over a rollout.
pub fn greedy_action_diversity(
    policy: &DqnPolicy,
    env_config: &Arc<EnvConfig>,
    steps: usize,
    seed: u64,
) -> Result<usize> {
    let mut env = Env::new(Arc::clone(env_config), seed);
    let mut seen = vec![false; policy.space.len()];
    for _ in 0..steps {
        let i = policy.greedy_index(&env.observe())?;
        seen[i] = true;
        env.step(&policy.space.to_real(i, env_config.p_max()))?;
    }
    Ok(seen.iter().filter(|&&s| s).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn action_counts() {
        assert_eq!(enumerate_oma_actions(6, 3).unwrap().len(), 120);
        assert_eq!(enumerate_oma_actions(2, 1).unwrap().len(), 2);
        assert_eq!(oma_action_count(10, 5), 30240);
        assert!(matches!(
            enumerate_oma_actions(20, 10),
            Err(Error::ActionSpaceTooLarge { .. })
        ));
        assert!(enumerate_oma_actions(3, 3).is_err());
    }

    #[test]
    fn actions_are_injective_and_distinct() {
        let space = enumerate_oma_actions(5, 3).unwrap();
        let mut seen = std::collections::HashSet::new();
        for a in &space.actions {
            let mut s = a.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 3);
            assert!(seen.insert(a.clone()));
        }
        let real = space.to_real(0, 0.5);
        assert_eq!(real.selection.iter().filter(|&&c| c > 0).count(), 3);
        assert!(real.power.iter().all(|&p| p == 0.0 || p == 0.5));
    }

    #[test]
    fn epsilon_values() {
        let e = EpsilonSchedule::default();
        assert_eq!(e.at(0), 1.0);
        assert!((e.at(1000) - 0.367_695_424_770_694_2).abs() < 1e-12);
        assert_eq!(e.at(100_000), 0.01);
        assert!((0..10_000).all(|t| e.at(t + 1) <= e.at(t)));
    }

    #[test]
    fn greedy_rules() {
        let mut rng = rng_from_seed(1);
        assert_eq!(epsilon_greedy(&[0.1, 0.7, 0.3], 0.0, &mut rng), 1);
        assert_eq!(epsilon_greedy(&[0.5, 0.5, 0.2], 0.0, &mut rng), 0);
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            counts[epsilon_greedy(&[0.0; 4], 1.0, &mut rng)] += 1;
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 0.25).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn replay_ring() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(Transition {
                obs: vec![i as f64],
                action: i,
                reward: 0.0,
                next_obs: vec![],
            });
        }
        assert_eq!(buf.len(), 3);
        let mut actions: Vec<usize> = buf.items.iter().map(|t| t.action).collect();
        actions.sort_unstable();
        assert_eq!(actions, vec![2, 3, 4]);
        assert_eq!(DqnConfig::default().buffer_for(6, 3), 18_000);
    }

    #[test]
    fn td_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(2);
        let q = Mlp::new(&[4, 8, 8, 5], &mut rng).unwrap();
        let target = Mlp::new(&[4, 8, 8, 5], &mut rng).unwrap();
        let items: Vec<Transition> = (0..6)
            .map(|i| Transition {
                obs: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: i % 5,
                reward: rng.random_range(-3.0..0.0),
                next_obs: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            })
            .collect();
        let batch: Vec<&Transition> = items.iter().collect();
        let shaping = RewardShaping { scale: 1.0, clip: None };
        let (_, g) = td_loss(&q, &target, &batch, 0.95, shaping).unwrap();
        let report = crate::nn::gradcheck::compare_gradients(
            &q,
            |n| td_loss(n, &target, &batch, 0.95, shaping).unwrap().0,
            &g,
            1e-5,
        );
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }
}
