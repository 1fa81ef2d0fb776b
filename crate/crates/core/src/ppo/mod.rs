//! Proximal policy optimization over virtual actions.
//!
//! The actor emits a diagonal Gaussian over the codec's virtual action
//! space; the critic estimates state values. Each episode is one rollout of
//! `T` steps from a fresh reset, followed by `K` epochs of minibatch updates.

pub mod gaussian;
pub mod loss;
pub mod returns;

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{ActionCodec, CodecKind, RealAction};
use crate::env::{Env, EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{actor_heads, hidden_sizes, AdamConfig, AdamState, Mlp};
use crate::policy::{evaluate, Policy};
use crate::dqn::RewardShaping;
use crate::rng::{derive_rng, SimRng, Stream};

pub use loss::{actor_loss, critic_loss, ActorBatch, ActorLoss, EntropySource};
pub use returns::{compute_advantages, compute_reward_to_go, normalize};

/// Regression target for the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticTarget {
    /// `r(t) + λV(s(t+1))`.
    OneStep,
    /// `A(t) + V(s(t))` with the smoothed advantage.
    GaeReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyFrom {
    Old,
    Current,
}

impl From<EntropyFrom> for EntropySource {
    fn from(e: EntropyFrom) -> Self {
        match e {
            EntropyFrom::Old => EntropySource::Old,
            EntropyFrom::Current => EntropySource::Current,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// `λ`.
    pub discount: f64,
    /// `α`.
    pub smoothing: f64,
    /// `ω`.
    pub clip: f64,
    /// `w`.
    pub entropy_weight: f64,
    /// `B`.
    pub minibatch: usize,
    /// `T`, also the episode length.
    pub rollout_len: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub epochs: usize,
    /// `None` uses [`episodes_for`].
    pub episodes: Option<usize>,
    /// `None` uses [`hidden_sizes`].
    pub hidden: Option<Vec<usize>>,
    pub normalize_advantages: bool,
    pub entropy_from: EntropyFrom,
    pub critic_target: CriticTarget,
    /// Multiplier applied to rewards before learning; `None` divides by the
    /// steady-state cost floor `Σ_n Tr(P̄_n)`.
    pub reward_scale: Option<f64>,
    /// Optional floor on scaled rewards at `−reward_clip`; off by default.
    pub reward_clip: Option<f64>,
    /// Initial scaling of the actor's output layer.
    pub actor_output_gain: f64,
    /// Episodes between validation runs of the deterministic policy (0 disables).
    pub eval_interval: usize,
    pub eval_steps: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            discount: 0.95,
            smoothing: 0.95,
            clip: 0.2,
            entropy_weight: 0.01,
            minibatch: 128,
            rollout_len: 128,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            epochs: 4,
            episodes: None,
            hidden: None,
            normalize_advantages: true,
            entropy_from: EntropyFrom::Old,
            critic_target: CriticTarget::OneStep,
            reward_scale: None,
            reward_clip: None,
            actor_output_gain: 0.1,
            eval_interval: 25,
            eval_steps: 2000,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.discount) || !unit(self.smoothing) {
            return Err(Error::Config("discount and smoothing must lie in (0, 1)".into()));
        }
        if !(self.clip > 0.0) || !(self.entropy_weight >= 0.0) {
            return Err(Error::Config("clip must be positive, entropy weight non-negative".into()));
        }
        if self.rollout_len == 0 || self.minibatch == 0 || self.minibatch > self.rollout_len {
            return Err(Error::Config("need 1 <= minibatch <= rollout length".into()));
        }
        if !(self.actor_lr >= 0.0) || !(self.critic_lr >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
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

    pub fn episodes_for(&self, sensors: usize, channels: usize) -> usize {
        self.episodes.unwrap_or_else(|| episodes_for(sensors, channels))
    }

    fn hidden_for(&self, sensors: usize, channels: usize) -> Vec<usize> {
        self.hidden
            .clone()
            .unwrap_or_else(|| hidden_sizes(sensors, channels).to_vec())
    }
}

/// `⌈250·(N/M)·√(NM)⌉`.
pub fn episodes_for(sensors: usize, channels: usize) -> usize {
    let (n, m) = (sensors as f64, channels as f64);
    (250.0 * (n / m) * (n * m).sqrt()).ceil() as usize
}

/// Actor, critic and their optimizers.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub codec: ActionCodec,
    pub shaping: RewardShaping,
    actor_opt: AdamState,
    critic_opt: AdamState,
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(
        env: &EnvConfig,
        kind: CodecKind,
        config: &PpoConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let codec = ActionCodec::new(kind, env.sensors(), env.channels(), env.p_max());
        let hidden = config.hidden_for(env.sensors(), env.channels());
        let mut sizes = vec![env.observation_dim()];
        sizes.extend(&hidden);
        sizes.push(2 * codec.dim());
        let mut actor = Mlp::new(&sizes, rng)?;
        actor.scale_output(config.actor_output_gain);
        *sizes.last_mut().expect("non-empty") = 1;
        let critic = Mlp::new(&sizes, rng)?;
        let shaping = RewardShaping {
            scale: config.reward_scale.unwrap_or(1.0 / env.cost_floor()),
            clip: config.reward_clip,
        };
        Ok(Self::from_parts(actor, critic, codec, shaping, config))
    }

    fn from_parts(
        actor: Mlp,
        critic: Mlp,
        codec: ActionCodec,
        shaping: RewardShaping,
        config: &PpoConfig,
    ) -> Self {
        PpoAgent {
            actor_opt: AdamState::new(&actor, AdamConfig::with_lr(config.actor_lr)),
            critic_opt: AdamState::new(&critic, AdamConfig::with_lr(config.critic_lr)),
            actor,
            critic,
            codec,
            shaping,
        }
    }

    /// Deterministic policy wrapping a copy of the actor.
    pub fn policy(&self) -> PpoPolicy {
        PpoPolicy {
            actor: self.actor.clone(),
            codec: self.codec,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        codec_meta(Checkpoint::new("ppo"), &self.codec)
            .with_meta("reward_scale", format!("{:e}", self.shaping.scale))
            .with_meta(
                "reward_clip",
                self.shaping.clip.map_or("none".into(), |c| format!("{c:e}")),
            )
            .with_net("actor", &self.actor)
            .with_net("critic", &self.critic)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, config: &PpoConfig) -> Result<Self> {
        let codec = codec_from_meta(ckpt)?;
        let actor = ckpt.net("actor").cloned().ok_or_else(|| missing("actor"))?;
        let critic = ckpt.net("critic").cloned().ok_or_else(|| missing("critic"))?;
        let shaping = RewardShaping {
            scale: parse_meta(ckpt, "reward_scale")?,
            clip: match ckpt.meta("reward_clip") {
                None | Some("none") => None,
                Some(_) => Some(parse_meta(ckpt, "reward_clip")?),
            },
        };
        if actor.output_dim() != 2 * codec.dim() || critic.output_dim() != 1 {
            return Err(Error::Checkpoint("network shapes do not match the codec".into()));
        }
        Ok(Self::from_parts(actor, critic, codec, shaping, config))
    }
}

fn missing(what: &str) -> Error {
    Error::Checkpoint(format!("missing {what}"))
}

fn parse_meta<T: std::str::FromStr>(ckpt: &Checkpoint, key: &str) -> Result<T> {
    ckpt.meta(key)
        .ok_or_else(|| missing(key))?
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad value for {key}")))
}

pub(crate) fn codec_meta(ckpt: Checkpoint, codec: &ActionCodec) -> Checkpoint {
    let kind = match codec.kind {
        CodecKind::Binary => "binary",
        CodecKind::Naive => "naive",
    };
    ckpt.with_meta("codec", kind)
        .with_meta("sensors", codec.sensors)
        .with_meta("channels", codec.channels)
        .with_meta("p_max", format!("{:e}", codec.p_max))
}

fn codec_from_meta(ckpt: &Checkpoint) -> Result<ActionCodec> {
    let kind = match ckpt.meta("codec") {
        Some("binary") => CodecKind::Binary,
        Some("naive") => CodecKind::Naive,
        _ => return Err(missing("codec")),
    };
    Ok(ActionCodec::new(
        kind,
        parse_meta(ckpt, "sensors")?,
        parse_meta(ckpt, "channels")?,
        parse_meta(ckpt, "p_max")?,
    ))
}

/// Maximum-likelihood action `μ(s; θ)`.
pub fn deploy_action(actor: &Mlp, observation: &[f64]) -> Result<Vec<f64>> {
    let raw = actor.predict_one(observation)?;
    let d = raw.len() / 2;
    Ok(raw[..d].iter().map(|z| z.tanh()).collect())
}

/// Deployed actor: observation to mean virtual action to real action.
#[derive(Debug, Clone)]
pub struct PpoPolicy {
    pub actor: Mlp,
    pub codec: ActionCodec,
}

impl Policy for PpoPolicy {
    fn act(&mut self, config: &EnvConfig, state: &EnvState) -> Result<RealAction> {
        let v = deploy_action(&self.actor, &config.observe(state))?;
        self.codec.decode(&v)
    }
}

/// One episode of experience under a frozen actor.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub old_std: Array2<f64>,
    /// Environment rewards, unscaled.
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// `V(s(T))`.
    pub bootstrap: f64,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Undiscounted sum of environment rewards.
    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Resets `env` and runs `steps` sampled actions.
pub fn collect_rollout<R: Rng + ?Sized>(
    env: &mut Env,
    agent: &PpoAgent,
    steps: usize,
    rng: &mut R,
) -> Result<Rollout> {
    env.reset();
    let obs_dim = env.config().observation_dim();
    let d = agent.codec.dim();
    let mut observations = Array2::zeros((steps + 1, obs_dim));
    let mut actions = Array2::zeros((steps, d));
    let mut old_std = Array2::zeros((steps, d));
    let mut log_probs = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);
    let mut obs = env.observe();
    for t in 0..steps {
        observations.row_mut(t).assign(&Array1::from(obs.clone()));
        let raw = agent.actor.predict_one(&obs)?;
        let heads = actor_heads(Array2::from_shape_vec((1, 2 * d), raw).expect("shape").view());
        let mean = heads.mean.row(0);
        let std = heads.std.row(0);
        let sample = gaussian::sample(
            mean.as_slice().expect("contiguous"),
            std.as_slice().expect("contiguous"),
            rng,
        );
        let action = agent.codec.decode(&sample.action)?;
        let step = env.step(&action)?;
        actions.row_mut(t).assign(&Array1::from(sample.action));
        old_std.row_mut(t).assign(&std);
        log_probs.push(sample.log_density);
        rewards.push(step.reward);
        env.config().observe_into(env.state(), &mut obs);
    }
    observations.row_mut(steps).assign(&Array1::from(obs));
    let v = agent.critic.predict(observations.view())?;
    let mut values: Vec<f64> = v.column(0).to_vec();
    let bootstrap = values.pop().expect("steps + 1 rows");
    observations.remove_index(Axis(0), steps);
    Ok(Rollout {
        observations,
        actions,
        log_probs,
        old_std,
        rewards,
        values,
        bootstrap,
    })
}

/// Mean statistics over the epochs of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub actor_objective: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Advantages and critic targets from the pre-update critic.
pub fn advantages_and_targets(
    rollout: &Rollout,
    config: &PpoConfig,
    shaping: RewardShaping,
) -> (Vec<f64>, Vec<f64>) {
    let rewards: Vec<f64> = rollout.rewards.iter().map(|&r| shaping.apply(r)).collect();
    let adv = compute_advantages(
        &rewards,
        &rollout.values,
        rollout.bootstrap,
        config.discount,
        config.smoothing,
    );
    let targets = match config.critic_target {
        CriticTarget::OneStep => {
            compute_reward_to_go(&rewards, &rollout.values, rollout.bootstrap, config.discount)
        }
        CriticTarget::GaeReturn => adv.iter().zip(&rollout.values).map(|(a, v)| a + v).collect(),
    };
    let adv = if config.normalize_advantages { normalize(&adv) } else { adv };
    (adv, targets)
}

/// `K` epochs of one critic descent step and one actor ascent step, each on
/// a fresh random `B`-subset of the rollout.
pub fn update<R: Rng + ?Sized>(
    agent: &mut PpoAgent,
    rollout: &Rollout,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    let (adv, targets) = advantages_and_targets(rollout, config, agent.shaping);
    let b = config.minibatch.min(rollout.len());
    let mut stats = UpdateStats::default();
    for _ in 0..config.epochs {
        let idx = index::sample(rng, rollout.len(), b).into_vec();
        let obs = rollout.observations.select(Axis(0), &idx);
        let batch_targets: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
        let (c_loss, c_grads) = critic_loss(&agent.critic, obs.view(), &batch_targets)?;
        if !c_loss.is_finite() || !c_grads.is_finite() {
            return Err(Error::Diverged {
                episode: 0,
                reason: format!("critic loss {c_loss}"),
            });
        }
        agent.critic_opt.step(&mut agent.critic, &c_grads);

        let actions = rollout.actions.select(Axis(0), &idx);
        let old_std = rollout.old_std.select(Axis(0), &idx);
        let old_lp: Vec<f64> = idx.iter().map(|&i| rollout.log_probs[i]).collect();
        let batch_adv: Vec<f64> = idx.iter().map(|&i| adv[i]).collect();
        let batch = ActorBatch {
            obs: obs.view(),
            actions: actions.view(),
            old_log_probs: &old_lp,
            advantages: &batch_adv,
            old_std: old_std.view(),
        };
        let (a_loss, mut a_grads) = actor_loss(
            &agent.actor,
            &batch,
            config.clip,
            config.entropy_weight,
            config.entropy_from.into(),
        )?;
        if !a_loss.objective.is_finite() || !a_grads.is_finite() {
            return Err(Error::Diverged {
                episode: 0,
                reason: format!("actor objective {}", a_loss.objective),
            });
        }
        a_grads.scale(-1.0);
        agent.actor_opt.step(&mut agent.actor, &a_grads);

        stats.actor_objective += a_loss.objective;
        stats.critic_loss += c_loss;
        stats.entropy += a_loss.entropy;
        stats.clip_fraction += a_loss.clip_fraction;
    }
    let k = config.epochs.max(1) as f64;
    stats.actor_objective /= k;
    stats.critic_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    Ok(stats)
}

/// One learning-curve row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub ret: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Agent with the lowest validation cost seen (the final agent when
    /// validation is disabled).
    pub best: PpoAgent,
    pub last: PpoAgent,
    pub curve: Vec<CurvePoint>,
    /// `(episode, validation MSE)` pairs.
    pub validation: Vec<(usize, f64)>,
}

/// Seeds for the independent streams of one training run.
fn streams(seed: u64) -> (SimRng, SimRng, SimRng, u64, u64) {
    let env_seed = seed ^ 0xA5A5_A5A5_5A5A_5A5A;
    let val_seed = {
        use rand::RngCore;
        derive_rng(seed, Stream::Validation).next_u64()
    };
    (
        derive_rng(seed, Stream::AgentInit),
        derive_rng(seed, Stream::Exploration),
        derive_rng(seed, Stream::Minibatch),
        env_seed,
        val_seed,
    )
}

/// Full training loop; deterministic for a given seed.
pub fn train(
    env_config: &Arc<EnvConfig>,
    kind: CodecKind,
    config: &PpoConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    train_with(env_config, kind, config, seed, |_| {})
}

/// [`train`] with a per-episode callback.
pub fn train_with<F: FnMut(&CurvePoint)>(
    env_config: &Arc<EnvConfig>,
    kind: CodecKind,
    config: &PpoConfig,
    seed: u64,
    mut on_episode: F,
) -> Result<TrainOutcome> {
    let (mut init_rng, mut explore_rng, mut batch_rng, env_seed, val_seed) = streams(seed);
    let mut agent = PpoAgent::new(env_config, kind, config, &mut init_rng)?;
    let mut env = Env::new(Arc::clone(env_config), env_seed);
    let episodes = config.episodes_for(env_config.sensors(), env_config.channels());
    let mut curve = Vec::with_capacity(episodes);
    let mut validation = Vec::new();
    let mut best: Option<(f64, PpoAgent)> = None;
    let mut validate = |agent: &PpoAgent, episode: usize, best: &mut Option<(f64, PpoAgent)>| {
        let mse = evaluate(&mut agent.policy(), env_config, config.eval_steps, val_seed)?;
        validation.push((episode, mse));
        if best.as_ref().is_none_or(|(b, _)| mse < *b) {
            *best = Some((mse, agent.clone()));
        }
        Ok::<_, Error>(())
    };
    for episode in 1..=episodes {
        let rollout = collect_rollout(&mut env, &agent, config.rollout_len, &mut explore_rng)?;
        let ret = rollout.episode_return();
        if !ret.is_finite() {
            return Err(Error::Diverged {
                episode,
                reason: format!("episode return {ret}"),
            });
        }
        let stats = update(&mut agent, &rollout, config, &mut batch_rng).map_err(|e| match e {
            Error::Diverged { reason, .. } => Error::Diverged {
                episode,
                reason,
            },
            other => other,
        })?;
        let point = CurvePoint {
            episode,
            ret,
            actor_loss: stats.actor_objective,
            critic_loss: stats.critic_loss,
            entropy: stats.entropy,
        };
        on_episode(&point);
        curve.push(point);
        let due = config.eval_interval > 0
            && (episode % config.eval_interval == 0 || episode == episodes);
        if due {
            validate(&agent, episode, &mut best)?;
        }
    }
    let best = best.map_or_else(|| agent.clone(), |(_, a)| a);
    Ok(TrainOutcome {
        best,
        last: agent,
        curve,
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{default_levels, generate_random_channel_model, DEFAULT_PERSISTENCE};
    use crate::env::DEFAULT_TAU_CAP;
    use crate::link::CodeParams;
    use crate::plant::{generate_random_plant, RadiusRange};
    use crate::rng::rng_from_seed;

    fn small_env(n: usize, m: usize, seed: u64) -> Arc<EnvConfig> {
        let mut rng = rng_from_seed(seed);
        let plants = (0..n)
            .map(|_| generate_random_plant(2, 2, RadiusRange::default(), &mut rng).unwrap())
            .collect();
        let ch = generate_random_channel_model(n, m, default_levels(), DEFAULT_PERSISTENCE, &mut rng)
            .unwrap();
        let p_max = crate::link::dbm_to_watts(23.0);
        Arc::new(EnvConfig::new(plants, ch, CodeParams::default(), p_max, DEFAULT_TAU_CAP).unwrap())
    }

    fn tiny_config() -> PpoConfig {
        PpoConfig {
            hidden: Some(vec![16, 16]),
            rollout_len: 16,
            minibatch: 8,
            episodes: Some(6),
            eval_interval: 3,
            eval_steps: 50,
            ..PpoConfig::default()
        }
    }

    #[test]
    fn episode_counts() {
        assert_eq!(episodes_for(6, 3), 2122);
        assert_eq!(episodes_for(2, 1), 708);
    }

    #[test]
    fn rollout_shapes_and_log_densities() {
        let env_cfg = small_env(3, 2, 1);
        let cfg = PpoConfig::default();
        let agent = PpoAgent::new(&env_cfg, CodecKind::Binary, &cfg, &mut rng_from_seed(2)).unwrap();
        let mut env = Env::new(Arc::clone(&env_cfg), 3);
        let r = collect_rollout(&mut env, &agent, cfg.rollout_len, &mut rng_from_seed(4)).unwrap();
        assert_eq!(r.len(), 128);
        assert_eq!(r.observations.dim(), (128, env_cfg.observation_dim()));
        assert_eq!(r.actions.ncols(), agent.codec.dim());
        for t in 0..r.len() {
            let raw = agent.actor.predict_one(r.observations.row(t).as_slice().unwrap()).unwrap();
            let heads = actor_heads(Array2::from_shape_vec((1, raw.len()), raw).unwrap().view());
            let lp = gaussian::log_density(
                r.actions.row(t).as_slice().unwrap(),
                heads.mean.row(0).as_slice().unwrap(),
                heads.std.row(0).as_slice().unwrap(),
            );
            assert!((lp - r.log_probs[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_learning_rates_freeze_parameters() {
        let env_cfg = small_env(3, 2, 5);
        let cfg = PpoConfig {
            actor_lr: 0.0,
            critic_lr: 0.0,
            ..tiny_config()
        };
        let mut agent = PpoAgent::new(&env_cfg, CodecKind::Binary, &cfg, &mut rng_from_seed(6)).unwrap();
        let (a0, c0) = (agent.actor.flatten(), agent.critic.flatten());
        let mut env = Env::new(Arc::clone(&env_cfg), 7);
        let r = collect_rollout(&mut env, &agent, cfg.rollout_len, &mut rng_from_seed(8)).unwrap();
        update(&mut agent, &r, &cfg, &mut rng_from_seed(9)).unwrap();
        assert_eq!(agent.actor.flatten(), a0);
        assert_eq!(agent.critic.flatten(), c0);
    }

    #[test]
    fn zero_advantage_leaves_actor_unchanged() {
        let env_cfg = small_env(3, 2, 10);
        let cfg = PpoConfig {
            entropy_weight: 0.0,
            normalize_advantages: false,
            ..tiny_config()
        };
        let mut agent = PpoAgent::new(&env_cfg, CodecKind::Binary, &cfg, &mut rng_from_seed(11)).unwrap();
        let mut env = Env::new(Arc::clone(&env_cfg), 12);
        let mut r = collect_rollout(&mut env, &agent, cfg.rollout_len, &mut rng_from_seed(13)).unwrap();
        // Zero rewards and values give δ ≡ 0.
        r.bootstrap = 0.0;
        r.values = vec![0.0; r.len()];
        r.rewards = vec![0.0; r.len()];
        let a0 = agent.actor.flatten();
        update(&mut agent, &r, &cfg, &mut rng_from_seed(14)).unwrap();
        assert_eq!(agent.actor.flatten(), a0);
    }

    #[test]
    fn minibatch_covers_rollout_when_b_equals_t() {
        let idx = index::sample(&mut rng_from_seed(15), 128, 128).into_vec();
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..128).collect::<Vec<_>>());
    }

    #[test]
    fn deployment_is_deterministic_and_bounded() {
        let env_cfg = small_env(4, 2, 16);
        let agent =
            PpoAgent::new(&env_cfg, CodecKind::Binary, &tiny_config(), &mut rng_from_seed(17)).unwrap();
        let mut actor = agent.actor.clone();
        actor.scale_output(1e3);
        let obs = vec![0.3; env_cfg.observation_dim()];
        let a = deploy_action(&actor, &obs).unwrap();
        assert_eq!(a, deploy_action(&actor, &obs).unwrap());
        assert_eq!(a.len(), agent.codec.dim());
        assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn training_is_reproducible() {
        let env_cfg = small_env(3, 2, 18);
        let cfg = tiny_config();
        let a = train(&env_cfg, CodecKind::Binary, &cfg, 19).unwrap();
        let b = train(&env_cfg, CodecKind::Binary, &cfg, 19).unwrap();
        assert_eq!(a.curve.len(), 6);
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.validation.len(), 2);
        assert_eq!(a.best.actor.flatten(), b.best.actor.flatten());
    }

    #[test]
    fn checkpoint_round_trip() {
        let env_cfg = small_env(3, 1, 20);
        let cfg = tiny_config();
        let agent = PpoAgent::new(&env_cfg, CodecKind::Naive, &cfg, &mut rng_from_seed(21)).unwrap();
        let ckpt = Checkpoint::from_bytes(&agent.to_checkpoint().to_bytes()).unwrap();
        let back = PpoAgent::from_checkpoint(&ckpt, &cfg).unwrap();
        assert_eq!(back.codec, agent.codec);
        assert_eq!(back.shaping, agent.shaping);
        assert_eq!(back.actor.flatten(), agent.actor.flatten());
    }

    #[test]
    fn invalid_configs_rejected() {
        for bad in [
            PpoConfig { discount: 1.0, ..PpoConfig::default() },
            PpoConfig { minibatch: 200, ..PpoConfig::default() },
            PpoConfig { clip: 0.0, ..PpoConfig::default() },
            PpoConfig { hidden: Some(vec![]), ..PpoConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
