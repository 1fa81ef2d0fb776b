//! The resource-allocation MDP.
//!
//! State is the channel gain matrix together with every sensor's AoI. An
//! action assigns each sensor a channel (or idle) and a transmit power; the
//! receiver runs SIC, AoIs reset on delivery, channels advance, and the
//! reward is the negative sum of the post-transition estimation costs.

use std::sync::Arc;

use rand::Rng;

use crate::channel::{step_channel, ChannelModel, ChannelState};
use crate::codec::RealAction;
use crate::error::{Error, Result};
use crate::link::{decode_failure_probs, sample_receptions, CodeParams};
use crate::plant::{
    cost_table, solve_steady_state_covariance, PlantModel, SteadyStateCov, RICCATI_MAX_ITER,
    RICCATI_TOL,
};
use crate::rng::{derive_rng, SimRng, Stream};

pub const DEFAULT_TAU_CAP: u32 = 200;

/// Static description of the system; shared read-only by environments.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    sensors: usize,
    channels: usize,
    plants: Vec<PlantModel>,
    steady: Vec<SteadyStateCov>,
    /// `costs[n][tau - 1]`.
    costs: Vec<Vec<f64>>,
    channel_model: ChannelModel,
    code: CodeParams,
    p_max: f64,
    tau_cap: u32,
    gain_offset: f64,
    gain_scale: f64,
}

impl EnvConfig {
    pub fn new(
        plants: Vec<PlantModel>,
        channel_model: ChannelModel,
        code: CodeParams,
        p_max: f64,
        tau_cap: u32,
    ) -> Result<Self> {
        let sensors = channel_model.sensors();
        let channels = channel_model.channels();
        if !(channels >= 1 && sensors > channels) {
            return Err(Error::Config(format!(
                "need N > M >= 1, got N = {sensors}, M = {channels}"
            )));
        }
        if plants.len() != sensors {
            return Err(Error::DimensionMismatch {
                expected: sensors,
                got: plants.len(),
            });
        }
        if !(p_max > 0.0) || !(code.noise_power > 0.0) {
            return Err(Error::Config("powers must be positive".into()));
        }
        if !(code.blocklength >= 1.0 && code.bits_per_symbol > 0.0) {
            return Err(Error::Config("invalid code parameters".into()));
        }
        if tau_cap == 0 {
            return Err(Error::Config("AoI cap must be >= 1".into()));
        }
        let steady = plants
            .iter()
            .map(|p| solve_steady_state_covariance(p, RICCATI_TOL, RICCATI_MAX_ITER))
            .collect::<Result<Vec<_>>>()?;
        let costs = plants
            .iter()
            .zip(&steady)
            .map(|(p, s)| cost_table(p, s, tau_cap))
            .collect::<Result<Vec<_>>>()?;
        let levels = channel_model.levels();
        let lo = levels[0].log10();
        let hi = levels[levels.len() - 1].log10();
        Ok(EnvConfig {
            sensors,
            channels,
            plants,
            steady,
            costs,
            channel_model,
            code,
            p_max,
            tau_cap,
            gain_offset: (hi + lo) / 2.0,
            gain_scale: (hi - lo) / 2.0,
        })
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plants(&self) -> &[PlantModel] {
        &self.plants
    }

    pub fn steady_state(&self) -> &[SteadyStateCov] {
        &self.steady
    }

    pub fn channel_model(&self) -> &ChannelModel {
        &self.channel_model
    }

    pub fn code(&self) -> &CodeParams {
        &self.code
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn tau_cap(&self) -> u32 {
        self.tau_cap
    }

    /// Estimation cost of `sensor` at AoI `tau` (saturating at the cap).
    pub fn cost(&self, sensor: usize, tau: u32) -> f64 {
        let tau = tau.clamp(1, self.tau_cap);
        self.costs[sensor][tau as usize - 1]
    }

    /// `Σ_n Tr(P̄_n)`, the cost when every sensor is fresh.
    pub fn cost_floor(&self) -> f64 {
        (0..self.sensors).map(|n| self.cost(n, 1)).sum()
    }

    /// Sum cost over sensors at the given AoIs.
    pub fn total_cost(&self, aoi: &[u32]) -> f64 {
        aoi.iter().enumerate().map(|(n, &t)| self.cost(n, t)).sum()
    }

    pub fn observation_dim(&self) -> usize {
        self.sensors * (self.channels + 1)
    }

    /// Normalized gains (sensor-major, then channel) followed by normalized AoIs.
    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.observation_dim());
        self.observe_into(state, &mut obs);
        obs
    }

    pub fn observe_into(&self, state: &EnvState, obs: &mut Vec<f64>) {
        obs.clear();
        let levels = self.channel_model.levels();
        for n in 0..self.sensors {
            for m in 0..self.channels {
                let g = levels[state.channel.level(m, n)];
                obs.push((g.log10() - self.gain_offset) / self.gain_scale);
            }
        }
        let norm = f64::from(self.tau_cap);
        obs.extend(state.aoi.iter().map(|&t| f64::from(t.min(self.tau_cap)) / norm));
    }

    fn validate(&self, action: &RealAction) -> Result<()> {
        if action.selection.len() != self.sensors || action.power.len() != self.sensors {
            return Err(Error::DimensionMismatch {
                expected: self.sensors,
                got: action.selection.len(),
            });
        }
        if let Some(&s) = action.selection.iter().find(|&&s| s > self.channels) {
            return Err(Error::InvalidArgument(format!("channel {s} out of range")));
        }
        let slack = self.p_max * 1e-12;
        if action
            .power
            .iter()
            .any(|&p| !(p >= 0.0 && p <= self.p_max + slack))
        {
            return Err(Error::InvalidArgument("transmit power outside [0, P_max]".into()));
        }
        Ok(())
    }
}

/// MDP state `{G(t), τ(t)}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub channel: ChannelState,
    pub aoi: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub successes: Vec<bool>,
    pub sinrs: Vec<f64>,
    pub failure_probs: Vec<f64>,
}

/// AoI after one slot given delivery outcomes.
pub fn next_aoi(aoi: &[u32], successes: &[bool], cap: u32) -> Vec<u32> {
    aoi.iter()
        .zip(successes)
        .map(|(&t, &ok)| if ok { 1 } else { (t + 1).min(cap) })
        .collect()
}

/// One environment instance with its own channel and reception streams.
#[derive(Debug, Clone)]
pub struct Env {
    config: Arc<EnvConfig>,
    state: EnvState,
    channel_rng: SimRng,
    reception_rng: SimRng,
    force_success: bool,
}

impl Env {
    /// Channel evolution and packet receptions draw from separate streams
    /// derived from `seed`, so channel trajectories do not depend on actions.
    pub fn new(config: Arc<EnvConfig>, seed: u64) -> Self {
        let mut env = Env {
            state: EnvState {
                channel: ChannelState::uniform_level(config.channels, config.sensors, 0),
                aoi: vec![1; config.sensors],
            },
            config,
            channel_rng: derive_rng(seed, Stream::ChannelEvolution),
            reception_rng: derive_rng(seed, Stream::Reception),
            force_success: false,
        };
        env.reset();
        env
    }

    /// Test hook: every transmitting sensor is delivered.
    pub fn set_force_success(&mut self, on: bool) {
        self.force_success = on;
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn shared_config(&self) -> Arc<EnvConfig> {
        Arc::clone(&self.config)
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn observe(&self) -> Vec<f64> {
        self.config.observe(&self.state)
    }

    /// Fresh AoIs and channels drawn from each link's stationary law.
    pub fn reset(&mut self) -> &EnvState {
        self.state = reset_state(&self.config, &mut self.channel_rng);
        &self.state
    }

    pub fn step(&mut self, action: &RealAction) -> Result<StepResult> {
        let result = transition(
            &self.config,
            &self.state,
            action,
            &mut self.channel_rng,
            &mut self.reception_rng,
            self.force_success,
        )?;
        self.state = result.next_state.clone();
        Ok(result)
    }
}

pub fn reset_state<R: Rng + ?Sized>(config: &EnvConfig, channel_rng: &mut R) -> EnvState {
    EnvState {
        channel: config.channel_model.sample_stationary(channel_rng),
        aoi: vec![1; config.sensors],
    }
}

/// Pure transition function over explicit random streams.
pub fn transition<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    config: &EnvConfig,
    state: &EnvState,
    action: &RealAction,
    channel_rng: &mut R1,
    reception_rng: &mut R2,
    force_success: bool,
) -> Result<StepResult> {
    config.validate(action)?;
    let assignments = action.assignments();
    let model = &config.channel_model;
    let received: Vec<f64> = assignments
        .iter()
        .enumerate()
        .map(|(n, a)| a.map_or(0.0, |m| action.power[n] * model.gain(&state.channel, m, n)))
        .collect();
    let outcome = decode_failure_probs(&assignments, &received, &config.code);
    let successes = if force_success {
        assignments.iter().map(Option::is_some).collect()
    } else {
        sample_receptions(&outcome, &assignments, reception_rng)
    };
    let aoi = next_aoi(&state.aoi, &successes, config.tau_cap);
    let mut channel = state.channel.clone();
    step_channel(model, &mut channel, channel_rng);
    let reward = -config.total_cost(&aoi);
    Ok(StepResult {
        next_state: EnvState { channel, aoi },
        reward,
        successes,
        sinrs: outcome.sinrs,
        failure_probs: outcome.failure_probs,
    })
}
