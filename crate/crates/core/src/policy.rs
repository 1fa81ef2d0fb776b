//! Policies and long-horizon evaluation.

use std::sync::Arc;

use rand::Rng;

use crate::codec::RealAction;
use crate::env::{Env, EnvConfig, EnvState};
use crate::error::Result;
use crate::rng::SimRng;

/// Anything that maps an MDP state to a real action.
pub trait Policy {
    fn act(&mut self, config: &EnvConfig, state: &EnvState) -> Result<RealAction>;
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn act(&mut self, config: &EnvConfig, state: &EnvState) -> Result<RealAction> {
        (**self).act(config, state)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&mut self, config: &EnvConfig, state: &EnvState) -> Result<RealAction> {
        (**self).act(config, state)
    }
}

/// Never transmits.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdlePolicy;

impl Policy for IdlePolicy {
    fn act(&mut self, config: &EnvConfig, _: &EnvState) -> Result<RealAction> {
        Ok(RealAction::idle(config.sensors()))
    }
}

/// Uniform channel choice (idle included) and uniform power.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: SimRng,
}

impl RandomPolicy {
    pub fn new(rng: SimRng) -> Self {
        RandomPolicy { rng }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, config: &EnvConfig, _: &EnvState) -> Result<RealAction> {
        let mut action = RealAction::idle(config.sensors());
        for n in 0..config.sensors() {
            let choice = self.rng.random_range(0..=config.channels());
            let power = self.rng.random::<f64>() * config.p_max();
            action.selection[n] = choice;
            if choice > 0 {
                action.power[n] = power;
            }
        }
        Ok(action)
    }
}

/// Schedules the `M` stalest sensors, one per channel, at full power.
///
/// Ties in AoI go to the lower sensor index; the `k`-th scheduled sensor
/// takes channel `k`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RoundRobinPolicy;

impl Policy for RoundRobinPolicy {
    fn act(&mut self, config: &EnvConfig, state: &EnvState) -> Result<RealAction> {
        let mut ranked: Vec<usize> = (0..config.sensors()).collect();
        ranked.sort_by(|&a, &b| state.aoi[b].cmp(&state.aoi[a]).then(a.cmp(&b)));
        let mut action = RealAction::idle(config.sensors());
        for (k, &n) in ranked.iter().take(config.channels()).enumerate() {
            action.selection[n] = k + 1;
            action.power[n] = config.p_max();
        }
        Ok(action)
    }
}

/// Per-step trace record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub aoi: Vec<u32>,
    pub reward: f64,
    pub successes: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    /// `(1/steps)·Σ_t Σ_n J_n(t)`.
    pub mse: f64,
    pub mean_aoi: Vec<f64>,
    pub success_rate: Vec<f64>,
    pub steps: usize,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub keep_trace: bool,
    pub force_success: bool,
}

/// Runs `steps` transitions from a fresh reset and averages the sum cost.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &mut P,
    config: &Arc<EnvConfig>,
    steps: usize,
    seed: u64,
) -> Result<f64> {
    Ok(evaluate_with(policy, config, steps, seed, EvalOptions::default())?.mse)
}

pub fn evaluate_with<P: Policy + ?Sized>(
    policy: &mut P,
    config: &Arc<EnvConfig>,
    steps: usize,
    seed: u64,
    options: EvalOptions,
) -> Result<EvalStats> {
    let n = config.sensors();
    let mut env = Env::new(Arc::clone(config), seed);
    env.set_force_success(options.force_success);
    let mut total = 0.0;
    let mut aoi_sum = vec![0.0; n];
    let mut delivered = vec![0usize; n];
    let mut trace = Vec::new();
    for t in 0..steps {
        let action = policy.act(config, env.state())?;
        let step = env.step(&action)?;
        total += -step.reward;
        for k in 0..n {
            aoi_sum[k] += f64::from(step.next_state.aoi[k]);
            delivered[k] += usize::from(step.successes[k]);
        }
        if options.keep_trace {
            trace.push(TraceRow {
                t,
                aoi: step.next_state.aoi.clone(),
                reward: step.reward,
                successes: step.successes.clone(),
            });
        }
    }
    let denom = steps.max(1) as f64;
    Ok(EvalStats {
        mse: total / denom,
        mean_aoi: aoi_sum.iter().map(|s| s / denom).collect(),
        success_rate: delivered.iter().map(|&d| d as f64 / denom).collect(),
        steps,
        trace,
    })
}
