//! End-to-end experiments: configuration, training, evaluation and reports.

pub mod config;
pub mod report;
pub mod selftest;

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

pub use config::{Algorithm, ExperimentConfig, SCHEMA_VERSION};
pub use report::{emit_report, EvalReport, RunArtifacts};

use crate::codec::CodecKind;
use crate::dqn::{train_dqn, DqnPolicy};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::policy::{evaluate_with, EvalOptions, EvalStats, Policy, RandomPolicy, RoundRobinPolicy};
use crate::ppo::{self, CurvePoint, PpoAgent};
use crate::rng::{derive_rng, Stream};

/// Rule-based policies that need no training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Random,
    RoundRobin,
}

pub fn baseline_policy(kind: BaselineKind, seed: u64) -> Box<dyn Policy> {
    match kind {
        BaselineKind::Random => Box::new(RandomPolicy::new(derive_rng(seed, Stream::Baseline))),
        BaselineKind::RoundRobin => Box::new(RoundRobinPolicy),
    }
}

/// Averaged sum MSE at `(N, M) = (6, 3)` quoted for comparison only.
pub fn reference_mse(algorithm: Algorithm, sensors: usize, channels: usize) -> Option<f64> {
    if (sensors, channels) != (6, 3) {
        return None;
    }
    match algorithm {
        Algorithm::DqnOma => Some(46.6243),
        Algorithm::PpoNaive => Some(39.0462),
        Algorithm::PpoBinary => Some(38.0663),
        _ => None,
    }
}

/// Trained or rule-based policy together with what produced it.
struct Trained {
    policy: Box<dyn Policy>,
    curve: Vec<CurvePoint>,
    checkpoint: Option<Checkpoint>,
    best_validation: Option<f64>,
}

fn train_agent(cfg: &ExperimentConfig, env: &Arc<EnvConfig>) -> Result<Trained> {
    let seed = cfg.agent.seed;
    let best_val = |v: &[(usize, f64)]| v.iter().map(|x| x.1).reduce(f64::min);
    Ok(match cfg.agent.algorithm {
        Algorithm::PpoBinary | Algorithm::PpoNaive => {
            let kind = if cfg.agent.algorithm == Algorithm::PpoBinary {
                CodecKind::Binary
            } else {
                CodecKind::Naive
            };
            let out = ppo::train(env, kind, &cfg.agent.ppo, seed)?;
            Trained {
                policy: Box::new(out.best.policy()),
                checkpoint: Some(out.best.to_checkpoint()),
                best_validation: best_val(&out.validation),
                curve: out.curve,
            }
        }
        Algorithm::DqnOma => {
            let out = train_dqn(env, &cfg.agent.dqn, seed)?;
            Trained {
                checkpoint: Some(out.best.to_checkpoint(env.p_max())),
                policy: Box::new(out.best),
                best_validation: best_val(&out.validation),
                curve: out.curve,
            }
        }
        Algorithm::Random => Trained {
            policy: baseline_policy(BaselineKind::Random, seed),
            curve: Vec::new(),
            checkpoint: None,
            best_validation: None,
        },
        Algorithm::RoundRobin => Trained {
            policy: baseline_policy(BaselineKind::RoundRobin, seed),
            curve: Vec::new(),
            checkpoint: None,
            best_validation: None,
        },
    })
}

fn evaluate_policy(
    cfg: &ExperimentConfig,
    env: &Arc<EnvConfig>,
    policy: &mut dyn Policy,
) -> Result<EvalStats> {
    let options = EvalOptions {
        keep_trace: true,
        force_success: false,
    };
    evaluate_with(policy, env, cfg.eval.steps, cfg.eval.seed, options)
}

/// Builds the environment, trains the configured agent, and evaluates its
/// deterministic policy. Training divergence yields a report with a failure
/// status rather than an error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let start = Instant::now();
    let env = Arc::new(cfg.build_env()?);
    let mut report = EvalReport::new(cfg, &env);
    match train_agent(cfg, &env) {
        Ok(mut trained) => {
            let stats = evaluate_policy(cfg, &env, trained.policy.as_mut())?;
            report.fill(&stats, discount_of(cfg));
            report.training_episodes = trained.curve.len();
            report.best_validation = trained.best_validation;
            report.wall_clock_seconds = start.elapsed().as_secs_f64();
            Ok(RunArtifacts {
                report,
                curve: trained.curve,
                trace: cfg.eval.trace.then_some(stats.trace),
                checkpoint: trained.checkpoint,
            })
        }
        Err(Error::Diverged { episode, reason }) => {
            report.status = format!("diverged at episode {episode}: {reason}");
            report.wall_clock_seconds = start.elapsed().as_secs_f64();
            Ok(RunArtifacts {
                report,
                curve: Vec::new(),
                trace: None,
                checkpoint: None,
            })
        }
        Err(e) => Err(e),
    }
}

fn discount_of(cfg: &ExperimentConfig) -> f64 {
    match cfg.agent.algorithm {
        Algorithm::DqnOma => cfg.agent.dqn.discount,
        _ => cfg.agent.ppo.discount,
    }
}

/// Evaluates a saved agent under `cfg`'s environment and evaluation settings.
pub fn evaluate_checkpoint(ckpt_path: &Path, cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let start = Instant::now();
    let ckpt = Checkpoint::load(ckpt_path)?;
    let env = Arc::new(cfg.build_env()?);
    let (mut policy, algorithm): (Box<dyn Policy>, Algorithm) = match ckpt.label.as_str() {
        "ppo" => {
            let agent = PpoAgent::from_checkpoint(&ckpt, &cfg.agent.ppo)?;
            let algorithm = match agent.codec.kind {
                CodecKind::Binary => Algorithm::PpoBinary,
                CodecKind::Naive => Algorithm::PpoNaive,
            };
            if agent.actor.input_dim() != env.observation_dim()
                || agent.codec.sensors != env.sensors()
                || agent.codec.channels != env.channels()
            {
                return Err(Error::Checkpoint("agent does not match the environment".into()));
            }
            (Box::new(agent.policy()), algorithm)
        }
        "dqn" => {
            let policy = DqnPolicy::from_checkpoint(&ckpt)?;
            if policy.q_net.input_dim() != env.observation_dim()
                || policy.space.sensors != env.sensors()
                || policy.space.channels != env.channels()
            {
                return Err(Error::Checkpoint("agent does not match the environment".into()));
            }
            (Box::new(policy), Algorithm::DqnOma)
        }
        other => return Err(Error::Checkpoint(format!("unknown agent kind {other:?}"))),
    };
    let mut cfg = cfg.clone();
    cfg.agent.algorithm = algorithm;
    let mut report = EvalReport::new(&cfg, &env);
    let stats = evaluate_policy(&cfg, &env, policy.as_mut())?;
    report.fill(&stats, discount_of(&cfg));
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(RunArtifacts {
        report,
        curve: Vec::new(),
        trace: cfg.eval.trace.then_some(stats.trace),
        checkpoint: None,
    })
}
