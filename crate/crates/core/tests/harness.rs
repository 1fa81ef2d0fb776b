use std::sync::Arc;

use nomastate::codec::RealAction;
use nomastate::env::{Env, EnvConfig, EnvState};
use nomastate::harness::{self, baseline_policy, emit_report, Algorithm, BaselineKind, ExperimentConfig};
use nomastate::policy::{evaluate, evaluate_with, EvalOptions, IdlePolicy, Policy, RandomPolicy, RoundRobinPolicy};
use nomastate::rng::rng_from_seed;
use nomastate::Result;

fn default_env(seed: u64) -> Arc<EnvConfig> {
    let mut cfg = ExperimentConfig::default();
    cfg.env.seed = seed;
    Arc::new(cfg.build_env().unwrap())
}

/// Every sensor on the first channel at full power.
struct EveryoneTransmits;

impl Policy for EveryoneTransmits {
    fn act(&mut self, config: &EnvConfig, _: &EnvState) -> Result<RealAction> {
        let n = config.sensors();
        Ok(RealAction {
            selection: vec![1; n],
            power: vec![config.p_max(); n],
        })
    }
}

#[test]
fn idle_policy_matches_closed_form_ramp() {
    let env = default_env(4);
    let steps = 500;
    let mse = evaluate(&mut IdlePolicy, &env, steps, 9).unwrap();
    let mut total = 0.0;
    for t in 0..steps as u32 {
        let tau = (t + 2).min(env.tau_cap());
        total += (0..env.sensors()).map(|n| env.cost(n, tau)).sum::<f64>();
    }
    let expected = total / steps as f64;
    assert!((mse - expected).abs() <= 1e-12 * expected, "{mse} vs {expected}");
}

#[test]
fn forced_delivery_reaches_cost_floor() {
    let env = default_env(5);
    let options = EvalOptions {
        keep_trace: false,
        force_success: true,
    };
    let stats = evaluate_with(&mut EveryoneTransmits, &env, 300, 1, options).unwrap();
    assert!((stats.mse - env.cost_floor()).abs() <= 1e-12 * env.cost_floor());
    assert!(stats.success_rate.iter().all(|&s| s == 1.0));
}

#[test]
fn round_robin_cycles_all_sensors_under_forced_delivery() {
    let env = default_env(6);
    let window = env.sensors().div_ceil(env.channels());
    let mut sim = Env::new(Arc::clone(&env), 2);
    sim.set_force_success(true);
    let mut served: Vec<Vec<bool>> = Vec::new();
    for _ in 0..60 {
        let action = RoundRobinPolicy.act(&env, sim.state()).unwrap();
        let scheduled = action.selection.iter().filter(|&&s| s > 0).count();
        assert_eq!(scheduled, env.channels());
        served.push(sim.step(&action).unwrap().successes);
    }
    for w in served.windows(window) {
        for n in 0..env.sensors() {
            assert!(w.iter().any(|row| row[n]), "sensor {n} skipped for {window} slots");
        }
    }
}

#[test]
fn random_policy_marginals_are_uniform() {
    let env = default_env(7);
    let draws = 100_000;
    let bins = env.channels() + 1;
    let mut counts = vec![vec![0usize; bins]; env.sensors()];
    let mut policy = RandomPolicy::new(rng_from_seed(12));
    let state = Env::new(Arc::clone(&env), 0).state().clone();
    for _ in 0..draws {
        let a = policy.act(&env, &state).unwrap();
        for (n, &s) in a.selection.iter().enumerate() {
            counts[n][s] += 1;
        }
        assert!(a.power.iter().all(|&p| (0.0..=env.p_max()).contains(&p)));
    }
    let expected = draws as f64 / bins as f64;
    // Upper 0.1% point of chi-square with 3 degrees of freedom.
    let critical = 16.266;
    for row in &counts {
        let chi2: f64 = row.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < critical, "chi2 = {chi2}");
    }
}

#[test]
fn report_mse_is_the_evaluator_value() {
    let mut cfg = ExperimentConfig::default();
    cfg.agent.algorithm = Algorithm::Random;
    cfg.eval.steps = 3000;
    let out = harness::run_experiment(&cfg).unwrap();
    let env = Arc::new(cfg.build_env().unwrap());
    let mut policy = baseline_policy(BaselineKind::Random, cfg.agent.seed);
    let mse = evaluate(policy.as_mut(), &env, cfg.eval.steps, cfg.eval.seed).unwrap();
    assert_eq!(out.report.mse.to_bits(), mse.to_bits());
    assert!(out.report.mse >= out.report.cost_floor);
    assert!(out.report.is_ok());
    assert_eq!(out.report.config_hash, cfg.hash());
}

#[test]
fn emitted_files_and_rerun_identity() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.env.sensors = 3;
    cfg.env.channels = 2;
    cfg.agent.algorithm = Algorithm::PpoBinary;
    cfg.agent.ppo.episodes = Some(6);
    cfg.agent.ppo.eval_interval = 3;
    cfg.agent.ppo.eval_steps = 200;
    cfg.eval.steps = 400;
    let a = harness::run_experiment(&cfg).unwrap();
    let files = emit_report(&a, dir.path()).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["report.toml", "curve.csv", "trace.csv", "checkpoint.bin"]);
    let curve = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert!(curve.starts_with("episode,return,actor_loss,critic_loss,entropy\n"));
    assert_eq!(curve.lines().count(), 7);

    let b = harness::run_experiment(&cfg).unwrap();
    let strip = |s: String| s.lines().filter(|l| !l.starts_with("wall_clock")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(a.report.to_text()), strip(b.report.to_text()));

    let reloaded = harness::evaluate_checkpoint(&dir.path().join("checkpoint.bin"), &cfg).unwrap();
    assert_eq!(reloaded.report.mse.to_bits(), a.report.mse.to_bits());
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.label = "round-trip".into();
    cfg.agent.algorithm = Algorithm::DqnOma;
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    assert_eq!(loaded.hash(), cfg.hash());
    assert_eq!(loaded.output.dir, dir.path().join("out"));
}

#[test]
fn diverged_training_is_reported_not_raised() {
    let mut cfg = ExperimentConfig::default();
    cfg.env.sensors = 2;
    cfg.env.channels = 1;
    cfg.agent.algorithm = Algorithm::PpoBinary;
    cfg.agent.ppo.episodes = Some(3);
    cfg.agent.ppo.actor_lr = 1e300;
    cfg.agent.ppo.critic_lr = 1e300;
    cfg.eval.steps = 10;
    let out = harness::run_experiment(&cfg).unwrap();
    assert!(!out.report.is_ok(), "{}", out.report.status);
    assert!(out.report.status.starts_with("diverged"));
}
