//! Report and CSV emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{Algorithm, ExperimentConfig};
use super::reference_mse;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::policy::{EvalStats, TraceRow};
use crate::ppo::CurvePoint;

pub const CURVE_HEADER: &str = "episode,return,actor_loss,critic_loss,entropy";

/// 17 significant digits; non-finite values in TOML spelling.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|&x| fmt_f64(x)).collect();
    format!("[{}]", items.join(", "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub algorithm: Algorithm,
    /// `ok`, or the reason training stopped.
    pub status: String,
    pub config_hash: String,
    pub env_seed: u64,
    pub agent_seed: u64,
    pub eval_seed: u64,
    pub eval_steps: usize,
    pub sensors: usize,
    pub channels: usize,
    /// Undiscounted average sum MSE over the evaluation run.
    pub mse: f64,
    /// `Σ_n Tr(P̄_n)`.
    pub cost_floor: f64,
    /// `Σ_t λ^t·cost(t)` along the evaluation run, with the training discount.
    pub discounted_cost: f64,
    pub mean_aoi: Vec<f64>,
    pub success_rate: Vec<f64>,
    pub training_episodes: usize,
    pub best_validation: Option<f64>,
    pub reference_mse: Option<f64>,
    pub wall_clock_seconds: f64,
}

impl EvalReport {
    pub fn new(cfg: &ExperimentConfig, env: &EnvConfig) -> Self {
        let n = env.sensors();
        EvalReport {
            label: cfg.label.clone(),
            algorithm: cfg.agent.algorithm,
            status: "ok".into(),
            config_hash: cfg.hash(),
            env_seed: cfg.env.seed,
            agent_seed: cfg.agent.seed,
            eval_seed: cfg.eval.seed,
            eval_steps: cfg.eval.steps,
            sensors: n,
            channels: env.channels(),
            mse: f64::NAN,
            cost_floor: env.cost_floor(),
            discounted_cost: f64::NAN,
            mean_aoi: vec![f64::NAN; n],
            success_rate: vec![f64::NAN; n],
            training_episodes: 0,
            best_validation: None,
            reference_mse: reference_mse(cfg.agent.algorithm, n, env.channels()),
            wall_clock_seconds: 0.0,
        }
    }

    pub(crate) fn fill(&mut self, stats: &EvalStats, discount: f64) {
        self.mse = stats.mse;
        self.mean_aoi = stats.mean_aoi.clone();
        self.success_rate = stats.success_rate.clone();
        let mut weight = 1.0;
        let mut total = 0.0;
        for row in &stats.trace {
            total += weight * -row.reward;
            weight *= discount;
        }
        self.discounted_cost = total;
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Key/value text; every line except `wall_clock_seconds` is a pure
    /// function of the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), fmt_f64);
        let _ = writeln!(s, "label = {:?}", self.label);
        let _ = writeln!(s, "algorithm = {:?}", self.algorithm.name());
        let _ = writeln!(s, "status = {:?}", self.status);
        let _ = writeln!(s, "config_hash = {:?}", self.config_hash);
        let _ = writeln!(s, "env_seed = {}", self.env_seed);
        let _ = writeln!(s, "agent_seed = {}", self.agent_seed);
        let _ = writeln!(s, "eval_seed = {}", self.eval_seed);
        let _ = writeln!(s, "eval_steps = {}", self.eval_steps);
        let _ = writeln!(s, "sensors = {}", self.sensors);
        let _ = writeln!(s, "channels = {}", self.channels);
        let _ = writeln!(s, "mse = {}", fmt_f64(self.mse));
        let _ = writeln!(s, "cost_floor = {}", fmt_f64(self.cost_floor));
        let _ = writeln!(s, "discounted_cost = {}", fmt_f64(self.discounted_cost));
        let _ = writeln!(s, "mean_aoi = {}", fmt_list(&self.mean_aoi));
        let _ = writeln!(s, "success_rate = {}", fmt_list(&self.success_rate));
        let _ = writeln!(s, "training_episodes = {}", self.training_episodes);
        let _ = writeln!(s, "best_validation = {}", opt(self.best_validation));
        let _ = writeln!(s, "reference_mse = {}", opt(self.reference_mse));
        let _ = writeln!(s, "wall_clock_seconds = {}", fmt_f64(self.wall_clock_seconds));
        s
    }
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: EvalReport,
    pub curve: Vec<CurvePoint>,
    pub trace: Option<Vec<TraceRow>>,
    pub checkpoint: Option<Checkpoint>,
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for p in curve {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            p.episode,
            fmt_f64(p.ret),
            fmt_f64(p.actor_loss),
            fmt_f64(p.critic_loss),
            fmt_f64(p.entropy)
        );
    }
    s
}

pub fn trace_csv(trace: &[TraceRow], sensors: usize) -> String {
    let mut s = String::from("t");
    for n in 1..=sensors {
        let _ = write!(s, ",tau_{n}");
    }
    s.push_str(",reward");
    for n in 1..=sensors {
        let _ = write!(s, ",zeta_{n}");
    }
    s.push('\n');
    for row in trace {
        let _ = write!(s, "{}", row.t);
        for tau in &row.aoi {
            let _ = write!(s, ",{tau}");
        }
        let _ = write!(s, ",{}", fmt_f64(row.reward));
        for &ok in &row.successes {
            let _ = write!(s, ",{}", u8::from(ok));
        }
        s.push('\n');
    }
    s
}

fn write(path: PathBuf, contents: &[u8]) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `report.toml` and, when present, `curve.csv`, `trace.csv` and
/// `checkpoint.bin` under `out_dir`.
pub fn emit_report(artifacts: &RunArtifacts, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = vec![write(out_dir.join("report.toml"), artifacts.report.to_text().as_bytes())?];
    if artifacts.report.algorithm.is_learned() && !artifacts.curve.is_empty() {
        written.push(write(out_dir.join("curve.csv"), curve_csv(&artifacts.curve).as_bytes())?);
    }
    if let Some(trace) = &artifacts.trace {
        let text = trace_csv(trace, artifacts.report.sensors);
        written.push(write(out_dir.join("trace.csv"), text.as_bytes())?);
    }
    if let Some(ckpt) = &artifacts.checkpoint {
        let path = out_dir.join("checkpoint.bin");
        ckpt.save(&path)?;
        written.push(path);
    }
    Ok(written)
}
