//! Finite-state Markov block-fading channels.
//!
//! Every (sensor, channel) link carries its own `H`-state chain over a shared
//! set of power-gain levels. Links evolve independently, so the joint chain
//! over a sensor's `H^M` gain vectors is the product of the per-link chains.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// `{1e-8, 1e-7, …, 1e-1}`.
pub fn default_levels() -> Vec<f64> {
    (1..=8).map(|k| 10f64.powi(k - 9)).collect()
}

pub const DEFAULT_PERSISTENCE: f64 = 0.5;

/// Row-major `H×H` row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    size: usize,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Transition {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::InvalidArgument("empty transition matrix".into()));
        }
        let mut probs = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    got: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument("rows must be probability vectors".into()));
            }
            probs.extend_from_slice(row);
        }
        Ok(Self::from_flat(size, probs))
    }

    fn from_flat(size: usize, probs: Vec<f64>) -> Self {
        let mut cumulative = vec![0.0; size * size];
        for i in 0..size {
            let mut acc = 0.0;
            for j in 0..size {
                acc += probs[i * size + j];
                cumulative[i * size + j] = acc;
            }
        }
        Transition {
            size,
            probs,
            cumulative,
        }
    }

    pub fn identity(size: usize) -> Self {
        let probs = (0..size * size)
            .map(|k| if k / size == k % size { 1.0 } else { 0.0 })
            .collect();
        Self::from_flat(size, probs)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.size + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.probs[from * self.size..(from + 1) * self.size]
    }

    /// Draws the next state from row `from`.
    pub fn sample_next<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = &self.cumulative[from * self.size..(from + 1) * self.size];
        // Rounding can leave the last cumulative entry a hair below 1.
        row.iter().position(|&c| u < c).unwrap_or(self.size - 1)
    }
}

/// Per-link transition matrices over a common level set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    levels: Vec<f64>,
    sensors: usize,
    channels: usize,
    /// Indexed by `sensor * channels + channel`.
    links: Vec<Transition>,
    /// Stationary law of each link, used for resets.
    stationary: Vec<Vec<f64>>,
}

/// Gain-level index of every link, stored channel-major as an `M×N` matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChannelState {
    sensors: usize,
    levels: Vec<usize>,
}

impl ChannelState {
    pub fn new(channels: usize, sensors: usize, levels: Vec<usize>) -> Result<Self> {
        if levels.len() != channels * sensors {
            return Err(Error::DimensionMismatch {
                expected: channels * sensors,
                got: levels.len(),
            });
        }
        Ok(ChannelState { sensors, levels })
    }

    pub fn uniform_level(channels: usize, sensors: usize, level: usize) -> Self {
        ChannelState {
            sensors,
            levels: vec![level; channels * sensors],
        }
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn channels(&self) -> usize {
        self.levels.len() / self.sensors.max(1)
    }

    /// Level index of the link between `sensor` and `channel`.
    pub fn level(&self, channel: usize, sensor: usize) -> usize {
        self.levels[channel * self.sensors + sensor]
    }

    pub fn set_level(&mut self, channel: usize, sensor: usize, level: usize) {
        self.levels[channel * self.sensors + sensor] = level;
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.levels
    }
}

impl ChannelModel {
    /// Builds a model from explicit per-link transitions (sensor-major).
    pub fn new(
        levels: Vec<f64>,
        sensors: usize,
        channels: usize,
        links: Vec<Transition>,
    ) -> Result<Self> {
        validate_levels(&levels)?;
        if links.len() != sensors * channels {
            return Err(Error::DimensionMismatch {
                expected: sensors * channels,
                got: links.len(),
            });
        }
        if let Some(t) = links.iter().find(|t| t.size() != levels.len()) {
            return Err(Error::DimensionMismatch {
                expected: levels.len(),
                got: t.size(),
            });
        }
        let stationary = links
            .iter()
            .map(|t| stationary_distribution(t, 1e-13).distribution)
            .collect();
        Ok(ChannelModel {
            levels,
            sensors,
            channels,
            links,
            stationary,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn transition(&self, sensor: usize, channel: usize) -> &Transition {
        &self.links[sensor * self.channels + channel]
    }

    pub fn stationary(&self, sensor: usize, channel: usize) -> &[f64] {
        &self.stationary[sensor * self.channels + channel]
    }

    pub fn gain(&self, state: &ChannelState, channel: usize, sensor: usize) -> f64 {
        self.levels[state.level(channel, sensor)]
    }

    /// Samples every link from its stationary law.
    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelState {
        let mut state = ChannelState::uniform_level(self.channels, self.sensors, 0);
        for m in 0..self.channels {
            for n in 0..self.sensors {
                let pi = self.stationary(n, m);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut level = pi.len() - 1;
                for (k, p) in pi.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        level = k;
                        break;
                    }
                }
                state.set_level(m, n, level);
            }
        }
        state
    }
}

fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.len() < 2 {
        return Err(Error::InvalidArgument("need at least two gain levels".into()));
    }
    if levels[0] <= 0.0 || levels.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "gain levels must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Independent per-link transitions `persistence·I + (1 − persistence)·R`
/// where each row of `R` is uniform on the probability simplex.
pub fn generate_random_channel_model<R: Rng + ?Sized>(
    sensors: usize,
    channels: usize,
    levels: Vec<f64>,
    persistence: f64,
    rng: &mut R,
) -> Result<ChannelModel> {
    validate_levels(&levels)?;
    if !(0.0..1.0).contains(&persistence) {
        return Err(Error::InvalidArgument(format!(
            "persistence {persistence} must lie in [0, 1)"
        )));
    }
    if sensors == 0 || channels == 0 {
        return Err(Error::InvalidArgument("need at least one sensor and channel".into()));
    }
    let h = levels.len();
    let links = (0..sensors * channels)
        .map(|_| {
            let mut probs = vec![0.0; h * h];
            for i in 0..h {
                let row = &mut probs[i * h..(i + 1) * h];
                let mut total = 0.0;
                for p in row.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    *p = e;
                    total += e;
                }
                for (j, p) in row.iter_mut().enumerate() {
                    let stay = if i == j { persistence } else { 0.0 };
                    *p = stay + (1.0 - persistence) * (*p / total);
                }
            }
            Transition::from_flat(h, probs)
        })
        .collect();
    ChannelModel::new(levels, sensors, channels, links)
}

/// Advances every link one slot.
pub fn step_channel<R: Rng + ?Sized>(
    model: &ChannelModel,
    state: &mut ChannelState,
    rng: &mut R,
) {
    for m in 0..model.channels {
        for n in 0..model.sensors {
            let next = model.transition(n, m).sample_next(state.level(m, n), rng);
            state.set_level(m, n, next);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    pub distribution: Vec<f64>,
    /// False when the chain has no unique limiting law; `distribution` is then uniform.
    pub converged: bool,
}

/// Power iteration on the transpose, started from every basis vector.
///
/// All starts must settle on the same vector for the result to count as the
/// stationary law; reducible or periodic chains fall back to uniform.
pub fn stationary_distribution(transition: &Transition, tol: f64) -> Stationary {
    const MAX_ITER: usize = 100_000;
    let h = transition.size();
    let uniform = Stationary {
        distribution: vec![1.0 / h as f64; h],
        converged: false,
    };
    let mut limit: Option<Vec<f64>> = None;
    for start in 0..h {
        let mut pi = vec![0.0; h];
        pi[start] = 1.0;
        let mut settled = false;
        for _ in 0..MAX_ITER {
            let mut next = vec![0.0; h];
            for (i, &p) in pi.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (j, slot) in next.iter_mut().enumerate() {
                    *slot += p * transition.prob(i, j);
                }
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= total);
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if delta <= tol {
                settled = true;
                break;
            }
        }
        if !settled {
            return uniform;
        }
        match &limit {
            None => limit = Some(pi),
            Some(prev) => {
                let gap: f64 = prev.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
                if gap > tol.sqrt().max(1e-9) {
                    return uniform;
                }
            }
        }
    }
    Stationary {
        distribution: limit.unwrap_or(uniform.distribution),
        converged: true,
    }
}
