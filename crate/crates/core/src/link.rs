//! NOMA uplink with successive interference cancellation.
//!
//! Packets are short, so decoding errors follow the finite-blocklength normal
//! approximation. On each channel the receiver decodes in decreasing order
//! of received power, cancels every packet it recovers, and gives up on the
//! remainder of the channel at the first failure.

use rand::Rng;

/// Below this SINR the packet is counted as lost outright.
pub const GAMMA_MIN: f64 = 1e-12;

/// Code and receiver parameters shared by all sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeParams {
    /// Code rate `b/l` in bits per symbol.
    pub bits_per_symbol: f64,
    /// Packet length `l` in symbols.
    pub blocklength: f64,
    /// Receiver noise power (W).
    pub noise_power: f64,
}

impl Default for CodeParams {
    fn default() -> Self {
        CodeParams {
            bits_per_symbol: 2.0,
            blocklength: 200.0,
            noise_power: dbm_to_watts(-60.0),
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Gaussian tail probability `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Shannon capacity `log2(1 + γ)`.
pub fn capacity(gamma: f64) -> f64 {
    gamma.ln_1p() / std::f64::consts::LN_2
}

/// Channel dispersion `(1 − (1 + γ)⁻²)·log2(e)²`.
pub fn dispersion(gamma: f64) -> f64 {
    let log2e = std::f64::consts::LOG2_E;
    (1.0 - (1.0 + gamma).powi(-2)) * log2e * log2e
}

/// Decoding error probability of one packet at SINR `gamma`.
pub fn packet_error_prob(gamma: f64, code: &CodeParams) -> f64 {
    if !(gamma > GAMMA_MIN) {
        return 1.0;
    }
    let spread = (dispersion(gamma) / code.blocklength).sqrt();
    q_function((capacity(gamma) - code.bits_per_symbol) / spread).clamp(0.0, 1.0)
}

/// Per-sensor channel choice, `None` for idle.
pub type Assignment = Option<usize>;

/// Sensors that actually put energy on a channel.
fn transmits(assignments: &[Assignment], powers: &[f64], n: usize) -> bool {
    assignments[n].is_some() && powers[n] > 0.0
}

/// Global decoding order: transmitting sensors by decreasing received power,
/// ties broken by ascending index.
pub fn sic_order(received_powers: &[f64], assignments: &[Assignment]) -> Vec<usize> {
    assert_eq!(received_powers.len(), assignments.len());
    let mut order: Vec<usize> = (0..assignments.len())
        .filter(|&n| transmits(assignments, received_powers, n))
        .collect();
    order.sort_by(|&a, &b| {
        received_powers[b]
            .total_cmp(&received_powers[a])
            .then(a.cmp(&b))
    });
    order
}

/// SINR of `sensor` given that every co-channel packet ahead of it in
/// `order` was cancelled.
pub fn sinr(
    sensor: usize,
    order: &[usize],
    assignments: &[Assignment],
    received_powers: &[f64],
    noise_power: f64,
) -> f64 {
    let Some(channel) = assignments[sensor] else {
        return 0.0;
    };
    let Some(pos) = order.iter().position(|&k| k == sensor) else {
        return 0.0;
    };
    let interference: f64 = order[pos + 1..]
        .iter()
        .filter(|&&i| assignments[i] == Some(channel))
        .map(|&i| received_powers[i])
        .sum();
    received_powers[sensor] / (interference + noise_power)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    /// Probability that each sensor's packet is lost (1 for idle sensors).
    pub failure_probs: Vec<f64>,
    pub sinrs: Vec<f64>,
    pub order: Vec<usize>,
    /// Own-decode error `ε(γ_n)` of each transmitting sensor (1 for idle).
    pub own_error: Vec<f64>,
}

/// Analytic loss probabilities under sequential SIC.
///
/// A packet is lost when its own decode fails or any stronger co-channel
/// packet was lost first, giving `ε̂_n = ε̂_p + (1 − ε̂_p)·ε(γ_n)` with `p`
/// the previous sensor decoded on the same channel.
pub fn decode_failure_probs(
    assignments: &[Assignment],
    received_powers: &[f64],
    code: &CodeParams,
) -> DecodeOutcome {
    let n = assignments.len();
    let order = sic_order(received_powers, assignments);
    let mut failure_probs = vec![1.0; n];
    let mut sinrs = vec![0.0; n];
    let mut own_error = vec![1.0; n];
    // Loss probability of the last sensor decoded on each channel so far.
    let mut chain: Vec<(usize, f64)> = Vec::new();
    for &k in &order {
        let channel = assignments[k].expect("ordered sensors transmit");
        let gamma = sinr(k, &order, assignments, received_powers, code.noise_power);
        let own = packet_error_prob(gamma, code);
        let ahead = chain
            .iter()
            .find(|(c, _)| *c == channel)
            .map_or(0.0, |&(_, p)| p);
        let lost = ahead + (1.0 - ahead) * own;
        match chain.iter_mut().find(|(c, _)| *c == channel) {
            Some(slot) => slot.1 = lost,
            None => chain.push((channel, lost)),
        }
        sinrs[k] = gamma;
        own_error[k] = own;
        failure_probs[k] = lost;
    }
    DecodeOutcome {
        failure_probs,
        sinrs,
        order,
        own_error,
    }
}

/// Draws one reception outcome per sensor (`true` = delivered), walking each
/// channel in SIC order and stopping that channel at the first failure.
pub fn sample_receptions<R: Rng + ?Sized>(
    outcome: &DecodeOutcome,
    assignments: &[Assignment],
    rng: &mut R,
) -> Vec<bool> {
    let mut delivered = vec![false; assignments.len()];
    let mut stalled: Vec<usize> = Vec::new();
    for &k in &outcome.order {
        let channel = assignments[k].expect("ordered sensors transmit");
        if stalled.contains(&channel) {
            continue;
        }
        let u: f64 = rng.random();
        if u < 1.0 - outcome.own_error[k] {
            delivered[k] = true;
        } else {
            stalled.push(channel);
        }
    }
    delivered
}
