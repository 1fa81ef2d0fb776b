//! Virtual-to-real action mapping.
//!
//! The learner emits an unconstrained real vector. Each sensor owns
//! `⌈log2(M+1)⌉` selection coordinates whose signs spell its channel choice in
//! binary (most significant bit first), followed by one power coordinate
//! that is clamped to `[-1, 1]` and mapped linearly onto `[0, P_max]`.
//!
//! The naive baseline instead gives each sensor a single selection scalar
//! quantized uniformly into `M + 1` bins.

use crate::error::{Error, Result};
use crate::link::Assignment;

/// Channel choice per sensor plus transmit power.
#[derive(Debug, Clone, PartialEq)]
pub struct RealAction {
    /// `0` is idle, `m ≥ 1` selects channel `m`.
    pub selection: Vec<usize>,
    /// Transmit power in watts; zero for idle sensors.
    pub power: Vec<f64>,
}

impl RealAction {
    pub fn idle(sensors: usize) -> Self {
        RealAction {
            selection: vec![0; sensors],
            power: vec![0.0; sensors],
        }
    }

    pub fn sensors(&self) -> usize {
        self.selection.len()
    }

    /// Zero-based channel index per sensor, `None` when idle or silent.
    pub fn assignments(&self) -> Vec<Assignment> {
        self.selection
            .iter()
            .zip(&self.power)
            .map(|(&s, &p)| (s > 0 && p > 0.0).then(|| s - 1))
            .collect()
    }
}

/// Which mapping turns virtual actions into real ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecKind {
    Binary,
    Naive,
}

/// `⌈log2(M+1)⌉`.
pub fn selection_bits(channels: usize) -> usize {
    let choices = channels + 1;
    (usize::BITS - (choices - 1).leading_zeros()) as usize
}

/// Codec bound to a system size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionCodec {
    pub kind: CodecKind,
    pub sensors: usize,
    pub channels: usize,
    pub p_max: f64,
}

impl ActionCodec {
    pub fn new(kind: CodecKind, sensors: usize, channels: usize, p_max: f64) -> Self {
        ActionCodec {
            kind,
            sensors,
            channels,
            p_max,
        }
    }

    /// Coordinates per sensor.
    pub fn per_sensor(&self) -> usize {
        match self.kind {
            CodecKind::Binary => selection_bits(self.channels) + 1,
            CodecKind::Naive => 2,
        }
    }

    pub fn dim(&self) -> usize {
        self.sensors * self.per_sensor()
    }

    pub fn decode(&self, v: &[f64]) -> Result<RealAction> {
        match self.kind {
            CodecKind::Binary => decode_virtual_action(v, self.sensors, self.channels, self.p_max),
            CodecKind::Naive => naive_decode_action(v, self.sensors, self.channels, self.p_max),
        }
    }
}

/// Sign pattern to channel choice; codes above `M` wrap modulo `M + 1`.
pub fn decode_selection(coords: &[f64], channels: usize) -> usize {
    let code = coords
        .iter()
        .fold(0usize, |acc, &x| (acc << 1) | usize::from(x > 0.0));
    code % (channels + 1)
}

/// Canonical `±1` pattern for `choice`.
pub fn encode_selection(choice: usize, channels: usize) -> Result<Vec<f64>> {
    if choice > channels {
        return Err(Error::InvalidArgument(format!(
            "choice {choice} exceeds channel count {channels}"
        )));
    }
    let bits = selection_bits(channels);
    Ok((0..bits)
        .rev()
        .map(|j| if (choice >> j) & 1 == 1 { 1.0 } else { -1.0 })
        .collect())
}

pub fn decode_power(p_virtual: f64, p_max: f64) -> f64 {
    // NaN clamps to NaN; treat it as the lower endpoint.
    let x = if p_virtual.is_nan() { -1.0 } else { p_virtual.clamp(-1.0, 1.0) };
    p_max * (x + 1.0) / 2.0
}

pub fn decode_virtual_action(
    v: &[f64],
    sensors: usize,
    channels: usize,
    p_max: f64,
) -> Result<RealAction> {
    let bits = selection_bits(channels);
    let stride = bits + 1;
    if v.len() != sensors * stride {
        return Err(Error::DimensionMismatch {
            expected: sensors * stride,
            got: v.len(),
        });
    }
    let mut action = RealAction::idle(sensors);
    for (n, chunk) in v.chunks_exact(stride).enumerate() {
        let choice = decode_selection(&chunk[..bits], channels);
        action.selection[n] = choice;
        if choice > 0 {
            action.power[n] = decode_power(chunk[bits], p_max);
        }
    }
    Ok(action)
}

/// Uniform `M + 1`-bin quantizer on `[-1, 1]`; boundaries go to the lower bin.
pub fn naive_decode(scalar: f64, channels: usize) -> usize {
    let bins = (channels + 1) as f64;
    let x = if scalar.is_nan() { -1.0 } else { scalar.clamp(-1.0, 1.0) };
    let pos = (x + 1.0) / 2.0 * bins;
    let idx = pos.ceil() as usize;
    idx.saturating_sub(1).min(channels)
}

pub fn naive_decode_action(
    v: &[f64],
    sensors: usize,
    channels: usize,
    p_max: f64,
) -> Result<RealAction> {
    if v.len() != sensors * 2 {
        return Err(Error::DimensionMismatch {
            expected: sensors * 2,
            got: v.len(),
        });
    }
    let mut action = RealAction::idle(sensors);
    for (n, pair) in v.chunks_exact(2).enumerate() {
        let choice = naive_decode(pair[0], channels);
        action.selection[n] = choice;
        if choice > 0 {
            action.power[n] = decode_power(pair[1], p_max);
        }
    }
    Ok(action)
}
