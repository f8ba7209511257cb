//! Closed-form reference signals with exact derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;

/// Padding applied to sampled edge-difference maxima.
pub const BOUND_SAFETY_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    Sin,
    Cos,
}

/// One scalar channel of a reference signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Channel {
    /// `amplitude * wave(omega * t + phase)`
    Sinusoid {
        kind: Wave,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    Constant {
        value: f64,
    },
    /// `c0 + c1 t + c2 t^2 + ...`
    Polynomial {
        coefficients: Vec<f64>,
    },
}

impl Channel {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Channel::Sinusoid {
                kind,
                amplitude,
                omega,
                phase,
            } => {
                let arg = omega * t + phase;
                match kind {
                    Wave::Sin => amplitude * arg.sin(),
                    Wave::Cos => amplitude * arg.cos(),
                }
            }
            Channel::Constant { value } => *value,
            Channel::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            Channel::Sinusoid {
                kind,
                amplitude,
                omega,
                phase,
            } => {
                let arg = omega * t + phase;
                match kind {
                    Wave::Sin => amplitude * omega * arg.cos(),
                    Wave::Cos => -amplitude * omega * arg.sin(),
                }
            }
            Channel::Constant { .. } => 0.0,
            Channel::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c),
        }
    }
}

/// Agent-private signal in `R^r`, one [`Channel`] per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSignal {
    pub channels: Vec<Channel>,
}

impl ReferenceSignal {
    pub fn new(channels: Vec<Channel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Dimension(
                "a reference signal needs at least one channel".into(),
            ));
        }
        Ok(Self { channels })
    }

    pub fn scalar(channel: Channel) -> Self {
        Self {
            channels: vec![channel],
        }
    }

    pub fn dimension(&self) -> usize {
        self.channels.len()
    }
}

pub fn evaluate(signal: &ReferenceSignal, t: f64) -> Vec<f64> {
    signal.channels.iter().map(|c| c.value(t)).collect()
}

pub fn derivative(signal: &ReferenceSignal, t: f64) -> Vec<f64> {
    signal.channels.iter().map(|c| c.rate(t)).collect()
}

/// Mean of the member signals at `t`.
pub fn network_average(signals: &[ReferenceSignal], t: f64, members: &[usize]) -> Result<Vec<f64>> {
    let first = members.first().ok_or(Error::EmptyMembers)?;
    let r = signals[*first].dimension();
    let mut sum = vec![0.0; r];
    for &i in members {
        let signal = signals
            .get(i)
            .ok_or_else(|| Error::Dimension(format!("no signal for agent {}", i + 1)))?;
        if signal.dimension() != r {
            return Err(Error::Dimension(format!(
                "agent {} has a {}-dimensional signal, expected {r}",
                i + 1,
                signal.dimension()
            )));
        }
        for (s, v) in sum.iter_mut().zip(evaluate(signal, t)) {
            *s += v;
        }
    }
    let inv = 1.0 / members.len() as f64;
    Ok(sum.into_iter().map(|s| s * inv).collect())
}

/// Bounds on neighbor differences of the signals and of their derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalBounds {
    pub varphi: f64,
    pub dot_varphi: f64,
}

/// Samples `t = k * grid_step` on `[0, horizon]` and takes the largest
/// infinity-norm difference across current edges, padded by
/// [`BOUND_SAFETY_FACTOR`].
pub fn estimate_edge_bounds(
    signals: &[ReferenceSignal],
    topology: &Topology,
    horizon: f64,
    grid_step: f64,
) -> SignalBounds {
    let samples = (horizon / grid_step + 1e-9).floor() as usize;
    let edges: Vec<_> = topology.edges().collect();
    let mut varphi = 0.0_f64;
    let mut dot_varphi = 0.0_f64;
    for k in 0..=samples {
        let t = k as f64 * grid_step;
        let values: Vec<Vec<f64>> = signals.iter().map(|s| evaluate(s, t)).collect();
        let rates: Vec<Vec<f64>> = signals.iter().map(|s| derivative(s, t)).collect();
        for e in &edges {
            varphi = varphi.max(inf_distance(&values[e.low()], &values[e.high()]));
            dot_varphi = dot_varphi.max(inf_distance(&rates[e.low()], &rates[e.high()]));
        }
    }
    SignalBounds {
        varphi: varphi * BOUND_SAFETY_FACTOR,
        dot_varphi: dot_varphi * BOUND_SAFETY_FACTOR,
    }
}

fn inf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
