//! Scenario files: JSON description of a network, its signals, the
//! estimator parameters and the random initialization.
//!
//! Agent indices in files are 1-based; everything inside the crate is 0-based.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{GainTable, Signum};
use crate::event_triggered::{self, AgentTriggerParams, ETParams};
use crate::graph::{self, EdgeAction, Topology, TopologyEvent, UndirectedEdge};
use crate::signals::{self, Channel, ReferenceSignal, SignalBounds, Wave};
use crate::stacked::AgentVectors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateKeyword {
    Estimate,
}

/// A value shared by all agents or listed per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerAgent {
    fn resolve(&self, n: usize, name: &str, problems: &mut Vec<String>) -> Vec<f64> {
        match self {
            PerAgent::Uniform(v) => vec![*v; n],
            PerAgent::Each(values) => {
                if values.len() != n {
                    problems.push(format!("{name}: expected {n} values, got {}", values.len()));
                }
                let mut out = values.clone();
                out.resize(n, f64::NAN);
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSetting {
    Auto(AutoKeyword),
    Fixed(PerAgent),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundsSetting {
    Estimate(EstimateKeyword),
    Explicit(SignalBounds),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub time: f64,
    pub action: EdgeAction,
    pub edge: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub gamma: f64,
    pub step: f64,
    pub duration: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Width of the linear zone replacing the exact sign function.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_layer: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub force_trigger: bool,
}

fn default_stride() -> usize {
    1
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerSettings {
    pub alpha: PerAgent,
    pub delta: PerAgent,
    pub theta: PerAgent,
    pub beta: BetaSetting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialZ {
    RandomUniform([f64; 2]),
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeGain {
    pub edge: [usize; 2],
    pub gain: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSettings {
    #[serde(default = "default_z")]
    pub z: InitialZ,
    #[serde(default = "one")]
    pub eta: f64,
    /// Gain floor for every link, also used for links added mid-run.
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kappa_edges: Vec<EdgeGain>,
}

fn default_z() -> InitialZ {
    InitialZ::RandomUniform([-1.0, 1.0])
}

fn one() -> f64 {
    1.0
}

impl Default for InitSettings {
    fn default() -> Self {
        Self {
            z: default_z(),
            eta: 1.0,
            kappa: 1.0,
            kappa_edges: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub agents: usize,
    pub dimension: usize,
    pub seed: u64,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub topology_events: Vec<EventSpec>,
    pub signals: Vec<ReferenceSignal>,
    pub params: SimParams,
    pub event_triggered: TriggerSettings,
    pub bounds: BoundsSetting,
    #[serde(default)]
    pub init: InitSettings,
}

/// Command-line style overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub step: Option<f64>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub force_trigger: bool,
    pub boundary_layer: Option<f64>,
    pub record_stride: Option<usize>,
}

/// Everything a run needs, in 0-based form, with derived values filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub topology: Topology,
    pub events: Vec<TopologyEvent>,
    pub signals: Vec<ReferenceSignal>,
    pub bounds: SignalBounds,
    pub trigger: ETParams,
    pub z0: AgentVectors,
    pub mu0: GainTable,
    pub kappa_floor: f64,
    pub steps: usize,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(h) = o.step {
            self.params.step = h;
        }
        if let Some(d) = o.duration {
            self.params.duration = d;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.force_trigger {
            self.params.force_trigger = true;
        }
        if let Some(w) = o.boundary_layer {
            self.params.boundary_layer = Some(w);
        }
        if let Some(k) = o.record_stride {
            self.params.record_stride = k;
        }
        self
    }

    pub fn signum(&self) -> Signum {
        self.params
            .boundary_layer
            .map_or(Signum::Exact, Signum::BoundaryLayer)
    }

    /// Number of Euler steps covering `duration`.
    pub fn step_count(&self) -> usize {
        (self.params.duration / self.params.step + 1e-9).floor() as usize
    }

    /// Validates the scenario and resolves it into run-ready values. All
    /// violations are reported together.
    pub fn prepare(&self) -> Result<Prepared> {
        let mut problems = Vec::new();
        let mut warnings = Vec::new();
        let n = self.agents;
        let r = self.dimension;
        if n == 0 {
            problems.push("agents must be >= 1".into());
        }
        if r == 0 {
            problems.push("dimension must be >= 1".into());
        }
        let p = &self.params;
        if !(p.gamma > 0.0) {
            problems.push(format!("gamma must be > 0 (got {})", p.gamma));
        }
        if !(p.step > 0.0) {
            problems.push(format!("step must be > 0 (got {})", p.step));
        }
        if !(p.duration >= 0.0) || !p.duration.is_finite() {
            problems.push(format!(
                "duration must be a finite value >= 0 (got {})",
                p.duration
            ));
        }
        if p.record_stride == 0 {
            problems.push("record_stride must be >= 1".into());
        }
        if let Some(w) = p.boundary_layer {
            if !(w > 0.0) {
                problems.push(format!("boundary_layer must be > 0 (got {w})"));
            }
        }
        if self.signals.len() != n {
            problems.push(format!("expected {n} signals, got {}", self.signals.len()));
        }
        for (i, s) in self.signals.iter().enumerate() {
            if s.dimension() != r {
                problems.push(format!(
                    "signal of agent {} has {} channels, expected {r}",
                    i + 1,
                    s.dimension()
                ));
            }
        }

        let edge = |pair: [usize; 2], problems: &mut Vec<String>| -> Option<UndirectedEdge> {
            let [a, b] = pair;
            if a == 0 || b == 0 || a > n || b > n {
                problems.push(format!("edge {{{a},{b}}}: agents are numbered 1..={n}"));
                return None;
            }
            match UndirectedEdge::new(a - 1, b - 1) {
                Ok(e) => Some(e),
                Err(e) => {
                    problems.push(e.to_string());
                    None
                }
            }
        };

        let initial: Vec<UndirectedEdge> = self
            .edges
            .iter()
            .filter_map(|e| edge(*e, &mut problems))
            .collect();
        let topology = if n > 0 {
            match Topology::new(n, initial.iter().map(|e| (e.low(), e.high()))) {
                Ok(t) => Some(t),
                Err(e) => {
                    problems.push(e.to_string());
                    None
                }
            }
        } else {
            None
        };

        let mut events = Vec::new();
        for spec in &self.topology_events {
            if !(spec.time >= 0.0) {
                problems.push(format!(
                    "topology event time must be >= 0 (got {})",
                    spec.time
                ));
            }
            if let Some(e) = edge(spec.edge, &mut problems) {
                events.push(TopologyEvent {
                    time: spec.time,
                    action: spec.action,
                    edge: e,
                });
            }
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        if let Some(t) = &topology {
            let mut probe = t.clone();
            for ev in &events {
                if let Err(e) = probe.apply(ev) {
                    problems.push(e.to_string());
                }
            }
            if !t.is_connected() {
                warnings.push(format!(
                    "initial topology is disconnected ({} components)",
                    graph::connected_components(t).len()
                ));
            }
        }

        let ts = &self.event_triggered;
        let alpha = ts.alpha.resolve(n, "alpha", &mut problems);
        let delta = ts.delta.resolve(n, "delta", &mut problems);
        let theta = ts.theta.resolve(n, "theta", &mut problems);

        let init = &self.init;
        if !(init.kappa >= 1.0) {
            problems.push(format!("kappa floor must be >= 1 (got {})", init.kappa));
        }
        if !(init.eta > 0.0) {
            problems.push(format!("eta init must be > 0 (got {})", init.eta));
        }

        let bounds = match (self.bounds, &topology) {
            (BoundsSetting::Explicit(b), _) => {
                if !(b.varphi >= 0.0 && b.dot_varphi >= 0.0)
                    || !b.varphi.is_finite()
                    || !b.dot_varphi.is_finite()
                {
                    problems.push("bounds must be finite and >= 0".into());
                }
                Some(b)
            }
            (BoundsSetting::Estimate(_), Some(t)) if problems.is_empty() && p.duration > 0.0 => {
                Some(signals::estimate_edge_bounds(
                    &self.signals,
                    t,
                    p.duration,
                    p.step,
                ))
            }
            (BoundsSetting::Estimate(_), Some(t)) if problems.is_empty() => {
                Some(signals::estimate_edge_bounds(&self.signals, t, 0.0, 1.0))
            }
            _ => None,
        };

        let beta_estimate = match (&bounds, &topology) {
            (Some(b), Some(t)) if p.gamma > 0.0 => Some(component_beta(b, t, p.gamma)),
            _ => None,
        };
        let beta = match &ts.beta {
            BetaSetting::Fixed(v) => {
                let values = v.resolve(n, "beta", &mut problems);
                if let Some(est) = beta_estimate {
                    for (i, b) in values.iter().enumerate() {
                        if *b < est {
                            warnings.push(format!(
                                "agent {}: beta {b} is below the gain-bound estimate {est}",
                                i + 1
                            ));
                        }
                    }
                }
                values
            }
            BetaSetting::Auto(_) => vec![beta_estimate.unwrap_or(f64::NAN); n],
        };

        let agents: Vec<AgentTriggerParams> = (0..n)
            .map(|i| AgentTriggerParams {
                alpha: alpha[i],
                delta: delta[i],
                theta: theta[i],
                beta: beta[i],
                eta_init: init.eta,
            })
            .collect();
        if matches!(ts.beta, BetaSetting::Auto(_)) && beta_estimate.is_some_and(|b| !(b > 0.0)) {
            problems.push(
                "beta \"auto\" resolved to 0 (signals agree on every edge); set beta explicitly"
                    .into(),
            );
        } else {
            for (i, a) in agents.iter().enumerate() {
                problems.extend(a.violations(i).into_iter().filter(|m| {
                    !m.contains("eta init") && !(m.contains("beta") && a.beta.is_nan())
                }));
            }
        }

        let mut gains = BTreeMap::new();
        if let Some(t) = &topology {
            for e in t.edges() {
                gains.insert(e, vec![init.kappa; r]);
            }
        }
        for eg in &init.kappa_edges {
            let Some(e) = edge(eg.edge, &mut problems) else {
                continue;
            };
            if !initial.contains(&e) {
                problems.push(format!("kappa_edges: {e} is not an initial edge"));
            }
            if eg.gain.len() != r {
                problems.push(format!("kappa_edges: gain for {e} needs {r} channels"));
            }
            if eg.gain.iter().any(|g| !(*g >= 1.0)) {
                problems.push(format!(
                    "kappa_edges: gain for {e} must be >= 1 in every channel"
                ));
            }
            gains.insert(e, eg.gain.clone());
        }

        let z0 = match &init.z {
            InitialZ::RandomUniform([lo, hi]) => {
                if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                    problems.push(format!("random_uniform range [{lo}, {hi}] is invalid"));
                    None
                } else if n > 0 && r > 0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                    let rows: Vec<Vec<f64>> = (0..n)
                        .map(|_| {
                            (0..r)
                                .map(|_| {
                                    if lo < hi {
                                        rng.random_range(*lo..*hi)
                                    } else {
                                        *lo
                                    }
                                })
                                .collect()
                        })
                        .collect();
                    AgentVectors::from_rows(&rows).ok()
                } else {
                    None
                }
            }
            InitialZ::Explicit(rows) => {
                if rows.len() != n || rows.iter().any(|v| v.len() != r) {
                    problems.push(format!("explicit z must be {n} rows of {r} values"));
                    None
                } else {
                    AgentVectors::from_rows(rows).ok()
                }
            }
        };

        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let (Some(topology), Some(bounds), Some(z0)) = (topology, bounds, z0) else {
            return Err(Error::Validation(vec![
                "scenario could not be resolved".into()
            ]));
        };
        Ok(Prepared {
            mu0: GainTable::from_map(r, gains)?,
            topology,
            events,
            signals: self.signals.clone(),
            bounds,
            trigger: ETParams {
                gamma: p.gamma,
                signum: self.signum(),
                agents,
                force_trigger: p.force_trigger,
            },
            z0,
            kappa_floor: init.kappa,
            steps: self.step_count(),
            warnings,
        })
    }
}

/// `compute_beta` on every component with at least one link, maximized.
fn component_beta(bounds: &SignalBounds, topology: &Topology, gamma: f64) -> f64 {
    graph::connected_components(topology)
        .iter()
        .filter(|c| c.len() > 1)
        .filter_map(|c| topology.induced(c).ok())
        .filter_map(|sub| event_triggered::compute_beta(bounds, &sub, gamma).ok())
        .fold(0.0, f64::max)
}

/// Links of the ten-agent benchmark network, 1-based.
pub const BENCHMARK_EDGES: [[usize; 2]; 11] = [
    [1, 2],
    [2, 3],
    [2, 4],
    [3, 4],
    [3, 7],
    [4, 5],
    [4, 6],
    [5, 6],
    [7, 8],
    [8, 9],
    [9, 10],
];

/// Signals of the ten-agent benchmark: agent `i` (1-based) tracks
/// `a_i sin(w_i t + psi_i)` for `i <= 5` and `a_i cos(w_i t + psi_i)`
/// otherwise, with `a_i = (i-1)/2 - 7`, `w_i = (i+1)/4`, `psi_i = 2 pi i/n - pi`.
pub fn benchmark_signals(n: usize) -> Vec<ReferenceSignal> {
    (1..=n)
        .map(|i| {
            let fi = i as f64;
            ReferenceSignal::scalar(Channel::Sinusoid {
                kind: if i <= 5 { Wave::Sin } else { Wave::Cos },
                amplitude: (fi - 1.0) / 2.0 - 7.0,
                omega: (fi + 1.0) / 4.0,
                phase: 2.0 * PI * fi / n as f64 - PI,
            })
        })
        .collect()
}

/// The ten-agent benchmark: link {3,7} is cut at t = 2.5, splitting the
/// network into {1..6} and {7..10}.
pub fn paper_scenario(seed: u64) -> Scenario {
    Scenario {
        agents: 10,
        dimension: 1,
        seed,
        edges: BENCHMARK_EDGES.to_vec(),
        topology_events: vec![EventSpec {
            time: 2.5,
            action: EdgeAction::Remove,
            edge: [3, 7],
        }],
        signals: benchmark_signals(10),
        params: SimParams {
            gamma: 1.0,
            step: 1e-3,
            duration: 5.0,
            record_stride: 1,
            boundary_layer: None,
            force_trigger: false,
        },
        event_triggered: TriggerSettings {
            alpha: PerAgent::Uniform(3.0),
            delta: PerAgent::Uniform(1.5),
            theta: PerAgent::Uniform(0.9),
            beta: BetaSetting::Fixed(PerAgent::Uniform(100.0)),
        },
        bounds: BoundsSetting::Explicit(SignalBounds {
            varphi: 10.0,
            dot_varphi: 20.0,
        }),
        init: InitSettings {
            z: InitialZ::RandomUniform([-1.0, 1.0]),
            eta: 1.0,
            kappa: 10.0,
            kappa_edges: Vec::new(),
        },
    }
}
