//! Event-triggered variant of the consensus estimator.
//!
//! Agents only exchange their last broadcast value `xhat_i`. Agent `i`
//! broadcasts again when
//!
//! ```text
//! theta_i (beta_i 1^T |eps_i| - w_i^T eps_i) >= eta_i,    eps_i = x_i - xhat_i
//! ```
//!
//! where `eta_i` follows
//! `eta_i' = -alpha_i eta_i - delta_i (beta_i 1^T |eps_i| - w_i^T eps_i)`.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use crate::error::{Error, Result};
use crate::estimator::{self, GainTable, Signum};
use crate::graph::{self, Topology};
use crate::signals::{ReferenceSignal, SignalBounds};
use crate::stacked::AgentVectors;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentTriggerParams {
    pub alpha: f64,
    pub delta: f64,
    pub theta: f64,
    pub beta: f64,
    pub eta_init: f64,
}

impl AgentTriggerParams {
    /// Violations of the parameter constraints, one message each.
    pub fn violations(&self, agent: usize) -> Vec<String> {
        let a = agent + 1;
        let mut out = Vec::new();
        if !(self.alpha > 0.0) {
            out.push(format!("agent {a}: alpha must be > 0 (got {})", self.alpha));
        }
        if !(self.delta >= 1.0) {
            out.push(format!(
                "agent {a}: delta must be >= 1 (got {})",
                self.delta
            ));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            out.push(format!(
                "agent {a}: theta must be in (0,1) (got {})",
                self.theta
            ));
        }
        if !(self.beta > 0.0) {
            out.push(format!("agent {a}: beta must be > 0 (got {})", self.beta));
        }
        if !(self.eta_init > 0.0) {
            out.push(format!(
                "agent {a}: eta init must be > 0 (got {})",
                self.eta_init
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ETParams {
    pub gamma: f64,
    pub signum: Signum,
    pub agents: Vec<AgentTriggerParams>,
    /// Broadcast every agent at every step regardless of the trigger law.
    pub force_trigger: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ETState {
    pub t: f64,
    pub z: AgentVectors,
    pub mu: GainTable,
    pub xhat: AgentVectors,
    pub eta: Vec<f64>,
    pub trigger_log: Vec<Vec<f64>>,
}

impl ETState {
    /// Initial state at `t0`: every agent broadcasts `x_i(t0)`.
    pub fn start(
        t0: f64,
        z: AgentVectors,
        mu: GainTable,
        phi_t0: &AgentVectors,
        params: &ETParams,
    ) -> Result<Self> {
        let n = z.agent_count();
        if params.agents.len() != n {
            return Err(Error::Dimension(format!(
                "{} agents but {} trigger parameter sets",
                n,
                params.agents.len()
            )));
        }
        if z.dimension() != mu.dimension() {
            return Err(Error::Dimension("state and gain dimensions differ".into()));
        }
        let xhat = z.zip_with(phi_t0, |z, p| z + p)?;
        Ok(Self {
            t: t0,
            z,
            mu,
            xhat,
            eta: params.agents.iter().map(|p| p.eta_init).collect(),
            trigger_log: vec![vec![t0]; n],
        })
    }

    pub fn measurement_error(&self, x: &AgentVectors) -> AgentVectors {
        x.zip_with(&self.xhat, |x, xh| x - xh)
            .expect("x and xhat share a shape")
    }
}

/// `(B^T (x) I_r) xhat`.
pub fn broadcast_disagreement(xhat: &AgentVectors, topology: &Topology) -> Vec<Vec<f64>> {
    estimator::edge_disagreement(xhat, topology)
}

/// `w_i = 2 sum_{j in N_i} mu_ij (.) sgn(xhat_i - xhat_j)`.
pub fn control_term(state: &ETState, topology: &Topology, signum: Signum) -> AgentVectors {
    estimator::coupling(&state.xhat, &state.mu, topology, signum)
}

/// `beta 1^T |eps| - w^T eps`.
pub fn trigger_functional(eps: &[f64], w: &[f64], beta: f64) -> f64 {
    let l1: f64 = eps.iter().map(|e| e.abs()).sum();
    let inner: f64 = eps.iter().zip(w).map(|(e, w)| e * w).sum();
    beta * l1 - inner
}

pub fn eta_derivative(eta: f64, eps: &[f64], w: &[f64], params: &AgentTriggerParams) -> f64 {
    -params.alpha * eta - params.delta * trigger_functional(eps, w, params.beta)
}

fn violates(
    state: &ETState,
    i: usize,
    x: &AgentVectors,
    w: &AgentVectors,
    p: &AgentTriggerParams,
) -> bool {
    let eps: Vec<f64> = x
        .agent(i)
        .iter()
        .zip(state.xhat.agent(i))
        .map(|(a, b)| a - b)
        .collect();
    p.theta * trigger_functional(&eps, w.agent(i), p.beta) >= state.eta[i]
}

/// Applies the trigger law at `state.t`.
///
/// The first sweep checks every agent against the broadcasts held at the
/// start of the instant and fires all violators together. A broadcast
/// changes its neighbors' `w`, so the sweep repeats over agents that have not
/// fired yet until nobody new violates the law. Fired agents have
/// `eps_i = 0` and cannot violate it again at this instant. An agent
/// broadcasts at most once per instant.
pub fn check_and_fire(
    state: &ETState,
    x: &AgentVectors,
    params: &ETParams,
    topology: &Topology,
) -> (ETState, Vec<usize>) {
    let n = x.agent_count();
    let mut next = state.clone();
    let mut fired = vec![false; n];
    loop {
        let w = control_term(&next, topology, params.signum);
        let round: Vec<usize> = (0..n)
            .filter(|&i| !fired[i] && next.trigger_log[i].last() != Some(&state.t))
            .filter(|&i| params.force_trigger || violates(&next, i, x, &w, &params.agents[i]))
            .collect();
        if round.is_empty() {
            break;
        }
        for &i in &round {
            next.xhat.agent_mut(i).copy_from_slice(x.agent(i));
            next.trigger_log[i].push(state.t);
            fired[i] = true;
        }
    }
    let list = (0..n).filter(|&i| fired[i]).collect();
    (next, list)
}

/// `beta >= (gamma varphi + dot_varphi) ||B (B^T B)^+||_inf`, returned with equality.
pub fn compute_beta(bounds: &SignalBounds, topology: &Topology, gamma: f64) -> Result<f64> {
    let norm = graph::gain_norm_bound(topology)?;
    Ok((gamma * bounds.varphi + bounds.dot_varphi) * norm)
}

/// Per-step observables of [`step_et`], all taken at the step's start time
/// after triggering.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x: AgentVectors,
    pub fired: Vec<usize>,
    pub w: AgentVectors,
    /// `beta_i 1^T |eps_i| - w_i^T eps_i` with post-fire `eps` and `w`.
    pub functional: Vec<f64>,
}

/// Trigger check followed by one Euler step of length `h`.
pub fn step_et(
    state: &ETState,
    signals: &[ReferenceSignal],
    params: &ETParams,
    topology: &Topology,
    h: f64,
) -> Result<(ETState, StepOutcome)> {
    let phi = AgentVectors::from_signals(signals, state.t)?;
    let x = state.z.zip_with(&phi, |z, p| z + p)?;
    Ok(advance(state, x, params, topology, h))
}

pub(crate) fn advance(
    state: &ETState,
    x: AgentVectors,
    params: &ETParams,
    topology: &Topology,
    h: f64,
) -> (ETState, StepOutcome) {
    let (mut next, fired) = check_and_fire(state, &x, params, topology);
    let w = control_term(&next, topology, params.signum);
    let eps = next.measurement_error(&x);
    let functional: Vec<f64> = (0..x.agent_count())
        .map(|i| trigger_functional(eps.agent(i), w.agent(i), params.agents[i].beta))
        .collect();

    let dz = next
        .z
        .zip_with(&w, |z, w| -params.gamma * z - w)
        .expect("z and w share a shape");
    let dmu = estimator::gain_rates(&next.xhat, topology);
    estimator::apply_euler(&mut next.z, &mut next.mu, &dz, &dmu, h);
    for (i, eta) in next.eta.iter_mut().enumerate() {
        let p = &params.agents[i];
        *eta += h * (-p.alpha * *eta - p.delta * functional[i]);
    }
    next.t = state.t + h;
    (
        next,
        StepOutcome {
            x,
            fired,
            w,
            functional,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerStats {
    pub count: usize,
    pub fraction: f64,
    /// `None` when the agent broadcast fewer than twice.
    pub min_inter_event: Option<f64>,
}

/// Counts, fraction of the `duration / h` sampling instants, and the
/// smallest gap between consecutive broadcasts, per agent.
pub fn trigger_statistics(log: &[Vec<f64>], duration: f64, h: f64) -> Vec<TriggerStats> {
    let instants = duration / h;
    log.iter()
        .map(|times| TriggerStats {
            count: times.len(),
            fraction: (times.len() as f64 / instants).min(1.0),
            min_inter_event: times
                .windows(2)
                .map(|w| w[1] - w[0])
                .min_by(|a, b| a.total_cmp(b)),
        })
        .collect()
}
