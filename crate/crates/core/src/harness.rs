//! Lockstep simulation driver for both estimator variants, with topology
//! events, consensus-error bookkeeping and Lyapunov-style diagnostics.

use serde::Serialize;

use crate::error::Result;
use crate::estimator::{self, EstimatorParams, EstimatorState, GainTable};
use crate::event_triggered::{self, ETParams, ETState, TriggerStats};
use crate::graph::{self, DenseMatrix, Topology, DEFAULT_PINV_TOL};
use crate::scenario::{Prepared, Scenario};
use crate::signals::{ReferenceSignal, SignalBounds};
use crate::stacked::AgentVectors;

/// Length of the trailing window used for the steady-state error metric.
pub const TRAILING_WINDOW: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Continuous,
    Event,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Continuous,
    Event,
}

/// Per-component matrices needed by [`lyapunov_diagnostic`].
#[derive(Debug, Clone)]
struct ComponentAlgebra {
    /// Directed edges in global agent indices, in incidence column order.
    edges: Vec<(usize, usize)>,
    gram_pinv: DenseMatrix,
    gram_pinv_norm: f64,
}

/// Cached algebra for evaluating the Lyapunov candidate on one topology.
#[derive(Debug, Clone)]
pub struct LyapunovAlgebra {
    components: Vec<ComponentAlgebra>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovValue {
    /// `1/2 xi^T ((B^T B)^+ (x) I_r) xi` with `xi = (B^T (x) I_r) x`.
    pub quadratic: f64,
    /// Quadratic term plus `1/2 sum_{i,j} |mu_ij - mu*|^2`.
    pub total: f64,
}

impl LyapunovAlgebra {
    pub fn new(topology: &Topology) -> Self {
        let components = graph::connected_components(topology)
            .into_iter()
            .filter(|c| c.len() > 1)
            .map(|members| {
                let sub = topology
                    .induced(&members)
                    .expect("members come from the topology");
                let b = graph::build_incidence(&sub);
                let gram = b.transpose().matmul(&b).expect("B^T and B conform");
                let gram_pinv = graph::pseudo_inverse(&gram, DEFAULT_PINV_TOL)
                    .expect("gram matrix is symmetric");
                ComponentAlgebra {
                    edges: sub
                        .directed_edges()
                        .iter()
                        .map(|e| (members[e.source], members[e.destination]))
                        .collect(),
                    gram_pinv_norm: gram_pinv.max_row_sum(),
                    gram_pinv,
                }
            })
            .collect();
        Self { components }
    }

    pub fn evaluate(
        &self,
        x: &AgentVectors,
        mu: &GainTable,
        bounds: &SignalBounds,
        gamma: f64,
    ) -> LyapunovValue {
        let r = x.dimension();
        let drive = gamma * bounds.varphi + bounds.dot_varphi;
        let mut quadratic = 0.0;
        let mut gain_term = 0.0;
        for comp in &self.components {
            let mu_star = drive * comp.gram_pinv_norm;
            for c in 0..r {
                let xi: Vec<f64> = comp
                    .edges
                    .iter()
                    .map(|&(s, d)| x.agent(d)[c] - x.agent(s)[c])
                    .collect();
                let p = comp
                    .gram_pinv
                    .matvec(&xi)
                    .expect("xi has one entry per column");
                quadratic += 0.5 * xi.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>();
            }
            // both orientations of every link
            for &(s, d) in &comp.edges {
                let g = mu.between(s, d).expect("gain table synced with topology");
                gain_term += 0.5 * g.iter().map(|v| (v - mu_star).powi(2)).sum::<f64>();
            }
        }
        LyapunovValue {
            quadratic,
            total: quadratic + gain_term,
        }
    }
}

/// `V = 1/2 xi^T ((B^T B)^+ (x) I_r) xi + 1/2 sum |mu_ij - mu*|^2`, summed
/// over connected components, with `mu* = (gamma varphi + dot_varphi)
/// ||(B^T B)^+||_inf` per component.
pub fn lyapunov_diagnostic(
    x: &AgentVectors,
    mu: &GainTable,
    topology: &Topology,
    bounds: &SignalBounds,
    gamma: f64,
) -> LyapunovValue {
    LyapunovAlgebra::new(topology).evaluate(x, mu, bounds, gamma)
}

#[derive(Debug, Clone)]
enum Engine {
    Continuous(EstimatorState, EstimatorParams),
    Event(ETState, ETParams),
}

/// What happened at one sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Instant {
    pub step: usize,
    pub t: f64,
    pub x: AgentVectors,
    /// Agents that broadcast at this instant. Empty in continuous mode.
    pub fired: Vec<usize>,
    /// Post-fire `theta_i * functional_i - eta_i`; must be `<= 0`.
    pub trigger_margin: Vec<f64>,
}

/// Step-by-step simulator over a prepared scenario.
#[derive(Debug, Clone)]
pub struct Simulator {
    engine: Engine,
    topology: Topology,
    pending: Vec<graph::TopologyEvent>,
    signals: Vec<ReferenceSignal>,
    kappa_floor: f64,
    h: f64,
    step: usize,
    steps: usize,
    components: Vec<Vec<usize>>,
    lyapunov: LyapunovAlgebra,
    topology_epoch: usize,
}

impl Simulator {
    pub fn new(prepared: &Prepared, variant: Variant, h: f64) -> Result<Self> {
        let engine = match variant {
            Variant::Continuous => Engine::Continuous(
                EstimatorState::new(0.0, prepared.z0.clone(), prepared.mu0.clone())?,
                EstimatorParams {
                    gamma: prepared.trigger.gamma,
                    signum: prepared.trigger.signum,
                },
            ),
            Variant::Event => {
                let phi0 = AgentVectors::from_signals(&prepared.signals, 0.0)?;
                Engine::Event(
                    ETState::start(
                        0.0,
                        prepared.z0.clone(),
                        prepared.mu0.clone(),
                        &phi0,
                        &prepared.trigger,
                    )?,
                    prepared.trigger.clone(),
                )
            }
        };
        let mut pending = prepared.events.clone();
        pending.reverse();
        Ok(Self {
            engine,
            components: graph::connected_components(&prepared.topology),
            lyapunov: LyapunovAlgebra::new(&prepared.topology),
            topology: prepared.topology.clone(),
            pending,
            signals: prepared.signals.clone(),
            kappa_floor: prepared.kappa_floor,
            h,
            step: 0,
            steps: prepared.steps,
            topology_epoch: 0,
        })
    }

    pub fn t(&self) -> f64 {
        match &self.engine {
            Engine::Continuous(s, _) => s.t,
            Engine::Event(s, _) => s.t,
        }
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.steps
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.steps
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Increments every time a topology event is applied.
    pub fn topology_epoch(&self) -> usize {
        self.topology_epoch
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn z(&self) -> &AgentVectors {
        match &self.engine {
            Engine::Continuous(s, _) => &s.z,
            Engine::Event(s, _) => &s.z,
        }
    }

    pub fn mu(&self) -> &GainTable {
        match &self.engine {
            Engine::Continuous(s, _) => &s.mu,
            Engine::Event(s, _) => &s.mu,
        }
    }

    pub fn event_state(&self) -> Option<&ETState> {
        match &self.engine {
            Engine::Event(s, _) => Some(s),
            Engine::Continuous(..) => None,
        }
    }

    pub fn signals(&self) -> &[ReferenceSignal] {
        &self.signals
    }

    /// Applies every pending event due at the current step boundary.
    pub fn apply_due_events(&mut self) -> Result<()> {
        let t = self.t();
        let mut changed = false;
        while let Some(ev) = self.pending.last() {
            if t < ev.time - 1e-9 * self.h {
                break;
            }
            let ev = self.pending.pop().expect("peeked");
            self.topology.apply(&ev)?;
            changed = true;
        }
        if changed {
            let floor = self.kappa_floor;
            match &mut self.engine {
                Engine::Continuous(s, _) => s.mu.sync(&self.topology, floor),
                Engine::Event(s, _) => s.mu.sync(&self.topology, floor),
            }
            self.components = graph::connected_components(&self.topology);
            self.lyapunov = LyapunovAlgebra::new(&self.topology);
            self.topology_epoch += 1;
        }
        Ok(())
    }

    fn current_x(&self) -> Result<AgentVectors> {
        let phi = AgentVectors::from_signals(&self.signals, self.t())?;
        self.z().zip_with(&phi, |z, p| z + p)
    }

    /// Applies due topology events, then (event mode) the trigger law, then
    /// one Euler step.
    pub fn advance(&mut self) -> Result<Instant> {
        self.apply_due_events()?;
        let x = self.current_x()?;
        let t = self.t();
        let step = self.step;
        let (fired, margin) = match &mut self.engine {
            Engine::Continuous(s, p) => {
                *s = estimator::advance(s, &x, p, &self.topology, self.h);
                (Vec::new(), Vec::new())
            }
            Engine::Event(s, p) => {
                let eta_before: Vec<f64> = s.eta.clone();
                let (next, out) = event_triggered::advance(s, x.clone(), p, &self.topology, self.h);
                *s = next;
                let margin = out
                    .functional
                    .iter()
                    .zip(&p.agents)
                    .zip(&eta_before)
                    .map(|((f, a), eta)| a.theta * f - eta)
                    .collect();
                (out.fired, margin)
            }
        };
        self.step += 1;
        // sample times are k h, not a running sum
        let t_next = self.step as f64 * self.h;
        match &mut self.engine {
            Engine::Continuous(s, _) => s.t = t_next,
            Engine::Event(s, _) => s.t = t_next,
        }
        Ok(Instant {
            step,
            t,
            x,
            fired,
            trigger_margin: margin,
        })
    }

    /// Observables at the current instant without stepping.
    pub fn observe(&mut self) -> Result<Instant> {
        self.apply_due_events()?;
        Ok(Instant {
            step: self.step,
            t: self.t(),
            x: self.current_x()?,
            fired: Vec::new(),
            trigger_margin: Vec::new(),
        })
    }

    pub fn consensus_error(&self, x: &AgentVectors, t: f64) -> Result<AgentVectors> {
        estimator::consensus_error(x, &self.signals, &self.components, t)
    }

    pub fn lyapunov(&self, x: &AgentVectors, bounds: &SignalBounds, gamma: f64) -> LyapunovValue {
        self.lyapunov.evaluate(x, self.mu(), bounds, gamma)
    }
}

/// One recorded sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub x: AgentVectors,
    pub xtilde: AgentVectors,
    /// Event mode only.
    pub eta: Option<Vec<f64>>,
    pub triggered: Vec<bool>,
    pub cumulative_triggers: Vec<usize>,
    pub lyapunov: LyapunovValue,
}

/// Run-wide checks gathered while stepping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Instants where `theta_i functional_i > eta_i` after triggering.
    pub trigger_law_violations: usize,
    /// Instants where some `eta_i <= 0`.
    pub eta_nonpositive: usize,
    pub min_eta: Option<f64>,
    /// Steps where some gain entry decreased.
    pub gain_decreases: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub variant: Variant,
    pub scenario: Scenario,
    pub step: f64,
    pub duration: f64,
    pub steps: usize,
    pub records: Vec<Record>,
    /// Broadcast times per agent (event mode).
    pub trigger_log: Option<Vec<Vec<f64>>>,
    pub diagnostics: Diagnostics,
}

impl RunResult {
    pub fn trigger_stats(&self) -> Option<Vec<TriggerStats>> {
        self.trigger_log
            .as_ref()
            .map(|log| event_triggered::trigger_statistics(log, self.duration, self.step))
    }

    /// `max_i ||xtilde_i||_inf` over records with `from <= t <= to`.
    pub fn max_error_between(&self, from: f64, to: f64) -> Option<f64> {
        self.records
            .iter()
            .filter(|r| r.t >= from - 1e-9 && r.t <= to + 1e-9)
            .map(|r| r.xtilde.max_abs())
            .reduce(f64::max)
    }

    /// Error metric over the last [`TRAILING_WINDOW`] seconds.
    pub fn trailing_error(&self) -> Option<f64> {
        let end = self.records.last()?.t;
        self.max_error_between(end - TRAILING_WINDOW, end)
    }

    pub fn mean_trigger_fraction(&self) -> Option<f64> {
        let stats = self.trigger_stats()?;
        Some(stats.iter().map(|s| s.fraction).sum::<f64>() / stats.len() as f64)
    }
}

/// Result of a `both` run: the two variants from identical initial
/// conditions, and their largest per-step state difference.
#[derive(Debug, Clone)]
pub struct PairedResult {
    pub continuous: RunResult,
    pub event: RunResult,
    pub max_deviation: f64,
}

struct Recorder {
    variant: Variant,
    stride: usize,
    bounds: SignalBounds,
    gamma: f64,
    records: Vec<Record>,
    cumulative: Vec<usize>,
    diagnostics: Diagnostics,
    previous_mu: Option<GainTable>,
}

impl Recorder {
    fn new(variant: Variant, n: usize, stride: usize, prepared: &Prepared) -> Self {
        Self {
            variant,
            stride,
            bounds: prepared.bounds,
            gamma: prepared.trigger.gamma,
            records: Vec::new(),
            cumulative: vec![0; n],
            diagnostics: Diagnostics {
                trigger_law_violations: 0,
                eta_nonpositive: 0,
                min_eta: None,
                gain_decreases: 0,
            },
            previous_mu: None,
        }
    }

    /// `eta` and `mu` are the values at `inst.t` (before the step).
    fn observe(
        &mut self,
        sim: &Simulator,
        inst: &Instant,
        eta: Option<Vec<f64>>,
        mu: &GainTable,
    ) -> Result<()> {
        let n = inst.x.agent_count();
        let mut triggered = vec![self.variant == Variant::Continuous; n];
        for &i in &inst.fired {
            triggered[i] = true;
            self.cumulative[i] += 1;
        }
        if inst.trigger_margin.iter().any(|m| *m > 0.0) {
            self.diagnostics.trigger_law_violations += 1;
        }
        if let Some(eta) = &eta {
            if eta.iter().any(|v| *v <= 0.0) {
                self.diagnostics.eta_nonpositive += 1;
            }
            let m = eta.iter().copied().fold(f64::INFINITY, f64::min);
            self.diagnostics.min_eta = Some(self.diagnostics.min_eta.map_or(m, |p| p.min(m)));
        }
        if let Some(prev) = &self.previous_mu {
            let decreased = prev.iter().any(|(e, old)| {
                mu.get(e)
                    .is_some_and(|new| new.iter().zip(old).any(|(a, b)| a < b))
            });
            if decreased {
                self.diagnostics.gain_decreases += 1;
            }
        }
        self.previous_mu = Some(mu.clone());
        if inst.step.is_multiple_of(self.stride) {
            self.records.push(Record {
                t: inst.t,
                xtilde: sim.consensus_error(&inst.x, inst.t)?,
                lyapunov: sim.lyapunov.evaluate(&inst.x, mu, &self.bounds, self.gamma),
                x: inst.x.clone(),
                eta,
                triggered,
                cumulative_triggers: self.cumulative.clone(),
            });
        }
        Ok(())
    }
}

struct Runner {
    sim: Simulator,
    recorder: Recorder,
}

impl Runner {
    fn new(prepared: &Prepared, variant: Variant, scenario: &Scenario) -> Result<Self> {
        let sim = Simulator::new(prepared, variant, scenario.params.step)?;
        let recorder = Recorder::new(
            variant,
            scenario.agents,
            scenario.params.record_stride,
            prepared,
        );
        Ok(Self { sim, recorder })
    }

    fn tick(&mut self) -> Result<()> {
        self.sim.apply_due_events()?;
        let eta = self.sim.event_state().map(|s| s.eta.clone());
        let mu = self.sim.mu().clone();
        let mut inst = if self.sim.is_finished() {
            self.sim.observe()?
        } else {
            self.sim.advance()?
        };
        if inst.step == 0 && self.recorder.variant == Variant::Event {
            // the initial broadcast happens in ETState::start
            inst.fired = (0..inst.x.agent_count()).collect();
        }
        self.recorder.observe(&self.sim, &inst, eta, &mu)
    }

    fn finish(self, scenario: &Scenario) -> RunResult {
        let trigger_log = self.sim.event_state().map(|s| s.trigger_log.clone());
        RunResult {
            variant: self.recorder.variant,
            scenario: scenario.clone(),
            step: scenario.params.step,
            duration: scenario.params.duration,
            steps: self.sim.total_steps(),
            records: self.recorder.records,
            trigger_log,
            diagnostics: self.recorder.diagnostics,
        }
    }
}

fn state_deviation(a: &Simulator, b: &Simulator) -> f64 {
    let mut dev = a.z().max_abs_diff(b.z());
    for (e, g) in a.mu().iter() {
        if let Some(h) = b.mu().get(e) {
            dev = g.iter().zip(h).fold(dev, |m, (x, y)| m.max((x - y).abs()));
        }
    }
    dev
}

/// Runs one variant of `scenario` from start to finish.
pub fn run_variant(scenario: &Scenario, variant: Variant) -> Result<RunResult> {
    let prepared = scenario.prepare()?;
    let mut runner = Runner::new(&prepared, variant, scenario)?;
    for _ in 0..=prepared.steps {
        runner.tick()?;
    }
    Ok(runner.finish(scenario))
}

/// Runs both variants in lockstep from the same initial conditions.
pub fn run_both(scenario: &Scenario) -> Result<PairedResult> {
    let prepared = scenario.prepare()?;
    let mut cont = Runner::new(&prepared, Variant::Continuous, scenario)?;
    let mut event = Runner::new(&prepared, Variant::Event, scenario)?;
    let mut max_deviation: f64 = 0.0;
    for _ in 0..=prepared.steps {
        cont.tick()?;
        event.tick()?;
        max_deviation = max_deviation.max(state_deviation(&cont.sim, &event.sim));
    }
    Ok(PairedResult {
        continuous: cont.finish(scenario),
        event: event.finish(scenario),
        max_deviation,
    })
}

// built once per run
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Outcome {
    Single(RunResult),
    Paired(PairedResult),
}

pub fn run(scenario: &Scenario, mode: Mode) -> Result<Outcome> {
    match mode {
        Mode::Continuous => run_variant(scenario, Variant::Continuous).map(Outcome::Single),
        Mode::Event => run_variant(scenario, Variant::Event).map(Outcome::Single),
        Mode::Both => run_both(scenario).map(Outcome::Paired),
    }
}

impl From<Variant> for Mode {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Continuous => Mode::Continuous,
            Variant::Event => Mode::Event,
        }
    }
}
