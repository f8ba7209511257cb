//! Continuous-communication robust dynamic average consensus.
//!
//! Each agent runs
//!
//! ```text
//! z_i' = -gamma z_i - 2 sum_{j in N_i} mu_ij (.) sgn(x_i - x_j)
//! x_i  = z_i + phi_i(t)
//! mu_ij' = |x_i - x_j|
//! ```
//!
//! with one gain vector per undirected link, advanced by explicit Euler.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{Topology, UndirectedEdge};
use crate::signals::{self, ReferenceSignal};
use crate::stacked::AgentVectors;

/// Sign function applied to neighbor disagreements.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Signum {
    /// `sgn(v)` with `sgn(0) = 0`.
    #[default]
    Exact,
    /// `clamp(v / width, -1, 1)`.
    BoundaryLayer(f64),
}

impl Signum {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Signum::Exact => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Signum::BoundaryLayer(width) => (v / width).clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorParams {
    pub gamma: f64,
    pub signum: Signum,
}

impl EstimatorParams {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            signum: Signum::Exact,
        }
    }
}

/// Adaptive gains, one `r`-vector per undirected link.
///
/// Both endpoints of a link read the same entry, so `mu_ij == mu_ji` holds
/// by construction. Entries for links that have been removed stay in the
/// table frozen and resume if the link comes back.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    r: usize,
    gains: BTreeMap<UndirectedEdge, Vec<f64>>,
}

impl GainTable {
    /// Every link of `topology` starts at `floor` in every channel.
    pub fn uniform(topology: &Topology, r: usize, floor: f64) -> Self {
        Self {
            r,
            gains: topology.edges().map(|e| (e, vec![floor; r])).collect(),
        }
    }

    pub fn from_map(r: usize, gains: BTreeMap<UndirectedEdge, Vec<f64>>) -> Result<Self> {
        if let Some((e, g)) = gains.iter().find(|(_, g)| g.len() != r) {
            return Err(Error::Dimension(format!(
                "gain for edge {e} has {} channels, expected {r}",
                g.len()
            )));
        }
        Ok(Self { r, gains })
    }

    pub fn dimension(&self) -> usize {
        self.r
    }

    pub fn get(&self, edge: UndirectedEdge) -> Option<&[f64]> {
        self.gains.get(&edge).map(Vec::as_slice)
    }

    /// Gain seen by agent `i` for its link to `j`.
    pub fn between(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.get(UndirectedEdge::new(i, j).ok()?)
    }

    pub fn iter(&self) -> impl Iterator<Item = (UndirectedEdge, &[f64])> {
        self.gains.iter().map(|(e, g)| (*e, g.as_slice()))
    }

    /// Inserts `floor` gains for links in `topology` that have never been
    /// seen. Frozen entries are left untouched.
    pub fn sync(&mut self, topology: &Topology, floor: f64) {
        for e in topology.edges() {
            self.gains.entry(e).or_insert_with(|| vec![floor; self.r]);
        }
    }

    fn entry_mut(&mut self, edge: UndirectedEdge) -> &mut Vec<f64> {
        self.gains
            .get_mut(&edge)
            .expect("gain table synced with topology")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub t: f64,
    pub z: AgentVectors,
    pub mu: GainTable,
}

impl EstimatorState {
    pub fn new(t: f64, z: AgentVectors, mu: GainTable) -> Result<Self> {
        if z.dimension() != mu.dimension() {
            return Err(Error::Dimension(format!(
                "state has {} channels but gains have {}",
                z.dimension(),
                mu.dimension()
            )));
        }
        Ok(Self { t, z, mu })
    }
}

/// `x = z + phi(t)`.
pub fn output(state: &EstimatorState, phi_t: &AgentVectors) -> Result<AgentVectors> {
    state.z.zip_with(phi_t, |z, p| z + p)
}

/// `(B^T (x) I_r) values`: for each directed edge `i -> j`, in incidence
/// column order, the vector `v_j - v_i`.
pub fn edge_disagreement(values: &AgentVectors, topology: &Topology) -> Vec<Vec<f64>> {
    topology
        .directed_edges()
        .iter()
        .map(|e| {
            values
                .agent(e.destination)
                .iter()
                .zip(values.agent(e.source))
                .map(|(d, s)| d - s)
                .collect()
        })
        .collect()
}

/// `2 sum_{j in N_i} mu_ij (.) sgn(v_i - v_j)` for every agent `i`.
pub fn coupling(
    values: &AgentVectors,
    mu: &GainTable,
    topology: &Topology,
    signum: Signum,
) -> AgentVectors {
    let n = values.agent_count();
    let mut out = AgentVectors::zeros(n, values.dimension());
    for (i, neighbors) in topology.neighbor_lists().iter().enumerate() {
        let acc = out.agent_mut(i);
        for &j in neighbors {
            let gain = mu.between(i, j).expect("gain table synced with topology");
            for c in 0..acc.len() {
                acc[c] += 2.0 * gain[c] * signum.apply(values.agent(i)[c] - values.agent(j)[c]);
            }
        }
    }
    out
}

/// `|v_i - v_j|` per active link.
pub fn gain_rates(
    values: &AgentVectors,
    topology: &Topology,
) -> BTreeMap<UndirectedEdge, Vec<f64>> {
    topology
        .edges()
        .map(|e| {
            let rate = values
                .agent(e.low())
                .iter()
                .zip(values.agent(e.high()))
                .map(|(a, b)| (a - b).abs())
                .collect();
            (e, rate)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub dz: AgentVectors,
    pub dmu: BTreeMap<UndirectedEdge, Vec<f64>>,
}

pub fn state_derivative(
    state: &EstimatorState,
    x: &AgentVectors,
    params: &EstimatorParams,
    topology: &Topology,
) -> Derivative {
    let w = coupling(x, &state.mu, topology, params.signum);
    let dz = state
        .z
        .zip_with(&w, |z, w| -params.gamma * z - w)
        .expect("z and x share a shape");
    Derivative {
        dz,
        dmu: gain_rates(x, topology),
    }
}

/// Euler update of `z` and `mu` in place.
pub(crate) fn apply_euler(
    z: &mut AgentVectors,
    mu: &mut GainTable,
    dz: &AgentVectors,
    dmu: &BTreeMap<UndirectedEdge, Vec<f64>>,
    h: f64,
) {
    *z = z
        .zip_with(dz, |z, d| z + h * d)
        .expect("z and dz share a shape");
    for (edge, rate) in dmu {
        for (g, r) in mu.entry_mut(*edge).iter_mut().zip(rate) {
            *g += h * r;
        }
    }
}

/// One explicit Euler step of length `h` from `state.t`.
pub fn step(
    state: &EstimatorState,
    signals: &[ReferenceSignal],
    params: &EstimatorParams,
    topology: &Topology,
    h: f64,
) -> Result<EstimatorState> {
    let phi = AgentVectors::from_signals(signals, state.t)?;
    let x = output(state, &phi)?;
    Ok(advance(state, &x, params, topology, h))
}

pub(crate) fn advance(
    state: &EstimatorState,
    x: &AgentVectors,
    params: &EstimatorParams,
    topology: &Topology,
    h: f64,
) -> EstimatorState {
    let d = state_derivative(state, x, params, topology);
    let mut next = state.clone();
    apply_euler(&mut next.z, &mut next.mu, &d.dz, &d.dmu, h);
    next.t = state.t + h;
    next
}

/// `x_i - mean_{j in C(i)} phi_j(t)`, where `C(i)` is agent `i`'s component.
pub fn consensus_error(
    x: &AgentVectors,
    signals: &[ReferenceSignal],
    components: &[Vec<usize>],
    t: f64,
) -> Result<AgentVectors> {
    let mut out = x.clone();
    let mut covered = 0;
    for members in components {
        let avg = signals::network_average(signals, t, members)?;
        for &i in members {
            for (o, a) in out.agent_mut(i).iter_mut().zip(&avg) {
                *o -= a;
            }
        }
        covered += members.len();
    }
    if covered != x.agent_count() {
        return Err(Error::Contract(format!(
            "partition covers {covered} of {} agents",
            x.agent_count()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::Channel;

    fn two_nodes() -> Topology {
        Topology::new(2, [(0, 1)]).unwrap()
    }

    fn scalar(values: &[f64]) -> AgentVectors {
        AgentVectors::from_rows(&values.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap()
    }

    fn constants(values: &[f64]) -> Vec<ReferenceSignal> {
        values
            .iter()
            .map(|v| ReferenceSignal::scalar(Channel::Constant { value: *v }))
            .collect()
    }

    #[test]
    fn signum_at_zero_and_boundary_layer() {
        assert_eq!(Signum::Exact.apply(0.0), 0.0);
        assert_eq!(Signum::Exact.apply(-3.0), -1.0);
        assert_eq!(Signum::BoundaryLayer(0.1).apply(0.05), 0.5);
        assert_eq!(Signum::BoundaryLayer(0.1).apply(-2.0), -1.0);
    }

    #[test]
    fn output_adds_signal() {
        let topo = two_nodes();
        let state =
            EstimatorState::new(0.0, scalar(&[0.0, 0.0]), GainTable::uniform(&topo, 1, 1.0))
                .unwrap();
        let phi = scalar(&[1.5, -2.0]);
        assert_eq!(output(&state, &phi).unwrap(), phi);

        let state =
            EstimatorState::new(0.0, scalar(&[0.3, 0.4]), GainTable::uniform(&topo, 1, 1.0))
                .unwrap();
        assert_eq!(
            output(&state, &scalar(&[0.0, 0.0])).unwrap(),
            scalar(&[0.3, 0.4])
        );
        assert!(output(&state, &scalar(&[0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn disagreement_two_nodes() {
        let y = edge_disagreement(&scalar(&[1.0, 3.0]), &two_nodes());
        // column 0 is 1 -> 0, column 1 is 0 -> 1
        assert_eq!(y, vec![vec![-2.0], vec![2.0]]);
        let y = edge_disagreement(&scalar(&[4.0, 4.0]), &two_nodes());
        assert!(y.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn derivative_hand_case() {
        let topo = two_nodes();
        let state =
            EstimatorState::new(0.0, scalar(&[0.0, 0.0]), GainTable::uniform(&topo, 1, 1.0))
                .unwrap();
        let d = state_derivative(
            &state,
            &scalar(&[0.0, 2.0]),
            &EstimatorParams::new(1.0),
            &topo,
        );
        assert_eq!(d.dz, scalar(&[2.0, -2.0]));
        assert_eq!(d.dmu[&UndirectedEdge::new(0, 1).unwrap()], vec![2.0]);
    }

    #[test]
    fn derivative_vanishes_at_consensus() {
        let topo = Topology::new(3, [(0, 1), (1, 2)]).unwrap();
        let state = EstimatorState::new(
            0.0,
            AgentVectors::zeros(3, 2),
            GainTable::uniform(&topo, 2, 1.0),
        )
        .unwrap();
        let x = AgentVectors::from_rows(&vec![vec![1.0, -1.0]; 3]).unwrap();
        let d = state_derivative(&state, &x, &EstimatorParams::new(1.0), &topo);
        assert_eq!(d.dz.max_abs(), 0.0);
        assert!(d.dmu.values().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_derivative_only_advances_time() {
        let topo = two_nodes();
        let mu = GainTable::uniform(&topo, 1, 1.0);
        let state = EstimatorState::new(0.0, scalar(&[0.0, 0.0]), mu).unwrap();
        let next = step(
            &state,
            &constants(&[1.0, 1.0]),
            &EstimatorParams::new(1.0),
            &topo,
            0.01,
        )
        .unwrap();
        assert_eq!(next.z, state.z);
        assert_eq!(next.mu, state.mu);
        assert_eq!(next.t, 0.01);
    }

    #[test]
    fn isolated_agent_decays_like_exponential() {
        let topo = Topology::new(1, []).unwrap();
        let gamma = 1.3;
        let h = 1e-3;
        let mut state =
            EstimatorState::new(0.0, scalar(&[2.0]), GainTable::uniform(&topo, 1, 1.0)).unwrap();
        let signals = constants(&[0.5]);
        for _ in 0..1000 {
            state = step(&state, &signals, &EstimatorParams::new(gamma), &topo, h).unwrap();
        }
        let exact = 2.0 * (-gamma).exp();
        // global Euler error is O(h)
        assert!((state.z.agent(0)[0] - exact).abs() < 2.0 * gamma * gamma * h * exact.max(1.0));
    }

    #[test]
    fn consensus_error_by_component() {
        let signals = constants(&[1.0, 3.0, 10.0]);
        let x = scalar(&[2.0, 2.0, 11.0]);
        let err = consensus_error(&x, &signals, &[vec![0, 1], vec![2]], 0.0).unwrap();
        assert_eq!(err, scalar(&[0.0, 0.0, 1.0]));
        assert!(consensus_error(&x, &signals, &[vec![0, 1]], 0.0).is_err());
    }

    #[test]
    fn gains_are_shared_between_endpoints() {
        let topo = Topology::new(3, [(0, 1), (1, 2)]).unwrap();
        let mut mu = GainTable::uniform(&topo, 1, 1.0);
        mu.entry_mut(UndirectedEdge::new(1, 2).unwrap())[0] = 7.0;
        assert!(std::ptr::eq(
            mu.between(1, 2).unwrap(),
            mu.between(2, 1).unwrap()
        ));
        assert_eq!(mu.between(2, 1).unwrap(), &[7.0]);
    }

    #[test]
    fn sync_keeps_frozen_and_seeds_new() {
        let topo = Topology::new(3, [(0, 1)]).unwrap();
        let mut mu = GainTable::uniform(&topo, 1, 5.0);
        mu.entry_mut(UndirectedEdge::new(0, 1).unwrap())[0] = 6.5;
        let grown = Topology::new(3, [(0, 1), (1, 2)]).unwrap();
        mu.sync(&grown, 2.0);
        assert_eq!(mu.between(0, 1).unwrap(), &[6.5]);
        assert_eq!(mu.between(1, 2).unwrap(), &[2.0]);
    }
}
