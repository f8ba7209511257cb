use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use dac_core::graph::DenseMatrix;
use dac_core::scenario::{benchmark_signals, BENCHMARK_EDGES};
use dac_core::signals::{self, BOUND_SAFETY_FACTOR};
use dac_core::{AgentVectors, Channel, ReferenceSignal, Topology, Wave};

fn channel() -> impl Strategy<Value = Channel> {
    prop_oneof![
        (any::<bool>(), -10.0f64..10.0, 0.1f64..3.0, -3.2f64..3.2).prop_map(
            |(s, amplitude, omega, phase)| {
                Channel::Sinusoid {
                    kind: if s { Wave::Sin } else { Wave::Cos },
                    amplitude,
                    omega,
                    phase,
                }
            }
        ),
        (-5.0f64..5.0).prop_map(|value| Channel::Constant { value }),
        proptest::collection::vec(-2.0f64..2.0, 1..4)
            .prop_map(|coefficients| Channel::Polynomial { coefficients }),
    ]
}

fn benchmark_topology() -> Topology {
    Topology::new(10, BENCHMARK_EDGES.iter().map(|[a, b]| (a - 1, b - 1))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rate_matches_central_difference(c in channel(), t in 0.0f64..5.0) {
        let d = 1e-6;
        let numeric = (c.value(t + d) - c.value(t - d)) / (2.0 * d);
        prop_assert!((numeric - c.rate(t)).abs() < 1e-5 * (1.0 + c.rate(t).abs()));
    }

    #[test]
    fn average_matches_stacked_product(
        channels in proptest::collection::vec(channel(), 6),
        t in 0.0f64..5.0,
    ) {
        // three agents, two channels each
        let sigs: Vec<ReferenceSignal> =
            channels.chunks(2).map(|c| ReferenceSignal::new(c.to_vec()).unwrap()).collect();
        let (n, r) = (3, 2);
        let stacked: Vec<f64> = sigs.iter().flat_map(|s| signals::evaluate(s, t)).collect();
        let averaging = DenseMatrix::from_fn(r, n * r, |i, j| if j % r == i { 1.0 / n as f64 } else { 0.0 });
        let expected = averaging.matvec(&stacked).unwrap();
        let got = signals::network_average(&sigs, t, &[0, 1, 2]).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            prop_assert!((g - e).abs() < 1e-12);
        }
    }
}

#[test]
fn benchmark_average_at_zero() {
    // numpy oracle
    let avg = signals::network_average(&benchmark_signals(10), 0.0, &(0..10).collect::<Vec<_>>())
        .unwrap();
    assert_abs_diff_eq!(avg[0], 2.0367488118595443, epsilon = 1e-12);
}

#[test]
fn benchmark_edge_bound() {
    let b = signals::estimate_edge_bounds(&benchmark_signals(10), &benchmark_topology(), 5.0, 1e-3);
    let raw = b.varphi / BOUND_SAFETY_FACTOR;
    // numpy oracle on the same grid
    assert_abs_diff_eq!(raw, 11.856300981598977, epsilon = 1e-9);
    // two largest amplitudes are 7 and 6.5
    assert!(raw <= 13.5);
}

#[test]
fn bounds_grow_under_nested_refinement() {
    let sigs = benchmark_signals(10);
    let topo = benchmark_topology();
    let coarse = signals::estimate_edge_bounds(&sigs, &topo, 5.0, 0.04);
    let mid = signals::estimate_edge_bounds(&sigs, &topo, 5.0, 0.02);
    let fine = signals::estimate_edge_bounds(&sigs, &topo, 5.0, 0.01);
    assert!(coarse.varphi <= mid.varphi && mid.varphi <= fine.varphi);
    assert!(coarse.dot_varphi <= mid.dot_varphi && mid.dot_varphi <= fine.dot_varphi);
}

#[test]
fn stacked_signals_follow_agent_order() {
    let sigs = benchmark_signals(10);
    let phi = AgentVectors::from_signals(&sigs, 1.3).unwrap();
    for (i, s) in sigs.iter().enumerate() {
        assert_eq!(phi.agent(i), signals::evaluate(s, 1.3).as_slice());
    }
}
