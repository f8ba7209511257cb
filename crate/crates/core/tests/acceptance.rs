//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dac_core::export::{self, SERIES_FILE};
use dac_core::graph::{self, DenseMatrix};
use dac_core::harness::{self, RunResult, Simulator};
use dac_core::scenario::paper_scenario;
use dac_core::{GainTable, Scenario, Topology, Variant};

const SEED: u64 = 42;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn event_run() -> &'static RunResult {
    static RUN: OnceLock<RunResult> = OnceLock::new();
    RUN.get_or_init(|| harness::run_variant(&paper_scenario(SEED), Variant::Event).unwrap())
}

fn continuous_run() -> &'static RunResult {
    static RUN: OnceLock<RunResult> = OnceLock::new();
    RUN.get_or_init(|| harness::run_variant(&paper_scenario(SEED), Variant::Continuous).unwrap())
}

fn random_connected(rng: &mut ChaCha8Rng, n: usize) -> Topology {
    let mut edges = BTreeSet::new();
    for v in 1..n {
        edges.insert((rng.random_range(0..v), v));
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    Topology::new(n, edges).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn graph_identities() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut col_sum: f64 = 0.0;
    let mut lap_err: f64 = 0.0;
    let mut proj_err: f64 = 0.0;
    let mut null_space_gap: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let topo = random_connected(&mut rng, n);
        let b = graph::build_incidence(&topo);
        for c in 0..b.cols() {
            let s: f64 = (0..n).map(|r| b[(r, c)]).sum();
            col_sum = col_sum.max(s.abs());
        }
        let l = graph::laplacian(&b);
        let adjacency_form = DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                topo.degree(i) as f64
            } else if topo.has_edge(dac_core::UndirectedEdge::new(i, j).unwrap()) {
                -1.0
            } else {
                0.0
            }
        });
        lap_err = lap_err.max(l.sub(&adjacency_form).unwrap().max_abs());
        let gram = b.transpose().matmul(&b).unwrap();
        let gram_pinv = graph::pseudo_inverse(&gram, graph::DEFAULT_PINV_TOL).unwrap();
        let proj = b
            .matmul(&gram_pinv)
            .unwrap()
            .matmul(&b.transpose())
            .unwrap();
        proj_err = proj_err.max(graph::centering_matrix(n).sub(&proj).unwrap().max_abs());
        let l_pinv = graph::pseudo_inverse(&l, graph::DEFAULT_PINV_TOL).unwrap();
        let llp = l.matmul(&l_pinv).unwrap();
        for _ in 0..5 {
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            x.iter_mut().for_each(|v| *v -= mean);
            let norm2 = dot(&x, &x);
            let gap = (dot(&x, &llp.matvec(&x).unwrap()) - norm2).abs();
            null_space_gap = null_space_gap.max(gap / norm2);
        }
    }
    let elapsed = started.elapsed();
    verdict(
        col_sum == 0.0
            && lap_err == 0.0
            && proj_err < 1e-10
            && null_space_gap < 1e-8
            && elapsed < Duration::from_secs(5),
        format!(
            "max|1^T B|={col_sum:e} max|L-(D-A)|={lap_err:e} max|M-B(B^TB)^+B^T|={proj_err:.3e} \
             max zero-sum gap/|x|^2={null_space_gap:.3e} runtime={:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn zero_sum_decay() -> Verdict {
    let mut scenario = paper_scenario(SEED);
    scenario.topology_events.clear();
    let prepared = scenario.prepare().unwrap();
    let gamma = scenario.params.gamma;
    let h = scenario.params.step;
    let mut worst_step: f64 = 0.0;
    let mut worst_accum: f64 = 0.0;
    for variant in [Variant::Continuous, Variant::Event] {
        let mut sim = Simulator::new(&prepared, variant, h).unwrap();
        let initial = sim.z().sum()[0];
        let mut predicted = initial;
        let mut steps = 0;
        while !sim.is_finished() {
            let before = sim.z().sum()[0];
            sim.advance().unwrap();
            let after = sim.z().sum()[0];
            worst_step = worst_step.max((after - (1.0 - gamma * h) * before).abs());
            predicted *= 1.0 - gamma * h;
            steps += 1;
        }
        assert_eq!(steps, 5000);
        worst_accum = worst_accum.max((sim.z().sum()[0] - predicted).abs());
    }
    verdict(
        worst_step <= 1e-10 && worst_accum <= 1e-10,
        format!(
            "max per-step residual={worst_step:.3e} accumulated over 5000 steps={worst_accum:.3e}"
        ),
    )
}

fn oracle_equivalence() -> Verdict {
    let started = Instant::now();
    let mut scenario = paper_scenario(SEED);
    scenario.params.force_trigger = true;
    let paired = harness::run_both(&scenario).unwrap();
    let elapsed = started.elapsed();
    verdict(
        paired.max_deviation < 1e-12 && elapsed < Duration::from_secs(20),
        format!(
            "max state deviation={:e} runtime={:.2}s",
            paired.max_deviation,
            elapsed.as_secs_f64()
        ),
    )
}

fn convergence() -> Verdict {
    let run = event_run();
    let h = run.step;
    // the split applies at the t = 2.5 boundary
    let pre = run.max_error_between(2.0, 2.5 - 0.5 * h).unwrap();
    let post = run.max_error_between(4.5, 5.0).unwrap();
    verdict(
        pre < 0.1 && post < 0.1,
        format!("max |xtilde| on [2.0,2.5)={pre:.4} on [4.5,5.0]={post:.4} (bound 0.1)"),
    )
}

fn communication_savings() -> Verdict {
    let run = event_run();
    let stats = run.trigger_stats().unwrap();
    let mean = run.mean_trigger_fraction().unwrap();
    let per_agent_ok = stats.iter().all(|s| (0.15..=0.55).contains(&s.fraction));
    let fractions: Vec<String> = stats.iter().map(|s| format!("{:.3}", s.fraction)).collect();
    verdict(
        (0.25..=0.45).contains(&mean) && per_agent_ok,
        format!(
            "mean fraction={mean:.4} (band [0.25,0.45]) per agent=[{}] (band [0.15,0.55])",
            fractions.join(",")
        ),
    )
}

fn trigger_compliance() -> Verdict {
    let mut runs: Vec<RunResult> = vec![event_run().clone()];
    for seed in [1, 7] {
        runs.push(harness::run_variant(&paper_scenario(seed), Variant::Event).unwrap());
    }
    let mut layered = paper_scenario(SEED);
    layered.params.boundary_layer = Some(1e-3);
    runs.push(harness::run_variant(&layered, Variant::Event).unwrap());
    let violations: usize = runs
        .iter()
        .map(|r| r.diagnostics.trigger_law_violations)
        .sum();
    let nonpositive: usize = runs.iter().map(|r| r.diagnostics.eta_nonpositive).sum();
    let min_eta = runs
        .iter()
        .filter_map(|r| r.diagnostics.min_eta)
        .fold(f64::INFINITY, f64::min);
    let recorded_positive = runs
        .iter()
        .flat_map(|r| &r.records)
        .all(|rec| rec.eta.as_ref().is_some_and(|e| e.iter().all(|v| *v > 0.0)));
    verdict(
        violations == 0 && nonpositive == 0 && recorded_positive,
        format!(
            "{} runs: law violations={violations} eta<=0 steps={nonpositive} min eta={min_eta:.3e}",
            runs.len()
        ),
    )
}

fn zeno_proxy() -> Verdict {
    let run = event_run();
    let h = run.step;
    let summary = export::summarize(run);
    let min_gap = summary
        .agents
        .iter()
        .filter_map(|a| a.min_inter_event)
        .fold(f64::INFINITY, f64::min);
    let max_count = summary
        .agents
        .iter()
        .map(|a| a.trigger_count)
        .max()
        .unwrap();
    let reported = summary.agents.len() == 10 && summary.total_triggers.is_some();
    verdict(
        min_gap >= 2.0 * h - 1e-12 && max_count < run.steps && reported,
        format!(
            "min inter-event gap={min_gap:.3e} (need >= {:.0e}) max per-agent count={max_count} steps={} total={}",
            2.0 * h,
            run.steps,
            summary.total_triggers.unwrap_or(0)
        ),
    )
}

fn gain_behavior() -> Verdict {
    let decreases =
        continuous_run().diagnostics.gain_decreases + event_run().diagnostics.gain_decreases;
    let topo = Topology::new(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
    let table = GainTable::uniform(&topo, 3, 1.0);
    let shared = topo.edges().all(|e| {
        let a = table.between(e.low(), e.high()).unwrap();
        let b = table.between(e.high(), e.low()).unwrap();
        std::ptr::eq(a, b)
    });
    verdict(
        decreases == 0 && shared,
        format!("steps with a decreasing gain={decreases} endpoints share storage={shared}"),
    )
}

fn determinism() -> Verdict {
    let write = |scenario: &Scenario| {
        let dir = tempfile::tempdir().unwrap();
        let run = harness::run_variant(scenario, Variant::Event).unwrap();
        export::export(&run, dir.path()).unwrap();
        fs::read(dir.path().join(SERIES_FILE)).unwrap()
    };
    let first = write(&paper_scenario(SEED));
    let second = write(&paper_scenario(SEED));
    verdict(
        first == second && !first.is_empty(),
        format!(
            "series.csv identical={} ({} bytes)",
            first == second,
            first.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("graph identities", graph_identities),
        ("zero-sum decay", zero_sum_decay),
        ("force-trigger equals continuous", oracle_equivalence),
        ("convergence windows", convergence),
        ("communication savings", communication_savings),
        ("trigger-law compliance", trigger_compliance),
        ("zeno proxy", zeno_proxy),
        ("gain behavior", gain_behavior),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{tag}] {name}: {}", k + 1, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
