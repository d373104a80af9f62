mod oracle;

use std::sync::Arc;

use cfbound::graph::parse_graph;
use cfbound::measures::parse_measure;
use cfbound::parallel::Execution;
use cfbound::sampler::{convergence_trace, run_chain, SamplerConfig, TraceTarget};
use cfbound::synth::{coverage_experiment, generate_scm, ground_truth, simulate_dataset, SynthSpec, CONFOUNDED_ANALYSIS};
use oracle::Oracle;

#[test]
fn simulated_joint_matches_model() {
    let spec = SynthSpec::mediation(1, 1, 17);
    let mut rng = spec.rng(0);
    let scm = generate_scm(spec.skeleton.clone(), 4, &mut rng).unwrap();
    const N: usize = 1_000_000;
    let data = simulate_dataset(&scm, N, &mut rng).unwrap();

    let oracle = Oracle::new(&scm);
    let g = scm.graph();
    let mut want = [0.0; 16];
    for (u, p) in oracle.units() {
        let key = (0..4).fold(0, |k, v| k | (usize::from(oracle.factual(v, &u)) << g.schema_var(v)));
        want[key] += p;
    }
    let mut got = [0usize; 16];
    for row in data.rows() {
        got[row.iter().enumerate().fold(0, |k, (i, &x)| k | (usize::from(x) << i))] += 1;
    }
    for (cell, &p) in want.iter().enumerate() {
        let f = got[cell] as f64 / N as f64;
        let se = (p * (1.0 - p) / N as f64).sqrt();
        assert!((f - p).abs() <= 4.0 * se + 1e-12, "cell {cell}: {f} vs {p}");
    }
}

#[test]
fn ground_truth_agrees_with_enumeration() {
    let spec = SynthSpec::mediation(1, 1, 2);
    let g = spec.skeleton.clone();
    let texts = [
        "DE(a0=0,a1=1,y=1|a=0)",
        "IE(a0=0,a1=1,y=1|a=0)",
        "SE(a0=0,a1=1,y=1)",
        "TV(a0=0,a1=1,y=1)",
        "CE(a0=0,a1=1,y=1|a=1,Z=0,W=1)",
    ];
    for r in 0..20 {
        let scm = generate_scm(g.clone(), 4, &mut spec.rng(r)).unwrap();
        let oracle = Oracle::new(&scm);
        for t in texts {
            let q = parse_measure(t, &g, "A", "Y").unwrap();
            match (ground_truth(&scm, &q), oracle.measure(&q)) {
                (Ok(got), Some(want)) => assert!((got - want).abs() <= 1e-12, "{t} replication {r}"),
                (Err(_), None) => {}
                (got, want) => panic!("{t} replication {r}: {got:?} vs {want:?}"),
            }
        }
    }
}

#[test]
fn chain_reproduces_observational_conditional() {
    let spec = SynthSpec::mediation(50_000, 1, 8);
    let mut rng = spec.rng(0);
    let scm = generate_scm(spec.skeleton.clone(), 4, &mut rng).unwrap();
    let data = simulate_dataset(&scm, spec.records, &mut rng).unwrap();
    let g = Arc::new(parse_graph(CONFOUNDED_ANALYSIS, spec.skeleton.schema().clone()).unwrap());
    let target = TraceTarget { attribute: g.node("A").unwrap(), outcome: g.node("Y").unwrap(), a: 0, y: 1 };
    let cfg = SamplerConfig { burn_in: 100, samples: 100, seed: 1, trace: Some(target), ..Default::default() };
    let out = run_chain(&data, g.clone(), &[], &cfg).unwrap();
    let summary = convergence_trace(&out, &data, &g, &target, 0.02).unwrap().unwrap();
    assert!(summary.converged, "{summary:?}");
}

#[test]
fn zero_delta_coverage_dominates() {
    let spec = SynthSpec::mediation(500, 4, 31);
    let g = Arc::new(parse_graph(CONFOUNDED_ANALYSIS, spec.skeleton.schema().clone()).unwrap());
    let queries: Vec<_> = ["DE(a0=0,a1=1,y=1|a=0)", "IE(a0=0,a1=1,y=1|a=0)", "SE(a0=0,a1=1,y=1)"]
        .iter()
        .map(|t| parse_measure(t, &g, "A", "Y").unwrap())
        .collect();
    let cfg = SamplerConfig { burn_in: 30, samples: 60, ..Default::default() };
    let strict = coverage_experiment(&spec, g.clone(), &cfg, &queries, 0.0, Execution::Sequential).unwrap();
    let loose = coverage_experiment(&spec, g, &cfg, &queries, 0.05, Execution::default()).unwrap();
    for (s, l) in strict.summary.iter().zip(&loose.summary) {
        assert!(s.covered >= l.covered);
        assert_eq!(s.covered, s.worst_covered);
    }
    for (s, l) in strict.rows.iter().zip(&loose.rows) {
        assert_eq!(s.truth, l.truth);
        assert!(s.ci_low <= l.ci_low && l.ci_high <= s.ci_high);
    }
}

#[test]
fn mismatched_node_order_is_rejected() {
    let spec = SynthSpec::mediation(10, 1, 1);
    let g = Arc::new(parse_graph("edge A -> W\nedge Z -> A\nedge Z -> Y\nedge A -> Y\nedge W -> Y\n", spec.skeleton.schema().clone()).unwrap());
    let q = parse_measure("SE(a0=0,a1=1,y=1)", &g, "A", "Y").unwrap();
    assert!(coverage_experiment(&spec, g, &SamplerConfig::default(), &[q], 0.05, Execution::Sequential).is_err());
}
