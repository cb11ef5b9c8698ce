use std::collections::HashMap;
use std::sync::Mutex;

use super::*;
use crate::attacks::{AttackContext, AttackKind, Crafted};
use crate::objectives::{CurvatureSpec, MinimizerSpec, QuadraticSpec};
use crate::sampling::{select_hyperparameters, SelectionMode};

fn quadratic(dim: usize, minimizers: MinimizerSpec, noise_sigma: f64) -> ObjectiveSpec {
    ObjectiveSpec::Quadratic(QuadraticSpec {
        dim,
        curvature: CurvatureSpec::Range { mu: 1.0, l: 1.0 },
        minimizers,
        noise_sigma,
    })
}

fn config(plan: SelectionPlan, objective: ObjectiveSpec, rule: Rule, eta: f64, beta: f64) -> SimulationConfig {
    SimulationConfig::new(plan, objective, rule, OptimizerConfig::constant(eta, beta))
}

fn benchmark(kind: AttackKind, rule: Rule, seed: u64) -> SimulationConfig {
    let mut cfg = config(
        SelectionPlan::new(30, 6, 15, 6, 200),
        ObjectiveSpec::Quadratic(QuadraticSpec {
            dim: 10,
            curvature: CurvatureSpec::Range { mu: 0.5, l: 1.0 },
            minimizers: MinimizerSpec::Gaussian { center: 0.0, spread: 1.0 },
            noise_sigma: 0.1,
        }),
        rule,
        0.1,
        0.9,
    );
    cfg.attack = AttackSpec::new(kind, None);
    cfg.seed = seed;
    cfg
}

#[test]
fn halving_example_is_exact() {
    let mut cfg = config(
        SelectionPlan::new(5, 0, 2, 0, 30),
        quadratic(1, MinimizerSpec::Explicit(vec![vec![0.0]; 5]), 0.0),
        Rule::Mean,
        0.5,
        0.0,
    );
    cfg.init = InitSpec::Constant { value: vec![1.0] };
    let out = run_rpel(&cfg).unwrap();
    for (t, state) in out.trace.iter().enumerate() {
        assert_eq!(state.grad_norm_sq, 0.5f64.powi(2 * t as i32));
    }
    assert!(out.final_states.iter().all(|s| s.x[0] == 0.5f64.powi(30)));
    for (x, &tau) in out.outputs.iter().zip(&out.summary.output_rounds) {
        assert_eq!(x[0], 0.5f64.powi(tau as i32));
    }
}

#[test]
fn symmetric_runs_ignore_sampling() {
    let run = |s: usize, seed: u64| {
        let mut cfg = config(
            SelectionPlan::new(8, 0, s, 0, 25),
            quadratic(2, MinimizerSpec::Explicit(vec![vec![0.3, -1.0]; 8]), 0.0),
            Rule::NnmCwtm,
            0.2,
            0.5,
        );
        cfg.init = InitSpec::Constant { value: vec![2.0, 1.0] };
        cfg.seed = seed;
        run_rpel(&cfg).unwrap()
    };
    let reference = run(1, 0);
    for (s, seed) in [(3, 0), (7, 0), (1, 9), (5, 123)] {
        let other = run(s, seed);
        assert_eq!(other.trace, reference.trace);
        assert_eq!(other.final_states, reference.final_states);
    }
}

#[test]
fn three_node_round_matches_hand_execution() {
    // f_i(x) = (x - theta_i)^2 / 2 with theta = (0, 1, 2), x^0 = (1, 2, 4), eta = 1/2:
    // gradients (1, 1, 2), half-steps (0.5, 1.5, 3).
    let run = |rule| {
        let mut cfg = config(
            SelectionPlan::new(3, 0, 2, 0, 1),
            quadratic(1, MinimizerSpec::Explicit(vec![vec![0.0], vec![1.0], vec![2.0]]), 0.0),
            rule,
            0.5,
            0.0,
        );
        cfg.init = InitSpec::Explicit {
            values: vec![vec![1.0], vec![2.0], vec![4.0]],
        };
        run_rpel(&cfg).unwrap()
    };
    let mean = run(Rule::Mean);
    assert!(mean.final_states.iter().all(|s| s.x[0] == 5.0 / 3.0));
    assert_eq!(mean.final_states[2].m[0], 2.0);
    assert_eq!(mean.trace[1].half_variance, (1.0 / 3.0) * ((0.5f64 - 5.0 / 3.0).powi(2) + (1.5f64 - 5.0 / 3.0).powi(2) + (3.0f64 - 5.0 / 3.0).powi(2)));
    let median = run(Rule::Cwmed);
    assert!(median.final_states.iter().all(|s| s.x[0] == 1.5));
}

#[test]
fn trace_is_identical_across_worker_counts() {
    let cfg = benchmark(AttackKind::Alie, Rule::NnmCwtm, 5);
    let one = with_workers(1, || run_rpel(&cfg)).unwrap().unwrap();
    let four = with_workers(4, || run_rpel(&cfg)).unwrap().unwrap();
    assert_eq!(one, four);
    let mut graph_cfg = cfg.clone();
    graph_cfg.mode = Mode::FixedGraph;
    let one = with_workers(1, || run_fixed_graph(&graph_cfg)).unwrap().unwrap();
    let three = with_workers(3, || run_fixed_graph(&graph_cfg)).unwrap().unwrap();
    assert_eq!(one, three);
}

struct Recording {
    inner: crate::attacks::Attack,
    seen: Mutex<HashMap<(usize, usize), ModelVector>>,
}

impl Adversary for Recording {
    fn craft(&self, ctx: &AttackContext<'_>) -> Result<Crafted> {
        let out = self.inner.craft(ctx)?;
        self.seen.lock().unwrap().insert((ctx.receiver, ctx.round), out.vector.clone());
        Ok(out)
    }
}

struct Replay(HashMap<(usize, usize), ModelVector>);

impl Adversary for Replay {
    fn craft(&self, ctx: &AttackContext<'_>) -> Result<Crafted> {
        Ok(Crafted {
            vector: self.0[&(ctx.receiver, ctx.round)].clone(),
            fallback: false,
        })
    }
}

#[test]
fn attackers_act_only_through_delivered_vectors() {
    let cfg = benchmark(AttackKind::Foe, Rule::NnmCwtm, 2);
    let recording = Recording {
        inner: cfg.attack.resolve(24, 6).unwrap(),
        seen: Mutex::new(HashMap::new()),
    };
    let live = run_rpel_with(&cfg, &recording).unwrap();
    let replayed = run_rpel_with(&cfg, &Replay(recording.seen.into_inner().unwrap())).unwrap();
    assert_eq!(live.trace, replayed.trace);
    assert_eq!(live.final_states, replayed.final_states);
}

#[test]
fn robust_aggregation_contracts_honest_models() {
    for kind in [AttackKind::SignFlip, AttackKind::Foe, AttackKind::Alie, AttackKind::Dissensus] {
        for seed in 0..3 {
            let out = run_rpel(&benchmark(kind, Rule::NnmCwtm, seed)).unwrap();
            let first = out.trace[0].honest_variance;
            let last = out.trace.last().unwrap().honest_variance;
            assert!(last < first, "{} seed {seed}: {first} -> {last}", kind.name());
            assert!(out.trace.iter().all(|r| r.grad_norm_sq.is_finite() && r.max_byz_selected <= 15));
        }
    }
}

#[test]
fn gamma_violations_are_rare_under_selected_plan() {
    let (n, b, rounds, p) = (40u64, 4u64, 20u64, 0.9);
    let sel = select_hyperparameters(n, b, rounds, &[4, 6, 8, 10, 12], SelectionMode::Quantile { p }, 0.45, 0).unwrap();
    let runs = 200;
    let mut violated = 0;
    for seed in 0..runs {
        let mut cfg = config(
            SelectionPlan::new(n as usize, b as usize, sel.s as usize, sel.b_hat as usize, rounds as usize),
            quadratic(1, MinimizerSpec::default(), 0.0),
            Rule::Cwtm,
            0.1,
            0.0,
        );
        cfg.seed = seed;
        if run_rpel(&cfg).unwrap().summary.gamma_violations > 0 {
            violated += 1;
        }
    }
    let rate = violated as f64 / runs as f64;
    let sd = (p * (1.0 - p) / runs as f64).sqrt();
    assert!(rate <= 1.0 - p + 3.0 * sd, "violation rate {rate}");
}

#[test]
fn blow_up_reports_round_and_node() {
    let mut cfg = benchmark(AttackKind::Foe, Rule::Mean, 0);
    cfg.attack.strength = Some(1e300);
    match run_rpel(&cfg) {
        Err(RpelError::NonFinite { round, node }) => assert!(round >= 1 && node < 24),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn isolated_receivers_fall_back() {
    let mut cfg = config(
        SelectionPlan::new(5, 1, 1, 0, 50),
        quadratic(1, MinimizerSpec::default(), 0.0),
        Rule::Mean,
        0.1,
        0.0,
    );
    cfg.attack = AttackSpec::new(AttackKind::SignFlip, None);
    let out = run_rpel(&cfg).unwrap();
    assert!(out.summary.fallbacks > 0);
    assert_eq!(out.summary.fallbacks, out.trace.iter().map(|r| r.byz_selected).sum::<usize>());
}

#[test]
fn complete_graph_reproduces_all_to_all_averaging() {
    for seed in 0..3 {
        let mut cfg = config(
            SelectionPlan::new(10, 0, 9, 0, 40),
            quadratic(3, MinimizerSpec::default(), 0.5),
            Rule::Mean,
            0.2,
            0.9,
        );
        cfg.seed = seed;
        let rpel = run_rpel(&cfg).unwrap();
        cfg.mode = Mode::FixedGraph;
        cfg.graph_edges = Some(45);
        let graph = run_fixed_graph(&cfg).unwrap();
        assert_eq!(rpel.trace, graph.trace);
        assert_eq!(rpel.outputs, graph.outputs);
    }
}

#[test]
fn sparse_graph_with_clipping_runs() {
    let mut cfg = benchmark(AttackKind::Dissensus, Rule::Mean, 1);
    cfg.mode = Mode::FixedGraph;
    let out = run_fixed_graph(&cfg).unwrap();
    assert_eq!(out.trace.len(), 201);
    assert!(run_rpel(&cfg).is_err());
    cfg.graph_edges = Some(10);
    assert!(run_fixed_graph(&cfg).is_err());
}

#[test]
fn uniform_sampling_variant_runs() {
    let mut cfg = benchmark(AttackKind::Alie, Rule::NnmCwtm, 4);
    cfg.sampling = PeerSampling::Uniform;
    cfg.attacker_view = AttackerView::AllHonest;
    let out = run_rpel(&cfg).unwrap();
    assert!(out.summary.final_grad_norm_sq < out.summary.initial_grad_norm_sq);
}

#[test]
fn step_size_schedule() {
    let eta = StepSize::Piecewise(vec![(0, 0.5), (500, 0.1), (1000, 0.02)]);
    assert_eq!(eta.at(1), 0.5);
    assert_eq!(eta.at(499), 0.5);
    assert_eq!(eta.at(500), 0.1);
    assert_eq!(eta.at(2000), 0.02);
    assert!(StepSize::Piecewise(vec![(5, 0.1)]).validate().is_err());
    assert!(StepSize::Piecewise(vec![(0, 0.1), (0, 0.2)]).validate().is_err());
    assert!(StepSize::Constant(0.0).validate().is_err());
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let json = r#"{
        "plan": {"n": 30, "b": 6, "s": 15, "b_hat": 6, "rounds": 200},
        "objective": {"kind": "quadratic", "dim": 10},
        "attack": {"kind": "alie", "strength": null},
        "rule": "nnm_cwtm",
        "optimizer": {"eta": [[0, 0.1], [100, 0.05]], "beta": 0.9, "rho": 1.0}
    }"#;
    let cfg: SimulationConfig = serde_json::from_str(json).unwrap();
    assert_eq!(cfg.optimizer.eta.at(150), 0.05);
    assert_eq!(cfg.init, InitSpec::default());
    let again: SimulationConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(again, cfg);
    let bad = json.replace("\"rule\"", "\"rulez\": 1, \"rule\"");
    assert!(serde_json::from_str::<SimulationConfig>(&bad).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = benchmark(AttackKind::None, Rule::Mean, 0);
    cfg.optimizer.beta = 1.0;
    assert!(run_rpel(&cfg).is_err());
    let mut cfg = benchmark(AttackKind::None, Rule::Mean, 0);
    cfg.plan.b_hat = 8;
    assert!(run_rpel(&cfg).is_err());
}
