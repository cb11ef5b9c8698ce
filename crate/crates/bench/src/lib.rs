//! Fixtures shared by the benchmarks.

use rand::Rng;

use rpel_core::objectives::{CurvatureSpec, MinimizerSpec, QuadraticSpec};
use rpel_core::protocol::OptimizerConfig;
use rpel_core::{
    AggregationInput, AttackKind, AttackSpec, Domain, ModelVector, ObjectiveSpec, RngStream, Rule, SelectionPlan,
    SimulationConfig,
};

const FIXTURE: Domain = Domain(1000);

/// `count` vectors with uniform coordinates in `[-1, 1)`; the last `b_hat`
/// are pushed far out to play the attackers.
pub fn aggregation_input(count: usize, dim: usize, b_hat: usize, seed: u64) -> AggregationInput {
    let mut rng = RngStream::for_node_round(seed, FIXTURE, 0, 0);
    let all = (0..count)
        .map(|i| {
            let scale = if i + b_hat >= count { 50.0 } else { 1.0 };
            ModelVector::new((0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect())
        })
        .collect();
    AggregationInput::from_all(all, b_hat).expect("valid fixture")
}

/// The 30-node quadratic benchmark under ALIE.
pub fn quadratic_run(rule: Rule, dim: usize, rounds: usize) -> SimulationConfig {
    let objective = ObjectiveSpec::Quadratic(QuadraticSpec {
        dim,
        curvature: CurvatureSpec::Range { mu: 0.5, l: 1.0 },
        minimizers: MinimizerSpec::Gaussian { center: 0.0, spread: 1.0 },
        noise_sigma: 0.1,
    });
    let mut cfg = SimulationConfig::new(
        SelectionPlan::new(30, 6, 15, 6, rounds),
        objective,
        rule,
        OptimizerConfig::constant(0.1, 0.9),
    );
    cfg.attack = AttackSpec::new(AttackKind::Alie, None);
    cfg
}
