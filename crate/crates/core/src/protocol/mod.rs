//! The round engines: pull-based epidemic learning and the fixed-graph
//! clipped-gossip baseline, with per-round metrics.
//!
//! Honest nodes have ids `0..n-b` and Byzantine nodes `n-b..n`. Byzantine
//! nodes hold no state: whenever one is pulled it answers with a vector
//! crafted for that receiver and round. Each round reads a frozen snapshot of
//! the honest models and writes the next one, so results do not depend on the
//! number of worker threads.

mod bound;
mod engine;
mod graph;
mod lemma;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use bound::{eval_convergence_bound, reduction_coefficients, BoundConstants, BoundEvaluation};
pub use engine::{run_rpel, run_rpel_with, Adversary};
pub use graph::{random_connected_graph, run_fixed_graph, run_fixed_graph_with, FixedGraph};
pub use lemma::{verify_reduction_lemma, LemmaReport};

use crate::aggregation::Rule;
use crate::attacks::{Attack, AttackSpec};
use crate::error::{invalid, Result, RpelError};
use crate::numerics::{mean, mean_squared_deviation, Domain, ModelVector, RngStream};
use crate::objectives::{HonestObjective, ObjectiveSpec};
use crate::sampling::SelectionPlan;

/// Which engine a configuration drives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Rpel,
    FixedGraph,
}

/// Step size, constant or piecewise constant.
///
/// The piecewise form lists `[first_round, eta]` pairs; the first pair must
/// start at round 1 or earlier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    Constant(f64),
    Piecewise(Vec<(usize, f64)>),
}

impl StepSize {
    /// Step size used in round `t` (1-based).
    pub fn at(&self, t: usize) -> f64 {
        match self {
            StepSize::Constant(eta) => *eta,
            StepSize::Piecewise(pieces) => pieces
                .iter()
                .take_while(|(start, _)| *start <= t)
                .last()
                .map_or(pieces[0].1, |(_, eta)| *eta),
        }
    }

    fn validate(&self) -> Result<()> {
        let values: Vec<f64> = match self {
            StepSize::Constant(eta) => vec![*eta],
            StepSize::Piecewise(pieces) => {
                if pieces.is_empty() || pieces[0].0 > 1 {
                    return Err(invalid("piecewise step size must start at round 0 or 1"));
                }
                if pieces.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(invalid("piecewise step size rounds must increase"));
                }
                pieces.iter().map(|p| p.1).collect()
            }
        };
        if values.iter().any(|eta| !(*eta > 0.0 && eta.is_finite())) {
            return Err(invalid("step size must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub eta: StepSize,
    #[serde(default)]
    pub beta: f64,
    /// Communication step size. Accepted for completeness; the round update
    /// does not use it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl OptimizerConfig {
    pub fn constant(eta: f64, beta: f64) -> Self {
        Self {
            eta: StepSize::Constant(eta),
            beta,
            rho: None,
        }
    }
}

/// Initial honest models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Zero,
    /// The same vector at every honest node.
    Constant { value: Vec<f64> },
    /// One vector per honest node.
    Explicit { values: Vec<Vec<f64>> },
    /// Independent `N(center, scale^2)` coordinates per node.
    Gaussian { center: f64, scale: f64 },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Gaussian {
            center: 0.0,
            scale: 1.0,
        }
    }
}

impl InitSpec {
    pub fn build(&self, num_honest: usize, dim: usize, seed: u64) -> Result<Vec<ModelVector>> {
        let check = |v: &Vec<f64>| {
            if v.len() == dim {
                Ok(ModelVector::new(v.clone()))
            } else {
                Err(RpelError::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                })
            }
        };
        match self {
            InitSpec::Zero => Ok(vec![ModelVector::zeros(dim); num_honest]),
            InitSpec::Constant { value } => Ok(vec![check(value)?; num_honest]),
            InitSpec::Explicit { values } => {
                if values.len() != num_honest {
                    return Err(invalid(format!(
                        "expected {num_honest} initial models, got {}",
                        values.len()
                    )));
                }
                values.iter().map(check).collect()
            }
            InitSpec::Gaussian { center, scale } => Ok((0..num_honest)
                .map(|i| {
                    let mut rng = RngStream::for_node_round(seed, Domain::INIT, i, 0);
                    ModelVector::new(
                        (0..dim)
                            .map(|_| center + scale * rng.sample::<f64, _>(StandardNormal))
                            .collect(),
                    )
                })
                .collect()),
        }
    }
}

/// Number of Byzantine neighbors the fixed-graph clipping rule guards against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipBound {
    /// `b_hat`, adequate when attackers sit at random positions.
    #[default]
    BHat,
    /// `b`, for adversarially placed attackers.
    B,
}

/// Which models a node aggregates each round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerSampling {
    /// Own half-step plus `s` peers drawn from the other `n - 1` nodes.
    #[default]
    OwnPlusPeers,
    /// `s + 1` nodes drawn from all `n`; the own model is used only if drawn.
    Uniform,
}

/// What the adversary sees when crafting a receiver's vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerView {
    /// The honest models the receiver pulled this round.
    #[default]
    Receiver,
    /// Every honest half-step model.
    AllHonest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub plan: SelectionPlan,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub attack: AttackSpec,
    pub rule: Rule,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    /// Edge count for the fixed graph; defaults to `n * s / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_edges: Option<usize>,
    #[serde(default)]
    pub clip_bound: ClipBound,
    #[serde(default)]
    pub sampling: PeerSampling,
    #[serde(default)]
    pub attacker_view: AttackerView,
}

impl SimulationConfig {
    pub fn new(plan: SelectionPlan, objective: ObjectiveSpec, rule: Rule, optimizer: OptimizerConfig) -> Self {
        Self {
            plan,
            objective,
            init: InitSpec::default(),
            attack: AttackSpec::default(),
            rule,
            optimizer,
            seed: 0,
            mode: Mode::default(),
            graph_edges: None,
            clip_bound: ClipBound::default(),
            sampling: PeerSampling::default(),
            attacker_view: AttackerView::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.optimizer.eta.validate()?;
        let beta = self.optimizer.beta;
        if !(0.0..1.0).contains(&beta) {
            return Err(invalid(format!("momentum beta must lie in [0, 1), got {beta}")));
        }
        if self.sampling == PeerSampling::Uniform && self.plan.s + 1 > self.plan.n {
            return Err(invalid("uniform sampling needs s + 1 <= n"));
        }
        if self.mode == Mode::FixedGraph {
            let edges = self.edge_count();
            let n = self.plan.n;
            if edges < n - 1 || edges > n * (n - 1) / 2 {
                return Err(invalid(format!("graph needs between n-1 and n(n-1)/2 edges, got {edges}")));
            }
        }
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.graph_edges.unwrap_or(self.plan.n * self.plan.s / 2)
    }
}

/// One node's state between rounds. Only honest nodes carry state.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub id: usize,
    pub x: ModelVector,
    pub m: ModelVector,
}

/// Metrics of the honest models at the end of a round (round 0 is the start).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    /// `max_i b_i^t`: the most attackers any honest node pulled this round.
    pub max_byz_selected: usize,
    /// Total attacker slots pulled by all honest nodes this round.
    pub byz_selected: usize,
    /// `(1/|H|) sum_i ||grad F_H(x_i^t)||^2`.
    pub grad_norm_sq: f64,
    /// `F_H` at the honest average.
    pub mean_loss: f64,
    /// `(1/|H|) sum_i ||x_i^t - mean_H(x^t)||^2`.
    pub honest_variance: f64,
    /// Spread of the half-step models this round aggregated.
    pub half_variance: f64,
    /// `||mean_H(x^t) - mean_H(x^{t-1/2})||^2`.
    pub drift_sq: f64,
    /// `honest_variance / half_variance`, empty when the spread is zero.
    pub alpha_emp: Option<f64>,
    /// `drift_sq / half_variance`, empty when the spread is zero.
    pub lambda_emp: Option<f64>,
    /// Attacks that had no honest models to work with.
    pub fallbacks: usize,
}

/// Run-level summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub rounds: usize,
    pub attack: Attack,
    pub initial_grad_norm_sq: f64,
    pub final_grad_norm_sq: f64,
    /// Average of `grad_norm_sq` over rounds `1..=T`.
    pub avg_grad_norm_sq: f64,
    pub final_honest_variance: f64,
    pub initial_honest_variance: f64,
    /// Max over rounds of `max_byz_selected`.
    pub max_byz_selected: usize,
    /// Rounds in which some honest node pulled more than `b_hat` attackers.
    pub gamma_violations: usize,
    pub fallbacks: usize,
    /// Round of each honest node's uniformly drawn output iterate.
    pub output_rounds: Vec<usize>,
    /// `(1/|H|) sum_i ||grad F_H(x_hat_i)||^2` over the output iterates.
    pub output_grad_norm_sq: f64,
    /// Final gradient norm at most a tenth of the initial one.
    pub reduced_10x: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub trace: Vec<RoundRecord>,
    /// One iterate per honest node, drawn uniformly from its trajectory.
    pub outputs: Vec<ModelVector>,
    pub final_states: Vec<NodeState>,
    pub summary: RunSummary,
}

/// Runs `f` on a dedicated pool with `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Shared setup of both engines.
pub(crate) struct Prepared {
    pub objective: HonestObjective,
    pub attack: Attack,
    pub num_honest: usize,
    pub states: Vec<NodeState>,
    /// Output round of each honest node, in `1..=T`.
    pub output_rounds: Vec<usize>,
}

pub(crate) fn prepare(cfg: &SimulationConfig) -> Result<Prepared> {
    cfg.validate()?;
    let num_honest = cfg.plan.num_honest();
    let objective = cfg.objective.build(num_honest, cfg.seed)?;
    let attack = cfg.attack.resolve(num_honest, cfg.plan.b)?;
    let dim = objective.dim();
    let states = cfg
        .init
        .build(num_honest, dim, cfg.seed)?
        .into_iter()
        .enumerate()
        .map(|(id, x)| NodeState {
            id,
            x,
            m: ModelVector::zeros(dim),
        })
        .collect();
    let output_rounds = (0..num_honest)
        .map(|i| RngStream::for_node_round(cfg.seed, Domain::OUTPUT, i, 0).random_range(1..=cfg.plan.rounds))
        .collect();
    Ok(Prepared {
        objective,
        attack,
        num_honest,
        states,
        output_rounds,
    })
}

/// Stochastic gradient, momentum and local step of honest node `state.id`
/// in round `t`; returns the half-step model and the new momentum.
pub(crate) fn local_step(
    objective: &HonestObjective,
    cfg: &SimulationConfig,
    state: &NodeState,
    t: usize,
) -> Result<(ModelVector, ModelVector)> {
    let mut rng = RngStream::for_node_round(cfg.seed, Domain::GRADIENT, state.id, t);
    let g = objective.stochastic_gradient(state.id, &state.x, &mut rng)?;
    let beta = cfg.optimizer.beta;
    let m = state.m.scale(beta).add_scaled(1.0 - beta, &g)?;
    let half = state.x.add_scaled(-cfg.optimizer.eta.at(t), &m)?;
    Ok((half, m))
}

pub(crate) fn grad_norm_sq(objective: &HonestObjective, xs: &[&ModelVector]) -> Result<f64> {
    use rayon::prelude::*;
    let norms = xs
        .par_iter()
        .map(|x| objective.global_gradient(x).map(|g| g.squared_norm()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(norms.iter().sum::<f64>() / norms.len() as f64)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Per-round bookkeeping shared by the engines.
pub(crate) struct Recorder {
    pub trace: Vec<RoundRecord>,
    pub outputs: Vec<Option<ModelVector>>,
}

impl Recorder {
    pub fn start(objective: &HonestObjective, states: &[NodeState]) -> Result<Self> {
        let xs: Vec<&ModelVector> = states.iter().map(|s| &s.x).collect();
        let variance = mean_squared_deviation(&xs)?;
        let record = RoundRecord {
            round: 0,
            max_byz_selected: 0,
            byz_selected: 0,
            grad_norm_sq: grad_norm_sq(objective, &xs)?,
            mean_loss: objective.global_loss(&mean(&xs)?)?,
            honest_variance: variance,
            half_variance: 0.0,
            drift_sq: 0.0,
            alpha_emp: None,
            lambda_emp: None,
            fallbacks: 0,
        };
        Ok(Self {
            trace: vec![record],
            outputs: vec![None; states.len()],
        })
    }

    /// Checks the new models, records round `t` and captures output iterates.
    #[allow(clippy::too_many_arguments)]
    pub fn round(
        &mut self,
        objective: &HonestObjective,
        t: usize,
        halves: &[ModelVector],
        states: &[NodeState],
        byz_counts: &[usize],
        fallbacks: usize,
        output_rounds: &[usize],
    ) -> Result<()> {
        if let Some(bad) = states.iter().find(|s| !s.x.is_finite()) {
            return Err(RpelError::NonFinite { round: t, node: bad.id });
        }
        let xs: Vec<&ModelVector> = states.iter().map(|s| &s.x).collect();
        let x_bar = mean(&xs)?;
        let half_bar = mean(halves)?;
        let half_variance = mean_squared_deviation(halves)?;
        let honest_variance = mean_squared_deviation(&xs)?;
        let drift_sq = x_bar.dist_sq(&half_bar);
        self.trace.push(RoundRecord {
            round: t,
            max_byz_selected: byz_counts.iter().copied().max().unwrap_or(0),
            byz_selected: byz_counts.iter().sum(),
            grad_norm_sq: grad_norm_sq(objective, &xs)?,
            mean_loss: objective.global_loss(&x_bar)?,
            honest_variance,
            half_variance,
            drift_sq,
            alpha_emp: ratio(honest_variance, half_variance),
            lambda_emp: ratio(drift_sq, half_variance),
            fallbacks,
        });
        for (slot, (state, &tau)) in self.outputs.iter_mut().zip(states.iter().zip(output_rounds)) {
            if tau == t {
                *slot = Some(state.x.clone());
            }
        }
        Ok(())
    }

    pub fn finish(
        self,
        objective: &HonestObjective,
        cfg: &SimulationConfig,
        attack: Attack,
        states: Vec<NodeState>,
        output_rounds: Vec<usize>,
    ) -> Result<RunOutput> {
        let outputs: Vec<ModelVector> = self
            .outputs
            .into_iter()
            .map(|o| o.expect("every output round lies in 1..=T"))
            .collect();
        let first = &self.trace[0];
        let last = self.trace.last().expect("trace has the initial record");
        let rounds = self.trace.len() - 1;
        let output_refs: Vec<&ModelVector> = outputs.iter().collect();
        let summary = RunSummary {
            rounds,
            attack,
            initial_grad_norm_sq: first.grad_norm_sq,
            final_grad_norm_sq: last.grad_norm_sq,
            avg_grad_norm_sq: self.trace[1..].iter().map(|r| r.grad_norm_sq).sum::<f64>() / rounds as f64,
            final_honest_variance: last.honest_variance,
            initial_honest_variance: first.honest_variance,
            max_byz_selected: self.trace.iter().map(|r| r.max_byz_selected).max().unwrap_or(0),
            gamma_violations: self
                .trace
                .iter()
                .filter(|r| r.max_byz_selected > cfg.plan.b_hat)
                .count(),
            fallbacks: self.trace.iter().map(|r| r.fallbacks).sum(),
            output_rounds,
            output_grad_norm_sq: grad_norm_sq(objective, &output_refs)?,
            reduced_10x: last.grad_norm_sq <= 0.1 * first.grad_norm_sq,
        };
        Ok(RunOutput {
            trace: self.trace,
            outputs,
            final_states: states,
            summary,
        })
    }
}

#[cfg(test)]
mod tests;
