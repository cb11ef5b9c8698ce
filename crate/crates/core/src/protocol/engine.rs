use rayon::prelude::*;

use super::{local_step, prepare, AttackerView, NodeState, PeerSampling, Recorder, RunOutput, SimulationConfig};
use crate::aggregation::aggregate_slice;
use crate::attacks::{craft, Attack, AttackContext, Crafted};
use crate::error::{invalid, Result};
use crate::numerics::{Domain, ModelVector, RngStream};
use crate::sampling::{sample_any, sample_neighbors};

/// Source of the vectors Byzantine nodes send.
pub trait Adversary: Sync {
    fn craft(&self, ctx: &AttackContext<'_>) -> Result<Crafted>;
}

impl Adversary for Attack {
    fn craft(&self, ctx: &AttackContext<'_>) -> Result<Crafted> {
        craft(self, ctx)
    }
}

/// Result of one honest node's aggregation step.
struct NodeRound {
    x: ModelVector,
    byz: usize,
    fallback: bool,
}

/// Runs the configured number of pull-based rounds with the configured attack.
pub fn run_rpel(cfg: &SimulationConfig) -> Result<RunOutput> {
    let attack = cfg.attack.resolve(cfg.plan.num_honest(), cfg.plan.b)?;
    run_rpel_with(cfg, &attack)
}

/// Like [`run_rpel`], with Byzantine vectors supplied by `adversary`.
pub fn run_rpel_with(cfg: &SimulationConfig, adversary: &dyn Adversary) -> Result<RunOutput> {
    if cfg.mode != super::Mode::Rpel {
        return Err(invalid("run_rpel needs mode = rpel"));
    }
    let prep = prepare(cfg)?;
    let objective = &prep.objective;
    let h = prep.num_honest;
    let mut states = prep.states;
    let mut recorder = Recorder::start(objective, &states)?;

    for t in 1..=cfg.plan.rounds {
        let steps = states
            .par_iter()
            .map(|s| local_step(objective, cfg, s, t))
            .collect::<Result<Vec<_>>>()?;
        let halves: Vec<ModelVector> = steps.iter().map(|(half, _)| half.clone()).collect();

        let results = (0..h)
            .into_par_iter()
            .map(|i| aggregate_node(cfg, adversary, i, t, h, &halves, &states[i].x))
            .collect::<Result<Vec<_>>>()?;

        let byz_counts: Vec<usize> = results.iter().map(|r| r.byz).collect();
        let fallbacks = results.iter().filter(|r| r.fallback).count();
        states = results
            .into_iter()
            .zip(steps)
            .enumerate()
            .map(|(id, (r, (_, m)))| NodeState { id, x: r.x, m })
            .collect();
        recorder.round(objective, t, &halves, &states, &byz_counts, fallbacks, &prep.output_rounds)?;
    }
    recorder.finish(objective, cfg, prep.attack, states, prep.output_rounds)
}

fn aggregate_node(
    cfg: &SimulationConfig,
    adversary: &dyn Adversary,
    i: usize,
    t: usize,
    h: usize,
    halves: &[ModelVector],
    prev: &ModelVector,
) -> Result<NodeRound> {
    let plan = &cfg.plan;
    let mut rng = RngStream::for_node_round(cfg.seed, Domain::SAMPLING, i, t);
    let sample = match cfg.sampling {
        PeerSampling::OwnPlusPeers => sample_neighbors(plan.n, plan.s, i, &mut rng)?,
        PeerSampling::Uniform => sample_any(plan.n, plan.s + 1, &mut rng)?,
    };
    let byz = sample.iter().filter(|&&j| j >= h).count();
    let own = &halves[i];

    // Every attacker pulled by this receiver sends the same crafted vector.
    let crafted = if byz > 0 {
        let honest_visible: Vec<(usize, &ModelVector)> = match cfg.attacker_view {
            AttackerView::Receiver => sample
                .iter()
                .filter(|&&j| j < h && j != i)
                .map(|&j| (j, &halves[j]))
                .collect(),
            AttackerView::AllHonest => halves.iter().enumerate().collect(),
        };
        let ctx = AttackContext {
            receiver: i,
            round: t,
            honest_visible,
            receiver_own: own,
            receiver_prev: prev,
            num_byz_selected: byz,
            rule: cfg.rule,
        };
        Some(adversary.craft(&ctx)?)
    } else {
        None
    };

    let mut inputs: Vec<&ModelVector> = Vec::with_capacity(plan.s + 1);
    if cfg.sampling == PeerSampling::OwnPlusPeers {
        inputs.push(own);
    }
    for &j in &sample {
        inputs.push(match (&crafted, j < h) {
            (_, true) => &halves[j],
            (Some(c), false) => &c.vector,
            (None, false) => unreachable!("attackers were counted"),
        });
    }
    let x = aggregate_slice(cfg.rule, &inputs, plan.b_hat)?;
    Ok(NodeRound {
        x,
        byz,
        fallback: crafted.is_some_and(|c| c.fallback),
    })
}
