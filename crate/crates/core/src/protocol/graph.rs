use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::engine::Adversary;
use super::{local_step, prepare, AttackerView, ClipBound, Mode, NodeState, Recorder, RunOutput, SimulationConfig};
use crate::attacks::AttackContext;
use crate::error::{invalid, Result, RpelError};
use crate::numerics::{symmetric_mean, Domain, ModelVector, RngStream};

/// A simple undirected graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl FixedGraph {
    /// Builds a connected simple graph from an edge list.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = HashSet::new();
        let mut neighbors = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(invalid(format!("self-loop at node {u}")));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(invalid(format!("duplicate edge ({u}, {v})")));
            }
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        neighbors.iter_mut().for_each(|l| l.sort_unstable());
        let mut edges: Vec<(usize, usize)> = set.into_iter().collect();
        edges.sort_unstable();
        let graph = Self { n, edges, neighbors };
        if !graph.is_connected() {
            return Err(RpelError::Disconnected);
        }
        Ok(graph)
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }
}

/// Above this many vertex pairs, extra edges are drawn by rejection instead
/// of shuffling the full list of non-edges.
const PAIR_LIST_LIMIT: usize = 4_000_000;

/// Random connected graph with exactly `edges` edges: a uniform spanning tree
/// from a random walk on the complete graph, then uniformly random extra edges.
pub fn random_connected_graph<R: Rng + ?Sized>(n: usize, edges: usize, rng: &mut R) -> Result<FixedGraph> {
    if n == 0 {
        return Err(invalid("graph needs at least one node"));
    }
    let max_edges = n * (n - 1) / 2;
    if edges < n - 1 || edges > max_edges {
        return Err(invalid(format!(
            "edge count {edges} outside [{}, {max_edges}] for n = {n}",
            n - 1
        )));
    }
    let mut chosen: HashSet<(usize, usize)> = HashSet::with_capacity(edges);
    let key = |u: usize, v: usize| (u.min(v), u.max(v));

    // Random walk: the first entrance into each vertex contributes a tree edge.
    let mut visited = vec![false; n];
    let mut current = rng.random_range(0..n);
    visited[current] = true;
    let mut remaining = n - 1;
    while remaining > 0 {
        let mut next = rng.random_range(0..n - 1);
        if next >= current {
            next += 1;
        }
        if !visited[next] {
            visited[next] = true;
            chosen.insert(key(current, next));
            remaining -= 1;
        }
        current = next;
    }

    let extra = edges - (n - 1);
    if max_edges <= PAIR_LIST_LIMIT {
        let mut candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|e| !chosen.contains(e))
            .collect();
        candidates.shuffle(rng);
        chosen.extend(candidates.into_iter().take(extra));
    } else {
        while chosen.len() < edges {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v {
                chosen.insert(key(u, v));
            }
        }
    }
    FixedGraph::new(n, chosen)
}

/// Runs the clipped-gossip baseline on a random connected graph.
pub fn run_fixed_graph(cfg: &SimulationConfig) -> Result<RunOutput> {
    let attack = cfg.attack.resolve(cfg.plan.num_honest(), cfg.plan.b)?;
    run_fixed_graph_with(cfg, &attack)
}

/// Like [`run_fixed_graph`], with Byzantine vectors supplied by `adversary`.
pub fn run_fixed_graph_with(cfg: &SimulationConfig, adversary: &dyn Adversary) -> Result<RunOutput> {
    if cfg.mode != Mode::FixedGraph {
        return Err(invalid("run_fixed_graph needs mode = fixed_graph"));
    }
    let prep = prepare(cfg)?;
    let mut rng = RngStream::for_node_round(cfg.seed, Domain::GRAPH, 0, 0);
    let graph = random_connected_graph(cfg.plan.n, cfg.edge_count(), &mut rng)?;
    let objective = &prep.objective;
    let h = prep.num_honest;
    let clip = 2 * match cfg.clip_bound {
        ClipBound::BHat => cfg.plan.b_hat,
        ClipBound::B => cfg.plan.b,
    };
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
            .map(|i| {
                let own = &halves[i];
                let neighbors = graph.neighbors(i);
                let byz = neighbors.iter().filter(|&&j| j >= h).count();
                let crafted = if byz > 0 {
                    let honest_visible = match cfg.attacker_view {
                        AttackerView::Receiver => neighbors
                            .iter()
                            .filter(|&&j| j < h)
                            .map(|&j| (j, &halves[j]))
                            .collect(),
                        AttackerView::AllHonest => halves.iter().enumerate().collect(),
                    };
                    let ctx = AttackContext {
                        receiver: i,
                        round: t,
                        honest_visible,
                        receiver_own: own,
                        receiver_prev: &states[i].x,
                        num_byz_selected: byz,
                        rule: cfg.rule,
                    };
                    Some(adversary.craft(&ctx)?)
                } else {
                    None
                };
                let received: Vec<&ModelVector> = neighbors
                    .iter()
                    .map(|&j| match &crafted {
                        Some(c) if j >= h => &c.vector,
                        _ => &halves[j],
                    })
                    .collect();
                let x = clipped_gossip(own, &received, clip)?;
                Ok((x, byz, crafted.is_some_and(|c| c.fallback)))
            })
            .collect::<Result<Vec<_>>>()?;

        let byz_counts: Vec<usize> = results.iter().map(|r| r.1).collect();
        let fallbacks = results.iter().filter(|r| r.2).count();
        states = results
            .into_iter()
            .zip(steps)
            .enumerate()
            .map(|(id, ((x, _, _), (_, m)))| NodeState { id, x, m })
            .collect();
        recorder.round(objective, t, &halves, &states, &byz_counts, fallbacks, &prep.output_rounds)?;
    }
    recorder.finish(objective, cfg, prep.attack, states, prep.output_rounds)
}

/// `own + 1/(k+1) sum_j clip(x_j - own)`, where the `clip` largest differences
/// are shrunk to the norm of the next largest one. Without clipping this is
/// exactly the uniform average of `own` and the received models.
pub(crate) fn clipped_gossip(own: &ModelVector, received: &[&ModelVector], clip: usize) -> Result<ModelVector> {
    if clip == 0 || received.is_empty() {
        let mut all = Vec::with_capacity(received.len() + 1);
        all.push(own);
        all.extend_from_slice(received);
        return symmetric_mean(&all);
    }
    let mut diffs: Vec<(f64, ModelVector)> = received
        .iter()
        .map(|x| x.sub(own).map(|d| (d.norm(), d)))
        .collect::<Result<_>>()?;
    // Largest first; stable sort keeps the received order among equal norms.
    diffs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let tau = diffs.get(clip).map_or(0.0, |d| d.0);
    let mut acc = ModelVector::zeros(own.dim());
    for (idx, (norm, d)) in diffs.iter().enumerate() {
        if idx < clip && *norm > tau {
            acc.axpy(tau / norm, d);
        } else {
            acc.axpy(1.0, d);
        }
    }
    own.add_scaled(1.0 / (received.len() + 1) as f64, &acc)
}
