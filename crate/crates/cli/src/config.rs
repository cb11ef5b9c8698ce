//! Experiment configuration files.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use rpel_core::attacks::AttackSpec;
use rpel_core::objectives::ObjectiveSpec;
use rpel_core::protocol::{
    AttackerView, ClipBound, InitSpec, Mode, OptimizerConfig, PeerSampling, SimulationConfig,
};
use rpel_core::{Rule, SelectionPlan};

/// Where a run writes its files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; falls back to `$RPEL_OUTPUT_DIR`, then `rpel-out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_prefix() -> String {
    "run".to_string()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            prefix: default_prefix(),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// A `run` configuration: one simulation setup evaluated under several seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plan: SelectionPlan,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub attack: AttackSpec,
    pub rule: Rule,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_edges: Option<usize>,
    #[serde(default)]
    pub clip_bound: ClipBound,
    #[serde(default)]
    pub sampling: PeerSampling,
    #[serde(default)]
    pub attacker_view: AttackerView,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn simulation(&self, seed: u64) -> SimulationConfig {
        SimulationConfig {
            plan: self.plan.clone(),
            objective: self.objective.clone(),
            init: self.init.clone(),
            attack: self.attack,
            rule: self.rule,
            optimizer: self.optimizer.clone(),
            seed,
            mode: self.mode,
            graph_edges: self.graph_edges,
            clip_bound: self.clip_bound,
            sampling: self.sampling,
            attacker_view: self.attacker_view,
        }
    }
}
