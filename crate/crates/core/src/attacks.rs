//! Omniscient Byzantine adversaries.
//!
//! Attackers craft one vector per `(receiver, round)`, knowing exactly which
//! honest half-step models that receiver pulled. The classic gradient-space
//! attacks are expressed in model space: `u = mean(visible) - x_prev` plays the
//! role of the honest update seen by the receiver.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::aggregation::Rule;
use crate::error::{invalid, Result, RpelError};
use crate::numerics::{coordinate_stats, symmetric_mean, ModelVector};

/// Default FOE amplification.
pub const DEFAULT_FOE_EPSILON: f64 = 1.5;
/// Default Dissensus amplification.
pub const DEFAULT_DISSENSUS_EPSILON: f64 = 1.0;
/// Upper clamp for the ALIE multiplier.
pub const MAX_ALIE_Z: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    SignFlip,
    Foe,
    Alie,
    Dissensus,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::SignFlip => "sign_flip",
            AttackKind::Foe => "foe",
            AttackKind::Alie => "alie",
            AttackKind::Dissensus => "dissensus",
        }
    }
}

/// Attack as written in a config; a missing strength means "use the default".
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    #[serde(default)]
    pub strength: Option<f64>,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            strength: None,
        }
    }
}

impl AttackSpec {
    pub fn new(kind: AttackKind, strength: Option<f64>) -> Self {
        Self { kind, strength }
    }

    /// Fills in the default strength for a population of honest and Byzantine nodes.
    pub fn resolve(&self, num_honest: usize, num_byz: usize) -> Result<Attack> {
        let strength = match (self.strength, self.kind) {
            (Some(s), _) => s,
            (None, AttackKind::Foe) => DEFAULT_FOE_EPSILON,
            (None, AttackKind::Dissensus) => DEFAULT_DISSENSUS_EPSILON,
            (None, AttackKind::Alie) => default_alie_z(num_honest, num_byz)?,
            (None, AttackKind::None | AttackKind::SignFlip) => 0.0,
        };
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(invalid(format!("attack strength must be finite and >= 0, got {strength}")));
        }
        Ok(Attack {
            kind: self.kind,
            strength,
        })
    }
}

/// An attack with its strength fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Attack {
    pub kind: AttackKind,
    pub strength: f64,
}

/// What the adversary knows when crafting the vector for one receiver.
#[derive(Clone, Debug)]
pub struct AttackContext<'a> {
    pub receiver: usize,
    pub round: usize,
    /// Honest half-step models in the receiver's sample, with their node ids.
    pub honest_visible: Vec<(usize, &'a ModelVector)>,
    /// The receiver's own half-step model.
    pub receiver_own: &'a ModelVector,
    /// The receiver's model before the local step.
    pub receiver_prev: &'a ModelVector,
    pub num_byz_selected: usize,
    pub rule: Rule,
}

/// A crafted vector; `fallback` marks that the attack had nothing to work
/// with and sent the receiver's previous model instead.
#[derive(Clone, Debug, PartialEq)]
pub struct Crafted {
    pub vector: ModelVector,
    pub fallback: bool,
}

/// Crafts the malicious model sent to `ctx.receiver` in `ctx.round`.
pub fn craft(attack: &Attack, ctx: &AttackContext<'_>) -> Result<Crafted> {
    let dim = ctx.receiver_prev.dim();
    for v in std::iter::once(ctx.receiver_own).chain(ctx.honest_visible.iter().map(|(_, v)| *v)) {
        if v.dim() != dim {
            return Err(RpelError::DimensionMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
    }
    if attack.kind == AttackKind::None {
        return Ok(Crafted {
            vector: ctx.receiver_own.clone(),
            fallback: false,
        });
    }
    if ctx.honest_visible.is_empty() {
        return Ok(Crafted {
            vector: ctx.receiver_prev.clone(),
            fallback: true,
        });
    }
    let visible: Vec<&ModelVector> = ctx.honest_visible.iter().map(|(_, v)| *v).collect();
    let mu = symmetric_mean(&visible)?;
    let eps = attack.strength;
    let vector = match attack.kind {
        AttackKind::None => unreachable!("handled above"),
        // prev - eps * (mu - prev), with eps = 1 for sign flipping.
        AttackKind::SignFlip | AttackKind::Foe => {
            let eps = if attack.kind == AttackKind::SignFlip { 1.0 } else { eps };
            let u = mu.sub(ctx.receiver_prev)?;
            ctx.receiver_prev.add_scaled(-eps, &u)?
        }
        AttackKind::Alie => {
            let (_, sigma) = coordinate_stats(&visible)?;
            mu.add_scaled(-eps, &sigma)?
        }
        AttackKind::Dissensus => {
            let pull = mu.sub(ctx.receiver_own)?;
            ctx.receiver_own.add_scaled(-eps, &pull)?
        }
    };
    Ok(Crafted {
        vector,
        fallback: false,
    })
}

/// ALIE multiplier `z = Phi^{-1}(1 - phi)` with
/// `phi = max(1, floor((h + b) / 2) + 1 - b) / h`, clamped to `[0, 4]`.
pub fn default_alie_z(num_honest: usize, num_byz: usize) -> Result<f64> {
    if num_honest == 0 {
        return Err(invalid("ALIE needs at least one honest node"));
    }
    let supporters = ((num_honest + num_byz) / 2 + 1).saturating_sub(num_byz).max(1);
    let level = 1.0 - supporters as f64 / num_honest as f64;
    if level <= 0.0 {
        return Ok(0.0);
    }
    if level >= 1.0 {
        return Ok(MAX_ALIE_Z);
    }
    let z = Normal::standard().inverse_cdf(level);
    Ok(z.clamp(0.0, MAX_ALIE_Z))
}
