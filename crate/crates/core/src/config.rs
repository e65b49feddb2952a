//! Planner configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::worldview::DEFAULT_WORLDVIEW_CAP;

/// Policy update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Compares successor values as stored.
    Simple,
    /// Averages successor values over the dimensions abstract in any
    /// successor before comparing.
    #[default]
    Lua,
}

impl FromStr for Variant {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple" => Ok(Variant::Simple),
            "lua" => Ok(Variant::Lua),
            _ => Err(PlanError::Config(format!("unknown variant `{s}` (expected simple or lua)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Simple => "simple",
            Variant::Lua => "lua",
        })
    }
}

/// One iteration of the planner loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    PolicyValue,
    PolicyRefine,
    ProximityCalc,
    ProximityRefine,
    ProximityCoarsen,
}

impl Phase {
    pub const ALL: [Phase; 5] =
        [Phase::PolicyValue, Phase::PolicyRefine, Phase::ProximityCalc, Phase::ProximityRefine, Phase::ProximityCoarsen];

    pub fn name(self) -> &'static str {
        match self {
            Phase::PolicyValue => "policy-value",
            Phase::PolicyRefine => "policy-refine",
            Phase::ProximityCalc => "proximity-calc",
            Phase::ProximityRefine => "proximity-refine",
            Phase::ProximityCoarsen => "proximity-coarsen",
        }
    }
}

impl FromStr for Phase {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| PlanError::Config(format!("unknown phase `{s}`")))
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Relative draw weights of the loop phases; zero disables a phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PhaseWeights {
    pub policy_value: f64,
    pub policy_refine: f64,
    pub proximity_calc: f64,
    pub proximity_refine: f64,
    pub proximity_coarsen: f64,
}

impl Default for PhaseWeights {
    fn default() -> Self {
        PhaseWeights::only(&Phase::ALL)
    }
}

impl PhaseWeights {
    /// Weight 1 on each listed phase, 0 elsewhere.
    pub fn only(phases: &[Phase]) -> Self {
        let mut w = PhaseWeights {
            policy_value: 0.0,
            policy_refine: 0.0,
            proximity_calc: 0.0,
            proximity_refine: 0.0,
            proximity_coarsen: 0.0,
        };
        for &p in phases {
            *w.get_mut(p) = 1.0;
        }
        w
    }

    pub fn get(&self, p: Phase) -> f64 {
        match p {
            Phase::PolicyValue => self.policy_value,
            Phase::PolicyRefine => self.policy_refine,
            Phase::ProximityCalc => self.proximity_calc,
            Phase::ProximityRefine => self.proximity_refine,
            Phase::ProximityCoarsen => self.proximity_coarsen,
        }
    }

    pub fn get_mut(&mut self, p: Phase) -> &mut f64 {
        match p {
            Phase::PolicyValue => &mut self.policy_value,
            Phase::PolicyRefine => &mut self.policy_refine,
            Phase::ProximityCalc => &mut self.proximity_calc,
            Phase::ProximityRefine => &mut self.proximity_refine,
            Phase::ProximityCoarsen => &mut self.proximity_coarsen,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        Phase::ALL.map(|p| self.get(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct PlannerConfig {
    /// Reward discount; the problem's default when unset.
    pub gamma: Option<f64>,
    /// Proximity discount.
    pub gamma_p: f64,
    /// Probability mass the estimated future policy moves off the current action.
    pub replanning: f64,
    /// Repetitions per policy and value phase.
    pub n_sweeps: usize,
    /// Value-only sweeps after a proximity refinement.
    pub value_only_sweeps: usize,
    /// Proximity above which states are refined; `1/(4|W|)` when unset.
    pub refine_threshold: Option<f64>,
    /// Proximity below which states are coarsened; `1/(4|W|)` when unset.
    pub coarsen_threshold: Option<f64>,
    pub phase_weights: PhaseWeights,
    pub variant: Variant,
    pub reward_step: bool,
    pub nexus_step: bool,
    pub worldview_cap: usize,
    /// Draw weights for the dimension refined by proximity; uniform when unset.
    pub dim_weights: Option<Vec<f64>>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            gamma: None,
            gamma_p: 0.95,
            replanning: 0.1,
            n_sweeps: 10,
            value_only_sweeps: 2,
            refine_threshold: None,
            coarsen_threshold: None,
            phase_weights: PhaseWeights::default(),
            variant: Variant::Lua,
            reward_step: true,
            nexus_step: true,
            worldview_cap: DEFAULT_WORLDVIEW_CAP,
            dim_weights: None,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: String| Err(PlanError::Config(m));
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return bad(format!("gamma {g} outside [0, 1)"));
            }
        }
        if !(0.0..1.0).contains(&self.gamma_p) {
            return bad(format!("gamma-p {} outside [0, 1)", self.gamma_p));
        }
        if !(0.0..=1.0).contains(&self.replanning) {
            return bad(format!("replanning probability {} outside [0, 1]", self.replanning));
        }
        for (name, t) in [("refine", self.refine_threshold), ("coarsen", self.coarsen_threshold)] {
            if t.is_some_and(|t| !(t >= 0.0)) {
                return bad(format!("{name} threshold must be non-negative"));
            }
        }
        let w = self.phase_weights.as_array();
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || !w.iter().any(|&x| x > 0.0) {
            return bad("phase weights must be non-negative with at least one positive".into());
        }
        if let Some(dw) = &self.dim_weights {
            if dw.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || !dw.iter().any(|&x| x > 0.0) {
                return bad("dimension weights must be non-negative with at least one positive".into());
            }
        }
        if self.worldview_cap == 0 {
            return bad("worldview cap must be positive".into());
        }
        Ok(())
    }

    pub fn refine_threshold_for(&self, size: usize) -> f64 {
        self.refine_threshold.unwrap_or(1.0 / (4.0 * size as f64))
    }

    pub fn coarsen_threshold_for(&self, size: usize) -> f64 {
        self.coarsen_threshold.unwrap_or(1.0 / (4.0 * size as f64))
    }
}
