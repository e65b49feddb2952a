//! Actions, transition and reward models, and complete problem instances.

use std::collections::BTreeSet;

use crate::error::ModelError;
use crate::space::{Assignment, FactoredSpace, SpecificState};
use crate::tree::{compile_first_match, DecisionTree};

/// Probability mass below which an outcome is dropped.
const PROB_EPS: f64 = 1e-15;

/// One guarded transition. When the guard is the first to match, each
/// `(p, effect)` outcome fires with probability `p`; any remaining mass
/// leaves the state unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRule {
    pub guard: Assignment,
    pub outcomes: Vec<(f64, Assignment)>,
}

impl TransitionRule {
    pub fn new(guard: Assignment, prob: f64, effect: Assignment) -> Self {
        TransitionRule { guard, outcomes: vec![(prob, effect)] }
    }

    pub fn deterministic(guard: Assignment, effect: Assignment) -> Self {
        TransitionRule::new(guard, 1.0, effect)
    }

    fn validate(&self, index: usize, space: &FactoredSpace) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidRule { index, reason };
        space.check_assignment(&self.guard).map_err(|e| bad(e.to_string()))?;
        let mut total = 0.0;
        for (p, eff) in &self.outcomes {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(bad(format!("probability {p} outside (0, 1]")));
            }
            space.check_assignment(eff).map_err(|e| bad(e.to_string()))?;
            total += p;
        }
        if total > 1.0 + 1e-12 {
            return Err(bad(format!("outcome probabilities sum to {total}")));
        }
        Ok(())
    }

    /// Outcome list padded with the "unchanged" remainder.
    fn leaf(&self) -> Outcomes {
        let mut out: Vec<(f64, Assignment)> = Vec::with_capacity(self.outcomes.len() + 1);
        let mut total = 0.0;
        for (p, eff) in &self.outcomes {
            total += p;
            out.push((*p, eff.clone()));
        }
        let rest = 1.0 - total;
        if rest > PROB_EPS {
            out.push((rest, Assignment::empty()));
        }
        Outcomes(out)
    }
}

/// Leaf payload of a transition tree: a stochastic choice among effects.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes(pub Vec<(f64, Assignment)>);

impl Outcomes {
    pub fn unchanged() -> Self {
        Outcomes(vec![(1.0, Assignment::empty())])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, (f64, Assignment)> {
        self.0.iter()
    }
}

/// Guarded reward value; the first matching rule applies.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardRule {
    pub guard: Assignment,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct ActionModel {
    names: Vec<String>,
    rules: Vec<Vec<TransitionRule>>,
    trees: Vec<DecisionTree<Outcomes>>,
    reward_rules: Vec<RewardRule>,
    reward_default: f64,
    reward_tree: DecisionTree<f64>,
}

impl ActionModel {
    /// Builds a model from per-action rule lists. The first action is the
    /// default action and all ties are broken in declaration order.
    pub fn new(
        space: &FactoredSpace,
        actions: Vec<(String, Vec<TransitionRule>)>,
        reward_rules: Vec<RewardRule>,
        reward_default: f64,
    ) -> Result<Self, ModelError> {
        if actions.is_empty() {
            return Err(ModelError::NoActions);
        }
        let mut names = Vec::with_capacity(actions.len());
        let mut rules = Vec::with_capacity(actions.len());
        let mut trees = Vec::with_capacity(actions.len());
        for (name, list) in actions {
            if names.contains(&name) {
                return Err(ModelError::InvalidRule { index: 0, reason: format!("duplicate action `{name}`") });
            }
            for (i, r) in list.iter().enumerate() {
                r.validate(i, space)?;
            }
            let guards: Vec<Assignment> = list.iter().map(|r| r.guard.clone()).collect();
            let leaves: Vec<Outcomes> = list.iter().map(TransitionRule::leaf).collect();
            trees.push(compile_first_match(space, &guards, &leaves, Outcomes::unchanged())?);
            names.push(name);
            rules.push(list);
        }
        let guards: Vec<Assignment> = reward_rules.iter().map(|r| r.guard.clone()).collect();
        let values: Vec<f64> = reward_rules.iter().map(|r| r.reward).collect();
        let reward_tree = compile_first_match(space, &guards, &values, reward_default)?;
        Ok(ActionModel { names, rules, trees, reward_rules, reward_default, reward_tree })
    }

    pub fn action_count(&self) -> usize {
        self.names.len()
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.names[a]
    }

    pub fn action_names(&self) -> &[String] {
        &self.names
    }

    pub fn action_index(&self, name: &str) -> Result<usize, ModelError> {
        self.names.iter().position(|n| n == name).ok_or_else(|| ModelError::UnknownAction(name.to_string()))
    }

    pub fn rules(&self, a: usize) -> &[TransitionRule] {
        &self.rules[a]
    }

    pub fn tree(&self, a: usize) -> &DecisionTree<Outcomes> {
        &self.trees[a]
    }

    pub fn reward_rules(&self) -> &[RewardRule] {
        &self.reward_rules
    }

    pub fn reward_default(&self) -> f64 {
        self.reward_default
    }

    pub fn reward_tree(&self) -> &DecisionTree<f64> {
        &self.reward_tree
    }

    /// Successor distribution of `s` under action `a`, with duplicate
    /// successors merged. Order follows the leaf's outcome order.
    pub fn transition_distribution(&self, a: usize, s: &SpecificState) -> Result<Vec<(SpecificState, f64)>, ModelError> {
        let tree = self.trees.get(a).ok_or(ModelError::ActionOutOfRange(a))?;
        let mut out: Vec<(SpecificState, f64)> = Vec::with_capacity(2);
        for (p, eff) in tree.eval(s).iter() {
            let next = s.apply(eff);
            match out.iter_mut().find(|(t, _)| *t == next) {
                Some(slot) => slot.1 += p,
                None => out.push((next, *p)),
            }
        }
        Ok(out)
    }

    pub fn reward_of_state(&self, s: &SpecificState) -> f64 {
        *self.reward_tree.eval(s)
    }

    /// Distinct partial assignments read off the root-to-leaf paths of all
    /// action trees, in sorted order.
    pub fn enumerate_nexuses(&self) -> Vec<Assignment> {
        let mut all = BTreeSet::new();
        for t in &self.trees {
            all.extend(t.path_assignments());
        }
        all.into_iter().collect()
    }

    /// Smallest and largest reward leaf.
    pub fn reward_bounds(&self) -> (f64, f64) {
        self.reward_tree
            .leaves()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
    }
}

/// A complete problem: space, dynamics, start state and discount.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub space: FactoredSpace,
    pub model: ActionModel,
    pub initial_state: SpecificState,
    pub gamma_default: f64,
    /// Partial assignment identifying goal states, when the problem has one.
    pub goal: Option<Assignment>,
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        space: FactoredSpace,
        model: ActionModel,
        initial_state: SpecificState,
        gamma_default: f64,
        goal: Option<Assignment>,
    ) -> Result<Self, ModelError> {
        space.check_state(&initial_state)?;
        if let Some(g) = &goal {
            space.check_assignment(g)?;
        }
        Ok(ProblemInstance { name: name.into(), space, model, initial_state, gamma_default, goal })
    }

    pub fn is_goal(&self, s: &SpecificState) -> bool {
        self.goal.as_ref().is_some_and(|g| s.matches(g))
    }
}
