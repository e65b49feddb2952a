//! Policy and value calculation over a worldview.

use std::sync::Arc;

use crate::abstraction::select_initial_abstraction;
use crate::config::{PlannerConfig, Variant};
use crate::error::Result;
use crate::model::{ActionModel, ProblemInstance};
use crate::space::SpecificState;
use crate::worldview::{DynamicsCache, PlannerTables, StateId, Worldview};

/// Self-transition probability treated as certain.
const SELF_LOOP_TOL: f64 = 1e-12;

/// Relative tolerance for ties in the policy update.
pub const TIE_TOL: f64 = 1e-9;

/// Smallest index whose score is within tolerance of the best.
pub fn min_argmax(scores: &[f64]) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * best.abs().max(1.0);
    scores.iter().position(|&q| q >= best - tol).unwrap_or(0)
}

/// One planner instance: worldview, tables and cached dynamics.
#[derive(Debug, Clone)]
pub struct Planner {
    problem: Arc<ProblemInstance>,
    config: PlannerConfig,
    gamma: f64,
    pub(crate) worldview: Worldview,
    pub(crate) tables: PlannerTables,
    pub(crate) cache: DynamicsCache,
    order: Vec<StateId>,
    order_version: Option<u64>,
    policy_version: u64,
    proximity_stamp: Option<(u64, u64, SpecificState)>,
}

impl Planner {
    /// Initial abstraction, initial tables and one policy and value phase.
    pub fn new(problem: Arc<ProblemInstance>, config: PlannerConfig) -> Result<Self> {
        config.validate()?;
        let wv = select_initial_abstraction(&problem, config.reward_step, config.nexus_step, config.worldview_cap)?;
        let mut p = Self::with_worldview(problem, config, wv)?;
        p.policy_value_phase();
        Ok(p)
    }

    /// Planner over a given worldview with initial tables and no planning:
    /// every state gets the default action, value 0 and proximity `|w|/|S|`.
    pub fn with_worldview(problem: Arc<ProblemInstance>, config: PlannerConfig, mut wv: Worldview) -> Result<Self> {
        config.validate()?;
        wv.set_cap(config.worldview_cap);
        let gamma = config.gamma.unwrap_or(problem.gamma_default);
        let mut tables = PlannerTables::default();
        tables.ensure(wv.id_bound());
        let total = wv.space_size() as f64;
        for id in wv.ids().collect::<Vec<_>>() {
            tables.set(id, 0, 0.0, wv.size_of(id) as f64 / total);
        }
        Ok(Planner {
            problem,
            config,
            gamma,
            worldview: wv,
            tables,
            cache: DynamicsCache::new(),
            order: Vec::new(),
            order_version: None,
            policy_version: 0,
            proximity_stamp: None,
        })
    }

    pub fn problem(&self) -> &Arc<ProblemInstance> {
        &self.problem
    }

    pub fn model(&self) -> &ActionModel {
        &self.problem.model
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn worldview(&self) -> &Worldview {
        &self.worldview
    }

    pub fn tables(&self) -> &PlannerTables {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut PlannerTables {
        self.policy_version += 1;
        &mut self.tables
    }

    /// Incremented whenever some policy entry may have changed.
    pub fn policy_version(&self) -> u64 {
        self.policy_version
    }

    pub(crate) fn bump_policy(&mut self) {
        self.policy_version += 1;
    }

    pub(crate) fn mark_proximity(&mut self, s_cur: &SpecificState) {
        self.proximity_stamp = Some((self.worldview.version(), self.policy_version, s_cur.clone()));
    }

    /// Whether proximities were computed for `s_cur` with the current
    /// worldview and policy.
    pub fn proximity_is_fresh(&self, s_cur: &SpecificState) -> bool {
        self.proximity_stamp.as_ref().is_some_and(|(wv, pol, s)| {
            *wv == self.worldview.version() && *pol == self.policy_version && s == s_cur
        })
    }

    /// Brings the dynamics cache, tables and sweep order in line with the
    /// worldview.
    pub(crate) fn sync(&mut self) {
        self.cache.sync(&self.worldview);
        self.tables.ensure(self.worldview.id_bound());
        if self.order_version != Some(self.worldview.version()) {
            self.order = self.worldview.sorted_ids();
            self.order_version = Some(self.worldview.version());
        }
    }

    /// Worldview states in sweep order.
    pub fn order(&mut self) -> &[StateId] {
        self.sync();
        &self.order
    }

    pub fn locate(&self, s: &SpecificState) -> Result<StateId> {
        Ok(self.worldview.locate(s)?)
    }

    pub fn value_of(&self, s: &SpecificState) -> Result<f64> {
        Ok(self.tables.value[self.locate(s)? as usize])
    }

    pub fn action_of(&self, s: &SpecificState) -> Result<usize> {
        Ok(self.tables.action(self.locate(s)?))
    }

    pub fn value_update(&mut self, id: StateId) {
        self.sync();
        self.value_update_synced(id);
    }

    fn value_update_synced(&mut self, id: StateId) {
        let a = self.tables.action(id);
        let dy = self.cache.get(&self.worldview, &self.problem.model, id);
        let v = if dy.self_prob[a] >= 1.0 - SELF_LOOP_TOL {
            dy.reward / (1.0 - self.gamma)
        } else {
            dy.reward + self.gamma * dy.rows[a].iter().map(|&(w, p)| p * self.tables.value[w as usize]).sum::<f64>()
        };
        self.tables.value[id as usize] = v;
    }

    /// Per-action scores used by the policy update.
    pub fn action_scores(&mut self, id: StateId, variant: Variant) -> Vec<f64> {
        self.sync();
        self.scores_synced(id, variant)
    }

    fn scores_synced(&mut self, id: StateId, variant: Variant) -> Vec<f64> {
        let (wv, model) = (&self.worldview, &self.problem.model);
        let rows = match variant {
            Variant::Simple => &self.cache.get(wv, model, id).rows[..],
            Variant::Lua => self.cache.get_lua(wv, model, id).lua_rows(),
        };
        rows.iter().map(|row| row.iter().map(|&(w, p)| p * self.tables.value[w as usize]).sum()).collect()
    }

    /// Returns whether the action changed.
    pub fn policy_update(&mut self, id: StateId) -> bool {
        self.sync();
        self.policy_update_synced(id)
    }

    fn policy_update_synced(&mut self, id: StateId) -> bool {
        let scores = self.scores_synced(id, self.config.variant);
        let a = min_argmax(&scores) as u32;
        let changed = self.tables.policy[id as usize] != a;
        if changed {
            self.tables.policy[id as usize] = a;
            self.policy_version += 1;
        }
        changed
    }

    /// `n_sweeps` repetitions of a value sweep followed by a combined policy
    /// and value sweep, in pattern order. Returns the number of policy changes.
    pub fn policy_value_phase(&mut self) -> usize {
        self.policy_value_sweeps(self.config.n_sweeps)
    }

    pub fn policy_value_sweeps(&mut self, n: usize) -> usize {
        self.sync();
        let order = std::mem::take(&mut self.order);
        let mut changes = 0;
        for _ in 0..n {
            for &id in &order {
                self.value_update_synced(id);
            }
            for &id in &order {
                changes += self.policy_update_synced(id) as usize;
                self.value_update_synced(id);
            }
        }
        self.order = order;
        changes
    }

    pub fn value_only_phase(&mut self, iterations: usize) {
        self.sync();
        let order = std::mem::take(&mut self.order);
        for _ in 0..iterations {
            for &id in &order {
                self.value_update_synced(id);
            }
        }
        self.order = order;
    }

    /// Largest change one greedy simple-variant backup would make.
    pub fn bellman_residual(&mut self) -> f64 {
        self.sync();
        let order = self.order.clone();
        let mut worst: f64 = 0.0;
        for id in order {
            let best = self.scores_synced(id, Variant::Simple).into_iter().fold(f64::NEG_INFINITY, f64::max);
            let r = self.cache.get(&self.worldview, &self.problem.model, id).reward;
            worst = worst.max((r + self.gamma * best - self.tables.value[id as usize]).abs());
        }
        worst
    }

    /// Runs policy and value phases until the residual drops below `tol`
    /// or `max_phases` is reached; returns the phases run.
    pub fn converge(&mut self, tol: f64, max_phases: usize) -> usize {
        for k in 1..=max_phases {
            self.policy_value_phase();
            if self.bellman_residual() < tol {
                return k;
            }
        }
        max_phases
    }
}
