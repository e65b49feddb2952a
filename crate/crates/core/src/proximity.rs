//! Proximity: the discounted visitation distribution from the current state
//! under a softened version of the current policy.

use crate::error::{PlanError, Result, WorldviewError};
use crate::planner::Planner;
use crate::space::SpecificState;
use crate::worldview::{PlannerTables, StateId, TransitionRow, Worldview};

/// Residual at which the fixed-point iteration stops.
pub const PROXIMITY_TOL: f64 = 1e-10;

/// Per-state action distribution, indexed by state id.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn get(&self, id: StateId) -> &[f64] {
        let i = id as usize * self.actions;
        &self.probs[i..i + self.actions]
    }
}

/// Keeps `1 − ρ` on the current action and spreads `ρ` evenly over the rest.
pub fn build_future_policy(wv: &Worldview, tables: &PlannerTables, actions: usize, rho: f64) -> StochasticPolicy {
    let mut probs = vec![0.0; wv.id_bound() * actions];
    let other = if actions > 1 { rho / (actions - 1) as f64 } else { 0.0 };
    for id in wv.ids() {
        let row = &mut probs[id as usize * actions..(id as usize + 1) * actions];
        row.fill(other);
        row[tables.action(id)] = if actions > 1 { 1.0 - rho } else { 1.0 };
    }
    StochasticPolicy { actions, probs }
}

/// `1 − γ_p` on the state containing `s_cur`, zero elsewhere.
pub fn cur_vector(wv: &Worldview, s_cur: &SpecificState, gamma_p: f64) -> Result<Vec<f64>, WorldviewError> {
    let mut cur = vec![0.0; wv.id_bound()];
    cur[wv.locate(s_cur)? as usize] = 1.0 - gamma_p;
    Ok(cur)
}

/// Iteration cap for a contraction factor `gamma_p`.
pub fn iteration_cap(gamma_p: f64) -> usize {
    let k = (PROXIMITY_TOL.ln() / gamma_p.ln()).ceil();
    if k.is_finite() {
        (10.0 * k.max(1.0)) as usize
    } else {
        10
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityReport {
    pub iterations: usize,
    pub residual: f64,
    pub sum: f64,
}

/// Solves `P = cur + γ_p·Tᵀ·P` by fixed-point iteration, where `rows[i]` is
/// the row of `ids[i]`. The start vector is `cur / (1 − γ_p)`, which sums to
/// one, so every iterate does too and unreachable states stay exactly zero.
pub fn solve_fixed_point(
    ids: &[StateId],
    rows: &[TransitionRow],
    cur: &[f64],
    gamma_p: f64,
) -> Result<(Vec<f64>, ProximityReport)> {
    let scale = 1.0 / (1.0 - gamma_p);
    let mut p: Vec<f64> = cur.iter().map(|c| c * scale).collect();
    let mut next = vec![0.0; p.len()];
    let cap = iteration_cap(gamma_p);
    let mut residual = f64::INFINITY;
    for it in 1..=cap {
        next.copy_from_slice(cur);
        for (&id, row) in ids.iter().zip(rows) {
            let mass = gamma_p * p[id as usize];
            if mass != 0.0 {
                for &(w2, q) in row {
                    next[w2 as usize] += mass * q;
                }
            }
        }
        residual = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut p, &mut next);
        if residual <= PROXIMITY_TOL {
            let sum = ids.iter().map(|&i| p[i as usize]).sum();
            return Ok((p, ProximityReport { iterations: it, residual, sum }));
        }
    }
    Err(PlanError::NoConvergence { iterations: cap, residual })
}

impl Planner {
    /// Recomputes every state's proximity for the agent at `s_cur`.
    pub fn compute_proximity(&mut self, s_cur: &SpecificState) -> Result<ProximityReport> {
        let ids = self.order().to_vec();
        let (gamma_p, rho) = (self.config().gamma_p, self.config().replanning);
        let problem = self.problem().clone();
        let actions = problem.model.action_count();
        let future = build_future_policy(&self.worldview, &self.tables, actions, rho);
        let cur = cur_vector(&self.worldview, s_cur, gamma_p)?;
        let mut rows = Vec::with_capacity(ids.len());
        for &id in &ids {
            let dy = self.cache.get(&self.worldview, &problem.model, id);
            let mut acc: Vec<(StateId, f64)> = Vec::new();
            for (a, &pa) in future.get(id).iter().enumerate() {
                if pa > 0.0 {
                    acc.extend(dy.rows[a].iter().map(|&(w, q)| (w, pa * q)));
                }
            }
            acc.sort_by_key(|e| e.0);
            let mut row: TransitionRow = Vec::with_capacity(acc.len());
            for (w, q) in acc {
                match row.last_mut() {
                    Some(last) if last.0 == w => last.1 += q,
                    _ => row.push((w, q)),
                }
            }
            rows.push(row);
        }
        let (p, report) = solve_fixed_point(&ids, &rows, &cur, gamma_p)?;
        for &id in &ids {
            self.tables.proximity[id as usize] = p[id as usize];
        }
        self.mark_proximity(s_cur);
        Ok(report)
    }
}
