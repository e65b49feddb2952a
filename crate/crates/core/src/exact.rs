//! Exact solution and policy evaluation over the enumerated state space.

use nalgebra::{DMatrix, DVector};

use crate::error::{PlanError, Result};
use crate::model::ProblemInstance;
use crate::space::SpecificState;

/// Largest state space that will be enumerated by default.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Strongly connected components up to this size are solved densely.
const DENSE_LIMIT: usize = 2000;

/// An explicit MDP in compressed row form: row `s * A + a` holds the
/// successors of `s` under `a`.
#[derive(Debug, Clone)]
pub struct ExplicitMdp {
    states: usize,
    actions: usize,
    reward: Vec<f64>,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    probs: Vec<f64>,
}

impl ExplicitMdp {
    pub fn build(problem: &ProblemInstance) -> Result<Self> {
        Self::build_capped(problem, DEFAULT_ENUMERATION_CAP)
    }

    pub fn build_capped(problem: &ProblemInstance, cap: u128) -> Result<Self> {
        let size = problem.space.size();
        if size > cap || size > u32::MAX as u128 {
            return Err(PlanError::SpaceTooLarge { size, cap });
        }
        let n = size as usize;
        let na = problem.model.action_count();
        let mut reward = Vec::with_capacity(n);
        let mut row_start = Vec::with_capacity(n * na + 1);
        let mut cols = Vec::with_capacity(n * na * 2);
        let mut probs = Vec::with_capacity(n * na * 2);
        row_start.push(0);
        for i in 0..n {
            let s = problem.space.state_at(i);
            reward.push(problem.model.reward_of_state(&s));
            for a in 0..na {
                for (t, p) in problem.model.transition_distribution(a, &s)? {
                    cols.push(problem.space.index_of(&t) as u32);
                    probs.push(p);
                }
                row_start.push(cols.len());
            }
        }
        Ok(ExplicitMdp { states: n, actions: na, reward, row_start, cols, probs })
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    pub fn action_count(&self) -> usize {
        self.actions
    }

    pub fn reward(&self, s: usize) -> f64 {
        self.reward[s]
    }

    /// Successors and probabilities of `s` under `a`.
    pub fn row(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = s * self.actions + a;
        let span = self.row_start[r]..self.row_start[r + 1];
        self.cols[span.clone()].iter().map(|&c| c as usize).zip(self.probs[span].iter().copied())
    }

    fn q(&self, s: usize, a: usize, gamma: f64, v: &[f64]) -> f64 {
        self.reward[s] + gamma * self.row(s, a).map(|(t, p)| p * v[t]).sum::<f64>()
    }

    /// Lowest-numbered action whose Q-value is within `1e-9` (relative) of
    /// the best.
    pub fn greedy_action(&self, s: usize, gamma: f64, v: &[f64]) -> (usize, f64) {
        let qs: Vec<f64> = (0..self.actions).map(|a| self.q(s, a, gamma, v)).collect();
        let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * best.abs().max(1.0);
        let a = qs.iter().position(|&q| q >= best - tol).expect("at least one action");
        (a, best)
    }

    /// `max_s |V(s) - max_a Q(s,a)|`.
    pub fn bellman_residual(&self, gamma: f64, v: &[f64]) -> f64 {
        (0..self.states).map(|s| (v[s] - self.greedy_action(s, gamma, v).1).abs()).fold(0.0, f64::max)
    }

    /// `max_s |V(s) - Q(s, policy(s))|`.
    pub fn policy_residual(&self, policy: &[usize], gamma: f64, v: &[f64]) -> f64 {
        (0..self.states).map(|s| (v[s] - self.q(s, policy[s], gamma, v)).abs()).fold(0.0, f64::max)
    }

    /// Solves `V = R + gamma * T_policy V`. Components of the policy graph
    /// are solved sinks first: singletons in closed form, small components
    /// with a dense LU factorisation, larger ones by Gauss-Seidel.
    pub fn evaluate(&self, policy: &[usize], gamma: f64, tolerance: f64) -> Result<Vec<f64>> {
        assert_eq!(policy.len(), self.states);
        let mut v = vec![0.0; self.states];
        let mut slot = vec![usize::MAX; self.states];
        for comp in self.components(policy) {
            if comp.len() == 1 {
                let s = comp[0];
                let mut self_p = 0.0;
                let mut acc = 0.0;
                for (t, p) in self.row(s, policy[s]) {
                    if t == s {
                        self_p += p;
                    } else {
                        acc += p * v[t];
                    }
                }
                v[s] = (self.reward[s] + gamma * acc) / (1.0 - gamma * self_p);
            } else if comp.len() <= DENSE_LIMIT {
                let m = comp.len();
                for (k, &s) in comp.iter().enumerate() {
                    slot[s] = k;
                }
                let mut a = DMatrix::<f64>::identity(m, m);
                let mut b = DVector::<f64>::zeros(m);
                for (k, &s) in comp.iter().enumerate() {
                    b[k] = self.reward[s];
                    for (t, p) in self.row(s, policy[s]) {
                        if slot[t] != usize::MAX {
                            a[(k, slot[t])] -= gamma * p;
                        } else {
                            b[k] += gamma * p * v[t];
                        }
                    }
                }
                let x = a.lu().solve(&b).ok_or(PlanError::NoConvergence { iterations: 0, residual: f64::NAN })?;
                for (k, &s) in comp.iter().enumerate() {
                    v[s] = x[k];
                    slot[s] = usize::MAX;
                }
            } else {
                self.gauss_seidel(&comp, policy, gamma, tolerance, &mut v)?;
            }
        }
        Ok(v)
    }

    fn gauss_seidel(&self, comp: &[usize], policy: &[usize], gamma: f64, tolerance: f64, v: &mut [f64]) -> Result<()> {
        let limit = 10_000_000usize / comp.len().max(1) + 1000;
        let mut delta = f64::INFINITY;
        for it in 0..limit {
            delta = 0.0;
            for &s in comp {
                let mut self_p = 0.0;
                let mut acc = 0.0;
                for (t, p) in self.row(s, policy[s]) {
                    if t == s {
                        self_p += p;
                    } else {
                        acc += p * v[t];
                    }
                }
                let nv = (self.reward[s] + gamma * acc) / (1.0 - gamma * self_p);
                delta = f64::max(delta, (nv - v[s]).abs());
                v[s] = nv;
            }
            if delta * gamma / (1.0 - gamma) <= tolerance {
                log::debug!("gauss-seidel on {} states converged after {} sweeps", comp.len(), it + 1);
                return Ok(());
            }
        }
        Err(PlanError::NoConvergence { iterations: limit, residual: delta })
    }

    /// Strongly connected components of the graph `s -> t` for
    /// `Pr(s, policy(s), t) > 0`, `t != s`, listed sinks first.
    fn components(&self, policy: &[usize]) -> Vec<Vec<usize>> {
        const NONE: u32 = u32::MAX;
        let n = self.states;
        let mut index = vec![NONE; n];
        let mut low = vec![0u32; n];
        let mut on_stack = vec![false; n];
        let mut stack: Vec<usize> = Vec::new();
        let mut out = Vec::new();
        let mut next = 0u32;
        // Explicit call stack of (node, position within its successor row).
        let mut calls: Vec<(usize, usize)> = Vec::new();
        for root in 0..n {
            if index[root] != NONE {
                continue;
            }
            calls.push((root, 0));
            index[root] = next;
            low[root] = next;
            next += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&(v, start)) = calls.last() {
                let r = v * self.actions + policy[v];
                let (lo, hi) = (self.row_start[r], self.row_start[r + 1]);
                let mut pos = start;
                let mut descended = false;
                while lo + pos < hi {
                    let k = lo + pos;
                    pos += 1;
                    let w = self.cols[k] as usize;
                    if w == v || self.probs[k] <= 0.0 {
                        continue;
                    }
                    if index[w] == NONE {
                        index[w] = next;
                        low[w] = next;
                        next += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        descended = true;
                        break;
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                }
                calls.last_mut().expect("nonempty").1 = pos;
                if descended {
                    let w = self.cols[lo + pos - 1] as usize;
                    calls.push((w, 0));
                    continue;
                }
                calls.pop();
                if let Some(&(parent, _)) = calls.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    out.push(comp);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub policy: Vec<usize>,
    pub values: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ExactEvaluation {
    pub values: Vec<f64>,
}

/// Policy iteration with exact evaluations, starting from the default
/// action everywhere. The returned policy is greedy with respect to the
/// final values, ties going to the lowest action.
pub fn solve_mdp(mdp: &ExplicitMdp, gamma: f64, tolerance: f64) -> Result<ExactSolution> {
    check_gamma(gamma)?;
    let mut policy = vec![0usize; mdp.state_count()];
    let mut iterations = 0;
    let values = loop {
        iterations += 1;
        let v = mdp.evaluate(&policy, gamma, tolerance)?;
        let mut changed = false;
        for s in 0..mdp.state_count() {
            let current = mdp.q(s, policy[s], gamma, &v);
            let margin = 1e-10 * current.abs().max(1.0);
            let mut best = current;
            for a in 0..mdp.action_count() {
                let q = mdp.q(s, a, gamma, &v);
                if q > best + margin {
                    best = q;
                    policy[s] = a;
                    changed = true;
                }
            }
        }
        if !changed {
            break v;
        }
        if iterations > 100_000 {
            return Err(PlanError::NoConvergence { iterations, residual: mdp.bellman_residual(gamma, &v) });
        }
    };
    let policy: Vec<usize> = (0..mdp.state_count()).map(|s| mdp.greedy_action(s, gamma, &values).0).collect();
    let values = mdp.evaluate(&policy, gamma, tolerance)?;
    log::debug!("policy iteration finished after {iterations} evaluations");
    Ok(ExactSolution { policy, values, iterations })
}

/// Plain value iteration until the Bellman residual is below
/// `tolerance * (1 - gamma) / (2 * gamma)`. Only practical for moderate
/// discounts.
pub fn value_iteration(mdp: &ExplicitMdp, gamma: f64, tolerance: f64, max_sweeps: usize) -> Result<ExactSolution> {
    check_gamma(gamma)?;
    let target = tolerance * (1.0 - gamma) / (2.0 * gamma.max(1e-12));
    let mut v = vec![0.0; mdp.state_count()];
    for sweep in 1..=max_sweeps {
        let mut delta: f64 = 0.0;
        for s in 0..mdp.state_count() {
            let (_, q) = mdp.greedy_action(s, gamma, &v);
            delta = delta.max((q - v[s]).abs());
            v[s] = q;
        }
        if delta <= target {
            let policy = (0..mdp.state_count()).map(|s| mdp.greedy_action(s, gamma, &v).0).collect();
            return Ok(ExactSolution { policy, values: v, iterations: sweep });
        }
    }
    Err(PlanError::NoConvergence { iterations: max_sweeps, residual: mdp.bellman_residual(gamma, &v) })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(PlanError::Config(format!("discount {gamma} outside [0, 1)")));
    }
    Ok(())
}

pub fn solve_exact(problem: &ProblemInstance, gamma: f64, tolerance: f64) -> Result<ExactSolution> {
    solve_mdp(&ExplicitMdp::build(problem)?, gamma, tolerance)
}

/// Exact value of a policy given as a function of the specific state.
pub fn evaluate_policy_exact<F>(problem: &ProblemInstance, policy: F, gamma: f64, tolerance: f64) -> Result<ExactEvaluation>
where
    F: Fn(&SpecificState) -> usize,
{
    let mdp = ExplicitMdp::build(problem)?;
    evaluate_on(&mdp, problem, policy, gamma, tolerance)
}

/// As [`evaluate_policy_exact`] with a prebuilt explicit MDP.
pub fn evaluate_on<F>(mdp: &ExplicitMdp, problem: &ProblemInstance, policy: F, gamma: f64, tolerance: f64) -> Result<ExactEvaluation>
where
    F: Fn(&SpecificState) -> usize,
{
    check_gamma(gamma)?;
    let na = mdp.action_count();
    let table: Vec<usize> = (0..mdp.state_count())
        .map(|i| {
            let a = policy(&problem.space.state_at(i));
            assert!(a < na, "policy returned action {a}");
            a
        })
        .collect();
    Ok(ExactEvaluation { values: mdp.evaluate(&table, gamma, tolerance)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionModel, RewardRule, TransitionRule};
    use crate::space::{Assignment, Dimension, FactoredSpace};

    fn single() -> ProblemInstance {
        let sp = FactoredSpace::new(vec![Dimension::numeric("s", 2)]).unwrap();
        let m = ActionModel::new(&sp, vec![("stay".into(), vec![])], vec![], -1.0).unwrap();
        ProblemInstance::new("one", sp, m, SpecificState::new(vec![0]), 0.95, None).unwrap()
    }

    /// Three-state chain 0 -> 1 -> 2 with 2 absorbing and reward 0 there.
    fn chain() -> ProblemInstance {
        let sp = FactoredSpace::new(vec![Dimension::numeric("s", 3)]).unwrap();
        let a = |v| Assignment::new(vec![(0, v)]).unwrap();
        let go = vec![TransitionRule::new(a(0), 0.5, a(1)), TransitionRule::new(a(1), 0.5, a(2))];
        let m = ActionModel::new(
            &sp,
            vec![("stay".into(), vec![]), ("go".into(), go)],
            vec![RewardRule { guard: a(2), reward: 0.0 }],
            -1.0,
        )
        .unwrap();
        ProblemInstance::new("chain", sp, m, SpecificState::new(vec![0]), 0.9, None).unwrap()
    }

    #[test]
    fn geometric_series() {
        let sol = solve_exact(&single(), 0.95, 1e-10).unwrap();
        assert!((sol.values[0] + 20.0).abs() < 1e-9);
    }

    #[test]
    fn chain_by_hand() {
        // V2 = 0; V1 = -1 + 0.9(0.5 V1 + 0.5 V2) => V1 = -1/0.55
        // V0 = -1 + 0.9(0.5 V0 + 0.5 V1) => V0 = (-1 + 0.45 V1)/0.55
        let sol = solve_exact(&chain(), 0.9, 1e-12).unwrap();
        let v1 = -1.0 / 0.55;
        let v0 = (-1.0 + 0.45 * v1) / 0.55;
        assert!((sol.values[2]).abs() < 1e-12);
        assert!((sol.values[1] - v1).abs() < 1e-12);
        assert!((sol.values[0] - v0).abs() < 1e-12);
        assert_eq!(sol.policy, vec![1, 1, 0]);
    }

    #[test]
    fn components_sinks_first() {
        let p = chain();
        let mdp = ExplicitMdp::build(&p).unwrap();
        let comps = mdp.components(&[1, 1, 1]);
        assert_eq!(comps, vec![vec![2], vec![1], vec![0]]);
    }

    #[test]
    fn dense_cycle_matches_gauss_seidel() {
        // A ring of states cycling under `go` with probability 0.7.
        let n = 12u16;
        let sp = FactoredSpace::new(vec![Dimension::numeric("s", n as usize)]).unwrap();
        let a = |v| Assignment::new(vec![(0, v)]).unwrap();
        let go: Vec<_> = (0..n).map(|i| TransitionRule::new(a(i), 0.7, a((i + 1) % n))).collect();
        let rewards = (0..n).map(|i| RewardRule { guard: a(i), reward: -(i as f64) }).collect();
        let m = ActionModel::new(&sp, vec![("go".into(), go)], rewards, 0.0).unwrap();
        let p = ProblemInstance::new("ring", sp, m, SpecificState::new(vec![0]), 0.99, None).unwrap();
        let mdp = ExplicitMdp::build(&p).unwrap();
        let pol = vec![0; n as usize];
        let dense = mdp.evaluate(&pol, 0.99, 1e-12).unwrap();
        let mut gs = vec![0.0; n as usize];
        let all: Vec<usize> = (0..n as usize).collect();
        mdp.gauss_seidel(&all, &pol, 0.99, 1e-11, &mut gs).unwrap();
        for i in 0..n as usize {
            assert!((dense[i] - gs[i]).abs() < 1e-8, "{i}: {} vs {}", dense[i], gs[i]);
        }
        assert!(mdp.policy_residual(&pol, 0.99, &dense) < 1e-9);
    }

    #[test]
    fn refuses_large_spaces() {
        let p = crate::domains::build_robot4(20).unwrap();
        let e = ExplicitMdp::build(&p).unwrap_err();
        assert!(matches!(e, PlanError::SpaceTooLarge { size: 20_971_520, .. }));
    }

    #[test]
    fn value_iteration_agrees() {
        let p = chain();
        let mdp = ExplicitMdp::build(&p).unwrap();
        let a = solve_mdp(&mdp, 0.9, 1e-10).unwrap();
        let b = value_iteration(&mdp, 0.9, 1e-10, 10_000).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 2e-10);
        }
    }
}
