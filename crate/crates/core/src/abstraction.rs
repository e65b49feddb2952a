//! Choosing and changing the worldview: initial abstraction, policy-based
//! refinement, and proximity-based refinement and coarsening.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Result, WorldviewError};
use crate::model::ProblemInstance;
use crate::planner::Planner;
use crate::space::Assignment;
use crate::worldview::{coarsen_group, refine_state, Pattern, PlannerTables, StateId, Worldview, ABSTRACT};

/// Refines `id` along the nexus dimensions in declaration order, each time
/// keeping only the child that agrees with the nexus.
fn refine_towards(wv: &mut Worldview, mut id: StateId, nexus: &Assignment) -> Result<(), WorldviewError> {
    for &(d, v) in nexus.iter() {
        if wv.pattern(id).is_abstract(d) {
            id = wv.split(id, d)?[v as usize];
        }
    }
    Ok(())
}

/// Starts from `{S}`. The reward step makes every dimension the reward
/// depends on concrete everywhere; the nexus step refines every state that
/// intersects a nexus until it is concrete in the nexus dimensions.
pub fn select_initial_abstraction(
    problem: &ProblemInstance,
    reward_step: bool,
    nexus_step: bool,
    cap: usize,
) -> Result<Worldview, WorldviewError> {
    let mut wv = Worldview::singleton_with_cap(&problem.space, cap);
    if reward_step {
        for d in problem.model.reward_tree().tested_dims() {
            for id in wv.sorted_ids() {
                wv.split(id, d)?;
            }
        }
    }
    if nexus_step {
        let dims = problem.space.dim_count();
        for nexus in problem.model.enumerate_nexuses() {
            let mut region = vec![ABSTRACT; dims];
            for &(d, v) in nexus.iter() {
                region[d] = v;
            }
            let mut targets: Vec<(Pattern, StateId)> =
                wv.intersecting(&region).into_iter().map(|id| (wv.pattern(id).clone(), id)).collect();
            targets.sort();
            for (_, id) in targets {
                refine_towards(&mut wv, id, &nexus)?;
            }
        }
    }
    Ok(wv)
}

/// Whether the states intersecting `region` disagree on the policy.
pub fn policy_differs(wv: &Worldview, tables: &PlannerTables, region: &Pattern) -> bool {
    let mut first = None;
    let mut differs = false;
    wv.for_each_intersecting(region.values(), |id| {
        let a = tables.policy[id as usize];
        match first {
            None => first = Some(a),
            Some(f) if f != a => differs = true,
            _ => {}
        }
    });
    differs
}

/// A pending refinement: the state as it was when collected, and the
/// dimension to refine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementCandidate {
    pub id: StateId,
    pub pattern: Pattern,
    pub dim: usize,
}

/// Drops a collection of candidates that no longer describe a live state
/// abstract in the candidate dimension.
fn still_valid(wv: &Worldview, c: &RefinementCandidate) -> bool {
    wv.contains(c.id) && wv.pattern(c.id) == &c.pattern && c.pattern.is_abstract(c.dim)
}

/// Proximity-based coarsening groups: full sibling groups of low-proximity
/// states, each with the dimension they differ in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarsenGroup {
    pub members: Vec<(StateId, Pattern)>,
    pub dim: usize,
}

pub fn coarsening_groups(wv: &Worldview, tables: &PlannerTables, threshold: f64) -> Vec<CoarsenGroup> {
    let mut by_shape: BTreeMap<Vec<bool>, Vec<StateId>> = BTreeMap::new();
    for id in wv.sorted_ids() {
        if tables.proximity[id as usize] < threshold {
            let shape = wv.pattern(id).values().iter().map(|&v| v == ABSTRACT).collect();
            by_shape.entry(shape).or_default().push(id);
        }
    }
    let mut groups = Vec::new();
    for (shape, ids) in by_shape {
        for d in (0..shape.len()).filter(|&d| !shape[d]) {
            let mut pot: BTreeMap<Pattern, Vec<StateId>> = BTreeMap::new();
            for &id in &ids {
                pot.entry(wv.pattern(id).with(d, ABSTRACT)).or_default().push(id);
            }
            for members in pot.into_values() {
                if members.len() == wv.widths()[d] {
                    let members = members.into_iter().map(|id| (id, wv.pattern(id).clone())).collect();
                    groups.push(CoarsenGroup { members, dim: d });
                }
            }
        }
    }
    groups
}

impl Planner {
    /// Candidates `(w, d)` such that some successor of `w` is concrete in
    /// `d` where `w` is abstract, and the policy is not uniform over that
    /// successor made abstract in `d`. Returned in sweep order.
    pub fn policy_refinement_candidates(&mut self) -> Vec<RefinementCandidate> {
        self.sync();
        let order = self.order().to_vec();
        let dims = self.worldview.dim_count();
        let problem = self.problem().clone();
        let mut memo: HashMap<Pattern, bool> = HashMap::new();
        let mut seen: HashSet<(StateId, usize)> = HashSet::new();
        let mut out = Vec::new();
        for id in order {
            let pattern = self.worldview.pattern(id).clone();
            if pattern.abstract_dims().next().is_none() {
                continue;
            }
            let rows = self.cache.get(&self.worldview, &problem.model, id).rows.clone();
            for row in &rows {
                for &(w2, p) in row {
                    if p <= 0.0 {
                        continue;
                    }
                    let succ = self.worldview.pattern(w2);
                    for d in 0..dims {
                        if !pattern.is_abstract(d) || succ.is_abstract(d) || seen.contains(&(id, d)) {
                            continue;
                        }
                        let bar = succ.with(d, ABSTRACT);
                        let differs = *memo
                            .entry(bar)
                            .or_insert_with_key(|bar| policy_differs(&self.worldview, &self.tables, bar));
                        if differs {
                            seen.insert((id, d));
                            out.push(RefinementCandidate { id, pattern: pattern.clone(), dim: d });
                        }
                    }
                }
            }
        }
        out
    }

    /// Collects candidates, then refines them in random order, skipping
    /// states already replaced. Returns the number of refinements.
    pub fn policy_based_refinement<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let mut cands = self.policy_refinement_candidates();
        cands.shuffle(rng);
        let mut n = 0;
        for c in cands {
            if still_valid(&self.worldview, &c) {
                refine_state(&mut self.worldview, &mut self.tables, c.id, c.dim)?;
                n += 1;
            }
        }
        Ok(n)
    }

    /// Draws a dimension and refines every state abstract in it whose
    /// proximity exceeds the refine threshold. Returns the dimension and
    /// the number of refinements.
    pub fn proximity_based_refinement<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(usize, usize)> {
        let dims = self.worldview.dim_count();
        let d = match &self.config().dim_weights {
            Some(w) if w.len() == dims => WeightedIndex::new(w).expect("validated weights").sample(rng),
            _ => rng.gen_range(0..dims),
        };
        let threshold = self.config().refine_threshold_for(self.worldview.len());
        let order = self.order().to_vec();
        let targets: Vec<StateId> = order
            .into_iter()
            .filter(|&id| self.tables.proximity[id as usize] > threshold)
            .filter(|&id| self.worldview.pattern(id).is_abstract(d))
            .collect();
        for &id in &targets {
            refine_state(&mut self.worldview, &mut self.tables, id, d)?;
        }
        Ok((d, targets.len()))
    }

    /// Merges every full sibling group of states below the coarsen
    /// threshold, in random order, skipping groups broken by earlier
    /// merges. Returns the number of merges.
    pub fn proximity_based_coarsening<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        self.sync();
        let threshold = self.config().coarsen_threshold_for(self.worldview.len());
        let mut groups = coarsening_groups(&self.worldview, &self.tables, threshold);
        groups.shuffle(rng);
        let mut n = 0;
        for g in groups {
            let intact = g.members.iter().all(|(id, p)| self.worldview.contains(*id) && self.worldview.pattern(*id) == p);
            if intact {
                let ids: Vec<StateId> = g.members.iter().map(|m| m.0).collect();
                coarsen_group(&mut self.worldview, &mut self.tables, &ids, g.dim, rng)?;
                n += 1;
            }
        }
        if n > 0 {
            self.bump_policy();
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{PlannerConfig, Variant};
    use crate::domains::{build_grid_problem, GridVariant};
    use crate::space::{Dimension, FactoredSpace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn initial(v: GridVariant, r: bool, n: bool) -> Worldview {
        let p = build_grid_problem(v).unwrap();
        select_initial_abstraction(&p, r, n, 1_000_000).unwrap()
    }

    #[test]
    fn initial_sizes() {
        assert_eq!(initial(GridVariant::ThreeDoors, false, false).len(), 1);
        assert_eq!(initial(GridVariant::ThreeDoors, true, false).len(), 200);
        let wv = initial(GridVariant::ThreeDoors, true, true);
        assert_eq!(wv.len(), 212);
        assert!(wv.check_partition().is_empty());
        assert_eq!(initial(GridVariant::ThreeKeys, true, true).len(), 224);
    }

    #[test]
    fn initial_state_cell_keeps_doors_abstract() {
        let p = build_grid_problem(GridVariant::ThreeDoors).unwrap();
        let wv = select_initial_abstraction(&p, true, true, 1_000_000).unwrap();
        let id = wv.locate(&p.initial_state).unwrap();
        let pat = wv.pattern(id);
        assert_eq!(pat.get(0), Some(0));
        assert_eq!(pat.get(1), Some(0));
        assert_eq!(pat.get(5), Some(0));
        assert!((2..5).all(|d| pat.is_abstract(d)));
    }

    #[test]
    fn cap_is_reported() {
        let p = build_grid_problem(GridVariant::ThreeDoors).unwrap();
        let e = select_initial_abstraction(&p, true, true, 150).unwrap_err();
        assert!(matches!(e, WorldviewError::CapExceeded { cap: 150, .. }));
    }

    fn fig5() -> (Worldview, PlannerTables) {
        let sp = FactoredSpace::new((0..3).map(|i| Dimension::numeric(format!("b{i}"), 2)).collect()).unwrap();
        let a = ABSTRACT;
        let pats = [[0, 0, 0], [0, a, 1], [a, 1, 0], [1, 1, 1], [1, 0, a]];
        let wv = Worldview::from_patterns(&sp, pats.iter().map(|p| Pattern::new(p.to_vec())).collect());
        assert!(wv.check_partition().is_empty());
        let mut t = PlannerTables::default();
        t.ensure(wv.id_bound());
        for id in wv.ids().collect::<Vec<_>>() {
            t.set(id, 0, 0.0, 0.2);
        }
        (wv, t)
    }

    #[test]
    fn gridlock_has_no_groups() {
        let (wv, t) = fig5();
        assert!(coarsening_groups(&wv, &t, 1.0).is_empty());
    }

    #[test]
    fn sibling_pair_merges_unless_one_is_hot() {
        let sp = FactoredSpace::new((0..3).map(|i| Dimension::numeric(format!("b{i}"), 2)).collect()).unwrap();
        let a = ABSTRACT;
        let pats = [[0, 0, a], [0, 1, a], [1, a, a]];
        let wv = Worldview::from_patterns(&sp, pats.iter().map(|p| Pattern::new(p.to_vec())).collect());
        let mut t = PlannerTables::default();
        t.ensure(3);
        t.set(0, 0, 0.0, 0.01);
        t.set(1, 0, 0.0, 0.01);
        t.set(2, 0, 0.0, 0.98);
        let g = coarsening_groups(&wv, &t, 0.1);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].dim, 1);
        t.proximity[1] = 0.5;
        assert!(coarsening_groups(&wv, &t, 0.1).is_empty());
    }

    fn planner(v: GridVariant, variant: Variant) -> Planner {
        let p = build_grid_problem(v).unwrap();
        let config = PlannerConfig { gamma: Some(0.99999), variant, ..Default::default() };
        Planner::new(Arc::new(p), config).unwrap()
    }

    #[test]
    fn policy_refinement_noop_when_concrete() {
        let p = build_grid_problem(GridVariant::ThreeDoors).unwrap();
        let wv = Worldview::fully_concrete(&p.space);
        let mut pl = Planner::with_worldview(Arc::new(p), PlannerConfig::default(), wv).unwrap();
        pl.policy_value_phase();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pl.policy_based_refinement(&mut rng).unwrap(), 0);
    }

    #[test]
    fn policy_refinement_settles_at_fixed_policy() {
        let mut pl = planner(GridVariant::ThreeDoors, Variant::Lua);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            pl.policy_value_phase();
            pl.policy_based_refinement(&mut rng).unwrap();
        }
        // Without policy updates, repeated passes only finish candidates
        // skipped as stale, so they stop changing anything.
        let mut rounds = 0;
        while pl.policy_based_refinement(&mut rng).unwrap() > 0 {
            rounds += 1;
            assert!(rounds < 20);
        }
        let before: Vec<Pattern> = pl.worldview().sorted_ids().iter().map(|&i| pl.worldview().pattern(i).clone()).collect();
        assert_eq!(pl.policy_based_refinement(&mut rng).unwrap(), 0);
        let after: Vec<Pattern> = pl.worldview().sorted_ids().iter().map(|&i| pl.worldview().pattern(i).clone()).collect();
        assert_eq!(before, after);
        assert!(pl.worldview().check_partition().is_empty());
    }

    #[test]
    fn proximity_refine_then_coarsen_restores() {
        let p = build_grid_problem(GridVariant::ThreeDoors).unwrap();
        let wv = Worldview::singleton(&p.space);
        let config = PlannerConfig { refine_threshold: Some(0.5), coarsen_threshold: Some(2.0), ..Default::default() };
        let mut pl = Planner::with_worldview(Arc::new(p), config, wv).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (d, n) = pl.proximity_based_refinement(&mut rng).unwrap();
        assert_eq!(n, 1);
        let w = pl.worldview().widths()[d];
        assert_eq!(pl.worldview().len(), w);
        let total: f64 = pl.worldview().ids().map(|i| pl.tables().proximity[i as usize]).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(pl.proximity_based_coarsening(&mut rng).unwrap(), 1);
        assert_eq!(pl.worldview().len(), 1);
        let id = pl.worldview().ids().next().unwrap();
        assert!(pl.worldview().pattern(id).abstract_dims().count() == 6);
        assert!((pl.tables().proximity[id as usize] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binary_split_halves_proximity() {
        let sp = FactoredSpace::new(vec![Dimension::numeric("a", 2)]).unwrap();
        let wv = Worldview::singleton(&sp);
        let mut t = PlannerTables::default();
        t.ensure(1);
        t.set(0, 0, 0.0, 1.0);
        let mut wv2 = wv.clone();
        let kids = refine_state(&mut wv2, &mut t, 0, 0).unwrap();
        assert_eq!(kids.iter().map(|&k| t.proximity[k as usize]).collect::<Vec<_>>(), vec![0.5, 0.5]);
    }
}
