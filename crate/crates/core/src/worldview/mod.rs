//! Worldviews: partitions of the state space into states that are, per
//! dimension, either concrete (one value) or abstract (every value).

mod dynamics;
mod index;
mod tables;

pub use dynamics::{
    abstract_reward, abstract_transition, lua_rows, overlap_denominator, region_reward, region_transition,
    DynamicsCache, StateDynamics, TransitionRow,
};
pub use tables::PlannerTables;

use std::fmt;

use rand::Rng;

use crate::error::WorldviewError;
use crate::space::{FactoredSpace, SpecificState, Value};
use index::PatternIndex;

/// Pattern entry marking an abstract dimension.
pub const ABSTRACT: Value = Value::MAX;

/// Default limit on the number of worldview states.
pub const DEFAULT_WORLDVIEW_CAP: usize = 1_000_000;

pub type StateId = u32;

/// Per-dimension concrete values, with [`ABSTRACT`] for abstract dimensions.
/// Patterns order lexicographically with abstract after every value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern(Box<[Value]>);

impl Pattern {
    pub fn new(values: Vec<Value>) -> Self {
        Pattern(values.into_boxed_slice())
    }

    pub fn all_abstract(dims: usize) -> Self {
        Pattern::new(vec![ABSTRACT; dims])
    }

    pub fn from_state(s: &SpecificState) -> Self {
        Pattern(s.values().into())
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn get(&self, d: usize) -> Option<Value> {
        (self.0[d] != ABSTRACT).then_some(self.0[d])
    }

    pub fn is_abstract(&self, d: usize) -> bool {
        self.0[d] == ABSTRACT
    }

    pub fn with(&self, d: usize, v: Value) -> Pattern {
        let mut p = self.clone();
        p.0[d] = v;
        p
    }

    /// Number of specific states covered.
    pub fn size(&self, widths: &[usize]) -> u128 {
        self.0.iter().zip(widths).filter(|(v, _)| **v == ABSTRACT).map(|(_, &w)| w as u128).product()
    }

    pub fn contains(&self, s: &SpecificState) -> bool {
        self.0.iter().zip(s.values()).all(|(&p, &v)| p == ABSTRACT || p == v)
    }

    pub fn intersects(&self, other: &Pattern) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(&a, &b)| a == ABSTRACT || b == ABSTRACT || a == b)
    }

    pub fn abstract_dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &v)| v == ABSTRACT).map(|(d, _)| d)
    }

    /// Renders as `x=3 y=* ...` using the space's labels.
    pub fn display<'a>(&'a self, space: &'a FactoredSpace) -> PatternDisplay<'a> {
        PatternDisplay { pattern: self, space }
    }
}

pub struct PatternDisplay<'a> {
    pattern: &'a Pattern,
    space: &'a FactoredSpace,
}

impl fmt::Display for PatternDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (d, &v) in self.pattern.0.iter().enumerate() {
            if d > 0 {
                f.write_str(" ")?;
            }
            let dim = self.space.dim(d);
            if v == ABSTRACT {
                write!(f, "{}=*", dim.name())?;
            } else {
                write!(f, "{}={}", dim.name(), dim.values()[v as usize])?;
            }
        }
        Ok(())
    }
}

/// A partition breach found by [`Worldview::check_partition`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Overlap(StateId, StateId),
    Coverage { covered: u128, total: u128 },
}

#[derive(Debug, Clone)]
pub struct Worldview {
    widths: Vec<usize>,
    total: u128,
    slots: Vec<Option<Pattern>>,
    free: Vec<StateId>,
    live: usize,
    index: PatternIndex,
    removed: Vec<StateId>,
    version: u64,
    cap: usize,
}

impl Worldview {
    /// The single-state worldview `{S}`.
    pub fn singleton(space: &FactoredSpace) -> Self {
        Self::singleton_with_cap(space, DEFAULT_WORLDVIEW_CAP)
    }

    pub fn singleton_with_cap(space: &FactoredSpace, cap: usize) -> Self {
        let widths = space.widths();
        let mut wv = Worldview {
            index: PatternIndex::new(&widths),
            total: space.size(),
            widths,
            slots: Vec::new(),
            free: Vec::new(),
            live: 0,
            removed: Vec::new(),
            version: 0,
            cap: cap.max(1),
        };
        wv.insert(Pattern::all_abstract(space.dim_count()));
        wv
    }

    /// Builds a worldview from explicit patterns without checking that they
    /// form a partition; see [`Worldview::check_partition`].
    pub fn from_patterns(space: &FactoredSpace, patterns: Vec<Pattern>) -> Self {
        let mut wv = Self::singleton(space);
        wv.remove(0);
        wv.removed.clear();
        for p in patterns {
            wv.insert(p);
        }
        wv
    }

    pub fn fully_concrete(space: &FactoredSpace) -> Self {
        let n = space.size() as usize;
        Self::from_patterns(space, (0..n).map(|i| Pattern::from_state(&space.state_at(i))).collect())
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn dim_count(&self) -> usize {
        self.widths.len()
    }

    /// Size of the underlying state space.
    pub fn space_size(&self) -> u128 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn set_cap(&mut self, cap: usize) {
        self.cap = cap.max(1);
    }

    /// One past the largest id ever handed out; tables indexed by id must be
    /// at least this long.
    pub fn id_bound(&self) -> usize {
        self.slots.len()
    }

    /// Incremented by every structural change.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Ids removed so far, in removal order. Ids are recycled, so a consumer
    /// holding per-id data must drop it for every id logged after its last
    /// visit.
    pub fn removal_log(&self) -> &[StateId] {
        &self.removed
    }

    /// A copy without the removal log, for read-only use.
    pub fn detached(&self) -> Worldview {
        Worldview {
            widths: self.widths.clone(),
            total: self.total,
            slots: self.slots.clone(),
            free: self.free.clone(),
            live: self.live,
            index: self.index.clone(),
            removed: Vec::new(),
            version: self.version,
            cap: self.cap,
        }
    }

    pub fn contains(&self, id: StateId) -> bool {
        self.slots.get(id as usize).is_some_and(Option::is_some)
    }

    pub fn pattern(&self, id: StateId) -> &Pattern {
        self.slots[id as usize].as_ref().expect("live worldview state")
    }

    pub fn try_pattern(&self, id: StateId) -> Result<&Pattern, WorldviewError> {
        self.slots.get(id as usize).and_then(Option::as_ref).ok_or(WorldviewError::Absent(id))
    }

    pub fn size_of(&self, id: StateId) -> u128 {
        self.pattern(id).size(&self.widths)
    }

    pub fn ids(&self) -> impl Iterator<Item = StateId> + '_ {
        self.slots.iter().enumerate().filter(|(_, p)| p.is_some()).map(|(i, _)| i as StateId)
    }

    /// Live ids ordered by pattern.
    pub fn sorted_ids(&self) -> Vec<StateId> {
        let mut ids: Vec<StateId> = self.ids().collect();
        ids.sort_by(|a, b| self.pattern(*a).cmp(self.pattern(*b)));
        ids
    }

    pub fn patterns(&self) -> impl Iterator<Item = (StateId, &Pattern)> {
        self.slots.iter().enumerate().filter_map(|(i, p)| p.as_ref().map(|p| (i as StateId, p)))
    }

    /// The id of a state with exactly this pattern, if present.
    pub fn find(&self, pattern: &Pattern) -> Option<StateId> {
        let mut hit = None;
        self.index.for_each_intersecting(pattern.values(), |id| {
            if self.pattern(id) == pattern {
                hit = Some(id);
            }
        });
        hit
    }

    /// The unique state containing `s`.
    pub fn locate(&self, s: &SpecificState) -> Result<StateId, WorldviewError> {
        let mut found = None;
        let mut count = 0;
        self.index.for_each_intersecting(s.values(), |id| {
            found = Some(id);
            count += 1;
        });
        match (count, found) {
            (1, Some(id)) => Ok(id),
            _ => Err(WorldviewError::PartitionBreach(count)),
        }
    }

    pub fn for_each_intersecting(&self, region: &[Value], f: impl FnMut(StateId)) {
        self.index.for_each_intersecting(region, f)
    }

    pub fn intersecting(&self, region: &[Value]) -> Vec<StateId> {
        let mut out = Vec::new();
        self.index.for_each_intersecting(region, |id| out.push(id));
        out
    }

    fn insert(&mut self, p: Pattern) -> StateId {
        let id = match self.free.pop() {
            Some(id) => id,
            None => {
                self.slots.push(None);
                (self.slots.len() - 1) as StateId
            }
        };
        self.index.insert(p.values(), id);
        self.slots[id as usize] = Some(p);
        self.live += 1;
        self.version += 1;
        id
    }

    fn remove(&mut self, id: StateId) -> Pattern {
        let p = self.slots[id as usize].take().expect("live worldview state");
        self.index.remove(p.values());
        self.free.push(id);
        self.removed.push(id);
        self.live -= 1;
        self.version += 1;
        p
    }

    /// Replaces `id` by one state per value of `d`, returned in value order.
    /// Table maintenance is the caller's job; see [`refine_state`].
    pub fn split(&mut self, id: StateId, d: usize) -> Result<Vec<StateId>, WorldviewError> {
        let p = self.try_pattern(id)?;
        if !p.is_abstract(d) {
            return Err(WorldviewError::NotAbstract { id, dim: d });
        }
        let width = self.widths[d];
        if self.live + width - 1 > self.cap {
            return Err(WorldviewError::CapExceeded { size: self.live + width - 1, cap: self.cap });
        }
        let p = self.remove(id);
        // Insert in reverse so recycled ids come back in value order.
        let mut ids: Vec<StateId> = (0..width).rev().map(|v| self.insert(p.with(d, v as Value))).collect();
        ids.reverse();
        Ok(ids)
    }

    /// Validates a coarsening group: `|S_d|` live members, concrete in `d`
    /// with distinct values and equal everywhere else. Returns the merged
    /// pattern.
    pub fn check_group(&self, group: &[StateId], d: usize) -> Result<Pattern, WorldviewError> {
        let bad = |reason: &str| WorldviewError::BadGroup { dim: d, reason: reason.to_string() };
        if group.len() != self.widths[d] {
            return Err(bad("group size differs from the dimension size"));
        }
        let first = self.try_pattern(group[0])?;
        let merged = first.with(d, ABSTRACT);
        let mut seen = vec![false; self.widths[d]];
        for &id in group {
            let p = self.try_pattern(id)?;
            let Some(v) = p.get(d) else { return Err(bad("member is abstract in the dimension")) };
            if std::mem::replace(&mut seen[v as usize], true) {
                return Err(bad("duplicate value"));
            }
            if p.with(d, ABSTRACT) != merged {
                return Err(bad("members differ outside the dimension"));
            }
        }
        Ok(merged)
    }

    /// Replaces a valid group by the state abstract in `d`.
    pub fn merge(&mut self, group: &[StateId], d: usize) -> Result<StateId, WorldviewError> {
        let merged = self.check_group(group, d)?;
        for &id in group {
            self.remove(id);
        }
        Ok(self.insert(merged))
    }

    /// Lists overlapping pairs, and a coverage breach when the sizes do not
    /// add up (reported only if there is no overlap, since overlaps already
    /// distort the sum).
    pub fn check_partition(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut covered: u128 = 0;
        for (id, p) in self.patterns() {
            covered += p.size(&self.widths);
            self.index.for_each_intersecting(p.values(), |other| {
                if other > id {
                    out.push(Violation::Overlap(id, other));
                }
            });
        }
        if out.is_empty() && covered != self.total {
            out.push(Violation::Coverage { covered, total: self.total });
        }
        out
    }

    /// One line per state: pattern followed by policy, value and proximity.
    pub fn dump(&self, space: &FactoredSpace, tables: &PlannerTables, actions: &[String]) -> String {
        let mut out = String::new();
        for id in self.sorted_ids() {
            out.push_str(&format!(
                "{} | {} {} {:e}\n",
                self.pattern(id).display(space),
                actions[tables.policy[id as usize] as usize],
                tables.value[id as usize],
                tables.proximity[id as usize]
            ));
        }
        out
    }
}

/// Refines `id` in dimension `d`, copying policy and value to each new state
/// and splitting proximity by size.
pub fn refine_state(
    wv: &mut Worldview,
    tables: &mut PlannerTables,
    id: StateId,
    d: usize,
) -> Result<Vec<StateId>, WorldviewError> {
    wv.try_pattern(id)?;
    let (pol, val, prox) = tables.get(id);
    let ids = wv.split(id, d)?;
    tables.ensure(wv.id_bound());
    let share = prox / wv.widths()[d] as f64;
    for &n in &ids {
        tables.set(n, pol, val, share);
    }
    Ok(ids)
}

/// Merges a full sibling group along `d`. The policy comes from a member
/// chosen with `rng`, the value is the members' mean and proximities add.
pub fn coarsen_group<R: Rng + ?Sized>(
    wv: &mut Worldview,
    tables: &mut PlannerTables,
    group: &[StateId],
    d: usize,
    rng: &mut R,
) -> Result<StateId, WorldviewError> {
    wv.check_group(group, d)?;
    let pick = group[rng.gen_range(0..group.len())];
    let pol = tables.policy[pick as usize];
    let val = group.iter().map(|&g| tables.value[g as usize]).sum::<f64>() / group.len() as f64;
    let prox = group.iter().map(|&g| tables.proximity[g as usize]).sum::<f64>();
    let id = wv.merge(group, d)?;
    tables.ensure(wv.id_bound());
    tables.set(id, pol, val, prox);
    Ok(id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Dimension;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space() -> FactoredSpace {
        FactoredSpace::new(vec![Dimension::numeric("a", 2), Dimension::numeric("b", 10), Dimension::numeric("c", 3)])
            .unwrap()
    }

    fn setup() -> (FactoredSpace, Worldview, PlannerTables) {
        let sp = space();
        let wv = Worldview::singleton(&sp);
        let mut t = PlannerTables::default();
        t.ensure(wv.id_bound());
        t.set(0, 0, -3.0, 1.0);
        (sp, wv, t)
    }

    #[test]
    fn singleton_locates_everything() {
        let (sp, wv, _) = setup();
        assert_eq!(wv.len(), 1);
        for i in 0..sp.size() as usize {
            assert_eq!(wv.locate(&sp.state_at(i)).unwrap(), 0);
        }
        assert!(wv.check_partition().is_empty());
    }

    #[test]
    fn refine_splits_proximity() {
        let (_, mut wv, mut t) = setup();
        let kids = refine_state(&mut wv, &mut t, 0, 0).unwrap();
        assert_eq!(kids.len(), 2);
        for &k in &kids {
            assert_eq!(t.proximity[k as usize], 0.5);
            assert_eq!(t.value[k as usize], -3.0);
        }
        let k2 = refine_state(&mut wv, &mut t, kids[1], 1).unwrap();
        assert_eq!(k2.len(), 10);
        assert!((t.proximity[k2[3] as usize] - 0.05).abs() < 1e-15);
        let total: f64 = wv.ids().map(|i| t.proximity[i as usize]).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let size: u128 = wv.ids().map(|i| wv.size_of(i)).sum();
        assert_eq!(size, 60);
        assert!(wv.check_partition().is_empty());
        assert_eq!(refine_state(&mut wv, &mut t, kids[0], 0).unwrap_err(), WorldviewError::NotAbstract { id: kids[0], dim: 0 });
        assert_eq!(refine_state(&mut wv, &mut t, 99, 0).unwrap_err(), WorldviewError::Absent(99));
    }

    #[test]
    fn coarsen_averages_and_restores() {
        let (_, mut wv, mut t) = setup();
        let before: Vec<Pattern> = wv.patterns().map(|p| p.1.clone()).collect();
        let kids = refine_state(&mut wv, &mut t, 0, 0).unwrap();
        t.value[kids[0] as usize] = -10.0;
        t.value[kids[1] as usize] = -20.0;
        t.proximity[kids[0] as usize] = 0.01;
        t.proximity[kids[1] as usize] = 0.03;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let id = coarsen_group(&mut wv, &mut t, &kids, 0, &mut rng).unwrap();
        assert_eq!(t.value[id as usize], -15.0);
        assert!((t.proximity[id as usize] - 0.04).abs() < 1e-15);
        let after: Vec<Pattern> = wv.patterns().map(|p| p.1.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn bad_groups_rejected() {
        let (_, mut wv, mut t) = setup();
        let kids = refine_state(&mut wv, &mut t, 0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(coarsen_group(&mut wv, &mut t, &kids[..9], 1, &mut rng).is_err());
        let mut dup = kids.clone();
        dup[9] = dup[0];
        assert!(coarsen_group(&mut wv, &mut t, &dup, 1, &mut rng).is_err());
        refine_state(&mut wv, &mut t, kids[3], 0).unwrap();
        assert!(coarsen_group(&mut wv, &mut t, &kids, 1, &mut rng).is_err());
    }

    #[test]
    fn partition_violations() {
        let sp = space();
        let mut pats = vec![Pattern::all_abstract(3), Pattern::new(vec![0, 0, 0])];
        let wv = Worldview::from_patterns(&sp, pats.clone());
        assert_eq!(wv.check_partition(), vec![Violation::Overlap(0, 1)]);
        pats.remove(0);
        let full = Worldview::fully_concrete(&sp);
        assert!(full.check_partition().is_empty());
        let mut all: Vec<Pattern> = full.patterns().map(|p| p.1.clone()).collect();
        all.pop();
        let short = Worldview::from_patterns(&sp, all);
        assert_eq!(short.check_partition(), vec![Violation::Coverage { covered: 59, total: 60 }]);
        assert!(short.locate(&sp.state_at(59)).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let sp = space();
        let mut wv = Worldview::singleton_with_cap(&sp, 5);
        let mut t = PlannerTables::default();
        t.ensure(1);
        let e = refine_state(&mut wv, &mut t, 0, 1).unwrap_err();
        assert_eq!(e, WorldviewError::CapExceeded { size: 10, cap: 5 });
        assert_eq!(wv.len(), 1);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]
        #[test]
        fn random_operations_keep_partition(seed in 0u64..1000, steps in 50usize..250) {
            let sp = FactoredSpace::new(vec![
                Dimension::numeric("a", 2), Dimension::numeric("b", 3), Dimension::numeric("c", 2), Dimension::numeric("d", 2),
            ]).unwrap();
            let mut wv = Worldview::singleton(&sp);
            let mut t = PlannerTables::default();
            t.ensure(1);
            t.set(0, 0, 0.0, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..steps {
                let ids: Vec<StateId> = wv.sorted_ids();
                let id = ids[rng.gen_range(0..ids.len())];
                let d = rng.gen_range(0..4);
                if rng.gen_bool(0.6) {
                    let _ = refine_state(&mut wv, &mut t, id, d);
                } else if let Some(v) = wv.pattern(id).get(d) {
                    let _ = v;
                    let base = wv.pattern(id).clone();
                    let group: Option<Vec<StateId>> =
                        (0..sp.width(d)).map(|v| wv.find(&base.with(d, v as Value))).collect();
                    if let Some(g) = group {
                        coarsen_group(&mut wv, &mut t, &g, d, &mut rng).unwrap();
                    }
                }
                proptest::prop_assert!(wv.check_partition().is_empty());
                let total: f64 = wv.ids().map(|i| t.proximity[i as usize]).sum();
                proptest::prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }
}
