//! Abstract transition and reward functions, computed by walking the decision
//! trees with worldview patterns instead of enumerating specific states.

use std::collections::HashMap;

use crate::model::ActionModel;
use crate::space::Value;
use crate::tree::{DecisionTree, Node};

use super::{Pattern, StateId, Worldview, ABSTRACT};

/// Sparse distribution over worldview states, sorted by id.
pub type TransitionRow = Vec<(StateId, f64)>;

/// `|region| / |region ∩ w|` for intersecting patterns: the product of the
/// widths of dimensions abstract in `region` but concrete in `w`.
pub fn overlap_denominator(region: &[Value], w: &[Value], widths: &[usize]) -> u128 {
    region
        .iter()
        .zip(w)
        .zip(widths)
        .filter(|((r, w), _)| **r == ABSTRACT && **w != ABSTRACT)
        .map(|(_, &n)| n as u128)
        .product()
}

/// Visits each leaf reachable from `region`, passing the sub-region that
/// reaches it and the factor by which it is smaller than `region`.
fn walk<L>(tree: &DecisionTree<L>, widths: &[usize], region: &[Value], mut f: impl FnMut(&L, &[Value], u128)) {
    let mut stack: Vec<(u32, Vec<Value>, u128)> = vec![(tree.root(), region.to_vec(), 1)];
    while let Some((id, reg, den)) = stack.pop() {
        match tree.node(id) {
            Node::Leaf(l) => f(l, &reg, den),
            Node::Test { dim, children } => {
                let v = reg[*dim];
                if v != ABSTRACT {
                    stack.push((children[v as usize], reg, den));
                } else if children.iter().all(|&c| c == children[0]) {
                    stack.push((children[0], reg, den));
                } else {
                    let w = widths[*dim] as u128;
                    for (v, &c) in children.iter().enumerate().rev() {
                        let mut r = reg.clone();
                        r[*dim] = v as Value;
                        stack.push((c, r, den * w));
                    }
                }
            }
        }
    }
}

fn merge_row(mut row: Vec<(StateId, f64)>) -> TransitionRow {
    row.sort_by_key(|e| e.0);
    let mut out: TransitionRow = Vec::with_capacity(row.len());
    for (id, p) in row {
        match out.last_mut() {
            Some(last) if last.0 == id => last.1 += p,
            _ => out.push((id, p)),
        }
    }
    out.retain(|e| e.1 > 0.0);
    out
}

/// Distribution over worldview states after taking `a` from a state drawn
/// uniformly from `region`.
pub fn region_transition(wv: &Worldview, model: &ActionModel, region: &[Value], a: usize) -> TransitionRow {
    let widths = wv.widths();
    let mut acc = Vec::new();
    let mut post = Vec::with_capacity(region.len());
    walk(model.tree(a), widths, region, |outcomes, reg, den| {
        for (p, effect) in outcomes.iter() {
            if *p <= 0.0 {
                continue;
            }
            post.clear();
            post.extend_from_slice(reg);
            for &(d, v) in effect.iter() {
                post[d] = v;
            }
            wv.for_each_intersecting(&post, |w2| {
                let total = den * overlap_denominator(&post, wv.pattern(w2).values(), widths);
                acc.push((w2, p / total as f64));
            });
        }
    });
    merge_row(acc)
}

/// `Pr(w, a, ·)` under the uniform distribution over the states of `w`.
pub fn abstract_transition(wv: &Worldview, model: &ActionModel, id: StateId, a: usize) -> TransitionRow {
    region_transition(wv, model, wv.pattern(id).values(), a)
}

/// Mean reward over the states of `region`.
pub fn region_reward(widths: &[usize], model: &ActionModel, region: &[Value]) -> f64 {
    let mut sum = 0.0;
    walk(model.reward_tree(), widths, region, |r, _, den| sum += r / den as f64);
    sum
}

pub fn abstract_reward(wv: &Worldview, model: &ActionModel, id: StateId) -> f64 {
    region_reward(wv.widths(), model, wv.pattern(id).values())
}

/// Per-action coefficient rows for the locally uniform update: the value of
/// action `a` is `Σ c·V̂(w″)` over row `a`. `None` when no successor is
/// abstract anywhere, in which case the plain rows apply unchanged.
pub fn lua_rows(wv: &Worldview, rows: &[TransitionRow]) -> Option<Vec<TransitionRow>> {
    let dims = wv.dim_count();
    let mut absdims = vec![false; dims];
    for row in rows {
        for &(w, _) in row {
            for d in wv.pattern(w).abstract_dims() {
                absdims[d] = true;
            }
        }
    }
    if !absdims.iter().any(|&b| b) {
        return None;
    }
    let widths = wv.widths();
    let mut spread: HashMap<Pattern, Vec<(StateId, f64)>> = HashMap::new();
    let out = rows
        .iter()
        .map(|row| {
            let mut acc = Vec::new();
            for &(w, p) in row {
                let mut vals = wv.pattern(w).values().to_vec();
                for (d, v) in vals.iter_mut().enumerate() {
                    if absdims[d] {
                        *v = ABSTRACT;
                    }
                }
                let region = Pattern::new(vals);
                let parts = spread.entry(region).or_insert_with_key(|region| {
                    let mut parts = Vec::new();
                    wv.for_each_intersecting(region.values(), |w2| {
                        let den = overlap_denominator(region.values(), wv.pattern(w2).values(), widths);
                        parts.push((w2, 1.0 / den as f64));
                    });
                    parts
                });
                acc.extend(parts.iter().map(|&(w2, f)| (w2, p * f)));
            }
            merge_row(acc)
        })
        .collect();
    Some(out)
}

/// Cached per-state dynamics.
#[derive(Debug, Clone)]
pub struct StateDynamics {
    pub reward: f64,
    /// One row per action.
    pub rows: Vec<TransitionRow>,
    /// `Pr(w, a, w)` per action.
    pub self_prob: Vec<f64>,
    lua: Option<Option<Vec<TransitionRow>>>,
}

impl StateDynamics {
    /// Rows for the locally uniform update; falls back to `rows`.
    pub fn lua_rows(&self) -> &[TransitionRow] {
        match &self.lua {
            Some(Some(r)) => r,
            _ => &self.rows,
        }
    }
}

/// Lazily built dynamics per worldview state. Entries are dropped when any
/// state they refer to leaves the worldview, by replaying the worldview's
/// removal log.
#[derive(Debug, Clone, Default)]
pub struct DynamicsCache {
    entries: Vec<Option<StateDynamics>>,
    epochs: Vec<u64>,
    dependents: Vec<Vec<(StateId, u64)>>,
    cursor: usize,
}

impl DynamicsCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    fn invalidate(&mut self, id: StateId) {
        let i = id as usize;
        if i < self.entries.len() && self.entries[i].take().is_some() {
            self.epochs[i] += 1;
        }
    }

    /// Drops entries made stale by worldview changes since the last call.
    pub fn sync(&mut self, wv: &Worldview) {
        let log = wv.removal_log();
        if self.cursor > log.len() {
            self.clear();
        }
        let n = wv.id_bound();
        if self.entries.len() < n {
            self.entries.resize(n, None);
            self.epochs.resize(n, 0);
            self.dependents.resize(n, Vec::new());
        }
        for &r in &log[self.cursor..] {
            self.invalidate(r);
            let deps = std::mem::take(&mut self.dependents[r as usize]);
            for (x, epoch) in deps {
                if self.epochs[x as usize] == epoch {
                    self.invalidate(x);
                }
            }
        }
        self.cursor = log.len();
    }

    fn register(&mut self, id: StateId, rows: &[TransitionRow]) {
        let epoch = self.epochs[id as usize];
        let mut deps: Vec<StateId> = rows.iter().flat_map(|r| r.iter().map(|e| e.0)).collect();
        deps.sort_unstable();
        deps.dedup();
        for d in deps {
            if d != id {
                self.dependents[d as usize].push((id, epoch));
            }
        }
    }

    /// Dynamics of `id`; call [`DynamicsCache::sync`] after worldview changes.
    pub fn get(&mut self, wv: &Worldview, model: &ActionModel, id: StateId) -> &StateDynamics {
        let i = id as usize;
        debug_assert!(i < self.entries.len(), "cache not synced");
        if self.entries[i].is_none() {
            let rows: Vec<TransitionRow> =
                (0..model.action_count()).map(|a| abstract_transition(wv, model, id, a)).collect();
            let self_prob =
                rows.iter().map(|r| r.iter().find(|e| e.0 == id).map_or(0.0, |e| e.1)).collect();
            self.register(id, &rows);
            self.entries[i] =
                Some(StateDynamics { reward: abstract_reward(wv, model, id), rows, self_prob, lua: None });
        }
        self.entries[i].as_ref().unwrap()
    }

    /// Like [`DynamicsCache::get`], also building the locally uniform rows.
    pub fn get_lua(&mut self, wv: &Worldview, model: &ActionModel, id: StateId) -> &StateDynamics {
        self.get(wv, model, id);
        let i = id as usize;
        if self.entries[i].as_ref().unwrap().lua.is_none() {
            let lua = lua_rows(wv, &self.entries[i].as_ref().unwrap().rows);
            if let Some(rows) = &lua {
                self.register(id, rows);
            }
            self.entries[i].as_mut().unwrap().lua = Some(lua);
        }
        self.entries[i].as_ref().unwrap()
    }
}
