//! Tireworld: drive between locations on a road graph, repairing flat tires
//! with spares picked up along the way.
//!
//! Road graph text format, one location per line:
//!
//! ```text
//! # comment
//! n0: n1 n2 | initial
//! n1: n0 n3 | spare
//! n3: n1 | goal
//! ```
//!
//! Names after the colon are the locations reachable in one move; markers
//! after `|` are any of `spare`, `initial`, `goal`.

use std::collections::HashMap;

use crate::error::ModelError;
use crate::model::{ActionModel, ProblemInstance, RewardRule, TransitionRule};
use crate::space::{Assignment, Dimension, FactoredSpace, SpecificState, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoadGraph {
    pub locations: Vec<String>,
    /// Directed roads as (from, to) location indices.
    pub edges: Vec<(usize, usize)>,
    pub spares: Vec<bool>,
    pub initial: usize,
    pub goal: usize,
}

impl RoadGraph {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let bad = |line: usize, msg: String| ModelError::Parse { line, msg };
        let mut names: Vec<String> = Vec::new();
        let mut rows: Vec<(usize, Vec<String>, Vec<String>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, rest) = line.split_once(':').ok_or_else(|| bad(i + 1, "expected `name: neighbours`".into()))?;
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(bad(i + 1, format!("invalid location name `{name}`")));
            }
            if names.iter().any(|n| n == name) {
                return Err(bad(i + 1, format!("location `{name}` declared twice")));
            }
            let (adj, marks) = rest.split_once('|').unwrap_or((rest, ""));
            names.push(name.to_string());
            rows.push((
                i + 1,
                adj.split_whitespace().map(str::to_string).collect(),
                marks.split_whitespace().map(str::to_string).collect(),
            ));
        }
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut edges = Vec::new();
        let mut spares = vec![false; names.len()];
        let mut initial = None;
        let mut goal = None;
        for (from, (line, adj, marks)) in rows.iter().enumerate() {
            for to in adj {
                let &t = index.get(to.as_str()).ok_or_else(|| bad(*line, format!("unknown location `{to}`")))?;
                if t == from {
                    return Err(bad(*line, format!("self-loop at `{to}`")));
                }
                if !edges.contains(&(from, t)) {
                    edges.push((from, t));
                }
            }
            for m in marks {
                match m.as_str() {
                    "spare" => spares[from] = true,
                    "initial" if initial.is_none() => initial = Some(from),
                    "goal" if goal.is_none() => goal = Some(from),
                    "initial" | "goal" => return Err(bad(*line, format!("second `{m}` marker"))),
                    other => return Err(bad(*line, format!("unknown marker `{other}`"))),
                }
            }
        }
        let g = RoadGraph {
            locations: names,
            edges,
            spares,
            initial: initial.ok_or_else(|| ModelError::InvalidGraph("no initial location".into()))?,
            goal: goal.ok_or_else(|| ModelError::InvalidGraph("no goal location".into()))?,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, name) in self.locations.iter().enumerate() {
            let adj: Vec<&str> =
                self.edges.iter().filter(|e| e.0 == i).map(|e| self.locations[e.1].as_str()).collect();
            let mut marks = Vec::new();
            if self.spares[i] {
                marks.push("spare");
            }
            if self.initial == i {
                marks.push("initial");
            }
            if self.goal == i {
                marks.push("goal");
            }
            out.push_str(&format!("{name}: {}", adj.join(" ")));
            if !marks.is_empty() {
                out.push_str(&format!(" | {}", marks.join(" ")));
            }
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.locations.len();
        if n == 0 {
            return Err(ModelError::InvalidGraph("no locations".into()));
        }
        if self.spares.len() != n || self.initial >= n || self.goal >= n {
            return Err(ModelError::InvalidGraph("location index out of range".into()));
        }
        if self.edges.iter().any(|&(a, b)| a >= n || b >= n || a == b) {
            return Err(ModelError::InvalidGraph("bad edge".into()));
        }
        Ok(())
    }

    /// Whether the goal can be reached from the initial location, ignoring
    /// tires. Advisory only.
    pub fn goal_reachable(&self) -> bool {
        let mut seen = vec![false; self.locations.len()];
        let mut stack = vec![self.initial];
        seen[self.initial] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in &self.edges {
                if a == v && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen[self.goal]
    }

    /// A synthetic `n`-location graph: a two-way road chain `n0 - n1 - ...`
    /// with shortcuts from every even location two steps ahead, spares at
    /// odd locations, start at `n0` and goal at the last location.
    pub fn sample(n: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..n.saturating_sub(1) {
            edges.push((i, i + 1));
            edges.push((i + 1, i));
        }
        for i in (0..n.saturating_sub(2)).step_by(2) {
            edges.push((i, i + 2));
        }
        RoadGraph {
            locations: (0..n).map(|i| format!("n{i}")).collect(),
            edges,
            spares: (0..n).map(|i| i % 2 == 1).collect(),
            initial: 0,
            goal: n.saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TireOptions {
    /// Chance of a flat tire on each move.
    pub flat_prob: f64,
    pub gamma: f64,
}

impl Default for TireOptions {
    fn default() -> Self {
        TireOptions { flat_prob: 0.5, gamma: 0.95 }
    }
}

pub fn build_tireworld(graph: &RoadGraph) -> Result<ProblemInstance, ModelError> {
    build_tireworld_with(graph, &TireOptions::default())
}

/// Dimensions are `at-<loc>` for every location, then `spare-<loc>` for
/// every location, then `has-spare` and `flat`. Nothing forces exactly one
/// `at-` flag to be set.
pub fn build_tireworld_with(graph: &RoadGraph, opts: &TireOptions) -> Result<ProblemInstance, ModelError> {
    graph.validate()?;
    let n = graph.locations.len();
    let mut dims = Vec::with_capacity(2 * n + 2);
    for l in &graph.locations {
        dims.push(Dimension::binary(format!("at-{l}"), "no", "yes"));
    }
    for l in &graph.locations {
        dims.push(Dimension::binary(format!("spare-{l}"), "no", "yes"));
    }
    dims.push(Dimension::binary("has-spare", "no", "yes"));
    dims.push(Dimension::binary("flat", "no", "yes"));
    let space = FactoredSpace::new(dims)?;
    let at = |i: usize| i;
    let spare = |i: usize| n + i;
    let has = 2 * n;
    let flat = 2 * n + 1;
    let a = |p: &[(usize, Value)]| Assignment::new(p.to_vec()).expect("distinct dimensions");

    let mut actions: Vec<(String, Vec<TransitionRule>)> = vec![("noop".into(), vec![])];
    for &(from, to) in &graph.edges {
        let moved = a(&[(at(from), 0), (at(to), 1)]);
        let moved_flat = a(&[(at(from), 0), (at(to), 1), (flat, 1)]);
        let mut outcomes = Vec::new();
        if opts.flat_prob < 1.0 {
            outcomes.push((1.0 - opts.flat_prob, moved));
        }
        if opts.flat_prob > 0.0 {
            outcomes.push((opts.flat_prob, moved_flat));
        }
        let rule = TransitionRule { guard: a(&[(at(from), 1), (flat, 0)]), outcomes };
        actions.push((format!("move-{}-{}", graph.locations[from], graph.locations[to]), vec![rule]));
    }
    for (i, l) in graph.locations.iter().enumerate() {
        let rule =
            TransitionRule::deterministic(a(&[(at(i), 1), (spare(i), 1), (has, 0)]), a(&[(spare(i), 0), (has, 1)]));
        actions.push((format!("loadtire-{l}"), vec![rule]));
    }
    actions.push(("changetire".into(), vec![TransitionRule::deterministic(a(&[(has, 1)]), a(&[(has, 0), (flat, 0)]))]));

    let goal = a(&[(at(graph.goal), 1)]);
    let model = ActionModel::new(&space, actions, vec![RewardRule { guard: goal.clone(), reward: 0.0 }], -1.0)?;
    let mut init = vec![0 as Value; 2 * n + 2];
    init[at(graph.initial)] = 1;
    for (i, &s) in graph.spares.iter().enumerate() {
        init[spare(i)] = s as Value;
    }
    ProblemInstance::new(format!("tireworld-{n}"), space, model, SpecificState::new(init), opts.gamma, Some(goal))
}
