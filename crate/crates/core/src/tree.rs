//! Decision trees over factored spaces, compiled from first-match rule lists.

use std::collections::{BTreeSet, HashMap};

use crate::error::ModelError;
use crate::space::{Assignment, FactoredSpace, SpecificState, Value};

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq)]
pub enum Node<L> {
    /// Branch on one dimension; one child per value.
    Test { dim: usize, children: Box<[NodeId]> },
    Leaf(L),
}

/// A rooted DAG of test nodes. Identical subtrees are shared, so the
/// number of root-to-leaf paths may exceed the number of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree<L> {
    nodes: Vec<Node<L>>,
    root: NodeId,
}

impl<L> DecisionTree<L> {
    pub fn leaf(payload: L) -> Self {
        DecisionTree { nodes: vec![Node::Leaf(payload)], root: 0 }
    }

    pub fn from_nodes(nodes: Vec<Node<L>>, root: NodeId) -> Self {
        DecisionTree { nodes, root }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node<L> {
        &self.nodes[id as usize]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Leaf reached by a specific state.
    pub fn eval(&self, s: &SpecificState) -> &L {
        let mut id = self.root;
        loop {
            match &self.nodes[id as usize] {
                Node::Test { dim, children } => id = children[s.get(*dim) as usize],
                Node::Leaf(l) => return l,
            }
        }
    }

    /// Sorted set of dimensions tested anywhere in the tree.
    pub fn tested_dims(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Test { dim, .. } => Some(*dim),
                Node::Leaf(_) => None,
            })
            .collect();
        set.into_iter().collect()
    }

    /// The partial assignments read off every root-to-leaf path, deduplicated.
    pub fn path_assignments(&self) -> BTreeSet<Assignment> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<(NodeId, Vec<(usize, Value)>)> = vec![(self.root, Vec::new())];
        while let Some((id, path)) = stack.pop() {
            match &self.nodes[id as usize] {
                Node::Leaf(_) => {
                    out.insert(Assignment::new(path).expect("paths never repeat a dimension"));
                }
                Node::Test { dim, children } => {
                    for (v, &c) in children.iter().enumerate() {
                        let mut p = path.clone();
                        p.push((*dim, v as Value));
                        stack.push((c, p));
                    }
                }
            }
        }
        out
    }

    /// Checks structure against `space`: child counts match widths, child ids
    /// are in range, and no dimension is tested twice on a path.
    pub fn validate(&self, space: &FactoredSpace) -> Result<(), ModelError> {
        if self.root as usize >= self.nodes.len() {
            return Err(ModelError::InvalidTree("root out of range".into()));
        }
        for n in &self.nodes {
            if let Node::Test { dim, children } = n {
                if *dim >= space.dim_count() {
                    return Err(ModelError::InvalidTree(format!("test on unknown dimension #{dim}")));
                }
                if children.len() != space.width(*dim) {
                    return Err(ModelError::InvalidTree(format!(
                        "test on `{}` has {} children, expected {}",
                        space.dim(*dim).name(),
                        children.len(),
                        space.width(*dim)
                    )));
                }
                if children.iter().any(|&c| c as usize >= self.nodes.len()) {
                    return Err(ModelError::InvalidTree("child id out of range".into()));
                }
            }
        }
        let mut stack: Vec<(NodeId, Vec<usize>)> = vec![(self.root, Vec::new())];
        let mut seen: HashMap<(NodeId, Vec<usize>), ()> = HashMap::new();
        while let Some((id, mut tested)) = stack.pop() {
            tested.sort_unstable();
            if seen.insert((id, tested.clone()), ()).is_some() {
                continue;
            }
            if let Node::Test { dim, children } = &self.nodes[id as usize] {
                if tested.contains(dim) {
                    return Err(ModelError::InvalidTree(format!(
                        "dimension `{}` tested twice on one path",
                        space.dim(*dim).name()
                    )));
                }
                let mut next = tested.clone();
                next.push(*dim);
                for &c in children.iter() {
                    stack.push((c, next.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn leaves(&self) -> impl Iterator<Item = &L> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            Node::Test { .. } => None,
        })
    }
}

/// Compiles an ordered list of guarded payloads into a tree with first-match
/// semantics; states matching no guard reach a leaf carrying `default`.
///
/// The tree tests, at each node, the lowest-numbered unresolved guard
/// dimension of the earliest rule still reachable.
pub fn compile_first_match<L: Clone>(
    space: &FactoredSpace,
    guards: &[Assignment],
    payloads: &[L],
    default: L,
) -> Result<DecisionTree<L>, ModelError> {
    assert_eq!(guards.len(), payloads.len());
    for (i, g) in guards.iter().enumerate() {
        space.check_assignment(g).map_err(|e| ModelError::InvalidRule { index: i, reason: e.to_string() })?;
    }
    let mut c = Compiler { space, payloads, default, nodes: Vec::new(), memo: HashMap::new(), leaves: HashMap::new() };
    let all: Vec<(u32, Vec<(usize, Value)>)> =
        guards.iter().enumerate().map(|(i, g)| (i as u32, g.iter().copied().collect())).collect();
    let root = c.build(all);
    Ok(DecisionTree { nodes: c.nodes, root })
}

type Pending = Vec<(u32, Vec<(usize, Value)>)>;

struct Compiler<'a, L> {
    space: &'a FactoredSpace,
    payloads: &'a [L],
    default: L,
    nodes: Vec<Node<L>>,
    memo: HashMap<Pending, NodeId>,
    leaves: HashMap<Option<u32>, NodeId>,
}

impl<L: Clone> Compiler<'_, L> {
    fn leaf(&mut self, rule: Option<u32>) -> NodeId {
        if let Some(&id) = self.leaves.get(&rule) {
            return id;
        }
        let payload = match rule {
            Some(r) => self.payloads[r as usize].clone(),
            None => self.default.clone(),
        };
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node::Leaf(payload));
        self.leaves.insert(rule, id);
        id
    }

    fn build(&mut self, pending: Pending) -> NodeId {
        let Some(first) = pending.first() else {
            return self.leaf(None);
        };
        if first.1.is_empty() {
            return self.leaf(Some(first.0));
        }
        if let Some(&id) = self.memo.get(&pending) {
            return id;
        }
        let dim = first.1.iter().map(|p| p.0).min().expect("nonempty guard");
        let width = self.space.width(dim);
        let mut children = Vec::with_capacity(width);
        for v in 0..width as Value {
            let sub: Pending = pending
                .iter()
                .filter_map(|(r, g)| match g.iter().find(|p| p.0 == dim) {
                    Some(&(_, want)) if want != v => None,
                    Some(_) => Some((*r, g.iter().copied().filter(|p| p.0 != dim).collect())),
                    None => Some((*r, g.clone())),
                })
                .collect();
            children.push(self.build(sub));
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node::Test { dim, children: children.into_boxed_slice() });
        self.memo.insert(pending, id);
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Dimension;

    fn space() -> FactoredSpace {
        FactoredSpace::new(vec![
            Dimension::numeric("a", 3),
            Dimension::numeric("b", 2),
            Dimension::numeric("c", 4),
        ])
        .unwrap()
    }

    fn first_match<'a>(guards: &[Assignment], payloads: &'a [i32], default: &'a i32, s: &SpecificState) -> &'a i32 {
        guards.iter().position(|g| s.matches(g)).map(|i| &payloads[i]).unwrap_or(default)
    }

    #[test]
    fn empty_list_is_single_leaf() {
        let sp = space();
        let t = compile_first_match::<i32>(&sp, &[], &[], 7).unwrap();
        assert_eq!(t.node_count(), 1);
        assert_eq!(*t.eval(&sp.state_at(5)), 7);
        assert_eq!(t.path_assignments().len(), 1);
        assert!(t.path_assignments().iter().next().unwrap().is_empty());
    }

    #[test]
    fn earlier_rule_wins_on_overlap() {
        let sp = space();
        let g = vec![
            Assignment::new(vec![(0, 1)]).unwrap(),
            Assignment::new(vec![(0, 1), (1, 0)]).unwrap(),
            Assignment::new(vec![(2, 3)]).unwrap(),
        ];
        let p = [10, 20, 30];
        let t = compile_first_match(&sp, &g, &p, 0).unwrap();
        t.validate(&sp).unwrap();
        for i in 0..sp.size() as usize {
            let s = sp.state_at(i);
            assert_eq!(t.eval(&s), first_match(&g, &p, &0, &s), "state {s:?}");
        }
    }

    #[test]
    fn rejects_bad_rule() {
        let sp = space();
        let g = vec![Assignment::new(vec![(1, 5)]).unwrap()];
        let e = compile_first_match(&sp, &g, &[1], 0).unwrap_err();
        assert!(matches!(e, ModelError::InvalidRule { index: 0, .. }));
    }

    proptest::proptest! {
        #[test]
        fn agrees_with_interpreter(raw in proptest::collection::vec(
            (proptest::option::of(0u16..3), proptest::option::of(0u16..2), proptest::option::of(0u16..4), -5i32..5), 0..8)) {
            let sp = space();
            let mut g = Vec::new();
            let mut p = Vec::new();
            for (a, b, c, v) in raw {
                let mut pairs = Vec::new();
                if let Some(a) = a { pairs.push((0, a)); }
                if let Some(b) = b { pairs.push((1, b)); }
                if let Some(c) = c { pairs.push((2, c)); }
                g.push(Assignment::new(pairs).unwrap());
                p.push(v);
            }
            let t = compile_first_match(&sp, &g, &p, 99).unwrap();
            t.validate(&sp).unwrap();
            for i in 0..sp.size() as usize {
                let s = sp.state_at(i);
                proptest::prop_assert_eq!(t.eval(&s), first_match(&g, &p, &99, &s));
            }
        }
    }
}
