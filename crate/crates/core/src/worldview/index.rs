//! Trie over worldview patterns, one level per dimension. Each node keeps one
//! slot per concrete value plus a final slot for "abstract"; slots at the last
//! level hold state ids rather than nodes.

use crate::space::Value;

use super::{StateId, ABSTRACT};

const EMPTY: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    slots: Box<[u32]>,
    used: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct PatternIndex {
    widths: Vec<usize>,
    nodes: Vec<Node>,
    free: Vec<u32>,
}

impl PatternIndex {
    pub fn new(widths: &[usize]) -> Self {
        let mut idx = PatternIndex { widths: widths.to_vec(), nodes: Vec::new(), free: Vec::new() };
        idx.alloc(0);
        idx
    }

    fn slot(&self, depth: usize, v: Value) -> usize {
        if v == ABSTRACT {
            self.widths[depth]
        } else {
            v as usize
        }
    }

    fn alloc(&mut self, depth: usize) -> u32 {
        let node = Node { slots: vec![EMPTY; self.widths[depth] + 1].into_boxed_slice(), used: 0 };
        match self.free.pop() {
            Some(id) => {
                self.nodes[id as usize] = node;
                id
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    pub fn insert(&mut self, pattern: &[Value], id: StateId) {
        let last = self.widths.len() - 1;
        let mut node = 0u32;
        for (depth, &v) in pattern.iter().enumerate() {
            let slot = self.slot(depth, v);
            let cur = self.nodes[node as usize].slots[slot];
            if depth == last {
                debug_assert_eq!(cur, EMPTY, "pattern indexed twice");
                let n = &mut self.nodes[node as usize];
                n.slots[slot] = id;
                n.used += 1;
            } else if cur == EMPTY {
                let child = self.alloc(depth + 1);
                let n = &mut self.nodes[node as usize];
                n.slots[slot] = child;
                n.used += 1;
                node = child;
            } else {
                node = cur;
            }
        }
    }

    pub fn remove(&mut self, pattern: &[Value]) {
        let mut path: Vec<(u32, usize)> = Vec::with_capacity(pattern.len());
        let mut node = 0u32;
        for (depth, &v) in pattern.iter().enumerate() {
            let slot = self.slot(depth, v);
            path.push((node, slot));
            if depth + 1 < pattern.len() {
                node = self.nodes[node as usize].slots[slot];
                assert_ne!(node, EMPTY, "removing a pattern that is not indexed");
            }
        }
        while let Some((node, slot)) = path.pop() {
            let n = &mut self.nodes[node as usize];
            n.slots[slot] = EMPTY;
            n.used -= 1;
            if n.used > 0 || node == 0 {
                break;
            }
            self.free.push(node);
        }
    }

    /// Calls `f` for every indexed pattern that intersects `region`.
    pub fn for_each_intersecting(&self, region: &[Value], mut f: impl FnMut(StateId)) {
        let last = self.widths.len() - 1;
        let mut stack: Vec<(u32, usize)> = vec![(0, 0)];
        while let Some((node, depth)) = stack.pop() {
            let slots = &self.nodes[node as usize].slots;
            let v = region[depth];
            let mut visit = |slot: usize, stack: &mut Vec<(u32, usize)>| {
                let c = slots[slot];
                if c == EMPTY {
                    return;
                }
                if depth == last {
                    f(c);
                } else {
                    stack.push((c, depth + 1));
                }
            };
            if v == ABSTRACT {
                for slot in (0..slots.len()).rev() {
                    visit(slot, &mut stack);
                }
            } else {
                visit(self.widths[depth], &mut stack);
                visit(v as usize, &mut stack);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_query_remove() {
        let mut idx = PatternIndex::new(&[3, 2]);
        idx.insert(&[0, ABSTRACT], 7);
        idx.insert(&[1, 0], 8);
        idx.insert(&[1, 1], 9);
        idx.insert(&[2, ABSTRACT], 10);
        let q = |idx: &PatternIndex, r: &[Value]| {
            let mut v = Vec::new();
            idx.for_each_intersecting(r, |id| v.push(id));
            v.sort();
            v
        };
        assert_eq!(q(&idx, &[1, 1]), vec![9]);
        assert_eq!(q(&idx, &[ABSTRACT, 0]), vec![7, 8, 10]);
        assert_eq!(q(&idx, &[ABSTRACT, ABSTRACT]), vec![7, 8, 9, 10]);
        idx.remove(&[1, 0]);
        idx.remove(&[1, 1]);
        assert_eq!(q(&idx, &[1, ABSTRACT]), Vec::<u32>::new());
        idx.insert(&[1, ABSTRACT], 11);
        assert_eq!(q(&idx, &[1, 0]), vec![11]);
        assert!(idx.free.is_empty());
    }
}
