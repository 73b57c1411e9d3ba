use serde::{Deserialize, Serialize};

use crate::error::{MdnError, Result};

/// A directed vote from joint `source` to joint `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
}

impl Edge {
    pub fn new(source: usize, target: usize) -> Self {
        Self { source, target }
    }

    pub fn is_self(&self) -> bool {
        self.source == self.target
    }
}

/// Which joint maps vote for which. Displacement channel `e` serves `edges[e]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteGraph {
    num_joints: usize,
    edges: Vec<Edge>,
}

impl VoteGraph {
    /// Self-edges only: every joint refines its own map.
    pub fn within_part(num_joints: usize) -> Self {
        Self {
            num_joints,
            edges: (0..num_joints).map(|j| Edge::new(j, j)).collect(),
        }
    }

    /// Self-edges followed by both directions of every tree edge.
    ///
    /// `tree` must be a spanning tree over `0..num_joints`.
    pub fn cross_part(num_joints: usize, tree: &[(usize, usize)]) -> Result<Self> {
        if num_joints == 0 {
            return Err(MdnError::Config(
                "vote graph needs at least one joint".into(),
            ));
        }
        if tree.len() + 1 != num_joints {
            return Err(MdnError::Config(format!(
                "a tree over {num_joints} joints has {} edges, got {}",
                num_joints - 1,
                tree.len()
            )));
        }
        // union-find connectivity check
        let mut parent: Vec<usize> = (0..num_joints).collect();
        fn root(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for &(a, b) in tree {
            if a >= num_joints || b >= num_joints || a == b {
                return Err(MdnError::Config(format!("invalid tree edge ({a}, {b})")));
            }
            let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
            if ra == rb {
                return Err(MdnError::Config(format!(
                    "tree edge ({a}, {b}) closes a cycle"
                )));
            }
            parent[ra] = rb;
        }
        let mut edges: Vec<Edge> = (0..num_joints).map(|j| Edge::new(j, j)).collect();
        for &(a, b) in tree {
            edges.push(Edge::new(a, b));
            edges.push(Edge::new(b, a));
        }
        Ok(Self { num_joints, edges })
    }

    /// Cross-part graph over the chain `0 - 1 - ... - (n-1)`.
    pub fn chain(num_joints: usize) -> Result<Self> {
        let tree: Vec<_> = (1..num_joints).map(|j| (j - 1, j)).collect();
        Self::cross_part(num_joints, &tree)
    }

    /// Arbitrary edge list; indices must be in range.
    pub fn from_edges(num_joints: usize, edges: Vec<Edge>) -> Result<Self> {
        if num_joints == 0 || edges.is_empty() {
            return Err(MdnError::Config("vote graph needs joints and edges".into()));
        }
        if let Some(e) = edges
            .iter()
            .find(|e| e.source >= num_joints || e.target >= num_joints)
        {
            return Err(MdnError::Config(format!(
                "edge {e:?} out of range for {num_joints} joints"
            )));
        }
        Ok(Self { num_joints, edges })
    }

    pub fn num_joints(&self) -> usize {
        self.num_joints
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn within_part_is_identity() {
        let g = VoteGraph::within_part(3);
        assert!(g.edges().iter().all(Edge::is_self));
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn chain_has_both_directions_and_self_edges() {
        let g = VoteGraph::chain(3).unwrap();
        assert_eq!(g.num_edges(), 7);
        for e in [(0, 1), (1, 0), (1, 2), (2, 1), (0, 0), (1, 1), (2, 2)] {
            assert!(g.edges().contains(&Edge::new(e.0, e.1)));
        }
    }

    #[test]
    fn disconnected_or_cyclic_trees_are_rejected() {
        assert!(VoteGraph::cross_part(3, &[(0, 1)]).is_err());
        assert!(VoteGraph::cross_part(3, &[(0, 1), (1, 0)]).is_err());
        assert!(VoteGraph::cross_part(3, &[(0, 1), (1, 5)]).is_err());
        assert!(VoteGraph::cross_part(4, &[(0, 1), (2, 3), (3, 2)]).is_err());
    }
}
