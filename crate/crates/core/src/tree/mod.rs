//! Decision trees: the plain model, the self-loop array encoding, the
//! plaintext oracle, completion padding, cluster packing and synthetic
//! generators.

mod encode;
mod gen;
mod io;

use crate::error::{Error, Result};

pub use encode::{cluster, encode, layered, plaintext_eval, EncodedTree, Layout, NodeRecord};
pub use gen::{complete, preset, random_features, random_tree, scalability, sparse, ShapeSpec, TABLE2};
pub use io::{load_features, load_tree, parse_features_csv, parse_features_json, parse_tree_json, tree_to_json};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    /// Goes left when `x[v] < t`.
    Internal { t: u64, v: u64, l: usize, r: usize },
    Leaf { c: u64 },
}

/// A binary decision tree rooted at `nodes[0]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionTree {
    pub n: usize,
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn new(n: usize, nodes: Vec<Node>) -> Result<Self> {
        let t = DecisionTree { n, nodes };
        t.validate()?;
        Ok(t)
    }

    pub fn leaf(n: usize, c: u64) -> Self {
        DecisionTree { n, nodes: vec![Node::Leaf { c }] }
    }

    /// Every node reachable from the root exactly once, features in range.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidTree("feature dimension is 0".into()));
        }
        if self.nodes.is_empty() {
            return Err(Error::InvalidTree("no nodes".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(u) = stack.pop() {
            if seen[u] {
                return Err(Error::InvalidTree(format!("node {u} is reached twice (cycle or shared child)")));
            }
            seen[u] = true;
            if let Node::Internal { v, l, r, .. } = self.nodes[u] {
                if v as usize >= self.n || v >= self.n as u64 {
                    return Err(Error::InvalidTree(format!("node {u} tests feature {v} but n = {}", self.n)));
                }
                for child in [l, r] {
                    if child >= self.nodes.len() {
                        return Err(Error::InvalidTree(format!("node {u} has missing child {child}")));
                    }
                    stack.push(child);
                }
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidTree(format!("node {u} is unreachable")));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Longest root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((u, d)) = stack.pop() {
            match self.nodes[u] {
                Node::Leaf { .. } => best = best.max(d),
                Node::Internal { l, r, .. } => {
                    stack.push((l, d + 1));
                    stack.push((r, d + 1));
                }
            }
        }
        best
    }

    /// Every leaf at depth `d`, so `2^(d+1) - 1` nodes.
    pub fn is_complete(&self) -> bool {
        let d = self.depth();
        d < 63 && self.nodes.len() == (1usize << (d + 1)) - 1
    }

    /// Direct recursive walk; the oracle for everything else.
    pub fn evaluate(&self, x: &[u64]) -> Result<u64> {
        self.check_features(x)?;
        Ok(self.walk(0, x))
    }

    fn walk(&self, u: usize, x: &[u64]) -> u64 {
        match self.nodes[u] {
            Node::Leaf { c } => c,
            Node::Internal { t, v, l, r } => self.walk(if x[v as usize] < t { l } else { r }, x),
        }
    }

    pub(crate) fn check_features(&self, x: &[u64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::ConfigInvalid(format!("feature vector has {} entries, tree expects {}", x.len(), self.n)));
        }
        Ok(())
    }

    /// Largest threshold, label or feature id; encodings need it below `2^ell`.
    pub fn max_value(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| match *n {
                Node::Leaf { c } => c,
                Node::Internal { t, v, .. } => t.max(v),
            })
            .max()
            .unwrap_or(0)
    }
}

/// Pads every leaf above the bottom level with a complete dummy subtree
/// whose leaves all carry the original label. Dummy internal nodes test
/// feature 0 against threshold 0; both of their subtrees end in the same
/// label, so the outcome never matters.
pub fn pad_complete(tree: &DecisionTree) -> DecisionTree {
    let d = tree.depth();
    let mut nodes = Vec::with_capacity((1usize << (d + 1)) - 1);
    fn build(tree: &DecisionTree, u: usize, depth: usize, d: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        match tree.nodes[u] {
            Node::Internal { t, v, l, r } => {
                nodes.push(Node::Internal { t, v, l: 0, r: 0 });
                let li = build(tree, l, depth + 1, d, nodes);
                let ri = build(tree, r, depth + 1, d, nodes);
                nodes[id] = Node::Internal { t, v, l: li, r: ri };
            }
            Node::Leaf { c } => {
                if depth == d {
                    nodes.push(Node::Leaf { c });
                } else {
                    nodes.push(Node::Internal { t: 0, v: 0, l: 0, r: 0 });
                    let li = build(tree, u, depth + 1, d, nodes);
                    let ri = build(tree, u, depth + 1, d, nodes);
                    nodes[id] = Node::Internal { t: 0, v: 0, l: li, r: ri };
                }
            }
        }
        id
    }
    build(tree, 0, 0, d, &mut nodes);
    DecisionTree { n: tree.n, nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::Prng;
    use rand::{Rng, SeedableRng};

    fn stump() -> DecisionTree {
        DecisionTree::new(
            2,
            vec![
                Node::Internal { t: 10, v: 1, l: 1, r: 2 },
                Node::Leaf { c: 7 },
                Node::Leaf { c: 9 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn stump_is_strict_less_than() {
        let t = stump();
        assert_eq!(t.evaluate(&[0, 3]).unwrap(), 7);
        assert_eq!(t.evaluate(&[0, 10]).unwrap(), 9);
        assert_eq!(t.depth(), 1);
        assert!(t.is_complete());
    }

    #[test]
    fn validation_errors() {
        let missing = DecisionTree::new(1, vec![Node::Internal { t: 0, v: 0, l: 1, r: 5 }, Node::Leaf { c: 0 }]);
        assert!(matches!(missing, Err(Error::InvalidTree(_))));
        let cycle = DecisionTree::new(1, vec![Node::Internal { t: 0, v: 0, l: 0, r: 1 }, Node::Leaf { c: 0 }]);
        assert!(matches!(cycle, Err(Error::InvalidTree(_))));
        let shared = DecisionTree::new(1, vec![Node::Internal { t: 0, v: 0, l: 1, r: 1 }, Node::Leaf { c: 0 }]);
        assert!(shared.is_err());
        let feature = DecisionTree::new(1, vec![Node::Internal { t: 0, v: 1, l: 1, r: 2 }, Node::Leaf { c: 0 }, Node::Leaf { c: 0 }]);
        assert!(feature.is_err());
        let orphan = DecisionTree::new(1, vec![Node::Leaf { c: 0 }, Node::Leaf { c: 1 }]);
        assert!(orphan.is_err());
        assert!(DecisionTree::new(0, vec![Node::Leaf { c: 0 }]).is_err());
    }

    #[test]
    fn pad_complete_shapes() {
        let t = stump();
        assert_eq!(pad_complete(&t).node_count(), 3);
        let mut rng = Prng::seed_from_u64(1);
        let wine = sparse(7, 5, 23, 16, &mut rng).unwrap();
        assert_eq!((wine.depth(), wine.node_count()), (5, 23));
        let p = pad_complete(&wine);
        assert_eq!(p.node_count(), 63);
        assert!(p.is_complete());
        p.validate().unwrap();
        for _ in 0..1000 {
            let x = random_features(7, 16, &mut rng);
            assert_eq!(p.evaluate(&x).unwrap(), wine.evaluate(&x).unwrap());
        }
    }

    #[test]
    fn pad_preserves_random_trees() {
        let mut rng = Prng::seed_from_u64(2);
        for _ in 0..50 {
            let d = rng.gen_range(0..7);
            let t = random_tree(4, d, 8, &mut rng);
            let p = pad_complete(&t);
            assert!(p.is_complete());
            for _ in 0..20 {
                let x = random_features(4, 8, &mut rng);
                assert_eq!(p.evaluate(&x).unwrap(), t.evaluate(&x).unwrap());
            }
        }
    }
}
