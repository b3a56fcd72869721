use rand::{Rng, RngCore};

use super::{DecisionTree, Node};
use crate::error::{Error, Result};

/// A tree shape: feature dimension, depth, node count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShapeSpec {
    pub name: &'static str,
    pub n: usize,
    pub d: usize,
    pub m: usize,
}

/// The benchmark trees' public parameters.
pub const TABLE2: [ShapeSpec; 8] = [
    ShapeSpec { name: "wine", n: 7, d: 5, m: 23 },
    ShapeSpec { name: "linnerud", n: 3, d: 6, m: 39 },
    ShapeSpec { name: "breast", n: 12, d: 7, m: 43 },
    ShapeSpec { name: "digits", n: 47, d: 15, m: 337 },
    ShapeSpec { name: "spambase", n: 57, d: 17, m: 171 },
    ShapeSpec { name: "diabetes", n: 10, d: 28, m: 787 },
    ShapeSpec { name: "boston", n: 13, d: 30, m: 851 },
    ShapeSpec { name: "mnist", n: 784, d: 20, m: 4179 },
];

pub fn preset(name: &str) -> Result<ShapeSpec> {
    let lower = name.to_ascii_lowercase();
    TABLE2
        .iter()
        .find(|s| s.name == lower)
        .copied()
        .ok_or_else(|| Error::ConfigInvalid(format!("unknown preset {name:?}")))
}

/// The scalability shape: `m = 25 d`. An even `m` cannot be a full binary
/// tree, so generation builds `m - 1` nodes and the encoder pads the array.
pub fn scalability(n: usize, d: usize) -> ShapeSpec {
    ShapeSpec { name: "scalability", n, d, m: 25 * d }
}

fn value<R: RngCore + ?Sized>(ell: usize, rng: &mut R) -> u64 {
    if ell >= 64 {
        rng.next_u64()
    } else {
        rng.next_u64() & ((1u64 << ell) - 1)
    }
}

fn internal<R: RngCore + ?Sized>(n: usize, ell: usize, rng: &mut R) -> Node {
    Node::Internal { t: value(ell, rng), v: rng.gen_range(0..n as u64), l: 0, r: 0 }
}

pub fn random_features<R: RngCore + ?Sized>(n: usize, ell: usize, rng: &mut R) -> Vec<u64> {
    (0..n).map(|_| value(ell, rng)).collect()
}

/// Complete tree of depth `d` with random tests and labels.
pub fn complete<R: RngCore + ?Sized>(n: usize, d: usize, ell: usize, rng: &mut R) -> DecisionTree {
    fn build<R: RngCore + ?Sized>(n: usize, d: usize, ell: usize, rng: &mut R, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        if d == 0 {
            nodes.push(Node::Leaf { c: value(ell, rng) });
            return id;
        }
        nodes.push(internal(n, ell, rng));
        let l = build(n, d - 1, ell, rng, nodes);
        let r = build(n, d - 1, ell, rng, nodes);
        if let Node::Internal { l: li, r: ri, .. } = &mut nodes[id] {
            *li = l;
            *ri = r;
        }
        id
    }
    let mut nodes = Vec::with_capacity((1 << (d + 1)) - 1);
    build(n, d, ell, rng, &mut nodes);
    DecisionTree { n, nodes }
}

/// A tree of depth exactly `d` with `m` nodes: a random spine of length
/// `d`, then random leaves above the bottom are split until `m` is reached.
/// Needs `m` odd and `2d + 1 <= m <= 2^(d+1) - 1`.
pub fn sparse<R: RngCore + ?Sized>(n: usize, d: usize, m: usize, ell: usize, rng: &mut R) -> Result<DecisionTree> {
    if n == 0 {
        return Err(Error::ConfigInvalid("feature dimension is 0".into()));
    }
    let max = if d >= 62 { usize::MAX } else { (1usize << (d + 1)) - 1 };
    if m % 2 == 0 || m < 2 * d + 1 || m > max {
        return Err(Error::ConfigInvalid(format!("no binary tree of depth {d} has {m} nodes")));
    }
    let mut nodes = Vec::with_capacity(m);
    let mut depth_of = Vec::with_capacity(m);
    // open leaves above the bottom level
    let mut open: Vec<usize> = Vec::new();

    let mut cur = 0;
    nodes.push(Node::Leaf { c: 0 });
    depth_of.push(0);
    for level in 0..d {
        nodes[cur] = internal(n, ell, rng);
        let a = nodes.len();
        nodes.push(Node::Leaf { c: 0 });
        nodes.push(Node::Leaf { c: 0 });
        depth_of.push(level + 1);
        depth_of.push(level + 1);
        let (spine, side) = if rng.gen() { (a, a + 1) } else { (a + 1, a) };
        if let Node::Internal { l, r, .. } = &mut nodes[cur] {
            *l = a;
            *r = a + 1;
        }
        if level + 1 < d {
            open.push(side);
        }
        cur = spine;
    }
    while nodes.len() < m {
        let k = rng.gen_range(0..open.len());
        let u = open.swap_remove(k);
        let du = depth_of[u];
        let a = nodes.len();
        nodes[u] = internal(n, ell, rng);
        if let Node::Internal { l, r, .. } = &mut nodes[u] {
            *l = a;
            *r = a + 1;
        }
        nodes.push(Node::Leaf { c: 0 });
        nodes.push(Node::Leaf { c: 0 });
        depth_of.push(du + 1);
        depth_of.push(du + 1);
        if du + 1 < d {
            open.push(a);
            open.push(a + 1);
        }
    }
    for node in &mut nodes {
        if let Node::Leaf { c } = node {
            *c = value(ell, rng);
        }
    }
    let t = DecisionTree { n, nodes };
    debug_assert_eq!(t.depth(), d);
    Ok(t)
}

/// A random tree of depth `d` with a random node count, capped at 255.
pub fn random_tree<R: RngCore + ?Sized>(n: usize, d: usize, ell: usize, rng: &mut R) -> DecisionTree {
    let lo = 2 * d + 1;
    let hi = if d >= 7 { 255 } else { (1usize << (d + 1)) - 1 }.max(lo);
    let m = lo + 2 * rng.gen_range(0..=(hi - lo) / 2);
    sparse(n, d, m, ell, rng).expect("shape in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::Prng;
    use rand::SeedableRng;

    #[test]
    fn presets_match_the_benchmark_table() {
        let w = preset("wine").unwrap();
        assert_eq!((w.n, w.d, w.m), (7, 5, 23));
        let m = preset("MNIST").unwrap();
        assert_eq!((m.n, m.d, m.m), (784, 20, 4179));
        assert!(preset("iris").is_err());
        assert_eq!(scalability(10, 50).m, 1250);
    }

    #[test]
    fn every_preset_generates_its_shape() {
        let mut rng = Prng::seed_from_u64(1);
        for s in TABLE2 {
            let t = sparse(s.n, s.d, s.m, 16, &mut rng).unwrap();
            t.validate().unwrap();
            assert_eq!((t.n, t.depth(), t.node_count()), (s.n, s.d, s.m), "{}", s.name);
        }
    }

    #[test]
    fn sparse_bounds() {
        let mut rng = Prng::seed_from_u64(2);
        assert!(sparse(2, 3, 6, 8, &mut rng).is_err());
        assert!(sparse(2, 3, 5, 8, &mut rng).is_err());
        assert!(sparse(2, 3, 17, 8, &mut rng).is_err());
        assert!(sparse(2, 3, 15, 8, &mut rng).unwrap().is_complete());
        assert_eq!(sparse(2, 0, 1, 8, &mut rng).unwrap().node_count(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = sparse(5, 6, 41, 16, &mut Prng::seed_from_u64(3)).unwrap();
        let b = sparse(5, 6, 41, 16, &mut Prng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let c = complete(5, 4, 16, &mut Prng::seed_from_u64(3));
        assert!(c.is_complete());
        assert_eq!(c.depth(), 4);
    }
}
