use std::collections::HashMap;

use rand::{Rng, RngCore};

use super::{DecisionTree, Node};
use crate::bits::Bits;
use crate::error::{Error, Result};

/// One array entry: `t || l || r || v || c`, each `ell` bits, `t` lowest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeRecord {
    pub t: u64,
    pub l: u64,
    pub r: u64,
    pub v: u64,
    pub c: u64,
}

impl NodeRecord {
    pub const FIELDS: usize = 5;

    pub fn to_bits(&self, ell: usize) -> Bits {
        let mut b = Bits::zeros(Self::FIELDS * ell);
        for (k, x) in [self.t, self.l, self.r, self.v, self.c].into_iter().enumerate() {
            b.write(k * ell, &Bits::from_u64(x, ell));
        }
        b
    }

    pub fn from_bits(b: &Bits, ell: usize) -> NodeRecord {
        let f = |k: usize| b.slice(k * ell, ell).to_u64();
        NodeRecord { t: f(0), l: f(1), r: f(2), v: f(3), c: f(4) }
    }

    fn is_self_loop(&self, at: usize) -> bool {
        self.l == at as u64 && self.r == at as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layout {
    /// DFS preorder, root at 0, child fields are array indices.
    Flat,
    /// Complete tree, layer `i` at offset `2^i - 1`; child fields index the
    /// next layer, bottom-layer leaves point at themselves.
    Layered,
    /// Clusters of `2^q - 1` records in preorder; only bottom-level child
    /// fields matter and they hold cluster ids.
    Clustered { q: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedTree {
    pub ell: usize,
    pub n: usize,
    /// Depth of the source tree.
    pub depth: usize,
    pub layout: Layout,
    pub records: Vec<NodeRecord>,
}

impl EncodedTree {
    /// Width of one packed record.
    pub fn record_bits(&self) -> usize {
        NodeRecord::FIELDS * self.ell
    }

    /// Flat: the array length m.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cluster_size(&self) -> usize {
        match self.layout {
            Layout::Clustered { q } => (1 << q) - 1,
            _ => 1,
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.records.len() / self.cluster_size()
    }

    pub fn cluster(&self, k: usize) -> &[NodeRecord] {
        let s = self.cluster_size();
        &self.records[k * s..(k + 1) * s]
    }

    /// Number of layers (layered layout).
    pub fn layer_count(&self) -> usize {
        self.depth + 1
    }

    pub fn layer(&self, i: usize) -> &[NodeRecord] {
        &self.records[(1 << i) - 1..(1 << (i + 1)) - 1]
    }

    /// Appends unreachable filler records so a flat array has length `m`.
    pub fn pad_to<R: RngCore + ?Sized>(&mut self, m: usize, rng: &mut R) -> Result<()> {
        if self.layout != Layout::Flat {
            return Err(Error::LayoutMismatch);
        }
        if m > 1usize.checked_shl(self.ell as u32).unwrap_or(usize::MAX) {
            return Err(Error::ConfigInvalid(format!("{m} records do not fit {}-bit indices", self.ell)));
        }
        while self.records.len() < m {
            let at = self.records.len() as u64;
            let c = filler(self.ell, rng);
            self.records.push(NodeRecord { t: filler(self.ell, rng), l: at, r: at, v: rng.gen_range(0..self.n as u64), c });
        }
        Ok(())
    }

    /// The records packed as `ell * 5`-bit words (cluster layout: one word
    /// per cluster, records concatenated).
    pub fn packed(&self) -> Vec<Bits> {
        self.records
            .chunks(self.cluster_size())
            .map(|c| Bits::concat(c.iter().map(|r| r.to_bits(self.ell)).collect::<Vec<_>>().iter()))
            .collect()
    }
}

fn filler<R: RngCore + ?Sized>(ell: usize, rng: &mut R) -> u64 {
    if ell >= 64 {
        rng.next_u64()
    } else {
        rng.next_u64() & ((1u64 << ell) - 1)
    }
}

/// Flat self-loop encoding in DFS preorder. Leaves get a random threshold
/// and feature, internal nodes a random label.
pub fn encode<R: RngCore + ?Sized>(tree: &DecisionTree, ell: usize, rng: &mut R) -> Result<EncodedTree> {
    tree.validate()?;
    if ell == 0 || ell > 64 {
        return Err(Error::ConfigInvalid(format!("ell = {ell} is outside 1..=64")));
    }
    let cap = if ell == 64 { u64::MAX } else { (1u64 << ell) - 1 };
    if tree.max_value() > cap {
        return Err(Error::InvalidTree(format!("a threshold or label does not fit in {ell} bits")));
    }
    if tree.node_count() as u64 - 1 > cap || tree.n as u64 - 1 > cap {
        return Err(Error::InvalidTree(format!("indices do not fit in {ell} bits")));
    }
    let mut records = Vec::with_capacity(tree.node_count());
    let mut stack = vec![(0usize, None::<(usize, bool)>)];
    while let Some((u, parent)) = stack.pop() {
        let at = records.len();
        if let Some((p, left)) = parent {
            let rec: &mut NodeRecord = &mut records[p];
            if left {
                rec.l = at as u64;
            } else {
                rec.r = at as u64;
            }
        }
        match tree.nodes[u] {
            Node::Leaf { c } => records.push(NodeRecord {
                t: filler(ell, rng),
                l: at as u64,
                r: at as u64,
                v: rng.gen_range(0..tree.n as u64),
                c,
            }),
            Node::Internal { t, v, l, r } => {
                records.push(NodeRecord { t, l: 0, r: 0, v, c: filler(ell, rng) });
                stack.push((r, Some((at, false))));
                stack.push((l, Some((at, true))));
            }
        }
    }
    Ok(EncodedTree { ell, n: tree.n, depth: tree.depth(), layout: Layout::Flat, records })
}

/// Layer-by-layer layout of a complete tree (see [`super::pad_complete`]).
pub fn layered(at: &EncodedTree) -> Result<EncodedTree> {
    if at.layout != Layout::Flat {
        return Err(Error::LayoutMismatch);
    }
    let d = at.depth;
    if d >= 40 || at.records.len() != (1usize << (d + 1)) - 1 {
        return Err(Error::TreeNotComplete);
    }
    let mut records = Vec::with_capacity(at.records.len());
    let mut layer = vec![0usize];
    for i in 0..=d {
        let mut next = Vec::with_capacity(layer.len() * 2);
        for (p, &u) in layer.iter().enumerate() {
            let mut rec = at.records[u];
            let leaf = rec.is_self_loop(u);
            if i == d {
                if !leaf {
                    return Err(Error::TreeNotComplete);
                }
                rec.l = p as u64;
                rec.r = p as u64;
            } else {
                if leaf {
                    return Err(Error::TreeNotComplete);
                }
                next.push(rec.l as usize);
                next.push(rec.r as usize);
                rec.l = 2 * p as u64;
                rec.r = 2 * p as u64 + 1;
            }
            records.push(rec);
        }
        layer = next;
    }
    Ok(EncodedTree { layout: Layout::Layered, records, ..at.clone() })
}

/// Packs a flat encoding into clusters of `q` levels. A leaf above a
/// cluster's bottom level is copied into every position below it, and a
/// leaf at the bottom points at its own leaf cluster, which is all copies
/// and loops to itself. Cluster ids follow DFS preorder, so `q = 1`
/// reproduces the flat array.
pub fn cluster(at: &EncodedTree, q: usize) -> Result<EncodedTree> {
    if !(1..=3).contains(&q) {
        return Err(Error::UnsupportedQ(q));
    }
    if at.layout != Layout::Flat {
        return Err(Error::LayoutMismatch);
    }
    struct Packer<'a> {
        recs: &'a [NodeRecord],
        q: usize,
        ids: HashMap<usize, usize>,
        out: Vec<Option<Vec<NodeRecord>>>,
    }
    impl Packer<'_> {
        fn visit(&mut self, u: usize) -> usize {
            if let Some(&id) = self.ids.get(&u) {
                return id;
            }
            let id = self.out.len();
            self.ids.insert(u, id);
            self.out.push(None);
            let mut recs = Vec::with_capacity((1 << self.q) - 1);
            let mut bottom = Vec::new();
            self.fill(u, 0, &mut recs, &mut bottom);
            for (pos, lt, rt) in bottom {
                let l = self.visit(lt) as u64;
                let r = self.visit(rt) as u64;
                recs[pos].l = l;
                recs[pos].r = r;
            }
            self.out[id] = Some(recs);
            id
        }

        fn fill(&self, u: usize, level: usize, recs: &mut Vec<NodeRecord>, bottom: &mut Vec<(usize, usize, usize)>) {
            let rec = self.recs[u];
            let leaf = rec.is_self_loop(u);
            let pos = recs.len();
            recs.push(rec);
            if level + 1 == self.q {
                if leaf {
                    bottom.push((pos, u, u));
                } else {
                    bottom.push((pos, rec.l as usize, rec.r as usize));
                }
                return;
            }
            let (lc, rc) = if leaf { (u, u) } else { (rec.l as usize, rec.r as usize) };
            let lpos = recs.len();
            self.fill(lc, level + 1, recs, bottom);
            let rpos = recs.len();
            self.fill(rc, level + 1, recs, bottom);
            recs[pos].l = lpos as u64;
            recs[pos].r = rpos as u64;
        }
    }
    let mut p = Packer { recs: &at.records, q, ids: HashMap::new(), out: Vec::new() };
    p.visit(0);
    let records = p.out.into_iter().flat_map(|c| c.expect("every cluster is filled")).collect();
    Ok(EncodedTree { layout: Layout::Clustered { q }, records, ..at.clone() })
}

/// The reference evaluation of an encoded tree.
///
/// Starts from the root's label and makes `d_prime` moves, each comparing
/// `x[v] < t`, stepping to `l` or `r` and taking the reached node's label.
/// Clustered layouts move a whole cluster at a time and so make
/// `q * ceil(d_prime / q)` moves; self-loops make the extra moves no-ops.
pub fn plaintext_eval(at: &EncodedTree, x: &[u64], d_prime: usize) -> Result<u64> {
    if x.len() != at.n {
        return Err(Error::ConfigInvalid(format!("feature vector has {} entries, tree expects {}", x.len(), at.n)));
    }
    let feature = |rec: &NodeRecord| -> Result<u64> {
        x.get(rec.v as usize).copied().ok_or(Error::IndexOutOfRange { index: rec.v, size: x.len() as u64 })
    };
    let get = |recs: &[NodeRecord], i: u64| -> Result<NodeRecord> {
        recs.get(i as usize).copied().ok_or(Error::IndexOutOfRange { index: i, size: recs.len() as u64 })
    };
    match at.layout {
        Layout::Flat => {
            let mut cur = at.records[0];
            for _ in 0..d_prime {
                let next = if feature(&cur)? < cur.t { cur.l } else { cur.r };
                cur = get(&at.records, next)?;
            }
            Ok(cur.c)
        }
        Layout::Layered => {
            let mut cur = at.layer(0)[0];
            for i in 1..=d_prime {
                let next = if feature(&cur)? < cur.t { cur.l } else { cur.r };
                cur = get(at.layer(i.min(at.depth)), next)?;
            }
            Ok(cur.c)
        }
        Layout::Clustered { q } => {
            let mut cl = at.cluster(0);
            for _ in 0..d_prime.div_ceil(q) {
                let mut sub = cl;
                let next = loop {
                    let root = sub[0];
                    let b = feature(&root)? < root.t;
                    if sub.len() == 1 {
                        break if b { root.l } else { root.r };
                    }
                    let half = (sub.len() - 1) / 2;
                    sub = if b { &sub[1..1 + half] } else { &sub[1 + half..] };
                };
                if next as usize >= at.cluster_count() {
                    return Err(Error::IndexOutOfRange { index: next, size: at.cluster_count() as u64 });
                }
                cl = at.cluster(next as usize);
            }
            Ok(cl[0].c)
        }
    }
}
