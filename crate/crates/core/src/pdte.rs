//! The two-party evaluation protocol.
//!
//! P0 holds the tree, P1 the feature vector. Setup exchanges the public
//! shape, publishes the SOS arrays and shares the root. Each evaluation then
//! runs `d_prime` iterations of
//!
//! ```text
//! x_v = SOS_X[v]; b = x_v < t; idx = b ? l : r; node = SOS_T[idx]; rst = c
//! ```
//!
//! on shares and finally reveals `rst` to P1. Clustered layouts make `q`
//! comparisons per tree fetch, muxing whole subtrees inside a cluster;
//! layered layouts fetch iteration `i`'s node from layer `i` only.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::bits::Bits;
use crate::channel::{run_two_party, Endpoint, Party, Phase, Transcript};
use crate::dealer::{deal, Budget, CorrelationStore, WbvMode};
use crate::error::{Error, Result};
use crate::gmw::{less_than_circuit, mux_select, secure_less_than};
use crate::sharing::{derive_rng, BitShare, WordShare};
use crate::sos::{Backend, DeltaMode, SosConfig, SosInstance};
use crate::tree::{cluster, encode, layered, DecisionTree, EncodedTree, Layout, NodeRecord};
use crate::wire::{Reader, Writer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimization {
    None,
    /// Clusters of `q` levels per tree fetch.
    Cluster(usize),
    /// One SOS instance per layer of a complete tree.
    Layered,
}

impl std::str::FromStr for Optimization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "none" | "flat" => Ok(Optimization::None),
            "layered" => Ok(Optimization::Layered),
            _ => {
                let q = s
                    .strip_prefix("cluster")
                    .map(|r| r.trim_matches(|c| c == '(' || c == ')' || c == ':' || c == '='))
                    .and_then(|r| r.parse().ok())
                    .ok_or_else(|| Error::ConfigInvalid(format!("unknown optimization {s:?}")))?;
                Ok(Optimization::Cluster(q))
            }
        }
    }
}

impl std::fmt::Display for Optimization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Optimization::None => f.write_str("none"),
            Optimization::Cluster(q) => write!(f, "cluster{q}"),
            Optimization::Layered => f.write_str("layered"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PdteConfig {
    pub ell: usize,
    /// Iterations per evaluation; the tree holder's depth when unset.
    pub d_prime: Option<usize>,
    pub tree_backend: Backend,
    pub feature_backend: Backend,
    pub optimization: Optimization,
    /// Offset opening for PRF-backed instances.
    pub delta_mode: DeltaMode,
    pub wbv_mode: WbvMode,
    /// PRF instance; the smallest registered one that fits when unset.
    pub prf: Option<String>,
    pub paillier_bits: usize,
    pub lambda: usize,
}

impl PdteConfig {
    pub fn new(ell: usize, tree_backend: Backend) -> Self {
        PdteConfig {
            ell,
            d_prime: None,
            tree_backend,
            feature_backend: Backend::Ot,
            optimization: Optimization::None,
            delta_mode: DeltaMode::Arith,
            wbv_mode: WbvMode::Direct,
            prf: None,
            paillier_bits: 512,
            lambda: 40,
        }
    }

    pub fn with_optimization(mut self, o: Optimization) -> Self {
        self.optimization = o;
        self
    }

    pub fn with_d_prime(mut self, d: usize) -> Self {
        self.d_prime = Some(d);
        self
    }

    pub fn with_feature_backend(mut self, b: Backend) -> Self {
        self.feature_backend = b;
        self
    }

    pub fn with_delta_mode(mut self, m: DeltaMode) -> Self {
        self.delta_mode = m;
        self
    }

    pub fn with_paillier_bits(mut self, bits: usize) -> Self {
        self.paillier_bits = bits;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(1..=64).contains(&self.ell) {
            return Err(Error::ConfigInvalid(format!("ell = {} is outside 1..=64", self.ell)));
        }
        if let Optimization::Cluster(q) = self.optimization {
            if !(1..=3).contains(&q) {
                return Err(Error::UnsupportedQ(q));
            }
        }
        Ok(())
    }

    /// SOS parameters for an array of `m` elements of `width` bits.
    pub fn sos(&self, backend: Backend, m: u64, width: usize, sender: Party) -> Result<SosConfig> {
        let mut c = SosConfig::new(backend, m, width, sender);
        c.wbv_mode = self.wbv_mode;
        c.paillier_bits = self.paillier_bits;
        c.lambda = self.lambda;
        if backend == Backend::Prf {
            c.delta_mode = self.delta_mode;
        }
        match &self.prf {
            Some(id) => c.prf = id.clone(),
            None if backend == Backend::Prf => {
                let fit = crate::prf::instance_ids().find(|id| c.clone().with_prf(id).validate().is_ok());
                c.prf = fit.unwrap_or("lowmc128").into();
            }
            None => {}
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parameters fixed at setup and known to both parties.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublicParams {
    pub layout: Layout,
    pub n: usize,
    /// Tree SOS array length (records, clusters or nodes over all layers).
    pub m: usize,
    pub depth: usize,
    pub d_prime: usize,
}

impl PublicParams {
    pub fn tree_fetches(&self) -> usize {
        match self.layout {
            Layout::Flat => self.d_prime,
            Layout::Clustered { q } => self.d_prime.div_ceil(q),
            Layout::Layered => self.d_prime + 1,
        }
    }

    pub fn comparisons(&self) -> usize {
        match self.layout {
            Layout::Clustered { q } => q * self.d_prime.div_ceil(q),
            _ => self.d_prime,
        }
    }
}

pub struct PdteSession {
    cfg: PdteConfig,
    party: Party,
    public: PublicParams,
    tree: Vec<SosInstance>,
    feature: SosInstance,
    /// Shared root record or root cluster (flat and clustered layouts).
    root: Option<WordShare>,
    store: CorrelationStore,
    evals: u64,
}

impl std::fmt::Debug for PdteSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdteSession")
            .field("party", &self.party)
            .field("public", &self.public)
            .field("evals", &self.evals)
            .finish_non_exhaustive()
    }
}

/// The encoding the tree holder publishes for `cfg`.
pub fn encode_for<R: RngCore + ?Sized>(cfg: &PdteConfig, tree: &DecisionTree, rng: &mut R) -> Result<EncodedTree> {
    cfg.validate()?;
    let flat = encode(tree, cfg.ell, rng)?;
    let at = match cfg.optimization {
        Optimization::None => flat,
        Optimization::Cluster(q) => cluster(&flat, q)?,
        Optimization::Layered => layered(&flat)?,
    };
    if cfg.tree_backend == Backend::Prf && cfg.delta_mode == DeltaMode::Xor && at.layout != Layout::Layered {
        return Ok(permute_padded(&at, rng));
    }
    Ok(at)
}

/// Preorder positions of a cluster's bottom level.
fn bottom_positions(q: usize) -> Vec<usize> {
    fn walk(pos: &mut usize, level: usize, q: usize, out: &mut Vec<usize>) {
        let here = *pos;
        *pos += 1;
        if level + 1 == q {
            out.push(here);
            return;
        }
        walk(pos, level + 1, q, out);
        walk(pos, level + 1, q, out);
    }
    let mut out = Vec::new();
    walk(&mut 0, 0, q, &mut out);
    out
}

/// Pads a flat or clustered array to a power of two with self-looping
/// filler and shuffles every slot but the root's, rewriting child pointers.
pub fn permute_padded<R: RngCore + ?Sized>(at: &EncodedTree, rng: &mut R) -> EncodedTree {
    let s = at.cluster_size();
    let count = at.cluster_count();
    let padded = count.next_power_of_two();
    let mut perm: Vec<usize> = (1..padded).collect();
    perm.shuffle(rng);
    perm.insert(0, 0);
    let bottom = match at.layout {
        Layout::Clustered { q } => bottom_positions(q),
        _ => vec![0],
    };
    let mut slots: Vec<Vec<NodeRecord>> = vec![Vec::new(); padded];
    for k in 0..padded {
        let mut cl: Vec<NodeRecord> = if k < count {
            at.cluster(k).to_vec()
        } else {
            let mask = if at.ell >= 64 { u64::MAX } else { (1u64 << at.ell) - 1 };
            let v = rng.gen_range(0..at.n.max(1) as u64);
            vec![NodeRecord { t: rng.next_u64() & mask, l: 0, r: 0, v, c: rng.next_u64() & mask }; s]
        };
        for &b in &bottom {
            let (l, r) = if k < count { (cl[b].l as usize, cl[b].r as usize) } else { (k, k) };
            cl[b].l = perm[l] as u64;
            cl[b].r = perm[r] as u64;
        }
        slots[perm[k]] = cl;
    }
    EncodedTree { records: slots.into_iter().flatten().collect(), ..at.clone() }
}

/// Field shares of one packed record.
struct Fields {
    t: WordShare,
    l: WordShare,
    r: WordShare,
    v: WordShare,
    c: WordShare,
}

fn fields(rec: &WordShare, ell: usize) -> Fields {
    let f = |k: usize| rec.field(k * ell, ell);
    Fields { t: f(0), l: f(1), r: f(2), v: f(3), c: f(4) }
}

fn layout_code(l: Layout) -> (u8, u8) {
    match l {
        Layout::Flat => (0, 1),
        Layout::Layered => (1, 1),
        Layout::Clustered { q } => (2, q as u8),
    }
}

fn check_layout(cfg: &PdteConfig, l: Layout) -> Result<()> {
    let ok = matches!(
        (cfg.optimization, l),
        (Optimization::None, Layout::Flat)
            | (Optimization::Layered, Layout::Layered)
    ) || matches!((cfg.optimization, l), (Optimization::Cluster(a), Layout::Clustered { q }) if a == q);
    if ok {
        Ok(())
    } else {
        Err(Error::LayoutMismatch)
    }
}

impl PdteSession {
    /// Tree holder's setup from a plain tree.
    pub fn setup_tree_holder<R: RngCore + ?Sized>(
        cfg: &PdteConfig,
        tree: &DecisionTree,
        ep: &mut Endpoint,
        rng: &mut R,
    ) -> Result<PdteSession> {
        let at = encode_for(cfg, tree, rng)?;
        Self::setup_encoded(cfg, &at, ep, rng)
    }

    /// Tree holder's setup from an encoding whose layout matches `cfg`.
    pub fn setup_encoded<R: RngCore + ?Sized>(
        cfg: &PdteConfig,
        at: &EncodedTree,
        ep: &mut Endpoint,
        rng: &mut R,
    ) -> Result<PdteSession> {
        cfg.validate()?;
        if ep.party() != Party::P0 {
            return Err(Error::ConfigInvalid("the tree holder is P0".into()));
        }
        check_layout(cfg, at.layout)?;
        if at.ell != cfg.ell {
            return Err(Error::WidthMismatch { expected: cfg.ell, got: at.ell });
        }
        let d_prime = cfg.d_prime.unwrap_or(at.depth);
        if d_prime < at.depth {
            return Err(Error::ConfigInvalid(format!("d_prime = {d_prime} is below the depth {}", at.depth)));
        }
        let m = match at.layout {
            Layout::Clustered { .. } => at.cluster_count(),
            _ => at.len(),
        };
        ep.set_phase(Phase::Setup);
        let (kind, q) = layout_code(at.layout);
        let mut w = Writer::new();
        w.bits(&Bits::from_u64(kind as u64, 8)).bits(&Bits::from_u64(q as u64, 8));
        for x in [m, at.depth, d_prime] {
            w.bits(&Bits::from_u64(x as u64, 64));
        }
        ep.send(w.finish())?;
        ep.flush_round()?;
        let n = read_u64s(&ep.recv()?, 1)?[0] as usize;
        if n != at.n {
            return Err(Error::ConfigInvalid(format!("feature holder has {n} features, tree expects {}", at.n)));
        }
        let public = PublicParams { layout: at.layout, n, m, depth: at.depth, d_prime };

        let width = at.cluster_size() * at.record_bits();
        let mut tree = Vec::new();
        match at.layout {
            Layout::Layered => {
                for i in 0..=at.depth {
                    let recs: Vec<Bits> = at.layer(i).iter().map(|r| r.to_bits(cfg.ell)).collect();
                    let sc = cfg.sos(cfg.tree_backend, recs.len() as u64, width, Party::P0)?;
                    tree.push(SosInstance::setup_sender(&sc, &recs, ep, rng)?);
                }
            }
            _ => {
                let packed = at.packed();
                let sc = cfg.sos(cfg.tree_backend, packed.len() as u64, width, Party::P0)?;
                tree.push(SosInstance::setup_sender(&sc, &packed, ep, rng)?);
            }
        }
        let fc = cfg.sos(cfg.feature_backend, n as u64, cfg.ell, Party::P1)?;
        let feature = SosInstance::setup_receiver(&fc, ep)?;

        let root = match at.layout {
            Layout::Layered => None,
            _ => {
                let own = at.packed()[0].clone();
                let mask = Bits::random(width, rng);
                ep.send(Writer::new().bits(&mask).finish())?;
                ep.flush_round()?;
                Some(WordShare::new(own.xor(&mask)))
            }
        };
        Ok(PdteSession {
            cfg: cfg.clone(),
            party: Party::P0,
            public,
            tree,
            feature,
            root,
            store: CorrelationStore::empty(Party::P0),
            evals: 0,
        })
    }

    /// Feature holder's setup.
    pub fn setup_feature_holder<R: RngCore + ?Sized>(
        cfg: &PdteConfig,
        x: &[u64],
        ep: &mut Endpoint,
        rng: &mut R,
    ) -> Result<PdteSession> {
        cfg.validate()?;
        if ep.party() != Party::P1 {
            return Err(Error::ConfigInvalid("the feature holder is P1".into()));
        }
        if x.is_empty() {
            return Err(Error::ConfigInvalid("empty feature vector".into()));
        }
        if cfg.ell < 64 {
            if let Some(&bad) = x.iter().find(|&&v| v >> cfg.ell != 0) {
                return Err(Error::ConfigInvalid(format!("feature {bad} does not fit {} bits", cfg.ell)));
            }
        }
        ep.set_phase(Phase::Setup);
        ep.send(Writer::new().bits(&Bits::from_u64(x.len() as u64, 64)).finish())?;
        ep.flush_round()?;
        let msg = ep.recv()?;
        let mut r = Reader::new(&msg);
        let kind = r.bits(8)?.to_u64();
        let q = r.bits(8)?.to_u64() as usize;
        let [m, depth, d_prime] = [0; 3].map(|_| r.bits(64).map(|b| b.to_u64() as usize));
        r.finish()?;
        let (m, depth, d_prime) = (m?, depth?, d_prime?);
        let layout = match kind {
            0 => Layout::Flat,
            1 => Layout::Layered,
            2 => Layout::Clustered { q },
            _ => return Err(Error::Malformed("unknown layout".into())),
        };
        check_layout(cfg, layout)?;
        if let Some(d) = cfg.d_prime {
            if d != d_prime {
                return Err(Error::ConfigInvalid(format!("peer runs {d_prime} iterations, expected {d}")));
            }
        }
        let public = PublicParams { layout, n: x.len(), m, depth, d_prime };
        let csize = match layout {
            Layout::Clustered { q } => (1 << q) - 1,
            _ => 1,
        };
        let width = csize * NodeRecord::FIELDS * cfg.ell;
        let mut tree = Vec::new();
        match layout {
            Layout::Layered => {
                if depth >= 40 || m != (1usize << (depth + 1)) - 1 {
                    return Err(Error::Malformed("layered array of the wrong size".into()));
                }
                for i in 0..=depth {
                    let sc = cfg.sos(cfg.tree_backend, 1 << i, width, Party::P0)?;
                    tree.push(SosInstance::setup_receiver(&sc, ep)?);
                }
            }
            _ => {
                let sc = cfg.sos(cfg.tree_backend, m as u64, width, Party::P0)?;
                tree.push(SosInstance::setup_receiver(&sc, ep)?);
            }
        }
        let xs: Vec<Bits> = x.iter().map(|&v| Bits::from_u64(v, cfg.ell)).collect();
        let fc = cfg.sos(cfg.feature_backend, x.len() as u64, cfg.ell, Party::P1)?;
        let feature = SosInstance::setup_sender(&fc, &xs, ep, rng)?;
        let root = match layout {
            Layout::Layered => None,
            _ => {
                ep.flush_round()?;
                let msg = ep.recv()?;
                let mut r = Reader::new(&msg);
                let mask = r.bits(width)?;
                r.finish()?;
                Some(WordShare::new(mask))
            }
        };
        Ok(PdteSession {
            cfg: cfg.clone(),
            party: Party::P1,
            public,
            tree,
            feature,
            root,
            store: CorrelationStore::empty(Party::P1),
            evals: 0,
        })
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn public(&self) -> &PublicParams {
        &self.public
    }

    pub fn tree_instances(&self) -> &[SosInstance] {
        &self.tree
    }

    pub fn feature_instance(&self) -> &SosInstance {
        &self.feature
    }

    /// Tree SOS selects across all instances.
    pub fn tree_selects(&self) -> u64 {
        self.tree.iter().map(|t| t.selects()).sum()
    }

    /// Tree elements touched by local scans.
    pub fn tree_scanned(&self) -> u64 {
        self.tree.iter().map(|t| t.scanned()).sum()
    }

    pub fn store(&self) -> &CorrelationStore {
        &self.store
    }

    /// Correlations one evaluation consumes; identical on both sides.
    pub fn eval_budget(&self) -> Result<Budget> {
        let ell = self.cfg.ell;
        let p = &self.public;
        let step = |b: &mut Budget, mux_width: usize| -> Result<()> {
            b.add(&self.feature.select_budget()?);
            *b = std::mem::take(b).triples(less_than_circuit(ell).and_count() as u64 + mux_width as u64);
            Ok(())
        };
        let mut b = Budget::default();
        match p.layout {
            Layout::Flat => {
                step(&mut b, ell)?;
                b.add(&self.tree[0].select_budget()?);
                b = b.times(p.d_prime as u64);
            }
            Layout::Clustered { q } => {
                let mut size = (1usize << q) - 1;
                for _ in 0..q {
                    let w = if size == 1 { ell } else { (size - 1) / 2 * NodeRecord::FIELDS * ell };
                    step(&mut b, w)?;
                    size = (size - 1) / 2;
                }
                b.add(&self.tree[0].select_budget()?);
                b = b.times(p.d_prime.div_ceil(q) as u64);
            }
            Layout::Layered => {
                b.add(&self.tree[0].select_budget()?);
                for i in 1..=p.d_prime {
                    step(&mut b, ell)?;
                    b.add(&self.tree[i.min(p.depth)].select_budget()?);
                }
            }
        }
        Ok(b)
    }

    /// Installs this party's correlations, charging their serialized size
    /// to the offline phase.
    pub fn provision(&mut self, ep: &mut Endpoint, store: CorrelationStore) -> Result<()> {
        if store.party() != self.party {
            return Err(Error::ConfigInvalid("correlations belong to the other party".into()));
        }
        ep.charge_offline(store.serialized_len());
        self.store = store;
        Ok(())
    }

    fn compare<R: RngCore + ?Sized>(&mut self, ep: &mut Endpoint, node: &Fields, rng: &mut R) -> Result<BitShare> {
        let xv = self.feature.select(ep, &mut self.store, &node.v, rng)?;
        secure_less_than(&xv, &node.t, self.store.triples(), ep)
    }

    fn step<R: RngCore + ?Sized>(&mut self, ep: &mut Endpoint, node: &Fields, rng: &mut R) -> Result<WordShare> {
        let b = self.compare(ep, node, rng)?;
        mux_select(b, &node.l, &node.r, self.store.triples(), ep)
    }

    /// One evaluation; P1 gets the label, P0 `None`.
    pub fn eval<R: RngCore + ?Sized>(&mut self, ep: &mut Endpoint, rng: &mut R) -> Result<Option<u64>> {
        ep.set_phase(Phase::Online);
        let ell = self.cfg.ell;
        let rb = NodeRecord::FIELDS * ell;
        let p = self.public;
        let rst = match p.layout {
            Layout::Flat => {
                let mut node = self.root.clone().expect("flat sessions share the root");
                for _ in 0..p.d_prime {
                    let idx = self.step(ep, &fields(&node, ell), rng)?;
                    node = self.tree[0].select(ep, &mut self.store, &idx, rng)?;
                }
                fields(&node, ell).c
            }
            Layout::Layered => {
                let mut node = self.tree[0].select(ep, &mut self.store, &WordShare::zeros(ell), rng)?;
                for i in 1..=p.d_prime {
                    let idx = self.step(ep, &fields(&node, ell), rng)?;
                    node = self.tree[i.min(p.depth)].select(ep, &mut self.store, &idx, rng)?;
                }
                fields(&node, ell).c
            }
            Layout::Clustered { q } => {
                let mut cl = self.root.clone().expect("clustered sessions share the root cluster");
                for _ in 0..p.d_prime.div_ceil(q) {
                    let mut sub = cl.clone();
                    let mut size = (1usize << q) - 1;
                    let idx = loop {
                        let root = fields(&sub.field(0, rb), ell);
                        if size == 1 {
                            break self.step(ep, &root, rng)?;
                        }
                        let b = self.compare(ep, &root, rng)?;
                        let half = (size - 1) / 2;
                        let left = sub.field(rb, half * rb);
                        let right = sub.field((1 + half) * rb, half * rb);
                        sub = mux_select(b, &left, &right, self.store.triples(), ep)?;
                        size = half;
                    };
                    cl = self.tree[0].select(ep, &mut self.store, &idx, rng)?;
                }
                fields(&cl.field(0, rb), ell).c
            }
        };
        self.evals += 1;
        match self.party {
            Party::P0 => {
                ep.send(Writer::new().bits(rst.bits()).finish())?;
                ep.flush_round()?;
                Ok(None)
            }
            Party::P1 => {
                ep.flush_round()?;
                let msg = ep.recv()?;
                let mut r = Reader::new(&msg);
                let peer = r.bits(ell)?;
                r.finish()?;
                Ok(Some(rst.bits().xor(&peer).to_u64()))
            }
        }
    }
}

fn read_u64s(msg: &[u8], n: usize) -> Result<Vec<u64>> {
    let mut r = Reader::new(msg);
    let out = (0..n).map(|_| r.bits(64).map(|b| b.to_u64())).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(out)
}

/// Everything measured over one in-process protocol run.
#[derive(Clone, Debug)]
pub struct PdteRun {
    pub labels: Vec<u64>,
    pub public: PublicParams,
    /// Merged transcript of the whole run.
    pub transcript: Transcript,
    /// Online traffic of each evaluation.
    pub evals: Vec<Transcript>,
    pub tree_selects: u64,
    pub tree_scanned: u64,
    pub eval_budget: Budget,
}

impl PdteRun {
    pub fn setup_bytes(&self) -> u64 {
        self.transcript.phase_bytes(Phase::Setup)
    }
}

/// Runs setup, dealing and `evals` evaluations with both parties in this
/// process. The dealer seed and the parties' randomness derive from `seed`.
pub fn run_pdte(cfg: &PdteConfig, tree: &DecisionTree, x: &[u64], evals: usize, seed: u64) -> Result<PdteRun> {
    let mut rng = derive_rng(seed, "encode");
    let at = encode_for(cfg, tree, &mut rng)?;
    run_pdte_encoded(cfg, &at, x, evals, seed)
}

pub fn run_pdte_encoded(cfg: &PdteConfig, at: &EncodedTree, x: &[u64], evals: usize, seed: u64) -> Result<PdteRun> {
    run_pdte_provisioned(cfg, at, x, evals, seed, None)
}

/// Per-evaluation correlation budget of a session, found by running setup
/// alone. Setup is deterministic in `seed`, so stores dealt for this budget
/// fit a later run with the same inputs and seed.
pub fn eval_budget_for(cfg: &PdteConfig, at: &EncodedTree, n: usize, seed: u64) -> Result<Budget> {
    let x = vec![0; n];
    let out = run_two_party(
        |ep| PdteSession::setup_encoded(cfg, at, ep, &mut derive_rng(seed, "p0"))?.eval_budget(),
        |ep| PdteSession::setup_feature_holder(cfg, &x, ep, &mut derive_rng(seed, "p1"))?.eval_budget(),
    )?;
    if out.p0 != out.p1 {
        return Err(Error::ConfigInvalid("parties disagree on the correlation budget".into()));
    }
    Ok(out.p0)
}

/// [`run_pdte_encoded`] with correlations supplied from outside, for example
/// loaded from files, instead of dealt from `seed`.
pub fn run_pdte_provisioned(
    cfg: &PdteConfig,
    at: &EncodedTree,
    x: &[u64],
    evals: usize,
    seed: u64,
    stores: Option<[CorrelationStore; 2]>,
) -> Result<PdteRun> {
    let [pre0, pre1] = match stores {
        Some([a, b]) => [Some(a), Some(b)],
        None => [None, None],
    };
    let provision = |s: &mut PdteSession, ep: &mut Endpoint, pre: Option<CorrelationStore>| -> Result<Budget> {
        let per = s.eval_budget()?;
        let store = match pre {
            Some(st) => st,
            None => {
                let [s0, s1] = deal(&per.times(evals as u64), seed)?;
                if s.party() == Party::P0 {
                    s0
                } else {
                    s1
                }
            }
        };
        if store.party() != s.party() {
            return Err(Error::CorrelationFile(format!("store belongs to {:?}", store.party())));
        }
        ep.set_phase(Phase::Offline);
        s.provision(ep, store)?;
        Ok(per)
    };
    let drive = |s: &mut PdteSession, ep: &mut Endpoint, rng: &mut crate::sharing::Prng| {
        let mut labels = Vec::new();
        let mut ts = Vec::new();
        for _ in 0..evals {
            let before = ep.transcript().clone();
            labels.push(s.eval(ep, rng)?);
            ts.push(ep.transcript().since(&before));
        }
        Ok::<_, Error>((labels, ts))
    };
    let out = run_two_party(
        |ep| {
            let mut rng = derive_rng(seed, "p0");
            let mut s = PdteSession::setup_encoded(cfg, at, ep, &mut rng)?;
            let budget = provision(&mut s, ep, pre0)?;
            let (_, ts) = drive(&mut s, ep, &mut rng)?;
            Ok((s.public, ts, s.tree_selects(), s.tree_scanned(), budget))
        },
        |ep| {
            let mut rng = derive_rng(seed, "p1");
            let mut s = PdteSession::setup_feature_holder(cfg, x, ep, &mut rng)?;
            provision(&mut s, ep, pre1)?;
            let (labels, _) = drive(&mut s, ep, &mut rng)?;
            Ok(labels)
        },
    )?;
    let (public, evals, tree_selects, tree_scanned, eval_budget) = out.p0;
    Ok(PdteRun {
        labels: out.p1.into_iter().map(|l| l.expect("P1 learns the label")).collect(),
        public,
        transcript: out.transcript,
        evals,
        tree_selects,
        tree_scanned,
        eval_budget,
    })
}

/// Rounds and bytes of an evaluation, for reporting.
pub fn online_summary(t: &Transcript) -> (u64, u64) {
    (t.rounds(Phase::Online), t.phase_bytes(Phase::Online))
}
