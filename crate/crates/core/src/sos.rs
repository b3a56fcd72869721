//! Shared oblivious selection: both parties hold boolean shares of an index
//! into an array owned by the sender `S` and end with boolean shares of the
//! selected element. Nobody learns the index.
//!
//! Three backends sit behind [`SosInstance`]:
//!
//! * `Ot`: the array stays with `S`. Each select converts the index to
//!   additive shares mod `m`, `S` rotates and masks the whole array, and the
//!   receiver `R` picks its entry through a precomputed 1-of-m OT. Online
//!   bytes grow with `m`.
//! * `Prf`: at setup `S` sends the array masked under a keyed PRF. A select
//!   opens a rotation offset against a weight-1 vector, both parties scan the
//!   masked copy locally, and the mask is removed by evaluating the PRF on
//!   the shared index under GMW.
//! * `He`: at setup `S` sends the array under Paillier. A select scans out
//!   shares of the chosen ciphertext, converts them to multiplicative form and
//!   has `S` decrypt a blinded copy.

use std::sync::Arc;

use num_bigint::{BigUint, RandBigInt};
use rand::RngCore;

use crate::bits::Bits;
use crate::channel::{Endpoint, Party};
use crate::conv::{a2b_many, sample_gamma, A2mHolder, A2mPeer, B2aOpen};
use crate::dealer::{kot_pads, Budget, CorrelationStore, KOt, KOtKind, WbvMode};
use crate::error::{Error, Result};
use crate::gmw::{adder_circuit, keyed_lane_inputs, CircuitRun};
use crate::paillier::{PaillierKeypair, PublicKey};
use crate::prf::{index_bits, index_concat, PrfInstance};
use crate::sharing::{ArithShare, WordShare};
use crate::wire::{Reader, Writer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    Ot,
    Prf,
    He,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ot" => Ok(Backend::Ot),
            "prf" => Ok(Backend::Prf),
            "he" => Ok(Backend::He),
            _ => Err(Error::ConfigInvalid(format!("unknown SOS backend {s:?}"))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Ot => "ot",
            Backend::Prf => "prf",
            Backend::He => "he",
        })
    }
}

/// How the PRF backend opens its rotation offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DeltaMode {
    /// `delta = rdx - idx mod m`, after converting both to additive shares.
    Arith,
    /// `delta = rdx ^ idx`; needs a power-of-two length, so the array is
    /// padded with random filler.
    Xor,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SosConfig {
    pub backend: Backend,
    /// Array length.
    pub m: u64,
    /// Element width in bits.
    pub width: usize,
    pub sender: Party,
    pub delta_mode: DeltaMode,
    pub wbv_mode: WbvMode,
    pub prf: String,
    pub paillier_bits: usize,
    pub lambda: usize,
}

impl SosConfig {
    pub fn new(backend: Backend, m: u64, width: usize, sender: Party) -> Self {
        SosConfig {
            backend,
            m,
            width,
            sender,
            delta_mode: DeltaMode::Arith,
            wbv_mode: WbvMode::Direct,
            prf: "toy64".into(),
            paillier_bits: 512,
            lambda: 40,
        }
    }

    pub fn with_prf(mut self, id: &str) -> Self {
        self.prf = id.into();
        self
    }

    pub fn with_delta_mode(mut self, mode: DeltaMode) -> Self {
        self.delta_mode = mode;
        self
    }

    pub fn with_wbv_mode(mut self, mode: WbvMode) -> Self {
        self.wbv_mode = mode;
        self
    }

    pub fn with_paillier_bits(mut self, bits: usize) -> Self {
        self.paillier_bits = bits;
        self
    }

    pub fn receiver(&self) -> Party {
        self.sender.other()
    }

    /// Stored length: `m`, or the next power of two in xor mode.
    pub fn padded_len(&self) -> u64 {
        match (self.backend, self.delta_mode) {
            (Backend::Prf, DeltaMode::Xor) => self.m.next_power_of_two(),
            _ => self.m,
        }
    }

    /// Index bits read from the shared index.
    pub fn index_width(&self) -> usize {
        index_bits(self.padded_len())
    }

    /// PRF blocks per element.
    pub fn blocks(&self) -> Result<u64> {
        let inst = PrfInstance::by_id(&self.prf)?;
        Ok(self.width.div_ceil(inst.block()) as u64)
    }

    /// Largest plaintext chunk the HE backend can blind without wrapping
    /// past `N`, for a modulus of `n_bits` bits.
    pub fn he_chunk_limit(&self, n_bits: usize) -> usize {
        n_bits.saturating_sub(self.lambda + 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::ConfigInvalid("SOS array must be non-empty".into()));
        }
        if self.width == 0 {
            return Err(Error::ConfigInvalid("SOS elements need at least one bit".into()));
        }
        if self.delta_mode == DeltaMode::Xor && self.backend != Backend::Prf {
            return Err(Error::ConfigInvalid("xor delta mode only applies to the prf backend".into()));
        }
        match self.backend {
            Backend::Ot => Ok(()),
            Backend::Prf => {
                let inst = PrfInstance::by_id(&self.prf)?;
                let b = self.blocks()?;
                let needed = self.index_width() + index_bits(b);
                if needed > inst.block() {
                    return Err(Error::IndexWidthOverflow { needed, width: inst.block() });
                }
                Ok(())
            }
            Backend::He => {
                if self.lambda == 0 || self.he_chunk_limit(self.paillier_bits) == 0 {
                    return Err(Error::ConfigInvalid(format!(
                        "a {}-bit Paillier modulus leaves no room for a {}-bit mask",
                        self.paillier_bits, self.lambda
                    )));
                }
                Ok(())
            }
        }
    }
}

/// HE chunking: `count` chunks of `width` bits, ciphertexts of `ct_bits`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeChunks {
    pub count: usize,
    pub width: usize,
    pub ct_bits: usize,
}

impl HeChunks {
    fn new(cfg: &SosConfig, pk: &PublicKey) -> Result<Self> {
        let limit = cfg.he_chunk_limit(pk.bits());
        if limit == 0 {
            return Err(Error::ConfigInvalid("Paillier modulus too small for the mask".into()));
        }
        let count = cfg.width.div_ceil(limit);
        Ok(HeChunks { count, width: cfg.width.div_ceil(count), ct_bits: pk.n_squared().bits() as usize })
    }
}

enum State {
    OtSender { array: Vec<Bits> },
    OtReceiver,
    PrfSender { prf: Arc<PrfInstance>, key: Bits, masked: Vec<Bits> },
    PrfReceiver { prf: Arc<PrfInstance>, masked: Vec<Bits> },
    HeSender { keypair: Box<PaillierKeypair>, chunks: HeChunks, cts: Vec<Bits> },
    HeReceiver { pk: PublicKey, chunks: HeChunks, cts: Vec<Bits> },
}

/// One party's side of an SOS instance.
pub struct SosInstance {
    cfg: SosConfig,
    party: Party,
    state: State,
    scanned: u64,
    selects: u64,
    last_delta: Option<u64>,
}

impl std::fmt::Debug for SosInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SosInstance")
            .field("cfg", &self.cfg)
            .field("party", &self.party)
            .field("scanned", &self.scanned)
            .field("selects", &self.selects)
            .finish_non_exhaustive()
    }
}

fn prf_mask(prf: &PrfInstance, key: &Bits, i: u64, blocks: u64, width: usize) -> Result<Bits> {
    let lb = index_bits(blocks);
    let mut out = Bits::zeros(0);
    for j in 0..blocks {
        let x = ((i as u128) << lb) | j as u128;
        out.extend(&prf.eval(key, &Bits::from_u128(x, prf.block()))?);
    }
    Ok(out.resized(width))
}

impl SosInstance {
    /// Sender side: stores or publishes `array` according to the backend.
    pub fn setup_sender<R: RngCore + ?Sized>(
        cfg: &SosConfig,
        array: &[Bits],
        ep: &mut Endpoint,
        rng: &mut R,
    ) -> Result<SosInstance> {
        cfg.validate()?;
        if ep.party() != cfg.sender {
            return Err(Error::ConfigInvalid("setup_sender called by the receiver".into()));
        }
        if array.len() as u64 != cfg.m {
            return Err(Error::ConfigInvalid(format!("array has {} elements, expected {}", array.len(), cfg.m)));
        }
        if let Some(bad) = array.iter().find(|e| e.len() != cfg.width) {
            return Err(Error::WidthMismatch { expected: cfg.width, got: bad.len() });
        }
        let state = match cfg.backend {
            Backend::Ot => State::OtSender { array: array.to_vec() },
            Backend::Prf => {
                let prf = PrfInstance::by_id(&cfg.prf)?;
                let key = Bits::random(prf.key_bits(), rng);
                let blocks = cfg.blocks()?;
                let mut plain = array.to_vec();
                plain.resize_with(cfg.padded_len() as usize, || Bits::random(cfg.width, rng));
                let mut msg = Writer::new();
                let masked = plain
                    .iter()
                    .enumerate()
                    .map(|(i, e)| Ok(e.xor(&prf_mask(&prf, &key, i as u64, blocks, cfg.width)?)))
                    .collect::<Result<Vec<_>>>()?;
                for c in &masked {
                    msg.bits(c);
                }
                ep.send(msg.finish())?;
                ep.flush_round()?;
                State::PrfSender { prf, key, masked }
            }
            Backend::He => {
                let keypair = PaillierKeypair::generate(cfg.paillier_bits, rng)?;
                let pk = keypair.public();
                let chunks = HeChunks::new(cfg, pk)?;
                let mut msg = Writer::new();
                msg.residue(pk.n(), pk.n());
                let mut cts = Vec::with_capacity(array.len());
                for e in array {
                    let mut packed = Bits::zeros(0);
                    for k in 0..chunks.count {
                        let lo = k * chunks.width;
                        let len = chunks.width.min(cfg.width - lo);
                        let ct = keypair.encrypt(&e.slice(lo, len).to_biguint(), rng)?;
                        packed.extend(&Bits::from_biguint(ct.value(), chunks.ct_bits));
                    }
                    msg.bits(&packed);
                    cts.push(packed);
                }
                ep.send(msg.finish())?;
                ep.flush_round()?;
                State::HeSender { keypair: Box::new(keypair), chunks, cts }
            }
        };
        Ok(SosInstance { cfg: cfg.clone(), party: ep.party(), state, scanned: 0, selects: 0, last_delta: None })
    }

    pub fn setup_receiver(cfg: &SosConfig, ep: &mut Endpoint) -> Result<SosInstance> {
        cfg.validate()?;
        if ep.party() != cfg.receiver() {
            return Err(Error::ConfigInvalid("setup_receiver called by the sender".into()));
        }
        let state = match cfg.backend {
            Backend::Ot => State::OtReceiver,
            Backend::Prf => {
                let prf = PrfInstance::by_id(&cfg.prf)?;
                ep.flush_round()?;
                let msg = ep.recv()?;
                let mut r = Reader::new(&msg);
                let masked = (0..cfg.padded_len()).map(|_| r.bits(cfg.width)).collect::<Result<Vec<_>>>()?;
                r.finish()?;
                State::PrfReceiver { prf, masked }
            }
            Backend::He => {
                ep.flush_round()?;
                let msg = ep.recv()?;
                // N is encoded at its own width, which the receiver learns from
                // the configured key size.
                let nlen = cfg.paillier_bits.div_ceil(8);
                if msg.len() < nlen {
                    return Err(Error::Malformed("HE setup message too short".into()));
                }
                let n = BigUint::from_bytes_be(&msg[..nlen]);
                if n.bits() as usize != cfg.paillier_bits {
                    return Err(Error::Malformed("Paillier modulus has the wrong size".into()));
                }
                let pk = PublicKey::from_n(n);
                let chunks = HeChunks::new(cfg, &pk)?;
                let mut r = Reader::new(&msg[nlen..]);
                let cts = (0..cfg.m).map(|_| r.bits(chunks.count * chunks.ct_bits)).collect::<Result<Vec<_>>>()?;
                r.finish()?;
                State::HeReceiver { pk, chunks, cts }
            }
        };
        Ok(SosInstance { cfg: cfg.clone(), party: ep.party(), state, scanned: 0, selects: 0, last_delta: None })
    }

    pub fn config(&self) -> &SosConfig {
        &self.cfg
    }

    pub fn is_sender(&self) -> bool {
        self.party == self.cfg.sender
    }

    /// Array elements touched by local scans so far.
    pub fn scanned(&self) -> u64 {
        self.scanned
    }

    pub fn selects(&self) -> u64 {
        self.selects
    }

    /// The offset opened by the most recent PRF or HE select.
    pub fn last_delta(&self) -> Option<u64> {
        self.last_delta
    }

    /// The masked or encrypted array both parties hold (PRF and HE).
    pub fn published_array(&self) -> Option<&[Bits]> {
        match &self.state {
            State::PrfSender { masked, .. } | State::PrfReceiver { masked, .. } => Some(masked),
            State::HeSender { cts, .. } | State::HeReceiver { cts, .. } => Some(cts),
            _ => None,
        }
    }

    pub fn prf_key(&self) -> Option<&Bits> {
        match &self.state {
            State::PrfSender { key, .. } => Some(key),
            _ => None,
        }
    }

    pub fn keypair(&self) -> Option<&PaillierKeypair> {
        match &self.state {
            State::HeSender { keypair, .. } => Some(keypair),
            _ => None,
        }
    }

    pub fn public_key(&self) -> Option<&PublicKey> {
        match &self.state {
            State::HeSender { keypair, .. } => Some(keypair.public()),
            State::HeReceiver { pk, .. } => Some(pk),
            _ => None,
        }
    }

    pub fn he_chunks(&self) -> Option<HeChunks> {
        match &self.state {
            State::HeSender { chunks, .. } | State::HeReceiver { chunks, .. } => Some(*chunks),
            _ => None,
        }
    }

    fn ot_kind(&self) -> KOtKind {
        KOtKind { k: self.cfg.m, width: self.cfg.width, sender: self.cfg.sender }
    }

    /// Correlations one select consumes.
    pub fn select_budget(&self) -> Result<Budget> {
        let cfg = &self.cfg;
        let mp = cfg.padded_len();
        let sigma = cfg.index_width() as u64;
        let m_mod = BigUint::from(mp);
        let mut b = Budget::default();
        match cfg.backend {
            Backend::Ot => {
                if cfg.m > 1 {
                    b = b.bit_ots(&m_mod, sigma).k_ots(self.ot_kind(), 1);
                }
            }
            Backend::Prf => {
                let prf = PrfInstance::by_id(&cfg.prf)?;
                b = b.triples(cfg.blocks()? * prf.and_count() as u64);
                if mp > 1 {
                    b = b.wbvs(mp, cfg.wbv_mode, 1);
                    if cfg.delta_mode == DeltaMode::Arith {
                        b = b.bit_ots(&m_mod, 2 * sigma);
                    }
                }
            }
            Backend::He => {
                let pk = self.public_key().expect("HE state has a key");
                let ch = self.he_chunks().expect("HE state has chunks");
                let k = ch.count as u64;
                if mp > 1 {
                    b = b.wbvs(mp, cfg.wbv_mode, 1).bit_ots(&m_mod, 2 * sigma);
                }
                b = b
                    .bit_ots(pk.n_squared(), k * ch.ct_bits as u64)
                    .mod_bmts(pk.n_squared(), cfg.receiver(), k)
                    .triples(k * adder_circuit(&[ch.width]).and_count() as u64);
            }
        }
        Ok(b)
    }

    /// Boolean shares of `M[idx]`. Only the low `index_width` bits of `idx`
    /// are read; an index past the array wraps modulo its length for the OT
    /// and HE backends and yields garbage for the PRF backend.
    pub fn select<R: RngCore + ?Sized>(
        &mut self,
        ep: &mut Endpoint,
        store: &mut CorrelationStore,
        idx: &WordShare,
        rng: &mut R,
    ) -> Result<WordShare> {
        let low = WordShare::new(idx.bits().resized(self.cfg.index_width()));
        self.selects += 1;
        match self.cfg.backend {
            Backend::Ot => self.select_ot(ep, store, &low, rng),
            Backend::Prf => self.select_prf(ep, store, &low),
            Backend::He => self.select_he(ep, store, &low, rng),
        }
    }

    fn select_ot<R: RngCore + ?Sized>(
        &mut self,
        ep: &mut Endpoint,
        store: &mut CorrelationStore,
        idx: &WordShare,
        rng: &mut R,
    ) -> Result<WordShare> {
        let m = self.cfg.m;
        let width = self.cfg.width;
        self.scanned += m;
        if m == 1 {
            return Ok(match &self.state {
                State::OtSender { array } => WordShare::new(array[0].clone()),
                _ => WordShare::zeros(width),
            });
        }
        let modulus = BigUint::from(m);
        let own = to_u64(&crate::conv::b2a(ep, store, idx, &modulus)?.value);
        let kind = self.ot_kind();
        let ot = store.take_k_ot(kind)?;
        match (&self.state, ot) {
            (State::OtReceiver, KOt::Receiver { c, pad }) => {
                let s = (own + m - c) % m;
                ep.send(Writer::new().index(s, m).finish())?;
                ep.flush_round()?;
                ep.flush_round()?;
                let msg = ep.recv()?;
                let mut r = Reader::new(&msg);
                let mut out = Bits::zeros(0);
                for i in 0..m {
                    let y = r.bits(width)?;
                    if i == own {
                        out = y.xor(&pad);
                    }
                }
                r.finish()?;
                Ok(WordShare::new(out))
            }
            (State::OtSender { array }, KOt::Sender { seed }) => {
                ep.flush_round()?;
                let msg = ep.recv()?;
                let mut r = Reader::new(&msg);
                let s = r.index(m)?;
                r.finish()?;
                if s >= m {
                    return Err(Error::Malformed("OT correction out of range".into()));
                }
                let pads = kot_pads(&seed, m, width);
                let mask = Bits::random(width, rng);
                let mut msg = Writer::new();
                for i in 0..m {
                    let mut y = mask.xor(&array[((i + own) % m) as usize]);
                    y.xor_assign(&pads[((i + m - s) % m) as usize]);
                    msg.bits(&y);
                }
                ep.send(msg.finish())?;
                ep.flush_round()?;
                Ok(WordShare::new(mask))
            }
            _ => Err(Error::ConfigInvalid("OT correlation held by the wrong side".into())),
        }
    }

    /// Local `e = XOR_i S[pos(i)] * C[i]` where `S` is this party's share of
    /// the weight-1 vector.
    fn scan(&mut self, vector: &Bits, delta: u64, xor: bool) -> Bits {
        let (array, width): (&[Bits], usize) = match &self.state {
            State::PrfSender { masked, .. } | State::PrfReceiver { masked, .. } => (masked, self.cfg.width),
            State::HeSender { cts, chunks, .. } | State::HeReceiver { cts, chunks, .. } => {
                (cts, chunks.count * chunks.ct_bits)
            }
            _ => unreachable!("scan on an OT instance"),
        };
        let m = array.len() as u64;
        let mut e = Bits::zeros(width);
        for (i, c) in array.iter().enumerate() {
            let pos = if xor { i as u64 ^ delta } else { (i as u64 + delta) % m };
            if vector.get(pos as usize) {
                e.xor_assign(c);
            }
        }
        self.scanned += m;
        e
    }

    fn select_prf(&mut self, ep: &mut Endpoint, store: &mut CorrelationStore, idx: &WordShare) -> Result<WordShare> {
        let cfg = self.cfg.clone();
        let mp = cfg.padded_len();
        let (prf, key) = match &self.state {
            State::PrfSender { prf, key, .. } => (prf.clone(), Some(key.clone())),
            State::PrfReceiver { prf, .. } => (prf.clone(), None),
            _ => unreachable!("PRF select on a non-PRF instance"),
        };
        let blocks = cfg.blocks()?;
        let lanes = (0..blocks)
            .map(|j| index_concat(idx, j, blocks, mp, prf.block(), ep.party() == Party::P0))
            .collect::<Result<Vec<_>>>()?;
        let inputs = keyed_lane_inputs(ep.party(), cfg.sender, key.as_ref(), prf.circuit(), &lanes)?;
        let mut run = CircuitRun::new(prf.circuit(), ep.party(), &inputs)?;

        let wbv = if mp > 1 { Some(store.take_wbv(mp, cfg.wbv_mode)?) } else { None };
        let mut delta = match &wbv {
            Some(w) => DeltaOpen::new(cfg.delta_mode, mp, idx.clone(), w.rdx.clone()),
            None => DeltaOpen::Done(0),
        };
        // The offset opening rides in the PRF's AND-layer flushes.
        loop {
            let posted = run.post(ep, store.triples())?;
            let sent = delta.send(ep, store)?;
            if !posted && !sent {
                break;
            }
            ep.flush_round()?;
            if posted {
                run.complete(ep)?;
            }
            if sent {
                delta.recv(ep)?;
            }
        }
        let f = Bits::concat(run.outputs().iter().map(|o| o.bits())).resized(cfg.width);
        let e = match wbv {
            Some(w) => {
                let d = delta.value();
                self.last_delta = Some(d);
                self.scan(&w.expand(), d, cfg.delta_mode == DeltaMode::Xor)
            }
            None => {
                self.scanned += 1;
                match (&self.state, ep.party()) {
                    (State::PrfSender { masked, .. } | State::PrfReceiver { masked, .. }, Party::P0) => {
                        masked[0].clone()
                    }
                    _ => Bits::zeros(cfg.width),
                }
            }
        };
        Ok(WordShare::new(e.xor(&f)))
    }

    fn select_he<R: RngCore + ?Sized>(
        &mut self,
        ep: &mut Endpoint,
        store: &mut CorrelationStore,
        idx: &WordShare,
        rng: &mut R,
    ) -> Result<WordShare> {
        let cfg = self.cfg.clone();
        let m = cfg.m;
        let pk = self.public_key().expect("HE state has a key").clone();
        let ch = self.he_chunks().expect("HE state has chunks");
        let n2 = pk.n_squared().clone();

        // Boolean shares of the chosen ciphertexts.
        let e = if m > 1 {
            let w = store.take_wbv(m, cfg.wbv_mode)?;
            let mut delta = DeltaOpen::new(DeltaMode::Arith, m, idx.clone(), w.rdx.clone());
            while delta.send(ep, store)? {
                ep.flush_round()?;
                delta.recv(ep)?;
            }
            let d = delta.value();
            self.last_delta = Some(d);
            self.scan(&w.expand(), d, false)
        } else {
            self.scanned += 1;
            match (&self.state, ep.party()) {
                (State::HeSender { cts, .. } | State::HeReceiver { cts, .. }, Party::P0) => cts[0].clone(),
                _ => Bits::zeros(ch.count * ch.ct_bits),
            }
        };

        // Additive shares mod N^2.
        let opens = (0..ch.count)
            .map(|k| B2aOpen::send(ep, store, &WordShare::new(e.slice(k * ch.ct_bits, ch.ct_bits)), &n2))
            .collect::<Result<Vec<_>>>()?;
        ep.flush_round()?;
        let xs = opens.into_iter().map(|o| Ok(o.finish(ep)?.value)).collect::<Result<Vec<_>>>()?;

        // To multiplicative shares; R holds gamma, S holds C * gamma^-1. R's
        // final message carries the blinded factor along with w.
        let chunk_mod = BigUint::from(1u8) << ch.width;
        let shares = if self.is_sender() {
            let keypair = match &self.state {
                State::HeSender { keypair, .. } => keypair,
                _ => unreachable!(),
            };
            let peers = (0..ch.count)
                .map(|_| A2mPeer::new(store.take_mod_bmt(&n2, cfg.receiver())?))
                .collect::<Result<Vec<_>>>()?;
            let mut msg = Writer::new();
            for (p, x) in peers.iter().zip(&xs) {
                msg.residue(&p.opening(x), &n2);
            }
            ep.send(msg.finish())?;
            ep.flush_round()?;
            ep.flush_round()?;
            let msg = ep.recv()?;
            let mut r = Reader::new(&msg);
            let mut out = Vec::with_capacity(ch.count);
            for (p, x) in peers.iter().zip(&xs) {
                let e = r.residue(&n2)?;
                let w = r.residue(&n2)?;
                let xb = r.residue(&n2)?;
                let own = p.finish(x, &e, &w);
                let ct = pk.ciphertext(own.value * xb % &n2)?;
                let plain = keypair.decrypt_crt(&ct)?;
                out.push(ArithShare::new(plain % &chunk_mod, chunk_mod.clone()));
            }
            r.finish()?;
            out
        } else {
            let holders = (0..ch.count)
                .map(|_| {
                    let t = store.take_mod_bmt(&n2, cfg.receiver())?;
                    A2mHolder::new(t, sample_gamma(pk.n(), &n2, rng))
                })
                .collect::<Result<Vec<_>>>()?;
            ep.flush_round()?;
            let msg = ep.recv()?;
            let mut r = Reader::new(&msg);
            let fs = (0..ch.count).map(|_| r.residue(&n2)).collect::<Result<Vec<_>>>()?;
            r.finish()?;
            let mut out = Vec::with_capacity(ch.count);
            let mut msg = Writer::new();
            for ((h, x), f) in holders.iter().zip(&xs).zip(&fs) {
                let beta = rng.gen_biguint(ch.width as u64);
                let rho = rng.gen_biguint(cfg.lambda as u64);
                let blinded = pk.encrypt(&(&beta + (rho << ch.width)), rng)?;
                let xb = h.share().value * blinded.value() % &n2;
                msg.residue(&h.opening(), &n2).residue(&h.respond(x, f), &n2).residue(&xb, &n2);
                out.push(ArithShare::new((&chunk_mod - beta) % &chunk_mod, chunk_mod.clone()));
            }
            ep.send(msg.finish())?;
            ep.flush_round()?;
            out
        };

        let words = a2b_many(ep, store.triples(), &shares)?;
        let mut out = Bits::zeros(0);
        for w in &words {
            out.extend(w.bits());
        }
        Ok(WordShare::new(out.resized(cfg.width)))
    }
}

fn to_u64(x: &BigUint) -> u64 {
    x.iter_u64_digits().next().unwrap_or(0)
}

/// Opening of the rotation offset `delta` between the shared index and the
/// weight-1 vector's position, one stage per flush.
enum DeltaOpen {
    ArithStart { m: u64, idx: WordShare, rdx: WordShare },
    ArithB2a { m: u64, opens: [B2aOpen; 2] },
    ArithOpen { m: u64, own: u64 },
    XorStart { m: u64, own: Bits },
    XorOpen { m: u64, own: Bits },
    Done(u64),
    Poisoned,
}

impl DeltaOpen {
    fn new(mode: DeltaMode, m: u64, idx: WordShare, rdx: WordShare) -> Self {
        match mode {
            DeltaMode::Arith => DeltaOpen::ArithStart { m, idx, rdx },
            DeltaMode::Xor => DeltaOpen::XorStart { m, own: idx.bits().xor(rdx.bits()) },
        }
    }

    /// Queues this stage's message; false once the offset is known.
    fn send(&mut self, ep: &mut Endpoint, store: &mut CorrelationStore) -> Result<bool> {
        *self = match std::mem::replace(self, DeltaOpen::Poisoned) {
            DeltaOpen::ArithStart { m, idx, rdx } => {
                let modulus = BigUint::from(m);
                let a = B2aOpen::send(ep, store, &idx, &modulus)?;
                let b = B2aOpen::send(ep, store, &rdx, &modulus)?;
                DeltaOpen::ArithB2a { m, opens: [a, b] }
            }
            DeltaOpen::ArithOpen { m, own } => {
                ep.send(Writer::new().index(own, m).finish())?;
                DeltaOpen::ArithOpen { m, own }
            }
            DeltaOpen::XorStart { m, own } => {
                ep.send(Writer::new().bits(&own).finish())?;
                DeltaOpen::XorOpen { m, own }
            }
            done @ DeltaOpen::Done(_) => {
                *self = done;
                return Ok(false);
            }
            other => other,
        };
        Ok(true)
    }

    fn recv(&mut self, ep: &mut Endpoint) -> Result<()> {
        *self = match std::mem::replace(self, DeltaOpen::Poisoned) {
            DeltaOpen::ArithB2a { m, opens: [a, b] } => {
                let i = to_u64(&a.finish(ep)?.value);
                let r = to_u64(&b.finish(ep)?.value);
                DeltaOpen::ArithOpen { m, own: (r + m - i) % m }
            }
            DeltaOpen::ArithOpen { m, own } => {
                let msg = ep.recv()?;
                let mut r = Reader::new(&msg);
                let peer = r.index(m)?;
                r.finish()?;
                if peer >= m {
                    return Err(Error::Malformed("offset share out of range".into()));
                }
                DeltaOpen::Done((own + peer) % m)
            }
            DeltaOpen::XorOpen { m, own } => {
                let msg = ep.recv()?;
                let mut r = Reader::new(&msg);
                let peer = r.bits(own.len())?;
                r.finish()?;
                DeltaOpen::Done(own.xor(&peer).to_u64() % m)
            }
            _ => unreachable!("recv without a pending stage"),
        };
        Ok(())
    }

    fn value(&self) -> u64 {
        match self {
            DeltaOpen::Done(d) => *d,
            _ => unreachable!("offset read before it was opened"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{run_two_party, Phase, Transcript};
    use crate::dealer::deal;
    use crate::sharing::{share_boolean, Prng};
    use rand::SeedableRng;

    struct Run {
        outs: Vec<Bits>,
        deltas: Vec<Option<u64>>,
        online: Transcript,
        setup: Transcript,
    }

    /// Sets up `cfg` over `array` and selects every index in `idxs`.
    fn run(cfg: &SosConfig, array: &[Bits], idxs: &[u64], seed: u64) -> Run {
        let mut rng = Prng::seed_from_u64(seed);
        let w = cfg.index_width().max(1) + 3;
        let (i0, i1): (Vec<_>, Vec<_>) =
            idxs.iter().map(|&i| share_boolean(&Bits::from_u64(i, w), &mut rng)).unzip();
        let (c0, c1) = (cfg.clone(), cfg.clone());
        let (a0, a1) = (array.to_vec(), array.to_vec());
        let sender = cfg.sender;
        let n = idxs.len() as u64;
        let out = run_two_party(
            move |ep| side(ep, &c0, sender, &a0, &i0, n, seed),
            move |ep| side(ep, &c1, sender, &a1, &i1, n, seed),
        )
        .unwrap();
        let (o0, d0, s0) = out.p0;
        let (o1, _, _) = out.p1;
        Run {
            outs: o0.iter().zip(&o1).map(|(a, b)| a.reconstruct(b).unwrap()).collect(),
            deltas: d0,
            online: out.transcript.since(&s0),
            setup: s0,
        }
    }

    type Side = (Vec<WordShare>, Vec<Option<u64>>, Transcript);

    fn side(
        ep: &mut Endpoint,
        cfg: &SosConfig,
        sender: Party,
        array: &[Bits],
        idxs: &[WordShare],
        n: u64,
        seed: u64,
    ) -> Result<Side> {
        let mut rng = Prng::seed_from_u64(seed ^ (ep.party().index() as u64 + 1) * 0x9e37);
        ep.set_phase(Phase::Setup);
        let mut inst = if ep.party() == sender {
            SosInstance::setup_sender(cfg, array, ep, &mut rng)?
        } else {
            SosInstance::setup_receiver(cfg, ep)?
        };
        let setup = ep.transcript().clone();
        let budget = inst.select_budget()?.times(n);
        let [s0, s1] = deal(&budget, seed)?;
        let mut store = if ep.party() == Party::P0 { s0 } else { s1 };
        ep.set_phase(Phase::Online);
        let mut outs = Vec::new();
        let mut deltas = Vec::new();
        for i in idxs {
            outs.push(inst.select(ep, &mut store, i, &mut rng)?);
            deltas.push(inst.last_delta());
        }
        assert!(store.is_exhausted(), "budget matches consumption");
        Ok((outs, deltas, setup))
    }

    fn array(m: u64, width: usize, seed: u64) -> Vec<Bits> {
        let mut rng = Prng::seed_from_u64(seed);
        (0..m).map(|_| Bits::random(width, &mut rng)).collect()
    }

    fn configs(m: u64, width: usize, sender: Party) -> Vec<SosConfig> {
        vec![
            SosConfig::new(Backend::Ot, m, width, sender),
            SosConfig::new(Backend::Prf, m, width, sender).with_prf("toy16"),
            SosConfig::new(Backend::Prf, m, width, sender).with_delta_mode(DeltaMode::Xor).with_prf("toy16"),
            SosConfig::new(Backend::Prf, m, width, sender).with_wbv_mode(WbvMode::Dpf),
            SosConfig::new(Backend::He, m, width, sender).with_paillier_bits(256),
        ]
    }

    #[test]
    fn exhaustive_small_arrays_all_backends() {
        for (m, sender) in [(1u64, Party::P0), (23, Party::P1), (64, Party::P0)] {
            let a = array(m, 40, m);
            let idxs: Vec<u64> = (0..m).collect();
            for cfg in configs(m, 40, sender) {
                let r = run(&cfg, &a, &idxs, m + 7);
                for (i, got) in r.outs.iter().enumerate() {
                    assert_eq!(got, &a[i], "{:?} {:?} m={m} idx={i}", cfg.backend, cfg.delta_mode);
                }
            }
        }
    }

    #[test]
    fn he_chunks_wide_elements() {
        // 200-bit elements against a 128-bit modulus: 88-bit chunk limit.
        let cfg = SosConfig::new(Backend::He, 5, 200, Party::P0).with_paillier_bits(128);
        let a = array(5, 200, 3);
        let r = run(&cfg, &a, &[4, 0, 2], 11);
        assert_eq!(r.outs, vec![a[4].clone(), a[0].clone(), a[2].clone()]);
    }

    #[test]
    fn published_arrays_decode_to_plaintext() {
        let a = array(9, 70, 5);
        for cfg in [
            SosConfig::new(Backend::Prf, 9, 70, Party::P1).with_prf("toy16"),
            SosConfig::new(Backend::He, 9, 70, Party::P1).with_paillier_bits(256),
        ] {
            let a2 = a.clone();
            let c0 = cfg.clone();
            let out = run_two_party(
                move |ep| SosInstance::setup_receiver(&c0, ep),
                move |ep| SosInstance::setup_sender(&cfg, &a2, ep, &mut Prng::seed_from_u64(1)),
            )
            .unwrap();
            let (r, s) = (out.p0, out.p1);
            assert_eq!(r.published_array(), s.published_array());
            let cts = r.published_array().unwrap();
            if let Some(key) = s.prf_key() {
                let prf = PrfInstance::by_id("toy16").unwrap();
                let blocks = s.config().blocks().unwrap();
                for (i, c) in cts.iter().enumerate() {
                    assert_eq!(c.xor(&prf_mask(&prf, key, i as u64, blocks, 70).unwrap()), a[i]);
                }
            } else {
                let kp = s.keypair().unwrap();
                let ch = s.he_chunks().unwrap();
                for (i, c) in cts.iter().enumerate() {
                    let mut plain = Bits::zeros(0);
                    for k in 0..ch.count {
                        let ct = kp.public().ciphertext(c.slice(k * ch.ct_bits, ch.ct_bits).to_biguint()).unwrap();
                        plain.extend(&Bits::from_biguint(&kp.decrypt(&ct).unwrap(), ch.width));
                    }
                    assert_eq!(plain.resized(70), a[i]);
                }
            }
        }
    }

    #[test]
    fn ot_setup_is_silent_and_prf_setup_is_one_array() {
        let a = array(30, 48, 2);
        let r = run(&SosConfig::new(Backend::Ot, 30, 48, Party::P1), &a, &[3], 1);
        assert_eq!(r.setup.total_bytes(), 0);
        assert_eq!(r.setup.total_rounds(), 0);
        let r = run(&SosConfig::new(Backend::Prf, 30, 48, Party::P1).with_prf("toy16"), &a, &[3], 1);
        assert_eq!(r.setup.total_bytes(), 30 * 6 + 4);
        assert_eq!(r.setup.total_rounds(), 1);
    }

    #[test]
    fn delta_is_uniform_for_a_fixed_index() {
        let m = 8u64;
        let a = array(m, 8, 4);
        let idxs = vec![5u64; 1000];
        for cfg in [
            SosConfig::new(Backend::Prf, m, 8, Party::P0).with_prf("toy16"),
            SosConfig::new(Backend::Prf, m, 8, Party::P0).with_prf("toy16").with_delta_mode(DeltaMode::Xor),
        ] {
            let r = run(&cfg, &a, &idxs, 99);
            assert!(r.outs.iter().all(|o| o == &a[5]));
            let mut counts = [0u32; 8];
            for d in &r.deltas {
                counts[d.unwrap() as usize] += 1;
            }
            // Chi-square with 7 degrees of freedom; 24.3 is the 0.999 quantile.
            let exp = 1000.0 / m as f64;
            let chi: f64 = counts.iter().map(|&c| (c as f64 - exp).powi(2) / exp).sum();
            assert!(chi < 24.3, "{counts:?} chi2 {chi}");
        }
    }

    #[test]
    fn online_bytes_independent_of_m_for_prf_and_he() {
        let width = 80;
        let bytes = |cfg: SosConfig| {
            let a = array(cfg.m, width, 1);
            let r = run(&cfg, &a, &[cfg.m - 1], 3);
            assert_eq!(r.outs[0], a[cfg.m as usize - 1]);
            r.online.total_bytes()
        };
        let p10 = bytes(SosConfig::new(Backend::Prf, 1 << 10, width, Party::P0));
        let p14 = bytes(SosConfig::new(Backend::Prf, 1 << 14, width, Party::P0));
        // Only the two offset messages and the B2A of two wider indices grow.
        assert!(p14 - p10 <= 32, "{p10} vs {p14}");
        let h10 = bytes(SosConfig::new(Backend::He, 1 << 6, width, Party::P0).with_paillier_bits(256));
        let h12 = bytes(SosConfig::new(Backend::He, 1 << 10, width, Party::P0).with_paillier_bits(256));
        assert!(h12 - h10 <= 32, "{h10} vs {h12}");
        let o6 = bytes(SosConfig::new(Backend::Ot, 1 << 6, width, Party::P0));
        let o10 = bytes(SosConfig::new(Backend::Ot, 1 << 10, width, Party::P0));
        assert!(o10 >= 15 * o6, "{o6} vs {o10}");
    }

    #[test]
    fn select_rounds() {
        let a = array(23, 80, 1);
        let rounds = |cfg: SosConfig| run(&cfg, &a, &[7], 5).online.total_rounds();
        assert_eq!(rounds(SosConfig::new(Backend::Ot, 23, 80, Party::P1)), 3);
        let prf = PrfInstance::by_id("toy16").unwrap();
        assert_eq!(rounds(SosConfig::new(Backend::Prf, 23, 80, Party::P0).with_prf("toy16")), prf.r_f() as u64);
        let he = rounds(SosConfig::new(Backend::He, 23, 80, Party::P0).with_paillier_bits(256));
        assert_eq!(he, 5 + crate::conv::a2b_rounds(80) as u64);
    }

    #[test]
    fn config_checks() {
        let c = SosConfig::new(Backend::Prf, 1 << 14, 80, Party::P0).with_prf("toy16");
        assert!(matches!(c.validate(), Err(Error::IndexWidthOverflow { .. })));
        assert!(SosConfig::new(Backend::Ot, 0, 8, Party::P0).validate().is_err());
        assert!(SosConfig::new(Backend::He, 4, 8, Party::P0).with_delta_mode(DeltaMode::Xor).validate().is_err());
        assert!(SosConfig::new(Backend::He, 4, 8, Party::P0).with_paillier_bits(40).validate().is_err());
        assert_eq!(SosConfig::new(Backend::Prf, 23, 8, Party::P0).with_delta_mode(DeltaMode::Xor).padded_len(), 32);
        assert_eq!("HE".parse::<Backend>().unwrap(), Backend::He);
    }
}
