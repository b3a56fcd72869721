//! Binary correlation files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! header (32 bytes)
//!   0  magic "PDTC"
//!   4  version u16
//!   6  kind u16          1 = correlation store
//!   8  party u8, 3 reserved bytes
//!  12  record_count u32  records over all sections
//!  16  body_len u64
//!  24  seed fingerprint, 8 bytes
//! body: tagged sections
//!   1 boolean triples   count u64, then a, b, c packed
//!   2 bit OTs           modulus, count u64, role u8, records
//!   3 1-of-k OTs        k u64, width u32, sender u8, count u64, role u8, records
//!   4 weight-1 vectors  m u64, mode u8, count u64, records
//!   5 modular triples   modulus, a-holder u8, count u64, records
//! ```
//!
//! A modulus is its byte length u32 followed by its bytes; residues use the
//! modulus' byte length. Only unconsumed correlations are written.

use std::collections::VecDeque;
use std::path::Path;

use num_bigint::BigUint;

use super::{BitOt, CorrelationStore, KOt, KOtKind, ModTriple, WbvMode, WbvShare, WbvVector};
use crate::bits::Bits;
use crate::channel::Party;
use crate::dpf::DpfKey;
use crate::error::{Error, Result};
use crate::gmw::TripleStream;
use crate::prf::index_bits;
use crate::sharing::WordShare;
use crate::wire::residue_len;

pub const FILE_MAGIC: [u8; 4] = *b"PDTC";
pub const FILE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
const KIND_STORE: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrelationFileHeader {
    pub version: u16,
    pub kind: u16,
    pub party: Party,
    pub record_count: u32,
    pub body_len: u64,
    pub fingerprint: [u8; 8],
}

impl CorrelationFileHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&FILE_MAGIC);
        h[4..6].copy_from_slice(&self.version.to_le_bytes());
        h[6..8].copy_from_slice(&self.kind.to_le_bytes());
        h[8] = self.party.index() as u8;
        h[12..16].copy_from_slice(&self.record_count.to_le_bytes());
        h[16..24].copy_from_slice(&self.body_len.to_le_bytes());
        h[24..32].copy_from_slice(&self.fingerprint);
        h
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(bad("file shorter than its header"));
        }
        if bytes[0..4] != FILE_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FILE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let kind = u16::from_le_bytes([bytes[6], bytes[7]]);
        if kind != KIND_STORE {
            return Err(bad(&format!("unknown kind {kind}")));
        }
        Ok(CorrelationFileHeader {
            version,
            kind,
            party: party_from(bytes[8])?,
            record_count: u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")),
            body_len: u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")),
            fingerprint: bytes[24..32].try_into().expect("8 bytes"),
        })
    }
}

fn bad(msg: &str) -> Error {
    Error::CorrelationFile(msg.to_string())
}

fn party_from(b: u8) -> Result<Party> {
    match b {
        0 => Ok(Party::P0),
        1 => Ok(Party::P1),
        _ => Err(bad(&format!("bad party byte {b}"))),
    }
}

#[derive(Default)]
struct Out {
    buf: Vec<u8>,
}

impl Out {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bits(&mut self, b: &Bits) {
        self.buf.extend_from_slice(&b.to_bytes());
    }
    fn modulus(&mut self, n: &BigUint) {
        let b = n.to_bytes_le();
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(&b);
    }
    fn residue(&mut self, x: &BigUint, n: &BigUint) {
        let mut b = x.to_bytes_le();
        b.resize(residue_len(n), 0);
        self.buf.extend_from_slice(&b);
    }
}

struct In<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated body"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn count(&mut self) -> Result<usize> {
        let c = self.u64()?;
        // Every record is at least one byte, so this bounds allocations.
        if c > (self.buf.len() - self.pos) as u64 * 8 {
            return Err(bad("record count exceeds body length"));
        }
        Ok(c as usize)
    }
    fn bits(&mut self, len: usize) -> Result<Bits> {
        Ok(Bits::from_bytes(self.take(len.div_ceil(8))?, len))
    }
    fn modulus(&mut self) -> Result<BigUint> {
        let len = self.u32()? as usize;
        let n = BigUint::from_bytes_le(self.take(len)?);
        if n.bits() < 2 {
            return Err(bad("modulus below 2"));
        }
        Ok(n)
    }
    fn residue(&mut self, n: &BigUint) -> Result<BigUint> {
        let x = BigUint::from_bytes_le(self.take(residue_len(n))?);
        if &x >= n {
            return Err(bad("residue out of range"));
        }
        Ok(x)
    }
}

const ROLE_SENDER: u8 = 0;
const ROLE_RECEIVER: u8 = 1;

impl CorrelationStore {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut o = Out::default();
        let mut records: u64 = 0;

        let t = &self.triples;
        let (a, b, c) = t.parts();
        let (start, n) = (t.consumed(), t.remaining());
        if n > 0 {
            o.u8(1);
            o.u64(n as u64);
            for part in [a, b, c] {
                o.bits(&part.slice(start, n));
            }
            records += n as u64;
        }

        for (modulus, pool) in self.bit_ots.iter().filter(|(_, p)| !p.is_empty()) {
            o.u8(2);
            o.modulus(modulus);
            o.u64(pool.len() as u64);
            let sender = matches!(pool[0], BitOt::Sender { .. });
            o.u8(if sender { ROLE_SENDER } else { ROLE_RECEIVER });
            for ot in pool {
                match ot {
                    BitOt::Sender { p0, p1 } => {
                        o.residue(p0, modulus);
                        o.residue(p1, modulus);
                    }
                    BitOt::Receiver { c, pc } => {
                        o.u8(*c as u8);
                        o.residue(pc, modulus);
                    }
                }
            }
            records += pool.len() as u64;
        }

        for (kind, pool) in self.k_ots.iter().filter(|(_, p)| !p.is_empty()) {
            o.u8(3);
            o.u64(kind.k);
            o.u32(kind.width as u32);
            o.u8(kind.sender.index() as u8);
            o.u64(pool.len() as u64);
            o.u8(if self.party == kind.sender { ROLE_SENDER } else { ROLE_RECEIVER });
            for ot in pool {
                match ot {
                    KOt::Sender { seed } => o.buf.extend_from_slice(seed),
                    KOt::Receiver { c, pad } => {
                        o.u64(*c);
                        o.bits(pad);
                    }
                }
            }
            records += pool.len() as u64;
        }

        for (&(m, mode), pool) in self.wbvs.iter().filter(|(_, p)| !p.is_empty()) {
            o.u8(4);
            o.u64(m);
            o.u8(match mode {
                WbvMode::Direct => 0,
                WbvMode::Dpf => 1,
            });
            o.u64(pool.len() as u64);
            for w in pool {
                o.bits(w.rdx.bits());
                match &w.vector {
                    WbvVector::Direct(s) => o.bits(s),
                    WbvVector::Dpf(k) => o.buf.extend_from_slice(&k.to_bytes()),
                }
            }
            records += pool.len() as u64;
        }

        for ((modulus, a_holder), pool) in self.mod_bmts.iter().filter(|(_, p)| !p.is_empty()) {
            o.u8(5);
            o.modulus(modulus);
            o.u8(a_holder.index() as u8);
            o.u64(pool.len() as u64);
            for t in pool {
                o.residue(&t.own, modulus);
                o.residue(&t.c, modulus);
            }
            records += pool.len() as u64;
        }

        let header = CorrelationFileHeader {
            version: FILE_VERSION,
            kind: KIND_STORE,
            party: self.party,
            record_count: u32::try_from(records).expect("record count fits in u32"),
            body_len: o.buf.len() as u64,
            fingerprint: self.fingerprint,
        };
        let mut out = header.to_bytes().to_vec();
        out.extend_from_slice(&o.buf);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let h = CorrelationFileHeader::parse(bytes)?;
        let body = &bytes[HEADER_LEN..];
        if body.len() as u64 != h.body_len {
            return Err(bad(&format!("header says {} body bytes, file has {}", h.body_len, body.len())));
        }
        let mut s = CorrelationStore::empty(h.party);
        s.fingerprint = h.fingerprint;
        let mut r = In { buf: body, pos: 0 };
        let mut records: u64 = 0;
        while r.pos < body.len() {
            match r.u8()? {
                1 => {
                    let n = r.count()?;
                    let a = r.bits(n)?;
                    let b = r.bits(n)?;
                    let c = r.bits(n)?;
                    if !s.triples.is_empty() {
                        return Err(bad("duplicate triple section"));
                    }
                    s.triples = TripleStream::new(a, b, c);
                    records += n as u64;
                }
                2 => {
                    let modulus = r.modulus()?;
                    let n = r.count()?;
                    let role = r.u8()?;
                    let mut pool = VecDeque::with_capacity(n);
                    for _ in 0..n {
                        pool.push_back(match role {
                            ROLE_SENDER => BitOt::Sender { p0: r.residue(&modulus)?, p1: r.residue(&modulus)? },
                            ROLE_RECEIVER => BitOt::Receiver { c: r.u8()? != 0, pc: r.residue(&modulus)? },
                            _ => return Err(bad("bad OT role")),
                        });
                    }
                    s.bit_ots.insert(modulus, pool);
                    records += n as u64;
                }
                3 => {
                    let k = r.u64()?;
                    let width = r.u32()? as usize;
                    let sender = party_from(r.u8()?)?;
                    let n = r.count()?;
                    let role = r.u8()?;
                    let mut pool = VecDeque::with_capacity(n);
                    for _ in 0..n {
                        pool.push_back(match role {
                            ROLE_SENDER => KOt::Sender { seed: r.take(32)?.try_into().expect("32 bytes") },
                            ROLE_RECEIVER => {
                                let c = r.u64()?;
                                if c >= k {
                                    return Err(bad("OT choice out of range"));
                                }
                                KOt::Receiver { c, pad: r.bits(width)? }
                            }
                            _ => return Err(bad("bad OT role")),
                        });
                    }
                    s.k_ots.insert(KOtKind { k, width, sender }, pool);
                    records += n as u64;
                }
                4 => {
                    let m = r.u64()?;
                    if m == 0 {
                        return Err(bad("weight-1 vector of length 0"));
                    }
                    let mode = match r.u8()? {
                        0 => WbvMode::Direct,
                        1 => WbvMode::Dpf,
                        x => return Err(bad(&format!("bad vector mode {x}"))),
                    };
                    let n = r.count()?;
                    let sigma = index_bits(m);
                    let mut pool = VecDeque::with_capacity(n);
                    for _ in 0..n {
                        let rdx = WordShare::new(r.bits(sigma)?);
                        let vector = match mode {
                            WbvMode::Direct => WbvVector::Direct(r.bits(m as usize)?),
                            WbvMode::Dpf => {
                                let len = dpf_key_len(m);
                                WbvVector::Dpf(DpfKey::from_bytes(h.party.index() as u8, r.take(len)?)?)
                            }
                        };
                        pool.push_back(WbvShare { m, rdx, vector });
                    }
                    s.wbvs.insert((m, mode), pool);
                    records += n as u64;
                }
                5 => {
                    let modulus = r.modulus()?;
                    let a_holder = party_from(r.u8()?)?;
                    let n = r.count()?;
                    for _ in 0..n {
                        let own = r.residue(&modulus)?;
                        let c = r.residue(&modulus)?;
                        s.push_mod_bmt(a_holder, ModTriple { modulus: modulus.clone(), own, c });
                    }
                    records += n as u64;
                }
                tag => return Err(bad(&format!("unknown section tag {tag}"))),
            }
        }
        if records != h.record_count as u64 {
            return Err(bad(&format!("header counts {} records, body holds {records}", h.record_count)));
        }
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_bytes())
            .map_err(|e| bad(&format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| bad(&format!("{}: {e}", path.as_ref().display())))?;
        Self::from_bytes(&bytes)
    }

    /// Size of the file [`CorrelationStore::save`] would write.
    pub fn serialized_len(&self) -> u64 {
        self.to_bytes().len() as u64
    }
}

fn dpf_key_len(m: u64) -> usize {
    let depth = index_bits(m);
    8 + (128 + depth * 130 + 1).div_ceil(8)
}
