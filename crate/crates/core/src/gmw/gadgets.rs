use crate::bits::Bits;
use crate::channel::{Endpoint, Party};
use crate::error::{Error, Result};
use crate::sharing::{BitShare, WordShare};

use super::circuit::{Builder, Circuit, Wire};
use super::engine::{and_shares, eval_circuit, CircuitRun, TripleStream};

/// Widths up to this use a ripple-carry adder; wider ones a prefix adder.
pub const RIPPLE_MAX_WIDTH: usize = 8;

/// `x < t` on unsigned `width`-bit words: x is group A, t is group B, one
/// output bit. AND-depth is `ceil(log2 width) + 1`.
pub fn less_than_circuit(width: usize) -> Circuit {
    assert!(width > 0);
    let mut b = Builder::new(width, width);
    let x = b.a_word();
    let t = b.b_word();
    let (lt, _) = lt_eq(&mut b, &x, &t, false);
    b.finish(&[lt])
}

/// Less-than and (optionally) equality of the bit range, LSB first.
fn lt_eq(b: &mut Builder, x: &[Wire], t: &[Wire], need_eq: bool) -> (Wire, Option<Wire>) {
    if x.len() == 1 {
        let nx = b.inv(x[0]);
        let lt = b.and(nx, t[0]);
        let eq = need_eq.then(|| {
            let d = b.xor(x[0], t[0]);
            b.inv(d)
        });
        return (lt, eq);
    }
    let mid = x.len() / 2;
    let (lt_lo, eq_lo) = lt_eq(b, &x[..mid], &t[..mid], need_eq);
    let (lt_hi, eq_hi) = lt_eq(b, &x[mid..], &t[mid..], true);
    let eq_hi = eq_hi.expect("requested");
    let carry = b.and(eq_hi, lt_lo);
    let lt = b.xor(lt_hi, carry);
    let eq = eq_lo.map(|eq_lo| b.and(eq_hi, eq_lo));
    (lt, eq)
}

/// `a + b mod 2^width` for each width in `widths`: group A and group B are
/// the concatenated addends, the output the concatenated sums.
pub fn adder_circuit(widths: &[usize]) -> Circuit {
    let total: usize = widths.iter().sum();
    let mut b = Builder::new(total, total);
    let mut outs = Vec::with_capacity(total);
    let mut off = 0;
    for &w in widths {
        let x: Vec<Wire> = (off..off + w).map(|i| b.a(i)).collect();
        let y: Vec<Wire> = (off..off + w).map(|i| b.b(i)).collect();
        if w <= RIPPLE_MAX_WIDTH {
            outs.extend(ripple_add(&mut b, &x, &y));
        } else {
            outs.extend(prefix_add(&mut b, &x, &y));
        }
        off += w;
    }
    b.finish(&outs)
}

fn ripple_add(b: &mut Builder, x: &[Wire], y: &[Wire]) -> Vec<Wire> {
    let mut out = Vec::with_capacity(x.len());
    let mut carry: Option<Wire> = None;
    for i in 0..x.len() {
        let p = b.xor(x[i], y[i]);
        let s = match carry {
            Some(c) => b.xor(p, c),
            None => b.copy(p),
        };
        out.push(s);
        if i + 1 < x.len() {
            // carry' = c ^ ((x ^ c) & (y ^ c)), or x & y when c = 0
            carry = Some(match carry {
                None => b.and(x[i], y[i]),
                Some(c) => {
                    let xc = b.xor(x[i], c);
                    let yc = b.xor(y[i], c);
                    let m = b.and(xc, yc);
                    b.xor(c, m)
                }
            });
        }
    }
    out
}

/// Sklansky parallel-prefix carry computation.
fn prefix_add(b: &mut Builder, x: &[Wire], y: &[Wire]) -> Vec<Wire> {
    let w = x.len();
    let p: Vec<Wire> = (0..w).map(|i| b.xor(x[i], y[i])).collect();
    // Only carries into bits 1..w are used, so prefixes over 0..w-1.
    let n = w - 1;
    let mut g: Vec<Wire> = (0..n).map(|i| b.and(x[i], y[i])).collect();
    let mut pp: Vec<Wire> = p[..n].to_vec();
    let mut s = 0;
    while (1usize << s) < n {
        let snapshot_g = g.clone();
        let snapshot_p = pp.clone();
        for i in 0..n {
            if i >> s & 1 == 0 {
                continue;
            }
            let j = (i >> s << s) - 1;
            let t = b.and(snapshot_p[i], snapshot_g[j]);
            g[i] = b.xor(snapshot_g[i], t);
            if i >> (s + 1) != 0 {
                pp[i] = b.and(snapshot_p[i], snapshot_p[j]);
            }
        }
        s += 1;
    }
    let mut out = Vec::with_capacity(w);
    out.push(b.copy(p[0]));
    for i in 1..w {
        out.push(b.xor(p[i], g[i - 1]));
    }
    out
}

/// Strict unsigned comparison of shared words.
pub fn secure_less_than(
    x: &WordShare,
    t: &WordShare,
    triples: &mut TripleStream,
    ep: &mut Endpoint,
) -> Result<BitShare> {
    if x.width() != t.width() {
        return Err(Error::WidthMismatch { expected: x.width(), got: t.width() });
    }
    let c = less_than_circuit(x.width());
    let out = eval_circuit(&c, x, t, triples, ep)?;
    Ok(out.bit(0))
}

/// `r ^ b * (l ^ r)`: `l` when the bit is 1, else `r`. One round, `width` triples.
pub fn mux_select(
    b: BitShare,
    l: &WordShare,
    r: &WordShare,
    triples: &mut TripleStream,
    ep: &mut Endpoint,
) -> Result<WordShare> {
    if l.width() != r.width() {
        return Err(Error::WidthMismatch { expected: l.width(), got: r.width() });
    }
    let sel = if b.0 { Bits::ones(l.width()) } else { Bits::zeros(l.width()) };
    let diff = l.bits().xor(r.bits());
    let z = and_shares(ep, triples, &sel, &diff)?;
    Ok(WordShare::new(r.bits().xor(&z)))
}

/// Lane inputs for a keyed circuit: the key holder feeds its key as group A,
/// the other party zeros; group B is the shared data, one lane per entry.
pub fn keyed_lane_inputs(
    party: Party,
    key_holder: Party,
    key: Option<&Bits>,
    circuit: &Circuit,
    data: &[WordShare],
) -> Result<Vec<Bits>> {
    let [kw, dw] = circuit.inputs();
    let key_share = if party == key_holder {
        let k = key.ok_or_else(|| Error::ConfigInvalid("key holder has no key".into()))?;
        if k.len() != kw {
            return Err(Error::WidthMismatch { expected: kw, got: k.len() });
        }
        k.clone()
    } else {
        Bits::zeros(kw)
    };
    data.iter()
        .map(|d| {
            if d.width() != dw {
                return Err(Error::WidthMismatch { expected: dw, got: d.width() });
            }
            Ok(Bits::concat([&key_share, d.bits()]))
        })
        .collect()
}

/// Shares of `F(key, idx_k)` for every lane `k` under one key held by
/// `key_holder`; all lanes share each AND layer's flush.
pub fn shared_prf_eval(
    key_holder: Party,
    key: Option<&Bits>,
    idx: &[WordShare],
    prf_circuit: &Circuit,
    triples: &mut TripleStream,
    ep: &mut Endpoint,
) -> Result<Vec<WordShare>> {
    let inputs = keyed_lane_inputs(ep.party(), key_holder, key, prf_circuit, idx)?;
    CircuitRun::new(prf_circuit, ep.party(), &inputs)?.run(ep, triples)
}
