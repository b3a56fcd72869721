use crate::bits::Bits;
use crate::channel::{Endpoint, Party};
use crate::error::{Error, Result};
use crate::sharing::WordShare;
use crate::wire::{Reader, Writer};

use super::circuit::{Circuit, Op};

/// One party's view of a boolean Beaver triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BooleanTriple {
    pub a: bool,
    pub b: bool,
    pub c: bool,
}

/// One party's packed stream of boolean triples, consumed front to back.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripleStream {
    a: Bits,
    b: Bits,
    c: Bits,
    pos: usize,
}

impl TripleStream {
    pub fn new(a: Bits, b: Bits, c: Bits) -> Self {
        assert!(a.len() == b.len() && b.len() == c.len());
        TripleStream { a, b, c, pos: 0 }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.a.len() - self.pos
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }

    pub fn get(&self, i: usize) -> BooleanTriple {
        BooleanTriple { a: self.a.get(i), b: self.b.get(i), c: self.c.get(i) }
    }

    pub fn parts(&self) -> (&Bits, &Bits, &Bits) {
        (&self.a, &self.b, &self.c)
    }

    pub fn take(&mut self, n: usize) -> Result<(Bits, Bits, Bits)> {
        if self.remaining() < n {
            return Err(Error::TriplesExhausted);
        }
        let p = self.pos;
        self.pos += n;
        Ok((self.a.slice(p, n), self.b.slice(p, n), self.c.slice(p, n)))
    }
}

/// A batch of AND gates whose masked openings are on the wire.
pub struct AndOpen {
    a: Bits,
    b: Bits,
    c: Bits,
    e: Bits,
    f: Bits,
}

impl AndOpen {
    /// Masks `x`, `y` with fresh triples and queues `e || f` to the peer.
    pub fn send(ep: &mut Endpoint, triples: &mut TripleStream, x: &Bits, y: &Bits) -> Result<AndOpen> {
        if x.len() != y.len() {
            return Err(Error::WidthMismatch { expected: x.len(), got: y.len() });
        }
        let (a, b, c) = triples.take(x.len())?;
        let e = x.xor(&a);
        let f = y.xor(&b);
        ep.send(Writer::new().bits(&e).bits(&f).finish())?;
        Ok(AndOpen { a, b, c, e, f })
    }

    /// Consumes the peer's openings after a flush and returns the AND shares.
    pub fn finish(self, ep: &mut Endpoint) -> Result<Bits> {
        let msg = ep.recv()?;
        let n = self.e.len();
        let mut r = Reader::new(&msg);
        let e = self.e.xor(&r.bits(n)?);
        let f = self.f.xor(&r.bits(n)?);
        r.finish()?;
        let mut z = self.c;
        z.xor_assign(&e.and(&self.b));
        z.xor_assign(&f.and(&self.a));
        if ep.party() == Party::P0 {
            z.xor_assign(&e.and(&f));
        }
        Ok(z)
    }
}

/// Element-wise AND of shared vectors in one round.
pub fn and_shares(ep: &mut Endpoint, triples: &mut TripleStream, x: &Bits, y: &Bits) -> Result<Bits> {
    let open = AndOpen::send(ep, triples, x, y)?;
    ep.flush_round()?;
    open.finish(ep)
}

/// An in-progress shared evaluation over `lanes` SIMD instances.
///
/// Callers drive it one AND layer at a time, which lets other messages ride
/// in the same flushes: `post` evaluates up to the next AND layer and queues
/// its openings, the caller flushes, then `complete` absorbs the reply.
pub struct CircuitRun<'c> {
    circuit: &'c Circuit,
    party: Party,
    lanes: usize,
    wpl: usize,
    vals: Vec<u64>,
    layer: usize,
    open: Option<AndOpen>,
    done: bool,
}

impl<'c> CircuitRun<'c> {
    /// `inputs[k]` is this party's share of lane `k`'s group-A then group-B bits.
    pub fn new(circuit: &'c Circuit, party: Party, inputs: &[Bits]) -> Result<Self> {
        let lanes = inputs.len();
        let wpl = lanes.div_ceil(64).max(1);
        let mut vals = vec![0u64; circuit.n_wires() * wpl];
        for (k, inp) in inputs.iter().enumerate() {
            if inp.len() != circuit.n_inputs() {
                return Err(Error::WidthMismatch { expected: circuit.n_inputs(), got: inp.len() });
            }
            for i in inp.ones_positions() {
                vals[i * wpl + k / 64] |= 1 << (k % 64);
            }
        }
        Ok(CircuitRun { circuit, party, lanes, wpl, vals, layer: 0, open: None, done: false })
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn done(&self) -> bool {
        self.done
    }

    /// AND layers not yet opened.
    pub fn rounds_left(&self) -> usize {
        let layers = &self.circuit.schedule().layers;
        layers[self.layer.min(layers.len())..].iter().filter(|l| !l.ands.is_empty()).count()
    }

    fn lane_mask(&self, word: usize) -> u64 {
        let rem = self.lanes - word * 64;
        if rem >= 64 {
            u64::MAX
        } else {
            (1u64 << rem) - 1
        }
    }

    fn linear(&mut self, layer: usize) {
        let c = self.circuit;
        let wpl = self.wpl;
        for &gi in &c.schedule().layers[layer].linear {
            let g = c.gates()[gi];
            for k in 0..wpl {
                let a = self.vals[g.a * wpl + k];
                let v = match g.op {
                    Op::Xor => a ^ self.vals[g.b * wpl + k],
                    // Only P0 folds in the constant.
                    Op::Inv if self.party == Party::P0 => !a & self.lane_mask(k),
                    Op::Inv | Op::Copy => a,
                    Op::And => unreachable!("AND gate in a linear slot"),
                };
                self.vals[g.out * wpl + k] = v;
            }
        }
    }

    fn gather(&self, wire_of: impl Fn(usize) -> usize, gates: &[usize]) -> Bits {
        let mut out = Bits::zeros(gates.len() * self.lanes);
        for (j, &gi) in gates.iter().enumerate() {
            let w = wire_of(gi);
            let words = &self.vals[w * self.wpl..(w + 1) * self.wpl];
            if self.lanes == 1 {
                if words[0] & 1 == 1 {
                    out.set(j, true);
                }
            } else {
                out.write(j * self.lanes, &Bits::from_words(words, self.lanes));
            }
        }
        out
    }

    /// Evaluates linear gates up to the next AND layer and queues that
    /// layer's openings. Returns false once the circuit is fully evaluated,
    /// in which case nothing was queued and no flush is needed.
    pub fn post(&mut self, ep: &mut Endpoint, triples: &mut TripleStream) -> Result<bool> {
        if self.done {
            return Ok(false);
        }
        let layers = &self.circuit.schedule().layers;
        loop {
            self.linear(self.layer);
            let ands = &layers[self.layer].ands;
            if !ands.is_empty() {
                let gates = self.circuit.gates();
                let x = self.gather(|gi| gates[gi].a, ands);
                let y = self.gather(|gi| gates[gi].b, ands);
                self.open = Some(AndOpen::send(ep, triples, &x, &y)?);
                return Ok(true);
            }
            self.layer += 1;
            if self.layer == layers.len() {
                self.done = true;
                return Ok(false);
            }
        }
    }

    /// Absorbs the peer's openings for the layer queued by [`post`](Self::post).
    pub fn complete(&mut self, ep: &mut Endpoint) -> Result<()> {
        let open = self.open.take().expect("complete() without a pending post()");
        let z = open.finish(ep)?;
        let c = self.circuit;
        let ands = &c.schedule().layers[self.layer].ands;
        for (j, &gi) in ands.iter().enumerate() {
            let out = c.gates()[gi].out;
            if self.lanes == 1 {
                self.vals[out] = z.get(j) as u64;
            } else {
                let lane = z.slice(j * self.lanes, self.lanes);
                self.vals[out * self.wpl..(out + 1) * self.wpl].copy_from_slice(lane.words());
            }
        }
        self.layer += 1;
        if self.layer == c.schedule().layers.len() {
            self.done = true;
        }
        Ok(())
    }

    /// Per-lane output shares.
    pub fn outputs(&self) -> Vec<WordShare> {
        assert!(self.done, "outputs() before the circuit finished");
        let outs = self.circuit.outputs();
        (0..self.lanes)
            .map(|k| {
                let mut b = Bits::zeros(outs.len());
                for (i, &w) in outs.iter().enumerate() {
                    if self.vals[w * self.wpl + k / 64] >> (k % 64) & 1 == 1 {
                        b.set(i, true);
                    }
                }
                WordShare::new(b)
            })
            .collect()
    }

    /// Runs every remaining layer with one flush each.
    pub fn run(mut self, ep: &mut Endpoint, triples: &mut TripleStream) -> Result<Vec<WordShare>> {
        while self.post(ep, triples)? {
            ep.flush_round()?;
            self.complete(ep)?;
        }
        Ok(self.outputs())
    }
}

/// Shared evaluation of `c` on one instance. Rounds = AND-depth; triples
/// consumed = AND count.
pub fn eval_circuit(
    c: &Circuit,
    in_a: &WordShare,
    in_b: &WordShare,
    triples: &mut TripleStream,
    ep: &mut Endpoint,
) -> Result<WordShare> {
    let lane = lane_input(c, in_a, in_b)?;
    let mut out = CircuitRun::new(c, ep.party(), &[lane])?.run(ep, triples)?;
    Ok(out.pop().expect("one lane"))
}

/// SIMD evaluation: all lanes share each layer's flush.
pub fn eval_circuit_simd(
    c: &Circuit,
    lanes: &[(WordShare, WordShare)],
    triples: &mut TripleStream,
    ep: &mut Endpoint,
) -> Result<Vec<WordShare>> {
    let inputs = lanes.iter().map(|(a, b)| lane_input(c, a, b)).collect::<Result<Vec<_>>>()?;
    CircuitRun::new(c, ep.party(), &inputs)?.run(ep, triples)
}

pub fn lane_input(c: &Circuit, a: &WordShare, b: &WordShare) -> Result<Bits> {
    let [na, nb] = c.inputs();
    if a.width() != na {
        return Err(Error::WidthMismatch { expected: na, got: a.width() });
    }
    if b.width() != nb {
        return Err(Error::WidthMismatch { expected: nb, got: b.width() });
    }
    Ok(Bits::concat([a.bits(), b.bits()]))
}
