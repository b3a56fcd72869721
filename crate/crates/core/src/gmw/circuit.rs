use crate::bits::Bits;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Xor,
    And,
    /// NOT; free, evaluated as XOR with the constant 1.
    Inv,
    /// Wire copy (Bristol `EQW`).
    Copy,
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Xor | Op::And => 2,
            Op::Inv | Op::Copy => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gate {
    pub op: Op,
    pub a: usize,
    /// Equal to `a` for unary gates.
    pub b: usize,
    pub out: usize,
}

/// Gates grouped for round-optimal evaluation. Layer `k` holds the linear
/// gates whose inputs are available after `k` AND layers, followed by the AND
/// gates of AND-level `k + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateSchedule {
    pub layers: Vec<Layer>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layer {
    pub linear: Vec<usize>,
    pub ands: Vec<usize>,
}

/// A boolean circuit over two input groups: group A (wires `0..inputs[0]`)
/// and group B (the next `inputs[1]` wires).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    n_wires: usize,
    inputs: [usize; 2],
    gates: Vec<Gate>,
    outputs: Vec<usize>,
    and_count: usize,
    schedule: GateSchedule,
}

impl Circuit {
    /// Validates topology and computes the AND schedule.
    pub fn new(n_wires: usize, inputs: [usize; 2], gates: Vec<Gate>, outputs: Vec<usize>) -> Result<Circuit> {
        let n_in = inputs[0] + inputs[1];
        if n_in > n_wires {
            return Err(Error::Parse { line: 0, reason: format!("{n_in} inputs but only {n_wires} wires") });
        }
        // AND-level of each wire; None = not yet defined.
        let mut level: Vec<Option<usize>> = vec![None; n_wires];
        for l in level.iter_mut().take(n_in) {
            *l = Some(0);
        }
        let mut linear_at: Vec<Vec<usize>> = vec![Vec::new()];
        let mut ands_at: Vec<Vec<usize>> = vec![Vec::new()];
        let mut and_count = 0;
        for (gi, g) in gates.iter().enumerate() {
            let read = |w: usize| -> Result<usize> {
                level.get(w).copied().flatten().ok_or(Error::Topology { gate: gi, wire: w })
            };
            let la = read(g.a)?;
            let lb = read(g.b)?;
            if g.out >= n_wires {
                return Err(Error::Topology { gate: gi, wire: g.out });
            }
            if level[g.out].is_some() {
                return Err(Error::Parse { line: 0, reason: format!("gate {gi} overwrites wire {}", g.out) });
            }
            let base = la.max(lb);
            let lv = if g.op == Op::And {
                and_count += 1;
                if ands_at.len() <= base {
                    ands_at.resize(base + 1, Vec::new());
                }
                ands_at[base].push(gi);
                base + 1
            } else {
                if linear_at.len() <= base {
                    linear_at.resize(base + 1, Vec::new());
                }
                linear_at[base].push(gi);
                base
            };
            level[g.out] = Some(lv);
        }
        for &w in &outputs {
            if level.get(w).copied().flatten().is_none() {
                return Err(Error::Topology { gate: gates.len(), wire: w });
            }
        }
        let depth = ands_at.iter().rposition(|v| !v.is_empty()).map_or(0, |i| i + 1);
        let n_layers = depth + 1;
        linear_at.resize(n_layers.max(linear_at.len()), Vec::new());
        ands_at.resize(n_layers, Vec::new());
        let layers = linear_at
            .into_iter()
            .zip(ands_at)
            .map(|(linear, ands)| Layer { linear, ands })
            .collect();
        Ok(Circuit { n_wires, inputs, gates, outputs, and_count, schedule: GateSchedule { layers } })
    }

    pub fn n_wires(&self) -> usize {
        self.n_wires
    }

    pub fn inputs(&self) -> [usize; 2] {
        self.inputs
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs[0] + self.inputs[1]
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn and_count(&self) -> usize {
        self.and_count
    }

    pub fn and_depth(&self) -> usize {
        self.schedule.layers.iter().filter(|l| !l.ands.is_empty()).count()
    }

    pub fn schedule(&self) -> &GateSchedule {
        &self.schedule
    }

    /// Cleartext evaluation, the oracle for the shared engine.
    pub fn eval_plain(&self, a: &Bits, b: &Bits) -> Result<Bits> {
        if a.len() != self.inputs[0] {
            return Err(Error::WidthMismatch { expected: self.inputs[0], got: a.len() });
        }
        if b.len() != self.inputs[1] {
            return Err(Error::WidthMismatch { expected: self.inputs[1], got: b.len() });
        }
        let mut w = vec![false; self.n_wires];
        for i in 0..a.len() {
            w[i] = a.get(i);
        }
        for i in 0..b.len() {
            w[a.len() + i] = b.get(i);
        }
        for g in &self.gates {
            w[g.out] = match g.op {
                Op::Xor => w[g.a] ^ w[g.b],
                Op::And => w[g.a] & w[g.b],
                Op::Inv => !w[g.a],
                Op::Copy => w[g.a],
            };
        }
        Ok(Bits::from_bools(&self.outputs.iter().map(|&o| w[o]).collect::<Vec<_>>()))
    }
}

/// A wire handle inside a [`Builder`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Wire(pub usize);

/// Incremental circuit construction for the built-in gadgets.
pub struct Builder {
    inputs: [usize; 2],
    next: usize,
    gates: Vec<Gate>,
}

impl Builder {
    pub fn new(a: usize, b: usize) -> Self {
        Builder { inputs: [a, b], next: a + b, gates: Vec::new() }
    }

    pub fn a(&self, i: usize) -> Wire {
        assert!(i < self.inputs[0]);
        Wire(i)
    }

    pub fn b(&self, i: usize) -> Wire {
        assert!(i < self.inputs[1]);
        Wire(self.inputs[0] + i)
    }

    pub fn a_word(&self) -> Vec<Wire> {
        (0..self.inputs[0]).map(|i| self.a(i)).collect()
    }

    pub fn b_word(&self) -> Vec<Wire> {
        (0..self.inputs[1]).map(|i| self.b(i)).collect()
    }

    fn gate(&mut self, op: Op, a: Wire, b: Wire) -> Wire {
        let out = self.next;
        self.next += 1;
        self.gates.push(Gate { op, a: a.0, b: b.0, out });
        Wire(out)
    }

    pub fn xor(&mut self, a: Wire, b: Wire) -> Wire {
        self.gate(Op::Xor, a, b)
    }

    pub fn and(&mut self, a: Wire, b: Wire) -> Wire {
        self.gate(Op::And, a, b)
    }

    pub fn inv(&mut self, a: Wire) -> Wire {
        self.gate(Op::Inv, a, a)
    }

    pub fn copy(&mut self, a: Wire) -> Wire {
        self.gate(Op::Copy, a, a)
    }

    pub fn and_count(&self) -> usize {
        self.gates.iter().filter(|g| g.op == Op::And).count()
    }

    pub fn finish(self, outputs: &[Wire]) -> Circuit {
        Circuit::new(self.next, self.inputs, self.gates, outputs.iter().map(|w| w.0).collect())
            .expect("builder produces topologically ordered circuits")
    }
}
