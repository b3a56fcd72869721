//! Bristol-fashion circuit text.
//!
//! ```text
//! <gates> <wires>
//! <input groups> <size>...      # one or two groups: party A, then party B
//! <output groups> <size>...
//!
//! <fan-in> <fan-out> <in>... <out> <OP>
//! ```
//!
//! Ops are `XOR`, `AND`, `INV` and `EQW`. Input wires come first, the
//! outputs are the last wires, and `#` starts a comment.

use std::fmt::Write as _;

use super::circuit::{Circuit, Gate, Op};
use crate::error::{Error, Result};

fn perr(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { line, reason: reason.into() }
}

pub fn parse_circuit(text: &[u8]) -> Result<Circuit> {
    let text = std::str::from_utf8(text).map_err(|e| perr(0, format!("not UTF-8: {e}")))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut header = |what: &str| -> Result<(usize, Vec<usize>)> {
        let (n, l) = lines.next().ok_or_else(|| perr(0, format!("missing {what} line")))?;
        let nums = l
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| perr(n, format!("bad number {t:?} in {what} line"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((n, nums))
    };
    let (n, counts) = header("header")?;
    let [n_gates, n_wires] = counts[..] else {
        return Err(perr(n, "expected `<gates> <wires>`"));
    };
    let (n, iv) = header("input")?;
    if iv.is_empty() || iv[0] != iv.len() - 1 || iv[0] > 2 {
        return Err(perr(n, "expected 1 or 2 input groups followed by their sizes"));
    }
    let inputs = [iv.get(1).copied().unwrap_or(0), iv.get(2).copied().unwrap_or(0)];
    let (n, ov) = header("output")?;
    if ov.is_empty() || ov[0] != ov.len() - 1 {
        return Err(perr(n, "output group count does not match the sizes given"));
    }
    let n_out: usize = ov[1..].iter().sum();
    if n_out > n_wires {
        return Err(perr(n, "more outputs than wires"));
    }

    let mut gates = Vec::with_capacity(n_gates);
    let mut written = vec![false; n_wires];
    for (n, l) in lines.by_ref() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 4 {
            return Err(perr(n, "gate line too short"));
        }
        let num = |t: &str| t.parse::<usize>().map_err(|_| perr(n, format!("bad wire number {t:?}")));
        let fan_in = num(toks[0])?;
        let fan_out = num(toks[1])?;
        if fan_out != 1 {
            return Err(perr(n, "only single-output gates are supported"));
        }
        if toks.len() != 2 + fan_in + fan_out + 1 {
            return Err(perr(n, "token count does not match fan-in/fan-out"));
        }
        let op = match toks[toks.len() - 1] {
            "XOR" => Op::Xor,
            "AND" => Op::And,
            "INV" | "NOT" => Op::Inv,
            "EQW" => Op::Copy,
            other => return Err(perr(n, format!("unsupported gate {other:?}"))),
        };
        if fan_in != op.arity() {
            return Err(perr(n, format!("{op:?} takes {} inputs", op.arity())));
        }
        let a = num(toks[2])?;
        let b = if fan_in == 2 { num(toks[3])? } else { a };
        let out = num(toks[2 + fan_in])?;
        if out >= n_wires {
            return Err(Error::Topology { gate: gates.len(), wire: out });
        }
        if std::mem::replace(&mut written[out], true) || out < inputs[0] + inputs[1] {
            return Err(perr(n, format!("wire {out} is assigned twice")));
        }
        gates.push(Gate { op, a, b, out });
    }
    if gates.len() != n_gates {
        return Err(perr(0, format!("header declares {n_gates} gates, found {}", gates.len())));
    }
    let outputs = (n_wires - n_out..n_wires).collect();
    Circuit::new(n_wires, inputs, gates, outputs)
}

/// Serializes with wires renumbered so that the outputs are the last wires.
/// Outputs must be distinct gate outputs.
pub fn write_circuit(c: &Circuit) -> String {
    let n_in = c.n_inputs();
    let mut map = vec![usize::MAX; c.n_wires()];
    for (i, m) in map.iter_mut().enumerate().take(n_in) {
        *m = i;
    }
    let is_out: std::collections::HashMap<usize, usize> =
        c.outputs().iter().enumerate().map(|(k, &w)| (w, k)).collect();
    let n_wires = n_in + c.gates().len();
    let first_out = n_wires - c.outputs().len();
    let mut next = n_in;
    for g in c.gates() {
        map[g.out] = match is_out.get(&g.out) {
            Some(&k) => first_out + k,
            None => {
                next += 1;
                next - 1
            }
        };
    }
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", c.gates().len(), n_wires);
    let [a, b] = c.inputs();
    if b == 0 {
        let _ = writeln!(s, "1 {a}");
    } else {
        let _ = writeln!(s, "2 {a} {b}");
    }
    let _ = writeln!(s, "1 {}", c.outputs().len());
    s.push('\n');
    for g in c.gates() {
        let (a, b, o) = (map[g.a], map[g.b], map[g.out]);
        let _ = match g.op {
            Op::Xor => writeln!(s, "2 1 {a} {b} {o} XOR"),
            Op::And => writeln!(s, "2 1 {a} {b} {o} AND"),
            Op::Inv => writeln!(s, "1 1 {a} {o} INV"),
            Op::Copy => writeln!(s, "1 1 {a} {o} EQW"),
        };
    }
    s
}
