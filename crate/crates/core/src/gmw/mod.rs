//! Boolean GMW: Beaver-triple AND gates, free XOR, Bristol-fashion circuit
//! loading, and the comparison, MUX and shared-PRF gadgets.

mod bristol;
mod circuit;
mod engine;
mod gadgets;

pub use bristol::{parse_circuit, write_circuit};
pub use circuit::{Builder, Circuit, Gate, GateSchedule, Layer, Op, Wire};
pub use engine::{and_shares, eval_circuit, eval_circuit_simd, lane_input, AndOpen, BooleanTriple, CircuitRun, TripleStream};
pub use gadgets::{
    adder_circuit, keyed_lane_inputs, less_than_circuit, mux_select, secure_less_than, shared_prf_eval,
    RIPPLE_MAX_WIDTH,
};
