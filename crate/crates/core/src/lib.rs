//! Two-party private decision tree evaluation built on shared oblivious
//! selection (SOS).
//!
//! The tree holder (P0) and the feature holder (P1) walk an encoded tree for
//! a public number of iterations. Each step fetches a feature and a node
//! record through SOS, compares under GMW and selects the next index, so
//! neither party learns the path. Three SOS backends are provided: a linear
//! OT-based one and two with online cost independent of the array length,
//! built from a shared PRF or from Paillier encryption.

pub mod bits;
pub mod channel;
pub mod conv;
pub mod dealer;
pub mod dpf;
pub mod error;
pub mod gmw;
pub mod paillier;
pub mod pdte;
pub mod prf;
pub mod sharing;
pub mod sos;
pub mod tree;
pub mod wire;

pub use bits::Bits;
pub use channel::{run_two_party, Endpoint, NetworkModel, Party, Phase, Transcript};
pub use error::{Error, Result};
pub use sharing::{ArithShare, BitShare, MultShare, WordShare};
