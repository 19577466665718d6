//! Simulation and evaluation toolkit for pairing IoT devices through shared
//! physical operations: timing evidence is extracted on both sides and turned
//! into a shared key either by a fuzzy commitment with password-authenticated
//! key exchange or by timed commitments with a trained correlation check.

pub mod codec;
pub mod correlation;
pub mod crypto;
pub mod evidence;
mod hexbytes;
pub mod metrics;
pub mod protocol;
pub mod sensing;
pub mod simnet;
pub mod synthgen;
