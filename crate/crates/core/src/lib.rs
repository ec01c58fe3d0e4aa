//! Identify IoT devices from the payload bytes of single TCP sessions.
//!
//! The pipeline splits pcap captures into bidirectional TCP sessions, turns
//! each session's payload into a fixed 784-byte fingerprint, trains a small
//! dense classifier on the fingerprints and, for unauthorized-device
//! detection, rejects low-confidence predictions with a tuned threshold.

pub mod capture;
pub mod classify;
pub mod cli;
pub mod dataset;
pub mod fingerprint;
pub mod nn;
pub mod report;
pub mod synth;
