//! Secure transmission over the K-user MISO broadcast channel with
//! alternating CSIT.
//!
//! The transmitter has `K` antennas and serves `K` single-antenna
//! receivers; receiver `k`'s message must stay hidden from every receiver
//! `j < k`. CSIT alternates between "perfect for everyone" and "delayed for
//! the first receiver, perfect for the rest". Over each pair of slots the
//! scheme zero-forces `2K - 1` data symbols and hides the first receiver's
//! view of the D-slot symbols under artificial noise, so the sum rate grows
//! with pre-log `(2K - 1) / 2` while every leakage term stays bounded.
//!
//! Modules, bottom-up:
//!
//! - [`linalg`]: null spaces, Hermitian log-determinants.
//! - [`channel`]: fading, noise, CSIT schedule and the transmitter's view.
//! - [`precoding`]: zero-forcing beams and stream powers.
//! - [`scheme`]: block signals, receiver outputs, gain tables.
//! - [`analysis`]: exact rates, leakage, slope fits, SEP and power checks.
//! - [`experiment`]: configured sweeps and CSV/JSON output.

pub mod analysis;
pub mod channel;
pub mod experiment;
pub mod linalg;
pub mod precoding;
pub mod scheme;
pub mod seed;
