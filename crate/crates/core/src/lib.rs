//! Private message transmission over multipath channels.
//!
//! A sender and receiver each touch a bounded number of `n` parallel paths per
//! interval while a passive eavesdropper reads up to `t_e` of them. The crate
//! provides the field and secret-sharing primitives, a seeded simulator of the
//! multipath setting, the one- and two-round transmission schemes, and
//! closed-form rate and capacity bounds.

pub mod analysis;
pub mod cli;
pub mod field;
pub mod paths;
pub mod protocols;
pub mod setting;
pub mod sss;
