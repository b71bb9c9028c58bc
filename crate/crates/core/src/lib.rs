//! Core of a deterministic multi-blockchain simulator for atomic crosschain
//! transactions.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! * [`threshold`]: M-of-N BLS threshold signatures over BLS12-381 with
//!   Feldman-committed dealer key generation and Byzantine-robust share
//!   combination.
//! * [`ledger`]: a simulated single blockchain with lockable contracts,
//!   provisional state overlays and the trial-execution engine that checks
//!   subordinate calls against the signed transaction tree.
//! * [`coordination`]: the coordination contract state machine, public key
//!   registry and block-number timeout.
//! * [`protocol`]: nested transaction construction and signing, multichain
//!   nodes, protocol messages and the event handlers run by every node.
//! * [`engine`]: virtual-time event queue and per-node cost accounting.
//! * [`perf_model`]: the closed-form throughput model.
//! * [`sim`]: scenario builders, fault injection and simulation reports.
//!
//! File formats, JSON/CSV emission and the command line live in the
//! `xchain-sim` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod codec;
pub mod coordination;
pub mod engine;
pub mod ledger;
pub mod message;
pub mod perf_model;
pub mod protocol;
pub mod sim;
pub mod threshold;
pub mod types;

pub use types::{Address, BlockchainId, TxId, Value};
