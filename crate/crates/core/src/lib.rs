//! Core of a privacy-preserving machine-learning orchestration network.
//!
//! Encrypted *data* (raw datasets, algorithm specs, trained models,
//! predictions) live in a content-addressed [`storage`] that never sees
//! plaintext. Keys are split n-of-n across custodian nodes ([`cryptobox`]).
//! The [`orchestrator`] keeps a signed hash-chained [`ledger`] of every
//! operation, schedules learn/predict tasks and authorizes key release to
//! ephemeral [`compute`] workers. [`valuation`] turns leave-one-out
//! performance into contributivity scores and payment splits. The fat
//! [`client`] encrypts and uploads, and [`simnet`] runs the whole network
//! deterministically with fault injection and privacy instrumentation.

pub mod canonical;
pub mod client;
pub mod clock;
pub mod compute;
pub mod cryptobox;
mod hexser;
pub mod ledger;
pub mod local;
pub mod orchestrator;
pub mod service;
pub mod simnet;
pub mod storage;
pub mod testkit;
pub mod types;
pub mod valuation;

#[cfg(test)]
mod oracle;
