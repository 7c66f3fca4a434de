//! Decentralized networked actor-critic with resilient (trimmed) consensus.
//!
//! Agents share a global MDP state, act locally, observe private rewards,
//! and agree on a common critic by exchanging parameters over a possibly
//! time-varying graph. Regular agents discard the `F` most extreme received
//! values per coordinate before mixing, which contains the influence of an
//! `F`-local set of adversarial neighbors.

pub mod agent;
pub mod config;
pub mod consensus;
pub mod engine;
pub mod graph;
pub mod mdp;
