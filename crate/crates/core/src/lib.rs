//! Supply-chain financial digital twin: a permissioned hash-chained ledger, a
//! supply-chain-finance contract engine, financial health monitoring, a knowledge
//! graph and a deterministic scenario simulator.

pub mod canonical;
pub mod config;
pub mod contracts;
pub mod crypto;
pub mod health;
pub mod ids;
pub mod indices;
pub mod knowledge;
pub mod ledger;
pub mod platform;
pub mod rational;
pub mod simulator;
pub mod store;
