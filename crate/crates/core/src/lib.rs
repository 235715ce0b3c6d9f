//! Retractable session contracts.
//!
//! Clients and servers are described by contracts whose output choices may
//! be *retractable*: when an interaction gets stuck, both parties roll back
//! to the last agreement and try a different branch. This crate provides
//!
//! - [`contract`]: terms, actions, histories and configured contracts;
//! - [`parser`]: the concrete syntax and the contract file format;
//! - [`lts`]: the step relations for single contracts and client/server
//!   pairs, plus a simulation driver;
//! - [`compliance`]: the derivation-producing compliance decider;
//! - [`oracle`]: exhaustive state exploration for recursion-free pairs,
//!   used to cross-check the decider;
//! - [`gen`] and [`serial`]: random generation and JSON formats.

pub mod compliance;
pub mod contract;
pub mod gen;
pub mod lts;
pub mod oracle;
pub mod parser;
pub mod serial;

pub use compliance::{check, prove, validate_derivation, Derivation, Hypotheses, Rule, Verdict};
pub use contract::{
    dual_action, head_normal, subterm_closure, unfold, validate, Action, ConfiguredContract,
    Contract, Entry, History, Label, Polarity,
};
pub use lts::{
    contract_steps, is_stuck, pair_steps, run, PairConfig, PairStep, Policy, StepKind, Trace,
};
pub use oracle::{crosscheck, explore, oracle_check, OracleVerdict};
pub use parser::{parse, parse_file, pretty, ParseError};
