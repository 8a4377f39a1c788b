//! Design space exploration driven by an LLM agent.
//!
//! The crate is organised by subsystem:
//!
//! - [`design_space`]: the `.dse` language, enumeration and sampling.
//! - [`dsdb`]: the design space database, skyline and constrained optimum.
//! - [`evaluator`]: synthetic, replay and gem5/McPAT backends plus the
//!   bounded-concurrency batch dispatcher.
//! - [`agent`]: the ANA/GEN/QA/EXIT state machine around an LLM client.
//! - [`baselines`]: random search and a genetic algorithm.
//! - [`experiment`]: the method × cost range × ablation matrix and reports.

pub mod design_space;
pub mod dsdb;
pub mod evaluator;
pub mod agent;
pub mod baselines;
pub mod experiment;
