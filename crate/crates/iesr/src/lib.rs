//! Text-to-SQL reasoning pipeline with an evaluation harness.
//!
//! The pipeline has three stages:
//!
//! 1. **Understanding** ([`understand`]) — extract a latent semantic state
//!    (intent, entities, relations, numbers, units, field patterns) from the
//!    question, then filter and score relation hypotheses against a rule base
//!    of entity/unit/equation constraints.
//! 2. **Schema linking** ([`schema`]) — serialize the database schema in an
//!    annotated text format and compress it to high-salience tables and
//!    columns with minhash LSH plus semantic ranking.
//! 3. **Search and selection** ([`search`], [`select`]) — Monte Carlo tree
//!    search over six reasoning actions with an execution-agreement terminal
//!    reward, followed by masking-and-completion consistency probes and
//!    composite scoring to pick the final SQL.
//!
//! [`exec`] provides sandboxed read-only SQLite execution and the normalized
//! result comparison every stage shares; [`gateway`] provides uniform access
//! to the three model roles with a deterministic scripted mock; [`harness`]
//! wires everything behind the `iesr` CLI and computes execution-accuracy
//! reports, perturbed databases, and cost ledgers.

pub mod exec;
pub mod gateway;
pub mod model;
pub mod understand;
