//! Availability-aware continuous replica placement.
//!
//! Given a current replication scheme, per-server traffic and per-server
//! failure probabilities, the greedy solvers in [`heuristics`] compute a new
//! scheme that lowers network access cost, weighs each new replica by the
//! availability of the server receiving it, and never lowers the
//! availability of the object being replicated.
//!
//! Module map:
//! * [`topology`]: Barabási–Albert server graphs and all-pairs path costs.
//! * [`model`]: catalogs, traffic, the replication matrix and the
//!   nearest-replicator index.
//! * [`costs`]: access cost, implementation cost, availability, benefit.
//! * [`heuristics`]: AAGG, AAGRO and the availability-unaware GG / GRO.
//! * [`workload`]: catalog/traffic generators and failure-trace ingestion.
//! * [`experiment`]: seeded scenario generation, solves, sweeps, reports.

pub mod costs;
pub mod error;
pub mod experiment;
pub mod heuristics;
pub mod model;
pub mod topology;
pub mod workload;

pub use error::{Error, Result};
pub use heuristics::{Action, Algorithm, AvailabilityScope, PlacementResult, SolverConfig};
pub use model::{Instance, Placement, ReplicationMatrix};
