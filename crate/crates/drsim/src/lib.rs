//! Deterministic multi-cluster disaster-recovery simulation with
//! forecast-driven failover scheduling.
//!
//! The crate models a fleet of managed clusters, injects failures,
//! detects them through a polling monitor, compares resources, picks a
//! restore target (by LSTM forecast, current load, seeded random pick or
//! a replayed schedule) and executes restores from a simulated backup
//! store. It also ships the full forecasting stack: cluster-trace
//! ingestion into five-minute utilization slots, min-max scaling, sliding
//! windows, and a from-scratch stacked-LSTM regressor trained with
//! backpropagation through time.

pub mod forecast;
pub mod recovery;
pub mod scenario;
pub mod sim;
pub mod trace;
