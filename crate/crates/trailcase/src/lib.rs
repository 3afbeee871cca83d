//! An analytics engine that finds slow, multi-stage data-theft campaigns in
//! ordinary network logs.
//!
//! The pipeline reduces flow, DNS, and proxy records to one activity sketch
//! per machine per day, windows those sketches over several weeks, and
//! models each of ten monitored quantities (contact breadth, port usage,
//! reverse-lookup breadth, and per-pair byte movement) against explainable
//! peer and history context. Surprise is measured as an upper-tail
//! probability and composed into per-stage risks — reconnaissance,
//! collection, exfiltration — then machines are ranked by fusing their
//! per-stage ranks, and high-risk machines linked by their anomalous data
//! movements combine into multi-stage cases with day-ordered evidence.
//!
//! - [`ingest`]: schema-driven log parsing and identity standardization
//! - [`aggregate`]: daily per-machine activity reduction and window merging
//! - [`profile`]: windowed modelling tables with gated history and peer stats
//! - [`monitor`]: model training and surprise scoring per quantity
//! - [`campaign`]: stage-risk composition and cross-stage rank fusion
//! - [`link`]: association graph, risk bands, and case assembly
//! - [`pipeline`]: the idempotent daily run gluing the stages together
//! - [`store`]: the on-disk results layout every run reads and writes
//! - [`simgen`]: deterministic synthetic corpora with scripted campaigns
//! - [`report`]: plain-text rendering for the command-line surface

pub mod aggregate;
pub mod campaign;
pub mod config;
pub mod error;
pub mod identity;
pub mod ingest;
pub mod link;
pub mod monitor;
pub mod pipeline;
pub mod profile;
pub mod report;
pub mod simgen;
pub mod store;

pub use error::{EngineError, Result};
