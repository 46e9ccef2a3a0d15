//! Deterministic ingestion-rate benchmarking for a Kafka-like message broker.
//!
//! The crate simulates the full ingest path of a partitioned commit log —
//! rate-controlled data senders, a batching producer with buffer-memory
//! backpressure, a broker cluster with a calibrated disk/network/CPU resource
//! model — and observes it through a Graphite-compatible metrics pipeline
//! (EWMA one-minute-rate meters, a fixed-interval series store, plaintext
//! protocol, TSV export).
//!
//! Runs execute on a virtual clock by default: a ten-minute scenario at
//! hundreds of thousands of messages per second compresses into a few wall
//! seconds while staying byte-deterministic for a given config and seed.
//!
//! Entry points:
//! - [`bench::parse_config`] / [`bench::execute`] run a scenario end to end.
//! - [`bench::detect_steady`] / [`bench::summarize`] turn series into reports.
//! - The `ingestbench` binary wraps these as `run`, `report` and `export`.

pub mod bench;
pub mod brokersim;
pub mod cli;
pub mod clock;
pub mod domain;
pub mod loadgen;
pub mod metrics;
pub mod producer;
pub mod runtime;

pub use domain::{
    serialized_size, AcksLevel, ProducerProps, Record, ResourceProfile, TimestampType, TopicConfig,
};
