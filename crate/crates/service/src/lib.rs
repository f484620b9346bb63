//! Ingestion service, simulated device, and the `sts` command-line tool.
//!
//! The service keeps training and test trials in separate URL spaces
//! (`/api/v1/train/...`, `/api/v1/test/...`), persists them through an
//! embedded write-ahead store, and streams live readings from the simulated
//! device over server-sent events.

pub mod api;
pub mod cli;
pub mod client;
pub mod config;
pub mod device;
pub mod live;
pub mod store;

pub use api::{router, AppState};
pub use client::Client;
pub use config::Config;
pub use device::Device;
pub use store::Store;
