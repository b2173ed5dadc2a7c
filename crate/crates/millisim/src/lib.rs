//! System-level simulator of a single-cell 5G downlink with carrier
//! aggregation and millisecond-scale cross-carrier slice scheduling.

pub mod ccm;
pub mod config;
pub mod engine;
pub mod mac;
pub mod metrics;
pub mod phy;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod time;

pub use ccm::PolicyKind;
pub use config::Config;
pub use mac::Qci;
pub use metrics::RunStats;
pub use time::SimTime;
