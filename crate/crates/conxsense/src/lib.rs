//! Trace-driven context profiling, context classification, and context-aware
//! access-control simulation.
//!
//! The pipeline runs in stages: raw GPS/WiFi/Bluetooth traces ([`trace`]) are
//! segmented into dwell episodes ([`staypoints`]), aggregated into
//! contexts-of-interest ([`coi`]), turned into visit/encounter profiles
//! ([`context`]) and per-timestamp feature vectors ([`features`]), classified
//! ([`classifier`]), and finally drive a simulated access-control layer and
//! lockscreen ([`policy`], [`replay`]). The [`scenario`] module generates
//! seeded synthetic traces and [`pipeline`] wires everything together.

pub mod classifier;
pub mod coi;
pub mod context;
pub mod features;
pub mod geo;
pub mod pipeline;
pub mod policy;
pub mod replay;
pub mod scenario;
pub mod serde_util;
pub mod staypoints;
pub mod trace;
