//! Measure how many resources shared on social media are still on the live
//! web and how many are covered by public web archives.

pub mod canonical;
pub mod clock;
pub mod ingest;
pub mod politeness;
pub mod tagstats;
pub mod transport;
pub mod liveness;
pub mod schedule;
pub mod memento;
pub mod analysis;
pub mod results;
pub mod pipeline;
