//! Edge factor: a location-level novelty indicator for scientific corpora.
//!
//! The pipeline matches a controlled vocabulary against titles and abstracts,
//! dates each term by its first appearance, expands papers into
//! (idea category, research area) contributions, flags the newest
//! contributions in each comparison pool, and aggregates normalized scores
//! per location.

pub mod cohort;
pub mod config;
pub mod corpus;
pub mod edgefactor;
pub mod error;
pub mod matcher;
pub mod par;
pub mod pipeline;
pub mod scoring;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
