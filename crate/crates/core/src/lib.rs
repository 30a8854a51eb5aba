//! Serialization sensitivity toolkit for table retrieval.
//!
//! Renders tables into a family of semantically equivalent serializations,
//! embeds them, measures how far the views of one table drift apart, and
//! trains a small residual adapter that pulls single-view embeddings toward
//! the multi-view centroid without touching the frozen encoder.

pub mod adapter;
pub mod encoder;
pub mod eval;
pub mod format;
pub mod geometry;
pub mod rng;
pub mod serialize;
pub mod store;
pub mod table;
