//! Numerical findings from randomized controlled trial reports: corpus
//! preparation, zero-shot model extraction, effect sizes and fixed-effect
//! pooling, evaluation against reference annotations, and reporting.

pub mod corpus;
pub mod evaluation;
pub mod extraction;
pub mod report;
pub mod stats;
