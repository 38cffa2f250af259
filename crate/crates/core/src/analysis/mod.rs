//! Mixing times and numerical evaluation of the finite-time bounds.

pub mod bounds;
pub mod drift;
pub mod metrics;
pub mod mixing;
pub mod report;
