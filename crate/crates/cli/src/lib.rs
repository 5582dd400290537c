//! Front-end plumbing for the key-rate binary: configuration parsing,
//! grid sweeps with CSV and plot-data emission, single-point reports,
//! and a fast selftest.

pub mod config;
pub mod selftest;
pub mod single;
pub mod sweep;
