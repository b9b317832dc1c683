//! Configuration, run bundles and the end-to-end pipeline behind the `tbs` binary.

pub mod bundle;
pub mod config;
pub mod figures;
pub mod pipeline;
