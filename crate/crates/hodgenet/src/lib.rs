//! File formats, the training driver and the command line for
//! `hodgenet-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod exec;
pub mod io;
pub mod train;
