//! Command-line front end, run configuration and file formats for the
//! `cshape-core` solver.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
