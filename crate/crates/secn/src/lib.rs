//! File formats and the command-line front end for [`secn_core`].

pub mod checkpoint;
pub mod cli;
pub mod config_file;
pub mod flowviz;
pub mod frames;
pub mod report;
pub mod tenfile;
pub mod trainlog;
