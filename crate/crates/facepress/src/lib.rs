//! Std companion to `facepress-core`: codec bindings, file formats,
//! plugins, reports and the run pipeline.

pub mod codecs;
pub mod config;
pub mod io;
pub mod j2k;
pub mod ladder;
pub mod pipeline;
pub mod plugins;
pub mod svg;
pub mod tables;
