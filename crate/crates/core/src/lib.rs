//! I/O complexity laboratory for attention: a two-level memory simulator,
//! instrumented attention kernels, red-blue pebbling tools, finite-field
//! code constructions, and the compression-counting experiments built on them.

pub mod compression;
pub mod dense;
pub mod experiments;
pub mod fields;
pub mod kernels;
pub mod memory;
pub mod pebbling;
