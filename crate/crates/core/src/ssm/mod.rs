//! Selective state-space scan and the bidirectional Mamba block.

pub mod scan;

pub use scan::{
    discretize, linear_scan_parallel, linear_scan_sequential, selective_scan, selective_scan_eval,
    selective_scan_parallel, selective_scan_seq, ScanMode,
};

pub mod block;

pub use block::{Direction, MambaBlock, MambaLayer, SsmCore, SsmDims};
