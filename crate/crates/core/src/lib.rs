//! Mask-guided virtual try-on for tops and bottoms: parsing generation under
//! a wearing-guide mask, thin-plate-spline garment warping, try-on synthesis,
//! evaluation metrics, and the CLI/HTTP surface.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod scwm;
pub mod service;
pub mod tom;
pub mod train;
pub mod wearing_guide;
pub mod wgpgm;

pub use error::{Error, Result};
