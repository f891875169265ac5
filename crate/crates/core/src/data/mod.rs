//! Raster and annotation types, the synthetic dataset, and dataset I/O.

pub mod compact;
pub mod io;
pub mod manifest;
pub mod pose;
pub mod raster;
pub mod sample;
pub mod schema;
pub mod synth;

pub use compact::{load_all, CompactSample};
pub use manifest::{load_garment, load_sample, make_unpaired_split, DatasetManifest, SampleEntry, Split};
pub use pose::{default_sigma, pose_to_heatmaps, Keypoint, PoseKeypoints, PoseMap};
pub use raster::{ImageRgb, ParsingMap, ParsingMode};
pub use sample::{make_agnostic, preserve_mask, GarmentKind, GarmentRecord, SampleRecord};
pub use schema::{class, LabelSchema, Resolution, Role, NUM_CLASSES, NUM_KEYPOINTS};
pub use synth::{gen_dataset, gen_synthetic_dataset, GenOptions};
