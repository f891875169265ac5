use rayon::prelude::*;

use crate::data::manifest::{load_sample, DatasetManifest};
use crate::data::pose::{default_sigma, pose_to_heatmaps, PoseKeypoints, PoseMap};
use crate::data::raster::{ImageRgb, ParsingMap};
use crate::data::sample::{agnostic_labels, make_agnostic, GarmentRecord, SampleRecord};
use crate::data::schema::{LabelSchema, Resolution};
use crate::error::{Error, Result};
use crate::wearing_guide::{build_wearing_guide_labels, HemMask};

/// In-memory training sample that stores parsings as label bytes rather than
/// per-class planes.
#[derive(Clone, Debug)]
pub struct CompactSample {
    pub id: String,
    pub model_image: ImageRgb,
    pub labels: Vec<u8>,
    pub agnostic_image: ImageRgb,
    pub agnostic_labels: Vec<u8>,
    pub keypoints: PoseKeypoints,
    pub top: GarmentRecord,
    pub bottom: Option<GarmentRecord>,
}

impl From<SampleRecord> for CompactSample {
    fn from(s: SampleRecord) -> Self {
        let labels = s.parsing.labels();
        let agnostic_labels = agnostic_labels(&LabelSchema::standard(), &labels);
        Self {
            id: s.id,
            model_image: s.model_image,
            labels,
            agnostic_image: s.agnostic_image,
            agnostic_labels,
            keypoints: s.keypoints,
            top: s.top,
            bottom: s.bottom,
        }
    }
}

impl CompactSample {
    /// Generate one synthetic sample in memory (same content `gen_dataset`
    /// writes for this seed and index).
    pub fn synthetic(res: Resolution, seed: u64, index: usize) -> Self {
        let s = crate::data::synth::synth_sample(res, seed, index);
        let parsing = ParsingMap::from_labels(res, &s.labels).expect("valid labels");
        let (agnostic_image, _) = make_agnostic(&s.model_image, &parsing).expect("matching rasters");
        let agnostic_labels = agnostic_labels(&LabelSchema::standard(), &s.labels);
        Self {
            id: s.id,
            model_image: s.model_image,
            labels: s.labels,
            agnostic_image,
            agnostic_labels,
            keypoints: s.keypoints,
            top: s.top,
            bottom: s.bottom,
        }
    }

    pub fn resolution(&self) -> Resolution {
        self.model_image.resolution()
    }

    pub fn parsing(&self) -> ParsingMap {
        ParsingMap::from_labels(self.resolution(), &self.labels).expect("labels were validated")
    }

    pub fn agnostic_parsing(&self) -> ParsingMap {
        ParsingMap::from_labels(self.resolution(), &self.agnostic_labels)
            .expect("labels were validated")
    }

    pub fn pose_map(&self) -> PoseMap {
        let res = self.resolution();
        pose_to_heatmaps(&self.keypoints, default_sigma(res), res).expect("keypoints were validated")
    }

    pub fn bottom_or_absent(&self) -> GarmentRecord {
        self.bottom
            .clone()
            .unwrap_or_else(|| GarmentRecord::absent(self.resolution()))
    }

    /// Hem mask derived from the ground-truth parsing.
    pub fn hem(&self) -> Result<HemMask> {
        let res = self.resolution();
        let hem_row = build_wearing_guide_labels(&self.labels, res)?;
        HemMask::new(res, hem_row)
    }
}

/// Load and validate every sample of a manifest, in manifest order.
pub fn load_all(manifest: &DatasetManifest) -> Result<Vec<CompactSample>> {
    if manifest.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    manifest
        .samples
        .par_iter()
        .map(|e| load_sample(manifest, &e.id).map(CompactSample::from))
        .collect()
}
