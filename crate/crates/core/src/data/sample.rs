use serde::{Deserialize, Serialize};

use crate::data::pose::{PoseKeypoints, PoseMap};
use crate::data::raster::{ImageRgb, ParsingMap, ParsingMode};
use crate::data::schema::{class, LabelSchema, Resolution, Role};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Fill value for removed (wearing-dependent) pixels.
pub const AGNOSTIC_GRAY: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GarmentKind {
    Top,
    Bottom,
}

/// Part labels of a garment segmentation map.
pub mod part {
    pub const BACKGROUND: u8 = 0;
    /// Torso of a top, hips of a bottom.
    pub const MAIN: u8 = 1;
    /// Sleeves of a top, legs of a bottom.
    pub const SECONDARY: u8 = 2;
}

/// A catalog garment: flat-lay image plus background/main/secondary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct GarmentRecord {
    pub kind: GarmentKind,
    pub image: ImageRgb,
    seg: Vec<u8>,
}

impl GarmentRecord {
    pub fn new(kind: GarmentKind, image: ImageRgb, seg: Vec<u8>) -> Result<Self> {
        let res = image.resolution();
        if seg.len() != res.pixels() {
            return Err(Error::ShapeMismatch(format!(
                "garment segmentation has {} labels, image is {res}",
                seg.len()
            )));
        }
        if let Some(v) = seg.iter().find(|&&v| v > part::SECONDARY) {
            return Err(Error::SchemaMismatch(format!(
                "garment part label {v} is not background/main/secondary"
            )));
        }
        Ok(Self { kind, image, seg })
    }

    /// Stand-in for a missing bottom (dress outfits): white image, all
    /// background.
    pub fn absent(res: Resolution) -> Self {
        Self {
            kind: GarmentKind::Bottom,
            image: ImageRgb::filled(res, [1.0; 3]),
            seg: vec![part::BACKGROUND; res.pixels()],
        }
    }

    pub fn resolution(&self) -> Resolution {
        self.image.resolution()
    }

    pub fn seg(&self) -> &[u8] {
        &self.seg
    }

    /// `[1, 3, H, W]` one-hot segmentation.
    pub fn seg_tensor(&self) -> Tensor<f32> {
        let res = self.resolution();
        let mut data = vec![0.0; 3 * res.pixels()];
        crate::data::raster::one_hot_into(&self.seg, 3, &mut data);
        Tensor::from_vec([1, 3, res.height, res.width], data)
    }
}

/// One fitting-model example with its garments and derived inputs.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    pub id: String,
    pub model_image: ImageRgb,
    pub parsing: ParsingMap,
    pub keypoints: PoseKeypoints,
    pub top: GarmentRecord,
    pub bottom: Option<GarmentRecord>,
    pub agnostic_image: ImageRgb,
    pub agnostic_parsing: ParsingMap,
}

impl SampleRecord {
    pub fn resolution(&self) -> Resolution {
        self.model_image.resolution()
    }

    pub fn pose_map(&self) -> Result<PoseMap> {
        let res = self.resolution();
        crate::data::pose::pose_to_heatmaps(
            &self.keypoints,
            crate::data::pose::default_sigma(res),
            res,
        )
    }

    /// Bottom garment, or the white placeholder for dress outfits.
    pub fn bottom_or_absent(&self) -> GarmentRecord {
        self.bottom
            .clone()
            .unwrap_or_else(|| GarmentRecord::absent(self.resolution()))
    }

    /// Checks shared resolution, parsing normalization and the dress rule.
    pub fn validate(&self) -> Result<()> {
        let res = self.resolution();
        let rasters = [
            self.parsing.resolution(),
            self.top.resolution(),
            self.agnostic_image.resolution(),
            self.agnostic_parsing.resolution(),
        ];
        if let Some(r) = rasters
            .iter()
            .chain(self.bottom.as_ref().map(|b| b.resolution()).iter())
            .find(|&&r| r != res)
        {
            return Err(Error::ShapeMismatch(format!(
                "sample {} mixes resolutions {res} and {r}",
                self.id
            )));
        }
        if let Some(p) = self.parsing.first_unnormalized(1e-5) {
            return Err(Error::ShapeMismatch(format!(
                "sample {}: parsing not normalized at pixel {p}",
                self.id
            )));
        }
        self.keypoints.validate(res)?;
        if self.bottom.is_none() {
            let labels = self.parsing.labels();
            if !covers_hips(&labels, res, self.keypoints.mid_hip_row()) {
                return Err(Error::ShapeMismatch(format!(
                    "sample {} has no bottom but its top does not cover the hips",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Whether top-torso pixels reach the hip row (the dress case).
fn covers_hips(labels: &[u8], res: Resolution, hip_row: f64) -> bool {
    let row = (hip_row.round() as usize).min(res.height - 1);
    labels[row * res.width..(row + 1) * res.width].contains(&class::TOP_TORSO)
}

/// Wearing-agnostic label map: kept roles verbatim, everything else that is
/// not background becomes background.
pub fn agnostic_labels(schema: &LabelSchema, labels: &[u8]) -> Vec<u8> {
    let bg = schema.class_of(Role::Background) as u8;
    labels
        .iter()
        .map(|&l| if schema.role(l as usize).is_kept() { l } else { bg })
        .collect()
}

/// Remove all garment and clothing-dependent body evidence, keeping hair,
/// face, hands and feet.
pub fn make_agnostic(image: &ImageRgb, parsing: &ParsingMap) -> Result<(ImageRgb, ParsingMap)> {
    let res = image.resolution();
    if parsing.resolution() != res {
        return Err(Error::ShapeMismatch(format!(
            "image is {res}, parsing is {}",
            parsing.resolution()
        )));
    }
    if parsing.mode() != ParsingMode::OneHot {
        return Err(Error::ShapeMismatch("make_agnostic needs a one-hot parsing".into()));
    }
    let schema = LabelSchema::standard();
    let labels = parsing.labels();
    let bg = schema.class_of(Role::Background) as u8;
    let mut out_img = image.clone();
    for (p, &l) in labels.iter().enumerate() {
        if l != bg && !schema.role(l as usize).is_kept() {
            out_img.set(p / res.width, p % res.width, [AGNOSTIC_GRAY; 3]);
        }
    }
    let out_parsing = ParsingMap::from_labels(res, &agnostic_labels(&schema, &labels))?;
    Ok((out_img, out_parsing))
}

/// Binary mask of pixels that must be copied verbatim into the final image:
/// the kept roles of the agnostic parsing.
pub fn preserve_mask(agnostic: &ParsingMap) -> Vec<f32> {
    let schema = LabelSchema::standard();
    agnostic
        .labels()
        .iter()
        .map(|&l| if schema.role(l as usize).is_kept() { 1.0 } else { 0.0 })
        .collect()
}
