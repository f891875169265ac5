//! End-to-end inference: parsing generation, garment warping and image
//! synthesis chained over one set of inputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::TrainingConfig;
use crate::data::io::{write_json, write_label_png, write_rgb_png};
use crate::data::{make_agnostic, preserve_mask, CompactSample, GarmentRecord, ImageRgb, ParsingMap, PoseMap, Resolution};
use crate::error::{Error, Result};
use crate::scwm::{self, ScwmNetwork, TpsMap};
use crate::tom::{self, TomGenerator};
use crate::train::checkpoint_path;
use crate::wearing_guide::{validate_mask, WearingGuideMask};
use crate::wgpgm::{self, WgpgmGenerator};

/// The three trained networks, loaded once and shared by every request.
pub struct Pipeline {
    pub res: Resolution,
    pub wgpgm: WgpgmGenerator,
    pub scwm: ScwmNetwork,
    map: TpsMap,
    pub tom: TomGenerator,
}

impl Pipeline {
    /// Load from the three checkpoint files; they must agree on resolution
    /// and label schema.
    pub fn load(wgpgm_ckpt: &Path, scwm_ckpt: &Path, tom_ckpt: &Path) -> Result<Self> {
        let w = Checkpoint::load_component(wgpgm_ckpt, wgpgm::COMPONENT)?;
        let s = Checkpoint::load_component(scwm_ckpt, scwm::COMPONENT)?;
        let t = Checkpoint::load_component(tom_ckpt, tom::COMPONENT)?;
        Self::from_checkpoints(&w, &s, &t)
    }

    /// Load `wgpgm.ckpt`, `scwm.ckpt` and `tom.ckpt` from one directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::load(
            &checkpoint_path(dir, wgpgm::COMPONENT),
            &checkpoint_path(dir, scwm::COMPONENT),
            &checkpoint_path(dir, tom::COMPONENT),
        )
    }

    /// Freshly initialized (untrained) networks for `cfg`.
    pub fn initialized(cfg: &TrainingConfig) -> Result<Self> {
        let mut w = Checkpoint::new(wgpgm::COMPONENT, cfg);
        w.put_trainable("gen", &WgpgmGenerator::new(&cfg.wgpgm, cfg.seed).store, None);
        let mut s = Checkpoint::new(scwm::COMPONENT, cfg);
        s.put_trainable("net", &ScwmNetwork::new(&cfg.scwm, cfg.resolution, cfg.seed)?.store, None);
        let mut t = Checkpoint::new(tom::COMPONENT, cfg);
        t.put_trainable("gen", &TomGenerator::new(&cfg.tom, cfg.seed).store, None);
        Self::from_checkpoints(&w, &s, &t)
    }

    pub fn from_checkpoints(w: &Checkpoint, s: &Checkpoint, t: &Checkpoint) -> Result<Self> {
        for other in [s, t] {
            if other.schema_hash != w.schema_hash {
                return Err(Error::SchemaMismatch(format!(
                    "{} checkpoint uses another label schema than {}",
                    other.component, w.component
                )));
            }
            if other.config.resolution != w.config.resolution {
                return Err(Error::SchemaMismatch(format!(
                    "{} checkpoint is {}, {} is {}",
                    other.component, other.config.resolution, w.component, w.config.resolution
                )));
            }
        }
        let scwm = ScwmNetwork::from_checkpoint(s)?;
        let map = TpsMap::new(scwm.grid, scwm.res)?;
        Ok(Self {
            res: w.config.resolution,
            wgpgm: WgpgmGenerator::from_checkpoint(w)?,
            scwm,
            map,
            tom: TomGenerator::from_checkpoint(t)?,
        })
    }
}

/// Inputs of one try-on request.
#[derive(Clone, Debug)]
pub struct TryOnInputs {
    pub agnostic_image: ImageRgb,
    pub agnostic_parsing: ParsingMap,
    pub pose: PoseMap,
    pub top: GarmentRecord,
    pub bottom: GarmentRecord,
    pub mask: WearingGuideMask,
}

impl TryOnInputs {
    /// Inputs for a dataset sample dressed in its own garments.
    pub fn from_sample(s: &CompactSample, mask: WearingGuideMask) -> Self {
        Self::with_garments(s, s.top.clone(), s.bottom_or_absent(), mask)
    }

    /// Inputs for a dataset sample dressed in other garments.
    pub fn with_garments(s: &CompactSample, top: GarmentRecord, bottom: GarmentRecord, mask: WearingGuideMask) -> Self {
        Self {
            agnostic_image: s.agnostic_image.clone(),
            agnostic_parsing: s.agnostic_parsing(),
            pose: s.pose_map(),
            top,
            bottom,
            mask,
        }
    }

    /// Inputs built from a dressed model image and its parsing.
    pub fn from_model(
        image: &ImageRgb,
        parsing: &ParsingMap,
        pose: PoseMap,
        top: GarmentRecord,
        bottom: GarmentRecord,
        mask: WearingGuideMask,
    ) -> Result<Self> {
        let (agnostic_image, agnostic_parsing) = make_agnostic(image, parsing)?;
        Ok(Self {
            agnostic_image,
            agnostic_parsing,
            pose,
            top,
            bottom,
            mask,
        })
    }
}

/// Every intermediate of one inference.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub parsing: ParsingMap,
    pub warped_top: ImageRgb,
    pub warped_bottom: ImageRgb,
    pub final_image: ImageRgb,
}

/// Parsing → warps → synthesis → composition.
pub fn full_pipeline_infer(inputs: &TryOnInputs, p: &Pipeline) -> Result<PipelineOutput> {
    let res = inputs.agnostic_image.resolution();
    if res != p.res {
        return Err(Error::ShapeMismatch(format!("inputs are {res}, models expect {}", p.res)));
    }
    validate_mask(&inputs.mask, res)?;
    let prob = wgpgm::wgpgm_forward(
        &inputs.agnostic_parsing,
        &inputs.pose,
        &inputs.top.image,
        &inputs.bottom.image,
        &inputs.mask,
        &p.wgpgm,
    )?;
    let hard = ParsingMap::from_labels(res, &prob.labels())?;
    let (ts, bs) = scwm::parsing_slices(&hard);
    let (tt, tb) = scwm::scwm_forward(&ts, &bs, &inputs.pose, &inputs.top, &inputs.bottom, &p.scwm)?;
    let (wt, _) = scwm::warp_garment(&inputs.top, &p.map.grid_for(&tt)?)?;
    let (wb, _) = scwm::warp_garment(&inputs.bottom, &p.map.grid_for(&tb)?)?;
    let warped_top = ImageRgb::from_tensor(&wt, 0)?;
    let warped_bottom = ImageRgb::from_tensor(&wb, 0)?;
    let out = tom::tom_forward(&inputs.agnostic_image, &inputs.pose, &prob, &warped_top, &warped_bottom, &p.tom)?;
    let preserve = preserve_mask(&inputs.agnostic_parsing);
    let final_image = tom::compose(&inputs.agnostic_image, &preserve, &out, &warped_top, &warped_bottom)?;
    Ok(PipelineOutput {
        parsing: prob,
        warped_top,
        warped_bottom,
        final_image,
    })
}

/// File names of a written bundle, relative to its directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleIndex {
    pub parsing: String,
    pub warped_top: String,
    pub warped_bottom: String,
    #[serde(rename = "final")]
    pub final_image: String,
}

pub const BUNDLE_INDEX: &str = "index.json";

/// Write the intermediates as PNGs plus `index.json`; returns the index path.
pub fn write_bundle(out: &PipelineOutput, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let index = BundleIndex {
        parsing: "parsing.png".into(),
        warped_top: "warped_top.png".into(),
        warped_bottom: "warped_bottom.png".into(),
        final_image: "final.png".into(),
    };
    write_label_png(&dir.join(&index.parsing), out.parsing.resolution(), &out.parsing.labels())?;
    write_rgb_png(&dir.join(&index.warped_top), &out.warped_top)?;
    write_rgb_png(&dir.join(&index.warped_bottom), &out.warped_bottom)?;
    write_rgb_png(&dir.join(&index.final_image), &out.final_image)?;
    let path = dir.join(BUNDLE_INDEX);
    write_json(&path, &index)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::class;
    use crate::wearing_guide::HemMask;

    fn small_cfg() -> TrainingConfig {
        let mut c = TrainingConfig::default();
        c.resolution = Resolution::new(32, 24).unwrap();
        c
    }

    #[test]
    fn outputs_at_working_resolution_and_face_preserved() {
        let cfg = small_cfg();
        let p = Pipeline::initialized(&cfg).unwrap();
        let s = CompactSample::synthetic(cfg.resolution, 1, 1);
        let inputs = TryOnInputs::from_sample(&s, HemMask::new(cfg.resolution, 12).unwrap().to_mask());
        let out = full_pipeline_infer(&inputs, &p).unwrap();
        for r in [
            out.parsing.resolution(),
            out.warped_top.resolution(),
            out.warped_bottom.resolution(),
            out.final_image.resolution(),
        ] {
            assert_eq!(r, cfg.resolution);
        }
        let w = cfg.resolution.width;
        let face: Vec<usize> = (0..cfg.resolution.pixels()).filter(|&i| s.labels[i] == class::FACE).collect();
        assert!(!face.is_empty());
        for i in face {
            assert_eq!(out.final_image.get(i / w, i % w), s.model_image.get(i / w, i % w));
        }
        assert_eq!(out, full_pipeline_infer(&inputs, &p).unwrap());

        let dir = tempfile::tempdir().unwrap();
        let index = write_bundle(&out, dir.path()).unwrap();
        let idx: BundleIndex = crate::data::io::read_json(&index).unwrap();
        assert!(dir.path().join(&idx.final_image).exists());
        let text = fs::read_to_string(&index).unwrap();
        assert!(text.contains("\"final\""));
    }

    #[test]
    fn mismatched_checkpoints_are_rejected() {
        let cfg = small_cfg();
        let mut other = cfg.clone();
        other.resolution = Resolution::new(16, 12).unwrap();
        let mut w = Checkpoint::new(wgpgm::COMPONENT, &cfg);
        w.put_trainable("gen", &WgpgmGenerator::new(&cfg.wgpgm, 0).store, None);
        let mut s = Checkpoint::new(scwm::COMPONENT, &other);
        s.put_trainable("net", &ScwmNetwork::new(&other.scwm, other.resolution, 0).unwrap().store, None);
        let t = Checkpoint::new(tom::COMPONENT, &cfg);
        assert!(matches!(Pipeline::from_checkpoints(&w, &s, &t), Err(Error::SchemaMismatch(_))));
        let s = {
            let mut s = Checkpoint::new(scwm::COMPONENT, &cfg);
            s.put_trainable("net", &ScwmNetwork::new(&cfg.scwm, cfg.resolution, 0).unwrap().store, None);
            s
        };
        assert!(matches!(Pipeline::from_checkpoints(&w, &s, &t), Err(Error::UninitializedModel(_))));
    }
}
