//! Image-quality metrics and the paired/unpaired evaluation harness.

pub mod embed;
pub mod fid;
pub mod parsing;
pub mod ssim;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::io::write_json;
use crate::data::{load_sample, CompactSample, DatasetManifest, ImageRgb, Resolution, Split};
use crate::error::{Error, Result};
use crate::pipeline::{full_pipeline_infer, Pipeline, TryOnInputs};
use crate::wearing_guide::{HemMask, WearingGuideMask};

pub use embed::{feature_distance, perceptual_distance, FeatureEmbedder, RandomConvEmbedder};
pub use fid::{fid, fid_from_stats, Fid, GaussianStats};
pub use parsing::{garment_iou, hem_gap, hem_row_in, mask_violation, top_pixels};
pub use ssim::ssim;

pub const REPORT_FILE: &str = "report.json";
pub const PER_SAMPLE_FILE: &str = "per_sample.csv";
pub const FAILURES_FILE: &str = "failures.json";

/// Where the evaluated images come from.
#[derive(Clone, Copy)]
pub enum Predictor<'a> {
    Pipeline(&'a Pipeline),
    /// Every prediction is the sample's own model image. Paired scores are
    /// then the identity case; unpaired images have no ground truth, so the
    /// model image also stands in for them.
    GroundTruth,
}

impl Predictor<'_> {
    fn predict(&self, s: &CompactSample, mask: WearingGuideMask) -> Result<ImageRgb> {
        match self {
            Predictor::GroundTruth => Ok(s.model_image.clone()),
            Predictor::Pipeline(p) => Ok(full_pipeline_infer(&TryOnInputs::from_sample(s, mask), p)?.final_image),
        }
    }
}

/// Hem used for unpaired samples: the row midway between the hips.
pub fn mid_hip_hem(s: &CompactSample) -> Result<HemMask> {
    let res = s.resolution();
    let row = s.keypoints.mid_hip_row().round().clamp(0.0, (res.height - 1) as f64) as usize;
    HemMask::new(res, row)
}

/// Aggregate scores in the table layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ssim_pair: f64,
    pub lpips_pair: f64,
    pub fid_pair: f64,
    pub fid_unpair: f64,
    pub n_pair: usize,
    pub n_unpair: usize,
    #[serde(with = "res_text")]
    pub resolution: Resolution,
    pub embedder: String,
}

mod res_text {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    use crate::data::Resolution;

    pub fn serialize<S: Serializer>(r: &Resolution, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Resolution, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub ssim: f64,
    pub lpips: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub id: String,
    pub split: Split,
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub pair_scores: Vec<SampleScore>,
    pub failures: Vec<SampleFailure>,
    /// A covariance in either FID was numerically singular.
    pub fid_degenerate: bool,
}

impl Evaluation {
    /// Write `report.json`, `per_sample.csv` and `failures.json`; returns the
    /// report path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report = dir.join(REPORT_FILE);
        write_json(&report, &self.report)?;
        write_json(&dir.join(FAILURES_FILE), &self.failures)?;
        let csv = dir.join(PER_SAMPLE_FILE);
        let mut f = fs::File::create(&csv).map_err(|e| Error::io(&csv, e))?;
        let mut text = String::from("id,ssim,lpips\n");
        for s in &self.pair_scores {
            text.push_str(&format!("{},{},{}\n", s.id, s.ssim, s.lpips));
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&csv, e))?;
        Ok(report)
    }
}

struct Scored {
    score: Option<SampleScore>,
    generated: Vec<f64>,
    real: Option<Vec<f64>>,
}

fn score_pair(pred: Predictor, s: &CompactSample, embedder: &dyn FeatureEmbedder) -> Result<Scored> {
    let mask = s.hem()?.to_mask();
    let out = pred.predict(s, mask)?;
    Ok(Scored {
        score: Some(SampleScore {
            id: s.id.clone(),
            ssim: ssim(&out, &s.model_image)?,
            lpips: perceptual_distance(&out, &s.model_image, embedder)?,
        }),
        generated: embedder.embed(&out),
        real: Some(embedder.embed(&s.model_image)),
    })
}

fn score_unpair(pred: Predictor, s: &CompactSample, embedder: &dyn FeatureEmbedder) -> Result<Scored> {
    let out = pred.predict(s, mid_hip_hem(s)?.to_mask())?;
    Ok(Scored {
        score: None,
        generated: embedder.embed(&out),
        real: None,
    })
}

type Job<'a> = (String, Box<dyn Fn() -> Result<CompactSample> + Send + Sync + 'a>);

fn run_split(
    jobs: Vec<Job<'_>>,
    split: Split,
    parallel: bool,
    score: impl Fn(&CompactSample) -> Result<Scored> + Sync,
) -> (Vec<Scored>, Vec<SampleFailure>) {
    let one = |(id, load): &Job| load().and_then(|s| score(&s)).map_err(|e| (id.clone(), e));
    let results: Vec<_> = if parallel {
        jobs.par_iter().map(one).collect()
    } else {
        jobs.iter().map(one).collect()
    };
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(s) => ok.push(s),
            Err((id, e)) => {
                log::warn!("{split} sample {id} excluded: {e}");
                failed.push(SampleFailure {
                    id,
                    split,
                    code: e.code().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    (ok, failed)
}

fn evaluate_jobs(
    pred: Predictor,
    res: Resolution,
    pair: Vec<Job<'_>>,
    unpair: Vec<Job<'_>>,
    embedder: &dyn FeatureEmbedder,
    parallel: bool,
) -> Result<Evaluation> {
    if let Predictor::Pipeline(p) = pred {
        if p.res != res {
            return Err(Error::SchemaMismatch(format!("models are {}, data is {res}", p.res)));
        }
    }
    let (paired, mut failures) = run_split(pair, Split::TestPair, parallel, |s| score_pair(pred, s, embedder));
    let (unpaired, f2) = run_split(unpair, Split::TestUnpair, parallel, |s| score_unpair(pred, s, embedder));
    failures.extend(f2);

    let pair_scores: Vec<SampleScore> = paired.iter().filter_map(|s| s.score.clone()).collect();
    let real: Vec<Vec<f64>> = paired.iter().filter_map(|s| s.real.clone()).collect();
    let gen_pair: Vec<Vec<f64>> = paired.iter().map(|s| s.generated.clone()).collect();
    let gen_unpair: Vec<Vec<f64>> = unpaired.iter().map(|s| s.generated.clone()).collect();
    let fp = fid(&gen_pair, &real)?;
    let fu = fid(&gen_unpair, &real)?;
    let n = pair_scores.len() as f64;
    let report = MetricsReport {
        ssim_pair: pair_scores.iter().map(|s| s.ssim).sum::<f64>() / n,
        lpips_pair: pair_scores.iter().map(|s| s.lpips).sum::<f64>() / n,
        fid_pair: fp.value,
        fid_unpair: fu.value,
        n_pair: pair_scores.len(),
        n_unpair: gen_unpair.len(),
        resolution: res,
        embedder: embedder.id(),
    };
    Ok(Evaluation {
        report,
        pair_scores,
        failures,
        fid_degenerate: fp.degenerate || fu.degenerate,
    })
}

/// Evaluate in-memory samples. `unpair` holds the same models wearing
/// remixed outfits.
pub fn evaluate_samples(
    pred: Predictor,
    pair: &[CompactSample],
    unpair: &[CompactSample],
    embedder: &dyn FeatureEmbedder,
    parallel: bool,
) -> Result<Evaluation> {
    let res = pair.first().ok_or(Error::EmptyDataset)?.resolution();
    fn jobs(v: &[CompactSample]) -> Vec<Job<'_>> {
        v.iter()
            .map(|s| (s.id.clone(), Box::new(move || Ok(s.clone())) as Box<dyn Fn() -> _ + Send + Sync>))
            .collect()
    }
    evaluate_jobs(pred, res, jobs(pair), jobs(unpair), embedder, parallel)
}

/// Evaluate a paired test manifest and its unpaired counterpart. Samples
/// that fail to load or infer are listed and excluded.
pub fn evaluate_split(
    pred: Predictor,
    pair: &DatasetManifest,
    unpair: &DatasetManifest,
    embedder: &dyn FeatureEmbedder,
    parallel: bool,
) -> Result<Evaluation> {
    if pair.resolution != unpair.resolution || pair.schema.hash() != unpair.schema.hash() {
        return Err(Error::SchemaMismatch("paired and unpaired manifests differ".into()));
    }
    fn jobs(m: &DatasetManifest) -> Vec<Job<'_>> {
        m.samples
            .iter()
            .map(|e| {
                let id = e.id.clone();
                let load = move || load_sample(m, &id).map(CompactSample::from);
                (e.id.clone(), Box::new(load) as Box<dyn Fn() -> _ + Send + Sync>)
            })
            .collect()
    }
    evaluate_jobs(pred, pair.resolution, jobs(pair), jobs(unpair), embedder, parallel)
}
