//! Score a pipeline on paired and unpaired synthetic samples with SSIM, the
//! perceptual distance and FID.
//!
//! cargo run --release --example evaluate -- [ckpt_dir]

use std::path::PathBuf;

use tryon::config::TrainingConfig;
use tryon::data::CompactSample;
use tryon::metrics::{evaluate_samples, Predictor, RandomConvEmbedder};
use tryon::pipeline::Pipeline;

fn main() -> tryon::Result<()> {
    let pipeline = match std::env::args().nth(1) {
        Some(dir) => Pipeline::load_dir(&PathBuf::from(dir))?,
        None => Pipeline::initialized(&TrainingConfig::default())?,
    };
    let pair: Vec<CompactSample> = (0..12).map(|i| CompactSample::synthetic(pipeline.res, 5, i)).collect();
    let unpair: Vec<CompactSample> = (0..pair.len())
        .map(|i| {
            let other = &pair[(i + 5) % pair.len()];
            CompactSample {
                top: other.top.clone(),
                bottom: other.bottom.clone(),
                ..pair[i].clone()
            }
        })
        .collect();
    let embedder = RandomConvEmbedder::default();
    for (name, pred) in [("ground truth", Predictor::GroundTruth), ("pipeline", Predictor::Pipeline(&pipeline))] {
        let ev = evaluate_samples(pred, &pair, &unpair, &embedder, true)?;
        let r = &ev.report;
        println!(
            "{name:>12}: ssim {:.4}  lpips {:.4}  fid pair {:.4}  fid unpair {:.4}  failures {}",
            r.ssim_pair,
            r.lpips_pair,
            r.fid_pair,
            r.fid_unpair,
            ev.failures.len()
        );
    }
    Ok(())
}
