//! Train all three modules for a few steps on in-memory samples with small
//! networks, then reload them as a pipeline.
//!
//! cargo run --release --example train_tiny -- [out_dir]

use std::path::PathBuf;

use tryon::config::TrainingConfig;
use tryon::data::{CompactSample, Resolution};
use tryon::pipeline::Pipeline;
use tryon::{scwm, tom, wgpgm};

fn main() -> tryon::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tryon_tiny"));
    let mut cfg = TrainingConfig {
        resolution: Resolution::new(32, 24)?,
        out_dir: out.clone(),
        ..TrainingConfig::default()
    };
    cfg.wgpgm.base_width = 8;
    cfg.wgpgm.depth = 3;
    cfg.wgpgm.disc_base_width = 8;
    cfg.scwm.base_width = 8;
    cfg.tom.base_width = 8;
    cfg.tom.depth = 3;
    cfg.tom.disc_base_width = 8;
    for o in [&mut cfg.wgpgm.optim, &mut cfg.scwm.optim, &mut cfg.tom.optim] {
        o.max_steps = 10;
    }

    let samples: Vec<CompactSample> = (0..16).map(|i| CompactSample::synthetic(cfg.resolution, 11, i)).collect();
    let w = wgpgm::train_wgpgm_samples(&samples, &cfg, None)?;
    let s = scwm::train_scwm_samples(&samples, &cfg, None, None)?;
    let t = tom::train_tom_samples(&samples, &cfg, None, None)?;
    for p in [&w, &s, &t] {
        println!("wrote {}", p.display());
    }
    let pipeline = Pipeline::load_dir(&out)?;
    println!("pipeline ready at {}", pipeline.res);
    Ok(())
}
