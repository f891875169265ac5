//! Run the full try-on pipeline on one synthetic sample and write the
//! intermediates. Uses trained checkpoints when a directory is given,
//! freshly initialized networks otherwise.
//!
//! cargo run --release --example infer -- [ckpt_dir] [out_dir]

use std::path::PathBuf;

use tryon::config::TrainingConfig;
use tryon::data::CompactSample;
use tryon::pipeline::{full_pipeline_infer, write_bundle, Pipeline, TryOnInputs};
use tryon::wearing_guide::shift_hem;

fn main() -> tryon::Result<()> {
    let mut args = std::env::args().skip(1);
    let pipeline = match args.next() {
        Some(dir) => Pipeline::load_dir(&PathBuf::from(dir))?,
        None => Pipeline::initialized(&TrainingConfig::default())?,
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tryon_infer"));

    let s = CompactSample::synthetic(pipeline.res, 99, 1);
    let hem = s.hem()?;
    for (name, delta) in [("tucked", -6), ("default", 0), ("untucked", 6)] {
        let mask = shift_hem(hem, delta).to_mask();
        let result = full_pipeline_infer(&TryOnInputs::from_sample(&s, mask), &pipeline)?;
        let index = write_bundle(&result, &out.join(name))?;
        println!("{name:>9}: hem row {:>2} -> {}", shift_hem(hem, delta).hem_row, index.display());
    }
    Ok(())
}
