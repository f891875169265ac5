//! Generate a small synthetic training set and a paired test split.
//!
//! cargo run --example gen_data -- [out_dir]

use std::path::PathBuf;

use tryon::data::{gen_dataset, load_sample, make_unpaired_split, GenOptions, Resolution, Split};

fn main() -> tryon::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tryon_gen_data"));
    let train = gen_dataset(
        &GenOptions {
            count: 16,
            resolution: Resolution::DESK,
            seed: 1,
            split: Split::Train,
        },
        &out.join("train"),
    )?;
    let test = gen_dataset(
        &GenOptions {
            count: 8,
            resolution: Resolution::DESK,
            seed: 2,
            split: Split::TestPair,
        },
        &out.join("test"),
    )?;
    let unpair = make_unpaired_split(&test, 3)?;
    unpair.save(tryon::data::manifest::UNPAIR_MANIFEST_FILE)?;

    let dresses = train.samples.iter().filter(|e| e.bottom_id.is_none()).count();
    println!("train: {} samples ({dresses} dresses) in {}", train.len(), train.root.display());
    println!("test:  {} paired, {} unpaired in {}", test.len(), unpair.len(), test.root.display());
    let s = load_sample(&train, &train.samples[1].id)?;
    println!("sample {}: {} parsing, wears a bottom: {}", s.id, s.parsing.resolution(), s.bottom.is_some());
    Ok(())
}
