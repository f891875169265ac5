//! Warp a garment with a thin-plate spline and write before/after PNGs.
//!
//! cargo run --example tps_warp -- [out_dir]

use std::path::PathBuf;

use tryon::data::io::write_rgb_png;
use tryon::data::{CompactSample, ImageRgb, Resolution};
use tryon::scwm::{tps_grid, warp, ControlGrid, TpsParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tryon_tps"));
    std::fs::create_dir_all(&out)?;
    let res = Resolution::DESK;
    let s = CompactSample::synthetic(res, 3, 2);

    // Pull the lower control row outwards and the centre column down.
    let grid = ControlGrid::DEFAULT;
    let values = grid
        .rest_points()
        .iter()
        .flat_map(|&(x, y)| [if y > 0.5 { 0.15 * x as f32 } else { 0.0 }, if x.abs() < 1e-6 { 0.1 } else { 0.0 }])
        .collect();
    let theta = TpsParams::new(grid, values)?;
    let sampling = tps_grid(&theta, grid, res)?;
    let warped = ImageRgb::from_tensor(&warp(&s.top.image.to_tensor(), &sampling)?, 0)?;

    write_rgb_png(&out.join("top.png"), &s.top.image)?;
    write_rgb_png(&out.join("top_warped.png"), &warped)?;
    let moved = s.top.image.data().iter().zip(warped.data()).filter(|(a, b)| (*a - *b).abs() > 1e-3).count();
    println!("{moved} channel values changed; images in {}", out.display());
    Ok(())
}
