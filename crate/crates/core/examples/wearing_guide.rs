//! Build the default hem mask from a parsing, edit it, and encode it for the
//! HTTP API.
//!
//! cargo run --example wearing_guide

use tryon::data::{CompactSample, Resolution};
use tryon::wearing_guide::{build_wearing_guide, partial_tuck, shift_hem, MaskWire};

fn draw(mask: &tryon::wearing_guide::WearingGuideMask) {
    let res = mask.resolution();
    for y in (0..res.height).step_by(4) {
        let row: String = (0..res.width).step_by(2).map(|x| if mask.get(y, x) { '#' } else { '.' }).collect();
        println!("  {row}");
    }
}

fn main() -> tryon::Result<()> {
    let s = CompactSample::synthetic(Resolution::DESK, 7, 1);
    let hem = build_wearing_guide(&s.parsing())?;
    println!("default hem row {} of {}", hem.hem_row, hem.res.height);

    let longer = shift_hem(hem, 8);
    println!("shifted hem row {}", longer.hem_row);
    draw(&longer.to_mask());

    let tuck = partial_tuck(hem.res, hem.hem_row - 6, hem.hem_row + 6);
    println!("partial tuck, left {} / right {}", hem.hem_row - 6, hem.hem_row + 6);
    draw(&tuck);

    println!("wire (hem): {}", serde_json::to_string(&MaskWire::from_hem(hem)).unwrap());
    let wire = MaskWire::from_mask(&tuck);
    let text = serde_json::to_string(&wire).unwrap();
    println!("wire (rle): {} bytes", text.len());
    let back: MaskWire = serde_json::from_str(&text).unwrap();
    assert_eq!(back.to_mask(hem.res)?, tuck);
    Ok(())
}
