//! Scores for generated parsing maps: mask compliance, garment overlap and
//! the hem position a parsing expresses.

use std::ops::Range;

use crate::data::{class, ParsingMap, Resolution};
use crate::error::Result;
use crate::wearing_guide::{wearing_guide_loss, WearingGuideMask};

/// Mean over pixels of mask ⊙ bottom probability.
pub fn mask_violation(mask: &WearingGuideMask, parsing: &ParsingMap) -> Result<f64> {
    let bottom = parsing.sum_classes(&class::BOTTOM);
    Ok(wearing_guide_loss(mask.values(), &bottom)? as f64)
}

/// Mean IoU over the garment classes present in either map; `None` when no
/// garment class appears at all.
pub fn garment_iou(pred: &[u8], truth: &[u8]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for &c in &class::GARMENT {
        let c = c as u8;
        let (mut inter, mut union) = (0usize, 0usize);
        for (&p, &t) in pred.iter().zip(truth) {
            let (a, b) = (p == c, t == c);
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union > 0 {
            sum += inter as f64 / union as f64;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Pixels labelled as any part of the top.
pub fn top_pixels(labels: &[u8]) -> usize {
    labels.iter().filter(|&&l| class::TOP.contains(&(l as usize))).count()
}

/// Boundary row of the top within `cols`: the median over columns of each
/// column's lowest top-torso row, ignoring columns without torso.
pub fn hem_row_in(labels: &[u8], res: Resolution, cols: Range<usize>) -> Option<usize> {
    let mut rows: Vec<usize> = cols
        .filter_map(|x| (0..res.height).rev().find(|&y| labels[y * res.width + x] == class::TOP_TORSO))
        .collect();
    if rows.is_empty() {
        return None;
    }
    rows.sort_unstable();
    Some(rows[rows.len() / 2])
}

/// Row distance between the hems of the left and right image halves.
pub fn hem_gap(labels: &[u8], res: Resolution) -> Option<usize> {
    let half = res.width / 2;
    let l = hem_row_in(labels, res, 0..half)?;
    let r = hem_row_in(labels, res, half..res.width)?;
    Some(l.abs_diff(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wearing_guide::HemMask;

    const T: u8 = class::TOP_TORSO;
    const B: u8 = class::BOTTOM_HIPS;

    #[test]
    fn violation_counts_bottom_above_hem() {
        let res = Resolution::new(4, 3).unwrap();
        let mut labels = vec![0u8; 12];
        labels[3..6].fill(B);
        let p = ParsingMap::from_labels(res, &labels).unwrap();
        let hem0 = HemMask::new(res, 0).unwrap().to_mask();
        assert_eq!(mask_violation(&hem0, &p).unwrap(), 0.0);
        let hem1 = HemMask::new(res, 1).unwrap().to_mask();
        assert!((mask_violation(&hem1, &p).unwrap() - 3.0 / 12.0).abs() < 1e-7);
    }

    #[test]
    fn iou_by_hand() {
        let truth = [T, T, B, B, 0, 0];
        let pred = [T, B, B, B, 0, 0];
        // top: 1/2, bottom: 2/3.
        let want = (0.5 + 2.0 / 3.0) / 2.0;
        assert!((garment_iou(&pred, &truth).unwrap() - want).abs() < 1e-12);
        assert_eq!(garment_iou(&truth, &truth), Some(1.0));
        assert_eq!(garment_iou(&[0, 0], &[0, 0]), None);
    }

    #[test]
    fn hems_per_half() {
        let res = Resolution::new(8, 6).unwrap();
        let mut labels = vec![0u8; 48];
        for y in 0..3 {
            labels[y * 6..y * 6 + 3].fill(T);
        }
        for y in 0..6 {
            labels[y * 6 + 3..y * 6 + 6].fill(T);
        }
        assert_eq!(hem_row_in(&labels, res, 0..3), Some(2));
        assert_eq!(hem_row_in(&labels, res, 3..6), Some(5));
        assert_eq!(hem_gap(&labels, res), Some(3));
        assert_eq!(top_pixels(&labels), 27);
        assert_eq!(hem_gap(&[0; 48], res), None);
        // One stray column does not move the median.
        labels[7 * 6] = T;
        assert_eq!(hem_row_in(&labels, res, 0..3), Some(2));
    }
}
