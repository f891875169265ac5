//! Wearing-guide masks: binary maps of the rows (or arbitrary pixels) where
//! the bottom garment must not appear. Moving the mask's lower edge is the
//! style control: a lower edge means an untucked, longer-looking top.

use serde::{Deserialize, Serialize};

use crate::data::raster::ParsingMap;
use crate::data::schema::{class, Resolution};
use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

/// Binary mask at some resolution. Construction does not check the values;
/// [`validate_mask`] does.
#[derive(Clone, Debug, PartialEq)]
pub struct WearingGuideMask {
    res: Resolution,
    values: Vec<f32>,
}

impl WearingGuideMask {
    pub fn new(res: Resolution, values: Vec<f32>) -> Result<Self> {
        if values.len() != res.pixels() {
            return Err(Error::ShapeMismatch(format!(
                "{} mask values for {res}",
                values.len()
            )));
        }
        Ok(Self { res, values })
    }

    pub fn from_bits(res: Resolution, bits: &[bool]) -> Result<Self> {
        Self::new(res, bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }

    pub fn resolution(&self) -> Resolution {
        self.res
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.values[y * self.res.width + x] == 1.0
    }

    pub fn bits(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v == 1.0).collect()
    }

    /// Row of the lower edge when the mask has hem form.
    pub fn as_hem(&self) -> Option<HemMask> {
        let w = self.res.width;
        let row_value = |y: usize| {
            let row = &self.values[y * w..(y + 1) * w];
            if row.iter().all(|&v| v == 1.0) {
                Some(true)
            } else if row.iter().all(|&v| v == 0.0) {
                Some(false)
            } else {
                None
            }
        };
        let rows: Option<Vec<bool>> = (0..self.res.height).map(row_value).collect();
        let rows = rows?;
        let ones = rows.iter().take_while(|&&b| b).count();
        if ones == 0 || rows[ones..].iter().any(|&b| b) {
            return None;
        }
        Some(HemMask {
            res: self.res,
            hem_row: ones - 1,
        })
    }

    /// `[1, 1, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec([1, 1, self.res.height, self.res.width], self.values.clone())
    }
}

/// Canonical mask: rows `0..=hem_row` all ones, rows below all zeros.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HemMask {
    pub res: Resolution,
    pub hem_row: usize,
}

impl HemMask {
    pub fn new(res: Resolution, hem_row: usize) -> Result<Self> {
        if hem_row >= res.height {
            return Err(Error::DimensionError {
                got_h: hem_row + 1,
                got_w: res.width,
                want_h: res.height,
                want_w: res.width,
            });
        }
        Ok(Self { res, hem_row })
    }

    pub fn to_mask(self) -> WearingGuideMask {
        let w = self.res.width;
        let mut values = vec![0.0; self.res.pixels()];
        values[..(self.hem_row + 1) * w].fill(1.0);
        WearingGuideMask {
            res: self.res,
            values,
        }
    }
}

/// Lowest row containing a top-torso label.
pub fn build_wearing_guide_labels(labels: &[u8], res: Resolution) -> Result<usize> {
    labels
        .iter()
        .rposition(|&l| l == class::TOP_TORSO)
        .map(|p| p / res.width)
        .ok_or(Error::MissingTorso)
}

/// Hem mask whose lower edge is the lowest top-torso row of a one-hot
/// parsing map.
pub fn build_wearing_guide(parsing: &ParsingMap) -> Result<HemMask> {
    let res = parsing.resolution();
    let hem_row = build_wearing_guide_labels(&parsing.labels(), res)?;
    Ok(HemMask { res, hem_row })
}

/// Move the lower edge by `delta_rows`, clamped to the raster.
pub fn shift_hem(mask: HemMask, delta_rows: i64) -> HemMask {
    let max = mask.res.height as i64 - 1;
    HemMask {
        res: mask.res,
        hem_row: (mask.hem_row as i64 + delta_rows).clamp(0, max) as usize,
    }
}

/// Mask whose left half (image columns `< W/2`) ends at `left_row` and right
/// half at `right_row`: a partial tuck.
pub fn partial_tuck(res: Resolution, left_row: usize, right_row: usize) -> WearingGuideMask {
    let half = res.width / 2;
    let mut values = vec![0.0; res.pixels()];
    for y in 0..res.height {
        for x in 0..res.width {
            let edge = if x < half { left_row } else { right_row };
            if y <= edge {
                values[y * res.width + x] = 1.0;
            }
        }
    }
    WearingGuideMask { res, values }
}

/// Accept any binary mask at the working resolution.
pub fn validate_mask(mask: &WearingGuideMask, res: Resolution) -> Result<()> {
    let got = mask.resolution();
    if got != res {
        return Err(Error::DimensionError {
            got_h: got.height,
            got_w: got.width,
            want_h: res.height,
            want_w: res.width,
        });
    }
    if let Some((index, &v)) = mask
        .values
        .iter()
        .enumerate()
        .find(|(_, &v)| v != 0.0 && v != 1.0)
    {
        return Err(Error::NonBinaryError {
            index,
            value: v as f64,
        });
    }
    Ok(())
}

/// Mean over pixels of `|mask ⊙ bottom_prob|`.
pub fn wearing_guide_loss<T: Real>(mask: &[T], bottom_prob: &[T]) -> Result<T> {
    if mask.len() != bottom_prob.len() || mask.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} pixels, bottom probability map {}",
            mask.len(),
            bottom_prob.len()
        )));
    }
    let sum: T = mask.iter().zip(bottom_prob).map(|(&m, &p)| (m * p).abs()).sum();
    Ok(sum / T::from_f64(mask.len() as f64))
}

/// Gradient of [`wearing_guide_loss`] with respect to the probability map,
/// valid for nonnegative probabilities: `mask / (H·W)`.
pub fn wearing_guide_loss_grad<T: Real>(mask: &[T]) -> Vec<T> {
    let n = T::from_f64(mask.len() as f64);
    mask.iter().map(|&m| m / n).collect()
}

/// Wire format shared by the HTTP service and the browser editor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MaskWire {
    Hem {
        hem_row: i64,
    },
    Rle {
        height: usize,
        width: usize,
        runs: Vec<usize>,
    },
}

/// Row-major run lengths of a binary bitmap, starting with the number of
/// leading zeros (possibly 0) and alternating thereafter.
pub fn encode_rle(bits: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0;
    for &b in bits {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode_rle(runs: &[usize], pixels: usize) -> Result<Vec<bool>> {
    let total: usize = runs.iter().sum();
    if total != pixels {
        return Err(Error::ShapeMismatch(format!(
            "run lengths cover {total} pixels, mask has {pixels}"
        )));
    }
    let mut bits = Vec::with_capacity(pixels);
    for (i, &r) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, r));
    }
    Ok(bits)
}

impl MaskWire {
    pub fn from_hem(hem: HemMask) -> Self {
        MaskWire::Hem {
            hem_row: hem.hem_row as i64,
        }
    }

    pub fn from_mask(mask: &WearingGuideMask) -> Self {
        let res = mask.resolution();
        MaskWire::Rle {
            height: res.height,
            width: res.width,
            runs: encode_rle(&mask.bits()),
        }
    }

    /// Expand into a mask; hem rows are interpreted at `res`. The result
    /// still has to pass [`validate_mask`] against the working resolution.
    pub fn to_mask(&self, res: Resolution) -> Result<WearingGuideMask> {
        match self {
            MaskWire::Hem { hem_row } => {
                if *hem_row < 0 || *hem_row as usize >= res.height {
                    return Err(Error::DimensionError {
                        got_h: (*hem_row).max(0) as usize + 1,
                        got_w: res.width,
                        want_h: res.height,
                        want_w: res.width,
                    });
                }
                Ok(HemMask {
                    res,
                    hem_row: *hem_row as usize,
                }
                .to_mask())
            }
            MaskWire::Rle {
                height,
                width,
                runs,
            } => {
                let mres = Resolution {
                    height: *height,
                    width: *width,
                };
                if mres != res {
                    return Err(Error::DimensionError {
                        got_h: *height,
                        got_w: *width,
                        want_h: res.height,
                        want_w: res.width,
                    });
                }
                let bits = decode_rle(runs, height * width)?;
                WearingGuideMask::from_bits(mres, &bits)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(h: usize, w: usize) -> Resolution {
        Resolution {
            height: h,
            width: w,
        }
    }

    #[test]
    fn hem_from_torso_rows() {
        let r = res(8, 4);
        let mut labels = vec![class::BACKGROUND; 32];
        for y in 2..=5 {
            labels[y * 4 + 1] = class::TOP_TORSO;
        }
        let parsing = ParsingMap::from_labels(r, &labels).unwrap();
        let hem = build_wearing_guide(&parsing).unwrap();
        assert_eq!(hem.hem_row, 5);
        let m = hem.to_mask();
        for y in 0..8 {
            for x in 0..4 {
                assert_eq!(m.get(y, x), y <= 5);
            }
        }
        assert_eq!(m.as_hem(), Some(hem));
    }

    #[test]
    fn torso_in_last_row_gives_all_ones() {
        let r = res(8, 4);
        let mut labels = vec![0; 32];
        labels[31] = class::TOP_TORSO;
        let m = build_wearing_guide(&ParsingMap::from_labels(r, &labels).unwrap())
            .unwrap()
            .to_mask();
        assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn missing_torso_is_an_error() {
        let r = res(8, 4);
        let parsing = ParsingMap::from_labels(r, &[class::FACE; 32]).unwrap();
        assert!(matches!(build_wearing_guide(&parsing), Err(Error::MissingTorso)));
    }

    #[test]
    fn shifting_clamps() {
        let r = res(256, 192);
        let m = HemMask { res: r, hem_row: 130 };
        assert_eq!(shift_hem(m, -20).hem_row, 110);
        assert_eq!(shift_hem(m, 0), m);
        let small = HemMask {
            res: res(8, 6),
            hem_row: 5,
        };
        assert_eq!(shift_hem(small, 20).hem_row, 7);
        assert_eq!(shift_hem(small, -20).hem_row, 0);
    }

    #[test]
    fn validation_reports_dimension_and_value_errors() {
        let work = Resolution::DESK;
        assert!(validate_mask(&HemMask { res: work, hem_row: 30 }.to_mask(), work).is_ok());
        let small = HemMask {
            res: res(32, 24),
            hem_row: 3,
        }
        .to_mask();
        assert!(matches!(
            validate_mask(&small, work),
            Err(Error::DimensionError { got_h: 32, got_w: 24, .. })
        ));
        let checker: Vec<bool> = (0..work.pixels()).map(|p| (p / 48 + p % 48) % 2 == 0).collect();
        let m = WearingGuideMask::from_bits(work, &checker).unwrap();
        assert!(validate_mask(&m, work).is_ok());
        assert_eq!(m.as_hem(), None);
        let mut values = vec![0.0; work.pixels()];
        values[7] = 0.5;
        let m = WearingGuideMask::new(work, values).unwrap();
        assert!(matches!(
            validate_mask(&m, work),
            Err(Error::NonBinaryError { index: 7, .. })
        ));
    }

    #[test]
    fn loss_closed_forms() {
        let ones = vec![1.0f64; 4];
        assert_eq!(wearing_guide_loss(&ones, &[0.5; 4]).unwrap(), 0.5);
        let mask = [1.0, 1.0, 0.0, 0.0];
        assert_eq!(wearing_guide_loss(&mask, &[0.0, 0.0, 0.9, 0.3]).unwrap(), 0.0);
        assert!(wearing_guide_loss(&mask, &[0.0; 3]).is_err());
    }

    #[test]
    fn rle_examples() {
        assert_eq!(encode_rle(&[false; 16]), vec![16]);
        assert_eq!(encode_rle(&[true; 16]), vec![0, 16]);
        assert_eq!(encode_rle(&[false, true, true, false]), vec![1, 2, 1]);
        assert_eq!(
            decode_rle(&[1, 2, 1], 4).unwrap(),
            vec![false, true, true, false]
        );
        assert!(decode_rle(&[1, 2], 4).is_err());
    }

    #[test]
    fn wire_format_json() {
        let hem: MaskWire = serde_json::from_str(r#"{"type":"hem","hem_row":12}"#).unwrap();
        assert_eq!(hem, MaskWire::Hem { hem_row: 12 });
        let rle: MaskWire =
            serde_json::from_str(r#"{"type":"rle","height":4,"width":3,"runs":[0,12]}"#).unwrap();
        let m = rle.to_mask(res(4, 3)).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));
        assert!(rle.to_mask(res(8, 6)).is_err());
        assert!(MaskWire::Hem { hem_row: 64 }.to_mask(Resolution::DESK).is_err());
        let back = serde_json::to_string(&MaskWire::from_mask(&m)).unwrap();
        assert_eq!(back, r#"{"type":"rle","height":4,"width":3,"runs":[0,12]}"#);
    }
}
