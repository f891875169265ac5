use crate::data::schema::{Resolution, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Planar RGB image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb {
    res: Resolution,
    data: Vec<f32>,
}

impl ImageRgb {
    pub fn new(res: Resolution, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * res.pixels() {
            return Err(Error::ShapeMismatch(format!(
                "image data has {} values, {res} RGB needs {}",
                data.len(),
                3 * res.pixels()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ShapeMismatch(format!("image intensity {v} outside [0, 1]")));
        }
        Ok(Self { res, data })
    }

    pub fn filled(res: Resolution, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * res.pixels());
        for c in rgb {
            data.extend(std::iter::repeat_n(c, res.pixels()));
        }
        Self { res, data }
    }

    pub fn from_fn(res: Resolution, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut img = Self::filled(res, [0.0; 3]);
        for y in 0..res.height {
            for x in 0..res.width {
                img.set(y, x, f(y, x));
            }
        }
        img
    }

    /// Interleaved 8-bit RGB, as decoded from PNG.
    pub fn from_rgb8(res: Resolution, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 3 * res.pixels() {
            return Err(Error::ShapeMismatch(format!(
                "{} bytes for a {res} RGB image",
                bytes.len()
            )));
        }
        let hw = res.pixels();
        let mut data = vec![0.0; 3 * hw];
        for (p, px) in bytes.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * hw + p] = px[c] as f32 / 255.0;
            }
        }
        Ok(Self { res, data })
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        let hw = self.res.pixels();
        let mut out = Vec::with_capacity(3 * hw);
        for p in 0..hw {
            for c in 0..3 {
                out.push((self.data[c * hw + p] * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }

    #[inline]
    pub fn resolution(&self) -> Resolution {
        self.res
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let hw = self.res.pixels();
        &self.data[c * hw..(c + 1) * hw]
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [f32; 3] {
        let hw = self.res.pixels();
        let p = y * self.res.width + x;
        [self.data[p], self.data[hw + p], self.data[2 * hw + p]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let hw = self.res.pixels();
        let p = y * self.res.width + x;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[c * hw + p] = v;
        }
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec([1, 3, self.res.height, self.res.width], self.data.clone())
    }

    /// Sample `n` of a `[N, 3, H, W]` tensor, clamped into `[0, 1]`.
    pub fn from_tensor(t: &Tensor<f32>, n: usize) -> Result<Self> {
        let [_, c, h, w] = t.shape();
        if c != 3 {
            return Err(Error::ShapeMismatch(format!("expected 3 channels, found {c}")));
        }
        let res = Resolution { height: h, width: w };
        let data = t.sample(n).iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { res, data })
    }
}

/// Whether a parsing map holds hard labels or soft class probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParsingMode {
    OneHot,
    Probability,
}

/// Per-pixel distribution over the 17 parsing classes, stored as planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsingMap {
    res: Resolution,
    values: Vec<f32>,
    mode: ParsingMode,
}

impl ParsingMap {
    pub fn from_labels(res: Resolution, labels: &[u8]) -> Result<Self> {
        if labels.len() != res.pixels() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {res} parsing map",
                labels.len()
            )));
        }
        let hw = res.pixels();
        let mut values = vec![0.0; NUM_CLASSES * hw];
        for (p, &l) in labels.iter().enumerate() {
            if l as usize >= NUM_CLASSES {
                return Err(Error::SchemaMismatch(format!(
                    "label index {l} at pixel {p} exceeds the {NUM_CLASSES}-class schema"
                )));
            }
            values[l as usize * hw + p] = 1.0;
        }
        Ok(Self {
            res,
            values,
            mode: ParsingMode::OneHot,
        })
    }

    /// Soft map from 17 probability planes; rejects unnormalized input.
    pub fn from_probabilities(res: Resolution, values: Vec<f32>) -> Result<Self> {
        if values.len() != NUM_CLASSES * res.pixels() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a 17-class {res} parsing map",
                values.len()
            )));
        }
        let map = Self {
            res,
            values,
            mode: ParsingMode::Probability,
        };
        if let Some(p) = map.first_unnormalized(1e-5) {
            return Err(Error::ShapeMismatch(format!(
                "class weights at pixel {p} do not sum to 1"
            )));
        }
        Ok(map)
    }

    /// Sample `n` of a `[N, 17, H, W]` probability tensor.
    pub fn from_tensor(t: &Tensor<f32>, n: usize) -> Result<Self> {
        let [_, c, h, w] = t.shape();
        if c != NUM_CLASSES {
            return Err(Error::SchemaMismatch(format!(
                "parsing tensor has {c} channels, schema has {NUM_CLASSES}"
            )));
        }
        Self::from_probabilities(Resolution { height: h, width: w }, t.sample(n).to_vec())
    }

    #[inline]
    pub fn resolution(&self) -> Resolution {
        self.res
    }

    #[inline]
    pub fn mode(&self) -> ParsingMode {
        self.mode
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let hw = self.res.pixels();
        &self.values[c * hw..(c + 1) * hw]
    }

    #[inline]
    pub fn weight(&self, class: usize, y: usize, x: usize) -> f32 {
        self.values[class * self.res.pixels() + y * self.res.width + x]
    }

    /// Hard labels; ties go to the lowest class index.
    pub fn labels(&self) -> Vec<u8> {
        let hw = self.res.pixels();
        (0..hw)
            .map(|p| {
                let mut best = 0;
                for c in 1..NUM_CLASSES {
                    if self.values[c * hw + p] > self.values[best * hw + p] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }

    /// Per-pixel sum of the given class planes.
    pub fn sum_classes(&self, classes: &[usize]) -> Vec<f32> {
        let hw = self.res.pixels();
        let mut out = vec![0.0; hw];
        for &c in classes {
            for (o, v) in out.iter_mut().zip(&self.values[c * hw..(c + 1) * hw]) {
                *o += v;
            }
        }
        out
    }

    /// First pixel whose weights are not a distribution (or, in one-hot
    /// mode, not exactly one-hot).
    pub fn first_unnormalized(&self, tol: f64) -> Option<usize> {
        let hw = self.res.pixels();
        (0..hw).find(|&p| {
            let mut sum = 0.0f64;
            let mut ones = 0;
            for c in 0..NUM_CLASSES {
                let v = self.values[c * hw + p];
                if v < 0.0 || !v.is_finite() {
                    return true;
                }
                sum += v as f64;
                if v == 1.0 {
                    ones += 1;
                }
            }
            (sum - 1.0).abs() > tol || (self.mode == ParsingMode::OneHot && ones != 1)
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.first_unnormalized(1e-5).is_none()
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(
            [1, NUM_CLASSES, self.res.height, self.res.width],
            self.values.clone(),
        )
    }
}

/// One-hot planes for a label map, written into `dst` (`classes` planes).
pub fn one_hot_into(labels: &[u8], classes: usize, dst: &mut [f32]) {
    let hw = labels.len();
    dst.fill(0.0);
    for (p, &l) in labels.iter().enumerate() {
        dst[l as usize * hw + p] = 1.0;
    }
    debug_assert_eq!(dst.len(), classes * hw);
}

#[cfg(test)]
mod tests {
    use super::*;

    const RES: Resolution = Resolution {
        height: 8,
        width: 6,
    };

    #[test]
    fn rgb8_round_trip_is_exact() {
        let bytes: Vec<u8> = (0..3 * RES.pixels()).map(|i| (i * 37 % 256) as u8).collect();
        let img = ImageRgb::from_rgb8(RES, &bytes).unwrap();
        assert_eq!(img.to_rgb8(), bytes);
    }

    #[test]
    fn image_rejects_out_of_range_values() {
        let mut data = vec![0.5; 3 * RES.pixels()];
        data[4] = 1.5;
        assert!(ImageRgb::new(RES, data).is_err());
        assert!(ImageRgb::new(RES, vec![0.5; 3]).is_err());
    }

    #[test]
    fn labels_round_trip_and_normalize() {
        let labels: Vec<u8> = (0..RES.pixels()).map(|i| (i % 17) as u8).collect();
        let map = ParsingMap::from_labels(RES, &labels).unwrap();
        assert_eq!(map.mode(), ParsingMode::OneHot);
        assert!(map.is_normalized());
        assert_eq!(map.labels(), labels);
    }

    #[test]
    fn eighteenth_label_is_a_schema_error() {
        let mut labels = vec![0u8; RES.pixels()];
        labels[3] = 17;
        assert!(matches!(
            ParsingMap::from_labels(RES, &labels),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn argmax_ties_pick_lowest_class() {
        let hw = RES.pixels();
        let mut values = vec![0.0; NUM_CLASSES * hw];
        for p in 0..hw {
            values[3 * hw + p] = 0.5;
            values[9 * hw + p] = 0.5;
        }
        let map = ParsingMap::from_probabilities(RES, values).unwrap();
        assert!(map.labels().iter().all(|&l| l == 3));
    }

    #[test]
    fn probability_maps_must_sum_to_one() {
        let values = vec![0.1; NUM_CLASSES * RES.pixels()];
        assert!(ParsingMap::from_probabilities(RES, values).is_err());
    }
}
