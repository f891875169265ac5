//! Feature embedders for the distribution and perceptual metrics, and the
//! perceptual distance itself.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::ImageRgb;
use crate::error::{Error, Result};
use crate::nn::{Graph, Tensor};

/// Deterministic image features. `layers` returns per-layer `[1, C, H, W]`
/// maps; `embed` a fixed-length vector.
pub trait FeatureEmbedder: Send + Sync {
    /// Name and configuration; reports are comparable only within one id.
    fn id(&self) -> String;

    fn layers(&self, img: &ImageRgb) -> Vec<Tensor<f32>>;

    /// Per-channel spatial mean and standard deviation of every layer.
    fn embed(&self, img: &ImageRgb) -> Vec<f64> {
        let mut out = Vec::new();
        for t in self.layers(img) {
            let [_, c, _, _] = t.shape();
            for ch in 0..c {
                let p = t.plane(0, ch);
                let n = p.len() as f64;
                let mean = p.iter().map(|&v| v as f64).sum::<f64>() / n;
                let var = p.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
                out.push(mean);
                out.push(var.sqrt());
            }
        }
        out
    }
}

/// Fixed random convolutional network: 3×3 convolutions with ReLU, the
/// first at full resolution and the rest halving it.
#[derive(Clone, Debug)]
pub struct RandomConvEmbedder {
    seed: u64,
    widths: Vec<usize>,
    weights: Vec<Tensor<f32>>,
}

impl RandomConvEmbedder {
    pub const DEFAULT_SEED: u64 = 2024;
    pub const DEFAULT_WIDTHS: [usize; 3] = [8, 16, 32];

    pub fn new(seed: u64, widths: &[usize]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 3;
        let mut weights = Vec::with_capacity(widths.len());
        for &cout in widths {
            let std = (2.0 / (9 * cin) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let data = (0..cout * cin * 9).map(|_| normal.sample(&mut rng) as f32).collect();
            weights.push(Tensor::from_vec([cout, cin, 3, 3], data));
            cin = cout;
        }
        Self {
            seed,
            widths: widths.to_vec(),
            weights,
        }
    }
}

impl Default for RandomConvEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_SEED, &Self::DEFAULT_WIDTHS)
    }
}

impl FeatureEmbedder for RandomConvEmbedder {
    fn id(&self) -> String {
        let w: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        format!("random-conv[{}]@{}", w.join("-"), self.seed)
    }

    fn layers(&self, img: &ImageRgb) -> Vec<Tensor<f32>> {
        let mut g = Graph::<f32>::inference();
        // Centre the input so the first layer sees signed values.
        let x = g.constant(img.to_tensor().map(|v| 2.0 * v - 1.0));
        let mut x = x;
        let mut out = Vec::with_capacity(self.weights.len());
        for (i, w) in self.weights.iter().enumerate() {
            let wv = g.constant(w.clone());
            let stride = if i == 0 { 1 } else { 2 };
            let y = g.conv2d(x, wv, None, stride, 1);
            x = g.relu(y);
            out.push(g.value(x).clone());
        }
        out
    }
}

/// Unit-normalize the channel vector at every position; all-zero vectors
/// stay zero.
fn normalize(t: &Tensor<f32>) -> Vec<f64> {
    let [_, c, h, w] = t.shape();
    let hw = h * w;
    let mut out = vec![0.0; c * hw];
    for p in 0..hw {
        let norm = (0..c).map(|ch| (t.data()[ch * hw + p] as f64).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for ch in 0..c {
                out[ch * hw + p] = t.data()[ch * hw + p] as f64 / norm;
            }
        }
    }
    out
}

/// Perceptual distance between per-layer feature maps: the mean over layers
/// of the mean squared difference of unit-normalized features.
pub fn feature_distance(a: &[Tensor<f32>], b: &[Tensor<f32>]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::LayerCountMismatch {
            real: a.len(),
            fake: b.len(),
        });
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch(format!("feature shapes {:?} and {:?}", x.shape(), y.shape())));
        }
        let (nx, ny) = (normalize(x), normalize(y));
        total += nx.iter().zip(&ny).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / nx.len() as f64;
    }
    Ok(total / a.len() as f64)
}

pub fn perceptual_distance(a: &ImageRgb, b: &ImageRgb, embedder: &dyn FeatureEmbedder) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::ShapeMismatch(format!("images are {} and {}", a.resolution(), b.resolution())));
    }
    feature_distance(&embedder.layers(a), &embedder.layers(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Resolution;

    /// One layer, two positions, features set by the image's first pixels.
    struct Toy;

    impl FeatureEmbedder for Toy {
        fn id(&self) -> String {
            "toy".into()
        }

        fn layers(&self, img: &ImageRgb) -> Vec<Tensor<f32>> {
            let [r0, g0, _] = img.get(0, 0);
            let [r1, g1, _] = img.get(0, 1);
            vec![Tensor::from_vec([1, 2, 1, 2], vec![r0, r1, g0, g1])]
        }
    }

    fn res() -> Resolution {
        Resolution::new(16, 12).unwrap()
    }

    fn img(seed: u32) -> ImageRgb {
        ImageRgb::from_fn(res(), |y, x| {
            let v = ((y * 12 + x) as u32).wrapping_mul(2654435761).wrapping_add(seed.wrapping_mul(40503)) % 997;
            [v as f32 / 997.0, (v * 5 % 997) as f32 / 997.0, (v * 11 % 997) as f32 / 997.0]
        })
    }

    #[test]
    fn toy_embedder_hand_computation() {
        let mut a = ImageRgb::filled(res(), [0.0; 3]);
        a.set(0, 0, [1.0, 0.0, 0.0]);
        a.set(0, 1, [0.6, 0.8, 0.0]);
        let mut b = ImageRgb::filled(res(), [0.0; 3]);
        b.set(0, 0, [0.0, 2.0, 0.0]);
        b.set(0, 1, [3.0, 4.0, 0.0]);
        // Position 0: (1,0) vs (0,1) → squared diff 2. Position 1: (.6,.8)
        // vs (.6,.8) → 0. Mean over 4 elements: 0.5.
        assert!((perceptual_distance(&a, &b, &Toy).unwrap() - 0.5).abs() < 1e-7);
    }

    #[test]
    fn pseudo_metric_properties() {
        let e = RandomConvEmbedder::default();
        for s in 0..5 {
            let (a, b) = (img(s), img(s + 100));
            assert_eq!(perceptual_distance(&a, &a, &e).unwrap(), 0.0);
            let (x, y) = (perceptual_distance(&a, &b, &e).unwrap(), perceptual_distance(&b, &a, &e).unwrap());
            assert!(x > 0.0 && (x - y).abs() < 1e-7);
        }
        let small = ImageRgb::filled(Resolution::new(8, 6).unwrap(), [0.5; 3]);
        assert!(matches!(perceptual_distance(&small, &img(0), &e), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn embedder_is_deterministic_with_fixed_size() {
        let e = RandomConvEmbedder::default();
        let v = e.embed(&img(1));
        assert_eq!(v.len(), 2 * (8 + 16 + 32));
        assert_eq!(v, RandomConvEmbedder::default().embed(&img(1)));
        assert_ne!(v, RandomConvEmbedder::new(1, &[8, 16, 32]).embed(&img(1)));
        assert_eq!(e.id(), "random-conv[8-16-32]@2024");
    }
}
