//! Structural similarity with a Gaussian window over valid positions.

use crate::data::ImageRgb;
use crate::error::{Error, Result};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
/// Dynamic range of the pixel values.
pub const RANGE: f64 = 1.0;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let c = (WINDOW / 2) as f64;
    let mut t = [0.0; WINDOW];
    for (i, v) in t.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = t.iter().sum();
    t.map(|v| v / s)
}

/// Separable valid-mode filtering of an `h×w` plane.
fn filter(plane: &[f64], h: usize, w: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - WINDOW, w + 1 - WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid window positions, averaged over channels.
pub fn ssim(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    let res = a.resolution();
    if b.resolution() != res {
        return Err(Error::ShapeMismatch(format!("images are {res} and {}", b.resolution())));
    }
    let (h, w) = (res.height, res.width);
    if h < WINDOW || w < WINDOW {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            window: WINDOW,
        });
    }
    let taps = gaussian_taps();
    let c1 = (K1 * RANGE).powi(2);
    let c2 = (K2 * RANGE).powi(2);
    let mut total = 0.0;
    for ch in 0..3 {
        let pa: Vec<f64> = a.channel(ch).iter().map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.channel(ch).iter().map(|&v| v as f64).collect();
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
        let mu_a = filter(&pa, h, w, &taps);
        let mu_b = filter(&pb, h, w, &taps);
        let e_aa = filter(&prod(&pa, &pa), h, w, &taps);
        let e_bb = filter(&prod(&pb, &pb), h, w, &taps);
        let e_ab = filter(&prod(&pa, &pb), h, w, &taps);
        let n = mu_a.len();
        let mut sum = 0.0;
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / n as f64;
    }
    Ok(total / 3.0)
}
