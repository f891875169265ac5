//! Training objectives shared by the three networks. Graph forms are generic
//! over precision so they can be gradient-checked in `f64`; the slice forms
//! evaluate the same formulas on plain values.

use crate::data::class;
use crate::error::{Error, Result};
use crate::nn::{lit, Graph, Real, Tensor, Var};

/// Floor applied to probabilities before taking logarithms.
pub const LOG_EPS: f64 = 1e-12;

/// Pixelwise cross-entropy `-mean_pixels Σ_c t·ln p` of a probability map
/// against a (one-hot or soft) target, both `[N, C, H, W]`.
pub fn cross_entropy<T: Real>(g: &mut Graph<T>, prob: Var, target: Var) -> Var {
    let [n, _, h, w] = g.shape(prob);
    let logp = g.log_clamp(prob, LOG_EPS);
    let prod = g.mul(target, logp);
    let total = g.sum(prod);
    g.scale(total, -1.0 / (n * h * w) as f64)
}

/// Per-pixel probability of any bottom class, `[N, 1, H, W]`.
pub fn bottom_probability<T: Real>(g: &mut Graph<T>, prob: Var) -> Var {
    let first = class::BOTTOM[0];
    debug_assert_eq!(class::BOTTOM[1], first + 1);
    let slice = g.slice_channels(prob, first, class::BOTTOM.len());
    g.sum_channels(slice)
}

/// Mean of mask ⊙ bottom probability. Probabilities are nonnegative, so this
/// equals the mean absolute value and its gradient is `mask / pixels`.
pub fn wearing_guide<T: Real>(g: &mut Graph<T>, mask: Var, prob: Var) -> Var {
    let bottom = bottom_probability(g, prob);
    let masked = g.mul(mask, bottom);
    g.mean(masked)
}

/// Least-squares discriminator objective ½·mean((r−1)²) + ½·mean(f²).
pub fn lsgan_d<T: Real>(g: &mut Graph<T>, real: Var, fake: Var) -> Var {
    let r = g.affine(real, 1.0, -1.0);
    let r = g.square(r);
    let r = g.mean(r);
    let f = g.square(fake);
    let f = g.mean(f);
    let s = g.add(r, f);
    g.scale(s, 0.5)
}

/// Least-squares generator objective mean((f−1)²).
pub fn lsgan_g<T: Real>(g: &mut Graph<T>, fake: Var) -> Var {
    let f = g.affine(fake, 1.0, -1.0);
    let f = g.square(f);
    g.mean(f)
}

/// Mean over layers of the mean absolute feature difference. Real features
/// are detached so only the fake branch receives gradients.
pub fn feature_matching<T: Real>(g: &mut Graph<T>, real: &[Var], fake: &[Var]) -> Result<Var> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::LayerCountMismatch {
            real: real.len(),
            fake: fake.len(),
        });
    }
    let mut total: Option<Var> = None;
    for (&r, &f) in real.iter().zip(fake) {
        if g.shape(r) != g.shape(f) {
            return Err(Error::ShapeMismatch(format!(
                "feature shapes {:?} and {:?}",
                g.shape(r),
                g.shape(f)
            )));
        }
        let r = g.detach(r);
        let d = g.sub(f, r);
        let d = g.abs(d);
        let m = g.mean(d);
        total = Some(match total {
            Some(t) => g.add(t, m),
            None => m,
        });
    }
    let total = total.expect("at least one layer");
    Ok(g.scale(total, 1.0 / real.len() as f64))
}

/// Mean absolute difference over all elements.
pub fn l1<T: Real>(g: &mut Graph<T>, a: Var, b: Var) -> Var {
    let d = g.sub(a, b);
    let d = g.abs(d);
    g.mean(d)
}

/// Mean absolute difference restricted to `region` (`[N, 1, H, W]`, values in
/// {0,1}): `Σ region·|a−b| / (C·|region|)`. `count` is the number of region
/// pixels, which must be positive.
pub fn masked_l1<T: Real>(g: &mut Graph<T>, a: Var, b: Var, region: Var, count: f64) -> Var {
    let c = g.shape(a)[1];
    let d = g.sub(a, b);
    let d = g.abs(d);
    let d = g.mul(d, region);
    let s = g.sum(d);
    g.scale(s, 1.0 / (count * c as f64))
}

/// `Σ wᵢ·termᵢ`; zero-weight terms still appear so their gradients vanish
/// exactly rather than being dropped from the tape.
pub fn weighted_sum<T: Real>(g: &mut Graph<T>, terms: &[(f64, Var)]) -> Var {
    let mut total: Option<Var> = None;
    for &(w, v) in terms {
        let t = g.scale(v, w);
        total = Some(match total {
            Some(acc) => g.add(acc, t),
            None => t,
        });
    }
    total.expect("at least one term")
}

/// Scalar LSGAN objectives `(d_loss, g_loss)` over per-patch scores.
pub fn adv_losses_lsgan<T: Real>(real: &[T], fake: &[T]) -> Result<(T, T)> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mean = |v: &[T], f: &dyn Fn(T) -> T| v.iter().map(|&x| f(x)).sum::<T>() / lit(v.len() as f64);
    let half = lit::<T>(0.5);
    let d = half * mean(real, &|x| (x - T::ONE) * (x - T::ONE)) + half * mean(fake, &|x| x * x);
    let g = mean(fake, &|x| (x - T::ONE) * (x - T::ONE));
    Ok((d, g))
}

/// Scalar feature-matching loss for one discriminator: Σ_l mean|a_l−b_l| / L.
pub fn feature_matching_loss<T: Real>(real: &[Tensor<T>], fake: &[Tensor<T>]) -> Result<T> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::LayerCountMismatch {
            real: real.len(),
            fake: fake.len(),
        });
    }
    let mut total = T::ZERO;
    for (r, f) in real.iter().zip(fake) {
        if r.shape() != f.shape() {
            return Err(Error::ShapeMismatch(format!(
                "feature shapes {:?} and {:?}",
                r.shape(),
                f.shape()
            )));
        }
        let s: T = r.data().iter().zip(f.data()).map(|(&a, &b)| (a - b).abs()).sum();
        total += s / lit(r.len() as f64);
    }
    Ok(total / lit(real.len() as f64))
}
