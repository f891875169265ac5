//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a covariance counts as degenerate.
const DEGENERATE_TOL: f64 = 1e-10;

/// Mean and (unbiased) covariance of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(mean.len(), cov.nrows()));
        }
        Ok(Self { mean, cov })
    }

    pub fn from_features(feats: &[Vec<f64>]) -> Result<Self> {
        let n = feats.len();
        if n < 2 {
            return Err(Error::TooFewSamples(n));
        }
        let d = feats[0].len();
        if let Some(f) = feats.iter().find(|f| f.len() != d) {
            return Err(Error::DimensionMismatch(d, f.len()));
        }
        let mut mean = DVector::zeros(d);
        for f in feats {
            mean += DVector::from_column_slice(f);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for f in feats {
            let c = DVector::from_column_slice(f) - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        cov /= (n - 1) as f64;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fid {
    pub value: f64,
    /// A covariance is (numerically) singular; the value is still defined
    /// but rests on fewer effective dimensions than the features have.
    pub degenerate: bool,
}

fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s)
}

fn is_degenerate(cov: &DMatrix<f64>) -> bool {
    let e = sym_eigen(cov).eigenvalues;
    let max = e.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    e.iter().any(|&v| v <= DEGENERATE_TOL * max.max(f64::MIN_POSITIVE))
}

/// Symmetric square root with negative eigenvalues clipped to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = sym_eigen(m);
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// `‖μa−μb‖² + Tr(Σa + Σb − 2(ΣaΣb)^½)`, with the trace of the product's
/// square root taken as `Tr((Σa^½ Σb Σa^½)^½)`, which has the same
/// eigenvalues and is symmetric.
pub fn fid_from_stats(a: &GaussianStats, b: &GaussianStats) -> Result<Fid> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let diff = &a.mean - &b.mean;
    let root_a = sqrt_psd(&a.cov);
    let inner = &root_a * &b.cov * &root_a;
    let cross: f64 = sym_eigen(&inner).eigenvalues.iter().map(|&v| v.max(0.0).sqrt()).sum();
    let value = diff.norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(Fid {
        value: value.max(0.0),
        degenerate: is_degenerate(&a.cov) || is_degenerate(&b.cov),
    })
}

/// FID between two sets of feature vectors.
pub fn fid(feats_a: &[Vec<f64>], feats_b: &[Vec<f64>]) -> Result<Fid> {
    let a = GaussianStats::from_features(feats_a)?;
    let b = GaussianStats::from_features(feats_b)?;
    fid_from_stats(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn stats(mean: [f64; 2], var: f64) -> GaussianStats {
        GaussianStats::new(DVector::from_column_slice(&mean), DMatrix::identity(2, 2) * var).unwrap()
    }

    fn sample(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let v: f64 = StandardNormal.sample(&mut rng);
                        v
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn analytic_cases() {
        let f = fid_from_stats(&stats([0.0, 0.0], 1.0), &stats([1.0, 0.0], 1.0)).unwrap();
        assert!((f.value - 1.0).abs() < 1e-12);
        let f = fid_from_stats(&stats([0.0, 0.0], 1.0), &stats([0.0, 0.0], 4.0)).unwrap();
        assert!((f.value - 2.0).abs() < 1e-12);
        assert!(!f.degenerate);
    }

    #[test]
    fn identical_sets_and_permutation() {
        let a = sample(50, 1);
        assert!(fid(&a, &a).unwrap().value <= 1e-6);
        let b = sample(60, 2);
        let mut shuffled = b.clone();
        shuffled.reverse();
        shuffled.swap(3, 17);
        let (x, y) = (fid(&a, &b).unwrap().value, fid(&a, &shuffled).unwrap().value);
        assert!((x - y).abs() < 1e-9 * x.max(1.0));
    }

    #[test]
    fn sampled_points_against_true_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                let y: f64 = StandardNormal.sample(&mut rng);
                vec![1.0 + x, y]
            })
            .collect();
        let est = fid_from_stats(&GaussianStats::from_features(&pts).unwrap(), &stats([0.0, 0.0], 1.0)).unwrap();
        assert!((est.value - 1.0).abs() < 0.05, "{}", est.value);
    }

    #[test]
    fn errors_and_degenerate_flag() {
        let a = sample(5, 1);
        assert!(matches!(fid(&a[..1], &a), Err(Error::TooFewSamples(1))));
        let short = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(fid(&a, &short), Err(Error::DimensionMismatch(3, 2))));
        let flat = vec![vec![1.0, 2.0, 3.0]; 4];
        let f = fid(&flat, &a).unwrap();
        assert!(f.degenerate && f.value.is_finite());
    }
}
