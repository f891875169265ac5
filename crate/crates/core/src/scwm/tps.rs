//! Thin-plate-spline sampling grids and bilinear warping.

use nalgebra::DMatrix;

use crate::data::Resolution;
use crate::error::{Error, Result};
use crate::nn::{lit, Graph, Real, Tensor, Var};

/// Regular lattice of control points spanning `[-1, 1]²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControlGrid {
    pub rows: usize,
    pub cols: usize,
}

impl ControlGrid {
    pub const DEFAULT: ControlGrid = ControlGrid { rows: 5, cols: 5 };

    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::SingularSystem(format!(
                "a {rows}x{cols} control grid cannot carry an affine map"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rest positions `(x, y)` in row-major order.
    pub fn rest_points(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(self.len());
        for r in 0..self.rows {
            for c in 0..self.cols {
                pts.push((
                    -1.0 + 2.0 * c as f64 / (self.cols - 1) as f64,
                    -1.0 + 2.0 * r as f64 / (self.rows - 1) as f64,
                ));
            }
        }
        pts
    }
}

/// Per-control-point displacements `(dx, dy)` in normalized coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TpsParams {
    pub grid: ControlGrid,
    /// Interleaved `dx0, dy0, dx1, dy1, ...`, length `2·rows·cols`.
    pub values: Vec<f32>,
}

impl TpsParams {
    pub fn zeros(grid: ControlGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; 2 * grid.len()],
        }
    }

    pub fn new(grid: ControlGrid, values: Vec<f32>) -> Result<Self> {
        if values.len() != 2 * grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} displacement values for a {}x{} grid",
                values.len(),
                grid.rows,
                grid.cols
            )));
        }
        Ok(Self { grid, values })
    }

    /// From `[dx.., dy..]` planar order (the network's output layout).
    pub fn from_planar(grid: ControlGrid, planar: &[f32]) -> Result<Self> {
        let k = grid.len();
        if planar.len() != 2 * k {
            return Err(Error::ShapeMismatch(format!("{} planar values, expected {}", planar.len(), 2 * k)));
        }
        let values = (0..k).flat_map(|i| [planar[i], planar[k + i]]).collect();
        Ok(Self { grid, values })
    }

    pub fn to_planar(&self) -> Vec<f32> {
        let k = self.grid.len();
        (0..2 * k)
            .map(|j| if j < k { self.values[2 * j] } else { self.values[2 * (j - k) + 1] })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Source coordinate for every output pixel, normalized to `[-1, 1]` with
/// the outer pixel centres at ±1 (values may leave that range).
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingGrid {
    pub res: Resolution,
    pub x: Vec<f32>,
    pub y: Vec<f32>,
}

impl SamplingGrid {
    pub fn identity(res: Resolution) -> Self {
        let (x, y) = (0..res.pixels())
            .map(|p| {
                (
                    pixel_coord(p % res.width, res.width) as f32,
                    pixel_coord(p / res.width, res.height) as f32,
                )
            })
            .unzip();
        Self { res, x, y }
    }

    /// `[1, 2, H, W]` with channel 0 = x, channel 1 = y.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let mut data = self.x.clone();
        data.extend_from_slice(&self.y);
        Tensor::from_vec([1, 2, self.res.height, self.res.width], data)
    }
}

/// Normalized coordinate of pixel centre `i` on an axis of `n` pixels.
pub fn pixel_coord(i: usize, n: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

/// Radial basis `r² log r²` (0 at the origin).
pub fn tps_kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

/// The TPS interpolant is linear in the control-point targets, so for a
/// fixed grid and output size the sampling coordinates are
/// `identity + M·θ` for a precomputed `M` (pixels × control points).
#[derive(Clone, Debug)]
pub struct TpsMap {
    pub grid: ControlGrid,
    pub res: Resolution,
    /// Row-major `[pixels, control points]`.
    weights: Vec<f64>,
}

impl TpsMap {
    pub fn new(grid: ControlGrid, res: Resolution) -> Result<Self> {
        let pts = grid.rest_points();
        let k = pts.len();
        let n = k + 3;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for i in 0..k {
            for j in 0..k {
                let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
                l[(i, j)] = tps_kernel(dx * dx + dy * dy);
            }
            for (c, v) in [1.0, pts[i].0, pts[i].1].into_iter().enumerate() {
                l[(i, k + c)] = v;
                l[(k + c, i)] = v;
            }
        }
        let inv = l
            .try_inverse()
            .ok_or_else(|| Error::SingularSystem(format!("{}x{} control grid", grid.rows, grid.cols)))?;
        if !inv.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularSystem("non-finite inverse".into()));
        }
        let mut weights = vec![0.0; res.pixels() * k];
        let mut phi = vec![0.0; n];
        for p in 0..res.pixels() {
            let x = pixel_coord(p % res.width, res.width);
            let y = pixel_coord(p / res.width, res.height);
            for (j, c) in pts.iter().enumerate() {
                let (dx, dy) = (x - c.0, y - c.1);
                phi[j] = tps_kernel(dx * dx + dy * dy);
            }
            phi[k] = 1.0;
            phi[k + 1] = x;
            phi[k + 2] = y;
            for j in 0..k {
                weights[p * k + j] = (0..n).map(|i| phi[i] * inv[(i, j)]).sum();
            }
        }
        Ok(Self { grid, res, weights })
    }

    /// Interpolation weight of control point `k` at pixel `p`.
    pub fn weight(&self, p: usize, k: usize) -> f64 {
        self.weights[p * self.grid.len() + k]
    }

    pub fn grid_for(&self, theta: &TpsParams) -> Result<SamplingGrid> {
        if theta.grid != self.grid {
            return Err(Error::ShapeMismatch("TPS parameters belong to another control grid".into()));
        }
        if !theta.is_finite() {
            return Err(Error::SingularSystem("non-finite displacements".into()));
        }
        let k = self.grid.len();
        let mut out = SamplingGrid::identity(self.res);
        for p in 0..self.res.pixels() {
            let row = &self.weights[p * k..(p + 1) * k];
            let (mut dx, mut dy) = (0.0, 0.0);
            for (j, &w) in row.iter().enumerate() {
                dx += w * theta.values[2 * j] as f64;
                dy += w * theta.values[2 * j + 1] as f64;
            }
            out.x[p] = (out.x[p] as f64 + dx) as f32;
            out.y[p] = (out.y[p] as f64 + dy) as f32;
        }
        Ok(out)
    }

    /// Differentiable version: `theta` is `[N, 2K, 1, 1]` in planar order;
    /// returns the `[N, 2, H, W]` sampling grid.
    pub fn grid_var<T: Real>(&self, g: &mut Graph<T>, theta: Var) -> Var {
        let k = self.grid.len();
        let n = g.shape(theta)[0];
        let (h, w) = (self.res.height, self.res.width);
        let m = g.constant(Tensor::from_vec(
            [h * w, k, 1, 1],
            self.weights.iter().map(|&v| lit::<T>(v)).collect(),
        ));
        let mut planes = Vec::with_capacity(2);
        for axis in 0..2 {
            let part = g.slice_channels(theta, axis * k, k);
            let d = g.conv2d(part, m, None, 1, 0);
            planes.push(g.reshape(d, [n, 1, h, w]));
        }
        let disp = g.concat(&planes);
        let id = SamplingGrid::identity(self.res).to_tensor();
        let id = g.constant(Tensor::from_vec(id.shape(), id.data().iter().map(|&v| lit::<T>(v as f64)).collect()));
        g.add(disp, id)
    }
}

/// TPS sampling grid for displacements `theta` at `out_res`.
pub fn tps_grid(theta: &TpsParams, grid: ControlGrid, out_res: Resolution) -> Result<SamplingGrid> {
    if theta.grid != grid {
        return Err(Error::ShapeMismatch("TPS parameters belong to another control grid".into()));
    }
    TpsMap::new(grid, out_res)?.grid_for(theta)
}

/// Bilinear sampling of a `[1, C, H, W]` raster at the grid coordinates;
/// samples outside the raster read zero.
pub fn warp(raster: &Tensor<f32>, grid: &SamplingGrid) -> Result<Tensor<f32>> {
    let [n, _, h, w] = raster.shape();
    if n != 1 || h != grid.res.height || w != grid.res.width {
        return Err(Error::ShapeMismatch(format!(
            "raster {:?} against a {} sampling grid",
            raster.shape(),
            grid.res
        )));
    }
    let mut g = Graph::inference();
    let r = g.constant(raster.clone());
    let gv = g.constant(grid.to_tensor());
    let out = g.grid_sample(r, gv);
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res() -> Resolution {
        Resolution::new(16, 12).unwrap()
    }

    /// Direct TPS: solve the interpolation system for the displaced targets
    /// with an LU factorization and evaluate the spline at each pixel.
    fn brute_force(theta: &TpsParams, out: Resolution) -> SamplingGrid {
        let pts = theta.grid.rest_points();
        let k = pts.len();
        let n = k + 3;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for i in 0..k {
            for j in 0..k {
                let d2 = (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2);
                l[(i, j)] = if d2 == 0.0 { 0.0 } else { d2 * d2.ln() };
            }
            l[(i, k)] = 1.0;
            l[(k, i)] = 1.0;
            l[(i, k + 1)] = pts[i].0;
            l[(k + 1, i)] = pts[i].0;
            l[(i, k + 2)] = pts[i].1;
            l[(k + 2, i)] = pts[i].1;
        }
        let lu = l.lu();
        let mut coords = Vec::new();
        for axis in 0..2 {
            let mut rhs = nalgebra::DVector::<f64>::zeros(n);
            for i in 0..k {
                let rest = if axis == 0 { pts[i].0 } else { pts[i].1 };
                rhs[i] = rest + theta.values[2 * i + axis] as f64;
            }
            coords.push(lu.solve(&rhs).unwrap());
        }
        let mut g = SamplingGrid::identity(out);
        for p in 0..out.pixels() {
            let x = -1.0 + 2.0 * (p % out.width) as f64 / (out.width - 1) as f64;
            let y = -1.0 + 2.0 * (p / out.width) as f64 / (out.height - 1) as f64;
            for (axis, c) in coords.iter().enumerate() {
                let mut v = c[k] + c[k + 1] * x + c[k + 2] * y;
                for (j, q) in pts.iter().enumerate() {
                    let d2 = (x - q.0).powi(2) + (y - q.1).powi(2);
                    if d2 > 0.0 {
                        v += c[j] * d2 * d2.ln();
                    }
                }
                if axis == 0 {
                    g.x[p] = v as f32;
                } else {
                    g.y[p] = v as f32;
                }
            }
        }
        g
    }

    fn max_diff(a: &SamplingGrid, b: &SamplingGrid) -> f32 {
        a.x.iter()
            .chain(&a.y)
            .zip(b.x.iter().chain(&b.y))
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f32::max)
    }

    #[test]
    fn zero_displacement_is_identity() {
        let g = tps_grid(&TpsParams::zeros(ControlGrid::DEFAULT), ControlGrid::DEFAULT, res()).unwrap();
        assert!(max_diff(&g, &SamplingGrid::identity(res())) < 1e-6);
    }

    #[test]
    fn translation_is_reproduced() {
        let grid = ControlGrid::DEFAULT;
        let values = (0..grid.len()).flat_map(|_| [0.1f32, 0.0]).collect();
        let g = tps_grid(&TpsParams::new(grid, values).unwrap(), grid, res()).unwrap();
        let id = SamplingGrid::identity(res());
        for p in 0..res().pixels() {
            assert!((g.x[p] - id.x[p] - 0.1).abs() < 1e-6);
            assert!((g.y[p] - id.y[p]).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_direct_evaluation() {
        let grid = ControlGrid::DEFAULT;
        let mut s = 17u64;
        let values = (0..2 * grid.len())
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 40) as f32 / (1u64 << 24) as f32 - 0.5) * 0.3
            })
            .collect();
        let theta = TpsParams::new(grid, values).unwrap();
        let g = tps_grid(&theta, grid, res()).unwrap();
        assert!(max_diff(&g, &brute_force(&theta, res())) < 1e-5);
    }

    #[test]
    fn graph_grid_matches_direct_grid() {
        let grid = ControlGrid::new(3, 4).unwrap();
        let theta = TpsParams::new(grid, (0..24).map(|i| (i as f32 * 0.37).sin() * 0.1).collect()).unwrap();
        let map = TpsMap::new(grid, res()).unwrap();
        let direct = map.grid_for(&theta).unwrap().to_tensor();
        let mut g = Graph::<f32>::inference();
        let t = g.constant(Tensor::from_vec([1, 24, 1, 1], theta.to_planar()));
        let v = map.grid_var(&mut g, t);
        let diff = g.value(v).data().iter().zip(direct.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(diff < 1e-6);
        assert_eq!(TpsParams::from_planar(grid, &theta.to_planar()).unwrap(), theta);
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        assert!(matches!(ControlGrid::new(1, 5), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn warp_examples() {
        let r = res();
        let img = Tensor::<f32>::from_fn([1, 3, 16, 12], |[_, c, y, x]| (c * 7 + y * 3 + x) as f32 / 50.0);
        assert_eq!(warp(&img, &SamplingGrid::identity(r)).unwrap(), img);

        let constant = Tensor::<f32>::full([1, 2, 16, 12], 0.3);
        let mut g = SamplingGrid::identity(r);
        for v in g.x.iter_mut().chain(g.y.iter_mut()) {
            *v *= 0.7;
        }
        assert!(warp(&constant, &g).unwrap().data().iter().all(|&v| (v - 0.3).abs() < 1e-6));

        // Two-pixel ramp [0, 1], sampled half a pixel right of the left pixel.
        let two = Resolution { height: 1, width: 2 };
        let ramp = Tensor::from_vec([1, 1, 1, 2], vec![0.0f32, 1.0]);
        let half = SamplingGrid { res: two, x: vec![0.0, 1.0], y: vec![0.0, 0.0] };
        let out = warp(&ramp, &half).unwrap();
        assert!((out.data()[0] - 0.5).abs() < 1e-6);

        assert!(matches!(
            warp(&img, &SamplingGrid::identity(Resolution::new(8, 6).unwrap())),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn warp_is_linear_in_the_raster() {
        let r = res();
        let a = Tensor::<f32>::from_fn([1, 1, 16, 12], |[_, _, y, x]| ((y * 5 + x * 3) % 7) as f32 / 7.0);
        let b = Tensor::<f32>::from_fn([1, 1, 16, 12], |[_, _, y, x]| ((y + x * 11) % 5) as f32 / 5.0);
        let mut g = SamplingGrid::identity(r);
        for (i, v) in g.x.iter_mut().enumerate() {
            *v = *v * 0.8 + (i as f32 * 0.01).sin() * 0.1;
        }
        let combo = Tensor::from_vec(a.shape(), a.data().iter().zip(b.data()).map(|(p, q)| 2.0 * p - 0.5 * q).collect());
        let (wa, wb, wc) = (warp(&a, &g).unwrap(), warp(&b, &g).unwrap(), warp(&combo, &g).unwrap());
        for i in 0..wc.len() {
            assert!((wc.data()[i] - (2.0 * wa.data()[i] - 0.5 * wb.data()[i])).abs() < 1e-6);
        }
    }
}
