//! Tape-based reverse-mode automatic differentiation over NCHW tensors.
//!
//! A [`Graph`] records every operation applied during a forward pass. Calling
//! [`Graph::backward`] walks the tape in reverse and produces gradients for
//! every node that requires them. Graphs are cheap, single-use objects: build
//! one per training step or per inference call.

use std::collections::HashMap;
use std::sync::Arc;

use super::tensor::{lit, Real, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        k: usize,
        stride: usize,
        pad: usize,
        cols: Vec<T>,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<T>,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Sigmoid {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Upsample {
        x: Var,
    },
    Concat {
        xs: Vec<Var>,
    },
    SoftmaxC {
        x: Var,
    },
    Binary {
        a: Var,
        b: Var,
        kind: BinaryKind,
    },
    Affine {
        x: Var,
        scale: T,
    },
    SliceC {
        x: Var,
        start: usize,
    },
    CropRows {
        x: Var,
        start: usize,
    },
    SumC {
        x: Var,
    },
    Mean {
        x: Var,
    },
    Sum {
        x: Var,
    },
    Abs {
        x: Var,
    },
    Square {
        x: Var,
    },
    LogClamp {
        x: Var,
        eps: T,
    },
    Reshape {
        x: Var,
    },
    L2NormC {
        x: Var,
        norms: Vec<T>,
    },
    Correlation {
        a: Var,
        b: Var,
    },
    GridSample {
        img: Var,
        grid: Var,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

/// Gradients produced by [`Graph::backward`].
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
    bindings: HashMap<(u64, usize), Var>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    /// Graph that tracks gradients.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
            bindings: HashMap::new(),
        }
    }

    /// Graph for inference: no gradient bookkeeping, no cached buffers.
    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let requires_grad = requires_grad && self.grad_enabled;
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        self.grad_enabled && vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that receives a gradient (used for gradient checks and inputs
    /// whose sensitivity is wanted).
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Bind a shared parameter tensor. Binding the same `(store, index)` pair
    /// twice returns the same node, so gradients of shared weights add up.
    /// Frozen parameters are bound without gradient tracking.
    pub fn bind_param(&mut self, store: u64, index: usize, value: &Arc<Tensor<T>>, frozen: bool) -> Var {
        if let Some(&v) = self.bindings.get(&(store, index)) {
            return v;
        }
        let requires_grad = self.grad_enabled && !frozen;
        self.nodes.push(Node {
            value: Arc::clone(value),
            op: Op::Leaf,
            requires_grad,
        });
        let v = Var(self.nodes.len() - 1);
        self.bindings.insert((store, index), v);
        v
    }

    pub(crate) fn bindings_for(&self, store: u64) -> impl Iterator<Item = (usize, Var)> + '_ {
        self.bindings
            .iter()
            .filter(move |((s, _), _)| *s == store)
            .map(|((_, i), v)| (*i, *v))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> T {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "not a scalar node");
        t.data()[0]
    }

    /// Detached copy of a node's value as a new constant.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = Arc::clone(&self.nodes[v.0].value);
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    // ---------------------------------------------------------------- ops

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let [n, cin, h, wd] = self.shape(x);
        let [cout, wcin, k, k2] = self.shape(w);
        assert_eq!(k, k2, "square kernels only");
        assert_eq!(cin, wcin, "conv input channels");
        assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "conv input too small");
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let ohw = oh * ow;
        let ckk = cin * k * k;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.rg(&inputs);

        let xv = Arc::clone(&self.nodes[x.0].value);
        let wv = Arc::clone(&self.nodes[w.0].value);
        // One GEMM over the whole batch: columns are laid out as
        // [C_in*k*k, N*OH*OW], the product as [C_out, N*OH*OW].
        let ld = n * ohw;
        let mut cols = vec![T::ZERO; ckk * ld];
        for s in 0..n {
            im2col(xv.sample(s), cin, h, wd, k, stride, pad, oh, ow, &mut cols, ld, s * ohw);
        }
        let mut prod = vec![T::ZERO; cout * ld];
        T::gemm(
            cout,
            ckk,
            ld,
            T::ONE,
            wv.data(),
            ckk as isize,
            1,
            &cols,
            ld as isize,
            1,
            T::ZERO,
            &mut prod,
            ld as isize,
            1,
        );
        let mut out = vec![T::ZERO; n * cout * ohw];
        for co in 0..cout {
            for s in 0..n {
                out[(s * cout + co) * ohw..(s * cout + co + 1) * ohw]
                    .copy_from_slice(&prod[co * ld + s * ohw..co * ld + (s + 1) * ohw]);
            }
        }
        drop(prod);
        let cols_cache = if rg { cols } else { Vec::new() };
        if let Some(b) = b {
            let bv = self.value(b);
            assert_eq!(bv.len(), cout, "bias length");
            for s in 0..n {
                for (co, &bias) in bv.data().iter().enumerate() {
                    let start = (s * cout + co) * ohw;
                    for o in &mut out[start..start + ohw] {
                        *o += bias;
                    }
                }
            }
        }
        self.push(
            Tensor::from_vec([n, cout, oh, ow], out),
            Op::Conv2d {
                x,
                w,
                b,
                k,
                stride,
                pad,
                cols: cols_cache,
            },
            rg,
        )
    }

    pub fn instance_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        let hw = h * w;
        let eps = lit::<T>(1e-5);
        let mut out = xv.data().to_vec();
        let mut inv_std = Vec::with_capacity(n * c);
        for plane in out.chunks_mut(hw) {
            let mean = plane.iter().copied().sum::<T>() / lit(hw as f64);
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / lit(hw as f64);
            let is = T::ONE / (var + eps).sqrt();
            for v in plane.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(&[x]);
        self.push(
            Tensor::from_vec([n, c, h, w], out),
            Op::InstanceNorm { x, inv_std },
            rg,
        )
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let slope = lit::<T>(slope);
        let out = self
            .value(x)
            .map(|v| if v > T::ZERO { v } else { v * slope });
        let rg = self.rg(&[x]);
        self.push(out, Op::LeakyRelu { x, slope }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > T::ZERO { v } else { T::ZERO });
        let rg = self.rg(&[x]);
        self.push(out, Op::LeakyRelu { x, slope: T::ZERO }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::ONE / (T::ONE + (-v).exp()));
        let rg = self.rg(&[x]);
        self.push(out, Op::Sigmoid { x }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        let rg = self.rg(&[x]);
        self.push(out, Op::Tanh { x }, rg)
    }

    /// Nearest-neighbour resize to an arbitrary `(oh, ow)`.
    pub fn upsample_nearest(&mut self, x: Var, oh: usize, ow: usize) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for s in 0..n {
            for ch in 0..c {
                let p = xv.plane(s, ch);
                for oy in 0..oh {
                    let iy = oy * h / oh;
                    for ox in 0..ow {
                        out.push(p[iy * w + ox * w / ow]);
                    }
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(
            Tensor::from_vec([n, c, oh, ow], out),
            Op::Upsample { x },
            rg,
        )
    }

    pub fn concat(&mut self, xs: &[Var]) -> Var {
        let parts: Vec<&Tensor<T>> = xs.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::concat_channels(&parts);
        let rg = self.rg(xs);
        self.push(out, Op::Concat { xs: xs.to_vec() }, rg)
    }

    /// Softmax over the channel axis at every pixel.
    pub fn softmax_channels(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        let hw = h * w;
        let mut out = vec![T::ZERO; xv.len()];
        let d = xv.data();
        for s in 0..n {
            let base = s * c * hw;
            for p in 0..hw {
                let mut m = d[base + p];
                for ch in 1..c {
                    m = m.max(d[base + ch * hw + p]);
                }
                let mut z = T::ZERO;
                for ch in 0..c {
                    let e = (d[base + ch * hw + p] - m).exp();
                    out[base + ch * hw + p] = e;
                    z += e;
                }
                for ch in 0..c {
                    out[base + ch * hw + p] = out[base + ch * hw + p] / z;
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(Tensor::from_vec([n, c, h, w], out), Op::SoftmaxC { x }, rg)
    }

    fn binary(&mut self, a: Var, b: Var, kind: BinaryKind) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let shape = broadcast_shape(av.shape(), bv.shape());
        let sa = bstrides(av.shape(), shape);
        let sb = bstrides(bv.shape(), shape);
        let (ad, bd) = (av.data(), bv.data());
        let mut out = Vec::with_capacity(shape.iter().product());
        if av.shape() == bv.shape() {
            for (&x, &y) in ad.iter().zip(bd) {
                out.push(apply_binary(kind, x, y));
            }
        } else {
            for_each_index(shape, |idx| {
                let x = ad[offset(idx, sa)];
                let y = bd[offset(idx, sb)];
                out.push(apply_binary(kind, x, y));
            });
        }
        let rg = self.rg(&[a, b]);
        self.push(Tensor::from_vec(shape, out), Op::Binary { a, b, kind }, rg)
    }

    /// Elementwise sum with size-1 broadcasting on any axis.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, BinaryKind::Mul)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let (s, t) = (lit::<T>(scale), lit::<T>(shift));
        let out = self.value(x).map(|v| s * v + t);
        let rg = self.rg(&[x]);
        self.push(out, Op::Affine { x, scale: s }, rg)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x).channels(start, len);
        let rg = self.rg(&[x]);
        self.push(out, Op::SliceC { x, start }, rg)
    }

    pub fn crop_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        assert!(start + len <= h, "row crop out of range");
        let mut out = Vec::with_capacity(n * c * len * w);
        for s in 0..n {
            for ch in 0..c {
                let p = xv.plane(s, ch);
                out.extend_from_slice(&p[start * w..(start + len) * w]);
            }
        }
        let rg = self.rg(&[x]);
        self.push(
            Tensor::from_vec([n, c, len, w], out),
            Op::CropRows { x, start },
            rg,
        )
    }

    /// Sum over channels, keeping a unit channel axis.
    pub fn sum_channels(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        let hw = h * w;
        let mut out = vec![T::ZERO; n * hw];
        for s in 0..n {
            for ch in 0..c {
                for (o, &v) in out[s * hw..(s + 1) * hw].iter_mut().zip(xv.plane(s, ch)) {
                    *o += v;
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(Tensor::from_vec([n, 1, h, w], out), Op::SumC { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let m = self.value(x).mean();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(m), Op::Mean { x }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.abs());
        let rg = self.rg(&[x]);
        self.push(out, Op::Abs { x }, rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        let rg = self.rg(&[x]);
        self.push(out, Op::Square { x }, rg)
    }

    /// `ln(max(x, eps))`; the gradient vanishes where the clamp is active.
    pub fn log_clamp(&mut self, x: Var, eps: f64) -> Var {
        let eps = lit::<T>(eps);
        let out = self.value(x).map(|v| v.max(eps).ln());
        let rg = self.rg(&[x]);
        self.push(out, Op::LogClamp { x, eps }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: [usize; 4]) -> Var {
        let out = (*self.nodes[x.0].value).clone().reshape(shape);
        let rg = self.rg(&[x]);
        self.push(out, Op::Reshape { x }, rg)
    }

    /// Unit-normalize the channel vector at every pixel.
    pub fn l2_normalize_channels(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        let hw = h * w;
        let d = xv.data();
        let eps = lit::<T>(1e-12);
        let mut out = vec![T::ZERO; d.len()];
        let mut norms = Vec::with_capacity(n * hw);
        for s in 0..n {
            let base = s * c * hw;
            for p in 0..hw {
                let mut ss = eps;
                for ch in 0..c {
                    let v = d[base + ch * hw + p];
                    ss += v * v;
                }
                let norm = ss.sqrt();
                for ch in 0..c {
                    out[base + ch * hw + p] = d[base + ch * hw + p] / norm;
                }
                norms.push(norm);
            }
        }
        let rg = self.rg(&[x]);
        self.push(
            Tensor::from_vec([n, c, h, w], out),
            Op::L2NormC { x, norms },
            rg,
        )
    }

    /// Correlation volume between every position of `a` and every position
    /// of `b`: `out[n, j, ia, ja]` is the inner product of `a` at `(ia, ja)`
    /// with `b` at flattened position `j`.
    pub fn correlation(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let [n, c, ha, wa] = av.shape();
        let [nb, cb, hb, wb] = bv.shape();
        assert_eq!((n, c), (nb, cb), "correlation operands");
        let (pa, pb) = (ha * wa, hb * wb);
        let mut out = vec![T::ZERO; n * pb * pa];
        for s in 0..n {
            T::gemm(
                pb,
                c,
                pa,
                T::ONE,
                bv.sample(s),
                1,
                pb as isize,
                av.sample(s),
                pa as isize,
                1,
                T::ZERO,
                &mut out[s * pb * pa..(s + 1) * pb * pa],
                pa as isize,
                1,
            );
        }
        let rg = self.rg(&[a, b]);
        self.push(
            Tensor::from_vec([n, pb, ha, wa], out),
            Op::Correlation { a, b },
            rg,
        )
    }

    /// Bilinear sampling of `img` at normalized coordinates. `grid` is
    /// `[N, 2, Ho, Wo]` with channel 0 the column (x) and channel 1 the row
    /// (y), both in `[-1, 1]` with -1/+1 at the outer pixel centres.
    /// Samples falling outside the raster read zero.
    pub fn grid_sample(&mut self, img: Var, grid: Var) -> Var {
        let iv = self.value(img);
        let gv = self.value(grid);
        let [n, c, h, w] = iv.shape();
        let [gn, two, oh, ow] = gv.shape();
        assert_eq!((gn, two), (n, 2), "grid must be [N, 2, H, W]");
        let ohw = oh * ow;
        let mut out = vec![T::ZERO; n * c * ohw];
        for s in 0..n {
            let gx = gv.plane(s, 0);
            let gy = gv.plane(s, 1);
            for p in 0..ohw {
                let tap = BilinearTap::new(gx[p], gy[p], h, w);
                for ch in 0..c {
                    out[(s * c + ch) * ohw + p] = tap.sample(iv.plane(s, ch));
                }
            }
        }
        let rg = self.rg(&[img, grid]);
        self.push(
            Tensor::from_vec([n, c, oh, ow], out),
            Op::GridSample { img, grid },
            rg,
        )
    }

    // ----------------------------------------------------------- backward

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Grads<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::ONE));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads { grads }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                k,
                stride,
                pad,
                cols,
            } => self.conv_backward(*x, *w, *b, *k, *stride, *pad, cols, g, grads),
            Op::InstanceNorm { x, inv_std } => {
                let [n, c, h, wd] = y.shape();
                let hw = h * wd;
                let mut gx = vec![T::ZERO; n * c * hw];
                let inv_hw = lit::<T>(1.0 / hw as f64);
                for pl in 0..n * c {
                    let gy = &g.data()[pl * hw..(pl + 1) * hw];
                    let xh = &y.data()[pl * hw..(pl + 1) * hw];
                    let mg = gy.iter().copied().sum::<T>() * inv_hw;
                    let mgx = gy.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() * inv_hw;
                    for ((o, &gv), &xv) in gx[pl * hw..(pl + 1) * hw].iter_mut().zip(gy).zip(xh) {
                        *o = inv_std[pl] * (gv - mg - xv * mgx);
                    }
                }
                accumulate(grads, *x, Tensor::from_vec(y.shape(), gx));
            }
            Op::LeakyRelu { x, slope } => {
                let gx = zip_map(g, y, |gv, yv| if yv > T::ZERO { gv } else { gv * *slope });
                accumulate(grads, *x, gx);
            }
            Op::Sigmoid { x } => {
                let gx = zip_map(g, y, |gv, yv| gv * yv * (T::ONE - yv));
                accumulate(grads, *x, gx);
            }
            Op::Tanh { x } => {
                let gx = zip_map(g, y, |gv, yv| gv * (T::ONE - yv * yv));
                accumulate(grads, *x, gx);
            }
            Op::Upsample { x } => {
                let [n, c, h, w] = self.shape(*x);
                let [_, _, oh, ow] = y.shape();
                let mut gx = Tensor::zeros([n, c, h, w]);
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * h * w;
                        let gp = g.plane(s, ch);
                        for oy in 0..oh {
                            let iy = oy * h / oh;
                            for ox in 0..ow {
                                gx.data_mut()[base + iy * w + ox * w / ow] += gp[oy * ow + ox];
                            }
                        }
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::Concat { xs } => {
                let mut start = 0;
                for &x in xs {
                    let len = self.shape(x)[1];
                    if self.wants(x) {
                        accumulate(grads, x, g.channels(start, len));
                    }
                    start += len;
                }
            }
            Op::SoftmaxC { x } => {
                let [n, c, h, w] = y.shape();
                let hw = h * w;
                let mut gx = vec![T::ZERO; y.len()];
                let (yd, gd) = (y.data(), g.data());
                for s in 0..n {
                    let base = s * c * hw;
                    for p in 0..hw {
                        let mut dot = T::ZERO;
                        for ch in 0..c {
                            dot += yd[base + ch * hw + p] * gd[base + ch * hw + p];
                        }
                        for ch in 0..c {
                            let j = base + ch * hw + p;
                            gx[j] = yd[j] * (gd[j] - dot);
                        }
                    }
                }
                accumulate(grads, *x, Tensor::from_vec(y.shape(), gx));
            }
            Op::Binary { a, b, kind } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let shape = y.shape();
                let sa = bstrides(av.shape(), shape);
                let sb = bstrides(bv.shape(), shape);
                let mut ga = self.wants(*a).then(|| Tensor::zeros(av.shape()));
                let mut gb = self.wants(*b).then(|| Tensor::zeros(bv.shape()));
                let gd = g.data();
                if av.shape() == bv.shape() {
                    let (ad, bd) = (av.data(), bv.data());
                    let (sa, sb) = match kind {
                        BinaryKind::Add => (T::ONE, T::ONE),
                        BinaryKind::Sub => (T::ONE, -T::ONE),
                        BinaryKind::Mul => (T::ZERO, T::ZERO),
                    };
                    let mul = *kind == BinaryKind::Mul;
                    if let Some(ga) = ga.as_mut() {
                        for (i, o) in ga.data_mut().iter_mut().enumerate() {
                            *o = if mul { gd[i] * bd[i] } else { gd[i] * sa };
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        for (i, o) in gb.data_mut().iter_mut().enumerate() {
                            *o = if mul { gd[i] * ad[i] } else { gd[i] * sb };
                        }
                    }
                    if let Some(ga) = ga {
                        accumulate(grads, *a, ga);
                    }
                    if let Some(gb) = gb {
                        accumulate(grads, *b, gb);
                    }
                    return;
                }
                let mut j = 0;
                for_each_index(shape, |idx| {
                    let gv = gd[j];
                    j += 1;
                    let (ia, ib) = (offset(idx, sa), offset(idx, sb));
                    let (da, db) = match kind {
                        BinaryKind::Add => (gv, gv),
                        BinaryKind::Sub => (gv, -gv),
                        BinaryKind::Mul => (gv * bv.data()[ib], gv * av.data()[ia]),
                    };
                    if let Some(ga) = ga.as_mut() {
                        ga.data_mut()[ia] += da;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb.data_mut()[ib] += db;
                    }
                });
                if let Some(ga) = ga {
                    accumulate(grads, *a, ga);
                }
                if let Some(gb) = gb {
                    accumulate(grads, *b, gb);
                }
            }
            Op::Affine { x, scale } => {
                let s = *scale;
                accumulate(grads, *x, g.map(|v| v * s));
            }
            Op::SliceC { x, start } => {
                let [n, c, h, w] = self.shape(*x);
                let len = y.shape()[1];
                let hw = h * w;
                let mut gx = Tensor::zeros([n, c, h, w]);
                for s in 0..n {
                    let dst = (s * c + start) * hw;
                    gx.data_mut()[dst..dst + len * hw].copy_from_slice(g.sample(s));
                }
                accumulate(grads, *x, gx);
            }
            Op::CropRows { x, start } => {
                let [n, c, h, w] = self.shape(*x);
                let len = y.shape()[2];
                let mut gx = Tensor::zeros([n, c, h, w]);
                for s in 0..n {
                    for ch in 0..c {
                        let dst = (s * c + ch) * h * w + start * w;
                        gx.data_mut()[dst..dst + len * w].copy_from_slice(g.plane(s, ch));
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::SumC { x } => {
                let [n, c, h, w] = self.shape(*x);
                let gx = Tensor::from_fn([n, c, h, w], |[s, _, r, q]| g.at([s, 0, r, q]));
                accumulate(grads, *x, gx);
            }
            Op::Mean { x } => {
                let shape = self.shape(*x);
                let n: usize = shape.iter().product();
                let v = g.data()[0] / lit(n as f64);
                accumulate(grads, *x, Tensor::full(shape, v));
            }
            Op::Sum { x } => {
                accumulate(grads, *x, Tensor::full(self.shape(*x), g.data()[0]));
            }
            Op::Abs { x } => {
                let gx = zip_map(g, self.value(*x), |gv, xv| {
                    if xv > T::ZERO {
                        gv
                    } else if xv < T::ZERO {
                        -gv
                    } else {
                        T::ZERO
                    }
                });
                accumulate(grads, *x, gx);
            }
            Op::Square { x } => {
                let gx = zip_map(g, self.value(*x), |gv, xv| lit::<T>(2.0) * xv * gv);
                accumulate(grads, *x, gx);
            }
            Op::LogClamp { x, eps } => {
                let gx = zip_map(g, self.value(*x), |gv, xv| {
                    if xv > *eps {
                        gv / xv
                    } else {
                        T::ZERO
                    }
                });
                accumulate(grads, *x, gx);
            }
            Op::Reshape { x } => {
                accumulate(grads, *x, g.clone().reshape(self.shape(*x)));
            }
            Op::L2NormC { x, norms } => {
                let [n, c, h, w] = y.shape();
                let hw = h * w;
                let (yd, gd) = (y.data(), g.data());
                let mut gx = vec![T::ZERO; y.len()];
                for s in 0..n {
                    let base = s * c * hw;
                    for p in 0..hw {
                        let mut dot = T::ZERO;
                        for ch in 0..c {
                            dot += yd[base + ch * hw + p] * gd[base + ch * hw + p];
                        }
                        let norm = norms[s * hw + p];
                        for ch in 0..c {
                            let j = base + ch * hw + p;
                            gx[j] = (gd[j] - yd[j] * dot) / norm;
                        }
                    }
                }
                accumulate(grads, *x, Tensor::from_vec(y.shape(), gx));
            }
            Op::Correlation { a, b } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let [n, c, ha, wa] = av.shape();
                let [_, _, hb, wb] = bv.shape();
                let (pa, pb) = (ha * wa, hb * wb);
                if self.wants(*a) {
                    let mut ga = Tensor::zeros(av.shape());
                    for s in 0..n {
                        T::gemm(
                            c,
                            pb,
                            pa,
                            T::ONE,
                            bv.sample(s),
                            pb as isize,
                            1,
                            g.sample(s),
                            pa as isize,
                            1,
                            T::ZERO,
                            &mut ga.data_mut()[s * c * pa..(s + 1) * c * pa],
                            pa as isize,
                            1,
                        );
                    }
                    accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let mut gb = Tensor::zeros(bv.shape());
                    for s in 0..n {
                        T::gemm(
                            c,
                            pa,
                            pb,
                            T::ONE,
                            av.sample(s),
                            pa as isize,
                            1,
                            g.sample(s),
                            1,
                            pa as isize,
                            T::ZERO,
                            &mut gb.data_mut()[s * c * pb..(s + 1) * c * pb],
                            pb as isize,
                            1,
                        );
                    }
                    accumulate(grads, *b, gb);
                }
            }
            Op::GridSample { img, grid } => {
                let iv = self.value(*img);
                let gv = self.value(*grid);
                let [n, c, h, w] = iv.shape();
                let [_, _, oh, ow] = gv.shape();
                let ohw = oh * ow;
                let mut gi = self.wants(*img).then(|| Tensor::zeros(iv.shape()));
                let mut gg = self.wants(*grid).then(|| Tensor::zeros(gv.shape()));
                let sx = lit::<T>((w.max(1) - 1) as f64 / 2.0);
                let sy = lit::<T>((h.max(1) - 1) as f64 / 2.0);
                for s in 0..n {
                    for p in 0..ohw {
                        let tap =
                            BilinearTap::new(gv.plane(s, 0)[p], gv.plane(s, 1)[p], h, w);
                        let mut dix = T::ZERO;
                        let mut diy = T::ZERO;
                        for ch in 0..c {
                            let go = g.data()[(s * c + ch) * ohw + p];
                            if let Some(gi) = gi.as_mut() {
                                let base = (s * c + ch) * h * w;
                                tap.scatter(&mut gi.data_mut()[base..base + h * w], go);
                            }
                            if gg.is_some() {
                                let (dx, dy) = tap.coord_grad(iv.plane(s, ch));
                                dix += go * dx;
                                diy += go * dy;
                            }
                        }
                        if let Some(gg) = gg.as_mut() {
                            gg.data_mut()[(s * 2) * ohw + p] += dix * sx;
                            gg.data_mut()[(s * 2 + 1) * ohw + p] += diy * sy;
                        }
                    }
                }
                if let Some(gi) = gi {
                    accumulate(grads, *img, gi);
                }
                if let Some(gg) = gg {
                    accumulate(grads, *grid, gg);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        k: usize,
        stride: usize,
        pad: usize,
        cols: &[T],
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let xv = self.value(x);
        let wv = self.value(w);
        let [n, cin, h, wd] = xv.shape();
        let [_, cout, oh, ow] = g.shape();
        let ohw = oh * ow;
        let ckk = cin * k * k;
        let ld = n * ohw;
        // Gradient of the batched product, [C_out, N*OH*OW].
        let mut gp = vec![T::ZERO; cout * ld];
        for co in 0..cout {
            for s in 0..n {
                gp[co * ld + s * ohw..co * ld + (s + 1) * ohw].copy_from_slice(g.plane(s, co));
            }
        }
        if self.wants(w) {
            let mut gw = Tensor::zeros(wv.shape());
            T::gemm(
                cout,
                ld,
                ckk,
                T::ONE,
                &gp,
                ld as isize,
                1,
                cols,
                1,
                ld as isize,
                T::ZERO,
                gw.data_mut(),
                ckk as isize,
                1,
            );
            accumulate(grads, w, gw);
        }
        if let Some(b) = b.filter(|&b| self.wants(b)) {
            let mut gb = Tensor::zeros(self.shape(b));
            for co in 0..cout {
                gb.data_mut()[co] = gp[co * ld..(co + 1) * ld].iter().copied().sum::<T>();
            }
            accumulate(grads, b, gb);
        }
        if self.wants(x) {
            let mut gcol = vec![T::ZERO; ckk * ld];
            T::gemm(
                ckk,
                cout,
                ld,
                T::ONE,
                wv.data(),
                1,
                ckk as isize,
                &gp,
                ld as isize,
                1,
                T::ZERO,
                &mut gcol,
                ld as isize,
                1,
            );
            let mut gx = Tensor::zeros(xv.shape());
            let chw = cin * h * wd;
            for s in 0..n {
                col2im(
                    &gcol,
                    cin,
                    h,
                    wd,
                    k,
                    stride,
                    pad,
                    oh,
                    ow,
                    ld,
                    s * ohw,
                    &mut gx.data_mut()[s * chw..(s + 1) * chw],
                );
            }
            accumulate(grads, x, gx);
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::from_vec(
        a.shape(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

#[inline]
fn apply_binary<T: Real>(kind: BinaryKind, x: T, y: T) -> T {
    match kind {
        BinaryKind::Add => x + y,
        BinaryKind::Sub => x - y,
        BinaryKind::Mul => x * y,
    }
}

fn broadcast_shape(a: [usize; 4], b: [usize; 4]) -> [usize; 4] {
    let mut out = [0; 4];
    for i in 0..4 {
        out[i] = match (a[i], b[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => panic!("cannot broadcast {a:?} with {b:?}"),
        };
    }
    out
}

fn bstrides(shape: [usize; 4], out: [usize; 4]) -> [usize; 4] {
    let dense = [
        shape[1] * shape[2] * shape[3],
        shape[2] * shape[3],
        shape[3],
        1,
    ];
    let mut s = [0; 4];
    for i in 0..4 {
        s[i] = if shape[i] == 1 && out[i] != 1 { 0 } else { dense[i] };
    }
    s
}

#[inline]
fn offset(idx: [usize; 4], strides: [usize; 4]) -> usize {
    idx[0] * strides[0] + idx[1] * strides[1] + idx[2] * strides[2] + idx[3] * strides[3]
}

fn for_each_index(shape: [usize; 4], mut f: impl FnMut([usize; 4])) {
    for n in 0..shape[0] {
        for c in 0..shape[1] {
            for h in 0..shape[2] {
                for w in 0..shape[3] {
                    f([n, c, h, w]);
                }
            }
        }
    }
}

/// Output columns `[lo, hi)` whose input column `ox * stride + kx - pad`
/// falls inside `[0, w)`.
#[inline]
fn valid_cols(ow: usize, w: usize, stride: usize, kx: usize, pad: usize) -> (usize, usize) {
    let lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(stride) };
    let hi = if w + pad > kx {
        ((w + pad - kx - 1) / stride + 1).min(ow)
    } else {
        0
    };
    (lo.min(hi), hi)
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &[T],
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [T],
    ld: usize,
    col_off: usize,
) {
    for ci in 0..cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * ld + col_off..row * ld + col_off + oh * ow];
                let (lo, hi) = valid_cols(ow, w, stride, kx, pad);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize || lo >= hi {
                        line.fill(T::ZERO);
                        continue;
                    }
                    line[..lo].fill(T::ZERO);
                    line[hi..].fill(T::ZERO);
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let first = lo * stride + kx - pad;
                    if stride == 1 {
                        line[lo..hi].copy_from_slice(&src[first..first + (hi - lo)]);
                    } else {
                        for (d, s) in line[lo..hi].iter_mut().zip(src[first..].iter().step_by(stride)) {
                            *d = *s;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(
    cols: &[T],
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    ld: usize,
    col_off: usize,
    x: &mut [T],
) {
    for ci in 0..cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * ld + col_off..row * ld + col_off + oh * ow];
                let (lo, hi) = valid_cols(ow, w, stride, kx, pad);
                if lo >= hi {
                    continue;
                }
                let first = lo * stride + kx - pad;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = ci * h * w + iy as usize * w;
                    let dst = &mut x[base + first..base + w];
                    let line = &src[oy * ow + lo..oy * ow + hi];
                    for (d, s) in dst.iter_mut().step_by(stride).zip(line) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

/// Four-tap bilinear stencil for one sampling location.
struct BilinearTap<T> {
    x0: isize,
    y0: isize,
    fx: T,
    fy: T,
    h: usize,
    w: usize,
}

impl<T: Real> BilinearTap<T> {
    fn new(gx: T, gy: T, h: usize, w: usize) -> Self {
        let half = lit::<T>(0.5);
        let to_pixel = |g: T, n: usize| {
            let p = (g + T::ONE) * half * lit::<T>((n.max(1) - 1) as f64);
            // Coordinates within rounding noise of a pixel centre snap onto it
            // so identity grids reproduce their input bit-for-bit.
            let r = p.round();
            let tol = T::EPSILON * lit::<T>(64.0 * n as f64);
            if (p - r).abs() <= tol {
                r
            } else {
                p
            }
        };
        let ix = to_pixel(gx, w);
        let iy = to_pixel(gy, h);
        let x0 = ix.floor();
        let y0 = iy.floor();
        Self {
            x0: x0.to_f64() as isize,
            y0: y0.to_f64() as isize,
            fx: ix - x0,
            fy: iy - y0,
            h,
            w,
        }
    }

    #[inline]
    fn idx(&self, y: isize, x: isize) -> Option<usize> {
        (y >= 0 && x >= 0 && (y as usize) < self.h && (x as usize) < self.w)
            .then(|| y as usize * self.w + x as usize)
    }

    #[inline]
    fn read(&self, plane: &[T], y: isize, x: isize) -> T {
        self.idx(y, x).map_or(T::ZERO, |i| plane[i])
    }

    fn corners(&self) -> [(isize, isize, T); 4] {
        let (fx, fy) = (self.fx, self.fy);
        let (gx, gy) = (T::ONE - fx, T::ONE - fy);
        [
            (self.y0, self.x0, gx * gy),
            (self.y0, self.x0 + 1, fx * gy),
            (self.y0 + 1, self.x0, gx * fy),
            (self.y0 + 1, self.x0 + 1, fx * fy),
        ]
    }

    fn sample(&self, plane: &[T]) -> T {
        let mut acc = T::ZERO;
        for (y, x, wgt) in self.corners() {
            if wgt != T::ZERO {
                acc += wgt * self.read(plane, y, x);
            }
        }
        acc
    }

    fn scatter(&self, grad_plane: &mut [T], g: T) {
        for (y, x, wgt) in self.corners() {
            if let Some(i) = self.idx(y, x) {
                grad_plane[i] += wgt * g;
            }
        }
    }

    /// Derivative of the sample with respect to pixel-space (x, y).
    fn coord_grad(&self, plane: &[T]) -> (T, T) {
        let v00 = self.read(plane, self.y0, self.x0);
        let v01 = self.read(plane, self.y0, self.x0 + 1);
        let v10 = self.read(plane, self.y0 + 1, self.x0);
        let v11 = self.read(plane, self.y0 + 1, self.x0 + 1);
        let (fx, fy) = (self.fx, self.fy);
        let dx = (v01 - v00) * (T::ONE - fy) + (v11 - v10) * fy;
        let dy = (v10 - v00) * (T::ONE - fx) + (v11 - v01) * fx;
        (dx, dy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(
        x: &Tensor<f64>,
        f: &dyn Fn(&mut Graph<f64>, Var) -> Var,
        h: f64,
    ) -> Tensor<f64> {
        let mut out = Tensor::zeros(x.shape());
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let mut g = Graph::new();
            let v = g.leaf(xp);
            let l = f(&mut g, v);
            let fp = g.scalar(l);
            let mut g = Graph::new();
            let v = g.leaf(xm);
            let l = f(&mut g, v);
            let fm = g.scalar(l);
            out.data_mut()[i] = (fp - fm) / (2.0 * h);
        }
        out
    }

    fn check(x: Tensor<f64>, f: &dyn Fn(&mut Graph<f64>, Var) -> Var) {
        let mut g = Graph::new();
        let v = g.leaf(x.clone());
        let l = f(&mut g, v);
        let grads = g.backward(l);
        let analytic = grads.get(v).expect("gradient").clone();
        let numeric = numeric_grad(&x, f, 1e-6);
        for (a, n) in analytic.data().iter().zip(numeric.data()) {
            let denom = a.abs().max(n.abs()).max(1e-3);
            assert!((a - n).abs() / denom < 1e-5, "analytic {a} vs numeric {n}");
        }
    }

    fn seeded(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Tensor::from_fn(shape, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let w = seeded([3, 2, 3, 3], 1);
        let b = seeded([1, 3, 1, 1], 2);
        check(seeded([2, 2, 5, 4], 3), &move |g, x| {
            let wv = g.constant(w.clone());
            let bv = g.constant(b.clone());
            let y = g.conv2d(x, wv, Some(bv), 2, 1);
            let y = g.square(y);
            g.sum(y)
        });
        let x = seeded([1, 2, 4, 4], 4);
        check(seeded([3, 2, 3, 3], 5), &move |g, w| {
            let xv = g.constant(x.clone());
            let y = g.conv2d(xv, w, None, 1, 1);
            let y = g.square(y);
            g.mean(y)
        });
    }

    #[test]
    fn norm_and_activation_gradients() {
        check(seeded([2, 3, 3, 3], 7), &|g, x| {
            let y = g.instance_norm(x);
            let y = g.leaky_relu(y, 0.2);
            let y = g.tanh(y);
            let z = g.sigmoid(y);
            let z = g.mul(z, y);
            g.sum(z)
        });
        check(seeded([1, 4, 2, 3], 8), &|g, x| {
            let y = g.softmax_channels(x);
            let y = g.log_clamp(y, 1e-9);
            let y = g.slice_channels(y, 1, 2);
            g.mean(y)
        });
        check(seeded([1, 3, 2, 2], 9), &|g, x| {
            let y = g.l2_normalize_channels(x);
            let y = g.upsample_nearest(y, 3, 5);
            let s = g.sum_channels(y);
            let s = g.square(s);
            g.sum(s)
        });
    }

    #[test]
    fn correlation_and_broadcast_gradients() {
        let b = seeded([1, 3, 2, 2], 11);
        check(seeded([1, 3, 2, 3], 12), &move |g, a| {
            let bv = g.leaf(b.clone());
            let c = g.correlation(a, bv);
            let c = g.square(c);
            g.sum(c)
        });
        let a = seeded([1, 3, 2, 3], 13);
        check(seeded([1, 3, 2, 2], 14), &move |g, b| {
            let av = g.constant(a.clone());
            let c = g.correlation(av, b);
            let c = g.square(c);
            g.sum(c)
        });
        let img = seeded([2, 3, 2, 3], 15);
        check(seeded([2, 1, 2, 3], 16), &move |g, m| {
            let iv = g.constant(img.clone());
            let p = g.mul(iv, m);
            let q = g.sub(p, m);
            let q = g.add(q, iv);
            let q = g.crop_rows(q, 1, 1);
            let q = g.abs(q);
            g.sum(q)
        });
    }

    #[test]
    fn grid_sample_gradients_away_from_kinks() {
        let img = seeded([1, 2, 4, 5], 21);
        // Interior, off-lattice sampling points.
        let grid = Tensor::from_vec(
            [1, 2, 1, 3],
            vec![-0.37, 0.11, 0.58, -0.41, 0.23, 0.62],
        );
        let gi = grid.clone();
        check(img.clone(), &move |g, im| {
            let gv = g.constant(gi.clone());
            let y = g.grid_sample(im, gv);
            let y = g.square(y);
            g.sum(y)
        });
        check(grid, &move |g, gr| {
            let iv = g.constant(img.clone());
            let y = g.grid_sample(iv, gr);
            let y = g.square(y);
            g.sum(y)
        });
    }

    #[test]
    fn shared_parameter_binding_accumulates() {
        let w = Arc::new(Tensor::<f64>::from_vec([1, 1, 1, 1], vec![2.0]));
        let mut g = Graph::new();
        let a = g.bind_param(7, 0, &w, false);
        let b = g.bind_param(7, 0, &w, false);
        assert_eq!(a, b);
        let x = g.constant(Tensor::from_vec([1, 1, 1, 1], vec![3.0]));
        let y1 = g.mul(a, x);
        let y2 = g.mul(b, x);
        let s = g.add(y1, y2);
        let grads = g.backward(s);
        assert_eq!(grads.get(a).unwrap().data()[0], 6.0);
    }

    #[test]
    fn inference_graph_keeps_no_gradients() {
        let mut g = Graph::<f32>::inference();
        let x = g.leaf(Tensor::full([1, 1, 2, 2], 1.0));
        let y = g.square(x);
        let s = g.sum(y);
        assert_eq!(g.scalar(s), 4.0);
        let grads = g.backward(s);
        assert!(grads.get(x).is_none());
    }
}

