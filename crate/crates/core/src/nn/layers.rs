use super::graph::{Graph, Var};
use super::params::ParamStore;

const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug)]
pub struct Conv2d {
    weight: usize,
    bias: Option<usize>,
    stride: usize,
    pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let weight = store.add_normal(format!("{name}.weight"), [cout, cin, k, k], INIT_STD);
        let bias = bias.then(|| store.add_zeros(format!("{name}.bias"), [1, cout, 1, 1]));
        Self {
            weight,
            bias,
            stride,
            pad,
        }
    }

    /// Same-size 3×3 convolution.
    pub fn same3(store: &mut ParamStore, name: &str, cin: usize, cout: usize, bias: bool) -> Self {
        Self::new(store, name, cin, cout, 3, 1, 1, bias)
    }

    /// Halving 3×3 convolution (output is `ceil(in / 2)` per axis).
    pub fn down3(store: &mut ParamStore, name: &str, cin: usize, cout: usize, bias: bool) -> Self {
        Self::new(store, name, cin, cout, 3, 2, 1, bias)
    }

    pub fn pointwise(store: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Self {
        Self::new(store, name, cin, cout, 1, 1, 0, true)
    }

    /// Zero-initialize the weights (and bias) so the layer starts as a
    /// constant-zero map.
    pub fn zero_init(self, store: &mut ParamStore) -> Self {
        store.value_mut(self.weight).data_mut().fill(0.0);
        if let Some(b) = self.bias {
            store.value_mut(b).data_mut().fill(0.0);
        }
        self
    }

    pub fn forward(&self, g: &mut Graph<f32>, store: &ParamStore, x: Var) -> Var {
        let w = store.var(g, self.weight);
        let b = self.bias.map(|b| store.var(g, b));
        g.conv2d(x, w, b, self.stride, self.pad)
    }
}

/// Fully connected layer over a flattened feature map.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    conv: Conv2d,
    fan_in: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            conv: Conv2d::new(store, name, fan_in, fan_out, 1, 1, 0, true),
            fan_in,
        }
    }

    pub fn zero_init(mut self, store: &mut ParamStore) -> Self {
        self.conv = self.conv.zero_init(store);
        self
    }

    pub fn forward(&self, g: &mut Graph<f32>, store: &ParamStore, x: Var) -> Var {
        let n = g.shape(x)[0];
        let flat = g.reshape(x, [n, self.fan_in, 1, 1]);
        self.conv.forward(g, store, flat)
    }
}

/// Encoder/decoder with skip connections. Every encoder stage halves the
/// resolution (rounding up), decoder stages upsample back to the matching
/// skip size, and a full-resolution head adds a pointwise projection of the
/// raw input so pixel-exact inputs (masks, keypoints) reach the output.
#[derive(Clone, Debug)]
pub struct UNet {
    down: Vec<Conv2d>,
    up: Vec<Conv2d>,
    head: Conv2d,
    head_skip: Conv2d,
    out: Conv2d,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl UNet {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        base: usize,
        depth: usize,
    ) -> Self {
        assert!(depth >= 2, "U-Net needs at least two stages");
        let widths: Vec<usize> = (0..depth).map(|i| (base << i).min(base * 16)).collect();
        let mut down = Vec::with_capacity(depth);
        let mut cin = in_channels;
        for (i, &w) in widths.iter().enumerate() {
            let plain = i == 0 || i == depth - 1;
            down.push(Conv2d::down3(store, &format!("{name}.down{i}"), cin, w, plain));
            cin = w;
        }
        let mut up = Vec::with_capacity(depth - 1);
        for i in (1..depth).rev() {
            let prev = widths[i];
            up.push(Conv2d::same3(
                store,
                &format!("{name}.up{i}"),
                prev + widths[i - 1],
                widths[i - 1],
                false,
            ));
        }
        let head = Conv2d::same3(store, &format!("{name}.head"), widths[0], base, true);
        let head_skip = Conv2d::new(store, &format!("{name}.head_skip"), in_channels, base, 1, 1, 0, false);
        let out = Conv2d::pointwise(store, &format!("{name}.out"), base, out_channels);
        Self {
            down,
            up,
            head,
            head_skip,
            out,
            in_channels,
            out_channels,
        }
    }

    /// Raw output logits, same spatial size as the input.
    pub fn forward(&self, g: &mut Graph<f32>, store: &ParamStore, x: Var) -> Var {
        let depth = self.down.len();
        let mut skips = Vec::with_capacity(depth);
        let mut h = x;
        for (i, conv) in self.down.iter().enumerate() {
            h = conv.forward(g, store, h);
            if i != 0 && i != depth - 1 {
                h = g.instance_norm(h);
            }
            h = g.leaky_relu(h, 0.2);
            skips.push(h);
        }
        for (j, conv) in self.up.iter().enumerate() {
            let skip = skips[depth - 2 - j];
            let [_, _, sh, sw] = g.shape(skip);
            let u = g.upsample_nearest(h, sh, sw);
            let c = g.concat(&[u, skip]);
            h = conv.forward(g, store, c);
            h = g.instance_norm(h);
            h = g.relu(h);
        }
        let [_, _, ih, iw] = g.shape(x);
        let u = g.upsample_nearest(h, ih, iw);
        let h = self.head.forward(g, store, u);
        let skip = self.head_skip.forward(g, store, x);
        let h = g.add(h, skip);
        let h = g.relu(h);
        self.out.forward(g, store, h)
    }
}

/// Convolutional discriminator that scores overlapping patches.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator {
    layers: Vec<Conv2d>,
    score: Conv2d,
}

/// Patch scores plus intermediate activations (for feature matching).
pub struct DiscOutput {
    pub scores: Var,
    pub features: Vec<Var>,
}

impl PatchDiscriminator {
    pub fn new(store: &mut ParamStore, name: &str, in_channels: usize, widths: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut cin = in_channels;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Conv2d::down3(store, &format!("{name}.conv{i}"), cin, w, i == 0));
            cin = w;
        }
        let score = Conv2d::same3(store, &format!("{name}.score"), cin, 1, true);
        Self { layers, score }
    }

    pub fn forward(&self, g: &mut Graph<f32>, store: &ParamStore, x: Var) -> DiscOutput {
        let mut h = x;
        let mut features = Vec::with_capacity(self.layers.len());
        for (i, conv) in self.layers.iter().enumerate() {
            h = conv.forward(g, store, h);
            if i > 0 {
                h = g.instance_norm(h);
            }
            h = g.leaky_relu(h, 0.2);
            features.push(h);
        }
        let scores = self.score.forward(g, store, h);
        DiscOutput { scores, features }
    }
}
