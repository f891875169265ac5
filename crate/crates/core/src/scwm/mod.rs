//! Garment warping: a two-branch network regresses thin-plate-spline
//! displacements for the top and the bottom at once. The garment encoder is
//! shared, each garment's features are correlated against the model
//! features, and a per-garment head turns the correlation into TPS
//! parameters.

pub mod tps;

use std::path::{Path, PathBuf};

pub use tps::{pixel_coord, tps_grid, tps_kernel, warp, ControlGrid, SamplingGrid, TpsMap, TpsParams};

use crate::checkpoint::Checkpoint;
use crate::config::{ScwmConfig, TrainingConfig};
use crate::data::sample::part;
use crate::data::{class, load_all, CompactSample, DatasetManifest, GarmentRecord, ParsingMap, PoseMap, Resolution, NUM_KEYPOINTS};
use crate::error::{Error, Result};
use crate::losses;
use crate::nn::{lit, Adam, Conv2d, Graph, Linear, ParamStore, Real, Tensor, Var};
use crate::train::{self, derive_seed, Trainer};
use crate::wgpgm::{self, WgpgmGenerator};

pub const COMPONENT: &str = "scwm";
/// Top slice, bottom slice and pose heatmaps.
pub const MODEL_CHANNELS: usize = 2 + NUM_KEYPOINTS;
pub const GARMENT_CHANNELS: usize = 3;
pub const LOG_COLUMNS: &[&str] = &["color_top", "seg_top", "color_bottom", "seg_bottom", "tps", "total"];
const ENCODER_STAGES: usize = 3;
const LEAK: f64 = 0.2;

/// Top-garment and bottom-garment probability of a parsing, each
/// `[1, 1, H, W]`.
pub fn parsing_slices(parsing: &ParsingMap) -> (Tensor<f32>, Tensor<f32>) {
    let res = parsing.resolution();
    let shape = [1, 1, res.height, res.width];
    (
        Tensor::from_vec(shape, parsing.sum_classes(&class::TOP)),
        Tensor::from_vec(shape, parsing.sum_classes(&class::BOTTOM)),
    )
}

/// Inner products between every position of `a` (rows) and every position
/// of `b` (columns), returned as a `[1, 1, Pa, Pb]` volume. Inputs are
/// `[1, C, H, W]` and are expected to be unit-normalized per position.
pub fn correlation_match(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>> {
    let [na, ca, ha, wa] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if ca != cb {
        return Err(Error::ChannelMismatch(ca, cb));
    }
    if na != 1 || nb != 1 {
        return Err(Error::ShapeMismatch("correlation takes single feature maps".into()));
    }
    let mut g = Graph::inference();
    let (av, bv) = (g.constant(a.clone()), g.constant(b.clone()));
    let vol = g.correlation(av, bv);
    let v = g.value(vol);
    let (pa, pb) = (ha * wa, hb * wb);
    Ok(Tensor::from_fn([1, 1, pa, pb], |[_, _, i, j]| v.at([0, j, i / wa, i % wa])))
}

#[derive(Clone, Debug)]
struct Encoder {
    stages: Vec<Conv2d>,
}

impl Encoder {
    fn new(store: &mut ParamStore, name: &str, cin: usize, base: usize) -> Self {
        let mut stages = Vec::with_capacity(ENCODER_STAGES);
        let mut c = cin;
        for i in 0..ENCODER_STAGES {
            let out = base << i;
            stages.push(Conv2d::down3(store, &format!("{name}.{i}"), c, out, true));
            c = out;
        }
        Self { stages }
    }

    fn forward(&self, g: &mut Graph<f32>, store: &ParamStore, mut x: Var) -> Var {
        for s in &self.stages {
            x = s.forward(g, store, x);
            x = g.instance_norm(x);
            x = g.leaky_relu(x, LEAK);
        }
        g.l2_normalize_channels(x)
    }
}

#[derive(Clone, Debug)]
struct Regressor {
    mix: Conv2d,
    down: Conv2d,
    out: Linear,
}

impl Regressor {
    fn new(store: &mut ParamStore, name: &str, cin: usize, base: usize, feat: (usize, usize), k: usize) -> Self {
        let mix = Conv2d::same3(store, &format!("{name}.mix"), cin, base * 2, true);
        let down = Conv2d::down3(store, &format!("{name}.down"), base * 2, base, true);
        let fan_in = base * feat.0.div_ceil(2) * feat.1.div_ceil(2);
        let out = Linear::new(store, &format!("{name}.out"), fan_in, 2 * k);
        Self { mix, down, out }
    }

    fn forward(&self, g: &mut Graph<f32>, store: &ParamStore, x: Var) -> Var {
        let x = self.mix.forward(g, store, x);
        let x = g.leaky_relu(x, LEAK);
        let x = self.down.forward(g, store, x);
        let x = g.leaky_relu(x, LEAK);
        self.out.forward(g, store, x)
    }
}

/// Network regressing `(θ_top, θ_bottom)` in planar `[N, 2K, 1, 1]` layout.
#[derive(Clone, Debug)]
pub struct ScwmNetwork {
    pub store: ParamStore,
    pub grid: ControlGrid,
    pub res: Resolution,
    model: Encoder,
    garment: Encoder,
    head_top: Regressor,
    head_bottom: Regressor,
}

/// Spatial size after the encoders.
fn feature_size(res: Resolution) -> (usize, usize) {
    (0..ENCODER_STAGES).fold((res.height, res.width), |(h, w), _| (h.div_ceil(2), w.div_ceil(2)))
}

impl ScwmNetwork {
    pub fn new(cfg: &ScwmConfig, res: Resolution, seed: u64) -> Result<Self> {
        let grid = ControlGrid::new(cfg.grid_rows, cfg.grid_cols)?;
        let mut store = ParamStore::new(derive_seed(seed, "scwm.net"));
        let b = cfg.base_width;
        let feat = feature_size(res);
        let corr = feat.0 * feat.1;
        let model = Encoder::new(&mut store, "model", MODEL_CHANNELS, b);
        let garment = Encoder::new(&mut store, "garment", GARMENT_CHANNELS, b);
        let head_top = Regressor::new(&mut store, "head_top", corr, b, feat, grid.len());
        let head_bottom = Regressor::new(&mut store, "head_bottom", corr, b, feat, grid.len());
        Ok(Self {
            store,
            grid,
            res,
            model,
            garment,
            head_top,
            head_bottom,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.component != COMPONENT {
            return Err(Error::SchemaMismatch(format!(
                "expected a {COMPONENT} checkpoint, found {}",
                ckpt.component
            )));
        }
        let mut net = Self::new(&ckpt.config.scwm, ckpt.config.resolution, ckpt.config.seed)?;
        ckpt.group("net")
            .map_err(|_| Error::UninitializedModel("checkpoint has no warping parameters".into()))?;
        ckpt.load_trainable("net", &mut net.store, None)?;
        Ok(net)
    }

    /// Garment-branch features for a `[N, 3, H, W]` image.
    pub fn garment_features(&self, g: &mut Graph<f32>, image: Var) -> Var {
        self.garment.forward(g, &self.store, image)
    }

    /// `(θ_top, θ_bottom)` for `model` `[N, 19, H, W]` and the two garment
    /// images `[N, 3, H, W]`.
    pub fn forward_graph(&self, g: &mut Graph<f32>, model: Var, top: Var, bottom: Var) -> (Var, Var) {
        let m = self.model.forward(g, &self.store, model);
        let ft = self.garment_features(g, top);
        let fb = self.garment_features(g, bottom);
        let ct = g.correlation(m, ft);
        let cb = g.correlation(m, fb);
        (
            self.head_top.forward(g, &self.store, ct),
            self.head_bottom.forward(g, &self.store, cb),
        )
    }
}

/// Model-branch input `[1, 19, H, W]`.
pub fn model_input(top_slice: &Tensor<f32>, bottom_slice: &Tensor<f32>, pose: &PoseMap) -> Result<Tensor<f32>> {
    let res = pose.resolution();
    for (name, t) in [("top slice", top_slice), ("bottom slice", bottom_slice)] {
        if t.shape() != [1, 1, res.height, res.width] {
            return Err(Error::ShapeMismatch(format!("{name} is {:?}, pose is {res}", t.shape())));
        }
    }
    Ok(Tensor::concat_channels(&[top_slice, bottom_slice, &pose.to_tensor()]))
}

/// TPS parameters for the top and the bottom of one outfit.
pub fn scwm_forward(
    top_slice: &Tensor<f32>,
    bottom_slice: &Tensor<f32>,
    pose: &PoseMap,
    top: &GarmentRecord,
    bottom: &GarmentRecord,
    net: &ScwmNetwork,
) -> Result<(TpsParams, TpsParams)> {
    let res = pose.resolution();
    if res != net.res {
        return Err(Error::ShapeMismatch(format!("inputs are {res}, network expects {}", net.res)));
    }
    for (name, r) in [("top", top.resolution()), ("bottom", bottom.resolution())] {
        if r != res {
            return Err(Error::ShapeMismatch(format!("{name} garment is {r}, pose is {res}")));
        }
    }
    let input = model_input(top_slice, bottom_slice, pose)?;
    let mut g = Graph::inference();
    let m = g.constant(input);
    let t = g.constant(top.image.to_tensor());
    let b = g.constant(bottom.image.to_tensor());
    let (tt, tb) = net.forward_graph(&mut g, m, t, b);
    let out = |v: Var| TpsParams::from_planar(net.grid, g.value(v).data());
    Ok((out(tt)?, out(tb)?))
}

/// Warped image and one-hot segmentation of a garment.
pub fn warp_garment(garment: &GarmentRecord, grid: &SamplingGrid) -> Result<(Tensor<f32>, Tensor<f32>)> {
    Ok((warp(&garment.image.to_tensor(), grid)?, warp(&garment.seg_tensor(), grid)?))
}

/// What one garment should look like once worn: the region it covers in
/// the ground-truth parsing, the colors there and its part labels.
#[derive(Clone, Debug)]
pub struct GarmentTarget {
    /// `[1, 1, H, W]` region indicator.
    pub region: Tensor<f32>,
    pub count: usize,
    /// `[1, 3, H, W]` one-hot part labels inside the region.
    pub seg: Tensor<f32>,
}

impl GarmentTarget {
    fn from_labels(labels: &[u8], res: Resolution, main: u8, secondary: u8) -> Self {
        let hw = res.pixels();
        let mut region = vec![0.0; hw];
        let mut seg = vec![0.0; 3 * hw];
        for (p, &l) in labels.iter().enumerate() {
            let part = if l == main {
                part::MAIN
            } else if l == secondary {
                part::SECONDARY
            } else {
                continue;
            };
            region[p] = 1.0;
            seg[part as usize * hw + p] = 1.0;
        }
        let count = region.iter().filter(|&&v| v > 0.0).count();
        Self {
            region: Tensor::from_vec([1, 1, res.height, res.width], region),
            count,
            seg: Tensor::from_vec([1, 3, res.height, res.width], seg),
        }
    }
}

/// Warping targets for one sample.
#[derive(Clone, Debug)]
pub struct ScwmTargets {
    /// `[1, 3, H, W]` ground-truth model image.
    pub image: Tensor<f32>,
    pub top: GarmentTarget,
    pub bottom: GarmentTarget,
}

impl ScwmTargets {
    pub fn from_sample(s: &CompactSample) -> Self {
        let res = s.resolution();
        Self {
            image: s.model_image.to_tensor(),
            top: GarmentTarget::from_labels(&s.labels, res, class::TOP_TORSO, class::TOP_SLEEVES),
            bottom: GarmentTarget::from_labels(&s.labels, res, class::BOTTOM_HIPS, class::BOTTOM_LEGS),
        }
    }
}

/// Loss values; bottom terms are `None` when the sample has no bottom
/// region (dress outfits).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScwmLoss {
    pub color_top: f64,
    pub seg_top: f64,
    pub color_bottom: Option<f64>,
    pub seg_bottom: Option<f64>,
    pub total: f64,
}

impl ScwmLoss {
    pub fn bottom_skipped(&self) -> bool {
        self.color_bottom.is_none()
    }
}

/// Per-sample region weights `region / |region|` stacked over a batch, plus
/// the number of samples whose region is non-empty.
fn region_weights<T: Real>(targets: &[&GarmentTarget]) -> (Tensor<T>, usize) {
    let mut present = 0;
    let planes: Vec<Tensor<T>> = targets
        .iter()
        .map(|t| {
            if t.count == 0 {
                return Tensor::zeros(t.region.shape());
            }
            present += 1;
            let inv = 1.0 / t.count as f64;
            Tensor::from_vec(t.region.shape(), t.region.data().iter().map(|&v| lit::<T>(v as f64 * inv)).collect())
        })
        .collect();
    (Tensor::stack(&planes), present)
}

/// Loss terms on the tape. `None` marks a term with no target region in
/// any sample of the batch.
pub struct ScwmTerms {
    pub color_top: Var,
    pub seg_top: Var,
    pub color_bottom: Option<Var>,
    pub seg_bottom: Option<Var>,
    pub total: Var,
}

/// Color and segmentation L1 for both garments, each a mean over its
/// ground-truth region, averaged over the samples that have the region.
pub fn scwm_objective<T: Real>(
    g: &mut Graph<T>,
    warped: [Var; 4],
    targets: &[&ScwmTargets],
) -> Result<ScwmTerms> {
    let [top_img, top_seg, bt_img, bt_seg] = warped;
    let image = g.constant(Tensor::stack(&targets.iter().map(|t| t.image.cast::<T>()).collect::<Vec<_>>()));
    let term = |g: &mut Graph<T>, pick: fn(&ScwmTargets) -> &GarmentTarget, img: Var, seg: Var| {
        let gts: Vec<&GarmentTarget> = targets.iter().map(|t| pick(t)).collect();
        let (w, present) = region_weights::<T>(&gts);
        if present == 0 {
            return None;
        }
        let w = g.constant(w);
        let seg_t = g.constant(Tensor::stack(&gts.iter().map(|t| t.seg.cast::<T>()).collect::<Vec<_>>()));
        let color = losses::masked_l1(g, img, image, w, present as f64);
        let seg = losses::masked_l1(g, seg, seg_t, w, present as f64);
        Some((color, seg))
    };
    let (color_top, seg_top) = term(g, |t| &t.top, top_img, top_seg)
        .ok_or_else(|| Error::EmptyTargetRegion("top".into()))?;
    let bottom = term(g, |t| &t.bottom, bt_img, bt_seg);
    let mut parts = vec![(1.0, color_top), (1.0, seg_top)];
    if let Some((c, s)) = bottom {
        parts.push((1.0, c));
        parts.push((1.0, s));
    }
    let total = losses::weighted_sum(g, &parts);
    Ok(ScwmTerms {
        color_top,
        seg_top,
        color_bottom: bottom.map(|b| b.0),
        seg_bottom: bottom.map(|b| b.1),
        total,
    })
}

/// Loss of one sample's warped garments (each `[1, C, H, W]`).
pub fn scwm_loss(
    warped_top_img: &Tensor<f32>,
    warped_top_seg: &Tensor<f32>,
    warped_bt_img: &Tensor<f32>,
    warped_bt_seg: &Tensor<f32>,
    target: &CompactSample,
) -> Result<ScwmLoss> {
    let res = target.resolution();
    for (name, t, c) in [
        ("top image", warped_top_img, 3),
        ("top segmentation", warped_top_seg, 3),
        ("bottom image", warped_bt_img, 3),
        ("bottom segmentation", warped_bt_seg, 3),
    ] {
        if t.shape() != [1, c, res.height, res.width] {
            return Err(Error::ShapeMismatch(format!("warped {name} is {:?}, sample is {res}", t.shape())));
        }
    }
    let targets = ScwmTargets::from_sample(target);
    let mut g = Graph::<f64>::inference();
    let warped = [warped_top_img, warped_top_seg, warped_bt_img, warped_bt_seg].map(|t| g.constant(t.cast()));
    let terms = scwm_objective(&mut g, warped, &[&targets])?;
    Ok(ScwmLoss {
        color_top: g.scalar(terms.color_top),
        seg_top: g.scalar(terms.seg_top),
        color_bottom: terms.color_bottom.map(|v| g.scalar(v)),
        seg_bottom: terms.seg_bottom.map(|v| g.scalar(v)),
        total: g.scalar(terms.total),
    })
}

/// Displacement penalty `mean(θ²)` over both parameter sets.
pub fn tps_penalty<T: Real>(g: &mut Graph<T>, theta_top: Var, theta_bottom: Var) -> Var {
    let both = g.concat(&[theta_top, theta_bottom]);
    let sq = g.square(both);
    g.mean(sq)
}

/// Where the model-branch parsing slices come from during training.
pub enum ParsingSource {
    GroundTruth,
    Predicted(Box<WgpgmGenerator>),
}

pub struct ScwmTrainer {
    cfg: ScwmConfig,
    pub net: ScwmNetwork,
    map: TpsMap,
    opt: Adam,
    source: ParsingSource,
}

impl ScwmTrainer {
    pub fn new(cfg: &TrainingConfig, source: ParsingSource) -> Result<Self> {
        let c = cfg.scwm.clone();
        if c.lambda_tps < 0.0 || !c.lambda_tps.is_finite() {
            return Err(Error::NegativeWeight {
                name: "lambda_tps".into(),
                value: c.lambda_tps,
            });
        }
        let net = ScwmNetwork::new(&c, cfg.resolution, cfg.seed)?;
        let map = TpsMap::new(net.grid, cfg.resolution)?;
        let o = &c.optim;
        let opt = Adam::new(&net.store, o.lr, o.beta1, o.beta2);
        Ok(Self {
            cfg: c,
            net,
            map,
            opt,
            source,
        })
    }

    fn slices(&self, s: &CompactSample) -> Result<(Tensor<f32>, Tensor<f32>)> {
        match &self.source {
            ParsingSource::GroundTruth => Ok(parsing_slices(&s.parsing())),
            ParsingSource::Predicted(gen) => {
                let mask = s.hem()?.to_mask();
                let p = gen.predict(&wgpgm::sample_input(s, &mask)?)?;
                Ok(parsing_slices(&ParsingMap::from_tensor(&p, 0)?))
            }
        }
    }
}

impl Trainer for ScwmTrainer {
    fn component(&self) -> &'static str {
        COMPONENT
    }

    fn optim(&self) -> &crate::config::OptimConfig {
        &self.cfg.optim
    }

    fn log_columns(&self) -> &'static [&'static str] {
        LOG_COLUMNS
    }

    fn train_step(&mut self, batch: &[&CompactSample]) -> Result<Vec<f64>> {
        let mut models = Vec::with_capacity(batch.len());
        let (mut tops, mut tops_seg, mut bts, mut bts_seg) = (vec![], vec![], vec![], vec![]);
        let mut targets = Vec::with_capacity(batch.len());
        for s in batch {
            let (ts, bs) = self.slices(s)?;
            models.push(model_input(&ts, &bs, &s.pose_map())?);
            let bottom = s.bottom_or_absent();
            tops.push(s.top.image.to_tensor());
            tops_seg.push(s.top.seg_tensor());
            bts.push(bottom.image.to_tensor());
            bts_seg.push(bottom.seg_tensor());
            targets.push(ScwmTargets::from_sample(s));
        }
        let mut g = Graph::new();
        let m = g.constant(Tensor::stack(&models));
        let top_img = g.constant(Tensor::stack(&tops));
        let bt_img = g.constant(Tensor::stack(&bts));
        let (tt, tb) = self.net.forward_graph(&mut g, m, top_img, bt_img);
        let grid_t = self.map.grid_var(&mut g, tt);
        let grid_b = self.map.grid_var(&mut g, tb);
        let top_seg = g.constant(Tensor::stack(&tops_seg));
        let bt_seg = g.constant(Tensor::stack(&bts_seg));
        let warped = [
            g.grid_sample(top_img, grid_t),
            g.grid_sample(top_seg, grid_t),
            g.grid_sample(bt_img, grid_b),
            g.grid_sample(bt_seg, grid_b),
        ];
        let refs: Vec<&ScwmTargets> = targets.iter().collect();
        let terms = scwm_objective(&mut g, warped, &refs)?;
        let reg = tps_penalty(&mut g, tt, tb);
        let total = losses::weighted_sum(&mut g, &[(1.0, terms.total), (self.cfg.lambda_tps, reg)]);
        let grads = g.backward(total);
        self.net.store.accumulate(&g, &grads);
        self.opt.step(&mut self.net.store);
        let val = |v: Option<Var>| v.map_or(0.0, |v| g.scalar(v) as f64);
        Ok(vec![
            val(Some(terms.color_top)),
            val(Some(terms.seg_top)),
            val(terms.color_bottom),
            val(terms.seg_bottom),
            val(Some(reg)),
            val(Some(total)),
        ])
    }

    fn write_state(&self, ckpt: &mut Checkpoint) {
        ckpt.put_trainable("net", &self.net.store, Some(&self.opt));
    }

    fn read_state(&mut self, ckpt: &Checkpoint) -> Result<()> {
        ckpt.load_trainable("net", &mut self.net.store, Some(&mut self.opt))
    }
}

fn parsing_source(cfg: &TrainingConfig, wgpgm_checkpoint: Option<&Path>) -> Result<ParsingSource> {
    if cfg.scwm.teacher_forcing {
        return Ok(ParsingSource::GroundTruth);
    }
    let path = wgpgm_checkpoint.ok_or_else(|| {
        Error::Config("scwm.teacher_forcing=false needs a wgpgm checkpoint".into())
    })?;
    let gen = WgpgmGenerator::from_checkpoint(&Checkpoint::load_component(path, wgpgm::COMPONENT)?)?;
    Ok(ParsingSource::Predicted(Box::new(gen)))
}

/// Train on preloaded samples; see [`train_scwm`].
pub fn train_scwm_samples(
    samples: &[CompactSample],
    cfg: &TrainingConfig,
    wgpgm_checkpoint: Option<&Path>,
    resume: Option<&Path>,
) -> Result<PathBuf> {
    let mut trainer = ScwmTrainer::new(cfg, parsing_source(cfg, wgpgm_checkpoint)?)?;
    train::run(&mut trainer, samples, cfg, resume)
}

/// Train the warping network. Model-branch slices come from the
/// ground-truth parsing unless `scwm.teacher_forcing` is off, in which case
/// the parsing generator checkpoint supplies them.
pub fn train_scwm(
    manifest: &DatasetManifest,
    cfg: &TrainingConfig,
    wgpgm_checkpoint: Option<&Path>,
    resume: Option<&Path>,
) -> Result<PathBuf> {
    wgpgm::require_train_split(manifest)?;
    let samples = load_all(manifest)?;
    train_scwm_samples(&samples, cfg, wgpgm_checkpoint, resume)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageRgb;
    use crate::data::sample::GarmentKind;

    fn res() -> Resolution {
        Resolution::new(32, 24).unwrap()
    }

    fn cfg() -> TrainingConfig {
        let mut c = TrainingConfig::default();
        c.resolution = res();
        c.scwm.base_width = 8;
        c
    }

    fn sample(index: usize) -> CompactSample {
        CompactSample::synthetic(res(), 3, index)
    }

    fn forward(net: &ScwmNetwork, s: &CompactSample, swap: bool) -> (TpsParams, TpsParams) {
        let (ts, bs) = parsing_slices(&s.parsing());
        let bottom = s.bottom_or_absent();
        let (a, b) = if swap { (&bottom, &s.top) } else { (&s.top, &bottom) };
        scwm_forward(&ts, &bs, &s.pose_map(), a, b, net).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let a = Tensor::<f32>::from_fn([1, 4, 3, 2], |[_, c, y, x]| ((c * 5 + y * 3 + x * 7) % 11) as f32 - 5.0);
        let mut g = Graph::inference();
        let av = g.constant(a);
        let n = g.l2_normalize_channels(av);
        let a = g.value(n).clone();
        let vol = correlation_match(&a, &a).unwrap();
        assert_eq!(vol.shape(), [1, 1, 6, 6]);
        for i in 0..6 {
            let row_max = (0..6).map(|j| vol.at([0, 0, i, j])).fold(f32::MIN, f32::max);
            assert!((vol.at([0, 0, i, i]) - row_max).abs() < 1e-6);
            assert!((vol.at([0, 0, i, i]) - 1.0).abs() < 1e-5);
        }
        let e0 = Tensor::<f32>::from_fn([1, 2, 2, 2], |[_, c, _, _]| if c == 0 { 1.0 } else { 0.0 });
        let e1 = Tensor::<f32>::from_fn([1, 2, 3, 1], |[_, c, _, _]| if c == 1 { 1.0 } else { 0.0 });
        let vol = correlation_match(&e0, &e1).unwrap();
        assert_eq!(vol.shape(), [1, 1, 4, 3]);
        assert!(vol.data().iter().all(|&v| v == 0.0));
        assert!(matches!(correlation_match(&e0, &a), Err(Error::ChannelMismatch(2, 4))));
    }

    #[test]
    fn forward_shapes_determinism_and_asymmetry() {
        let net = ScwmNetwork::new(&cfg().scwm, res(), 1).unwrap();
        let s = sample(0);
        let (t, b) = forward(&net, &s, false);
        assert_eq!((t.values.len(), b.values.len()), (50, 50));
        assert!(t.is_finite() && b.is_finite());
        assert_eq!(forward(&net, &s, false), (t.clone(), b.clone()));
        let (ts, bs) = forward(&net, &s, true);
        assert!(ts != t && bs != b);
    }

    #[test]
    fn garment_branch_is_shared() {
        let mut net = ScwmNetwork::new(&cfg().scwm, res(), 1).unwrap();
        let s = sample(1);
        let (t0, b0) = forward(&net, &s, false);
        let idx = net.store.names().iter().position(|n| n == "garment.0.weight").unwrap();
        for v in net.store.value_mut(idx).data_mut() {
            *v *= 1.5;
        }
        let (t1, b1) = forward(&net, &s, false);
        assert!(t1 != t0 && b1 != b0);
        assert!(!net.store.names().iter().any(|n| n.starts_with("garment_b")));
    }

    #[test]
    fn loss_examples() {
        let s = sample(1);
        assert!(s.bottom.is_some());
        let t = ScwmTargets::from_sample(&s);
        let zero = |c| Tensor::<f32>::zeros([1, c, 32, 24]);
        let shift = |x: &Tensor<f32>, d: f32| x.map(|v| v + d);
        let l = scwm_loss(&t.image, &t.top.seg, &t.image, &t.bottom.seg, &s).unwrap();
        assert_eq!(l.total, 0.0);
        let l = scwm_loss(&shift(&t.image, 0.25), &t.top.seg, &shift(&t.image, -0.25), &t.bottom.seg, &s).unwrap();
        assert!((l.total - 0.5).abs() < 1e-6, "{l:?}");
        assert!((l.color_bottom.unwrap() - 0.25).abs() < 1e-6);

        let dress = (0..20).map(sample).find(|s| s.bottom.is_none()).expect("a dress sample");
        let t = ScwmTargets::from_sample(&dress);
        let l = scwm_loss(&t.image, &t.top.seg, &zero(3), &zero(3), &dress).unwrap();
        assert!(l.bottom_skipped() && l.seg_bottom.is_none());
        assert_eq!(l.total, 0.0);
        assert!(matches!(
            scwm_loss(&zero(3), &zero(3), &zero(3), &zero(1), &dress),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn white_garment_on_white_still_has_seg_signal() {
        let mut s = sample(1);
        s.model_image = ImageRgb::filled(res(), [1.0; 3]);
        let seg = s.top.seg().to_vec();
        s.top = GarmentRecord::new(GarmentKind::Top, ImageRgb::filled(res(), [1.0; 3]), seg).unwrap();
        let net = ScwmNetwork::new(&cfg().scwm, res(), 2).unwrap();
        let (t, b) = forward(&net, &s, false);
        let bottom = s.bottom_or_absent();
        let (ti, tsg) = warp_garment(&s.top, &tps_grid(&t, net.grid, res()).unwrap()).unwrap();
        let (bi, bsg) = warp_garment(&bottom, &tps_grid(&b, net.grid, res()).unwrap()).unwrap();
        let l = scwm_loss(&ti, &tsg, &bi, &bsg, &s).unwrap();
        assert!(l.seg_top > 0.01, "{l:?}");
    }

    #[test]
    fn training_reduces_loss_and_epochs_zero_keeps_init() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg();
        c.out_dir = dir.path().to_path_buf();
        c.scwm.optim.epochs = 0;
        let samples: Vec<_> = (0..2).map(sample).collect();
        let path = train_scwm_samples(&samples, &c, None, None).unwrap();
        let net = ScwmNetwork::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
        assert!(net.store.bit_equal(&ScwmNetwork::new(&c.scwm, res(), c.seed).unwrap().store));

        let mut tr = ScwmTrainer::new(&c, ParsingSource::GroundTruth).unwrap();
        let batch: Vec<&CompactSample> = samples.iter().collect();
        let first = tr.train_step(&batch).unwrap();
        let mut last = first.clone();
        for _ in 0..30 {
            last = tr.train_step(&batch).unwrap();
        }
        assert!(last[5] < first[5], "{first:?} -> {last:?}");

        c.scwm.teacher_forcing = false;
        assert!(matches!(train_scwm_samples(&samples, &c, None, None), Err(Error::Config(_))));
    }
}
