//! Image synthesis: a U-Net predicts a base image and two composition masks
//! from the agnostic image, pose, parsing and warped garments, and the final
//! image is composed bottom-over-base, top-over-that, then preserved body
//! pixels on top.

use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::{TomConfig, TrainingConfig};
use crate::data::{
    load_all, preserve_mask, CompactSample, DatasetManifest, ImageRgb, ParsingMap, PoseMap, Resolution,
    NUM_CLASSES, NUM_KEYPOINTS,
};
use crate::error::{Error, Result};
use crate::losses;
use crate::nn::{Adam, Graph, ParamStore, PatchDiscriminator, Real, Tensor, UNet, Var};
use crate::scwm::{self, ScwmNetwork, TpsMap};
use crate::train::{self, derive_seed, Trainer};
use crate::wgpgm::{self, WgpgmGenerator};

pub const COMPONENT: &str = "tom";
/// Agnostic image, pose, parsing, warped top, warped bottom.
pub const INPUT_CHANNELS: usize = 3 + NUM_KEYPOINTS + NUM_CLASSES + 3 + 3;
/// Base image plus the top and bottom mask logits.
pub const OUTPUT_CHANNELS: usize = 5;
pub const LOG_COLUMNS: &[&str] = &["l1", "adv", "fm", "total", "d"];

/// Network outputs for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TomOutput {
    pub base: ImageRgb,
    pub mask_top: Vec<f32>,
    pub mask_bottom: Vec<f32>,
}

/// Stack the network inputs into a `[1, 43, H, W]` tensor.
pub fn tom_input(
    agnostic: &ImageRgb,
    pose: &PoseMap,
    parsing: &ParsingMap,
    warped_top: &ImageRgb,
    warped_bottom: &ImageRgb,
) -> Result<Tensor<f32>> {
    let res = agnostic.resolution();
    for (name, r) in [
        ("pose", pose.resolution()),
        ("parsing", parsing.resolution()),
        ("warped top", warped_top.resolution()),
        ("warped bottom", warped_bottom.resolution()),
    ] {
        if r != res {
            return Err(Error::ShapeMismatch(format!("{name} is {r}, agnostic image is {res}")));
        }
    }
    Ok(Tensor::concat_channels(&[
        &agnostic.to_tensor(),
        &pose.to_tensor(),
        &parsing.to_tensor(),
        &warped_top.to_tensor(),
        &warped_bottom.to_tensor(),
    ]))
}

/// Graph form of the composition; masks are `[N, 1, H, W]`, images
/// `[N, 3, H, W]`.
#[allow(clippy::too_many_arguments)]
pub fn compose_graph<T: Real>(
    g: &mut Graph<T>,
    agnostic: Var,
    preserve: Var,
    base: Var,
    mask_top: Var,
    mask_bottom: Var,
    top: Var,
    bottom: Var,
) -> Var {
    let blend = |g: &mut Graph<T>, m: Var, over: Var, under: Var| {
        let a = g.mul(m, over);
        let keep = g.one_minus(m);
        let b = g.mul(keep, under);
        g.add(a, b)
    };
    let lower = blend(g, mask_bottom, bottom, base);
    let clothed = blend(g, mask_top, top, lower);
    blend(g, preserve, agnostic, clothed)
}

fn mask_tensor(res: Resolution, m: &[f32], name: &str) -> Result<Tensor<f32>> {
    if m.len() != res.pixels() {
        return Err(Error::ShapeMismatch(format!("{name} has {} values, image is {res}", m.len())));
    }
    Ok(Tensor::from_vec([1, 1, res.height, res.width], m.to_vec()))
}

/// Final image from the network outputs and the compositing inputs.
pub fn compose(
    agnostic: &ImageRgb,
    preserve: &[f32],
    out: &TomOutput,
    warped_top: &ImageRgb,
    warped_bottom: &ImageRgb,
) -> Result<ImageRgb> {
    let res = agnostic.resolution();
    for (name, r) in [
        ("base", out.base.resolution()),
        ("warped top", warped_top.resolution()),
        ("warped bottom", warped_bottom.resolution()),
    ] {
        if r != res {
            return Err(Error::ShapeMismatch(format!("{name} is {r}, agnostic image is {res}")));
        }
    }
    let mut g = Graph::<f32>::inference();
    let vars = [
        g.constant(agnostic.to_tensor()),
        g.constant(mask_tensor(res, preserve, "preserve mask")?),
        g.constant(out.base.to_tensor()),
        g.constant(mask_tensor(res, &out.mask_top, "top mask")?),
        g.constant(mask_tensor(res, &out.mask_bottom, "bottom mask")?),
        g.constant(warped_top.to_tensor()),
        g.constant(warped_bottom.to_tensor()),
    ];
    let [a, p, b, mt, mb, t, bt] = vars;
    let v = compose_graph(&mut g, a, p, b, mt, mb, t, bt);
    ImageRgb::from_tensor(g.value(v), 0)
}

pub struct TomGenerator {
    pub store: ParamStore,
    net: UNet,
}

/// Graph outputs of the generator.
pub struct TomVars {
    pub base: Var,
    pub mask_top: Var,
    pub mask_bottom: Var,
}

impl TomGenerator {
    pub fn new(cfg: &TomConfig, seed: u64) -> Self {
        let mut store = ParamStore::new(derive_seed(seed, "tom.gen"));
        let net = UNet::new(&mut store, "gen", INPUT_CHANNELS, OUTPUT_CHANNELS, cfg.base_width, cfg.depth);
        Self { store, net }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.component != COMPONENT {
            return Err(Error::SchemaMismatch(format!(
                "expected a {COMPONENT} checkpoint, found {}",
                ckpt.component
            )));
        }
        let mut gen = Self::new(&ckpt.config.tom, ckpt.config.seed);
        ckpt.group("gen")
            .map_err(|_| Error::UninitializedModel("checkpoint has no synthesis parameters".into()))?;
        ckpt.load_trainable("gen", &mut gen.store, None)?;
        Ok(gen)
    }

    pub fn forward_graph(&self, g: &mut Graph<f32>, x: Var) -> TomVars {
        let out = self.net.forward(g, &self.store, x);
        let base = g.slice_channels(out, 0, 3);
        let base = g.tanh(base);
        let base = g.affine(base, 0.5, 0.5);
        let masks = g.slice_channels(out, 3, 2);
        let masks = g.sigmoid(masks);
        TomVars {
            base,
            mask_top: g.slice_channels(masks, 0, 1),
            mask_bottom: g.slice_channels(masks, 1, 1),
        }
    }
}

/// Base image and composition masks for one set of inputs.
pub fn tom_forward(
    agnostic: &ImageRgb,
    pose: &PoseMap,
    parsing: &ParsingMap,
    warped_top: &ImageRgb,
    warped_bottom: &ImageRgb,
    gen: &TomGenerator,
) -> Result<TomOutput> {
    let input = tom_input(agnostic, pose, parsing, warped_top, warped_bottom)?;
    let mut g = Graph::inference();
    let x = g.constant(input);
    let v = gen.forward_graph(&mut g, x);
    Ok(TomOutput {
        base: ImageRgb::from_tensor(g.value(v.base), 0)?,
        mask_top: g.value(v.mask_top).data().to_vec(),
        mask_bottom: g.value(v.mask_bottom).data().to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TomWeights {
    pub l1: f64,
    pub adv: f64,
    pub fm: f64,
}

impl TomWeights {
    pub fn new(l1: f64, adv: f64, fm: f64) -> Result<Self> {
        for (name, value) in [("lambda_l1", l1), ("lambda_adv", adv), ("lambda_fm", fm)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::NegativeWeight {
                    name: name.into(),
                    value,
                });
            }
        }
        Ok(Self { l1, adv, fm })
    }

    pub fn from_config(cfg: &TomConfig) -> Result<Self> {
        Self::new(cfg.lambda_l1, cfg.lambda_adv, cfg.lambda_fm)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TomLoss {
    pub l1: f64,
    pub adv: f64,
    pub fm: f64,
    pub total: f64,
}

/// Weighted synthesis objective on the tape.
pub fn tom_objective<T: Real>(g: &mut Graph<T>, pred: Var, target: Var, adv: Var, fm: Var, w: &TomWeights) -> (Var, Var) {
    let l1 = losses::l1(g, pred, target);
    let total = losses::weighted_sum(g, &[(w.l1, l1), (w.adv, adv), (w.fm, fm)]);
    (l1, total)
}

/// Objective for one prediction given the discriminator's scores on it and
/// its features on the real and predicted images.
pub fn tom_loss(
    pred: &ImageRgb,
    target: &ImageRgb,
    fake_scores: &[f32],
    real_feats: &[Tensor<f32>],
    fake_feats: &[Tensor<f32>],
    weights: &TomWeights,
) -> Result<TomLoss> {
    if pred.resolution() != target.resolution() {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}, target is {}",
            pred.resolution(),
            target.resolution()
        )));
    }
    let weights = TomWeights::new(weights.l1, weights.adv, weights.fm)?;
    let fake: Vec<f64> = fake_scores.iter().map(|&v| v as f64).collect();
    let (_, adv) = losses::adv_losses_lsgan(&fake, &fake)?;
    let cast = |v: &[Tensor<f32>]| v.iter().map(|t| t.cast::<f64>()).collect::<Vec<_>>();
    let fm = losses::feature_matching_loss(&cast(real_feats), &cast(fake_feats))?;
    let mut g = Graph::<f64>::inference();
    let p = g.constant(pred.to_tensor().cast());
    let t = g.constant(target.to_tensor().cast());
    let a = g.constant(Tensor::scalar(adv));
    let f = g.constant(Tensor::scalar(fm));
    let (l1, total) = tom_objective(&mut g, p, t, a, f, &weights);
    Ok(TomLoss {
        l1: g.scalar(l1),
        adv,
        fm,
        total: g.scalar(total),
    })
}

/// The model image restricted to one garment's ground-truth region (zero
/// elsewhere): what a perfect warp of that garment would produce.
pub fn fitted_warp(s: &CompactSample, classes: &[usize]) -> ImageRgb {
    let res = s.resolution();
    ImageRgb::from_fn(res, |y, x| {
        if classes.contains(&(s.labels[y * res.width + x] as usize)) {
            s.model_image.get(y, x)
        } else {
            [0.0; 3]
        }
    })
}

/// Upstream networks used when training on predicted inputs.
pub struct Upstream {
    pub wgpgm: WgpgmGenerator,
    pub scwm: ScwmNetwork,
}

/// Parsing and warped garments for a sample, either from ground truth or
/// from the upstream networks.
pub fn tom_conditioning(s: &CompactSample, upstream: Option<&Upstream>) -> Result<(ParsingMap, ImageRgb, ImageRgb)> {
    match upstream {
        None => Ok((
            s.parsing(),
            fitted_warp(s, &crate::data::class::TOP),
            fitted_warp(s, &crate::data::class::BOTTOM),
        )),
        Some(up) => {
            let mask = s.hem()?.to_mask();
            let prob = up.wgpgm.predict(&wgpgm::sample_input(s, &mask)?)?;
            let parsing = ParsingMap::from_tensor(&prob, 0)?;
            let hard = ParsingMap::from_labels(s.resolution(), &parsing.labels())?;
            let (ts, bs) = scwm::parsing_slices(&hard);
            let bottom = s.bottom_or_absent();
            let (tt, tb) = scwm::scwm_forward(&ts, &bs, &s.pose_map(), &s.top, &bottom, &up.scwm)?;
            let map = TpsMap::new(up.scwm.grid, s.resolution())?;
            let (wt, _) = scwm::warp_garment(&s.top, &map.grid_for(&tt)?)?;
            let (wb, _) = scwm::warp_garment(&bottom, &map.grid_for(&tb)?)?;
            Ok((hard, ImageRgb::from_tensor(&wt, 0)?, ImageRgb::from_tensor(&wb, 0)?))
        }
    }
}

pub struct TomTrainer {
    cfg: TomConfig,
    weights: TomWeights,
    pub gen: TomGenerator,
    gen_opt: Adam,
    disc_store: ParamStore,
    disc: PatchDiscriminator,
    disc_opt: Adam,
    upstream: Option<Upstream>,
}

impl TomTrainer {
    pub fn new(cfg: &TrainingConfig, upstream: Option<Upstream>) -> Result<Self> {
        let c = cfg.tom.clone();
        let weights = TomWeights::from_config(&c)?;
        let gen = TomGenerator::new(&c, cfg.seed);
        let mut disc_store = ParamStore::new(derive_seed(cfg.seed, "tom.disc"));
        let b = c.disc_base_width;
        let disc = PatchDiscriminator::new(&mut disc_store, "d", INPUT_CHANNELS + 3, &[b, 2 * b, 4 * b]);
        let o = &c.optim;
        let gen_opt = Adam::new(&gen.store, o.lr, o.beta1, o.beta2);
        let disc_opt = Adam::new(&disc_store, o.lr, o.beta1, o.beta2);
        Ok(Self {
            cfg: c,
            weights,
            gen,
            gen_opt,
            disc_store,
            disc,
            disc_opt,
            upstream,
        })
    }
}

/// Batched inputs: network input, agnostic image, preserve mask, warped
/// top, warped bottom and target image.
fn batch_tensors(batch: &[&CompactSample], upstream: Option<&Upstream>) -> Result<[Tensor<f32>; 6]> {
    let mut parts: [Vec<Tensor<f32>>; 6] = Default::default();
    for s in batch {
        let (parsing, top, bottom) = tom_conditioning(s, upstream)?;
        let res = s.resolution();
        parts[0].push(tom_input(&s.agnostic_image, &s.pose_map(), &parsing, &top, &bottom)?);
        parts[1].push(s.agnostic_image.to_tensor());
        parts[2].push(mask_tensor(res, &preserve_mask(&s.agnostic_parsing()), "preserve mask")?);
        parts[3].push(top.to_tensor());
        parts[4].push(bottom.to_tensor());
        parts[5].push(s.model_image.to_tensor());
    }
    Ok(parts.map(|p| Tensor::stack(&p)))
}

impl Trainer for TomTrainer {
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
        let [input, agnostic, preserve, top, bottom, target] = batch_tensors(batch, self.upstream.as_ref())?;

        self.disc_store.set_frozen(true);
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let out = self.gen.forward_graph(&mut g, x);
        let [a, p, t, b, y] = [agnostic, preserve, top, bottom, target.clone()].map(|v| g.constant(v));
        let pred = compose_graph(&mut g, a, p, out.base, out.mask_top, out.mask_bottom, t, b);
        let cond_fake = g.concat(&[x, pred]);
        let cond_real = g.concat(&[x, y]);
        let fake = self.disc.forward(&mut g, &self.disc_store, cond_fake);
        let real = self.disc.forward(&mut g, &self.disc_store, cond_real);
        let adv = losses::lsgan_g(&mut g, fake.scores);
        let fm = losses::feature_matching(&mut g, &real.features, &fake.features)?;
        let (l1, total) = tom_objective(&mut g, pred, y, adv, fm, &self.weights);
        let grads = g.backward(total);
        self.gen.store.accumulate(&g, &grads);
        let values = [l1, adv, fm, total].map(|v| g.scalar(v) as f64);
        let predicted = g.value(pred).clone();
        drop(grads);
        drop(g);
        self.disc_store.set_frozen(false);

        let mut g = Graph::new();
        let x = g.constant(input);
        let p = g.constant(predicted);
        let y = g.constant(target);
        let cond_fake = g.concat(&[x, p]);
        let cond_real = g.concat(&[x, y]);
        let fake = self.disc.forward(&mut g, &self.disc_store, cond_fake);
        let real = self.disc.forward(&mut g, &self.disc_store, cond_real);
        let d = losses::lsgan_d(&mut g, real.scores, fake.scores);
        let grads = g.backward(d);
        self.disc_store.accumulate(&g, &grads);

        self.gen_opt.step(&mut self.gen.store);
        self.disc_opt.step(&mut self.disc_store);
        let mut out = values.to_vec();
        out.push(g.scalar(d) as f64);
        Ok(out)
    }

    fn write_state(&self, ckpt: &mut Checkpoint) {
        ckpt.put_trainable("gen", &self.gen.store, Some(&self.gen_opt));
        ckpt.put_trainable("disc", &self.disc_store, Some(&self.disc_opt));
    }

    fn read_state(&mut self, ckpt: &Checkpoint) -> Result<()> {
        ckpt.load_trainable("gen", &mut self.gen.store, Some(&mut self.gen_opt))?;
        ckpt.load_trainable("disc", &mut self.disc_store, Some(&mut self.disc_opt))
    }
}

/// Load the upstream networks needed when teacher forcing is off.
pub fn load_upstream(
    cfg: &TrainingConfig,
    wgpgm_checkpoint: Option<&Path>,
    scwm_checkpoint: Option<&Path>,
) -> Result<Option<Upstream>> {
    if cfg.tom.teacher_forcing {
        return Ok(None);
    }
    let (Some(w), Some(s)) = (wgpgm_checkpoint, scwm_checkpoint) else {
        return Err(Error::Config(
            "tom.teacher_forcing=false needs wgpgm and scwm checkpoints".into(),
        ));
    };
    Ok(Some(Upstream {
        wgpgm: WgpgmGenerator::from_checkpoint(&Checkpoint::load_component(w, wgpgm::COMPONENT)?)?,
        scwm: ScwmNetwork::from_checkpoint(&Checkpoint::load_component(s, scwm::COMPONENT)?)?,
    }))
}

/// Train on preloaded samples; see [`train_tom`].
pub fn train_tom_samples(
    samples: &[CompactSample],
    cfg: &TrainingConfig,
    upstream: Option<Upstream>,
    resume: Option<&Path>,
) -> Result<PathBuf> {
    let mut trainer = TomTrainer::new(cfg, upstream)?;
    train::run(&mut trainer, samples, cfg, resume)
}

/// Train the synthesis network. With teacher forcing (the default) the
/// parsing and warped garments come from ground truth; otherwise from the
/// given upstream checkpoints.
pub fn train_tom(
    manifest: &DatasetManifest,
    cfg: &TrainingConfig,
    wgpgm_checkpoint: Option<&Path>,
    scwm_checkpoint: Option<&Path>,
    resume: Option<&Path>,
) -> Result<PathBuf> {
    wgpgm::require_train_split(manifest)?;
    let upstream = load_upstream(cfg, wgpgm_checkpoint, scwm_checkpoint)?;
    let samples = load_all(manifest)?;
    train_tom_samples(&samples, cfg, upstream, resume)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn res() -> Resolution {
        Resolution::new(8, 6).unwrap()
    }

    fn image(seed: u32) -> ImageRgb {
        ImageRgb::from_fn(res(), |y, x| {
            let v = ((y * 7 + x * 13) as u32).wrapping_mul(2654435761u32.wrapping_add(seed)) % 1000;
            [v as f32 / 1000.0, (v * 3 % 1000) as f32 / 1000.0, (v * 7 % 1000) as f32 / 1000.0]
        })
    }

    fn out(mt: f32, mb: f32) -> TomOutput {
        TomOutput {
            base: image(4),
            mask_top: vec![mt; 48],
            mask_bottom: vec![mb; 48],
        }
    }

    #[test]
    fn compose_boundary_cases() {
        let (a, t, b) = (image(1), image(2), image(3));
        let ones = vec![1.0; 48];
        let zeros = vec![0.0; 48];
        assert_eq!(compose(&a, &ones, &out(0.3, 0.6), &t, &b).unwrap(), a);
        assert_eq!(compose(&a, &zeros, &out(0.0, 0.0), &t, &b).unwrap(), image(4));
        assert_eq!(compose(&a, &zeros, &out(1.0, 0.4), &t, &b).unwrap(), t);
        assert!(matches!(compose(&a, &zeros[..10], &out(0.0, 0.0), &t, &b), Err(Error::ShapeMismatch(_))));
    }

    proptest! {
        #[test]
        fn compose_is_local_and_convex(mt in 0.0f32..=1.0, mb in 0.0f32..=1.0, seed in 0u32..1000, px in 0usize..48) {
            let (a, t, b) = (image(seed), image(seed + 1), image(seed + 2));
            let preserve: Vec<f32> = (0..48).map(|i| ((i + seed as usize) % 5 == 0) as u8 as f32).collect();
            let o = TomOutput { base: image(seed + 3), mask_top: vec![mt; 48], mask_bottom: vec![mb; 48] };
            let c = compose(&a, &preserve, &o, &t, &b).unwrap();
            for y in 0..8 {
                for x in 0..6 {
                    let vals = [a.get(y, x), t.get(y, x), b.get(y, x), o.base.get(y, x)];
                    for ch in 0..3 {
                        let lo = vals.iter().map(|v| v[ch]).fold(f32::MAX, f32::min);
                        let hi = vals.iter().map(|v| v[ch]).fold(f32::MIN, f32::max);
                        let v = c.get(y, x)[ch];
                        prop_assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
                    }
                }
            }
            let mut t2 = t.clone();
            t2.set(px / 6, px % 6, [0.5, 0.25, 0.75]);
            let c2 = compose(&a, &preserve, &o, &t2, &b).unwrap();
            for p in 0..48 {
                if p != px {
                    prop_assert_eq!(c.get(p / 6, p % 6), c2.get(p / 6, p % 6));
                }
            }
        }
    }

    #[test]
    fn forward_contract() {
        let r = Resolution::new(64, 48).unwrap();
        let s = CompactSample::synthetic(r, 2, 1);
        let gen = TomGenerator::new(&TrainingConfig::default().tom, 3);
        let (p, t, b) = tom_conditioning(&s, None).unwrap();
        let o = tom_forward(&s.agnostic_image, &s.pose_map(), &p, &t, &b, &gen).unwrap();
        assert_eq!(o.base.resolution(), r);
        assert_eq!((o.mask_top.len(), o.mask_bottom.len()), (r.pixels(), r.pixels()));
        assert!(o.mask_top.iter().chain(&o.mask_bottom).all(|&m| (0.0..=1.0).contains(&m)));
        assert_eq!(o, tom_forward(&s.agnostic_image, &s.pose_map(), &p, &t, &b, &gen).unwrap());
    }

    #[test]
    fn loss_examples() {
        let w = TomWeights::new(1.0, 0.0, 0.0).unwrap();
        let target = ImageRgb::filled(res(), [0.5, 0.2, 0.8]);
        let feats = vec![Tensor::<f32>::full([1, 2, 2, 2], 0.3)];
        let l = tom_loss(&target, &target, &[1.0; 4], &feats, &feats, &w).unwrap();
        assert_eq!((l.l1, l.adv), (0.0, 0.0));
        let pred = ImageRgb::filled(res(), [0.6, 0.3, 0.9]);
        let l = tom_loss(&pred, &target, &[1.0; 4], &feats, &feats, &w).unwrap();
        assert!((l.total - 0.1).abs() < 1e-6);

        let all = TomWeights::new(1.0, 1.0, 1.0).unwrap();
        let other = vec![Tensor::<f32>::full([1, 2, 2, 2], 0.1)];
        let l = tom_loss(&image(5), &image(6), &[0.2, 0.7, -0.1], &feats, &other, &all).unwrap();
        assert!((l.total - (l.l1 + l.adv + l.fm)).abs() < 1e-6);
        assert!(matches!(TomWeights::new(1.0, -1.0, 0.0), Err(Error::NegativeWeight { .. })));
    }

    #[test]
    fn training_step_and_epochs_zero() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = TrainingConfig::default();
        c.resolution = Resolution::new(32, 24).unwrap();
        c.tom.base_width = 8;
        c.tom.depth = 3;
        c.tom.disc_base_width = 8;
        c.out_dir = dir.path().to_path_buf();
        c.tom.optim.epochs = 0;
        let samples: Vec<_> = (1..3).map(|i| CompactSample::synthetic(c.resolution, 2, i)).collect();
        let path = train_tom_samples(&samples, &c, None, None).unwrap();
        let gen = TomGenerator::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
        assert!(gen.store.bit_equal(&TomGenerator::new(&c.tom, c.seed).store));

        let mut tr = TomTrainer::new(&c, None).unwrap();
        let batch: Vec<&CompactSample> = samples.iter().collect();
        let v = tr.train_step(&batch).unwrap();
        assert_eq!(v.len(), LOG_COLUMNS.len());
        assert!(v.iter().all(|x| x.is_finite()));
        c.tom.teacher_forcing = false;
        assert!(matches!(load_upstream(&c, None, None), Err(Error::Config(_))));
    }
}
