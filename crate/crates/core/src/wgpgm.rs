//! Parsing generation: a conditional U-Net that predicts the 17-class
//! parsing map from wearing-agnostic inputs, both garments and the wearing
//! guide, trained against a full-body and a lower-body patch discriminator.

use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::{TrainingConfig, WgpgmConfig};
use crate::data::{
    load_all, CompactSample, DatasetManifest, ImageRgb, ParsingMap, PoseMap, Split, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::losses;
use crate::nn::{Adam, DiscOutput, Graph, ParamStore, PatchDiscriminator, Real, Tensor, UNet, Var};
use crate::train::{self, derive_seed, Trainer};
use crate::wearing_guide::{validate_mask, WearingGuideMask};

pub const COMPONENT: &str = "wgpgm";
/// Agnostic parsing, pose heatmaps, top, bottom, wearing-guide mask.
pub const INPUT_CHANNELS: usize = NUM_CLASSES + NUM_CLASSES + 3 + 3 + 1;
/// Generator input plus a (real or predicted) parsing.
pub const DISC_CHANNELS: usize = INPUT_CHANNELS + NUM_CLASSES;
pub const LOG_COLUMNS: &[&str] = &["ce", "adv", "fm", "wg", "total", "d", "d_low"];

/// Stack the generator inputs into a `[1, 41, H, W]` tensor.
pub fn generator_input(
    agnostic: &ParsingMap,
    pose: &PoseMap,
    top: &ImageRgb,
    bottom: &ImageRgb,
    mask: &WearingGuideMask,
) -> Result<Tensor<f32>> {
    let res = agnostic.resolution();
    for (name, r) in [
        ("pose", pose.resolution()),
        ("top", top.resolution()),
        ("bottom", bottom.resolution()),
    ] {
        if r != res {
            return Err(Error::ShapeMismatch(format!("{name} is {r}, parsing is {res}")));
        }
    }
    validate_mask(mask, res)?;
    Ok(Tensor::concat_channels(&[
        &agnostic.to_tensor(),
        &pose.to_tensor(),
        &top.to_tensor(),
        &bottom.to_tensor(),
        &mask.to_tensor(),
    ]))
}

/// Generator input for a training sample under a given mask.
pub fn sample_input(s: &CompactSample, mask: &WearingGuideMask) -> Result<Tensor<f32>> {
    generator_input(
        &s.agnostic_parsing(),
        &s.pose_map(),
        &s.top.image,
        &s.bottom_or_absent().image,
        mask,
    )
}

/// Rows `H/2..H` of an NCHW tensor.
pub fn lower_body_crop<T: Real>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = t.shape();
    if h % 2 != 0 {
        return Err(Error::OddHeight(h));
    }
    let half = h / 2;
    Ok(Tensor::from_fn([n, c, half, w], |[s, ch, y, x]| {
        t.at([s, ch, y + half, x])
    }))
}

/// Graph form of [`lower_body_crop`].
pub fn lower_body_crop_var<T: Real>(g: &mut Graph<T>, v: Var) -> Result<Var> {
    let h = g.shape(v)[2];
    if !h.is_multiple_of(2) {
        return Err(Error::OddHeight(h));
    }
    Ok(g.crop_rows(v, h / 2, h / 2))
}

pub struct WgpgmGenerator {
    pub store: ParamStore,
    net: UNet,
}

impl WgpgmGenerator {
    pub fn new(cfg: &WgpgmConfig, seed: u64) -> Self {
        let mut store = ParamStore::new(derive_seed(seed, "wgpgm.gen"));
        let net = UNet::new(&mut store, "gen", INPUT_CHANNELS, NUM_CLASSES, cfg.base_width, cfg.depth);
        Self { store, net }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.component != COMPONENT {
            return Err(Error::SchemaMismatch(format!(
                "expected a {COMPONENT} checkpoint, found {}",
                ckpt.component
            )));
        }
        let mut gen = Self::new(&ckpt.config.wgpgm, ckpt.config.seed);
        ckpt.group("gen")
            .map_err(|_| Error::UninitializedModel("checkpoint has no generator parameters".into()))?;
        ckpt.load_trainable("gen", &mut gen.store, None)?;
        Ok(gen)
    }

    /// Per-pixel class probabilities for a `[N, 41, H, W]` input.
    pub fn forward_graph(&self, g: &mut Graph<f32>, x: Var) -> Var {
        let logits = self.net.forward(g, &self.store, x);
        g.softmax_channels(logits)
    }

    pub fn predict(&self, input: &Tensor<f32>) -> Result<Tensor<f32>> {
        let c = input.shape()[1];
        if c != INPUT_CHANNELS {
            return Err(Error::ChannelMismatch(c, INPUT_CHANNELS));
        }
        let mut g = Graph::inference();
        let x = g.constant(input.clone());
        let p = self.forward_graph(&mut g, x);
        Ok(g.value(p).clone())
    }
}

/// Parsing prediction for one set of inputs.
pub fn wgpgm_forward(
    agnostic: &ParsingMap,
    pose: &PoseMap,
    top: &ImageRgb,
    bottom: &ImageRgb,
    mask: &WearingGuideMask,
    gen: &WgpgmGenerator,
) -> Result<ParsingMap> {
    let input = generator_input(agnostic, pose, top, bottom, mask)?;
    ParsingMap::from_tensor(&gen.predict(&input)?, 0)
}

/// Full-body and lower-body patch discriminators over `(condition, parsing)`.
pub struct DiscriminatorPair {
    pub store: ParamStore,
    full: PatchDiscriminator,
    low: PatchDiscriminator,
}

pub struct PairOutput {
    pub full: DiscOutput,
    pub low: DiscOutput,
}

impl DiscriminatorPair {
    pub fn new(in_channels: usize, base: usize, seed: u64, tag: &str) -> Self {
        let mut store = ParamStore::new(derive_seed(seed, tag));
        let widths = [base, base * 2, base * 4];
        let full = PatchDiscriminator::new(&mut store, "d", in_channels, &widths);
        let low = PatchDiscriminator::new(&mut store, "d_low", in_channels, &widths);
        Self { store, full, low }
    }

    /// What each discriminator sees: the full stack and its lower-body crop.
    pub fn inputs<T: Real>(g: &mut Graph<T>, cond: Var) -> Result<(Var, Var)> {
        Ok((cond, lower_body_crop_var(g, cond)?))
    }

    pub fn forward(&self, g: &mut Graph<f32>, cond: Var) -> Result<PairOutput> {
        let (full_in, low_in) = Self::inputs(g, cond)?;
        Ok(PairOutput {
            full: self.full.forward(g, &self.store, full_in),
            low: self.low.forward(g, &self.store, low_in),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub ce: f64,
    pub adv: f64,
    pub fm: f64,
    pub wg: f64,
}

impl LossWeights {
    pub fn new(ce: f64, adv: f64, fm: f64, wg: f64) -> Result<Self> {
        for (name, value) in [("lambda_ce", ce), ("lambda_adv", adv), ("lambda_fm", fm), ("lambda_wg", wg)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::NegativeWeight {
                    name: name.into(),
                    value,
                });
            }
        }
        Ok(Self { ce, adv, fm, wg })
    }

    pub fn from_config(cfg: &WgpgmConfig) -> Result<Self> {
        Self::new(cfg.lambda_ce, cfg.lambda_adv, cfg.lambda_fm, cfg.lambda_wg)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub ce: f64,
    pub adv: f64,
    pub fm: f64,
    pub wg: f64,
    pub total: f64,
}

pub struct ObjectiveVars {
    pub ce: Var,
    pub wg: Var,
    pub total: Var,
}

/// Weighted generator objective on the tape. `adv` and `fm` are already
/// summed over both discriminators.
pub fn generator_objective<T: Real>(
    g: &mut Graph<T>,
    prob: Var,
    target: Var,
    mask: Var,
    adv: Var,
    fm: Var,
    w: &LossWeights,
) -> ObjectiveVars {
    let ce = losses::cross_entropy(g, prob, target);
    let wg = losses::wearing_guide(g, mask, prob);
    let total = losses::weighted_sum(g, &[(w.ce, ce), (w.adv, adv), (w.fm, fm), (w.wg, wg)]);
    ObjectiveVars { ce, wg, total }
}

/// Generator objective for one prediction with precomputed adversarial and
/// feature-matching terms.
pub fn wgpgm_generator_loss(
    pred: &ParsingMap,
    target: &ParsingMap,
    mask: &WearingGuideMask,
    g_adv: f64,
    fm: f64,
    weights: &LossWeights,
) -> Result<LossComponents> {
    let res = pred.resolution();
    if target.resolution() != res {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {res}, target is {}",
            target.resolution()
        )));
    }
    validate_mask(mask, res).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let weights = LossWeights::new(weights.ce, weights.adv, weights.fm, weights.wg)?;
    let mut g = Graph::<f64>::inference();
    let p = g.constant(pred.to_tensor().cast());
    let t = g.constant(target.to_tensor().cast());
    let m = g.constant(mask.to_tensor().cast());
    let a = g.constant(Tensor::scalar(g_adv));
    let f = g.constant(Tensor::scalar(fm));
    let o = generator_objective(&mut g, p, t, m, a, f, &weights);
    Ok(LossComponents {
        ce: g.scalar(o.ce),
        adv: g_adv,
        fm,
        wg: g.scalar(o.wg),
        total: g.scalar(o.total),
    })
}

pub struct WgpgmTrainer {
    cfg: WgpgmConfig,
    weights: LossWeights,
    pub gen: WgpgmGenerator,
    gen_opt: Adam,
    pub disc: DiscriminatorPair,
    disc_opt: Adam,
}

impl WgpgmTrainer {
    pub fn new(cfg: &TrainingConfig) -> Result<Self> {
        let c = cfg.wgpgm.clone();
        let weights = LossWeights::from_config(&c)?;
        let gen = WgpgmGenerator::new(&c, cfg.seed);
        let disc = DiscriminatorPair::new(DISC_CHANNELS, c.disc_base_width, cfg.seed, "wgpgm.disc");
        let o = &c.optim;
        let gen_opt = Adam::new(&gen.store, o.lr, o.beta1, o.beta2);
        let disc_opt = Adam::new(&disc.store, o.lr, o.beta1, o.beta2);
        Ok(Self {
            cfg: c,
            weights,
            gen,
            gen_opt,
            disc,
            disc_opt,
        })
    }
}

fn batch_tensors(batch: &[&CompactSample]) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    let mut inputs = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    let mut masks = Vec::with_capacity(batch.len());
    for s in batch {
        let mask = s.hem()?.to_mask();
        inputs.push(sample_input(s, &mask)?);
        targets.push(s.parsing().to_tensor());
        masks.push(mask.to_tensor());
    }
    Ok((Tensor::stack(&inputs), Tensor::stack(&targets), Tensor::stack(&masks)))
}

impl Trainer for WgpgmTrainer {
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
        let (input, target, mask) = batch_tensors(batch)?;

        // Generator update against frozen discriminators.
        self.disc.store.set_frozen(true);
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let t = g.constant(target.clone());
        let m = g.constant(mask);
        let prob = self.gen.forward_graph(&mut g, x);
        let cond_fake = g.concat(&[x, prob]);
        let cond_real = g.concat(&[x, t]);
        let fake = self.disc.forward(&mut g, cond_fake)?;
        let real = self.disc.forward(&mut g, cond_real)?;
        let adv_full = losses::lsgan_g(&mut g, fake.full.scores);
        let adv_low = losses::lsgan_g(&mut g, fake.low.scores);
        let adv = g.add(adv_full, adv_low);
        let fm_full = losses::feature_matching(&mut g, &real.full.features, &fake.full.features)?;
        let fm_low = losses::feature_matching(&mut g, &real.low.features, &fake.low.features)?;
        let fm = g.add(fm_full, fm_low);
        let o = generator_objective(&mut g, prob, t, m, adv, fm, &self.weights);
        let grads = g.backward(o.total);
        self.gen.store.accumulate(&g, &grads);
        let values = [o.ce, adv, fm, o.wg, o.total].map(|v| g.scalar(v) as f64);
        let predicted = g.value(prob).clone();
        drop(grads);
        drop(g);
        self.disc.store.set_frozen(false);

        // Discriminator update on the detached prediction.
        let mut g = Graph::new();
        let x = g.constant(input);
        let t = g.constant(target);
        let p = g.constant(predicted);
        let cond_fake = g.concat(&[x, p]);
        let cond_real = g.concat(&[x, t]);
        let fake = self.disc.forward(&mut g, cond_fake)?;
        let real = self.disc.forward(&mut g, cond_real)?;
        let d_full = losses::lsgan_d(&mut g, real.full.scores, fake.full.scores);
        let d_low = losses::lsgan_d(&mut g, real.low.scores, fake.low.scores);
        let d_total = g.add(d_full, d_low);
        let grads = g.backward(d_total);
        self.disc.store.accumulate(&g, &grads);

        self.gen_opt.step(&mut self.gen.store);
        self.disc_opt.step(&mut self.disc.store);
        let mut out = values.to_vec();
        out.push(g.scalar(d_full) as f64);
        out.push(g.scalar(d_low) as f64);
        Ok(out)
    }

    fn write_state(&self, ckpt: &mut Checkpoint) {
        ckpt.put_trainable("gen", &self.gen.store, Some(&self.gen_opt));
        ckpt.put_trainable("disc", &self.disc.store, Some(&self.disc_opt));
    }

    fn read_state(&mut self, ckpt: &Checkpoint) -> Result<()> {
        ckpt.load_trainable("gen", &mut self.gen.store, Some(&mut self.gen_opt))?;
        ckpt.load_trainable("disc", &mut self.disc.store, Some(&mut self.disc_opt))
    }
}

pub(crate) fn require_train_split(manifest: &DatasetManifest) -> Result<()> {
    if manifest.split != Split::Train {
        return Err(Error::Config(format!(
            "training needs a train split, manifest is {}",
            manifest.split
        )));
    }
    Ok(())
}

/// Train on preloaded samples; see [`train_wgpgm`].
pub fn train_wgpgm_samples(samples: &[CompactSample], cfg: &TrainingConfig, resume: Option<&Path>) -> Result<PathBuf> {
    let mut trainer = WgpgmTrainer::new(cfg)?;
    train::run(&mut trainer, samples, cfg, resume)
}

/// Train the parsing generator; masks come from each sample's ground-truth
/// parsing. Returns the final checkpoint path.
pub fn train_wgpgm(manifest: &DatasetManifest, cfg: &TrainingConfig, resume: Option<&Path>) -> Result<PathBuf> {
    require_train_split(manifest)?;
    let samples = load_all(manifest)?;
    train_wgpgm_samples(&samples, cfg, resume)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{class, Resolution};
    use crate::wearing_guide::HemMask;

    fn tiny_sample(res: Resolution, index: usize) -> CompactSample {
        CompactSample::synthetic(res, 5, index)
    }

    fn small_cfg() -> TrainingConfig {
        let mut cfg = TrainingConfig::default();
        cfg.wgpgm.base_width = 4;
        cfg.wgpgm.depth = 3;
        cfg.wgpgm.disc_base_width = 4;
        cfg
    }

    #[test]
    fn crop_takes_lower_rows() {
        let t = Tensor::<f32>::from_fn([1, 2, 64, 48], |[_, c, y, x]| (c * 10000 + y * 100 + x) as f32);
        let c = lower_body_crop(&t).unwrap();
        assert_eq!(c.shape(), [1, 2, 32, 48]);
        assert_eq!(c.at([0, 1, 0, 5]), t.at([0, 1, 32, 5]));
        assert_eq!(c.at([0, 0, 31, 47]), t.at([0, 0, 63, 47]));
        let z = lower_body_crop(&Tensor::<f32>::zeros([1, 1, 64, 48])).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(matches!(lower_body_crop(&Tensor::<f32>::zeros([1, 1, 5, 4])), Err(Error::OddHeight(5))));
    }

    #[test]
    fn discriminators_share_preprocessing() {
        let t = Tensor::<f32>::from_fn([1, 3, 8, 6], |[_, c, y, x]| (c + y * 7 + x) as f32);
        let mut g = Graph::new();
        let v = g.constant(t.clone());
        let (full, low) = DiscriminatorPair::inputs(&mut g, v).unwrap();
        assert_eq!(g.value(full), &t);
        assert_eq!(g.value(low), &lower_body_crop(&t).unwrap());
    }

    #[test]
    fn forward_is_normalized_and_deterministic() {
        let res = Resolution::new(16, 12).unwrap();
        let s = tiny_sample(res, 3);
        let gen = WgpgmGenerator::new(&small_cfg().wgpgm, 0);
        let mask = s.hem().unwrap().to_mask();
        let a = wgpgm_forward(&s.agnostic_parsing(), &s.pose_map(), &s.top.image, &s.bottom_or_absent().image, &mask, &gen).unwrap();
        let b = wgpgm_forward(&s.agnostic_parsing(), &s.pose_map(), &s.top.image, &s.bottom_or_absent().image, &mask, &gen).unwrap();
        assert_eq!(a.resolution(), res);
        assert!(a.is_normalized());
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let wrong = HemMask::new(Resolution::new(8, 6).unwrap(), 2).unwrap().to_mask();
        assert!(matches!(
            wgpgm_forward(&s.agnostic_parsing(), &s.pose_map(), &s.top.image, &s.bottom_or_absent().image, &wrong, &gen),
            Err(Error::DimensionError { .. })
        ));
    }

    #[test]
    fn generator_loss_examples() {
        let res = Resolution::new(8, 6).unwrap();
        let labels: Vec<u8> = (0..res.pixels()).map(|p| (p % NUM_CLASSES) as u8).collect();
        let target = ParsingMap::from_labels(res, &labels).unwrap();
        let eps = 1e-6f32;
        let mut values = target.values().to_vec();
        let hw = res.pixels();
        for p in 0..hw {
            let l = labels[p] as usize;
            values[l * hw + p] = 1.0 - eps;
            values[((l + 1) % NUM_CLASSES) * hw + p] = eps;
        }
        let pred = ParsingMap::from_probabilities(res, values).unwrap();
        let mask = HemMask::new(res, 2).unwrap().to_mask();
        let only_ce = LossWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let c = wgpgm_generator_loss(&pred, &target, &mask, 0.7, 0.3, &only_ce).unwrap();
        let want = -((1.0 - eps) as f64).ln();
        assert!((c.total - want).abs() < 1e-9, "{} vs {want}", c.total);

        let zero_bottom = ParsingMap::from_labels(res, &vec![class::FACE; hw]).unwrap();
        let only_wg = LossWeights::new(0.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(wgpgm_generator_loss(&zero_bottom, &target, &mask, 0.0, 0.0, &only_wg).unwrap().total, 0.0);

        let all = LossWeights::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let c = wgpgm_generator_loss(&pred, &target, &mask, 0.7, 0.3, &all).unwrap();
        assert!((c.total - (c.ce + c.adv + c.fm + c.wg)).abs() < 1e-6);
        assert!(matches!(LossWeights::new(1.0, -0.5, 0.0, 0.0), Err(Error::NegativeWeight { .. })));
    }

    #[test]
    fn training_step_runs_and_epochs_zero_keeps_init() {
        let res = Resolution::new(16, 12).unwrap();
        let samples: Vec<_> = (0..2).map(|i| tiny_sample(res, i)).collect();
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg();
        cfg.out_dir = dir.path().to_path_buf();
        cfg.resolution = res;
        cfg.wgpgm.optim.epochs = 0;
        let path = train_wgpgm_samples(&samples, &cfg, None).unwrap();
        let ckpt = Checkpoint::load(&path).unwrap();
        let init = WgpgmGenerator::new(&cfg.wgpgm, cfg.seed);
        assert_eq!(ckpt.group("gen").unwrap(), &init.store.snapshot());

        let mut trainer = WgpgmTrainer::new(&cfg).unwrap();
        let batch: Vec<&CompactSample> = samples.iter().collect();
        let v = trainer.train_step(&batch).unwrap();
        assert_eq!(v.len(), LOG_COLUMNS.len());
        assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!(!trainer.gen.store.bit_equal(&init.store));
    }
}
