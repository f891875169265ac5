//! Procedural stand-in dataset: front-facing articulated figures wearing a
//! top and a bottom (or a dress), plus flat-lay catalog images of the same
//! garments.
//!
//! Geometry is authored in a 64×48 reference frame and rasterized at any
//! 4:3 resolution by mapping pixel centres into that frame, so the same
//! seed yields the same figure at every scale.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::data::io::{write_json, write_label_png, write_rgb_png};
use crate::data::manifest::{DatasetManifest, SampleEntry, Split, MANIFEST_FILE};
use crate::data::pose::{kp, Keypoint, PoseKeypoints};
use crate::data::raster::ImageRgb;
use crate::data::sample::{part, GarmentKind, GarmentRecord};
use crate::data::schema::{class, LabelSchema, Resolution, NUM_KEYPOINTS};
use crate::error::{Error, Result};

const REF_H: f64 = 64.0;
const REF_W: f64 = 48.0;

/// Every seventh sample (starting with the first) wears a dress.
const DRESS_EVERY: usize = 7;

#[derive(Clone, Copy, Debug)]
pub struct GenOptions {
    pub count: usize,
    pub resolution: Resolution,
    pub seed: u64,
    pub split: Split,
}

/// Generate a training dataset of `count` samples into `out_dir`.
pub fn gen_synthetic_dataset(
    count: usize,
    resolution: Resolution,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    gen_dataset(
        &GenOptions {
            count,
            resolution,
            seed,
            split: Split::Train,
        },
        out_dir,
    )
}

pub fn gen_dataset(opts: &GenOptions, out_dir: &Path) -> Result<DatasetManifest> {
    let res = opts.resolution.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        schema: LabelSchema::standard(),
        resolution: res,
        split: opts.split,
        samples: (0..opts.count)
            .map(|i| {
                let id = sample_id(i);
                SampleEntry {
                    top_id: id.clone(),
                    bottom_id: (!is_dress(i)).then(|| id.clone()),
                    id,
                }
            })
            .collect(),
    };
    (0..opts.count).into_par_iter().try_for_each(|i| {
        let s = synth_sample(res, opts.seed, i);
        write_sample(&manifest, &s)
    })?;
    manifest.save(MANIFEST_FILE)?;
    Ok(manifest)
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:05}")
}

fn is_dress(index: usize) -> bool {
    index.is_multiple_of(DRESS_EVERY)
}

/// Per-sample RNG seed, independent of generation order.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn write_sample(m: &DatasetManifest, s: &SynthSample) -> Result<()> {
    let res = m.resolution;
    write_rgb_png(&m.model_path(&s.id), &s.model_image)?;
    write_label_png(&m.parsing_path(&s.id), res, &s.labels)?;
    write_json(&m.pose_path(&s.id), &s.keypoints)?;
    write_rgb_png(&m.top_path(&s.id), &s.top.image)?;
    write_label_png(&m.top_seg_path(&s.id), res, s.top.seg())?;
    if let Some(b) = &s.bottom {
        write_rgb_png(&m.bottom_path(&s.id), &b.image)?;
        write_label_png(&m.bottom_seg_path(&s.id), res, b.seg())?;
    }
    Ok(())
}

/// One generated example before it is written to disk.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub id: String,
    pub model_image: ImageRgb,
    pub labels: Vec<u8>,
    pub keypoints: PoseKeypoints,
    pub top: GarmentRecord,
    pub bottom: Option<GarmentRecord>,
}

/// Draw sample `index` of the dataset identified by `seed`.
pub fn synth_sample(res: Resolution, seed: u64, index: usize) -> SynthSample {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, index));
    let fig = Figure::sample(&mut rng);
    let outfit = Outfit::sample(&mut rng, &fig, is_dress(index));
    let palette = Colors::sample(&mut rng);

    let mut labels = vec![class::BACKGROUND; res.pixels()];
    let mut model_image = ImageRgb::filled(res, [1.0; 3]);
    for y in 0..res.height {
        for x in 0..res.width {
            let (u, v) = to_ref(res, y, x);
            let l = label_at(&fig, &outfit, u, v);
            labels[y * res.width + x] = l;
            model_image.set(y, x, quantize(worn_color(&fig, &outfit, &palette, l, u, v)));
        }
    }
    let top = catalog_top(res, &outfit.top);
    let bottom = outfit.bottom.as_ref().map(|b| catalog_bottom(res, b));
    SynthSample {
        id: sample_id(index),
        model_image,
        labels,
        keypoints: fig.keypoints(res, &mut rng),
        top,
        bottom,
    }
}

/// Pixel centre in reference-frame coordinates (row, col).
fn to_ref(res: Resolution, y: usize, x: usize) -> (f64, f64) {
    (
        (y as f64 + 0.5) * REF_H / res.height as f64 - 0.5,
        (x as f64 + 0.5) * REF_W / res.width as f64 - 0.5,
    )
}

fn from_ref(res: Resolution, u: f64, v: f64) -> (f64, f64) {
    let row = ((u + 0.5) * res.height as f64 / REF_H - 0.5).round();
    let col = ((v + 0.5) * res.width as f64 / REF_W - 0.5).round();
    (
        row.clamp(0.0, (res.height - 1) as f64),
        col.clamp(0.0, (res.width - 1) as f64),
    )
}

/// Snap a colour onto the 8-bit grid so PNG storage is lossless.
fn quantize(c: [f64; 3]) -> [f32; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8 as f32 / 255.0)
}

type P = (f64, f64);

/// Distance from `p` to segment `a`-`b` and the projection parameter.
fn seg_dist(p: P, a: P, b: P) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    (((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt(), t)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Two-segment tapered limb (shoulder-elbow-wrist or hip-knee-ankle).
#[derive(Clone, Copy, Debug)]
struct Limb {
    joints: [P; 3],
    radius: [f64; 3],
}

impl Limb {
    fn lengths(&self) -> (f64, f64) {
        let d = |a: P, b: P| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        (d(self.joints[0], self.joints[1]), d(self.joints[1], self.joints[2]))
    }

    /// Signed clearance (negative inside) and arc-length fraction of the
    /// closest point along the limb.
    fn query(&self, p: P, pad: f64) -> (f64, f64) {
        let (l1, l2) = self.lengths();
        let (d1, t1) = seg_dist(p, self.joints[0], self.joints[1]);
        let (d2, t2) = seg_dist(p, self.joints[1], self.joints[2]);
        let c1 = d1 - lerp(self.radius[0], self.radius[1], t1) - pad;
        let c2 = d2 - lerp(self.radius[1], self.radius[2], t2) - pad;
        if c1 <= c2 {
            (c1, t1 * l1 / (l1 + l2))
        } else {
            (c2, (l1 + t2 * l2) / (l1 + l2))
        }
    }
}

#[derive(Clone, Debug)]
struct Figure {
    cx: f64,
    head: (f64, f64, f64, f64),
    shoulder_row: f64,
    shoulder_hw: f64,
    waist_row: f64,
    waist_hw: f64,
    hip_row: f64,
    hip_hw: f64,
    crotch_row: f64,
    /// Index 0 is the person's right (image left), 1 the person's left.
    arms: [Limb; 2],
    legs: [Limb; 2],
}

/// Image-space direction of the person's right (0) and left (1) side.
const SIDES: [f64; 2] = [-1.0, 1.0];

impl Figure {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let cx = 24.0 + rng.random_range(-1.5..1.5);
        let head = (
            8.0 + rng.random_range(-0.5..0.5),
            cx,
            5.0 + rng.random_range(-0.3..0.3),
            4.0 + rng.random_range(-0.3..0.3),
        );
        let shoulder_row = 16.5;
        let shoulder_hw = 7.5 + rng.random_range(-0.7..0.7);
        let waist_row = 28.0;
        let waist_hw = shoulder_hw - 1.5;
        let hip_row = 34.0 + rng.random_range(-1.0..1.0);
        let hip_hw = waist_hw + 1.0 + rng.random_range(0.0..0.8);
        let crotch_row = hip_row + 3.0;

        let arms = SIDES.map(|side| {
            let a = rng.random_range(5f64..28.0).to_radians();
            let b = rng.random_range(-10f64..25.0).to_radians();
            let s = (shoulder_row + 1.5, cx + side * (shoulder_hw - 1.0));
            let e = (s.0 + 10.5 * a.cos(), s.1 + side * 10.5 * a.sin());
            let w = (e.0 + 9.5 * (a + b).cos(), e.1 + side * 9.5 * (a + b).sin());
            Limb {
                joints: [s, e, w],
                radius: [2.1, 1.8, 1.5],
            }
        });
        let legs = SIDES.map(|side| {
            let knee_spread = rng.random_range(-0.5..1.5);
            let ankle_spread = knee_spread + rng.random_range(-0.5..1.5);
            let base = cx + side * (hip_hw - 2.8);
            Limb {
                joints: [
                    (hip_row, base),
                    (hip_row + 12.5, base + side * knee_spread),
                    (hip_row + 24.5, base + side * ankle_spread),
                ],
                radius: [3.0, 2.5, 2.0],
            }
        });
        Self {
            cx,
            head,
            shoulder_row,
            shoulder_hw,
            waist_row,
            waist_hw,
            hip_row,
            hip_hw,
            crotch_row,
            arms,
            legs,
        }
    }

    /// Torso half-width at row `u`, if the row crosses the torso.
    fn torso_hw(&self, u: f64) -> Option<f64> {
        if u < self.shoulder_row || u > self.crotch_row {
            return None;
        }
        Some(if u <= self.waist_row {
            let t = (u - self.shoulder_row) / (self.waist_row - self.shoulder_row);
            lerp(self.shoulder_hw, self.waist_hw, t)
        } else if u <= self.hip_row {
            let t = (u - self.waist_row) / (self.hip_row - self.waist_row);
            lerp(self.waist_hw, self.hip_hw, t)
        } else {
            self.hip_hw
        })
    }

    fn in_head(&self, u: f64, v: f64) -> bool {
        let (hr, hc, ry, rx) = self.head;
        ((u - hr) / ry).powi(2) + ((v - hc) / rx).powi(2) <= 1.0
    }

    fn foot_center(&self, side: usize) -> P {
        let a = self.legs[side].joints[2];
        (a.0 + 1.6, a.1 + SIDES[side] * 1.0)
    }

    fn in_foot(&self, side: usize, u: f64, v: f64) -> bool {
        let c = self.foot_center(side);
        ((u - c.0) / 1.5).powi(2) + ((v - c.1) / 2.5).powi(2) <= 1.0
    }

    fn keypoints(&self, res: Resolution, rng: &mut ChaCha8Rng) -> PoseKeypoints {
        let (hr, hc, _, rx) = self.head;
        let mut pts: [(P, bool); NUM_KEYPOINTS] = [((0.0, 0.0), true); NUM_KEYPOINTS];
        pts[kp::NOSE] = ((hr + 0.8, hc), true);
        pts[1] = ((hr - 0.8, hc + 1.6), true);
        pts[2] = ((hr - 0.8, hc - 1.6), true);
        pts[3] = ((hr, hc + rx), rng.random_bool(0.7));
        pts[4] = ((hr, hc - rx), rng.random_bool(0.7));
        for (side, limb) in self.arms.iter().enumerate() {
            pts[kp::RIGHT_SHOULDER - side] = (limb.joints[0], true);
            pts[kp::RIGHT_ELBOW - side] = (limb.joints[1], true);
            pts[kp::RIGHT_WRIST - side] = (limb.joints[2], true);
        }
        for (side, limb) in self.legs.iter().enumerate() {
            pts[kp::RIGHT_HIP - side] = (limb.joints[0], true);
            pts[kp::RIGHT_KNEE - side] = (limb.joints[1], true);
            pts[kp::RIGHT_ANKLE - side] = (limb.joints[2], true);
        }
        PoseKeypoints {
            keypoints: pts.map(|((u, v), visible)| {
                let (row, col) = from_ref(res, u, v);
                Keypoint { row, col, visible }
            }),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Pattern {
    Solid,
    HStripes(f64),
    VStripes(f64),
    Checks(f64),
}

#[derive(Clone, Copy, Debug)]
struct Look {
    main: [f64; 3],
    accent: [f64; 3],
    pattern: Pattern,
}

impl Look {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let pattern = match rng.random_range(0..5) {
            0 => Pattern::HStripes(rng.random_range(2.0..4.0)),
            1 => Pattern::VStripes(rng.random_range(2.0..4.0)),
            2 => Pattern::Checks(rng.random_range(2.5..4.0)),
            _ => Pattern::Solid,
        };
        Self {
            main: random_color(rng),
            accent: random_color(rng),
            pattern,
        }
    }

    /// Colour at garment-relative coordinates.
    fn color(&self, du: f64, dv: f64) -> [f64; 3] {
        let odd = |x: f64, p: f64| (x / p).floor().rem_euclid(2.0) == 1.0;
        let accent = match self.pattern {
            Pattern::Solid => false,
            Pattern::HStripes(p) => odd(du, p),
            Pattern::VStripes(p) => odd(dv + 100.0, p),
            Pattern::Checks(p) => odd(du, p) != odd(dv + 100.0, p),
        };
        if accent {
            self.accent
        } else {
            self.main
        }
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let h: f64 = rng.random_range(0.0..6.0);
    let s: f64 = rng.random_range(0.0..0.9);
    let v: f64 = rng.random_range(0.25..1.0);
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

#[derive(Clone, Debug)]
struct TopStyle {
    look: Look,
    /// Fraction of the arm covered by the sleeve (0 = sleeveless).
    sleeve: f64,
    /// Lowest covered reference row on the body.
    hem: f64,
    /// Flat-lay body length in reference rows.
    catalog_len: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum BottomCut {
    Pants,
    Shorts,
    Skirt,
}

#[derive(Clone, Debug)]
struct BottomStyle {
    look: Look,
    cut: BottomCut,
    /// Catalog leg (or skirt) length in reference rows.
    catalog_len: f64,
    /// Worn leg (or skirt) end row on the body.
    end_row: f64,
    /// Top edge of the waistband on the body.
    rise: f64,
}

#[derive(Clone, Debug)]
struct Outfit {
    top: TopStyle,
    bottom: Option<BottomStyle>,
}

impl Outfit {
    fn sample(rng: &mut ChaCha8Rng, fig: &Figure, dress: bool) -> Self {
        let sleeve = match rng.random_range(0..3) {
            0 => 0.0,
            1 => rng.random_range(0.3..0.5),
            _ => rng.random_range(0.85..0.95),
        };
        let hem = if dress {
            rng.random_range(44.0..52.0)
        } else {
            rng.random_range(22.0..42.0)
        };
        let catalog_len = if dress {
            rng.random_range(38.0..44.0)
        } else {
            rng.random_range(18.0..30.0)
        };
        let top = TopStyle {
            look: Look::sample(rng),
            sleeve,
            hem,
            catalog_len,
        };
        let bottom = (!dress).then(|| {
            let cut = match rng.random_range(0..4) {
                0 => BottomCut::Shorts,
                1 => BottomCut::Skirt,
                _ => BottomCut::Pants,
            };
            let ankle = fig.legs[0].joints[2].0.min(fig.legs[1].joints[2].0);
            let (catalog_len, end_row) = match cut {
                BottomCut::Pants => {
                    let l = rng.random_range(30.0..36.0);
                    (l, fig.crotch_row + (ankle - 1.0 - fig.crotch_row) * l / 36.0)
                }
                BottomCut::Shorts => {
                    let l = rng.random_range(8.0..12.0);
                    (l, fig.crotch_row + l * 0.7)
                }
                BottomCut::Skirt => {
                    let l = rng.random_range(8.0..20.0);
                    (l, fig.crotch_row + l * 0.9)
                }
            };
            BottomStyle {
                look: Look::sample(rng),
                cut,
                catalog_len,
                end_row,
                rise: fig.waist_row.min(hem + 1.0),
            }
        });
        Self { top, bottom }
    }
}

struct Colors {
    skin: [f64; 3],
    hair: [f64; 3],
    shoes: [f64; 3],
}

impl Colors {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        const SKIN: [[f64; 3]; 5] = [
            [0.98, 0.85, 0.75],
            [0.94, 0.78, 0.65],
            [0.82, 0.62, 0.48],
            [0.62, 0.43, 0.30],
            [0.42, 0.28, 0.19],
        ];
        let g: f64 = rng.random_range(0.05..0.45);
        Self {
            skin: SKIN[rng.random_range(0..SKIN.len())],
            hair: [g * 1.2, g, g * 0.8],
            shoes: [rng.random_range(0.05..0.35); 3],
        }
    }
}

fn in_top(fig: &Figure, top: &TopStyle, u: f64, v: f64) -> bool {
    if u < fig.shoulder_row - 0.5 || u > top.hem {
        return false;
    }
    let dv = (v - fig.cx).abs();
    // Round neckline.
    if ((u - fig.shoulder_row + 0.5) / 2.0).powi(2) + (dv / 2.4).powi(2) < 1.0 {
        return false;
    }
    let hw = match fig.torso_hw(u.max(fig.shoulder_row)) {
        Some(hw) => hw + 0.8,
        None => fig.hip_hw + 0.8 + (u - fig.crotch_row) * 0.35,
    };
    dv <= hw
}

fn in_bottom(fig: &Figure, b: &BottomStyle, u: f64, v: f64) -> Option<u8> {
    if u < b.rise || u > b.end_row.max(fig.crotch_row + 0.5) {
        return None;
    }
    let dv = (v - fig.cx).abs();
    if u <= fig.crotch_row + 0.5 {
        let hw = fig.torso_hw(u.min(fig.crotch_row)).unwrap_or(fig.hip_hw);
        if dv <= hw + 0.6 {
            return Some(class::BOTTOM_HIPS);
        }
    }
    if u > b.end_row {
        return None;
    }
    match b.cut {
        BottomCut::Skirt => {
            let hw = fig.hip_hw + 0.8 + (u - fig.crotch_row).max(0.0) * 0.45;
            (u >= fig.crotch_row - 0.5 && dv <= hw).then_some(class::BOTTOM_LEGS)
        }
        BottomCut::Pants | BottomCut::Shorts => fig
            .legs
            .iter()
            .any(|leg| u >= fig.crotch_row - 1.0 && leg.query((u, v), 0.7).0 <= 0.0)
            .then_some(class::BOTTOM_LEGS),
    }
}

/// Parsing label of the reference-frame point `(u, v)`; earlier checks
/// are in front.
fn label_at(fig: &Figure, outfit: &Outfit, u: f64, v: f64) -> u8 {
    let p = (u, v);
    for side in 0..2 {
        let limb = &fig.arms[side];
        let w = limb.joints[2];
        let e = limb.joints[1];
        let len = ((w.0 - e.0).powi(2) + (w.1 - e.1).powi(2)).sqrt();
        let hand = (w.0 + (w.0 - e.0) / len * 1.2, w.1 + (w.1 - e.1) / len * 1.2);
        if (u - hand.0).powi(2) + (v - hand.1).powi(2) <= 1.9f64.powi(2) {
            return [class::RIGHT_HAND, class::LEFT_HAND][side];
        }
    }
    for side in 0..2 {
        if fig.in_foot(side, u, v) {
            return [class::RIGHT_FOOT, class::LEFT_FOOT][side];
        }
    }
    for side in 0..2 {
        let (sleeve_clear, s) = fig.arms[side].query(p, 0.6);
        if sleeve_clear <= 0.0 && outfit.top.sleeve > 0.0 && s <= outfit.top.sleeve {
            return class::TOP_SLEEVES;
        }
        if fig.arms[side].query(p, 0.0).0 <= 0.0 {
            return [class::RIGHT_ARM, class::LEFT_ARM][side];
        }
    }
    if fig.in_head(u, v) {
        let (hr, hc, _, rx) = fig.head;
        let hair = u < hr - 1.3 || ((v - hc).abs() > rx - 1.0 && u < hr + 1.0);
        return if hair { class::HAIR } else { class::FACE };
    }
    if in_top(fig, &outfit.top, u, v) {
        return class::TOP_TORSO;
    }
    if let Some(b) = &outfit.bottom {
        if let Some(l) = in_bottom(fig, b, u, v) {
            // Nothing of the bottom shows at or above the hem.
            return if u <= outfit.top.hem { class::TOP_TORSO } else { l };
        }
    }
    if u >= fig.head.0 + 3.0 && u <= fig.shoulder_row + 1.0 && (v - fig.cx).abs() <= 1.9 {
        return class::NECK;
    }
    if let Some(hw) = fig.torso_hw(u) {
        if (v - fig.cx).abs() <= hw {
            return class::TORSO_SKIN;
        }
    }
    for side in 0..2 {
        if fig.legs[side].query(p, 0.0).0 <= 0.0 {
            return [class::RIGHT_LEG_SKIN, class::LEFT_LEG_SKIN][side];
        }
    }
    class::BACKGROUND
}

fn worn_color(fig: &Figure, outfit: &Outfit, c: &Colors, label: u8, u: f64, v: f64) -> [f64; 3] {
    match label {
        class::BACKGROUND => [1.0; 3],
        class::HAIR => c.hair,
        class::LEFT_FOOT | class::RIGHT_FOOT => c.shoes,
        class::TOP_TORSO | class::TOP_SLEEVES => {
            outfit.top.look.color(u - fig.shoulder_row, v - fig.cx)
        }
        class::BOTTOM_HIPS | class::BOTTOM_LEGS => {
            let b = outfit.bottom.as_ref().expect("bottom label implies a bottom");
            b.look.color(u - fig.waist_row, v - fig.cx)
        }
        _ => c.skin,
    }
}

const CATALOG_CX: f64 = 24.0;

fn catalog_top(res: Resolution, top: &TopStyle) -> GarmentRecord {
    let row0 = 10.0;
    let sleeve_len = top.sleeve * 20.0;
    let mut seg = vec![part::BACKGROUND; res.pixels()];
    let img = ImageRgb::from_fn(res, |y, x| {
        let (u, v) = to_ref(res, y, x);
        let dv = (v - CATALOG_CX).abs();
        let du = u - row0;
        let mut label = part::BACKGROUND;
        if du >= 0.0 && du <= top.catalog_len {
            let hw = if du < 22.0 { 8.5 - du * 0.02 } else { 8.06 + (du - 22.0) * 0.3 };
            let neck = (du / 2.0).powi(2) + (dv / 2.5).powi(2) < 1.0;
            if dv <= hw && !neck {
                label = part::MAIN;
            }
        }
        if label == part::BACKGROUND && sleeve_len > 0.0 {
            let a = 18f64.to_radians();
            for side in SIDES {
                let s = (row0 + 2.0, CATALOG_CX + side * 7.0);
                let e = (s.0 + sleeve_len * a.cos(), s.1 + side * sleeve_len * a.sin());
                if seg_dist((u, v), s, e).0 <= 2.3 {
                    label = part::SECONDARY;
                }
            }
        }
        seg[y * res.width + x] = label;
        if label == part::BACKGROUND {
            [1.0; 3]
        } else {
            quantize(top.look.color(du, v - CATALOG_CX))
        }
    });
    GarmentRecord::new(GarmentKind::Top, img, seg).expect("generated garment is valid")
}

fn catalog_bottom(res: Resolution, b: &BottomStyle) -> GarmentRecord {
    let row0 = 8.0;
    let band = 7.0;
    let mut seg = vec![part::BACKGROUND; res.pixels()];
    let img = ImageRgb::from_fn(res, |y, x| {
        let (u, v) = to_ref(res, y, x);
        let dv = (v - CATALOG_CX).abs();
        let du = u - row0;
        let mut label = part::BACKGROUND;
        if (0.0..=band).contains(&du) && dv <= 8.0 + du * 0.07 {
            label = part::MAIN;
        } else if du > band && du <= band + b.catalog_len {
            let t = du - band;
            let leg = match b.cut {
                BottomCut::Skirt => dv <= 8.5 + t * 0.45,
                BottomCut::Pants | BottomCut::Shorts => {
                    let centre = 4.3 + t * 0.05;
                    dv >= 0.5 && (dv - centre).abs() <= 4.0 - t * 0.02
                }
            };
            if leg {
                label = part::SECONDARY;
            }
        }
        seg[y * res.width + x] = label;
        if label == part::BACKGROUND {
            [1.0; 3]
        } else {
            quantize(b.look.color(du, v - CATALOG_CX))
        }
    });
    GarmentRecord::new(GarmentKind::Bottom, img, seg).expect("generated garment is valid")
}
