use serde::{Deserialize, Serialize};

use crate::data::schema::{Resolution, NUM_KEYPOINTS};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// COCO keypoint order. "Left" is the person's left, which appears on the
/// image's right for a front-facing figure.
pub const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub mod kp {
    pub const NOSE: usize = 0;
    pub const LEFT_SHOULDER: usize = 5;
    pub const RIGHT_SHOULDER: usize = 6;
    pub const LEFT_ELBOW: usize = 7;
    pub const RIGHT_ELBOW: usize = 8;
    pub const LEFT_WRIST: usize = 9;
    pub const RIGHT_WRIST: usize = 10;
    pub const LEFT_HIP: usize = 11;
    pub const RIGHT_HIP: usize = 12;
    pub const LEFT_KNEE: usize = 13;
    pub const RIGHT_KNEE: usize = 14;
    pub const LEFT_ANKLE: usize = 15;
    pub const RIGHT_ANKLE: usize = 16;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub row: f64,
    pub col: f64,
    pub visible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseKeypoints {
    pub keypoints: [Keypoint; NUM_KEYPOINTS],
}

impl PoseKeypoints {
    /// Checks that every visible keypoint lies inside the raster.
    pub fn validate(&self, res: Resolution) -> Result<()> {
        for (index, k) in self.keypoints.iter().enumerate() {
            let inside = k.row >= 0.0
                && k.col >= 0.0
                && k.row <= (res.height - 1) as f64
                && k.col <= (res.width - 1) as f64;
            if k.visible && !inside {
                return Err(Error::KeypointOutOfBounds {
                    index,
                    row: k.row,
                    col: k.col,
                    height: res.height,
                    width: res.width,
                });
            }
        }
        Ok(())
    }

    /// Row halfway between the two hip keypoints.
    pub fn mid_hip_row(&self) -> f64 {
        0.5 * (self.keypoints[kp::LEFT_HIP].row + self.keypoints[kp::RIGHT_HIP].row)
    }
}

/// 17 Gaussian heatmap planes, one per keypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseMap {
    res: Resolution,
    values: Vec<f32>,
}

impl PoseMap {
    pub fn resolution(&self) -> Resolution {
        self.res
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn channel(&self, k: usize) -> &[f32] {
        let hw = self.res.pixels();
        &self.values[k * hw..(k + 1) * hw]
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(
            [1, NUM_KEYPOINTS, self.res.height, self.res.width],
            self.values.clone(),
        )
    }
}

/// Heatmap width used throughout: 1.5% of the image height.
pub fn default_sigma(res: Resolution) -> f64 {
    0.015 * res.height as f64
}

/// Render keypoints as `exp(-d² / 2σ²)` planes; invisible keypoints give
/// all-zero planes.
pub fn pose_to_heatmaps(kps: &PoseKeypoints, sigma: f64, res: Resolution) -> Result<PoseMap> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("heatmap sigma must be positive, got {sigma}")));
    }
    kps.validate(res)?;
    let hw = res.pixels();
    let mut values = vec![0.0f32; NUM_KEYPOINTS * hw];
    let inv = 1.0 / (2.0 * sigma * sigma);
    for (k, key) in kps.keypoints.iter().enumerate() {
        if !key.visible {
            continue;
        }
        let plane = &mut values[k * hw..(k + 1) * hw];
        // exp(-(dy² + dx²)/2σ²) factorizes into a row term times a column term.
        let cols: Vec<f64> = (0..res.width)
            .map(|x| (-(x as f64 - key.col).powi(2) * inv).exp())
            .collect();
        for y in 0..res.height {
            let ry = (-(y as f64 - key.row).powi(2) * inv).exp();
            for (x, cx) in cols.iter().enumerate() {
                plane[y * res.width + x] = (ry * cx) as f32;
            }
        }
    }
    Ok(PoseMap { res, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose_with(first: Keypoint) -> PoseKeypoints {
        let mut keypoints = [Keypoint {
            row: 0.0,
            col: 0.0,
            visible: false,
        }; NUM_KEYPOINTS];
        keypoints[0] = first;
        PoseKeypoints { keypoints }
    }

    #[test]
    fn peak_is_one_at_the_keypoint() {
        let res = Resolution::DESK;
        let p = pose_with(Keypoint {
            row: 10.0,
            col: 10.0,
            visible: true,
        });
        let map = pose_to_heatmaps(&p, default_sigma(res), res).unwrap();
        assert_eq!(map.channel(0)[10 * 48 + 10], 1.0);
        assert!(map.channel(0).iter().all(|&v| v <= 1.0));
        assert!(map.channel(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_sigma_away_is_exp_minus_half() {
        let res = Resolution::DESK;
        let p = pose_with(Keypoint {
            row: 20.0,
            col: 10.0,
            visible: true,
        });
        let map = pose_to_heatmaps(&p, 3.0, res).unwrap();
        let v = map.channel(0)[23 * 48 + 10] as f64;
        assert!((v - (-0.5f64).exp()).abs() < 1e-6, "{v}");
    }

    #[test]
    fn visible_keypoint_outside_is_rejected() {
        let res = Resolution::DESK;
        let p = pose_with(Keypoint {
            row: 64.0,
            col: 3.0,
            visible: true,
        });
        assert!(matches!(
            pose_to_heatmaps(&p, 1.0, res),
            Err(Error::KeypointOutOfBounds { index: 0, .. })
        ));
        let hidden = pose_with(Keypoint {
            row: 99.0,
            col: -5.0,
            visible: false,
        });
        assert!(pose_to_heatmaps(&hidden, 1.0, res).is_ok());
    }
}
