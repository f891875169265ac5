use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 17;
pub const NUM_KEYPOINTS: usize = 17;

/// Raster size in pixels. Height and width must be in 4:3 proportion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resolution {
    pub height: usize,
    pub width: usize,
}

impl Resolution {
    pub const DESK: Resolution = Resolution {
        height: 64,
        width: 48,
    };

    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || height * 3 != width * 4 {
            return Err(Error::InvalidResolution { height, width });
        }
        Ok(Self { height, width })
    }

    pub fn validate(self) -> Result<Self> {
        Self::new(self.height, self.width)
    }

    #[inline]
    pub fn pixels(self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl FromStr for Resolution {
    type Err = Error;

    /// Parses `HxW`, e.g. `64x48`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("resolution `{s}` is not of the form HxW"));
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let h = h.trim().parse().map_err(|_| bad())?;
        let w = w.trim().parse().map_err(|_| bad())?;
        Resolution::new(h, w)
    }
}

/// Semantic role of a parsing class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Background,
    Hair,
    Face,
    Neck,
    TorsoSkin,
    LeftArm,
    RightArm,
    LeftHand,
    RightHand,
    TopTorso,
    TopSleeves,
    BottomHips,
    BottomLegs,
    LeftLegSkin,
    RightLegSkin,
    LeftFoot,
    RightFoot,
}

impl Role {
    pub const ALL: [Role; NUM_CLASSES] = [
        Role::Background,
        Role::Hair,
        Role::Face,
        Role::Neck,
        Role::TorsoSkin,
        Role::LeftArm,
        Role::RightArm,
        Role::LeftHand,
        Role::RightHand,
        Role::TopTorso,
        Role::TopSleeves,
        Role::BottomHips,
        Role::BottomLegs,
        Role::LeftLegSkin,
        Role::RightLegSkin,
        Role::LeftFoot,
        Role::RightFoot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::Background => "background",
            Role::Hair => "hair",
            Role::Face => "face",
            Role::Neck => "neck",
            Role::TorsoSkin => "torso-skin",
            Role::LeftArm => "left-arm",
            Role::RightArm => "right-arm",
            Role::LeftHand => "left-hand",
            Role::RightHand => "right-hand",
            Role::TopTorso => "top-torso",
            Role::TopSleeves => "top-sleeves",
            Role::BottomHips => "bottom-hips",
            Role::BottomLegs => "bottom-legs",
            Role::LeftLegSkin => "left-leg-skin",
            Role::RightLegSkin => "right-leg-skin",
            Role::LeftFoot => "left-foot",
            Role::RightFoot => "right-foot",
        }
    }

    /// Body parts that survive wearing-agnostic preprocessing.
    pub fn is_kept(self) -> bool {
        matches!(
            self,
            Role::Hair | Role::Face | Role::LeftHand | Role::RightHand | Role::LeftFoot | Role::RightFoot
        )
    }

    pub fn is_top(self) -> bool {
        matches!(self, Role::TopTorso | Role::TopSleeves)
    }

    pub fn is_bottom(self) -> bool {
        matches!(self, Role::BottomHips | Role::BottomLegs)
    }

    pub fn is_garment(self) -> bool {
        self.is_top() || self.is_bottom()
    }
}

/// Ordered class list with a role per class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSchema {
    roles: Vec<Role>,
}

impl Default for LabelSchema {
    fn default() -> Self {
        Self::standard()
    }
}

impl LabelSchema {
    pub fn standard() -> Self {
        Self {
            roles: Role::ALL.to_vec(),
        }
    }

    /// Build from class names; every role must appear exactly once.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.len() != NUM_CLASSES {
            return Err(Error::SchemaMismatch(format!(
                "expected {NUM_CLASSES} classes, found {}",
                names.len()
            )));
        }
        let mut roles = Vec::with_capacity(NUM_CLASSES);
        for n in names {
            let n = n.as_ref();
            let role = Role::ALL
                .into_iter()
                .find(|r| r.name() == n)
                .ok_or_else(|| Error::SchemaMismatch(format!("unknown class `{n}`")))?;
            if roles.contains(&role) {
                return Err(Error::SchemaMismatch(format!("duplicate class `{n}`")));
            }
            roles.push(role);
        }
        Ok(Self { roles })
    }

    pub fn class_names(&self) -> Vec<&'static str> {
        self.roles.iter().map(|r| r.name()).collect()
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn role(&self, class: usize) -> Role {
        self.roles[class]
    }

    pub fn class_of(&self, role: Role) -> usize {
        self.roles
            .iter()
            .position(|&r| r == role)
            .expect("every role is present in a valid schema")
    }

    pub fn classes_where(&self, pred: impl Fn(Role) -> bool) -> Vec<usize> {
        (0..NUM_CLASSES).filter(|&c| pred(self.roles[c])).collect()
    }

    /// Short stable digest of the class list, embedded in checkpoints.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for name in self.class_names() {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Class indices of the standard schema, usable in `const` contexts.
pub mod class {
    pub const BACKGROUND: u8 = 0;
    pub const HAIR: u8 = 1;
    pub const FACE: u8 = 2;
    pub const NECK: u8 = 3;
    pub const TORSO_SKIN: u8 = 4;
    pub const LEFT_ARM: u8 = 5;
    pub const RIGHT_ARM: u8 = 6;
    pub const LEFT_HAND: u8 = 7;
    pub const RIGHT_HAND: u8 = 8;
    pub const TOP_TORSO: u8 = 9;
    pub const TOP_SLEEVES: u8 = 10;
    pub const BOTTOM_HIPS: u8 = 11;
    pub const BOTTOM_LEGS: u8 = 12;
    pub const LEFT_LEG_SKIN: u8 = 13;
    pub const RIGHT_LEG_SKIN: u8 = 14;
    pub const LEFT_FOOT: u8 = 15;
    pub const RIGHT_FOOT: u8 = 16;

    pub const BOTTOM: [usize; 2] = [BOTTOM_HIPS as usize, BOTTOM_LEGS as usize];
    pub const TOP: [usize; 2] = [TOP_TORSO as usize, TOP_SLEEVES as usize];
    pub const GARMENT: [usize; 4] = [
        TOP_TORSO as usize,
        TOP_SLEEVES as usize,
        BOTTOM_HIPS as usize,
        BOTTOM_LEGS as usize,
    ];
}

/// RGB palette used when writing parsing maps as indexed PNGs.
pub const PALETTE: [[u8; 3]; NUM_CLASSES] = [
    [0, 0, 0],
    [128, 64, 0],
    [255, 200, 150],
    [200, 150, 110],
    [230, 170, 130],
    [0, 128, 255],
    [0, 200, 200],
    [128, 0, 255],
    [200, 0, 200],
    [255, 0, 0],
    [255, 128, 0],
    [0, 160, 0],
    [128, 255, 0],
    [0, 0, 160],
    [0, 64, 255],
    [96, 96, 96],
    [160, 160, 160],
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_indices_match_role_order() {
        let s = LabelSchema::standard();
        assert_eq!(s.class_of(Role::TopTorso), class::TOP_TORSO as usize);
        assert_eq!(s.class_of(Role::BottomHips), class::BOTTOM_HIPS as usize);
        assert_eq!(s.class_of(Role::RightFoot), class::RIGHT_FOOT as usize);
        assert_eq!(s.classes_where(Role::is_bottom), class::BOTTOM.to_vec());
        assert_eq!(s.classes_where(Role::is_garment), class::GARMENT.to_vec());
    }

    #[test]
    fn schema_round_trips_through_names() {
        let s = LabelSchema::standard();
        let back = LabelSchema::from_names(&s.class_names()).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.hash(), back.hash());
        assert_eq!(s.hash().len(), 16);
    }

    #[test]
    fn schema_rejects_wrong_class_lists() {
        let mut names = LabelSchema::standard().class_names();
        names.push("extra");
        assert!(matches!(LabelSchema::from_names(&names), Err(Error::SchemaMismatch(_))));
        let mut names = LabelSchema::standard().class_names();
        names[3] = "hair";
        assert!(matches!(LabelSchema::from_names(&names), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn resolution_requires_four_by_three() {
        assert!(Resolution::new(64, 48).is_ok());
        assert!(Resolution::new(256, 192).is_ok());
        assert!(Resolution::new(512, 384).is_ok());
        assert!(matches!(
            Resolution::new(64, 64),
            Err(Error::InvalidResolution { .. })
        ));
        assert!(Resolution::new(0, 0).is_err());
        assert_eq!("64x48".parse::<Resolution>().unwrap(), Resolution::DESK);
        assert!("64by48".parse::<Resolution>().is_err());
    }
}
