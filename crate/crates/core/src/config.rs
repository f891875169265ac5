//! Training configuration and its flat `key=value` text form. Module-specific
//! keys carry a section prefix (`wgpgm.lambda_wg=10`); shared keys have none.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::Resolution;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub epochs: u64,
    /// Hard cap on optimizer steps; 0 means no cap.
    pub max_steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl OptimConfig {
    fn gan(epochs: u64) -> Self {
        Self {
            epochs,
            max_steps: 0,
            batch_size: 4,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WgpgmConfig {
    #[serde(flatten)]
    pub optim: OptimConfig,
    pub lambda_ce: f64,
    pub lambda_adv: f64,
    pub lambda_fm: f64,
    pub lambda_wg: f64,
    pub base_width: usize,
    pub depth: usize,
    pub disc_base_width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScwmConfig {
    #[serde(flatten)]
    pub optim: OptimConfig,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub lambda_tps: f64,
    pub base_width: usize,
    /// Train on ground-truth parsing slices instead of WGPGM predictions.
    pub teacher_forcing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomConfig {
    #[serde(flatten)]
    pub optim: OptimConfig,
    pub lambda_l1: f64,
    pub lambda_adv: f64,
    pub lambda_fm: f64,
    pub base_width: usize,
    pub depth: usize,
    pub disc_base_width: usize,
    /// Train on ground-truth parsing and ground-truth-fitted warps.
    pub teacher_forcing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    #[serde(with = "res_text")]
    pub resolution: Resolution,
    pub seed: u64,
    pub deterministic: bool,
    /// Write an intermediate checkpoint every this many steps; 0 disables.
    pub checkpoint_every: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub wgpgm: WgpgmConfig,
    pub scwm: ScwmConfig,
    pub tom: TomConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            resolution: Resolution::DESK,
            seed: 0,
            deterministic: true,
            checkpoint_every: 0,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("ckpt"),
            wgpgm: WgpgmConfig {
                optim: OptimConfig {
                    lr: 1e-3,
                    ..OptimConfig::gan(3)
                },
                lambda_ce: 10.0,
                lambda_adv: 1.0,
                lambda_fm: 10.0,
                lambda_wg: 10.0,
                base_width: 16,
                depth: 5,
                disc_base_width: 16,
            },
            scwm: ScwmConfig {
                optim: OptimConfig {
                    lr: 1e-3,
                    beta1: 0.9,
                    ..OptimConfig::gan(2)
                },
                grid_rows: 5,
                grid_cols: 5,
                lambda_tps: 0.01,
                base_width: 16,
                teacher_forcing: true,
            },
            tom: TomConfig {
                optim: OptimConfig::gan(2),
                lambda_l1: 10.0,
                lambda_adv: 1.0,
                lambda_fm: 10.0,
                base_width: 16,
                depth: 5,
                disc_base_width: 16,
                teacher_forcing: true,
            },
        }
    }
}

mod res_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::data::Resolution;

    pub fn serialize<S: Serializer>(r: &Resolution, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Resolution, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl TrainingConfig {
    /// Check numeric ranges.
    pub fn validate(&self) -> Result<()> {
        self.resolution.validate()?;
        let bad = |key: &str, why: &str| Err(Error::Config(format!("{key}: {why}")));
        for (name, o) in [
            ("wgpgm", &self.wgpgm.optim),
            ("scwm", &self.scwm.optim),
            ("tom", &self.tom.optim),
        ] {
            if o.batch_size == 0 {
                return bad(&format!("{name}.batch_size"), "must be positive");
            }
            if !(o.lr > 0.0 && o.lr.is_finite()) {
                return bad(&format!("{name}.lr"), "must be positive");
            }
            for (k, b) in [("beta1", o.beta1), ("beta2", o.beta2)] {
                if !(0.0..1.0).contains(&b) {
                    return bad(&format!("{name}.{k}"), "must lie in [0, 1)");
                }
            }
        }
        let w = &self.wgpgm;
        for (name, value) in [
            ("wgpgm.lambda_ce", w.lambda_ce),
            ("wgpgm.lambda_adv", w.lambda_adv),
            ("wgpgm.lambda_fm", w.lambda_fm),
            ("wgpgm.lambda_wg", w.lambda_wg),
            ("scwm.lambda_tps", self.scwm.lambda_tps),
            ("tom.lambda_l1", self.tom.lambda_l1),
            ("tom.lambda_adv", self.tom.lambda_adv),
            ("tom.lambda_fm", self.tom.lambda_fm),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::NegativeWeight {
                    name: name.into(),
                    value,
                });
            }
        }
        for (name, value) in [
            ("wgpgm.base_width", w.base_width),
            ("wgpgm.disc_base_width", w.disc_base_width),
            ("scwm.base_width", self.scwm.base_width),
            ("tom.base_width", self.tom.base_width),
            ("tom.disc_base_width", self.tom.disc_base_width),
        ] {
            if value == 0 {
                return bad(name, "must be positive");
            }
        }
        for (name, value) in [("wgpgm.depth", w.depth), ("tom.depth", self.tom.depth)] {
            if !(2..=8).contains(&value) {
                return bad(name, "must lie in 2..=8");
            }
        }
        if self.scwm.grid_rows < 2 || self.scwm.grid_cols < 2 {
            return bad("scwm.grid_rows/grid_cols", "need at least 2");
        }
        Ok(())
    }

    /// Flat `key=value` lines in a stable order.
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut flat = BTreeMap::new();
        flatten("", &value, &mut flat);
        let mut out = String::new();
        for (k, v) in flat {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Parse `key=value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; unknown keys and ill-typed values are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let pairs = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| Error::Config(format!("expected key=value, got `{l}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        cfg.apply(pairs)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Apply overrides such as `wgpgm.epochs=3` on top of this config.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        let mut value = serde_json::to_value(&*self).expect("config serializes");
        for (key, text) in pairs {
            set_flat(&mut value, key, text)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

/// Replace one leaf, parsing the text according to the leaf's current type.
fn set_flat(root: &mut Value, key: &str, text: &str) -> Result<()> {
    let unknown = || Error::Config(format!("unknown key `{key}`"));
    let mut node = root;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|m: &mut Map<String, Value>| m.get_mut(part))
            .ok_or_else(unknown)?;
    }
    let ill = |kind: &str| Error::Config(format!("`{key}` expects {kind}, got `{text}`"));
    *node = match node {
        Value::Bool(_) => Value::Bool(text.parse().map_err(|_| ill("true or false"))?),
        Value::Number(n) if n.is_u64() => Value::from(text.parse::<u64>().map_err(|_| ill("an unsigned integer"))?),
        Value::Number(_) => {
            let v: f64 = text.parse().map_err(|_| ill("a number"))?;
            serde_json::Number::from_f64(v)
                .map(Value::Number)
                .ok_or_else(|| ill("a finite number"))?
        }
        Value::String(_) => Value::String(text.to_string()),
        _ => return Err(unknown()),
    };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = TrainingConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_text();
        assert!(text.contains("wgpgm.lambda_wg=10.0\n"));
        assert!(text.contains("resolution=64x48\n"));
        assert_eq!(TrainingConfig::from_text(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_errors() {
        let mut cfg = TrainingConfig::default();
        cfg.apply([("wgpgm.lambda_wg", "2.5"), ("seed", "9"), ("resolution", "256x192")])
            .unwrap();
        assert_eq!(cfg.wgpgm.lambda_wg, 2.5);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.resolution, Resolution::new(256, 192).unwrap());
        let err = cfg.clone().apply([("wgpgm.lambda_zz", "1")]).unwrap_err();
        assert!(err.to_string().contains("wgpgm.lambda_zz"));
        assert!(cfg.clone().apply([("seed", "-1")]).is_err());
        assert!(cfg.clone().apply([("resolution", "64x64")]).is_err());
        assert!(matches!(
            cfg.clone().apply([("wgpgm.lambda_ce", "-1")]),
            Err(Error::NegativeWeight { .. })
        ));
        assert!(TrainingConfig::from_text("# comment\n\nseed=4\n").is_ok());
        assert!(TrainingConfig::from_text("seed 4").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(
            seed in any::<u64>(),
            epochs in 0u64..1000,
            batch in 1usize..64,
            lr in 1e-6f64..1.0,
            lam in 0.0f64..100.0,
            det in any::<bool>(),
            scale in 1usize..5,
            dir in "[a-z][a-z0-9_/]{0,12}",
        ) {
            let mut cfg = TrainingConfig::default();
            cfg.seed = seed;
            cfg.deterministic = det;
            cfg.resolution = Resolution::new(16 * scale, 12 * scale).unwrap();
            cfg.wgpgm.optim.epochs = epochs;
            cfg.scwm.optim.batch_size = batch;
            cfg.tom.optim.lr = lr;
            cfg.wgpgm.lambda_fm = lam;
            cfg.out_dir = PathBuf::from(dir);
            prop_assert_eq!(TrainingConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
