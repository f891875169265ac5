//! Versioned binary checkpoint container shared by the three modules.
//!
//! Layout (little endian): magic, format version, component name, schema
//! hash, config text, named `u64` counters, then named groups of named
//! `f32` tensors. Strings are length-prefixed UTF-8.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::TrainingConfig;
use crate::data::LabelSchema;
use crate::error::{Error, Result};
use crate::nn::{Adam, ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"TRYONCKP";
pub const FORMAT_VERSION: u32 = 1;

type NamedTensors = Vec<(String, Tensor<f32>)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub component: String,
    pub schema_hash: String,
    pub config: TrainingConfig,
    pub counters: BTreeMap<String, u64>,
    pub groups: Vec<(String, NamedTensors)>,
}

impl Checkpoint {
    pub fn new(component: &str, config: &TrainingConfig) -> Self {
        Self {
            component: component.to_string(),
            schema_hash: LabelSchema::standard().hash(),
            config: config.clone(),
            counters: BTreeMap::new(),
            groups: Vec::new(),
        }
    }

    pub fn step(&self) -> u64 {
        self.counters.get("step").copied().unwrap_or(0)
    }

    pub fn set_counter(&mut self, name: &str, value: u64) {
        self.counters.insert(name.to_string(), value);
    }

    pub fn counter(&self, name: &str) -> Result<u64> {
        self.counters
            .get(name)
            .copied()
            .ok_or_else(|| self.missing(&format!("counter {name}")))
    }

    pub fn put_group(&mut self, name: &str, tensors: NamedTensors) {
        self.groups.retain(|(n, _)| n != name);
        self.groups.push((name.to_string(), tensors));
    }

    pub fn group(&self, name: &str) -> Result<&NamedTensors> {
        self.groups
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| self.missing(&format!("group {name}")))
    }

    fn missing(&self, what: &str) -> Error {
        Error::CorruptFile {
            path: PathBuf::from(&self.component),
            reason: format!("checkpoint has no {what}"),
        }
    }

    /// Store parameter values plus optimizer moments under `name`.
    pub fn put_trainable(&mut self, name: &str, store: &ParamStore, adam: Option<&Adam>) {
        self.put_group(name, store.snapshot());
        if let Some(adam) = adam {
            let names = store.names();
            let tag = |prefix: &str, ts: &[Tensor<f32>]| {
                names
                    .iter()
                    .zip(ts)
                    .map(|(n, t)| (format!("{prefix}.{n}"), t.clone()))
                    .collect()
            };
            self.put_group(&format!("{name}.adam_m"), tag("m", &adam.m));
            self.put_group(&format!("{name}.adam_v"), tag("v", &adam.v));
            self.set_counter(&format!("{name}.adam_step"), adam.step);
        }
    }

    /// Restore parameter values (and optimizer moments when `adam` is given).
    pub fn load_trainable(&self, name: &str, store: &mut ParamStore, adam: Option<&mut Adam>) -> Result<()> {
        let bad = |reason: String| Error::SchemaMismatch(format!("{}/{name}: {reason}", self.component));
        store.load_values(self.group(name)?).map_err(bad)?;
        if let Some(adam) = adam {
            let moments = |suffix: &str| -> Result<Vec<Tensor<f32>>> {
                let g = self.group(&format!("{name}.{suffix}"))?;
                if g.len() != store.len() || g.iter().enumerate().any(|(i, (_, t))| t.shape() != store.value(i).shape()) {
                    return Err(bad(format!("{suffix} does not match the parameter set")));
                }
                Ok(g.iter().map(|(_, t)| t.clone()).collect())
            };
            adam.m = moments("adam_m")?;
            adam.v = moments("adam_v")?;
            adam.step = self.counter(&format!("{name}.adam_step"))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, FORMAT_VERSION);
        put_str(&mut w, &self.component);
        put_str(&mut w, &self.schema_hash);
        put_str(&mut w, &self.config.to_text());
        put_u32(&mut w, self.counters.len() as u32);
        for (k, v) in &self.counters {
            put_str(&mut w, k);
            w.extend_from_slice(&v.to_le_bytes());
        }
        put_u32(&mut w, self.groups.len() as u32);
        for (name, tensors) in &self.groups {
            put_str(&mut w, name);
            put_u32(&mut w, tensors.len() as u32);
            for (tname, t) in tensors {
                put_str(&mut w, tname);
                for d in t.shape() {
                    put_u32(&mut w, d as u32);
                }
                for v in t.data() {
                    w.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::corrupt(path, "not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::corrupt(
                path,
                format!("format version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let component = r.string()?;
        let schema_hash = r.string()?;
        let config = TrainingConfig::from_text(&r.string()?)?;
        let mut counters = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            counters.insert(k, v);
        }
        let mut groups = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let count = r.u32()?;
            let mut tensors = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let tname = r.string()?;
                let mut shape = [0usize; 4];
                for d in &mut shape {
                    *d = r.u32()? as usize;
                }
                let n: usize = shape.iter().product();
                let raw = r.take(n * 4)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                tensors.push((tname, Tensor::from_vec(shape, data)));
            }
            groups.push((name, tensors));
        }
        if r.pos != bytes.len() {
            return Err(Error::corrupt(path, "trailing bytes"));
        }
        Ok(Self {
            component,
            schema_hash,
            config,
            counters,
            groups,
        })
    }

    /// Write via `<path>.partial` and rename, so an interrupted write never
    /// leaves a truncated file under the final name.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let partial = partial_path(path);
        fs::write(&partial, self.to_bytes()).map_err(|e| Error::io(&partial, e))?;
        fs::rename(&partial, path).map_err(|e| Error::io(path, e))
    }

    /// Read a checkpoint, refusing files written against another label schema.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt = Self::from_bytes(&bytes, path)?;
        let expected = LabelSchema::standard().hash();
        if ckpt.schema_hash != expected {
            return Err(Error::SchemaMismatch(format!(
                "{} was written for schema {}, this build uses {expected}",
                path.display(),
                ckpt.schema_hash
            )));
        }
        Ok(ckpt)
    }

    /// Load and require a given component.
    pub fn load_component(path: &Path, component: &str) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.component != component {
            return Err(Error::SchemaMismatch(format!(
                "{} holds a {} checkpoint, expected {component}",
                path.display(),
                ckpt.component
            )));
        }
        Ok(ckpt)
    }
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    put_u32(w, s.len() as u32);
    w.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::corrupt(self.path, "truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::corrupt(self.path, "invalid UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut store = ParamStore::new(3);
        store.add_normal("a.weight", [2, 3, 3, 3], 0.1);
        store.add_zeros("a.bias", [1, 2, 1, 1]);
        let adam = Adam::new(&store, 1e-3, 0.9, 0.999);
        let mut c = Checkpoint::new("wgpgm", &TrainingConfig::default());
        c.set_counter("step", 12);
        c.put_trainable("gen", &store, Some(&adam));
        c
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes(), Path::new("x")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.step(), 12);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes();
        let p = Path::new("x");
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], p), Err(Error::CorruptFile { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad, p).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, p).is_err());
    }

    #[test]
    fn schema_hash_mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut c = sample();
        c.save(&path).unwrap();
        assert!(!partial_path(&path).exists());
        assert!(Checkpoint::load_component(&path, "wgpgm").is_ok());
        assert!(matches!(Checkpoint::load_component(&path, "tom"), Err(Error::SchemaMismatch(_))));
        c.schema_hash = "0000000000000000".into();
        c.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn trainable_restores_values_and_moments() {
        let c = sample();
        let mut store = ParamStore::new(99);
        store.add_normal("a.weight", [2, 3, 3, 3], 0.1);
        store.add_zeros("a.bias", [1, 2, 1, 1]);
        let mut adam = Adam::new(&store, 1e-3, 0.9, 0.999);
        c.load_trainable("gen", &mut store, Some(&mut adam)).unwrap();
        assert_eq!(store.snapshot(), c.group("gen").unwrap().clone());
        let mut wrong = ParamStore::new(1);
        wrong.add_zeros("b", [1, 1, 1, 1]);
        assert!(c.load_trainable("gen", &mut wrong, None).is_err());
    }
}
