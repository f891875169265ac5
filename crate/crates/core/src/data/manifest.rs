use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::io::{read_json, read_label_png, read_rgb_png, write_json};
use crate::data::pose::PoseKeypoints;
use crate::data::raster::ParsingMap;
use crate::data::sample::{make_agnostic, GarmentKind, GarmentRecord, SampleRecord};
use crate::data::schema::{LabelSchema, Resolution};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const UNPAIR_MANIFEST_FILE: &str = "manifest_unpair.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    TestPair,
    TestUnpair,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::TestPair => "test_pair",
            Split::TestUnpair => "test_unpair",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test_pair" => Ok(Split::TestPair),
            "test_unpair" => Ok(Split::TestUnpair),
            _ => Err(Error::Config(format!(
                "unknown split `{s}` (expected train, test_pair or test_unpair)"
            ))),
        }
    }
}

/// One model image and the garments it is paired with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub top_id: String,
    pub bottom_id: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct SchemaJson {
    classes: Vec<String>,
    hash: String,
}

#[derive(Serialize, Deserialize)]
struct ManifestJson {
    schema: SchemaJson,
    resolution: Resolution,
    split: Split,
    samples: Vec<SampleEntry>,
}

/// Index of a dataset directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub schema: LabelSchema,
    pub resolution: Resolution,
    pub split: Split,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    /// Read a manifest; the dataset root is the file's directory. A
    /// directory argument means its `manifest.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let json: ManifestJson = read_json(&file)?;
        let schema = LabelSchema::from_names(&json.schema.classes)?;
        if schema.hash() != json.schema.hash {
            return Err(Error::SchemaMismatch(format!(
                "{}: schema hash {} does not match its class list ({})",
                file.display(),
                json.schema.hash,
                schema.hash()
            )));
        }
        if schema != LabelSchema::standard() {
            return Err(Error::SchemaMismatch(format!(
                "{}: class order differs from the supported schema",
                file.display()
            )));
        }
        Ok(Self {
            root: file.parent().map(Path::to_path_buf).unwrap_or_default(),
            schema,
            resolution: json.resolution.validate()?,
            split: json.split,
            samples: json.samples,
        })
    }

    pub fn save(&self, file_name: &str) -> Result<PathBuf> {
        let json = ManifestJson {
            schema: SchemaJson {
                classes: self.schema.class_names().iter().map(|s| s.to_string()).collect(),
                hash: self.schema.hash(),
            },
            resolution: self.resolution,
            split: self.split,
            samples: self.samples.clone(),
        };
        let path = self.root.join(file_name);
        write_json(&path, &json)?;
        Ok(path)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn entry(&self, id: &str) -> Result<&SampleEntry> {
        self.samples
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn model_path(&self, id: &str) -> PathBuf {
        self.root.join("models").join(format!("{id}.png"))
    }

    pub fn parsing_path(&self, id: &str) -> PathBuf {
        self.root.join("parsing").join(format!("{id}.png"))
    }

    pub fn pose_path(&self, id: &str) -> PathBuf {
        self.root.join("pose").join(format!("{id}.json"))
    }

    pub fn top_path(&self, top_id: &str) -> PathBuf {
        self.root.join("tops").join(format!("{top_id}.png"))
    }

    pub fn top_seg_path(&self, top_id: &str) -> PathBuf {
        self.root.join("tops_seg").join(format!("{top_id}.png"))
    }

    pub fn bottom_path(&self, bottom_id: &str) -> PathBuf {
        self.root.join("bottoms").join(format!("{bottom_id}.png"))
    }

    pub fn bottom_seg_path(&self, bottom_id: &str) -> PathBuf {
        self.root.join("bottoms_seg").join(format!("{bottom_id}.png"))
    }

    /// Every file an entry refers to.
    pub fn entry_files(&self, e: &SampleEntry) -> Vec<PathBuf> {
        let mut files = vec![
            self.model_path(&e.id),
            self.parsing_path(&e.id),
            self.pose_path(&e.id),
            self.top_path(&e.top_id),
            self.top_seg_path(&e.top_id),
        ];
        if let Some(b) = &e.bottom_id {
            files.push(self.bottom_path(b));
            files.push(self.bottom_seg_path(b));
        }
        files
    }

    /// Structural checks: unique ids, every referenced file present, and for
    /// unpaired splits no sample keeping its original outfit (looked up in
    /// the paired manifest of the same root).
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.samples {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::corrupt(
                    self.root.join(MANIFEST_FILE),
                    format!("duplicate sample id `{}`", e.id),
                ));
            }
            for f in self.entry_files(e) {
                if !f.is_file() {
                    return Err(Error::corrupt(f, "referenced file is missing"));
                }
            }
        }
        if self.split == Split::TestUnpair {
            let paired = DatasetManifest::load(&self.root.join(MANIFEST_FILE))?;
            for e in &self.samples {
                let orig = paired.entry(&e.id)?;
                if orig.top_id == e.top_id && orig.bottom_id == e.bottom_id {
                    return Err(Error::corrupt(
                        self.root.join(UNPAIR_MANIFEST_FILE),
                        format!("sample `{}` keeps its original pairing", e.id),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Reassign outfits so that no sample keeps both of its original garments.
/// Outfits move as (top, bottom) pairs along a single random cycle.
pub fn make_unpaired_split(manifest: &DatasetManifest, seed: u64) -> Result<DatasetManifest> {
    if manifest.split != Split::TestPair {
        return Err(Error::Config(format!(
            "unpaired splits are derived from test_pair manifests, got {}",
            manifest.split
        )));
    }
    let n = manifest.samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let perm = sattolo(n, &mut rng);
        let samples: Vec<SampleEntry> = manifest
            .samples
            .iter()
            .zip(&perm)
            .map(|(s, &j)| SampleEntry {
                id: s.id.clone(),
                top_id: manifest.samples[j].top_id.clone(),
                bottom_id: manifest.samples[j].bottom_id.clone(),
            })
            .collect();
        let keeps = samples
            .iter()
            .zip(&manifest.samples)
            .any(|(a, b)| a.top_id == b.top_id && a.bottom_id == b.bottom_id);
        if !keeps {
            return Ok(DatasetManifest {
                split: Split::TestUnpair,
                samples,
                ..manifest.clone()
            });
        }
    }
    Err(Error::TooFewSamples(n))
}

/// Uniform random cyclic permutation (no fixed points).
fn sattolo(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    p
}

fn read_garment(
    manifest: &DatasetManifest,
    kind: GarmentKind,
    image: PathBuf,
    seg: PathBuf,
) -> Result<GarmentRecord> {
    let img = read_rgb_png(&image)?;
    let (res, labels) = read_label_png(&seg)?;
    check_res(manifest, img.resolution(), &image)?;
    check_res(manifest, res, &seg)?;
    GarmentRecord::new(kind, img, labels).map_err(|e| Error::corrupt(seg, e.to_string()))
}

fn check_res(manifest: &DatasetManifest, got: Resolution, path: &Path) -> Result<()> {
    if got != manifest.resolution {
        return Err(Error::corrupt(
            path,
            format!("raster is {got}, manifest says {}", manifest.resolution),
        ));
    }
    Ok(())
}

/// Decode a catalog garment by id; the id must be referenced by the manifest.
pub fn load_garment(manifest: &DatasetManifest, kind: GarmentKind, id: &str) -> Result<GarmentRecord> {
    let known = manifest.samples.iter().any(|e| match kind {
        GarmentKind::Top => e.top_id == id,
        GarmentKind::Bottom => e.bottom_id.as_deref() == Some(id),
    });
    if !known {
        return Err(Error::UnknownId(id.to_string()));
    }
    let (image, seg) = match kind {
        GarmentKind::Top => (manifest.top_path(id), manifest.top_seg_path(id)),
        GarmentKind::Bottom => (manifest.bottom_path(id), manifest.bottom_seg_path(id)),
    };
    read_garment(manifest, kind, image, seg)
}

/// Decode one sample and derive its wearing-agnostic inputs.
pub fn load_sample(manifest: &DatasetManifest, id: &str) -> Result<SampleRecord> {
    let e = manifest.entry(id)?;
    let model_path = manifest.model_path(id);
    let model_image = read_rgb_png(&model_path)?;
    check_res(manifest, model_image.resolution(), &model_path)?;
    let parsing_path = manifest.parsing_path(id);
    let (pres, labels) = read_label_png(&parsing_path)?;
    check_res(manifest, pres, &parsing_path)?;
    let parsing = ParsingMap::from_labels(pres, &labels)?;
    let keypoints: PoseKeypoints = read_json(&manifest.pose_path(id))?;
    let top = read_garment(
        manifest,
        GarmentKind::Top,
        manifest.top_path(&e.top_id),
        manifest.top_seg_path(&e.top_id),
    )?;
    let bottom = e
        .bottom_id
        .as_ref()
        .map(|b| {
            read_garment(
                manifest,
                GarmentKind::Bottom,
                manifest.bottom_path(b),
                manifest.bottom_seg_path(b),
            )
        })
        .transpose()?;
    let (agnostic_image, agnostic_parsing) = make_agnostic(&model_image, &parsing)?;
    let sample = SampleRecord {
        id: id.to_string(),
        model_image,
        parsing,
        keypoints,
        top,
        bottom,
        agnostic_image,
        agnostic_parsing,
    };
    // Unpaired samples wear someone else's outfit, so the dress rule only
    // applies to the original pairing.
    if manifest.split != Split::TestUnpair {
        sample.validate()?;
    } else {
        sample.keypoints.validate(sample.resolution())?;
    }
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: usize) -> DatasetManifest {
        DatasetManifest {
            root: PathBuf::from("/nonexistent"),
            schema: LabelSchema::standard(),
            resolution: Resolution::DESK,
            split: Split::TestPair,
            samples: (0..n)
                .map(|i| SampleEntry {
                    id: format!("s{i}"),
                    top_id: format!("s{i}"),
                    bottom_id: (i % 3 != 0).then(|| format!("s{i}")),
                })
                .collect(),
        }
    }

    #[test]
    fn two_samples_swap_outfits() {
        let m = manifest(2);
        let u = make_unpaired_split(&m, 9).unwrap();
        assert_eq!(u.split, Split::TestUnpair);
        assert_eq!(u.samples[0].top_id, "s1");
        assert_eq!(u.samples[0].bottom_id.as_deref(), Some("s1"));
        assert_eq!(u.samples[1].top_id, "s0");
        assert_eq!(u.samples[1].bottom_id, None);
    }

    #[test]
    fn unpairing_is_seeded_and_complete() {
        let m = manifest(50);
        let a = make_unpaired_split(&m, 4).unwrap();
        let b = make_unpaired_split(&m, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        for (x, y) in a.samples.iter().zip(&m.samples) {
            assert_eq!(x.id, y.id);
            assert!(!(x.top_id == y.top_id && x.bottom_id == y.bottom_id));
        }
    }

    #[test]
    fn one_sample_cannot_be_deranged() {
        assert!(matches!(
            make_unpaired_split(&manifest(1), 0),
            Err(Error::TooFewSamples(1))
        ));
        let mut train = manifest(4);
        train.split = Split::Train;
        assert!(make_unpaired_split(&train, 0).is_err());
    }

    #[test]
    fn split_names_round_trip() {
        for s in [Split::Train, Split::TestPair, Split::TestUnpair] {
            assert_eq!(s.to_string().parse::<Split>().unwrap(), s);
        }
    }
}
