//! Labeled image collections: the synthetic grating generator used for
//! desk-scale experiments, a raw on-disk dataset format, and a loader
//! for class-per-subdirectory image trees.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Write};
use std::path::Path;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};
use crate::img::{clamp01_inplace, resize_bilinear, validate_image, Image};

#[derive(Clone, Debug)]
pub struct LabeledImageSet {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
    pub num_classes: usize,
}

impl LabeledImageSet {
    pub fn new(
        images: Vec<Image>,
        labels: Vec<usize>,
        ids: Vec<String>,
        num_classes: usize,
    ) -> Result<Self> {
        let set = LabeledImageSet { images, labels, ids, num_classes };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        if self.images.len() != self.labels.len() || self.images.len() != self.ids.len() {
            return Err(Error::shape("images, labels and ids must have equal length"));
        }
        let dims = self.images[0].dim();
        for img in &self.images {
            if img.dim() != dims {
                return Err(Error::shape("dataset images disagree on dimensions"));
            }
            validate_image(img, 1e-6)?;
        }
        for &l in &self.labels {
            if l >= self.num_classes {
                return Err(Error::invalid(format!(
                    "label {l} out of range for {} classes",
                    self.num_classes
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample id {id}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.images[0].dim()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut images = Vec::with_capacity(idx.len());
        let mut labels = Vec::with_capacity(idx.len());
        let mut ids = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.len() {
                return Err(Error::invalid(format!("subset index {i} out of range")));
            }
            images.push(self.images[i].clone());
            labels.push(self.labels[i]);
            ids.push(self.ids[i].clone());
        }
        LabeledImageSet::new(images, labels, ids, self.num_classes)
    }

    /// Stratified split; the second return value holds roughly
    /// `test_fraction` of each class.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
            return Err(Error::invalid("test fraction must lie in (0, 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for class in 0..self.num_classes {
            let mut members: Vec<usize> = (0..self.len())
                .filter(|&i| self.labels[i] == class)
                .collect();
            shuffle(&mut members, &mut rng);
            let n_test = ((members.len() as f64) * test_fraction).round() as usize;
            let n_test = n_test.min(members.len());
            test_idx.extend_from_slice(&members[..n_test]);
            train_idx.extend_from_slice(&members[n_test..]);
        }
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(Error::invalid("split produced an empty side"));
        }
        Ok((self.subset(&train_idx)?, self.subset(&test_idx)?))
    }
}

/// Fisher-Yates with the caller's RNG; `rand`'s SliceRandom would do,
/// but keeping the draw pattern explicit makes seeds easy to reason
/// about across versions.
pub fn shuffle<T, R: Rng>(xs: &mut [T], rng: &mut R) {
    for i in (1..xs.len()).rev() {
        let j = rng.gen_range(0..=i);
        xs.swap(i, j);
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub height: usize,
    pub width: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 6,
            per_class: 100,
            height: 12,
            width: 12,
            noise_sd: 0.06,
            seed: 0,
        }
    }
}

const HUES: [[f64; 3]; 5] = [
    [1.0, 0.15, 0.15],
    [0.15, 1.0, 0.15],
    [0.15, 0.3, 1.0],
    [1.0, 0.9, 0.1],
    [0.9, 0.15, 1.0],
];
const FREQS: [f64; 2] = [2.0, 5.0];

/// Colour gratings: class index selects a hue, a spatial frequency and
/// a preferred orientation (hue = class / 2, frequency = class % 2,
/// orientation spread by a golden-ratio schedule), so neighbouring
/// classes share a hue and differ in texture. Phase, amplitude, base
/// level and an orientation jitter vary per sample.
pub fn synthetic_gratings(spec: &SyntheticSpec) -> Result<LabeledImageSet> {
    if spec.classes == 0 || spec.classes > 10 {
        return Err(Error::invalid("synthetic classes must lie in 1..=10"));
    }
    if spec.per_class == 0 || spec.height < 4 || spec.width < 4 {
        return Err(Error::invalid("synthetic spec too small"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sd.max(0.0)).unwrap();
    let scale = spec.height.max(spec.width) as f64;
    let mut images = Vec::with_capacity(spec.classes * spec.per_class);
    let mut labels = Vec::with_capacity(images.capacity());
    let mut ids = Vec::with_capacity(images.capacity());
    for class in 0..spec.classes {
        let hue = HUES[(class / 2) % HUES.len()];
        let freq = FREQS[class % 2];
        let base_theta = std::f64::consts::PI * ((class as f64 * 0.381_966).fract());
        for i in 0..spec.per_class {
            let theta = base_theta + rng.gen_range(-0.25..0.25);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp = rng.gen_range(0.25..0.5);
            let base = rng.gen_range(0.2..0.4);
            let (ct, st) = (theta.cos(), theta.sin());
            let mut img = Array3::zeros((spec.height, spec.width, 3));
            for y in 0..spec.height {
                for x in 0..spec.width {
                    let u = (x as f64 * ct + y as f64 * st) / scale;
                    let p = (std::f64::consts::TAU * freq * u + phase).sin();
                    for ch in 0..3 {
                        let v = base
                            + amp * (0.5 + 0.5 * p) * hue[ch]
                            + if spec.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                        img[[y, x, ch]] = v;
                    }
                }
            }
            clamp01_inplace(&mut img);
            images.push(img);
            labels.push(class);
            ids.push(format!("syn{class:02}-{i:04}"));
        }
    }
    LabeledImageSet::new(images, labels, ids, spec.classes)
}

const DATASET_MAGIC: &[u8; 4] = b"SCDS";
const DATASET_VERSION: u32 = 1;
const MAX_ID_LEN: usize = 4096;

/// Raw dataset file: magic, version, dims, class count, then one
/// record per sample (label, id, f32 pixels).
pub fn save_dataset(set: &LabeledImageSet, path: &Path) -> Result<()> {
    set.validate()?;
    let ctx = |e| Error::io(path.display().to_string(), e);
    let f = File::create(path).map_err(ctx)?;
    let mut w = BufWriter::new(f);
    let (h, wd, c) = set.dims();
    (|| -> std::io::Result<()> {
        w.write_all(DATASET_MAGIC)?;
        binio::write_u32(&mut w, DATASET_VERSION)?;
        binio::write_u32(&mut w, h as u32)?;
        binio::write_u32(&mut w, wd as u32)?;
        binio::write_u32(&mut w, c as u32)?;
        binio::write_u32(&mut w, set.num_classes as u32)?;
        binio::write_u64(&mut w, set.len() as u64)?;
        for i in 0..set.len() {
            binio::write_u32(&mut w, set.labels[i] as u32)?;
            binio::write_str(&mut w, &set.ids[i])?;
            let img = set.images[i].as_standard_layout();
            let px: Vec<f32> = img.iter().map(|&v| v as f32).collect();
            binio::write_f32_slice(&mut w, &px)?;
        }
        w.flush()
    })()
    .map_err(ctx)
}

pub fn load_dataset(path: &Path) -> Result<LabeledImageSet> {
    let p = path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(p.clone(), e))?;
    let mut r = BufReader::new(f);
    let fmt = |reason: String| Error::format(p.clone(), reason);
    let res = (|| -> std::io::Result<LabeledImageSet> {
        binio::expect_magic(&mut r, DATASET_MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != DATASET_VERSION {
            return Err(std::io::Error::new(
                ErrorKind::InvalidData,
                format!("unsupported dataset version {version}"),
            ));
        }
        let h = binio::read_u32(&mut r)? as usize;
        let w = binio::read_u32(&mut r)? as usize;
        let c = binio::read_u32(&mut r)? as usize;
        let k = binio::read_u32(&mut r)? as usize;
        let n = binio::read_u64(&mut r)? as usize;
        if h == 0 || w == 0 || c == 0 || h * w * c > 1 << 24 {
            return Err(std::io::Error::new(
                ErrorKind::InvalidData,
                "implausible image dimensions",
            ));
        }
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(binio::read_u32(&mut r)? as usize);
            ids.push(binio::read_str(&mut r, MAX_ID_LEN)?);
            let px = binio::read_f32_vec(&mut r, h * w * c)?;
            let img = Array3::from_shape_vec((h, w, c), px.iter().map(|&v| v as f64).collect())
                .expect("shape matches length");
            images.push(img);
        }
        Ok(LabeledImageSet { images, labels, ids, num_classes: k })
    })();
    let mut set = match res {
        Ok(s) => s,
        Err(e) => return Err(fmt(e.to_string())),
    };
    for img in set.images.iter_mut() {
        clamp01_inplace(img);
    }
    set.validate()?;
    Ok(set)
}

/// Loads a `class_name/*.png|jpg` tree. Classes are the sorted
/// subdirectory names; every image is resized to (height, width).
pub fn load_image_dir(root: &Path, height: usize, width: usize) -> Result<LabeledImageSet> {
    let rd = std::fs::read_dir(root).map_err(|e| Error::io(root.display().to_string(), e))?;
    let mut class_dirs: Vec<std::path::PathBuf> = rd
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::invalid(format!(
            "no class subdirectories under {}",
            root.display()
        )));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for (class, dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir.display().to_string(), e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
                    Some(ref e) if e == "png" || e == "jpg" || e == "jpeg"
                )
            })
            .collect();
        files.sort();
        for file in files {
            let decoded = image::open(&file)
                .map_err(|e| Error::format(file.display().to_string(), e.to_string()))?
                .into_rgb8();
            let (iw, ih) = decoded.dimensions();
            let mut img = Array3::zeros((ih as usize, iw as usize, 3));
            for (x, y, px) in decoded.enumerate_pixels() {
                for ch in 0..3 {
                    img[[y as usize, x as usize, ch]] = px.0[ch] as f64 / 255.0;
                }
            }
            images.push(resize_bilinear(&img, height, width));
            labels.push(class);
            let stem = file
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("img")
                .to_string();
            let class_name = dir
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or("class")
                .to_string();
            ids.push(format!("{class_name}/{stem}"));
        }
    }
    LabeledImageSet::new(images, labels, ids, class_dirs.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::channel_means;

    #[test]
    fn gratings_have_expected_shape_and_labels() {
        let spec = SyntheticSpec { classes: 6, per_class: 5, ..Default::default() };
        let set = synthetic_gratings(&spec).unwrap();
        assert_eq!(set.len(), 30);
        assert_eq!(set.dims(), (12, 12, 3));
        assert_eq!(set.num_classes, 6);
        assert!(set.validate().is_ok());
    }

    #[test]
    fn gratings_are_seed_deterministic() {
        let spec = SyntheticSpec { classes: 4, per_class: 3, seed: 77, ..Default::default() };
        let a = synthetic_gratings(&spec).unwrap();
        let b = synthetic_gratings(&spec).unwrap();
        for (x, y) in a.images.iter().zip(b.images.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn hue_separates_distant_classes() {
        // classes 0/1 are red-ish, classes 2/3 green-ish: the channel
        // statistics should reflect that on average.
        let spec = SyntheticSpec {
            classes: 4,
            per_class: 40,
            noise_sd: 0.02,
            seed: 5,
            ..Default::default()
        };
        let set = synthetic_gratings(&spec).unwrap();
        let mean_for = |class: usize, ch: usize| -> f64 {
            let mut acc = 0.0;
            let mut n = 0;
            for i in 0..set.len() {
                if set.labels[i] == class {
                    acc += channel_means(&set.images[i])[ch];
                    n += 1;
                }
            }
            acc / n as f64
        };
        assert!(mean_for(0, 0) > mean_for(2, 0) + 0.05);
        assert!(mean_for(2, 1) > mean_for(0, 1) + 0.05);
    }

    #[test]
    fn dataset_file_round_trip() {
        let spec = SyntheticSpec { classes: 3, per_class: 4, seed: 1, ..Default::default() };
        let set = synthetic_gratings(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.scds");
        save_dataset(&set, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.len(), set.len());
        assert_eq!(back.labels, set.labels);
        assert_eq!(back.ids, set.ids);
        for (a, b) in back.images.iter().zip(set.images.iter()) {
            let d = crate::img::linf_dist(a, b);
            assert!(d < 1e-6, "f32 round trip moved a pixel by {d}");
        }
    }

    #[test]
    fn load_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.scds");
        std::fs::write(&path, b"not a dataset at all").unwrap();
        assert!(load_dataset(&path).is_err());
    }

    #[test]
    fn stratified_split_keeps_classes_apart() {
        let spec = SyntheticSpec { classes: 4, per_class: 10, seed: 2, ..Default::default() };
        let set = synthetic_gratings(&spec).unwrap();
        let (train, test) = set.split(0.3, 11).unwrap();
        assert_eq!(train.len() + test.len(), set.len());
        for class in 0..4 {
            let n = test.labels.iter().filter(|&&l| l == class).count();
            assert_eq!(n, 3);
        }
        let train_ids: std::collections::HashSet<_> = train.ids.iter().collect();
        assert!(test.ids.iter().all(|id| !train_ids.contains(id)));
    }
}
