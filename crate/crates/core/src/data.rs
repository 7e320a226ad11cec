//! Datasets: IDX files, portable-pixmap image folders, seeded similarity
//! transforms and splits.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lie::SimilarityTransform;
use crate::lifting::{self, PixelGrid};
use crate::rng::Xorshift64Star;
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Four-dimensional `n x rows x cols x 3` payloads.
pub const IDX_RGB_MAGIC: u32 = 0x0000_0804;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<PixelGrid>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub provenance: String,
}

impl LabeledDataset {
    pub fn new(
        images: Vec<PixelGrid>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let ds = Self {
            images,
            labels,
            class_names,
            provenance: provenance.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} images but {} labels",
                self.images.len(),
                self.labels.len()
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.class_names.len()) {
            return Err(Error::IndexOutOfRange {
                index: l,
                len: self.class_names.len(),
            });
        }
        if let Some(first) = self.images.first() {
            let dims = (first.height(), first.width(), first.channels());
            if self
                .images
                .iter()
                .any(|i| (i.height(), i.width(), i.channels()) != dims)
            {
                return Err(Error::DimensionMismatch("images differ in shape".into()));
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

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

fn digit_names(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::TruncatedFile(path.to_path_buf()))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image file into `(height, width, channels, payload)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<Vec<u8>>)> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    let (channels, header) = match magic {
        IDX_IMAGES_MAGIC => (1, 16),
        IDX_RGB_MAGIC => (3, 20),
        found => {
            return Err(Error::BadMagic {
                expected: IDX_IMAGES_MAGIC,
                found,
            })
        }
    };
    let n = be_u32(&bytes, 4, path)? as usize;
    let h = be_u32(&bytes, 8, path)? as usize;
    let w = be_u32(&bytes, 12, path)? as usize;
    if channels == 3 && be_u32(&bytes, 16, path)? != 3 {
        return Err(Error::DimensionMismatch(
            "RGB IDX last dimension must be 3".into(),
        ));
    }
    let per = h * w * channels;
    let payload = &bytes[header.min(bytes.len())..];
    if payload.len() < n * per {
        return Err(Error::TruncatedFile(path.to_path_buf()));
    }
    if payload.len() > n * per {
        return Err(Error::DimensionMismatch(format!(
            "{} trailing bytes after {n} images",
            payload.len() - n * per
        )));
    }
    let images = if per == 0 {
        vec![Vec::new(); n]
    } else {
        payload.chunks_exact(per).map(<[u8]>::to_vec).collect()
    };
    Ok((h, w, channels, images))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(Error::TruncatedFile(path.to_path_buf()));
    }
    if payload.len() > n {
        return Err(Error::DimensionMismatch(format!(
            "{} trailing label bytes",
            payload.len() - n
        )));
    }
    Ok(payload.to_vec())
}

fn grid_from_bytes(h: usize, w: usize, c: usize, bytes: &[u8]) -> PixelGrid {
    let data = Array3::from_shape_fn((h, w, c), |(r, col, ch)| {
        bytes[(r * w + col) * c + ch] as f64 / 255.0
    });
    PixelGrid::new(data).expect("byte intensities lie in [0, 1]")
}

/// Reads an IDX image/label pair; intensities are `byte / 255`.
pub fn read_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let (h, w, c, raw) = read_idx_images(images)?;
    let labels_raw = read_idx_labels(labels)?;
    if raw.len() != labels_raw.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images but {} labels",
            raw.len(),
            labels_raw.len()
        )));
    }
    let classes = labels_raw
        .iter()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0)
        .max(2);
    let grids = raw.iter().map(|b| grid_from_bytes(h, w, c, b)).collect();
    LabeledDataset::new(
        grids,
        labels_raw.iter().map(|&l| l as usize).collect(),
        digit_names(classes),
        format!("idx:{}", images.display()),
    )
}

/// Nearest byte for an intensity in `[0, 1]`; inverse of `/ 255` on bytes.
pub fn intensity_to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn write_idx(ds: &LabeledDataset, images: &Path, labels: &Path) -> Result<()> {
    let (h, w, c) = ds
        .images
        .first()
        .map_or((0, 0, 1), |i| (i.height(), i.width(), i.channels()));
    let mut img_bytes = Vec::with_capacity(20 + ds.len() * h * w * c);
    img_bytes.extend_from_slice(
        &(if c == 3 {
            IDX_RGB_MAGIC
        } else {
            IDX_IMAGES_MAGIC
        })
        .to_be_bytes(),
    );
    for d in [ds.len(), h, w] {
        img_bytes.extend_from_slice(&(d as u32).to_be_bytes());
    }
    if c == 3 {
        img_bytes.extend_from_slice(&3u32.to_be_bytes());
    }
    for img in &ds.images {
        img_bytes.extend(img.data().iter().map(|&v| intensity_to_byte(v)));
    }
    let mut lbl_bytes = Vec::with_capacity(8 + ds.len());
    lbl_bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbl_bytes.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &l in &ds.labels {
        let b = u8::try_from(l)
            .map_err(|_| Error::InvalidConfig(format!("label {l} does not fit in a byte")))?;
        lbl_bytes.push(b);
    }
    std::fs::write(images, img_bytes).map_err(|e| Error::io(images, e))?;
    std::fs::write(labels, lbl_bytes).map_err(|e| Error::io(labels, e))
}

/// Ranges for random similarity transforms. Angles are uniform, scales are
/// uniform in log-scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub rotation: [f64; 2],
    pub scale: [f64; 2],
    pub seed: u64,
}

impl TransformSpec {
    pub fn identity(seed: u64) -> Self {
        Self {
            rotation: [0.0, 0.0],
            scale: [1.0, 1.0],
            seed,
        }
    }

    /// Full-turn rotations, no scaling.
    pub fn rotated(seed: u64) -> Self {
        Self {
            rotation: [0.0, std::f64::consts::TAU],
            scale: [1.0, 1.0],
            seed,
        }
    }

    /// Full-turn rotations and scales in `[0.5, 2]`.
    pub fn scaled_rotated(seed: u64) -> Self {
        Self {
            rotation: [0.0, std::f64::consts::TAU],
            scale: [0.5, 2.0],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [t0, t1] = self.rotation;
        let [s0, s1] = self.scale;
        if !(t0.is_finite() && t1.is_finite() && t0 <= t1) {
            return Err(Error::InvalidConfig(
                "rotation range must be finite and ordered".into(),
            ));
        }
        if !(s0 > 0.0 && s0 <= s1 && s1.is_finite()) {
            return Err(Error::InvalidConfig(
                "scale range must be positive and ordered".into(),
            ));
        }
        if s0 < 0.25 || s1 > 4.0 {
            return Err(Error::InvalidConfig(
                "scale range must lie within [0.25, 4]".into(),
            ));
        }
        Ok(())
    }

    /// The draw for image `index`, from its own generator stream.
    pub fn draw(&self, index: usize) -> Draw {
        let mut rng = Xorshift64Star::for_stream(self.seed, index as u64);
        let theta = rng.uniform(self.rotation[0], self.rotation[1]);
        let s = if self.scale[0] == self.scale[1] {
            self.scale[0]
        } else {
            rng.uniform(self.scale[0].ln(), self.scale[1].ln()).exp()
        };
        Draw { index, s, theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub index: usize,
    pub s: f64,
    pub theta: f64,
}

impl Draw {
    pub fn transform(&self) -> SimilarityTransform {
        SimilarityTransform::new(self.s, self.theta, [0.0, 0.0]).expect("draws have positive scale")
    }
}

pub fn write_draws_csv(draws: &[Draw], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "index,s,theta")?;
    for d in draws {
        writeln!(out, "{},{:?},{:?}", d.index, d.s, d.theta)?;
    }
    Ok(())
}

/// Resamples every image under its own random similarity about the center.
pub fn make_transformed(
    ds: &LabeledDataset,
    spec: &TransformSpec,
) -> Result<(LabeledDataset, Vec<Draw>)> {
    spec.validate()?;
    let draws: Vec<Draw> = (0..ds.len()).map(|i| spec.draw(i)).collect();
    let images = ds
        .images
        .par_iter()
        .zip(&draws)
        .map(|(img, d)| lifting::resample_transform(img, &d.transform()))
        .collect();
    let out = LabeledDataset {
        images,
        labels: ds.labels.clone(),
        class_names: ds.class_names.clone(),
        provenance: format!("{} | transformed seed={}", ds.provenance, spec.seed),
    };
    Ok((out, draws))
}

fn ppm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Decodes binary PGM (`P5`) or PPM (`P6`) with 8-bit samples.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<PixelGrid> {
    let unsupported = |reason: &str| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0;
    let channels = match ppm_token(bytes, &mut pos) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(unsupported("expected binary P5 or P6 header")),
    };
    let mut field = || -> Result<usize> {
        ppm_token(bytes, &mut pos)
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| unsupported("malformed header"))
    };
    let (w, h, maxval) = (field()?, field()?, field()?);
    if maxval == 0 || maxval > 255 {
        return Err(unsupported("only 8-bit samples are supported"));
    }
    if w == 0 || h == 0 {
        return Err(unsupported("empty raster"));
    }
    let body = &bytes[(pos + 1).min(bytes.len())..];
    let need = w * h * channels;
    if body.len() < need {
        return Err(Error::TruncatedFile(path.to_path_buf()));
    }
    let data = Array3::from_shape_fn((h, w, channels), |(r, c, ch)| {
        (body[(r * w + c) * channels + ch] as f64 / maxval as f64).min(1.0)
    });
    PixelGrid::new(data)
}

pub fn encode_pnm(img: &PixelGrid) -> Vec<u8> {
    let tag = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{tag}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| intensity_to_byte(v)));
    out
}

/// Loads a `path,label` manifest of PGM/PPM files relative to `root`,
/// resized to `size`. Labels must appear in `classes` when it is non-empty;
/// otherwise the sorted distinct labels become the classes.
pub fn read_image_folder(
    root: &Path,
    manifest: &Path,
    classes: &[String],
    size: (usize, usize),
) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut rows: Vec<(usize, PathBuf, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (i == 0 && line == "path,label") {
            continue;
        }
        let (p, l) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::UnsupportedFormat {
                path: manifest.to_path_buf(),
                reason: format!("row {i} lacks a label column"),
            })?;
        rows.push((i, root.join(p), l.to_string()));
    }
    let class_names: Vec<String> = if classes.is_empty() {
        let mut names: Vec<String> = rows.iter().map(|r| r.2.clone()).collect();
        names.sort();
        names.dedup();
        names
    } else {
        classes.to_vec()
    };
    let mut images = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (row, path, label) in &rows {
        let idx =
            class_names
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| Error::UnknownLabel {
                    label: label.clone(),
                    row: *row,
                })?;
        if !path.is_file() {
            return Err(Error::MissingFile {
                path: path.clone(),
                row: *row,
            });
        }
        let img = decode_pnm(&read_file(path)?, path)?;
        if let Some(first) = images.first().map(PixelGrid::channels) {
            if img.channels() != first {
                return Err(Error::UnsupportedFormat {
                    path: path.clone(),
                    reason: "mixed grayscale and color images".into(),
                });
            }
        }
        images.push(lifting::resize_bilinear(&img, size.0, size.1));
        labels.push(idx);
    }
    LabeledDataset::new(
        images,
        labels,
        class_names,
        format!("folder:{}", manifest.display()),
    )
}

pub struct Splits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

fn partition(n: usize, fractions: [f64; 3]) -> (usize, usize) {
    let train = ((fractions[0] * n as f64).round() as usize).min(n);
    let val = ((fractions[1] * n as f64).round() as usize).min(n - train);
    (train, val)
}

/// Seeded shuffle then contiguous train/val/test partition, optionally per
/// class.
pub fn split(
    ds: &LabeledDataset,
    fractions: [f64; 3],
    seed: u64,
    stratified: bool,
) -> Result<Splits> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidConfig(
            "split fractions must be in [0, 1] and sum to 1".into(),
        ));
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    let groups: Vec<Vec<usize>> = if stratified {
        (0..ds.num_classes())
            .map(|c| (0..ds.len()).filter(|&i| ds.labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..ds.len()).collect()]
    };
    for (g, mut members) in groups.into_iter().enumerate() {
        Xorshift64Star::for_stream(seed, g as u64).shuffle(&mut members);
        let (a, b) = partition(members.len(), fractions);
        parts[0].extend_from_slice(&members[..a]);
        parts[1].extend_from_slice(&members[a..a + b]);
        parts[2].extend_from_slice(&members[a + b..]);
    }
    let [train, val, test] = parts;
    Ok(Splits {
        train: ds.subset(&train),
        val: ds.subset(&val),
        test: ds.subset(&test),
    })
}

/// Seeded split into exact `[train, val, test]` sizes; points beyond their
/// sum are dropped. Stratified order deals classes round-robin after a
/// per-class shuffle, so every prefix stays balanced.
pub fn split_counts(
    ds: &LabeledDataset,
    counts: [usize; 3],
    seed: u64,
    stratified: bool,
) -> Result<Splits> {
    let total: usize = counts.iter().sum();
    if total > ds.len() {
        return Err(Error::InvalidConfig(format!(
            "split needs {total} items, dataset has {}",
            ds.len()
        )));
    }
    let order: Vec<usize> = if stratified {
        let mut classes: Vec<Vec<usize>> = (0..ds.num_classes())
            .map(|c| (0..ds.len()).filter(|&i| ds.labels[i] == c).collect())
            .collect();
        for (c, members) in classes.iter_mut().enumerate() {
            Xorshift64Star::for_stream(seed, c as u64).shuffle(members);
        }
        let longest = classes.iter().map(Vec::len).max().unwrap_or(0);
        (0..longest)
            .flat_map(|j| classes.iter().filter_map(move |m| m.get(j).copied()))
            .collect()
    } else {
        let mut all: Vec<usize> = (0..ds.len()).collect();
        Xorshift64Star::new(seed).shuffle(&mut all);
        all
    };
    let (a, b) = (counts[0], counts[0] + counts[1]);
    Ok(Splits {
        train: ds.subset(&order[..a]),
        val: ds.subset(&order[a..b]),
        test: ds.subset(&order[b..total]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dataset(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = Xorshift64Star::new(seed);
        let images = (0..n)
            .map(|_| PixelGrid::from_fn(5, 4, 1, |_| rng.below(256) as f64 / 255.0).unwrap())
            .collect();
        let labels = (0..n).map(|i| i % 3).collect();
        LabeledDataset::new(images, labels, digit_names(3), "test").unwrap()
    }

    #[test]
    fn hand_built_idx() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("i.idx");
        let lbl = dir.path().join("l.idx");
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2];
        bytes.extend([0, 85, 170, 255]);
        std::fs::write(&img, bytes).unwrap();
        std::fs::write(&lbl, [0, 0, 8, 1, 0, 0, 0, 1, 1]).unwrap();
        let ds = read_idx(&img, &lbl).unwrap();
        let v: Vec<f64> = ds.images[0].data().iter().copied().collect();
        assert_eq!(v, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(ds.labels, vec![1]);

        std::fs::write(&lbl, [0, 0, 8, 3, 0, 0, 0, 1, 1]).unwrap();
        assert!(matches!(read_idx(&img, &lbl), Err(Error::BadMagic { .. })));
        std::fs::write(&lbl, [0, 0, 8, 1, 0, 0, 0, 2, 1]).unwrap();
        assert!(matches!(read_idx(&img, &lbl), Err(Error::TruncatedFile(_))));
        std::fs::write(&lbl, [0, 0, 8, 1, 0, 0, 0, 2, 1, 1]).unwrap();
        assert!(matches!(
            read_idx(&img, &lbl),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn idx_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset(7, 3);
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        write_idx(&ds, &a, &b).unwrap();
        let back = read_idx(&a, &b).unwrap();
        assert_eq!(back.images, ds.images);
        let (a2, b2) = (dir.path().join("a2"), dir.path().join("b2"));
        write_idx(&back, &a2, &b2).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&a2).unwrap());
        assert_eq!(std::fs::read(&b).unwrap(), std::fs::read(&b2).unwrap());
    }

    #[test]
    fn rgb_idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = PixelGrid::from_fn(2, 3, 3, |(r, c, k)| {
            ((r * 9 + c * 3 + k) * 10) as f64 / 255.0
        })
        .unwrap();
        let ds = LabeledDataset::new(vec![img], vec![0], digit_names(2), "rgb").unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        write_idx(&ds, &a, &b).unwrap();
        assert_eq!(read_idx(&a, &b).unwrap().images, ds.images);
    }

    #[test]
    fn identity_spec_leaves_images() {
        let ds = dataset(4, 1);
        let (out, draws) = make_transformed(&ds, &TransformSpec::identity(5)).unwrap();
        assert_eq!(out.images, ds.images);
        assert!(draws.iter().all(|d| d.s == 1.0 && d.theta == 0.0));
    }

    #[test]
    fn half_turn_on_symmetric_image() {
        let img = PixelGrid::from_fn(6, 6, 1, |(r, c, _)| {
            let (r2, c2) = (r.min(5 - r), c.min(5 - c));
            (r2 * 3 + c2) as f64 / 10.0
        })
        .unwrap();
        let ds = LabeledDataset::new(vec![img.clone()], vec![0], digit_names(2), "s").unwrap();
        let spec = TransformSpec {
            rotation: [PI, PI],
            scale: [1.0, 1.0],
            seed: 0,
        };
        let (out, _) = make_transformed(&ds, &spec).unwrap();
        for (a, b) in out.images[0].data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn transforms_are_seeded_and_in_range() {
        let ds = dataset(10, 2);
        let spec = TransformSpec::scaled_rotated(9);
        let (a, da) = make_transformed(&ds, &spec).unwrap();
        let (b, db) = make_transformed(&ds, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(da, db);
        assert_eq!(a.labels, ds.labels);
        for d in &da {
            assert!((0.5..=2.0).contains(&d.s) && (0.0..2.0 * PI).contains(&d.theta));
        }
        assert!(a
            .images
            .iter()
            .all(|i| i.data().iter().all(|v| (0.0..=1.0).contains(v))));
        let mut buf = Vec::new();
        write_draws_csv(&da[..1], &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("index,s,theta\n0,"));
    }

    #[test]
    fn invalid_specs() {
        let mut s = TransformSpec::rotated(0);
        s.scale = [0.0, 1.0];
        assert!(s.validate().is_err());
        s.scale = [2.0, 1.0];
        assert!(s.validate().is_err());
        s.scale = [1.0, 1.0];
        s.rotation = [1.0, 0.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn image_folder() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.csv");
        std::fs::write(&manifest, "path,label\n").unwrap();
        let ds = read_image_folder(dir.path(), &manifest, &[], (4, 4)).unwrap();
        assert!(ds.is_empty());

        let solid = PixelGrid::from_fn(9, 7, 3, |(_, _, k)| [0.2, 0.6, 1.0][k]).unwrap();
        let solid =
            PixelGrid::new(solid.data().mapv(|v| intensity_to_byte(v) as f64 / 255.0)).unwrap();
        std::fs::write(dir.path().join("a.ppm"), encode_pnm(&solid)).unwrap();
        std::fs::write(&manifest, "path,label\na.ppm,cat\nb.ppm,dog\n").unwrap();
        match read_image_folder(dir.path(), &manifest, &[], (4, 4)) {
            Err(Error::MissingFile { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        std::fs::write(&manifest, "path,label\na.ppm,cat\n").unwrap();
        let ds = read_image_folder(dir.path(), &manifest, &[], (4, 4)).unwrap();
        assert_eq!((ds.images[0].height(), ds.images[0].width()), (4, 4));
        for r in 0..4 {
            for c in 0..4 {
                for k in 0..3 {
                    assert_eq!(ds.images[0].get(r, c, k), solid.get(0, 0, k));
                }
            }
        }
        let classes = vec!["dog".to_string()];
        assert!(matches!(
            read_image_folder(dir.path(), &manifest, &classes, (4, 4)),
            Err(Error::UnknownLabel { .. })
        ));
        std::fs::write(dir.path().join("a.ppm"), b"P3\n1 1\n255\n0 0 0\n").unwrap();
        assert!(matches!(
            read_image_folder(dir.path(), &manifest, &[], (4, 4)),
            Err(Error::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn pnm_comments_and_gray() {
        let bytes = b"P5\n# comment\n2 1\n255\n\x00\xff";
        let img = decode_pnm(bytes, Path::new("x.pgm")).unwrap();
        assert_eq!((img.get(0, 0, 0), img.get(0, 1, 0)), (0.0, 1.0));
    }

    #[test]
    fn splits() {
        let ds = dataset(30, 0);
        let s = split(&ds, [1.0, 0.0, 0.0], 4, false).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (30, 0, 0));
        let a = split(&ds, [0.5, 0.3, 0.2], 4, false).unwrap();
        let b = split(&ds, [0.5, 0.3, 0.2], 4, false).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (15, 9, 6));
        assert!(split(&ds, [0.5, 0.5, 0.5], 4, false).is_err());

        let images = vec![PixelGrid::zeros(1, 1, 1); 200];
        let labels = (0..200).map(|i| usize::from(i >= 100)).collect();
        let two = LabeledDataset::new(images, labels, digit_names(2), "two").unwrap();
        let s = split(&two, [0.5, 0.25, 0.25], 1, true).unwrap();
        assert_eq!(s.train.class_counts(), vec![50, 50]);
        assert_eq!(s.val.class_counts(), vec![25, 25]);
        assert_eq!(s.test.class_counts(), vec![25, 25]);

        let c = split_counts(&two, [40, 0, 20], 3, true).unwrap();
        assert_eq!(c.train.class_counts(), vec![20, 20]);
        assert_eq!(c.test.class_counts(), vec![10, 10]);
        assert!(split_counts(&two, [150, 0, 60], 3, true).is_err());
    }
}
