//! Lifting raster images into Lie-group point sets.
//!
//! Pixel `(r, c)` of an `H x W` image sits at the normalized coordinate
//!
//! ```text
//! x = (c - (W - 1) / 2) * 2 / max(H, W)
//! y = ((H - 1) / 2 - r) * 2 / max(H, W)
//! ```
//!
//! (centered, y up, longest side spanning `[-1, 1]`) and lifts to one coset
//! representative: the pure translation reaching it for SE(2)/SIM(2), or the
//! polar angle for SO(2).

use std::io::Write;

use ndarray::{Array2, Array3, ArrayView1};

use crate::lie::{self, AlgebraVector, GroupElement, GroupKind, SimilarityTransform};
use crate::{Error, Result};

/// An `H x W x C` image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    data: Array3<f64>,
}

impl PixelGrid {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::ShapeMismatch("image must be non-empty".into()));
        }
        if c != 1 && c != 3 {
            return Err(Error::ShapeMismatch(format!(
                "channels must be 1 or 3, got {c}"
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::ShapeMismatch(
                "intensities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { data })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl FnMut((usize, usize, usize)) -> f64,
    ) -> Result<Self> {
        Self::new(Array3::from_shape_fn((height, width, channels), f))
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            data: Array3::zeros((height, width, channels)),
        }
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[(r, c, ch)]
    }

    /// Normalized coordinate of pixel `(r, c)`.
    pub fn pixel_position(&self, r: usize, c: usize) -> [f64; 2] {
        pixel_position(self.height(), self.width(), r, c)
    }
}

pub fn pixel_position(height: usize, width: usize, r: usize, c: usize) -> [f64; 2] {
    let pitch = 2.0 / height.max(width) as f64;
    [
        (c as f64 - (width as f64 - 1.0) / 2.0) * pitch,
        ((height as f64 - 1.0) / 2.0 - r as f64) * pitch,
    ]
}

/// Fractional pixel indices `(r, c)` of a normalized coordinate.
fn pixel_index(height: usize, width: usize, p: [f64; 2]) -> (f64, f64) {
    let pitch = 2.0 / height.max(width) as f64;
    (
        (height as f64 - 1.0) / 2.0 - p[1] / pitch,
        p[0] / pitch + (width as f64 - 1.0) / 2.0,
    )
}

/// Image points in group space: algebra coordinates, features and the
/// normalized source-pixel positions (kept for pixel-space ablations).
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSet {
    kind: GroupKind,
    points: Vec<AlgebraVector>,
    features: Array2<f64>,
    positions: Vec<[f64; 2]>,
}

impl LiftedSet {
    pub fn new(
        kind: GroupKind,
        points: Vec<AlgebraVector>,
        features: Array2<f64>,
        positions: Vec<[f64; 2]>,
    ) -> Result<Self> {
        if points.len() != features.nrows() || points.len() != positions.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points, {} feature rows, {} positions",
                points.len(),
                features.nrows(),
                positions.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| p.kind() != kind) {
            return Err(Error::KindMismatch {
                left: kind,
                right: p.kind(),
            });
        }
        Ok(Self {
            kind,
            points,
            features,
            positions,
        })
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[AlgebraVector] {
        &self.points
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn channels(&self) -> usize {
        self.features.ncols()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AlgebraVector, ArrayView1<'_, f64>)> {
        self.points.iter().zip(self.features.rows())
    }

    /// Same geometry, new features.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        Self::new(
            self.kind,
            self.points.clone(),
            features,
            self.positions.clone(),
        )
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let features = Array2::from_shape_fn((indices.len(), self.channels()), |(i, c)| {
            self.features[(indices[i], c)]
        });
        Self {
            kind: self.kind,
            points: indices.iter().map(|&i| self.points[i]).collect(),
            features,
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
        }
    }

    /// CSV with header `u,w,theta,lambda,f0[,f1,f2]`, absent algebra columns
    /// omitted.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut header: Vec<String> = self
            .kind
            .coordinate_names()
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..self.channels()).map(|c| format!("f{c}")));
        writeln!(out, "{}", header.join(","))?;
        for (v, f) in self.iter() {
            let fields: Vec<String> = v
                .as_slice()
                .iter()
                .chain(f.iter())
                .map(|x| format!("{x:?}"))
                .collect();
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Lifts every pixel (row-major) to one group element, K = 1.
pub fn lift(img: &PixelGrid, kind: GroupKind) -> LiftedSet {
    let (h, w, ch) = img.data.dim();
    let mut points = Vec::with_capacity(h * w);
    let mut positions = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let p = img.pixel_position(r, c);
            positions.push(p);
            points.push(lift_position(kind, p));
        }
    }
    let features = img
        .data
        .to_shape((h * w, ch))
        .expect("contiguous image")
        .to_owned();
    LiftedSet {
        kind,
        points,
        features,
        positions,
    }
}

/// Canonical coset representative for one normalized position.
pub fn lift_position(kind: GroupKind, p: [f64; 2]) -> AlgebraVector {
    match kind {
        // exp(u, w, 0[, 0]) = I + hat, so the translation coordinates are the position
        GroupKind::Se2 => AlgebraVector::se2(p[0], p[1], 0.0),
        GroupKind::Sim2 => AlgebraVector::sim2(p[0], p[1], 0.0, 0.0),
        GroupKind::So2 => {
            let theta = if p[0] == 0.0 && p[1] == 0.0 {
                0.0
            } else {
                lie::canonical_angle(p[1].atan2(p[0]))
            };
            AlgebraVector::so2(theta)
        }
    }
}

/// Replaces each element `g_i` by `a g_i`; features and order are unchanged.
pub fn left_transform(a: &GroupElement, s: &LiftedSet) -> Result<LiftedSet> {
    if a.kind() != s.kind {
        return Err(Error::KindMismatch {
            left: a.kind(),
            right: s.kind,
        });
    }
    if *a == GroupElement::identity(s.kind) {
        return Ok(s.clone());
    }
    let points = s
        .points
        .iter()
        .map(|v| lie::log_map(&lie::compose_unchecked(a, &lie::exp_map(v))))
        .collect::<Result<Vec<_>>>()?;
    Ok(LiftedSet {
        kind: s.kind,
        points,
        features: s.features.clone(),
        positions: s.positions.clone(),
    })
}

/// Coordinates within this distance of an integer are snapped to it, so that
/// grid-aligned transforms sample exactly.
const SNAP: f64 = 1e-9;

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP {
        r
    } else {
        x
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinear sample at fractional pixel index `(r, c)`; taps outside the
/// image read as zero.
fn bilinear(data: &Array3<f64>, r: f64, c: f64, ch: usize) -> f64 {
    let (h, w, _) = data.dim();
    let (r, c) = (snap(r), snap(c));
    let r0 = r.floor();
    let c0 = c.floor();
    let (tr, tc) = (r - r0, c - c0);
    let tap = |ri: f64, ci: f64| -> f64 {
        if ri < 0.0 || ci < 0.0 || ri >= h as f64 || ci >= w as f64 {
            0.0
        } else {
            data[(ri as usize, ci as usize, ch)]
        }
    };
    let top = lerp(tap(r0, c0), tap(r0, c0 + 1.0), tc);
    let bottom = lerp(tap(r0 + 1.0, c0), tap(r0 + 1.0, c0 + 1.0), tc);
    lerp(top, bottom, tr)
}

/// `output(x) = input(A^-1 x)` about the image center, bilinear with zero
/// padding. Translation is in normalized units.
pub fn resample_transform(img: &PixelGrid, st: &SimilarityTransform) -> PixelGrid {
    if *st == SimilarityTransform::identity() {
        return img.clone();
    }
    let (h, w, ch) = img.data.dim();
    let inv = st.inverse();
    let mut out = Array3::zeros((h, w, ch));
    for r in 0..h {
        for c in 0..w {
            let src = inv.apply(pixel_position(h, w, r, c));
            let (sr, sc) = pixel_index(h, w, src);
            for k in 0..ch {
                out[(r, c, k)] = bilinear(&img.data, sr, sc, k).clamp(0.0, 1.0);
            }
        }
    }
    PixelGrid { data: out }
}

/// Bilinear resize sampling pixel centers; constant images stay exactly
/// constant.
pub fn resize_bilinear(img: &PixelGrid, height: usize, width: usize) -> PixelGrid {
    let (h, w, ch) = img.data.dim();
    if (h, w) == (height, width) {
        return img.clone();
    }
    let mut out = Array3::zeros((height, width, ch));
    let sy = h as f64 / height as f64;
    let sx = w as f64 / width as f64;
    for r in 0..height {
        let fr = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        for c in 0..width {
            let fc = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let (r0, c0) = (fr.floor() as usize, fc.floor() as usize);
            let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
            let (tr, tc) = (fr - r0 as f64, fc - c0 as f64);
            for k in 0..ch {
                let d = &img.data;
                let top = lerp(d[(r0, c0, k)], d[(r0, c1, k)], tc);
                let bottom = lerp(d[(r1, c0, k)], d[(r1, c1, k)], tc);
                out[(r, c, k)] = lerp(top, bottom, tr);
            }
        }
    }
    PixelGrid { data: out }
}
