//! SO(2), SE(2) and SIM(2) group and algebra arithmetic.
//!
//! Algebra coordinates are ordered `(u, w, theta, lambda)` for SIM(2),
//! `(u, w, theta)` for SE(2) and `(theta)` for SO(2). SIM(2) elements are
//! kept in exponential form
//!
//! ```text
//! [ R(theta)  B(theta, lambda) (u, w)^T ]
//! [ 0 0       exp(-lambda)              ]
//! ```
//!
//! which acts projectively on the plane: the bottom-right entry realizes
//! the isotropic scale `s = exp(lambda)`. [`SimilarityTransform`] bridges to
//! the conventional `[[sR, t], [0, 1]]` form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Below this `lambda^2 + theta^2` the coupled series is used for `C`, `D`.
const JOINT_SERIES_RADIUS_SQ: f64 = 1e-8;
/// Below this magnitude the single-variable factors switch to Taylor series.
const FACTOR_SERIES_RADIUS: f64 = 1e-3;
/// Rotation angles this close to `pi` have no unambiguous principal log.
pub const BRANCH_CUT_GUARD: f64 = 1e-6;
/// `|det B|` below this is treated as ill-conditioned.
const MIN_B_DETERMINANT: f64 = 1e-12;
/// Orthonormality tolerance for membership checks.
const GROUP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    #[serde(rename = "SO2")]
    So2,
    #[serde(rename = "SE2")]
    Se2,
    #[serde(rename = "SIM2")]
    Sim2,
}

impl GroupKind {
    pub const ALL: [GroupKind; 3] = [GroupKind::So2, GroupKind::Se2, GroupKind::Sim2];

    /// Length `l` of the algebra coordinate vector.
    pub const fn algebra_dim(self) -> usize {
        match self {
            GroupKind::So2 => 1,
            GroupKind::Se2 => 3,
            GroupKind::Sim2 => 4,
        }
    }

    /// Side length `d` of the matrix representation.
    pub const fn matrix_dim(self) -> usize {
        match self {
            GroupKind::So2 => 2,
            GroupKind::Se2 | GroupKind::Sim2 => 3,
        }
    }

    /// Position of `theta` inside the algebra vector.
    pub const fn theta_index(self) -> usize {
        match self {
            GroupKind::So2 => 0,
            GroupKind::Se2 | GroupKind::Sim2 => 2,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            GroupKind::So2 => "SO2",
            GroupKind::Se2 => "SE2",
            GroupKind::Sim2 => "SIM2",
        }
    }

    /// Column names of the algebra coordinates, in storage order.
    pub const fn coordinate_names(self) -> &'static [&'static str] {
        match self {
            GroupKind::So2 => &["theta"],
            GroupKind::Se2 => &["u", "w", "theta"],
            GroupKind::Sim2 => &["u", "w", "theta", "lambda"],
        }
    }
}

impl std::fmt::Display for GroupKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SO2" | "SO(2)" => Ok(GroupKind::So2),
            "SE2" | "SE(2)" => Ok(GroupKind::Se2),
            "SIM2" | "SIM(2)" => Ok(GroupKind::Sim2),
            _ => Err(Error::InvalidConfig(format!("unknown group kind {s:?}"))),
        }
    }
}

/// Lie-algebra coordinates of one group element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraVector {
    kind: GroupKind,
    coords: [f64; 4],
}

impl AlgebraVector {
    pub fn new(kind: GroupKind, coords: &[f64]) -> Result<Self> {
        if coords.len() != kind.algebra_dim() {
            return Err(Error::InvalidAlgebra(format!(
                "{kind} needs {} coordinates, got {}",
                kind.algebra_dim(),
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidAlgebra(format!(
                "non-finite coordinate {bad}"
            )));
        }
        let mut stored = [0.0; 4];
        stored[..coords.len()].copy_from_slice(coords);
        Ok(Self {
            kind,
            coords: stored,
        })
    }

    pub fn zero(kind: GroupKind) -> Self {
        Self {
            kind,
            coords: [0.0; 4],
        }
    }

    pub fn so2(theta: f64) -> Self {
        Self::unchecked(GroupKind::So2, [theta, 0.0, 0.0, 0.0])
    }

    pub fn se2(u: f64, w: f64, theta: f64) -> Self {
        Self::unchecked(GroupKind::Se2, [u, w, theta, 0.0])
    }

    pub fn sim2(u: f64, w: f64, theta: f64, lambda: f64) -> Self {
        Self::unchecked(GroupKind::Sim2, [u, w, theta, lambda])
    }

    pub(crate) fn unchecked(kind: GroupKind, coords: [f64; 4]) -> Self {
        Self { kind, coords }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.kind.algebra_dim()]
    }

    pub fn theta(&self) -> f64 {
        self.coords[self.kind.theta_index()]
    }

    /// Translation coordinates `(u, w)`; zero for SO(2).
    pub fn translation(&self) -> [f64; 2] {
        match self.kind {
            GroupKind::So2 => [0.0, 0.0],
            _ => [self.coords[0], self.coords[1]],
        }
    }

    /// Log-scale `lambda`; zero outside SIM(2).
    pub fn lambda(&self) -> f64 {
        match self.kind {
            GroupKind::Sim2 => self.coords[3],
            _ => 0.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut coords = self.coords;
        coords.iter_mut().for_each(|c| *c *= factor);
        Self::unchecked(self.kind, coords)
    }

    pub fn norm(&self) -> f64 {
        self.as_slice().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A group element stored as its matrix. SO(2) is embedded in the upper-left
/// 2x2 block of a 3x3 matrix whose remaining entries are those of the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement {
    kind: GroupKind,
    m: Matrix3<f64>,
}

impl GroupElement {
    pub fn identity(kind: GroupKind) -> Self {
        Self {
            kind,
            m: Matrix3::identity(),
        }
    }

    /// Validates a `d x d` matrix against the group's invariants.
    pub fn from_matrix(kind: GroupKind, matrix: &DMatrix<f64>) -> Result<Self> {
        let d = kind.matrix_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::NotInGroup {
                kind,
                reason: format!(
                    "expected {d}x{d}, got {}x{}",
                    matrix.nrows(),
                    matrix.ncols()
                ),
            });
        }
        let mut m = Matrix3::identity();
        for r in 0..d {
            for c in 0..d {
                m[(r, c)] = matrix[(r, c)];
            }
        }
        let g = Self { kind, m };
        g.validate()?;
        Ok(g)
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    /// The `d x d` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.kind.matrix_dim();
        DMatrix::from_fn(d, d, |r, c| self.m[(r, c)])
    }

    /// Rotation angle in `(-pi, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        canonical_angle(self.m[(1, 0)].atan2(self.m[(0, 0)]))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.m;
        let fail = |reason: String| Error::NotInGroup {
            kind: self.kind,
            reason,
        };
        if m.iter().any(|x| !x.is_finite()) {
            return Err(fail("non-finite entry".into()));
        }
        let r = m.fixed_view::<2, 2>(0, 0).into_owned();
        let gram = r.transpose() * r - Matrix2::identity();
        if gram.amax() > GROUP_TOLERANCE {
            return Err(fail(format!(
                "rotation block not orthonormal ({:e})",
                gram.amax()
            )));
        }
        if (r.determinant() - 1.0).abs() > GROUP_TOLERANCE {
            return Err(fail("rotation block has determinant != 1".into()));
        }
        match self.kind {
            GroupKind::So2 => {}
            GroupKind::Se2 => {
                if m[(2, 0)] != 0.0 || m[(2, 1)] != 0.0 || m[(2, 2)] != 1.0 {
                    return Err(fail("bottom row must be (0, 0, 1)".into()));
                }
            }
            GroupKind::Sim2 => {
                if m[(2, 0)] != 0.0 || m[(2, 1)] != 0.0 {
                    return Err(fail("bottom row must be (0, 0, m33)".into()));
                }
                if m[(2, 2)] <= 0.0 {
                    return Err(fail("m33 must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Constant basis matrices of one algebra.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub kind: GroupKind,
    pub elements: Vec<DMatrix<f64>>,
}

pub fn basis(kind: GroupKind) -> BasisSet {
    let d = kind.matrix_dim();
    let unit = |entries: &[(usize, usize, f64)]| {
        let mut e = DMatrix::zeros(d, d);
        for &(r, c, v) in entries {
            e[(r, c)] = v;
        }
        e
    };
    let rotation = unit(&[(0, 1, -1.0), (1, 0, 1.0)]);
    let elements = match kind {
        GroupKind::So2 => vec![rotation],
        GroupKind::Se2 => vec![unit(&[(0, 2, 1.0)]), unit(&[(1, 2, 1.0)]), rotation],
        GroupKind::Sim2 => vec![
            unit(&[(0, 2, 1.0)]),
            unit(&[(1, 2, 1.0)]),
            rotation,
            unit(&[(2, 2, -1.0)]),
        ],
    };
    BasisSet { kind, elements }
}

/// `sum_i v_i e_i`.
pub fn hat(v: &AlgebraVector) -> DMatrix<f64> {
    let b = basis(v.kind);
    b.elements.iter().zip(v.as_slice()).fold(
        DMatrix::zeros(v.kind.matrix_dim(), v.kind.matrix_dim()),
        |acc, (e, c)| acc + e * *c,
    )
}

/// Maps an angle onto `(-pi, pi]`.
pub fn canonical_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

fn sinc(theta: f64) -> f64 {
    if theta.abs() < FACTOR_SERIES_RADIUS {
        let t2 = theta * theta;
        1.0 - t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0))
    } else {
        theta.sin() / theta
    }
}

/// `(1 - cos theta) / theta^2`
fn versine_over_sq(theta: f64) -> f64 {
    if theta.abs() < FACTOR_SERIES_RADIUS {
        let t2 = theta * theta;
        0.5 - t2 / 24.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0))
    } else {
        let half = 0.5 * theta;
        let s = half.sin() / half;
        0.5 * s * s
    }
}

/// `(theta - sin theta) / theta^3`
fn sine_remainder_over_cube(theta: f64) -> f64 {
    if theta.abs() < 0.1 {
        let t2 = theta * theta;
        // 1/3! - t2/5! + t2^2/7! - ..., eight terms keep 1e-17 at |theta| = 0.1.
        let mut term = 1.0 / 6.0;
        let mut sum = term;
        for n in 1..8 {
            let k = (2 * n + 2) as f64 * (2 * n + 3) as f64;
            term *= -t2 / k;
            sum += term;
        }
        sum
    } else {
        (theta - theta.sin()) / (theta * theta * theta)
    }
}

/// `(1 - exp(-lambda)) / lambda`
fn scale_first(lambda: f64) -> f64 {
    if lambda.abs() < FACTOR_SERIES_RADIUS {
        let l = lambda;
        1.0 - l / 2.0 * (1.0 - l / 3.0 * (1.0 - l / 4.0 * (1.0 - l / 5.0 * (1.0 - l / 6.0))))
    } else {
        -(-lambda).exp_m1() / lambda
    }
}

/// `(exp(-lambda) - 1 + lambda) / lambda^2`
fn scale_second(lambda: f64) -> f64 {
    if lambda.abs() < 0.1 {
        // sum_{n>=0} (-lambda)^n / (n + 2)!
        let mut term = 0.5;
        let mut sum = term;
        for n in 1..14 {
            term *= -lambda / (n + 2) as f64;
            sum += term;
        }
        sum
    } else {
        ((-lambda).exp_m1() + lambda) / (lambda * lambda)
    }
}

/// The coefficients `(C, D)` of the SIM(2) left Jacobian block
/// `B = [[C, -theta D], [theta D, C]]`.
pub fn translation_coefficients(theta: f64, lambda: f64) -> (f64, f64) {
    let r2 = lambda * lambda + theta * theta;
    if r2 < JOINT_SERIES_RADIUS_SQ {
        return joint_series(theta, lambda);
    }
    let wl = lambda * lambda / r2;
    let wt = theta * theta / r2;
    let c = wl * scale_first(lambda) + wt * (sinc(theta) - lambda * versine_over_sq(theta));
    let d = wl * scale_second(lambda)
        + wt * (versine_over_sq(theta) - lambda * sine_remainder_over_cube(theta));
    (c, d)
}

/// Bivariate expansion of `C + i theta D = exp(-lambda) (exp(z) - 1) / z` with
/// `z = lambda + i theta`, valid for `|z| < 1e-4`.
fn joint_series(theta: f64, lambda: f64) -> (f64, f64) {
    // Re(z^n) and Im(z^n)/theta for n = 0..4
    let (l, t2) = (lambda, theta * theta);
    let re = [
        1.0,
        l,
        l * l - t2,
        l * l * l - 3.0 * l * t2,
        l.powi(4) - 6.0 * l * l * t2 + t2 * t2,
    ];
    let im_over_t = [
        0.0,
        1.0,
        2.0 * l,
        3.0 * l * l - t2,
        4.0 * l * l * l - 4.0 * l * t2,
    ];
    let inv_fact = [1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0];
    let decay = (-lambda).exp();
    let c: f64 = re.iter().zip(inv_fact).map(|(a, f)| a * f).sum();
    let d: f64 = im_over_t.iter().zip(inv_fact).map(|(a, f)| a * f).sum();
    (decay * c, decay * d)
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn jacobian_block(theta: f64, lambda: f64) -> Matrix2<f64> {
    let (c, d) = translation_coefficients(theta, lambda);
    Matrix2::new(c, -theta * d, theta * d, c)
}

pub fn exp_map(v: &AlgebraVector) -> GroupElement {
    let theta = v.theta();
    let r = rotation(theta);
    let mut m = Matrix3::identity();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&r);
    match v.kind {
        GroupKind::So2 => {}
        GroupKind::Se2 | GroupKind::Sim2 => {
            let lambda = v.lambda();
            let [u, w] = v.translation();
            let t = jacobian_block(theta, lambda) * Vector2::new(u, w);
            m[(0, 2)] = t[0];
            m[(1, 2)] = t[1];
            if v.kind == GroupKind::Sim2 {
                m[(2, 2)] = (-lambda).exp();
            }
        }
    }
    GroupElement { kind: v.kind, m }
}

pub fn log_map(g: &GroupElement) -> Result<AlgebraVector> {
    g.validate()?;
    let theta = g.rotation_angle();
    match g.kind {
        GroupKind::So2 => Ok(AlgebraVector::so2(theta)),
        GroupKind::Se2 | GroupKind::Sim2 => {
            if PI - theta.abs() < BRANCH_CUT_GUARD {
                return Err(Error::AngleAtBranchCut { theta });
            }
            let lambda = match g.kind {
                GroupKind::Sim2 => -g.m[(2, 2)].ln(),
                _ => 0.0,
            };
            let (c, d) = translation_coefficients(theta, lambda);
            let td = theta * d;
            let det = c * c + td * td;
            if det < MIN_B_DETERMINANT {
                return Err(Error::AngleAtBranchCut { theta });
            }
            let (tu, tw) = (g.m[(0, 2)], g.m[(1, 2)]);
            let u = (c * tu + td * tw) / det;
            let w = (-td * tu + c * tw) / det;
            Ok(match g.kind {
                GroupKind::Sim2 => AlgebraVector::sim2(u, w, theta, lambda),
                _ => AlgebraVector::se2(u, w, theta),
            })
        }
    }
}

pub fn compose(g1: &GroupElement, g2: &GroupElement) -> Result<GroupElement> {
    if g1.kind != g2.kind {
        return Err(Error::KindMismatch {
            left: g1.kind,
            right: g2.kind,
        });
    }
    Ok(compose_unchecked(g1, g2))
}

pub(crate) fn compose_unchecked(g1: &GroupElement, g2: &GroupElement) -> GroupElement {
    let mut m = g1.m * g2.m;
    // The bottom row of a product of these forms is exact; pin it so that
    // round-off never perturbs the structural zeros.
    m[(2, 0)] = 0.0;
    m[(2, 1)] = 0.0;
    if g1.kind == GroupKind::So2 {
        m[(0, 2)] = 0.0;
        m[(1, 2)] = 0.0;
        m[(2, 2)] = 1.0;
    }
    GroupElement { kind: g1.kind, m }
}

pub fn inverse(g: &GroupElement) -> GroupElement {
    let rt = g.m.fixed_view::<2, 2>(0, 0).transpose();
    let mut m = Matrix3::identity();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&rt);
    if g.kind != GroupKind::So2 {
        let c = g.m[(2, 2)];
        let t = Vector2::new(g.m[(0, 2)], g.m[(1, 2)]);
        let ti = -(rt * t) / c;
        m[(0, 2)] = ti[0];
        m[(1, 2)] = ti[1];
        m[(2, 2)] = 1.0 / c;
    }
    GroupElement { kind: g.kind, m }
}

/// `log(g1^-1 g2)`, the algebra coordinates of `g2` seen from `g1`.
pub fn relative_log(g1: &GroupElement, g2: &GroupElement) -> Result<AlgebraVector> {
    let rel = compose(&inverse(g1), g2)?;
    log_map(&rel)
}

/// Left-invariant distance `|| log(g1^-1 g2) ||_2` over algebra coordinates.
pub fn distance(g1: &GroupElement, g2: &GroupElement) -> Result<f64> {
    Ok(relative_log(g1, g2)?.norm())
}

/// Coordinate-difference distance with the angle difference wrapped into
/// `(-pi, pi]`. Agrees with [`distance`] when `v1` is the identity or both
/// elements lie in an abelian subgroup.
pub fn distance_algebra_diff(v1: &AlgebraVector, v2: &AlgebraVector) -> Result<f64> {
    if v1.kind != v2.kind {
        return Err(Error::KindMismatch {
            left: v1.kind,
            right: v2.kind,
        });
    }
    let ti = v1.kind.theta_index();
    let sq: f64 = v1
        .as_slice()
        .iter()
        .zip(v2.as_slice())
        .enumerate()
        .map(|(i, (a, b))| {
            let d = if i == ti {
                canonical_angle(b - a)
            } else {
                b - a
            };
            d * d
        })
        .sum();
    Ok(sq.sqrt())
}

/// Applies `g` to `p` in homogeneous coordinates and dehomogenizes.
pub fn act_on_point(g: &GroupElement, p: [f64; 2]) -> [f64; 2] {
    let m = &g.m;
    match g.kind {
        GroupKind::So2 => [
            m[(0, 0)] * p[0] + m[(0, 1)] * p[1],
            m[(1, 0)] * p[0] + m[(1, 1)] * p[1],
        ],
        _ => {
            let x = m[(0, 0)] * p[0] + m[(0, 1)] * p[1] + m[(0, 2)];
            let y = m[(1, 0)] * p[0] + m[(1, 1)] * p[1] + m[(1, 2)];
            let h = m[(2, 2)];
            [x / h, y / h]
        }
    }
}

/// Conventional similarity `x -> s R(theta) x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub theta: f64,
    pub translation: [f64; 2],
}

impl SimilarityTransform {
    pub fn new(scale: f64, theta: f64, translation: [f64; 2]) -> Result<Self> {
        if scale.is_nan() || scale <= 0.0 || !scale.is_finite() {
            return Err(Error::NonPositiveScale(scale));
        }
        Ok(Self {
            scale,
            theta,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            theta: 0.0,
            translation: [0.0, 0.0],
        }
    }

    /// `[[s R, t], [0, 1]]`
    pub fn matrix(&self) -> Matrix3<f64> {
        let r = rotation(self.theta) * self.scale;
        Matrix3::new(
            r[(0, 0)],
            r[(0, 1)],
            self.translation[0],
            r[(1, 0)],
            r[(1, 1)],
            self.translation[1],
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [
            self.scale * (c * p[0] - s * p[1]) + self.translation[0],
            self.scale * (s * p[0] + c * p[1]) + self.translation[1],
        ]
    }

    pub fn inverse(&self) -> Self {
        let inv_s = 1.0 / self.scale;
        let (s, c) = (-self.theta).sin_cos();
        let [tx, ty] = self.translation;
        Self {
            scale: inv_s,
            theta: -self.theta,
            translation: [-inv_s * (c * tx - s * ty), -inv_s * (s * tx + c * ty)],
        }
    }
}

pub fn to_similarity(g: &GroupElement) -> Result<SimilarityTransform> {
    if g.kind != GroupKind::Sim2 {
        return Err(Error::KindMismatch {
            left: g.kind,
            right: GroupKind::Sim2,
        });
    }
    let h = g.m[(2, 2)];
    if h.is_nan() || h <= 0.0 {
        return Err(Error::NonPositiveScale(1.0 / h));
    }
    SimilarityTransform::new(
        1.0 / h,
        g.rotation_angle(),
        [g.m[(0, 2)] / h, g.m[(1, 2)] / h],
    )
}

pub fn from_similarity(st: &SimilarityTransform) -> Result<GroupElement> {
    if st.scale.is_nan() || st.scale <= 0.0 {
        return Err(Error::NonPositiveScale(st.scale));
    }
    let h = 1.0 / st.scale;
    let r = rotation(st.theta);
    let mut m = Matrix3::identity();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&r);
    m[(0, 2)] = st.translation[0] * h;
    m[(1, 2)] = st.translation[1] * h;
    m[(2, 2)] = h;
    Ok(GroupElement {
        kind: GroupKind::Sim2,
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn dm(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c])
    }

    #[test]
    fn dimensions() {
        assert_eq!(GroupKind::So2.algebra_dim(), 1);
        assert_eq!(GroupKind::Se2.algebra_dim(), 3);
        assert_eq!(GroupKind::Sim2.algebra_dim(), 4);
        assert_eq!(GroupKind::So2.matrix_dim(), 2);
        assert_eq!(GroupKind::Sim2.matrix_dim(), 3);
    }

    #[test]
    fn algebra_vector_validation() {
        assert!(AlgebraVector::new(GroupKind::Se2, &[1.0, 2.0]).is_err());
        assert!(AlgebraVector::new(GroupKind::So2, &[f64::NAN]).is_err());
        assert!(AlgebraVector::new(GroupKind::Sim2, &[1.0, 2.0, 3.0, 4.0]).is_ok());
    }

    #[test]
    fn hat_examples() {
        let z = hat(&AlgebraVector::zero(GroupKind::Sim2));
        assert_eq!(z, DMatrix::zeros(3, 3));
        let h = hat(&AlgebraVector::sim2(1.0, 2.0, 3.0, 4.0));
        assert_eq!(
            h,
            dm(&[&[0.0, -3.0, 1.0], &[3.0, 0.0, 2.0], &[0.0, 0.0, -4.0]])
        );
        let h = hat(&AlgebraVector::so2(PI));
        assert_eq!(h, dm(&[&[0.0, -PI], &[PI, 0.0]]));
    }

    #[test]
    fn sim2_basis_matches_generators() {
        let b = basis(GroupKind::Sim2);
        assert_eq!(b.elements.len(), 4);
        assert_eq!(
            b.elements[3],
            dm(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, -1.0]])
        );
        assert_eq!(b.elements[0][(0, 2)], 1.0);
        assert_eq!(b.elements[1][(1, 2)], 1.0);
    }

    #[test]
    fn exp_examples() {
        assert_eq!(
            exp_map(&AlgebraVector::zero(GroupKind::Sim2)).matrix(),
            DMatrix::identity(3, 3)
        );
        let g = exp_map(&AlgebraVector::sim2(1.0, 2.0, 0.0, 0.0));
        assert_eq!(
            g.matrix(),
            dm(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, 2.0], &[0.0, 0.0, 1.0]])
        );
        let g = exp_map(&AlgebraVector::so2(FRAC_PI_2)).matrix();
        assert_abs_diff_eq!(g, dm(&[&[0.0, -1.0], &[1.0, 0.0]]), epsilon = 1e-15);
    }

    #[test]
    fn coefficient_limits() {
        let (c, d) = translation_coefficients(0.0, 0.0);
        assert_eq!((c, d), (1.0, 0.5));
        // pure scale: C = (1 - e^-l)/l, D = (e^-l - 1 + l)/l^2
        let l: f64 = 0.8;
        let (c, d) = translation_coefficients(0.0, l);
        assert_abs_diff_eq!(c, (1.0 - (-l).exp()) / l, epsilon = 1e-15);
        assert_abs_diff_eq!(d, ((-l).exp() - 1.0 + l) / (l * l), epsilon = 1e-15);
        // pure rotation: C = sin t / t, theta D = (1 - cos t)/t
        let t: f64 = 1.3;
        let (c, d) = translation_coefficients(t, 0.0);
        assert_abs_diff_eq!(c, t.sin() / t, epsilon = 1e-15);
        assert_abs_diff_eq!(t * d, (1.0 - t.cos()) / t, epsilon = 1e-15);
    }

    #[test]
    fn coefficients_continuous_across_guards() {
        // Compare both sides of each switch-over radius.
        for &(t, l) in &[
            (1e-4, 0.0),
            (0.0, 1e-4),
            (7e-5, 7e-5),
            (1e-3, 0.5),
            (0.5, 1e-3),
            (0.1, 2.0),
            (2.0, 0.1),
        ] {
            let (c0, d0) = translation_coefficients(t * (1.0 - 1e-13), l * (1.0 - 1e-13));
            let (c1, d1) = translation_coefficients(t * (1.0 + 1e-13), l * (1.0 + 1e-13));
            assert_abs_diff_eq!(c0, c1, epsilon = 1e-12);
            assert_abs_diff_eq!(d0, d1, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_examples() {
        for kind in GroupKind::ALL {
            let v = log_map(&GroupElement::identity(kind)).unwrap();
            assert_eq!(v, AlgebraVector::zero(kind));
        }
        let v = AlgebraVector::sim2(0.5, -0.2, 0.9, -0.4);
        let back = log_map(&exp_map(&v)).unwrap();
        assert!(back.max_abs_diff(&v) < 1e-9);
        let g = GroupElement::from_matrix(
            GroupKind::Sim2,
            &dm(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, 2.0], &[0.0, 0.0, 1.0]]),
        )
        .unwrap();
        assert_eq!(
            log_map(&g).unwrap(),
            AlgebraVector::sim2(1.0, 2.0, 0.0, 0.0)
        );
    }

    #[test]
    fn log_rejects_branch_cut() {
        let g = exp_map(&AlgebraVector::se2(0.1, 0.2, PI));
        assert!(matches!(log_map(&g), Err(Error::AngleAtBranchCut { .. })));
        let g = exp_map(&AlgebraVector::sim2(0.1, 0.2, PI - 1e-7, 0.3));
        assert!(matches!(log_map(&g), Err(Error::AngleAtBranchCut { .. })));
        // SO(2) has no translation to recover, so pi itself is fine.
        let v = log_map(&exp_map(&AlgebraVector::so2(PI))).unwrap();
        assert_abs_diff_eq!(v.theta(), PI, epsilon = 1e-12);
    }

    #[test]
    fn log_rejects_non_members() {
        let bad = dm(&[&[2.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert!(matches!(
            GroupElement::from_matrix(GroupKind::Se2, &bad),
            Err(Error::NotInGroup { .. })
        ));
        let bad = dm(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]);
        assert!(GroupElement::from_matrix(GroupKind::Se2, &bad).is_err());
        assert!(GroupElement::from_matrix(GroupKind::Sim2, &bad).is_ok());
        let neg = dm(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, -1.0]]);
        assert!(GroupElement::from_matrix(GroupKind::Sim2, &neg).is_err());
    }

    #[test]
    fn compose_examples() {
        let g = exp_map(&AlgebraVector::sim2(0.3, 0.1, 0.4, 0.2));
        let e = GroupElement::identity(GroupKind::Sim2);
        assert_eq!(compose(&g, &e).unwrap(), g);
        let gi = compose(&g, &inverse(&g)).unwrap();
        assert_abs_diff_eq!(gi.matrix(), DMatrix::identity(3, 3), epsilon = 1e-10);
        // isotropic scale subgroup is abelian: exponents add
        let a = exp_map(&AlgebraVector::sim2(0.0, 0.0, 0.0, 0.3));
        let b = exp_map(&AlgebraVector::sim2(0.0, 0.0, 0.0, -0.7));
        let ab = compose(&a, &b).unwrap();
        let sum = exp_map(&AlgebraVector::sim2(0.0, 0.0, 0.0, -0.4));
        assert_abs_diff_eq!(ab.matrix(), sum.matrix(), epsilon = 1e-15);
        let so2 = GroupElement::identity(GroupKind::So2);
        assert!(matches!(compose(&g, &so2), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn inverse_examples() {
        for kind in GroupKind::ALL {
            assert_eq!(
                inverse(&GroupElement::identity(kind)),
                GroupElement::identity(kind)
            );
        }
        let r = exp_map(&AlgebraVector::so2(0.7));
        assert_abs_diff_eq!(
            inverse(&r).matrix(),
            exp_map(&AlgebraVector::so2(-0.7)).matrix(),
            epsilon = 1e-15
        );
        let g = exp_map(&AlgebraVector::sim2(1.0, 1.0, 0.7, 0.3));
        let generic = g.matrix().try_inverse().unwrap();
        assert_abs_diff_eq!(inverse(&g).matrix(), generic, epsilon = 1e-12);
    }

    #[test]
    fn distance_examples() {
        let g = exp_map(&AlgebraVector::sim2(0.2, 0.1, 0.3, 0.4));
        assert_eq!(distance(&g, &g).unwrap(), 0.0);
        let e = GroupElement::identity(GroupKind::Sim2);
        let g1 = exp_map(&AlgebraVector::sim2(1.0, 0.0, 0.0, 0.0));
        assert_abs_diff_eq!(distance(&e, &g1).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn algebra_diff_examples() {
        let v = AlgebraVector::sim2(0.4, 0.1, 2.0, 0.3);
        assert_eq!(distance_algebra_diff(&v, &v).unwrap(), 0.0);
        let z = AlgebraVector::zero(GroupKind::Sim2);
        let p = AlgebraVector::sim2(3.0, 4.0, 0.0, 0.0);
        assert_eq!(distance_algebra_diff(&z, &p).unwrap(), 5.0);
        // from the identity both distances coincide
        let g2 = AlgebraVector::sim2(0.3, -0.8, 1.1, -0.2);
        let exact = distance(&GroupElement::identity(GroupKind::Sim2), &exp_map(&g2)).unwrap();
        assert_abs_diff_eq!(
            exact,
            distance_algebra_diff(&z, &g2).unwrap(),
            epsilon = 1e-12
        );
        // wrapped angle
        let a = AlgebraVector::so2(3.0);
        let b = AlgebraVector::so2(-3.0);
        assert_abs_diff_eq!(
            distance_algebra_diff(&a, &b).unwrap(),
            2.0 * PI - 6.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn action_examples() {
        let e = GroupElement::identity(GroupKind::Sim2);
        assert_eq!(act_on_point(&e, [0.3, 0.7]), [0.3, 0.7]);
        let q = exp_map(&AlgebraVector::se2(0.0, 0.0, FRAC_PI_2));
        let p = act_on_point(&q, [1.0, 0.0]);
        assert_abs_diff_eq!(p[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-15);
        let s = exp_map(&AlgebraVector::sim2(0.0, 0.0, 0.0, 2f64.ln()));
        let p = act_on_point(&s, [1.0, 1.0]);
        assert_abs_diff_eq!(p[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn similarity_examples() {
        let st = to_similarity(&GroupElement::identity(GroupKind::Sim2)).unwrap();
        assert_eq!(st, SimilarityTransform::identity());
        let g = exp_map(&AlgebraVector::sim2(0.0, 0.0, 0.0, 0.5));
        assert_abs_diff_eq!(
            to_similarity(&g).unwrap().scale,
            0.5f64.exp(),
            epsilon = 1e-15
        );
        assert!(matches!(
            SimilarityTransform::new(0.0, 0.0, [0.0, 0.0]),
            Err(Error::NonPositiveScale(_))
        ));
        assert!(to_similarity(&GroupElement::identity(GroupKind::Se2)).is_err());
    }

    #[test]
    fn similarity_inverse() {
        let st = SimilarityTransform::new(1.7, 0.4, [0.2, -0.3]).unwrap();
        let p = [0.9, -0.1];
        let q = st.inverse().apply(st.apply(p));
        assert_abs_diff_eq!(p[0], q[0], epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], q[1], epsilon = 1e-14);
    }

    #[test]
    fn canonical_angle_range() {
        assert_eq!(canonical_angle(-PI), PI);
        assert_eq!(canonical_angle(PI), PI);
        assert_abs_diff_eq!(canonical_angle(3.0 * PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(canonical_angle(-0.5), -0.5);
    }
}
