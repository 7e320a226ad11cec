//! Distance matrices, k-nearest neighborhoods and farthest point sampling.
//!
//! Every selection breaks ties toward the smallest index. Two distances are
//! considered tied when they differ by at most [`TIE_TOLERANCE`]; this keeps
//! selections on regular grids stable under the round-off introduced by
//! group actions.

use serde::{Deserialize, Serialize};

use crate::lie::{self, AlgebraVector, GroupElement};
use crate::lifting::LiftedSet;
use crate::{Error, Result};

pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `|| log(g1^-1 g2) ||`
    #[default]
    Exact,
    /// `|| v2 - v1 ||` with wrapped angle difference.
    AlgebraDiff,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Exact => "exact",
            Metric::AlgebraDiff => "algebra-diff",
        }
    }
}

/// Dense symmetric `n x n` distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    metric: Option<Metric>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `None` for matrices built from plain Euclidean positions.
    pub fn metric(&self) -> Option<Metric> {
        self.metric
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    fn from_pairs(
        n: usize,
        metric: Option<Metric>,
        mut f: impl FnMut(usize, usize) -> Result<f64>,
    ) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j)?;
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Ok(Self { n, data, metric })
    }

    /// From an explicit row-major matrix; used for tests and external data.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for {n}x{n}",
                data.len()
            )));
        }
        Ok(Self {
            n,
            data,
            metric: None,
        })
    }
}

pub fn distance_matrix(s: &LiftedSet, metric: Metric) -> Result<DistanceMatrix> {
    distance_matrix_of(s.points(), metric)
}

pub fn distance_matrix_of(points: &[AlgebraVector], metric: Metric) -> Result<DistanceMatrix> {
    match metric {
        Metric::Exact => {
            let elems: Vec<GroupElement> = points.iter().map(lie::exp_map).collect();
            let inverses: Vec<GroupElement> = elems.iter().map(lie::inverse).collect();
            DistanceMatrix::from_pairs(points.len(), Some(metric), |i, j| {
                Ok(lie::log_map(&lie::compose_unchecked(&inverses[i], &elems[j]))?.norm())
            })
        }
        Metric::AlgebraDiff => DistanceMatrix::from_pairs(points.len(), Some(metric), |i, j| {
            lie::distance_algebra_diff(&points[i], &points[j])
        }),
    }
}

/// Plain Euclidean distances between 2-D positions.
pub fn euclidean_matrix(positions: &[[f64; 2]]) -> DistanceMatrix {
    DistanceMatrix::from_pairs(positions.len(), None, |i, j| {
        let (a, b) = (positions[i], positions[j]);
        Ok((a[0] - b[0]).hypot(a[1] - b[1]))
    })
    .expect("infallible")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    pub query: usize,
    /// Nearest first, the query itself leading.
    pub indices: Vec<usize>,
}

impl Neighborhood {
    pub fn k(&self) -> usize {
        self.indices.len()
    }
}

/// Index of the smallest value among `candidates`, ties within tolerance
/// going to the smallest index.
fn argmin_tied(values: &[f64], taken: &[bool]) -> Option<usize> {
    let min = values
        .iter()
        .zip(taken)
        .filter(|(_, t)| !**t)
        .map(|(v, _)| *v)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return values.iter().zip(taken).position(|(_, t)| !*t);
    }
    (0..values.len()).find(|&i| !taken[i] && values[i] <= min + TIE_TOLERANCE)
}

fn argmax_tied(values: &[f64], taken: &[bool]) -> Option<usize> {
    let max = values
        .iter()
        .zip(taken)
        .filter(|(_, t)| !**t)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    (0..values.len()).find(|&i| !taken[i] && values[i] >= max - TIE_TOLERANCE)
}

/// The `k` nearest indices to `q`, starting with `q` itself.
pub fn knn(dm: &DistanceMatrix, q: usize, k: usize) -> Result<Neighborhood> {
    let n = dm.len();
    if q >= n {
        return Err(Error::IndexOutOfRange { index: q, len: n });
    }
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let row = dm.row(q);
    let mut taken = vec![false; n];
    taken[q] = true;
    let mut indices = Vec::with_capacity(k);
    indices.push(q);
    while indices.len() < k {
        let next = argmin_tied(row, &taken).expect("k <= n");
        taken[next] = true;
        indices.push(next);
    }
    Ok(Neighborhood { query: q, indices })
}

pub fn knn_all(dm: &DistanceMatrix, queries: &[usize], k: usize) -> Result<Vec<Neighborhood>> {
    queries.iter().map(|&q| knn(dm, q, k)).collect()
}

/// Farthest point sampling over a precomputed matrix; indices in selection
/// order.
pub fn fps_with_matrix(dm: &DistanceMatrix, p: usize, start: usize) -> Result<Vec<usize>> {
    run_fps(dm.len(), p, start, |j, out| out.copy_from_slice(dm.row(j)))
}

/// Farthest point sampling computing one distance row per selected point.
pub fn fps(s: &LiftedSet, p: usize, metric: Metric, start: usize) -> Result<Vec<usize>> {
    let points = s.points();
    let elems: Vec<GroupElement> = points.iter().map(lie::exp_map).collect();
    let mut err = None;
    let out = run_fps(points.len(), p, start, |j, row| {
        let inv = lie::inverse(&elems[j]);
        for (n, slot) in row.iter_mut().enumerate() {
            let d = match metric {
                Metric::Exact => {
                    lie::log_map(&lie::compose_unchecked(&inv, &elems[n])).map(|v| v.norm())
                }
                Metric::AlgebraDiff => lie::distance_algebra_diff(&points[j], &points[n]),
            };
            *slot = match d {
                Ok(d) => d,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            };
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn run_fps(
    n: usize,
    p: usize,
    start: usize,
    mut row_of: impl FnMut(usize, &mut [f64]),
) -> Result<Vec<usize>> {
    if start >= n {
        return Err(Error::IndexOutOfRange {
            index: start,
            len: n,
        });
    }
    if p == 0 || p > n {
        return Err(Error::TargetTooLarge { p, n });
    }
    let mut selected = vec![start];
    let mut taken = vec![false; n];
    taken[start] = true;
    // running minimum distance from each point to the selected set
    let mut nearest = vec![0.0; n];
    row_of(start, &mut nearest);
    let mut row = vec![0.0; n];
    while selected.len() < p {
        let next = argmax_tied(&nearest, &taken).expect("p <= n");
        taken[next] = true;
        selected.push(next);
        if selected.len() == p {
            break;
        }
        row_of(next, &mut row);
        for (d, &r) in nearest.iter_mut().zip(&row) {
            if r < *d {
                *d = r;
            }
        }
    }
    Ok(selected)
}

/// Keeps `ceil(n / 2)` points by FPS from index 0; survivors stay in their
/// original relative order.
pub fn downsample_indices(dm: &DistanceMatrix) -> Result<Vec<usize>> {
    let n = dm.len();
    let mut keep = fps_with_matrix(dm, n.div_ceil(2), 0)?;
    keep.sort_unstable();
    Ok(keep)
}

pub fn downsample(s: &LiftedSet, dm: &DistanceMatrix) -> Result<(LiftedSet, Vec<usize>)> {
    if dm.len() != s.len() {
        return Err(Error::ShapeMismatch(format!(
            "distance matrix for {} points, set has {}",
            dm.len(),
            s.len()
        )));
    }
    let keep = downsample_indices(dm)?;
    Ok((s.select(&keep), keep))
}
