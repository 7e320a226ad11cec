#![allow(dead_code)]

use lgcn_core::network::layers::{ParamRole, Visit};
use lgcn_core::network::Sample;
use lgcn_core::rng::Xorshift64Star;
use lgcn_core::sampling::DistanceMatrix;
use lgcn_core::{AlgebraVector, GroupKind, LiftedSet, Model};
use nalgebra::DMatrix;
use ndarray::Array2;

pub const KINDS: [GroupKind; 3] = [GroupKind::So2, GroupKind::Se2, GroupKind::Sim2];

/// Generators written out independently of the library, in coordinate order.
pub fn generators(kind: GroupKind) -> Vec<DMatrix<f64>> {
    let m = |rows: &[[f64; 3]; 3]| DMatrix::from_fn(3, 3, |r, c| rows[r][c]);
    let e1 = m(&[[0., 0., 1.], [0., 0., 0.], [0., 0., 0.]]);
    let e2 = m(&[[0., 0., 0.], [0., 0., 1.], [0., 0., 0.]]);
    let e3 = m(&[[0., -1., 0.], [1., 0., 0.], [0., 0., 0.]]);
    let e4 = m(&[[0., 0., 0.], [0., 0., 0.], [0., 0., -1.]]);
    match kind {
        GroupKind::So2 => vec![DMatrix::from_row_slice(2, 2, &[0., -1., 1., 0.])],
        GroupKind::Se2 => vec![e1, e2, e3],
        GroupKind::Sim2 => vec![e1, e2, e3, e4],
    }
}

/// Truncated power series `sum_{n < terms} A^n / n!` of the hat matrix.
pub fn series_exp(v: &AlgebraVector, terms: usize) -> DMatrix<f64> {
    let gens = generators(v.kind());
    let d = gens[0].nrows();
    let a = gens
        .iter()
        .zip(v.as_slice())
        .fold(DMatrix::zeros(d, d), |acc, (g, c)| acc + g * *c);
    let mut term = DMatrix::identity(d, d);
    let mut sum = term.clone();
    for n in 1..terms {
        term = &term * &a / n as f64;
        sum += &term;
    }
    sum
}

/// Uniform direction, uniform radius in `[0, max_norm]`, `|theta| <= theta_max`.
pub fn random_vector(
    kind: GroupKind,
    max_norm: f64,
    theta_max: f64,
    rng: &mut Xorshift64Star,
) -> AlgebraVector {
    loop {
        let dir: Vec<f64> = (0..kind.algebra_dim())
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(1e-3..=1.0).contains(&len) {
            continue;
        }
        let r = rng.uniform(0.0, max_norm);
        let coords: Vec<f64> = dir.iter().map(|x| x / len * r).collect();
        let v = AlgebraVector::new(kind, &coords).unwrap();
        if v.theta().abs() <= theta_max {
            return v;
        }
    }
}

/// Random vector with `theta^2 + lambda^2 < bound`.
pub fn near_singular_vector(
    kind: GroupKind,
    bound: f64,
    rng: &mut Xorshift64Star,
) -> AlgebraVector {
    let r = bound.sqrt() * 0.99;
    let a = rng.uniform(0.0, std::f64::consts::TAU);
    let rho = r * rng.next_f64();
    let (theta, lambda) = (rho * a.cos(), rho * a.sin());
    match kind {
        GroupKind::So2 => AlgebraVector::so2(theta),
        GroupKind::Se2 => AlgebraVector::se2(rng.uniform(-1.4, 1.4), rng.uniform(-1.4, 1.4), theta),
        GroupKind::Sim2 => AlgebraVector::sim2(
            rng.uniform(-1.4, 1.4),
            rng.uniform(-1.4, 1.4),
            theta,
            lambda,
        ),
    }
}

pub fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// A point set of random group elements with random features.
pub fn random_set(
    kind: GroupKind,
    n: usize,
    channels: usize,
    rng: &mut Xorshift64Star,
) -> LiftedSet {
    let points: Vec<AlgebraVector> = (0..n).map(|_| random_vector(kind, 1.5, 2.5, rng)).collect();
    let features = Array2::from_shape_simple_fn((n, channels), || rng.uniform(-1.0, 1.0));
    let positions = vec![[0.0, 0.0]; n];
    LiftedSet::new(kind, points, features, positions).unwrap()
}

/// Greedy max-min selection recomputed from scratch at every step.
pub fn brute_force_fps(dm: &DistanceMatrix, p: usize, start: usize) -> Vec<usize> {
    let n = dm.len();
    let mut chosen = vec![start];
    while chosen.len() < p.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n).filter(|c| !chosen.contains(c)) {
            let d = chosen
                .iter()
                .map(|&s| dm.get(s, c))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((c, d));
            }
        }
        chosen.push(best.unwrap().0);
    }
    chosen
}

/// Flattened learnable parameters of `model`.
pub fn learnable(model: &Model) -> Vec<f64> {
    let mut out = Vec::new();
    model.params.visit("", &mut |_, _, v, role| {
        if role == ParamRole::Learnable {
            out.extend_from_slice(v);
        }
    });
    out
}

/// Adds `U(-scale, scale)` noise to every learnable parameter.
pub fn jitter(model: &mut Model, scale: f64, rng: &mut Xorshift64Star) {
    model.params.visit_mut("", &mut |_, _, v, role| {
        if role == ParamRole::Learnable {
            v.iter_mut().for_each(|x| *x += rng.uniform(-scale, scale));
        }
    });
}

fn nudge(model: &mut Model, index: usize, delta: f64) {
    let mut i = 0;
    model.params.visit_mut("", &mut |_, _, v, role| {
        if role != ParamRole::Learnable {
            return;
        }
        if (i..i + v.len()).contains(&index) {
            v[index - i] += delta;
        }
        i += v.len();
    });
}

/// Worst relative error `|a - n| / max(|a|, |n|, floor)` between analytic
/// gradients and central differences over every learnable parameter.
pub fn gradient_check(
    model: &Model,
    samples: &[Sample<'_>],
    labels: &[usize],
    step: f64,
    floor: f64,
) -> (f64, usize) {
    let analytic = {
        let out = model.backward(samples, labels).unwrap();
        let mut m = model.clone();
        m.params = out.grads;
        learnable(&m)
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        nudge(&mut probe, i, step);
        let plus = probe.backward(samples, labels).unwrap().loss;
        nudge(&mut probe, i, -2.0 * step);
        let minus = probe.backward(samples, labels).unwrap().loss;
        nudge(&mut probe, i, step);
        let numeric = (plus - minus) / (2.0 * step);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    (worst, analytic.len())
}
