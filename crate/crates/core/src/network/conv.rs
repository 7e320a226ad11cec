//! Group convolution with kernels parameterized over Lie-algebra
//! coordinates.
//!
//! For a query `q` with neighborhood `N(q)`:
//!
//! ```text
//! out(q) = 1/|N(q)| * sum_{g in N(q)} f(g)^T K(log(g^-1 q))
//! ```
//!
//! where `K` is a small MLP emitting a `C_in x C_out` matrix. The kernel
//! argument is invariant under left multiplication of both `g` and `q`,
//! which makes the layer equivariant.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{relu, relu_backward, Linear, Visit, VisitFn, VisitMutFn};
use crate::lie::{self, AlgebraVector, GroupElement, GroupKind};
use crate::lifting::LiftedSet;
use crate::rng::Xorshift64Star;
use crate::sampling::{self, Metric, Neighborhood};
use crate::{Error, Result};

/// What the kernel network sees for a (neighbor `g`, query `q`) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelArgument {
    /// `log(g^-1 q)`
    #[default]
    Exact,
    /// `v_q - v_g` with wrapped angle; cheap, not invariant.
    AlgebraDiff,
    /// `log(q^-1 g)`; the inverse of the exact argument, still invariant.
    Reversed,
    /// `log(g q^-1)`; conjugated by left actions, so not invariant.
    Conjugated,
}

impl KernelArgument {
    pub fn compute(self, g: &AlgebraVector, q: &AlgebraVector) -> Result<AlgebraVector> {
        let (ge, qe) = (lie::exp_map(g), lie::exp_map(q));
        match self {
            KernelArgument::Exact => lie::log_map(&lie::compose_unchecked(&lie::inverse(&ge), &qe)),
            KernelArgument::Reversed => {
                lie::log_map(&lie::compose_unchecked(&lie::inverse(&qe), &ge))
            }
            KernelArgument::Conjugated => {
                lie::log_map(&lie::compose_unchecked(&ge, &lie::inverse(&qe)))
            }
            KernelArgument::AlgebraDiff => {
                let ti = g.kind().theta_index();
                let mut coords = [0.0; 4];
                for (i, c) in coords.iter_mut().enumerate().take(g.kind().algebra_dim()) {
                    let d = q.as_slice()[i] - g.as_slice()[i];
                    *c = if i == ti { lie::canonical_angle(d) } else { d };
                }
                Ok(AlgebraVector::unchecked(g.kind(), coords))
            }
        }
    }
}

/// Fully connected kernel network `algebra -> C_in x C_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelNet {
    pub layers: Vec<Linear>,
    pub c_in: usize,
    pub c_out: usize,
}

/// Hidden activations of one kernel forward pass.
#[derive(Debug, Clone)]
pub struct KernelTape {
    /// Input followed by every hidden post-ReLU activation.
    activations: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl KernelNet {
    /// Uniform `+-1/sqrt(fan_in)` weights, zero biases, last layer scaled by
    /// `1/k`.
    pub fn init(
        kind: GroupKind,
        hidden: &[usize],
        c_in: usize,
        c_out: usize,
        k: usize,
        rng: &mut Xorshift64Star,
    ) -> Self {
        let mut dims = vec![kind.algebra_dim()];
        dims.extend_from_slice(hidden);
        dims.push(c_in * c_out);
        let last = dims.len() - 2;
        let layers = (0..dims.len() - 1)
            .map(|i| {
                let scale = if i == last { 1.0 / k as f64 } else { 1.0 };
                Linear::init(dims[i], dims[i + 1], scale, rng)
            })
            .collect();
        Self {
            layers,
            c_in,
            c_out,
        }
    }

    pub fn zeros(kind: GroupKind, hidden: &[usize], c_in: usize, c_out: usize) -> Self {
        let mut dims = vec![kind.algebra_dim()];
        dims.extend_from_slice(hidden);
        dims.push(c_in * c_out);
        Self {
            layers: dims.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
            c_in,
            c_out,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    /// Row `r` of the output is the row-major `C_in x C_out` kernel for input
    /// row `r`.
    pub fn forward(&self, inputs: ArrayView2<'_, f64>) -> KernelTape {
        let mut activations = vec![inputs.to_owned()];
        let last = self.layers.len() - 1;
        let mut x = inputs.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let y = layer.forward(x.view());
            if i == last {
                return KernelTape {
                    activations,
                    output: y,
                };
            }
            x = relu(y);
            activations.push(x.clone());
        }
        unreachable!("kernel net has at least one layer")
    }

    pub fn backward(&self, tape: &KernelTape, d_output: Array2<f64>, grad: &mut KernelNet) {
        let mut dy = d_output;
        for i in (0..self.layers.len()).rev() {
            let x = &tape.activations[i];
            let dx = self.layers[i].backward(x.view(), dy.view(), &mut grad.layers[i]);
            if i > 0 {
                dy = relu_backward(&tape.activations[i], dx);
            } else {
                break;
            }
        }
    }
}

impl Visit for KernelNet {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&format!("{prefix}.layers.{i}"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&format!("{prefix}.layers.{i}"), f);
        }
    }
}

/// Kernel matrix `C_in x C_out` for one algebra argument.
pub fn kernel_eval(kn: &KernelNet, dv: &AlgebraVector) -> Result<Array2<f64>> {
    if dv.as_slice().len() != kn.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {} inputs, got {}",
            kn.input_dim(),
            dv.as_slice().len()
        )));
    }
    let input = Array2::from_shape_vec((1, kn.input_dim()), dv.as_slice().to_vec()).expect("shape");
    let out = kn.forward(input.view()).output;
    Ok(out
        .into_shape_with_order((kn.c_in, kn.c_out))
        .expect("c_in * c_out outputs"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConvLayerConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub downsample: bool,
}

impl GroupConvLayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 || self.k == 0 {
            return Err(Error::InvalidConfig("channels and k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Discretized convolution over neighborhoods of `s`; one output row per query.
pub fn group_conv(
    s: &LiftedSet,
    queries: &[usize],
    neighborhoods: &[Neighborhood],
    kn: &KernelNet,
    argument: KernelArgument,
) -> Result<Array2<f64>> {
    if queries.len() != neighborhoods.len() {
        return Err(Error::ShapeMismatch(
            "one neighborhood per query required".into(),
        ));
    }
    if s.channels() != kn.c_in {
        return Err(Error::ShapeMismatch(format!(
            "set has {} channels, kernel {}",
            s.channels(),
            kn.c_in
        )));
    }
    let mut out = Array2::zeros((queries.len(), kn.c_out));
    for (row, (&q, nb)) in queries.iter().zip(neighborhoods).enumerate() {
        let scale = 1.0 / nb.k() as f64;
        for &g in &nb.indices {
            let arg = argument.compute(&s.points()[g], &s.points()[q])?;
            let kmat = kernel_eval(kn, &arg)?;
            let contrib = s.features().row(g).dot(&kmat);
            out.row_mut(row).scaled_add(scale, &contrib);
        }
    }
    Ok(out)
}

/// How neighborhoods and kernel arguments are derived from a point set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    /// Group metric neighborhoods, Lie-algebra kernel arguments.
    #[default]
    Lie,
    /// Ablation: Euclidean neighborhoods of the source pixel positions and a
    /// kernel that receives no geometric input (a constant all-ones vector).
    PixelEuclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanOptions {
    pub k: usize,
    pub downsample: bool,
    pub metric: Metric,
    pub geometry: Geometry,
    pub argument: KernelArgument,
}

/// Precomputed geometry of one layer: which inputs feed which outputs and
/// the kernel argument of every (query, neighbor) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    pub n_in: usize,
    pub k: usize,
    pub queries: Vec<usize>,
    /// `queries.len() * k` input indices, query-major.
    pub neighbors: Vec<usize>,
    /// `queries.len() * k` rows of algebra coordinates.
    pub kernel_args: Array2<f64>,
    pub out_points: Vec<AlgebraVector>,
    pub out_positions: Vec<[f64; 2]>,
}

impl LayerPlan {
    pub fn n_out(&self) -> usize {
        self.queries.len()
    }

    pub fn build(
        kind: GroupKind,
        points: &[AlgebraVector],
        positions: &[[f64; 2]],
        opts: &PlanOptions,
    ) -> Result<Self> {
        let PlanOptions {
            k,
            downsample,
            metric,
            geometry,
            argument,
        } = *opts;
        let n = points.len();
        let dm = match geometry {
            Geometry::Lie => sampling::distance_matrix_of(points, metric)?,
            Geometry::PixelEuclidean => sampling::euclidean_matrix(positions),
        };
        let queries = if downsample && n >= 2 {
            sampling::downsample_indices(&dm)?
        } else {
            (0..n).collect()
        };
        let l = kind.algebra_dim();
        let mut neighbors = Vec::with_capacity(queries.len() * k);
        let mut kernel_args = Array2::zeros((queries.len() * k, l));
        let q_elems: Vec<GroupElement> =
            queries.iter().map(|&q| lie::exp_map(&points[q])).collect();
        for (qi, &q) in queries.iter().enumerate() {
            let nb = sampling::knn(&dm, q, k)?;
            for (j, &g) in nb.indices.iter().enumerate() {
                neighbors.push(g);
                if geometry == Geometry::PixelEuclidean {
                    kernel_args.row_mut(qi * k + j).fill(1.0);
                    continue;
                }
                let arg = if argument == KernelArgument::Exact {
                    let ge_inv = lie::inverse(&lie::exp_map(&points[g]));
                    lie::log_map(&lie::compose_unchecked(&ge_inv, &q_elems[qi]))?
                } else {
                    argument.compute(&points[g], &points[q])?
                };
                kernel_args
                    .row_mut(qi * k + j)
                    .assign(&ndarray::ArrayView1::from(arg.as_slice()));
            }
        }
        Ok(Self {
            n_in: n,
            k,
            out_points: queries.iter().map(|&q| points[q]).collect(),
            out_positions: queries.iter().map(|&q| positions[q]).collect(),
            queries,
            neighbors,
            kernel_args,
        })
    }

    /// Aggregates one image: `x` is `n_in x C_in`, `kernels` is
    /// `(Q k) x (C_in C_out)`, the result `Q x C_out`.
    pub fn aggregate(
        &self,
        x: ArrayView2<'_, f64>,
        kernels: ArrayView2<'_, f64>,
        c_out: usize,
        out: &mut [f64],
    ) {
        let c_in = x.ncols();
        let scale = 1.0 / self.k as f64;
        let xs = x.as_slice().expect("standard layout");
        let ks = kernels.as_slice().expect("standard layout");
        out.fill(0.0);
        for qi in 0..self.n_out() {
            let orow = &mut out[qi * c_out..(qi + 1) * c_out];
            for j in 0..self.k {
                let r = qi * self.k + j;
                let g = self.neighbors[r];
                let xrow = &xs[g * c_in..(g + 1) * c_in];
                let kmat = &ks[r * c_in * c_out..(r + 1) * c_in * c_out];
                for (ci, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let a = xv * scale;
                    let krow = &kmat[ci * c_out..(ci + 1) * c_out];
                    for (o, &kv) in orow.iter_mut().zip(krow) {
                        *o += a * kv;
                    }
                }
            }
        }
    }

    /// Gradient of one image's aggregation with respect to its input rows.
    pub fn aggregate_backward_input(
        &self,
        dy: ArrayView2<'_, f64>,
        kernels: ArrayView2<'_, f64>,
        c_in: usize,
        dx: &mut [f64],
    ) {
        let c_out = dy.ncols();
        let scale = 1.0 / self.k as f64;
        let dys = dy.as_slice().expect("standard layout");
        let ks = kernels.as_slice().expect("standard layout");
        dx.fill(0.0);
        for qi in 0..self.n_out() {
            let drow = &dys[qi * c_out..(qi + 1) * c_out];
            for j in 0..self.k {
                let r = qi * self.k + j;
                let g = self.neighbors[r];
                let kmat = &ks[r * c_in * c_out..(r + 1) * c_in * c_out];
                let dxrow = &mut dx[g * c_in..(g + 1) * c_in];
                for (ci, d) in dxrow.iter_mut().enumerate() {
                    let krow = &kmat[ci * c_out..(ci + 1) * c_out];
                    let s: f64 = krow.iter().zip(drow).map(|(k, d)| k * d).sum();
                    *d += scale * s;
                }
            }
        }
    }

    /// Kernel gradient summed over the images sharing this plan, in image
    /// order. `xs[b]` is `n_in x C_in`, `dys[b]` is `Q x C_out`.
    pub fn aggregate_backward_kernels(
        &self,
        xs: &[ArrayView2<'_, f64>],
        dys: &[ArrayView2<'_, f64>],
        c_in: usize,
        c_out: usize,
    ) -> Array2<f64> {
        let scale = 1.0 / self.k as f64;
        let block = self.k * c_in * c_out;
        let mut dk = vec![0.0; self.n_out() * block];
        dk.par_chunks_mut(block)
            .enumerate()
            .for_each(|(qi, chunk)| {
                for (x, dy) in xs.iter().zip(dys) {
                    let xs = x.as_slice().expect("standard layout");
                    let drow =
                        &dy.as_slice().expect("standard layout")[qi * c_out..(qi + 1) * c_out];
                    for j in 0..self.k {
                        let g = self.neighbors[qi * self.k + j];
                        let xrow = &xs[g * c_in..(g + 1) * c_in];
                        let kblk = &mut chunk[j * c_in * c_out..(j + 1) * c_in * c_out];
                        for (ci, &xv) in xrow.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            let a = xv * scale;
                            for (kv, &d) in kblk[ci * c_out..(ci + 1) * c_out].iter_mut().zip(drow)
                            {
                                *kv += a * d;
                            }
                        }
                    }
                }
            });
        Array2::from_shape_vec((self.n_out() * self.k, c_in * c_out), dk).expect("shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::{lift, PixelGrid};
    use crate::sampling::{distance_matrix, knn_all};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn zero_net_gives_zero_kernel() {
        let kn = KernelNet::zeros(GroupKind::Sim2, &[8, 8], 2, 3);
        let k = kernel_eval(&kn, &AlgebraVector::sim2(0.4, -1.0, 2.0, 0.1)).unwrap();
        assert_eq!(k, Array2::<f64>::zeros((2, 3)));
    }

    #[test]
    fn affine_net_reshapes_row_major() {
        let mut kn = KernelNet::zeros(GroupKind::Se2, &[], 2, 2);
        kn.layers[0].weight = array![
            [1.0, 0.0, 0.0, 2.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0]
        ];
        kn.layers[0].bias = array![0.5, 0.0, 0.0, -1.0];
        let k = kernel_eval(&kn, &AlgebraVector::se2(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(k, array![[1.5, 2.0], [3.0, 1.0]]);
    }

    #[test]
    fn kernel_eval_rejects_wrong_dim() {
        let kn = KernelNet::zeros(GroupKind::Se2, &[4], 1, 1);
        assert!(kernel_eval(&kn, &AlgebraVector::so2(0.0)).is_err());
    }

    #[test]
    fn kernel_gradients_match_differences() {
        let mut rng = Xorshift64Star::new(11);
        let kn = KernelNet::init(GroupKind::Sim2, &[5, 4], 2, 3, 1, &mut rng);
        let inputs = array![[0.2, -0.4, 0.9, 0.1], [-0.3, 0.5, -1.2, 0.3]];
        let weights = Array2::from_shape_fn((2, 6), |(r, c)| ((r * 6 + c) as f64 * 0.37).sin());
        let loss = |net: &KernelNet| (&net.forward(inputs.view()).output * &weights).sum();
        let tape = kn.forward(inputs.view());
        let mut grad = KernelNet::zeros(GroupKind::Sim2, &[5, 4], 2, 3);
        kn.backward(&tape, weights.clone(), &mut grad);

        let mut analytic = Vec::new();
        grad.visit("k", &mut |_, _, d, _| analytic.extend_from_slice(d));
        let mut numeric = Vec::new();
        let probe = kn.clone();
        let mut count = 0;
        probe.visit("k", &mut |_, _, d, _| count += d.len());
        for idx in 0..count {
            let h = 1e-5;
            let eval = |delta: f64| {
                let mut net = kn.clone();
                let mut seen = 0;
                net.visit_mut("k", &mut |_, _, d, _| {
                    if idx >= seen && idx < seen + d.len() {
                        d[idx - seen] += delta;
                    }
                    seen += d.len();
                });
                loss(&net)
            };
            numeric.push((eval(h) - eval(-h)) / (2.0 * h));
        }
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-4, "analytic {a} numeric {n}");
        }
    }

    fn constant_one_kernel(kind: GroupKind) -> KernelNet {
        let mut kn = KernelNet::zeros(kind, &[], 1, 1);
        kn.layers[0].bias = array![1.0];
        kn
    }

    #[test]
    fn constant_kernel_averages_neighbors() {
        let img = PixelGrid::from_fn(4, 4, 1, |(r, c, _)| (r * 4 + c) as f64 / 15.0).unwrap();
        let s = lift(&img, GroupKind::Se2);
        let dm = distance_matrix(&s, Metric::Exact).unwrap();
        let queries: Vec<usize> = (0..s.len()).collect();
        let nbs = knn_all(&dm, &queries, 5).unwrap();
        let out = group_conv(
            &s,
            &queries,
            &nbs,
            &constant_one_kernel(GroupKind::Se2),
            KernelArgument::Exact,
        )
        .unwrap();
        for (q, nb) in nbs.iter().enumerate() {
            let mean = nb
                .indices
                .iter()
                .map(|&i| s.features()[(i, 0)])
                .sum::<f64>()
                / 5.0;
            assert_abs_diff_eq!(out[(q, 0)], mean, epsilon = 1e-15);
        }
    }

    #[test]
    fn self_only_neighborhood_uses_zero_argument() {
        let mut rng = Xorshift64Star::new(5);
        let img = PixelGrid::from_fn(3, 3, 1, |(r, c, _)| ((r + 2 * c) % 5) as f64 / 4.0).unwrap();
        let s = lift(&img, GroupKind::Sim2);
        let kn = KernelNet::init(GroupKind::Sim2, &[6], 1, 2, 1, &mut rng);
        let dm = distance_matrix(&s, Metric::Exact).unwrap();
        let queries: Vec<usize> = (0..s.len()).collect();
        let nbs = knn_all(&dm, &queries, 1).unwrap();
        let out = group_conv(&s, &queries, &nbs, &kn, KernelArgument::Exact).unwrap();
        let k0 = kernel_eval(&kn, &AlgebraVector::zero(GroupKind::Sim2)).unwrap();
        for q in 0..s.len() {
            let expected = s.features().row(q).dot(&k0);
            for c in 0..2 {
                assert_abs_diff_eq!(out[(q, c)], expected[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn plan_aggregation_matches_direct_conv() {
        let mut rng = Xorshift64Star::new(8);
        let img = PixelGrid::from_fn(5, 5, 3, |(r, c, k)| ((r * 3 + c * 5 + k) % 7) as f64 / 6.0)
            .unwrap();
        let s = lift(&img, GroupKind::Sim2);
        let kn = KernelNet::init(GroupKind::Sim2, &[8], 3, 2, 4, &mut rng);
        let opts = PlanOptions {
            k: 4,
            downsample: true,
            metric: Metric::Exact,
            geometry: Geometry::Lie,
            argument: KernelArgument::Exact,
        };
        let plan = LayerPlan::build(GroupKind::Sim2, s.points(), s.positions(), &opts).unwrap();
        let dm = distance_matrix(&s, Metric::Exact).unwrap();
        let nbs = knn_all(&dm, &plan.queries, 4).unwrap();
        let direct = group_conv(&s, &plan.queries, &nbs, &kn, KernelArgument::Exact).unwrap();
        let kernels = kn.forward(plan.kernel_args.view()).output;
        let mut out = vec![0.0; plan.n_out() * 2];
        plan.aggregate(s.features().view(), kernels.view(), 2, &mut out);
        for (a, b) in out.iter().zip(direct.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn reversed_argument_is_inverse() {
        let g = AlgebraVector::sim2(0.1, 0.3, 0.4, -0.2);
        let q = AlgebraVector::sim2(-0.5, 0.2, 1.1, 0.3);
        let a = KernelArgument::Exact.compute(&g, &q).unwrap();
        let b = KernelArgument::Reversed.compute(&g, &q).unwrap();
        let prod = lie::compose(&lie::exp_map(&a), &lie::exp_map(&b)).unwrap();
        assert_abs_diff_eq!(
            prod.matrix(),
            nalgebra::DMatrix::identity(3, 3),
            epsilon = 1e-12
        );
    }
}
