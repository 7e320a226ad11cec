//! The full classifier: lifting module, group convolution modules, global
//! average pooling and an affine classification layer.

pub mod checkpoint;
pub mod conv;
pub mod layers;
pub mod train;

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use self::conv::{Geometry, KernelArgument, KernelNet, KernelTape, LayerPlan, PlanOptions};
use self::layers::{BatchNorm, BatchNormCache, Linear, ParamRole, Visit, VisitFn, VisitMutFn};
use crate::lie::GroupKind;
use crate::lifting::{self, LiftedSet, PixelGrid};
use crate::rng::Xorshift64Star;
use crate::sampling::Metric;
use crate::{Error, Result};

pub use self::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalization layers.
    Train,
    /// Running statistics in normalization layers.
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: GroupKind,
    /// Output channels of each group convolution module.
    pub channels: Vec<usize>,
    pub neighbors: usize,
    /// One flag per module: halve the point count by farthest point sampling.
    pub downsample: Vec<bool>,
    pub kernel_hidden: Vec<usize>,
    pub classes: usize,
    pub lift_width: usize,
    pub input_channels: usize,
    pub metric: Metric,
    pub geometry: Geometry,
    pub kernel_argument: KernelArgument,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: GroupKind::Sim2,
            channels: vec![16, 16],
            neighbors: 9,
            downsample: vec![true, true],
            kernel_hidden: vec![32, 32],
            classes: 10,
            lift_width: 16,
            input_channels: 1,
            metric: Metric::Exact,
            geometry: Geometry::Lie,
            kernel_argument: KernelArgument::Exact,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.channels.len() != self.downsample.len() {
            return bad("channels and downsample must have one entry per module");
        }
        if self.classes < 2 {
            return bad("class count must be at least 2");
        }
        if self.neighbors == 0 {
            return bad("neighbors must be at least 1");
        }
        if self.lift_width == 0 || self.channels.contains(&0) || self.kernel_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        if self.input_channels != 1 && self.input_channels != 3 {
            return bad("input_channels must be 1 or 3");
        }
        Ok(())
    }

    pub fn modules(&self) -> usize {
        self.channels.len()
    }

    /// Input width of module `m`.
    pub fn module_input(&self, m: usize) -> usize {
        if m == 0 {
            self.lift_width
        } else {
            self.channels[m - 1]
        }
    }

    pub fn final_width(&self) -> usize {
        self.channels.last().copied().unwrap_or(self.lift_width)
    }

    pub fn plan_options(&self, module: usize) -> PlanOptions {
        PlanOptions {
            k: self.neighbors,
            downsample: self.downsample[module],
            metric: self.metric,
            geometry: self.geometry,
            argument: self.kernel_argument,
        }
    }

    /// Point counts entering the pooling layer for an `n`-point lift.
    pub fn pooled_points(&self, n: usize) -> usize {
        self.downsample.iter().fold(
            n,
            |acc, &d| if d && acc >= 2 { acc.div_ceil(2) } else { acc },
        )
    }
}

/// Lifting-layer post-processing: BN, ReLU, per-point linear, BN, ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftModule {
    pub bn_in: BatchNorm,
    pub linear: Linear,
    pub bn_out: BatchNorm,
}

/// Group convolution, BN, ReLU, per-point linear, BN, ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvModule {
    pub kernel: KernelNet,
    pub bn_conv: BatchNorm,
    pub linear: Linear,
    pub bn_linear: BatchNorm,
}

/// Every learnable array plus normalization running statistics. Gradients
/// use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub lift: LiftModule,
    pub modules: Vec<ConvModule>,
    pub classifier: Linear,
}

impl Parameters {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Xorshift64Star::new(seed);
        let lift = LiftModule {
            bn_in: BatchNorm::new(cfg.input_channels),
            linear: Linear::init(cfg.input_channels, cfg.lift_width, 1.0, &mut rng),
            bn_out: BatchNorm::new(cfg.lift_width),
        };
        let modules = (0..cfg.modules())
            .map(|m| {
                let (c_in, c_out) = (cfg.module_input(m), cfg.channels[m]);
                ConvModule {
                    kernel: KernelNet::init(
                        cfg.kind,
                        &cfg.kernel_hidden,
                        c_in,
                        c_out,
                        cfg.neighbors,
                        &mut rng,
                    ),
                    bn_conv: BatchNorm::new(c_out),
                    linear: Linear::init(c_out, c_out, 1.0, &mut rng),
                    bn_linear: BatchNorm::new(c_out),
                }
            })
            .collect();
        let classifier = Linear::init(cfg.final_width(), cfg.classes, 1.0, &mut rng);
        Ok(Self {
            lift,
            modules,
            classifier,
        })
    }

    /// All-zero arrays shaped for `cfg`; the gradient accumulator.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let zero_bn = |c: usize| {
            let mut bn = BatchNorm::new(c);
            bn.gamma.fill(0.0);
            bn.running_var.fill(0.0);
            bn
        };
        Self {
            lift: LiftModule {
                bn_in: zero_bn(cfg.input_channels),
                linear: Linear::zeros(cfg.input_channels, cfg.lift_width),
                bn_out: zero_bn(cfg.lift_width),
            },
            modules: (0..cfg.modules())
                .map(|m| {
                    let (c_in, c_out) = (cfg.module_input(m), cfg.channels[m]);
                    ConvModule {
                        kernel: KernelNet::zeros(cfg.kind, &cfg.kernel_hidden, c_in, c_out),
                        bn_conv: zero_bn(c_out),
                        linear: Linear::zeros(c_out, c_out),
                        bn_linear: zero_bn(c_out),
                    }
                })
                .collect(),
            classifier: Linear::zeros(cfg.final_width(), cfg.classes),
        }
    }

    /// `(path, shape)` of every array, in serialization order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>, ParamRole)> {
        let mut out = Vec::new();
        self.visit("", &mut |p, s, _, r| {
            out.push((p.to_string(), s.to_vec(), r))
        });
        out
    }

    pub fn learnable_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, d, r| {
            if r == ParamRole::Learnable {
                n += d.len();
            }
        });
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, _, d, _| ok &= d.iter().all(|v| v.is_finite()));
        ok
    }
}

impl Visit for Parameters {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>) {
        let p = |name: &str| {
            if prefix.is_empty() {
                name.to_string()
            } else {
                format!("{prefix}.{name}")
            }
        };
        self.lift.bn_in.visit(&p("lift.bn_in"), f);
        self.lift.linear.visit(&p("lift.linear"), f);
        self.lift.bn_out.visit(&p("lift.bn_out"), f);
        for (m, module) in self.modules.iter().enumerate() {
            module.kernel.visit(&p(&format!("modules.{m}.kernel")), f);
            module.bn_conv.visit(&p(&format!("modules.{m}.bn_conv")), f);
            module.linear.visit(&p(&format!("modules.{m}.linear")), f);
            module
                .bn_linear
                .visit(&p(&format!("modules.{m}.bn_linear")), f);
        }
        self.classifier.visit(&p("classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>) {
        let p = |name: &str| {
            if prefix.is_empty() {
                name.to_string()
            } else {
                format!("{prefix}.{name}")
            }
        };
        self.lift.bn_in.visit_mut(&p("lift.bn_in"), f);
        self.lift.linear.visit_mut(&p("lift.linear"), f);
        self.lift.bn_out.visit_mut(&p("lift.bn_out"), f);
        for (m, module) in self.modules.iter_mut().enumerate() {
            module
                .kernel
                .visit_mut(&p(&format!("modules.{m}.kernel")), f);
            module
                .bn_conv
                .visit_mut(&p(&format!("modules.{m}.bn_conv")), f);
            module
                .linear
                .visit_mut(&p(&format!("modules.{m}.linear")), f);
            module
                .bn_linear
                .visit_mut(&p(&format!("modules.{m}.bn_linear")), f);
        }
        self.classifier.visit_mut(&p("classifier"), f);
    }
}

/// Geometry of every module for one lifted point set. Depends only on the
/// algebra coordinates, so all images of one size share a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPlan {
    pub kind: GroupKind,
    pub n_points: usize,
    pub layers: Vec<LayerPlan>,
}

impl NetworkPlan {
    pub fn build(cfg: &ModelConfig, set: &LiftedSet) -> Result<Self> {
        if set.kind() != cfg.kind {
            return Err(Error::KindMismatch {
                left: cfg.kind,
                right: set.kind(),
            });
        }
        let mut points = set.points().to_vec();
        let mut positions = set.positions().to_vec();
        let mut layers = Vec::with_capacity(cfg.modules());
        for m in 0..cfg.modules() {
            let opts = cfg.plan_options(m);
            if opts.k > points.len() {
                return Err(Error::KTooLarge {
                    k: opts.k,
                    n: points.len(),
                });
            }
            let plan = LayerPlan::build(cfg.kind, &points, &positions, &opts)?;
            points = plan.out_points.clone();
            positions = plan.out_positions.clone();
            layers.push(plan);
        }
        Ok(Self {
            kind: cfg.kind,
            n_points: set.len(),
            layers,
        })
    }

    pub fn output_points(&self) -> usize {
        self.layers.last().map_or(self.n_points, |l| l.n_out())
    }
}

/// One network input: shared geometry plus the lifted features.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub plan: &'a NetworkPlan,
    pub features: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone)]
struct NormStage {
    out: Array2<f64>,
    cache: Option<BatchNormCache>,
}

fn norm_relu(bn: &BatchNorm, x: ArrayView2<'_, f64>, mode: Mode) -> Result<NormStage> {
    let (y, cache) = match mode {
        Mode::Train => {
            let (y, c) = bn.forward_train(x)?;
            (y, Some(c))
        }
        Mode::Infer => (bn.forward_infer(x), None),
    };
    Ok(NormStage {
        out: layers::relu(y),
        cache,
    })
}

fn norm_relu_backward(
    bn: &BatchNorm,
    stage: &NormStage,
    dy: Array2<f64>,
    grad: &mut BatchNorm,
) -> Array2<f64> {
    let d = layers::relu_backward(&stage.out, dy);
    let cache = stage
        .cache
        .as_ref()
        .expect("backward requires a train-mode pass");
    bn.backward(cache, d.view(), grad)
}

#[derive(Debug, Clone)]
struct LiftTape {
    first: NormStage,
    second: NormStage,
}

#[derive(Debug, Clone)]
struct ModuleTape {
    input: Array2<f64>,
    kernels: Vec<KernelTape>,
    conv: NormStage,
    linear: NormStage,
}

/// Intermediate values of a batch forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    images: usize,
    /// Index into the unique-plan list for each image.
    plan_of: Vec<usize>,
    lift: LiftTape,
    modules: Vec<ModuleTape>,
    pooled: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Distinct plans of a batch, by address.
fn unique_plans<'a>(samples: &[Sample<'a>]) -> (Vec<&'a NetworkPlan>, Vec<usize>) {
    let mut unique: Vec<&NetworkPlan> = Vec::new();
    let mut plan_of = Vec::with_capacity(samples.len());
    for s in samples {
        let idx = match unique.iter().position(|p| std::ptr::eq(*p, s.plan)) {
            Some(i) => i,
            None => {
                unique.push(s.plan);
                unique.len() - 1
            }
        };
        plan_of.push(idx);
    }
    (unique, plan_of)
}

fn rows(x: &Array2<f64>, image: usize, per_image: usize) -> ArrayView2<'_, f64> {
    x.slice(s![image * per_image..(image + 1) * per_image, ..])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

/// Loss, accuracy and gradients of one batch.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub correct: usize,
    pub grads: Parameters,
    pub tape: Tape,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = Parameters::init(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn lift(&self, img: &PixelGrid) -> Result<LiftedSet> {
        if img.channels() != self.config.input_channels {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} channels, image has {}",
                self.config.input_channels,
                img.channels()
            )));
        }
        Ok(lifting::lift(img, self.config.kind))
    }

    pub fn plan(&self, set: &LiftedSet) -> Result<NetworkPlan> {
        NetworkPlan::build(&self.config, set)
    }

    pub fn forward(&self, img: &PixelGrid, mode: Mode) -> Result<Vec<f64>> {
        self.forward_lifted(&self.lift(img)?, mode)
    }

    pub fn forward_lifted(&self, set: &LiftedSet, mode: Mode) -> Result<Vec<f64>> {
        let plan = self.plan(set)?;
        let sample = Sample {
            plan: &plan,
            features: set.features().view(),
        };
        let tape = self.forward_batch(&[sample], mode)?;
        Ok(tape.logits.row(0).to_vec())
    }

    /// Batch forward pass. Train mode normalizes with statistics over every
    /// point of every image in the batch.
    pub fn forward_batch(&self, samples: &[Sample<'_>], mode: Mode) -> Result<Tape> {
        let cfg = &self.config;
        let p = &self.params;
        let images = samples.len();
        if images == 0 {
            return Err(Error::ShapeMismatch("empty batch".into()));
        }
        let (unique, plan_of) = unique_plans(samples);
        let n0 = unique[0].n_points;
        for plan in &unique {
            if plan.n_points != n0
                || plan.layers.len() != cfg.modules()
                || plan
                    .layers
                    .iter()
                    .zip(&unique[0].layers)
                    .any(|(a, b)| a.n_out() != b.n_out())
            {
                return Err(Error::ShapeMismatch(
                    "batch plans disagree on point counts".into(),
                ));
            }
        }
        for s in samples {
            if s.features.nrows() != n0 || s.features.ncols() != cfg.input_channels {
                return Err(Error::ShapeMismatch(format!(
                    "features are {}x{}, expected {n0}x{}",
                    s.features.nrows(),
                    s.features.ncols(),
                    cfg.input_channels
                )));
            }
        }

        let mut input = Array2::zeros((images * n0, cfg.input_channels));
        for (b, s) in samples.iter().enumerate() {
            input
                .slice_mut(s![b * n0..(b + 1) * n0, ..])
                .assign(&s.features);
        }
        let first = norm_relu(&p.lift.bn_in, input.view(), mode)?;
        let z = p.lift.linear.forward(first.out.view());
        let second = norm_relu(&p.lift.bn_out, z.view(), mode)?;
        let mut x = second.out.clone();
        let lift = LiftTape { first, second };

        let mut n_in = n0;
        let mut modules = Vec::with_capacity(cfg.modules());
        for (m, module) in p.modules.iter().enumerate() {
            let c_out = cfg.channels[m];
            let kernels: Vec<KernelTape> = unique
                .iter()
                .map(|plan| module.kernel.forward(plan.layers[m].kernel_args.view()))
                .collect();
            let q = unique[0].layers[m].n_out();
            let mut conv = Array2::zeros((images * q, c_out));
            conv.as_slice_mut()
                .expect("standard layout")
                .par_chunks_mut(q * c_out)
                .enumerate()
                .for_each(|(b, out)| {
                    let u = plan_of[b];
                    unique[u].layers[m].aggregate(
                        rows(&x, b, n_in),
                        kernels[u].output.view(),
                        c_out,
                        out,
                    );
                });
            let conv_stage = norm_relu(&module.bn_conv, conv.view(), mode)?;
            let lin = module.linear.forward(conv_stage.out.view());
            let lin_stage = norm_relu(&module.bn_linear, lin.view(), mode)?;
            let next = lin_stage.out.clone();
            modules.push(ModuleTape {
                input: std::mem::replace(&mut x, next),
                kernels,
                conv: conv_stage,
                linear: lin_stage,
            });
            n_in = q;
        }

        let pooled = layers::global_avg_pool(x.view(), n_in);
        let logits = p.classifier.forward(pooled.view());
        Ok(Tape {
            images,
            plan_of,
            lift,
            modules,
            pooled,
            logits,
        })
    }

    /// Exact gradients of the mean cross-entropy over the batch. Geometry
    /// (plans, neighborhoods, sampling choices) is held constant.
    pub fn backward(&self, samples: &[Sample<'_>], labels: &[usize]) -> Result<BatchGradients> {
        if labels.len() != samples.len() {
            return Err(Error::ShapeMismatch("one label per sample required".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.config.classes) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.config.classes,
            });
        }
        let tape = self.forward_batch(samples, Mode::Train)?;
        let cfg = &self.config;
        let p = &self.params;
        let mut grads = Parameters::zeros(cfg);
        let images = tape.images;
        let (unique, _) = unique_plans(samples);

        let mut loss = 0.0;
        let mut correct = 0;
        let mut d_logits = Array2::zeros(tape.logits.raw_dim());
        for (b, &label) in labels.iter().enumerate() {
            let row = tape.logits.row(b).to_vec();
            loss += layers::cross_entropy(&row, label);
            if layers::argmax(&row) == label {
                correct += 1;
            }
            let g = layers::cross_entropy_grad(&row, label);
            for (d, gv) in d_logits.row_mut(b).iter_mut().zip(g) {
                *d = gv / images as f64;
            }
        }
        loss /= images as f64;

        let d_pooled =
            p.classifier
                .backward(tape.pooled.view(), d_logits.view(), &mut grads.classifier);
        let last_points = unique[0].output_points();
        let mut dx = layers::global_avg_pool_backward(d_pooled.view(), last_points);

        for m in (0..cfg.modules()).rev() {
            let module = &p.modules[m];
            let mt = &tape.modules[m];
            let gm = &mut grads.modules[m];
            let d_lin = norm_relu_backward(&module.bn_linear, &mt.linear, dx, &mut gm.bn_linear);
            let d_conv_act =
                module
                    .linear
                    .backward(mt.conv.out.view(), d_lin.view(), &mut gm.linear);
            let d_conv = norm_relu_backward(&module.bn_conv, &mt.conv, d_conv_act, &mut gm.bn_conv);

            let c_in = cfg.module_input(m);
            let c_out = cfg.channels[m];
            let n_in = if m == 0 {
                unique[0].n_points
            } else {
                unique[0].layers[m - 1].n_out()
            };
            let q = unique[0].layers[m].n_out();
            for (u, plan) in unique.iter().enumerate() {
                let members: Vec<usize> = (0..images).filter(|&b| tape.plan_of[b] == u).collect();
                let xs: Vec<ArrayView2<'_, f64>> =
                    members.iter().map(|&b| rows(&mt.input, b, n_in)).collect();
                let dys: Vec<ArrayView2<'_, f64>> =
                    members.iter().map(|&b| rows(&d_conv, b, q)).collect();
                let dk = plan.layers[m].aggregate_backward_kernels(&xs, &dys, c_in, c_out);
                module.kernel.backward(&mt.kernels[u], dk, &mut gm.kernel);
            }
            let mut d_input = Array2::zeros((images * n_in, c_in));
            d_input
                .as_slice_mut()
                .expect("standard layout")
                .par_chunks_mut(n_in * c_in)
                .enumerate()
                .for_each(|(b, chunk)| {
                    let u = tape.plan_of[b];
                    unique[u].layers[m].aggregate_backward_input(
                        rows(&d_conv, b, q),
                        mt.kernels[u].output.view(),
                        c_in,
                        chunk,
                    );
                });
            dx = d_input;
        }

        let d_z = norm_relu_backward(
            &p.lift.bn_out,
            &tape.lift.second,
            dx,
            &mut grads.lift.bn_out,
        );
        let d_first = p.lift.linear.backward(
            tape.lift.first.out.view(),
            d_z.view(),
            &mut grads.lift.linear,
        );
        norm_relu_backward(
            &p.lift.bn_in,
            &tape.lift.first,
            d_first,
            &mut grads.lift.bn_in,
        );

        Ok(BatchGradients {
            loss,
            correct,
            grads,
            tape,
        })
    }

    /// Folds the batch statistics of a train-mode tape into the running
    /// averages.
    pub fn update_running_stats(&mut self, tape: &Tape) {
        let p = &mut self.params;
        if let Some(c) = &tape.lift.first.cache {
            p.lift.bn_in.update_running(c);
        }
        if let Some(c) = &tape.lift.second.cache {
            p.lift.bn_out.update_running(c);
        }
        for (module, mt) in p.modules.iter_mut().zip(&tape.modules) {
            if let Some(c) = &mt.conv.cache {
                module.bn_conv.update_running(c);
            }
            if let Some(c) = &mt.linear.cache {
                module.bn_linear.update_running(c);
            }
        }
    }

    /// Inference-mode outputs of the lifting module and of every group
    /// convolution module, as point sets.
    pub fn trace(&self, set: &LiftedSet) -> Result<Vec<LiftedSet>> {
        let plan = self.plan(set)?;
        let sample = Sample {
            plan: &plan,
            features: set.features().view(),
        };
        let tape = self.forward_batch(&[sample], Mode::Infer)?;
        let mut out = Vec::with_capacity(self.config.modules() + 1);
        let lifted = set.with_features(tape.lift.second.out.clone())?;
        out.push(lifted);
        for (m, layer) in plan.layers.iter().enumerate() {
            let features = match tape.modules.get(m + 1) {
                Some(next) => next.input.clone(),
                None => tape.modules[m].linear.out.clone(),
            };
            out.push(LiftedSet::new(
                set.kind(),
                layer.out_points.clone(),
                features,
                layer.out_positions.clone(),
            )?);
        }
        Ok(out)
    }

    pub fn predict(&self, img: &PixelGrid) -> Result<usize> {
        Ok(layers::argmax(&self.forward(img, Mode::Infer)?))
    }
}

/// One group convolution module applied to a point set.
pub fn layer_forward(
    set: &LiftedSet,
    module: &ConvModule,
    opts: &PlanOptions,
    mode: Mode,
) -> Result<LiftedSet> {
    let plan = LayerPlan::build(set.kind(), set.points(), set.positions(), opts)?;
    let c_out = module.kernel.c_out;
    if set.channels() != module.kernel.c_in {
        return Err(Error::ShapeMismatch(format!(
            "set has {} channels, module expects {}",
            set.channels(),
            module.kernel.c_in
        )));
    }
    let kernels = module.kernel.forward(plan.kernel_args.view());
    let features = set.features().as_standard_layout().to_owned();
    let mut conv = Array2::zeros((plan.n_out(), c_out));
    plan.aggregate(
        features.view(),
        kernels.output.view(),
        c_out,
        conv.as_slice_mut().expect("standard layout"),
    );
    let a = norm_relu(&module.bn_conv, conv.view(), mode)?;
    let lin = module.linear.forward(a.out.view());
    let out = norm_relu(&module.bn_linear, lin.view(), mode)?;
    LiftedSet::new(set.kind(), plan.out_points, out.out, plan.out_positions)
}

/// Per-channel mean over each image's points of a stacked feature array.
pub fn pooled_means(x: &Array2<f64>, points: usize) -> Array2<f64> {
    layers::global_avg_pool(x.view(), points)
}

/// Mean of the batch rows, used in tests of the pooling contract.
pub fn mean_rows(x: &Array2<f64>) -> Vec<f64> {
    x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default()
}
