//! Equivariance audit: metric left invariance, per-layer equivariance,
//! exact model invariance and image-level prediction consistency.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::TransformSpec;
use crate::lie::{self, AlgebraVector, GroupElement, GroupKind};
use crate::lifting::{self, LiftedSet, PixelGrid};
use crate::network::conv::KernelArgument;
use crate::network::train::PreparedSet;
use crate::network::{layer_forward, layers, Mode, Model};
use crate::rng::Xorshift64Star;
use crate::sampling::Metric;
use crate::Result;

pub const METRIC_TOLERANCE: f64 = 1e-9;
/// Relative tolerance for per-point layer features; the network runs in
/// double precision.
pub const LAYER_TOLERANCE: f64 = 1e-9;
pub const MODEL_TOLERANCE: f64 = 1e-4;
/// Sampled elements keep every rotation angle at least this far from pi.
pub const BRANCH_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckRole {
    /// Must pass.
    Required,
    /// Must fail; a pass means the harness cannot detect a broken model.
    NegativeControl,
    /// Reported only.
    Informational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivReport {
    pub check: String,
    pub kind: GroupKind,
    pub n: usize,
    pub max_dev: f64,
    pub mean_dev: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub role: CheckRole,
}

pub const REPORT_HEADER: &str = "check,kind,n,max_dev,mean_dev,tolerance,pass";

impl EquivReport {
    pub fn from_deviations(
        check: impl Into<String>,
        kind: GroupKind,
        devs: &[f64],
        tolerance: f64,
        role: CheckRole,
    ) -> Self {
        let max_dev = devs.iter().copied().fold(0.0, f64::max);
        let mean_dev = if devs.is_empty() {
            0.0
        } else {
            devs.iter().sum::<f64>() / devs.len() as f64
        };
        Self {
            check: check.into(),
            kind,
            n: devs.len(),
            max_dev,
            mean_dev,
            tolerance,
            pass: max_dev <= tolerance,
            role,
        }
    }

    /// Whether this row is consistent with a correct implementation.
    pub fn acceptable(&self) -> bool {
        match self.role {
            CheckRole::Required => self.pass,
            CheckRole::NegativeControl => !self.pass,
            CheckRole::Informational => true,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{}",
            self.check, self.kind, self.n, self.max_dev, self.mean_dev, self.tolerance, self.pass
        )
    }

    /// Inverse of [`EquivReport::csv_row`]; the role is not serialized.
    pub fn parse_row(line: &str, role: CheckRole) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return None;
        }
        Some(Self {
            check: f[0].to_string(),
            kind: f[1].parse().ok()?,
            n: f[2].parse().ok()?,
            max_dev: f[3].parse().ok()?,
            mean_dev: f[4].parse().ok()?,
            tolerance: f[5].parse().ok()?,
            pass: f[6].parse().ok()?,
            role,
        })
    }
}

pub fn write_report_csv(reports: &[EquivReport], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Algebra vector with `u, w ~ U(-0.5, 0.5)`, `theta ~ U(-2.5, 2.5)`,
/// `lambda ~ U(-0.5, 0.5)`.
pub fn random_algebra(kind: GroupKind, rng: &mut Xorshift64Star) -> AlgebraVector {
    let u = rng.uniform(-0.5, 0.5);
    let w = rng.uniform(-0.5, 0.5);
    let theta = rng.uniform(-2.5, 2.5);
    let lambda = rng.uniform(-0.5, 0.5);
    match kind {
        GroupKind::So2 => AlgebraVector::so2(theta),
        GroupKind::Se2 => AlgebraVector::se2(u, w, theta),
        GroupKind::Sim2 => AlgebraVector::sim2(u, w, theta, lambda),
    }
}

pub fn random_element(kind: GroupKind, rng: &mut Xorshift64Star) -> GroupElement {
    lie::exp_map(&random_algebra(kind, rng))
}

fn clear_of_branch(gs: &[&GroupElement]) -> bool {
    gs.iter()
        .all(|g| g.rotation_angle().abs() <= std::f64::consts::PI - BRANCH_MARGIN)
}

/// `|D(g3 g1, g3 g2) - D(g1, g2)|` for the chosen metric.
pub fn metric_deviation(
    g1: &GroupElement,
    g2: &GroupElement,
    g3: &GroupElement,
    metric: Metric,
) -> Result<f64> {
    let a = lie::compose(g3, g1)?;
    let b = lie::compose(g3, g2)?;
    let d = |x: &GroupElement, y: &GroupElement| -> Result<f64> {
        match metric {
            Metric::Exact => lie::distance(x, y),
            Metric::AlgebraDiff => lie::distance_algebra_diff(&lie::log_map(x)?, &lie::log_map(y)?),
        }
    };
    Ok((d(&a, &b)? - d(g1, g2)?).abs())
}

/// Random triples with every relevant product clear of the branch cut.
pub fn random_triple(kind: GroupKind, rng: &mut Xorshift64Star) -> Result<[GroupElement; 3]> {
    loop {
        let g = [
            random_element(kind, rng),
            random_element(kind, rng),
            random_element(kind, rng),
        ];
        let a = lie::compose(&g[2], &g[0])?;
        let b = lie::compose(&g[2], &g[1])?;
        let rel = lie::compose(&lie::inverse(&g[0]), &g[1])?;
        if clear_of_branch(&[&g[0], &g[1], &g[2], &a, &b, &rel]) {
            return Ok(g);
        }
    }
}

pub fn check_metric_invariance(
    kind: GroupKind,
    n: usize,
    seed: u64,
    metric: Metric,
) -> Result<EquivReport> {
    let mut rng = Xorshift64Star::new(seed);
    let mut devs = Vec::with_capacity(n);
    for _ in 0..n {
        let [g1, g2, g3] = random_triple(kind, &mut rng)?;
        devs.push(metric_deviation(&g1, &g2, &g3, metric)?);
    }
    let (name, role) = match metric {
        Metric::Exact => ("metric_invariance", CheckRole::Required),
        Metric::AlgebraDiff => ("metric_invariance_algebra_diff", CheckRole::NegativeControl),
    };
    Ok(EquivReport::from_deviations(
        name,
        kind,
        &devs,
        METRIC_TOLERANCE,
        role,
    ))
}

/// Random `a` whose left action keeps every point of `s` clear of the
/// branch cut.
pub fn random_action(s: &LiftedSet, rng: &mut Xorshift64Star) -> Result<(GroupElement, LiftedSet)> {
    loop {
        let a = random_element(s.kind(), rng);
        if let Ok(moved) = lifting::left_transform(&a, s) {
            if moved
                .points()
                .iter()
                .all(|p| p.theta().abs() <= std::f64::consts::PI - BRANCH_MARGIN)
            {
                return Ok((a, moved));
            }
        }
    }
}

fn relative_deviation(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Largest per-point relative feature deviation between module outputs on
/// `input` and on `a . input`.
pub fn layer_deviation(
    model: &Model,
    module: usize,
    input: &LiftedSet,
    moved: &LiftedSet,
    argument: KernelArgument,
) -> Result<f64> {
    let mut opts = model.config.plan_options(module);
    opts.argument = argument;
    let m = &model.params.modules[module];
    let base = layer_forward(input, m, &opts, Mode::Infer)?;
    let other = layer_forward(moved, m, &opts, Mode::Infer)?;
    if base.len() != other.len() {
        return Ok(f64::INFINITY);
    }
    Ok(base
        .features()
        .iter()
        .zip(other.features())
        .map(|(&x, &y)| relative_deviation(y, x))
        .fold(0.0, f64::max))
}

/// Group convolution module `module` on the inference-mode input that the
/// model feeds it for `set`, under `n` random left actions.
pub fn check_layer_equivariance(
    model: &Model,
    module: usize,
    set: &LiftedSet,
    n: usize,
    seed: u64,
    argument: KernelArgument,
) -> Result<EquivReport> {
    let input = model.trace(set)?.swap_remove(module);
    let base = input.clone();
    let mut rng = Xorshift64Star::new(seed);
    let mut devs = Vec::with_capacity(n);
    for _ in 0..n {
        let (_, moved) = random_action(&base, &mut rng)?;
        devs.push(layer_deviation(model, module, &base, &moved, argument)?);
    }
    let (name, role) = match argument {
        KernelArgument::Exact => (format!("layer_equivariance_m{module}"), CheckRole::Required),
        other => (
            format!("layer_equivariance_m{module}_{}", argument_name(other)),
            CheckRole::NegativeControl,
        ),
    };
    Ok(EquivReport::from_deviations(
        name,
        set.kind(),
        &devs,
        LAYER_TOLERANCE,
        role,
    ))
}

fn argument_name(a: KernelArgument) -> &'static str {
    match a {
        KernelArgument::Exact => "exact",
        KernelArgument::AlgebraDiff => "algebra_diff",
        KernelArgument::Reversed => "reversed",
        KernelArgument::Conjugated => "conjugated",
    }
}

/// Max absolute logit change under left actions on lifted inputs, cycling
/// through `sets`.
pub fn check_model_invariance(
    model: &Model,
    sets: &[LiftedSet],
    n: usize,
    seed: u64,
) -> Result<EquivReport> {
    let mut rng = Xorshift64Star::new(seed);
    let mut devs = Vec::with_capacity(n);
    let mut base_logits: Vec<Option<Vec<f64>>> = vec![None; sets.len()];
    for i in 0..n {
        if sets.is_empty() {
            break;
        }
        let idx = i % sets.len();
        let set = &sets[idx];
        if base_logits[idx].is_none() {
            base_logits[idx] = Some(model.forward_lifted(set, Mode::Infer)?);
        }
        let base = base_logits[idx].as_ref().unwrap();
        let (_, moved) = random_action(set, &mut rng)?;
        let logits = model.forward_lifted(&moved, Mode::Infer)?;
        devs.push(
            base.iter()
                .zip(&logits)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    let kind = sets.first().map_or(model.config.kind, LiftedSet::kind);
    Ok(EquivReport::from_deviations(
        "model_invariance_exact",
        kind,
        &devs,
        MODEL_TOLERANCE,
        CheckRole::Required,
    ))
}

/// Fraction of `(image, draw)` pairs whose predicted class survives pixel
/// resampling by a draw from `spec`. Draw `j` of image `i` uses stream
/// `i * draws + j`, so two models see identical transforms.
pub fn image_consistency(
    model: &Model,
    images: &[PixelGrid],
    draws: usize,
    spec: &TransformSpec,
) -> Result<f64> {
    spec.validate()?;
    if images.is_empty() || draws == 0 {
        return Ok(1.0);
    }
    let labels = vec![0; images.len()];
    let base = PreparedSet::new(model, images, &labels)?;
    let base_pred = predictions(model, &base)?;
    let mut agree = 0;
    for j in 0..draws {
        let moved: Vec<PixelGrid> = images
            .iter()
            .enumerate()
            .map(|(i, img)| lifting::resample_transform(img, &spec.draw(i * draws + j).transform()))
            .collect();
        let prepared = PreparedSet::new(model, &moved, &labels)?;
        let pred = predictions(model, &prepared)?;
        agree += pred.iter().zip(&base_pred).filter(|(a, b)| a == b).count();
    }
    Ok(agree as f64 / (images.len() * draws) as f64)
}

fn predictions(model: &Model, data: &PreparedSet) -> Result<Vec<usize>> {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in all.chunks(100) {
        let tape = model.forward_batch(&data.samples(chunk), Mode::Infer)?;
        out.extend(
            tape.logits
                .rows()
                .into_iter()
                .map(|r| layers::argmax(r.as_slice().unwrap())),
        );
    }
    Ok(out)
}

/// Informational report of the image tier; deviations are `1 - consistency`.
pub fn image_tier_report(check: &str, kind: GroupKind, consistency: f64, n: usize) -> EquivReport {
    EquivReport {
        check: check.to_string(),
        kind,
        n,
        max_dev: 1.0 - consistency,
        mean_dev: 1.0 - consistency,
        tolerance: 1.0,
        pass: true,
        role: CheckRole::Informational,
    }
}

/// Sample sizes of the full audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditOptions {
    pub metric_samples: usize,
    pub layer_transforms: usize,
    pub model_transforms: usize,
    pub image_draws: usize,
    pub image_count: usize,
    pub seed: u64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            metric_samples: 1000,
            layer_transforms: 10,
            model_transforms: 20,
            image_draws: 8,
            image_count: 50,
            seed: 0,
        }
    }
}

/// Every check for `model` on `images`.
pub fn audit(
    model: &Model,
    images: &[PixelGrid],
    spec: &TransformSpec,
    opts: &AuditOptions,
) -> Result<Vec<EquivReport>> {
    let kind = model.config.kind;
    let mut out = vec![
        check_metric_invariance(kind, opts.metric_samples, opts.seed, Metric::Exact)?,
        check_metric_invariance(kind, opts.metric_samples, opts.seed, Metric::AlgebraDiff)?,
    ];
    let sets: Vec<LiftedSet> = images
        .iter()
        .take(opts.image_count.max(1))
        .map(|img| model.lift(img))
        .collect::<Result<_>>()?;
    if let Some(first) = sets.first() {
        for m in 0..model.config.modules() {
            let seed = opts.seed.wrapping_add(1 + m as u64);
            out.push(check_layer_equivariance(
                model,
                m,
                first,
                opts.layer_transforms,
                seed,
                model.config.kernel_argument,
            )?);
            if model.config.kernel_argument == KernelArgument::Exact {
                out.push(check_layer_equivariance(
                    model,
                    m,
                    first,
                    opts.layer_transforms,
                    seed,
                    KernelArgument::Conjugated,
                )?);
            }
        }
        let mut exact = check_model_invariance(model, &sets, opts.model_transforms, opts.seed)?;
        if model.config.kernel_argument != KernelArgument::Exact {
            exact.role = CheckRole::Informational;
        }
        out.push(exact);
        let subset: Vec<PixelGrid> = images.iter().take(opts.image_count).cloned().collect();
        let c = image_consistency(model, &subset, opts.image_draws, spec)?;
        out.push(image_tier_report(
            "image_consistency",
            kind,
            c,
            subset.len() * opts.image_draws,
        ));
    }
    Ok(out)
}
