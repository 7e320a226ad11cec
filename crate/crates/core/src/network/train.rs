//! Mini-batch SGD training, evaluation and the metrics/checkpoint outputs of
//! a training run.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint;
use super::layers::{self, ParamRole, Visit};
use super::{Mode, Model, NetworkPlan, Parameters, Sample};
use crate::lifting::{LiftedSet, PixelGrid};
use crate::rng::Xorshift64Star;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Parameters are rounded to single precision after every update.
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub momentum: f64,
    pub precision: Precision,
    /// Write 0 in the `seconds` column so repeated runs give identical files.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 50,
            epochs: 100,
            seed: 0,
            momentum: 0.0,
            precision: Precision::F64,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `v <- momentum v + g; p <- p - lr v` on learnable arrays. Buffers are
/// left alone.
pub fn sgd_step(
    params: &mut Parameters,
    grads: &Parameters,
    velocity: &mut Parameters,
    tc: &TrainConfig,
) {
    let mut g = Vec::new();
    grads.visit("", &mut |_, _, d, role| {
        if role == ParamRole::Learnable {
            g.push(d.to_vec());
        }
    });
    let mut steps = Vec::with_capacity(g.len());
    let mut i = 0;
    velocity.visit_mut("", &mut |_, _, v, role| {
        if role == ParamRole::Learnable {
            for (vj, gj) in v.iter_mut().zip(&g[i]) {
                *vj = tc.momentum * *vj + gj;
            }
            steps.push(v.to_vec());
            i += 1;
        }
    });
    let mut i = 0;
    params.visit_mut("", &mut |_, _, p, role| {
        if role == ParamRole::Learnable {
            for (pj, sj) in p.iter_mut().zip(&steps[i]) {
                *pj -= tc.learning_rate * sj;
                if tc.precision == Precision::F32 {
                    *pj = *pj as f32 as f64;
                }
            }
            i += 1;
        }
    });
}

/// Lifted images with shared geometry: all images of one size use one plan.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub sets: Vec<LiftedSet>,
    pub labels: Vec<usize>,
    plans: Vec<Arc<NetworkPlan>>,
    plan_of: Vec<usize>,
}

impl PreparedSet {
    pub fn new(model: &Model, images: &[PixelGrid], labels: &[usize]) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::ShapeMismatch("one label per image required".into()));
        }
        let mut by_size: HashMap<(usize, usize), usize> = HashMap::new();
        let mut plans = Vec::new();
        let mut plan_of = Vec::with_capacity(images.len());
        let mut sets = Vec::with_capacity(images.len());
        for img in images {
            let set = model.lift(img)?;
            let key = (img.height(), img.width());
            let idx = match by_size.get(&key) {
                Some(&i) => i,
                None => {
                    plans.push(Arc::new(model.plan(&set)?));
                    by_size.insert(key, plans.len() - 1);
                    plans.len() - 1
                }
            };
            plan_of.push(idx);
            sets.push(set);
        }
        Ok(Self {
            sets,
            labels: labels.to_vec(),
            plans,
            plan_of,
        })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn samples(&self, indices: &[usize]) -> Vec<Sample<'_>> {
        indices
            .iter()
            .map(|&i| Sample {
                plan: &self.plans[self.plan_of[i]],
                features: self.sets[i].features().view(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub loss: f64,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let total: usize = row.iter().sum();
                (total > 0).then(|| row[c] as f64 / total as f64)
            })
            .collect()
    }

    pub fn write_confusion_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let n = self.confusion.len();
        let header: Vec<String> = (0..n).map(|c| format!("pred_{c}")).collect();
        writeln!(out, "true,{}", header.join(","))?;
        for (c, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{c},{}", cells.join(","))?;
        }
        Ok(())
    }
}

const EVAL_CHUNK: usize = 100;

pub fn evaluate(model: &Model, data: &PreparedSet) -> Result<EvalReport> {
    let classes = model.config.classes;
    let mut confusion = vec![vec![0; classes]; classes];
    let mut loss = 0.0;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let tape = model.forward_batch(&data.samples(chunk), Mode::Infer)?;
        for (row, &i) in chunk.iter().enumerate() {
            let logits = tape.logits.row(row).to_vec();
            let label = data.labels[i];
            loss += layers::cross_entropy(&logits, label);
            confusion[label][layers::argmax(&logits)] += 1;
        }
    }
    let n = data.len().max(1) as f64;
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        loss: loss / n,
        accuracy: correct as f64 / n,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,seconds";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.epoch, self.train_loss, self.train_acc, self.val_loss, self.val_acc, self.seconds
        )
    }
}

pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    velocity: Parameters,
    step: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let velocity = Parameters::zeros(&model.config);
        Ok(Self {
            model,
            config,
            velocity,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One SGD step on the given batch; returns `(loss, correct)`.
    pub fn step(&mut self, data: &PreparedSet, batch: &[usize]) -> Result<(f64, usize)> {
        let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
        let out = self.model.backward(&data.samples(batch), &labels)?;
        self.step += 1;
        if !out.loss.is_finite() || !out.grads.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step });
        }
        self.model.update_running_stats(&out.tape);
        sgd_step(
            &mut self.model.params,
            &out.grads,
            &mut self.velocity,
            &self.config,
        );
        Ok((out.loss, out.correct))
    }

    /// One pass over `data` in an order shuffled from `(seed, epoch)`.
    /// Returns mean batch loss and running accuracy.
    pub fn train_epoch(&mut self, data: &PreparedSet, epoch: usize) -> Result<(f64, f64)> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        Xorshift64Star::for_stream(self.config.seed, epoch as u64).shuffle(&mut order);
        let mut loss = 0.0;
        let mut correct = 0;
        for batch in order.chunks(self.config.batch_size) {
            let (l, c) = self.step(data, batch)?;
            loss += l * batch.len() as f64;
            correct += c;
        }
        let n = data.len().max(1) as f64;
        Ok((loss / n, correct as f64 / n))
    }
}

/// Files produced by [`run`].
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub metrics: PathBuf,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub history: Vec<EpochMetrics>,
}

/// Full training run: writes `metrics.csv`, `final.ckpt` and `best.ckpt`
/// (by validation accuracy, earliest epoch on ties) under `out_dir`.
pub fn run(
    model: Model,
    tc: &TrainConfig,
    train: &PreparedSet,
    val: Option<&PreparedSet>,
    out_dir: &Path,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<RunOutputs> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics_path = out_dir.join("metrics.csv");
    let final_path = out_dir.join("final.ckpt");
    let best_path = out_dir.join("best.ckpt");
    let mut metrics =
        std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    writeln!(metrics, "{METRICS_HEADER}").map_err(|e| Error::io(&metrics_path, e))?;

    let mut trainer = Trainer::new(model, tc.clone())?;
    checkpoint::save_checkpoint(&best_path, &trainer.model.config, &trainer.model.params)?;
    let mut best = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(tc.epochs);
    for epoch in 1..=tc.epochs {
        let start = Instant::now();
        let (train_loss, train_acc) = trainer.train_epoch(train, epoch)?;
        let (val_loss, val_acc) = match val {
            Some(v) if !v.is_empty() => {
                let r = evaluate(&trainer.model, v)?;
                (r.loss, r.accuracy)
            }
            _ => (f64::NAN, f64::NAN),
        };
        let seconds = if tc.deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        };
        let row = EpochMetrics {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            seconds,
        };
        writeln!(metrics, "{}", row.csv_row()).map_err(|e| Error::io(&metrics_path, e))?;
        metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;
        let score = if val_acc.is_nan() { train_acc } else { val_acc };
        if score > best {
            best = score;
            checkpoint::save_checkpoint(&best_path, &trainer.model.config, &trainer.model.params)?;
        }
        on_epoch(&row);
        history.push(row);
    }
    checkpoint::save_checkpoint(&final_path, &trainer.model.config, &trainer.model.params)?;
    Ok(RunOutputs {
        metrics: metrics_path,
        final_checkpoint: final_path,
        best_checkpoint: best_path,
        history,
    })
}
