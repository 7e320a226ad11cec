use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lgcn_core::data::{self, LabeledDataset};
use lgcn_core::equiv::{self, CheckRole, EquivReport};
use lgcn_core::network::checkpoint;
use lgcn_core::network::train::{self, PreparedSet};
use lgcn_core::rng::Xorshift64Star;
use lgcn_core::{lifting, Error, Model, PixelGrid};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Source};
use crate::Failure;

pub struct Overrides {
    pub seed: Option<u64>,
    pub checkpoint: Option<PathBuf>,
    pub index: Option<usize>,
}

const SPLITS: [&str; 4] = ["all", "train", "val", "test"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime("Io".into(), format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassNames {
    classes: Vec<String>,
}

fn split_paths(dir: &Path, split: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{split}-images.idx")),
        dir.join(format!("{split}-labels.idx")),
    )
}

fn load_source(cfg: &RunConfig) -> Result<LabeledDataset, Failure> {
    Ok(match cfg.require_source()? {
        Source::Idx { images, labels } => data::read_idx(images, labels)?,
        Source::Folder {
            root,
            manifest,
            size,
            classes,
        } => data::read_image_folder(root, manifest, classes, (size[0], size[1]))?,
    })
}

fn load_prepared(cfg: &RunConfig, split: &str) -> Result<LabeledDataset, Failure> {
    let dir = cfg.prepared_dir();
    let (images, labels) = split_paths(&dir, split);
    if !images.exists() {
        return Err(Failure::Validation(
            "InvalidConfig".into(),
            format!(
                "prepared split missing: {} (run `prepare` first)",
                images.display()
            ),
        ));
    }
    let mut ds = data::read_idx(&images, &labels)?;
    let names = dir.join("classes.json");
    if let Ok(text) = fs::read_to_string(&names) {
        let parsed: ClassNames = serde_json::from_str(&text).map_err(|e| {
            Failure::Runtime(
                "CorruptPrepared".into(),
                format!("{}: {e}", names.display()),
            )
        })?;
        if parsed.classes.len() >= ds.num_classes() {
            ds.class_names = parsed.classes;
        }
    }
    Ok(ds)
}

fn model_classes_match(cfg: &RunConfig, ds: &LabeledDataset) -> Result<(), Failure> {
    if let Some(&l) = ds.labels.iter().find(|&&l| l >= cfg.model.classes) {
        return Err(Failure::Validation(
            "InvalidConfig".into(),
            format!(
                "label {l} does not fit model.classes = {}",
                cfg.model.classes
            ),
        ));
    }
    Ok(())
}

pub fn prepare(cfg: &RunConfig, o: &Overrides) -> Result<(), Failure> {
    let mut spec = cfg.transform.clone();
    if let Some(seed) = o.seed {
        spec.seed = seed;
    }
    let source = load_source(cfg)?;
    let counts = [
        cfg.data.train_count,
        cfg.data.val_count,
        cfg.data.test_count,
    ];
    if counts.iter().sum::<usize>() > source.len() {
        return Err(Failure::Validation(
            "InvalidConfig".into(),
            format!(
                "split sizes {counts:?} exceed the {} source images",
                source.len()
            ),
        ));
    }
    let (transformed, draws) = data::make_transformed(&source, &spec)?;
    let splits = data::split_counts(
        &transformed,
        counts,
        cfg.data.split_seed,
        cfg.data.stratified,
    )?;

    let dir = cfg.prepared_dir();
    create_dir(&dir)?;
    for (name, ds) in SPLITS
        .iter()
        .zip([&transformed, &splits.train, &splits.val, &splits.test])
    {
        let (images, labels) = split_paths(&dir, name);
        data::write_idx(ds, &images, &labels)?;
    }
    let mut buf = Vec::new();
    data::write_draws_csv(&draws, &mut buf).expect("in-memory write");
    write_file(&dir.join("draws.csv"), &buf)?;
    let names = serde_json::to_vec_pretty(&ClassNames {
        classes: source.class_names.clone(),
    })
    .expect("serializable");
    write_file(&dir.join("classes.json"), &names)?;
    println!(
        "prepared {} images (train {}, val {}, test {}) in {}",
        transformed.len(),
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        dir.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, o: &Overrides) -> Result<(), Failure> {
    let mut tc = cfg.train.clone();
    if let Some(seed) = o.seed {
        tc.seed = seed;
    }
    let train_ds = load_prepared(cfg, "train")?;
    let val_ds = load_prepared(cfg, "val")?;
    model_classes_match(cfg, &train_ds)?;
    if train_ds.is_empty() {
        return Err(Failure::Validation(
            "InvalidConfig".into(),
            "training split is empty".into(),
        ));
    }
    let model = Model::new(cfg.model.clone(), tc.seed)?;
    let train_set = PreparedSet::new(&model, &train_ds.images, &train_ds.labels)?;
    let val_set = PreparedSet::new(&model, &val_ds.images, &val_ds.labels)?;
    let val = (!val_set.is_empty()).then_some(&val_set);
    let out = train::run(model, &tc, &train_set, val, &cfg.out, |m| {
        println!("{}", m.csv_row())
    })?;
    println!(
        "wrote {} {} {}",
        out.metrics.display(),
        out.final_checkpoint.display(),
        out.best_checkpoint.display()
    );
    Ok(())
}

fn load_model(cfg: &RunConfig, path: &Path) -> Result<Model, Failure> {
    let mut model = Model::new(cfg.model.clone(), 0)?;
    checkpoint::load_into(&mut model, path)?;
    Ok(model)
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    checkpoint: String,
    n: usize,
    loss: f64,
    accuracy: f64,
    per_class: Vec<Option<f64>>,
}

pub fn eval(cfg: &RunConfig, o: &Overrides) -> Result<(), Failure> {
    let ckpt = o
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join("best.ckpt"));
    let test = load_prepared(cfg, "test")?;
    model_classes_match(cfg, &test)?;
    let model = load_model(cfg, &ckpt)?;
    let set = PreparedSet::new(&model, &test.images, &test.labels)?;
    let report = train::evaluate(&model, &set)?;
    create_dir(&cfg.out)?;
    let summary = EvalSummary {
        checkpoint: ckpt.display().to_string(),
        n: test.len(),
        loss: report.loss,
        accuracy: report.accuracy,
        per_class: report.per_class_accuracy(),
    };
    let json = serde_json::to_vec_pretty(&summary).expect("serializable");
    write_file(&cfg.out.join("eval.json"), &json)?;
    let mut buf = Vec::new();
    report
        .write_confusion_csv(&mut buf)
        .expect("in-memory write");
    write_file(&cfg.out.join("confusion.csv"), &buf)?;
    println!("top1={:.4} n={}", report.accuracy, test.len());
    for (c, acc) in summary.per_class.iter().enumerate() {
        match acc {
            Some(a) => println!("class {c}: {a:.4}"),
            None => println!("class {c}: n/a"),
        }
    }
    Ok(())
}

/// Audit images: the prepared test split, else the source, else seeded noise.
fn audit_images(cfg: &RunConfig, seed: u64) -> Result<Vec<PixelGrid>, Failure> {
    if split_paths(&cfg.prepared_dir(), "test").0.exists() {
        let ds = load_prepared(cfg, "test")?;
        if !ds.is_empty() {
            return Ok(ds.images);
        }
    }
    if cfg.data.source.is_some() {
        return Ok(load_source(cfg)?.images);
    }
    let mut rng = Xorshift64Star::new(seed);
    let count = cfg.check.audit.image_count.max(1);
    let channels = cfg.model.input_channels;
    Ok((0..count)
        .map(|_| PixelGrid::from_fn(28, 28, channels, |_| rng.next_f64()).expect("unit interval"))
        .collect())
}

pub fn check(cfg: &RunConfig, o: &Overrides) -> Result<(), Failure> {
    let mut opts = cfg.check.audit.clone();
    if let Some(seed) = o.seed {
        opts.seed = seed;
    }
    let model = match &o.checkpoint {
        Some(path) => load_model(cfg, path)?,
        None => Model::new(cfg.model.clone(), opts.seed)?,
    };
    let ablation = match &cfg.check.ablation_checkpoint {
        Some(path) => {
            let (ab_cfg, params) = checkpoint::load_checkpoint(path)?;
            Some(Model {
                config: ab_cfg,
                params,
            })
        }
        None => None,
    };
    let images = audit_images(cfg, opts.seed)?;
    let mut reports = equiv::audit(&model, &images, &cfg.transform, &opts)?;
    if let Some(ablation) = ablation {
        let subset: Vec<PixelGrid> = images.iter().take(opts.image_count).cloned().collect();
        let n = subset.len() * opts.image_draws;
        let ours = equiv::image_consistency(&model, &subset, opts.image_draws, &cfg.transform)?;
        let theirs =
            equiv::image_consistency(&ablation, &subset, opts.image_draws, &cfg.transform)?;
        reports.push(equiv::image_tier_report(
            "image_consistency_ablation",
            ablation.config.kind,
            theirs,
            n,
        ));
        // passes when the model is strictly more consistent than the ablation
        reports.push(EquivReport {
            check: "image_consistency_vs_ablation".into(),
            kind: model.config.kind,
            n,
            max_dev: theirs - ours,
            mean_dev: theirs - ours,
            tolerance: 0.0,
            pass: ours > theirs,
            role: CheckRole::Required,
        });
    }
    create_dir(&cfg.out)?;
    let path = cfg.out.join("check.csv");
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    equiv::write_report_csv(&reports, &mut w).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;
    let mut failed = Vec::new();
    for r in &reports {
        let verdict = match (r.role, r.acceptable()) {
            (CheckRole::Informational, _) => "info",
            (CheckRole::NegativeControl, true) => "expected-fail",
            (_, true) => "ok",
            (_, false) => "FAIL",
        };
        println!(
            "{:<40} {verdict:<13} max_dev={:e} n={}",
            r.check, r.max_dev, r.n
        );
        if !r.acceptable() {
            failed.push(r.check.clone());
        }
    }
    println!("report: {}", path.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::CheckFailed(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}

pub fn lift_dump(cfg: &RunConfig, o: &Overrides) -> Result<(), Failure> {
    let index = o
        .index
        .ok_or_else(|| Failure::Validation("InvalidConfig".into(), "--index is required".into()))?;
    let ds = if split_paths(&cfg.prepared_dir(), "all").0.exists() {
        load_prepared(cfg, "all")?
    } else {
        load_source(cfg)?
    };
    let img = ds.images.get(index).ok_or_else(|| {
        Failure::from(Error::IndexOutOfRange {
            index,
            len: ds.len(),
        })
    })?;
    let set = lifting::lift(img, cfg.model.kind);
    create_dir(&cfg.out)?;
    let path = cfg.out.join(format!("lift-{index}.csv"));
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    set.write_csv(&mut w).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;
    println!("wrote {} ({} points)", path.display(), set.len());
    Ok(())
}
