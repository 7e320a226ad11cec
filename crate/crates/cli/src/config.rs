//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use lgcn_core::data::TransformSpec;
use lgcn_core::equiv::AuditOptions;
use lgcn_core::{Error, Metric, ModelConfig, Result, TrainConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum Source {
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Folder {
        root: PathBuf,
        manifest: PathBuf,
        #[serde(default = "default_size")]
        size: [usize; 2],
        #[serde(default)]
        classes: Vec<String>,
    },
}

fn default_size() -> [usize; 2] {
    [28, 28]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: Option<Source>,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub stratified: bool,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: None,
            train_count: 2000,
            val_count: 0,
            test_count: 1000,
            stratified: true,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub audit: AuditOptions,
    /// A second checkpoint whose image-tier consistency the model must beat.
    pub ablation_checkpoint: Option<PathBuf>,
}

fn desk_train() -> TrainConfig {
    TrainConfig {
        epochs: 15,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "desk_train")]
    pub train: TrainConfig,
    #[serde(default = "default_transform")]
    pub transform: TransformSpec,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Overrides `model.metric` when present.
    #[serde(default)]
    pub metric: Option<Metric>,
    #[serde(default)]
    pub check: CheckConfig,
}

fn default_transform() -> TransformSpec {
    TransformSpec::rotated(0)
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            model: ModelConfig::default(),
            train: desk_train(),
            transform: default_transform(),
            data: DataConfig::default(),
            out: default_out(),
            metric: None,
            check: CheckConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == CONFIG_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::InvalidConfig(format!(
                    "unsupported config version {v}"
                )))
            }
            None => {
                return Err(Error::InvalidConfig(
                    "missing integer field `version`".into(),
                ))
            }
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if let Some(m) = cfg.metric {
            cfg.model.metric = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
        match &mut self.data.source {
            Some(Source::Idx { images, labels }) => {
                resolve(base, images);
                resolve(base, labels);
            }
            Some(Source::Folder { root, manifest, .. }) => {
                resolve(base, root);
                resolve(base, manifest);
            }
            None => {}
        }
        if let Some(p) = &mut self.check.ablation_checkpoint {
            resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.transform.validate()?;
        if let Some(Source::Folder { size, .. }) = &self.data.source {
            if size[0] == 0 || size[1] == 0 {
                return Err(Error::InvalidConfig(
                    "folder target size must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.out.join("prepared")
    }

    /// Checks that the source files named by the config exist.
    pub fn require_source(&self) -> Result<&Source> {
        let source = self
            .data
            .source
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("data.source is required".into()))?;
        let paths: Vec<&PathBuf> = match source {
            Source::Idx { images, labels } => vec![images, labels],
            Source::Folder { root, manifest, .. } => vec![root, manifest],
        };
        for p in paths {
            if !p.exists() {
                return Err(Error::InvalidConfig(format!(
                    "path does not exist: {}",
                    p.display()
                )));
            }
        }
        Ok(source)
    }
}
