//! JSON configuration file and its merge with presets and flags.
//!
//! Precedence, lowest first: preset, `train` section of the file, flags.

use std::path::{Path, PathBuf};

use cvxattn_core::{Dataset, FrameLayout, LossKind, Preset, SynthConfig, TrainConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    /// One of `tap`, `swipe`, `tap-appxB`, `swipe-appxB`.
    pub preset: Option<String>,
    #[serde(default)]
    pub train: TrainOverrides,
    pub synth: Option<SynthConfig>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

/// Any subset of [`TrainConfig`] fields.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub radius: Option<f64>,
    pub m: Option<usize>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub batches_per_epoch: Option<usize>,
    pub loss: Option<LossKind>,
    pub seed: Option<u64>,
    pub classes: Option<usize>,
    pub channels: Option<usize>,
    pub frames: Option<usize>,
    pub patches: Option<usize>,
    pub layout: Option<FrameLayout>,
    pub init_stddev: Option<f64>,
    pub variance_meta: Option<u32>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),*) => {
        $(if let Some(v) = $src.$field { $dst.$field = v; })*
    };
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        overlay!(
            cfg,
            self,
            radius,
            m,
            gamma,
            eta,
            epochs,
            batch_size,
            batches_per_epoch,
            loss,
            seed,
            classes,
            channels,
            frames,
            patches,
            layout,
            init_stddev
        );
        if self.variance_meta.is_some() {
            cfg.variance_meta = self.variance_meta;
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Config {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_opt(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(CliConfig::default()), CliConfig::load)
    }

    /// A flag path wins over the file; one of them is required.
    pub fn data_path(&self, flag: Option<&Path>) -> CliResult<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.data.clone())
            .ok_or_else(|| CliError::Usage("no dataset given (use --data)".into()))
    }

    pub fn model_path(&self, flag: Option<&Path>) -> CliResult<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.model.clone())
            .ok_or_else(|| CliError::Usage("no model given (use --model)".into()))
    }
}

pub fn parse_preset(name: &str) -> CliResult<Preset> {
    name.parse()
        .map_err(|e: cvxattn_core::Error| CliError::Usage(e.to_string()))
}

/// Flags that may override training settings.
#[derive(Clone, Debug, Default)]
pub struct TrainFlags {
    pub preset: Option<String>,
    pub loss: Option<LossKind>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
}

/// Resolves the effective training configuration for `ds`.
///
/// Without a preset in flags or file, the tuned preset matching the
/// gesture length is used (10 frames: tap-appxB, 30 frames: swipe-appxB).
pub fn resolve_train(file: &CliConfig, flags: &TrainFlags, ds: &Dataset) -> CliResult<TrainConfig> {
    let preset = match flags.preset.as_deref().or(file.preset.as_deref()) {
        Some(name) => parse_preset(name)?,
        None => match ds.frames() {
            10 => Preset::TapAppxB,
            30 => Preset::SwipeAppxB,
            t => {
                return Err(CliError::Usage(format!(
                    "no preset for {t}-frame gestures; pass --preset or a config file"
                )))
            }
        },
    };
    let mut cfg = preset.config();
    file.train.apply(&mut cfg);
    if let Some(loss) = flags.loss {
        cfg.loss = loss;
    }
    if let Some(epochs) = flags.epochs {
        cfg.epochs = epochs;
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("training config: {e}")))?;
    Ok(cfg)
}
