use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use coastseg_core::catalog::{SelectionPolicy, Tile};
use coastseg_core::dataset::{CoastalType, CropParams};
use coastseg_core::gbdt::{TrainParams, DEFAULT_PIXELS_PER_IMAGE};
use coastseg_core::index::DEFAULT_THRESHOLD;
use coastseg_core::metrics::EvalParams;

pub const DEFAULT_SEED: u64 = 42;

/// Everything a run can be configured with. Relative paths resolve against
/// the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub catalog: Option<PathBuf>,
    pub scene_dir: Option<PathBuf>,
    pub mask_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub policy: SelectionPolicy,
    pub crop: CropParams,
    pub eval: EvalParams,
    pub ndwi_threshold: f64,
    pub gbdt: TrainParams,
    pub pixels_per_image: usize,
    pub importance_repeats: usize,
    pub coastal_types: BTreeMap<Tile, CoastalType>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            catalog: None,
            scene_dir: None,
            mask_dir: None,
            out_dir: None,
            policy: SelectionPolicy::default(),
            crop: CropParams::default(),
            eval: EvalParams::default(),
            ndwi_threshold: DEFAULT_THRESHOLD,
            gbdt: TrainParams::default(),
            pixels_per_image: DEFAULT_PIXELS_PER_IMAGE,
            importance_repeats: 1,
            coastal_types: BTreeMap::new(),
            seed: DEFAULT_SEED,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.catalog, &mut cfg.scene_dir, &mut cfg.mask_dir, &mut cfg.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.policy.validate()?;
        Ok(cfg)
    }
}
