use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ogrid_core::field::FieldConfig;
use ogrid_core::train::TrainConfig;
use ogrid_core::tree::LodSet;
use serde::{Deserialize, Serialize};

/// Margin kept between the normalized mesh and the domain boundary.
pub const NORMALIZE_MARGIN: f64 = 0.1;

/// Everything a run needs besides the subcommand's own paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: Option<PathBuf>,
    pub field: FieldConfig,
    pub train: TrainConfig,
    /// Evaluation lattice vertices per axis.
    pub grid_res: usize,
    pub metric_samples: usize,
    pub iou_res: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: None,
            field: FieldConfig::default(),
            train: TrainConfig {
                epochs: 100,
                n_samples: 5_000_000,
                ..TrainConfig::default()
            },
            grid_res: 512,
            metric_samples: 100_000,
            iou_res: 128,
        }
    }
}

impl RunConfig {
    /// Reduced scale that fits a mesh in minutes on one CPU.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.field.features = 16;
        c.train.lods = LodSet::new(vec![3, 4, 5]).expect("valid lods");
        c.train.n_samples = 200_000;
        c.train.epochs = 10;
        c.grid_res = 128;
        // 1e4 samples leave a point-sampling floor close to the CD target
        c.metric_samples = 100_000;
        c
    }

    /// Defaults (or the desk preset), then the JSON document. Flags are
    /// applied by the caller afterwards.
    pub fn resolve(desk: bool, json: Option<&Path>) -> Result<Self> {
        let mut base = serde_json::to_value(if desk { Self::desk() } else { Self::default() })?;
        if let Some(path) = json {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading --config {}", path.display()))?;
            let doc: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing --config {}", path.display()))?;
            merge(&mut base, doc);
        }
        let cfg: Self = serde_json::from_value(base).context("invalid --config document")?;
        Ok(cfg)
    }
}

/// Object keys in `patch` replace those in `base`, recursively.
fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn parse_lods(s: &str) -> Result<LodSet, String> {
    let lods = s
        .split(',')
        .map(|t| t.trim().parse::<u8>().map_err(|e| format!("bad level {t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    LodSet::new(lods).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn json_overrides_preset_partially() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"field": {{"features": 8}}, "train": {{"epochs": 2}}, "grid_res": 64}}"#).unwrap();
        let c = RunConfig::resolve(true, Some(f.path())).unwrap();
        assert_eq!(c.field.features, 8);
        assert_eq!(c.field.hidden, 128);
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.n_samples, 200_000);
        assert_eq!(c.grid_res, 64);
        assert_eq!(c.train.lods.as_slice(), &[3, 4, 5]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"train": {{"epoch": 2}}}}"#).unwrap();
        assert!(RunConfig::resolve(false, Some(f.path())).is_err());
    }

    #[test]
    fn lod_parsing() {
        assert_eq!(parse_lods("3, 4,5").unwrap().as_slice(), &[3, 4, 5]);
        assert!(parse_lods("3,x").is_err());
    }
}
