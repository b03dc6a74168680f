use std::path::Path;

use serde::{Deserialize, Serialize};
use vistrain_core::nms::FloorMode;
use vistrain_core::quality::{QualityConfig, Scorer};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    /// Confidence times the detection's predicted IoU.
    Predicted,
    /// Confidence alone.
    Confidence,
    /// Confidence times the true IoU against ground truth.
    Oracle,
}

/// Settings for one curation run. Every field can come from a TOML file
/// and be overridden on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub conf_floor: f64,
    pub conf_floor_exclusive: bool,
    pub nms_iou: f64,
    pub tau_th: f64,
    pub confidence_only_tau: f64,
    pub drop_iou: f64,
    pub rounds: u32,
    pub reset: bool,
    pub scorer: ScorerKind,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let q = QualityConfig::default();
        RunConfig {
            conf_floor: q.conf_floor,
            conf_floor_exclusive: false,
            nms_iou: q.nms_iou,
            tau_th: q.tau_th,
            confidence_only_tau: q.confidence_only_tau,
            drop_iou: q.drop_iou,
            rounds: q.rounds,
            reset: true,
            scorer: ScorerKind::Predicted,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::schema(path, 0, e.message()))?;
        cfg.quality().validate()?;
        Ok(cfg)
    }

    pub fn quality(&self) -> QualityConfig {
        QualityConfig {
            tau_th: self.tau_th,
            confidence_only_tau: self.confidence_only_tau,
            conf_floor: self.conf_floor,
            floor_mode: if self.conf_floor_exclusive { FloorMode::Exclusive } else { FloorMode::Inclusive },
            nms_iou: self.nms_iou,
            drop_iou: self.drop_iou,
            rounds: self.rounds,
        }
    }

    /// Selection threshold for the configured scorer.
    pub fn tau(&self) -> f64 {
        let probe = match self.scorer {
            ScorerKind::Confidence => Scorer::ConfidenceOnly,
            _ => Scorer::PredictedIou,
        };
        self.quality().threshold_for(&probe)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("tau_th = 0.95\nscorer = \"oracle\"").unwrap();
        assert_eq!(cfg.tau_th, 0.95);
        assert_eq!(cfg.scorer, ScorerKind::Oracle);
        assert_eq!(cfg.conf_floor, 0.25);
        assert!(toml::from_str::<RunConfig>("tau = 1").is_err());
    }

    #[test]
    fn confidence_scorer_uses_its_own_threshold() {
        let cfg = RunConfig { scorer: ScorerKind::Confidence, ..RunConfig::default() };
        assert_eq!(cfg.tau(), 0.85);
        assert_eq!(RunConfig::default().tau(), 0.75);
    }
}
