//! Symmetry-aware pose errors (MSSD, MSPD, VSD), threshold recalls,
//! BOP19 average recall and detection mAP.

mod detection;
mod eval;
mod pose_errors;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{RasterError, DEFAULT_VISIBILITY_DELTA};

pub use detection::{iou, map_at_iou, ConfusionEntry, Detection, GtBox, MapReport};
pub use eval::{
    evaluate, read_estimates, write_estimates, EstimateRecord, EvalReport, ObjectRecall, RecallTable,
};
pub use pose_errors::{e_mspd, e_mssd, e_vsd};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("empty target list")]
    NoTargets,
    #[error("missing recall grid for {0:?}")]
    MissingGrid(MetricKind),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown model {0}")]
    UnknownModel(u32),
    #[error("estimates file line {line}: {message}")]
    Estimates { line: usize, message: String },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Vsd,
    Mssd,
    Mspd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Vsd, MetricKind::Mssd, MetricKind::Mspd];
}

/// The shared correctness grid 0.05, 0.10, …, 0.50.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Fractions of the object diameter.
    pub mssd_thresholds: Vec<f64>,
    /// Multiples of `r = image_width / 640`, in pixels.
    pub mspd_thresholds: Vec<f64>,
    /// VSD depth tolerance; a fraction of the diameter unless
    /// `vsd_tau_absolute` is set, in which case it is in mm.
    pub vsd_tau: f64,
    pub vsd_tau_absolute: bool,
    pub vsd_thresholds: Vec<f64>,
    pub visibility_delta: f64,
    pub map_iou: f64,
    /// Ground-truth instances less visible than this are not targets.
    pub min_visible_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let grid = default_threshold_grid();
        Self {
            mssd_thresholds: grid.clone(),
            mspd_thresholds: grid.iter().map(|t| t * 100.0).collect(),
            vsd_tau: 0.15,
            vsd_tau_absolute: false,
            vsd_thresholds: grid,
            visibility_delta: DEFAULT_VISIBILITY_DELTA,
            map_iou: 0.5,
            min_visible_fraction: 0.1,
        }
    }
}

impl EvalConfig {
    pub fn thresholds(&self, kind: MetricKind) -> &[f64] {
        match kind {
            MetricKind::Vsd => &self.vsd_thresholds,
            MetricKind::Mssd => &self.mssd_thresholds,
            MetricKind::Mspd => &self.mspd_thresholds,
        }
    }

    pub fn vsd_tau_mm(&self, diameter: f64) -> f64 {
        if self.vsd_tau_absolute {
            self.vsd_tau
        } else {
            self.vsd_tau * diameter
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        for kind in MetricKind::ALL {
            let t = self.thresholds(kind);
            let ascending = t.windows(2).all(|w| w[0] < w[1]);
            if t.is_empty() || !ascending || t[0] <= 0.0 {
                return Err(MetricsError::InvalidConfig(format!(
                    "{kind:?} thresholds must be non-empty, positive and strictly ascending"
                )));
            }
        }
        if self.vsd_thresholds.iter().any(|&t| t > 1.0) {
            return Err(MetricsError::InvalidConfig("VSD thresholds must lie in (0, 1]".into()));
        }
        if !(self.vsd_tau > 0.0) || !(self.visibility_delta >= 0.0) {
            return Err(MetricsError::InvalidConfig("vsd_tau and visibility_delta".into()));
        }
        if !(self.map_iou > 0.0 && self.map_iou <= 1.0) {
            return Err(MetricsError::InvalidConfig("map_iou must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.min_visible_fraction) {
            return Err(MetricsError::InvalidConfig("min_visible_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One target's error with the scale needed to threshold it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEntry {
    /// `f64::INFINITY` for a missed target.
    pub error: f64,
    pub diameter: f64,
    pub image_width: usize,
}

/// Fraction of targets whose error is strictly below each threshold of
/// `kind`'s grid.
pub fn recall_curve(errors: &[ErrorEntry], kind: MetricKind, config: &EvalConfig) -> Result<Vec<f64>, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::NoTargets);
    }
    let n = errors.len() as f64;
    Ok(config
        .thresholds(kind)
        .iter()
        .map(|&theta| {
            let hits = errors
                .iter()
                .filter(|e| {
                    let limit = match kind {
                        MetricKind::Mssd => theta * e.diameter,
                        MetricKind::Mspd => theta * (e.image_width as f64 / 640.0),
                        MetricKind::Vsd => theta,
                    };
                    e.error < limit
                })
                .count();
            hits as f64 / n
        })
        .collect())
}

/// Per-metric recall grids awaiting aggregation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecallPartials {
    pub vsd: Option<Vec<f64>>,
    pub mssd: Option<Vec<f64>>,
    pub mspd: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageRecall {
    pub vsd: f64,
    pub mssd: f64,
    pub mspd: f64,
    pub bop: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// AR per metric is the mean over its grid; AR_BOP the mean of the three.
pub fn bop19_average_recall(partials: &RecallPartials) -> Result<AverageRecall, MetricsError> {
    let get = |g: &Option<Vec<f64>>, k| match g {
        Some(v) if !v.is_empty() => Ok(mean(v)),
        _ => Err(MetricsError::MissingGrid(k)),
    };
    let vsd = get(&partials.vsd, MetricKind::Vsd)?;
    let mssd = get(&partials.mssd, MetricKind::Mssd)?;
    let mspd = get(&partials.mspd, MetricKind::Mspd)?;
    Ok(AverageRecall { vsd, mssd, mspd, bop: (vsd + mssd + mspd) / 3.0 })
}
