//! Monocular depth error metrics against sparse ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Gray8};

/// Predictions are clamped to this depth (metres) before taking logs.
pub const MIN_PRED_DEPTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub valid_pixels: usize,
    /// Predictions raised to `MIN_PRED_DEPTH` for the log term.
    pub clamped: usize,
}

/// Errors over pixels where the mask is non-zero (if given) and the
/// ground truth is finite and positive.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, mask: Option<&Gray8>) -> Result<DepthMetrics> {
    pred.ensure_same_dims(gt, "prediction and ground truth")?;
    if let Some(m) = mask {
        gt.ensure_same_dims(m, "ground truth and mask")?;
    }
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut n = 0usize;
    let mut clamped = 0usize;
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if mask.is_some_and(|m| m.data()[i] == 0) || !DepthMap::is_valid_depth(g) {
            continue;
        }
        if !p.is_finite() {
            return Err(Error::Validation(format!("non-finite prediction at pixel {i}")));
        }
        let (p, g) = (p as f64, g as f64);
        let err = p - g;
        abs_rel += err.abs() / g;
        sq_rel += err * err / g;
        sq += err * err;
        let pl = if p < MIN_PRED_DEPTH {
            clamped += 1;
            MIN_PRED_DEPTH
        } else {
            p
        };
        let le = pl.ln() - g.ln();
        sq_log += le * le;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Validation("no valid ground-truth pixels".into()));
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        valid_pixels: n,
        clamped,
    })
}

impl DepthMetrics {
    /// Per-image metrics averaged over images.
    pub fn mean(items: &[DepthMetrics]) -> Result<DepthMetrics> {
        if items.is_empty() {
            return Err(Error::Validation("no images to average".into()));
        }
        let k = items.len() as f64;
        Ok(DepthMetrics {
            abs_rel: items.iter().map(|m| m.abs_rel).sum::<f64>() / k,
            sq_rel: items.iter().map(|m| m.sq_rel).sum::<f64>() / k,
            rmse: items.iter().map(|m| m.rmse).sum::<f64>() / k,
            rmse_log: items.iter().map(|m| m.rmse_log).sum::<f64>() / k,
            valid_pixels: items.iter().map(|m| m.valid_pixels).sum(),
            clamped: items.iter().map(|m| m.clamped).sum(),
        })
    }
}
