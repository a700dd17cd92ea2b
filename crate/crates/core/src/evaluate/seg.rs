//! Segmentation metrics: mIoU over label maps and the Dice loss used to
//! train segmentation heads.

use ndarray::{Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Gray8, Raster};

/// Per-class true positive / false positive / false negative counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    classes: usize,
    ignore: Option<u8>,
    tp: Vec<u64>,
    fp: Vec<u64>,
    fn_: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouReport {
    /// `None` for classes absent from both prediction and ground truth.
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
    pub present_classes: usize,
}

impl ConfusionCounts {
    pub fn new(classes: usize, ignore: Option<u8>) -> Result<Self> {
        if classes == 0 || classes > 256 {
            return Err(Error::Domain(format!("class count must be in 1..=256, got {classes}")));
        }
        Ok(ConfusionCounts {
            classes,
            ignore,
            tp: vec![0; classes],
            fp: vec![0; classes],
            fn_: vec![0; classes],
        })
    }

    pub fn add(&mut self, pred: &Gray8, gt: &Gray8) -> Result<()> {
        pred.ensure_same_dims(gt, "prediction and ground truth")?;
        let check = |v: u8, what: &str| -> Result<()> {
            if (v as usize) < self.classes || Some(v) == self.ignore {
                Ok(())
            } else {
                Err(Error::Validation(format!("{what} label {v} outside 0..{}", self.classes)))
            }
        };
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            check(p, "predicted")?;
            check(g, "ground-truth")?;
            if Some(g) == self.ignore {
                continue;
            }
            if p == g {
                self.tp[g as usize] += 1;
            } else {
                self.fn_[g as usize] += 1;
                if Some(p) != self.ignore {
                    self.fp[p as usize] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn report(&self) -> Result<MiouReport> {
        let per_class: Vec<Option<f64>> = (0..self.classes)
            .map(|c| {
                let union = self.tp[c] + self.fp[c] + self.fn_[c];
                (union > 0).then(|| self.tp[c] as f64 / union as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        if present.is_empty() {
            return Err(Error::Validation("no labelled pixels to evaluate".into()));
        }
        Ok(MiouReport {
            miou: present.iter().sum::<f64>() / present.len() as f64,
            present_classes: present.len(),
            per_class,
        })
    }
}

pub fn miou(pred: &Gray8, gt: &Gray8, classes: usize, ignore: Option<u8>) -> Result<MiouReport> {
    let mut counts = ConfusionCounts::new(classes, ignore)?;
    counts.add(pred, gt)?;
    counts.report()
}

/// Soft Dice loss over the classes present in `gt` and its gradient with
/// respect to `probs`. Both inputs are `pixels x classes`.
pub fn dice_loss(probs: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>, eps: f64) -> Result<(f64, Array2<f64>)> {
    if probs.dim() != gt.dim() {
        return Err(Error::Dimension(format!("probs {:?} vs gt {:?}", probs.dim(), gt.dim())));
    }
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("smoothing must be >= 0, got {eps}")));
    }
    let classes = probs.ncols();
    let mut grad = Array2::zeros(probs.dim());
    let present: Vec<usize> = (0..classes).filter(|&c| gt.column(c).sum() > 0.0).collect();
    if present.is_empty() {
        return Ok((0.0, grad));
    }
    let m = present.len() as f64;
    let mut mean_dice = 0.0;
    for &c in &present {
        let p = probs.column(c);
        let g = gt.column(c);
        let inter = p.dot(&g);
        let denom = p.sum() + g.sum() + eps;
        let numer = 2.0 * inter + eps;
        mean_dice += numer / denom / m;
        // d dice / d p_n = (2 g_n denom - numer) / denom^2
        for (n, gn) in g.iter().enumerate() {
            grad[(n, c)] = -(2.0 * gn * denom - numer) / (denom * denom) / m;
        }
    }
    Ok((1.0 - mean_dice, grad))
}

/// Bilinearly upsamples a `(rows, cols, classes)` probability grid to
/// `width x height` (half-pixel centres) and takes the per-pixel argmax.
/// Ties go to the lower class index.
pub fn labels_from_probs(probs: &Array3<f64>, width: usize, height: usize) -> Result<Gray8> {
    let (rows, cols, classes) = probs.dim();
    if rows == 0 || cols == 0 || classes == 0 || classes > 256 {
        return Err(Error::Dimension(format!("bad probability grid {:?}", probs.dim())));
    }
    for r in 0..rows {
        for c in 0..cols {
            let cell = probs.slice(ndarray::s![r, c, ..]);
            if cell.iter().any(|&p| !(p >= 0.0)) || (cell.sum() - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!("cell ({r}, {c}) is not a probability vector")));
            }
        }
    }
    let coord = |i: usize, out: usize, inp: usize| -> (usize, usize, f64) {
        let s = ((i as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(inp - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (r0, r1, ay) = coord(y, height, rows);
        for x in 0..width {
            let (c0, c1, ax) = coord(x, width, cols);
            let mut best = (f64::NEG_INFINITY, 0usize);
            for k in 0..classes {
                let top = probs[(r0, c0, k)] * (1.0 - ax) + probs[(r0, c1, k)] * ax;
                let bottom = probs[(r1, c0, k)] * (1.0 - ax) + probs[(r1, c1, k)] * ax;
                let v = top * (1.0 - ay) + bottom * ay;
                if v > best.0 {
                    best = (v, k);
                }
            }
            out.push(best.1 as u8);
        }
    }
    Raster::new(width, height, out)
}
