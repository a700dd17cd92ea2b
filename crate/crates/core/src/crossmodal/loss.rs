use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.07;
pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "cosine" | "cos" => Ok(Metric::Cosine),
            other => Err(Error::Validation(format!("unknown metric {other:?}"))),
        }
    }
}

/// Row-normalises `rows`. Zero rows are left as zeros and reported in the
/// returned flags.
pub fn l2_normalize(rows: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<bool>) {
    let mut out = rows.to_owned();
    let mut zero = Vec::with_capacity(rows.nrows());
    for mut row in out.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
            zero.push(false);
        } else {
            zero.push(true);
        }
    }
    (out, zero)
}

fn log_softmax_diag_terms(logits: ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    (max + sum.ln(), exp / sum)
}

/// Symmetric in-batch InfoNCE between student rows and frozen teacher rows.
///
/// Both inputs are expected to be L2-normalised. Returns the loss and its
/// gradient with respect to the student rows; the teacher gets no gradient.
pub fn infonce_loss(student: ArrayView2<'_, f64>, teacher: ArrayView2<'_, f64>, tau: f64) -> Result<(f64, Array2<f64>)> {
    if student.dim() != teacher.dim() {
        return Err(Error::Dimension(format!(
            "student {:?} vs teacher {:?}",
            student.dim(),
            teacher.dim()
        )));
    }
    let b = student.nrows();
    if b < 2 {
        return Err(Error::InsufficientNegatives(b));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {tau}")));
    }
    let logits = student.dot(&teacher.t()) / tau;
    let mut loss = 0.0;
    // d loss / d logits
    let mut g = Array2::<f64>::zeros((b, b));
    let scale = 0.5 / b as f64;
    for i in 0..b {
        let (lse, p) = log_softmax_diag_terms(logits.row(i));
        loss += lse - logits[(i, i)];
        for j in 0..b {
            g[(i, j)] += scale * p[j];
        }
        g[(i, i)] -= scale;
    }
    for j in 0..b {
        let (lse, p) = log_softmax_diag_terms(logits.column(j));
        loss += lse - logits[(j, j)];
        for i in 0..b {
            g[(i, j)] += scale * p[i];
        }
        g[(j, j)] -= scale;
    }
    let grad = g.dot(&teacher) / tau;
    Ok((loss * scale, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    pub grad_anchor: Array1<f64>,
    pub grad_positive: Array1<f64>,
    pub grad_negative: Array1<f64>,
}

/// Distance and its gradient with respect to `a` and `b`.
fn distance_and_grads(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, metric: Metric) -> (f64, Array1<f64>, Array1<f64>) {
    match metric {
        Metric::Euclidean => {
            let diff = &a - &b;
            let d = diff.dot(&diff).sqrt();
            if d == 0.0 {
                let z = Array1::zeros(a.len());
                return (0.0, z.clone(), z);
            }
            let ga = diff / d;
            let gb = -&ga;
            (d, ga, gb)
        }
        Metric::Cosine => {
            let na = a.dot(&a).sqrt();
            let nb = b.dot(&b).sqrt();
            if na == 0.0 || nb == 0.0 {
                let z = Array1::zeros(a.len());
                return (1.0, z.clone(), z);
            }
            let cos = a.dot(&b) / (na * nb);
            // d = 1 - cos
            let ga = -(&b / (na * nb) - &a * (cos / (na * na)));
            let gb = -(&a / (na * nb) - &b * (cos / (nb * nb)));
            (1.0 - cos, ga, gb)
        }
    }
}

pub fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, metric: Metric) -> f64 {
    distance_and_grads(a, b, metric).0
}

/// `max(0, d(a, p) - d(a, n) + margin)` with analytic subgradients. The
/// zero subgradient is used at the hinge.
pub fn triplet_margin_loss(
    anchor: ArrayView1<'_, f64>,
    positive: ArrayView1<'_, f64>,
    negative: ArrayView1<'_, f64>,
    margin: f64,
    metric: Metric,
) -> Result<TripletLoss> {
    let dim = anchor.len();
    if positive.len() != dim || negative.len() != dim {
        return Err(Error::Dimension("triplet vectors differ in length".into()));
    }
    let (dap, ga_p, gp) = distance_and_grads(anchor, positive, metric);
    let (dan, ga_n, gn) = distance_and_grads(anchor, negative, metric);
    let value = dap - dan + margin;
    if value > 0.0 {
        Ok(TripletLoss {
            loss: value,
            grad_anchor: ga_p - ga_n,
            grad_positive: gp,
            grad_negative: -gn,
        })
    } else {
        let z = Array1::zeros(dim);
        Ok(TripletLoss {
            loss: 0.0,
            grad_anchor: z.clone(),
            grad_positive: z.clone(),
            grad_negative: z,
        })
    }
}
