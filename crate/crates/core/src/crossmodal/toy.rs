//! Desk-scale cross-modal distillation on linear encoders.
//!
//! A latent scene vector `z` is observed twice: by a frozen teacher
//! (`A z + noise`) and by a thermal sensor (`B z + noise`). A linear
//! student `W` over the thermal observation is trained with the symmetric
//! InfoNCE loss against the normalised teacher features.

use std::fmt::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::loss::{infonce_loss, l2_normalize, Metric, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result};
use crate::evaluate::knn_rank;
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyDistillConfig {
    pub latent_dim: usize,
    pub teacher_dim: usize,
    pub thermal_dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub noise: f64,
    pub lr: f64,
    pub steps: usize,
    /// Minibatch size; `n_train` or more means full-batch descent.
    pub batch: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for ToyDistillConfig {
    fn default() -> Self {
        ToyDistillConfig {
            latent_dim: 8,
            teacher_dim: 32,
            thermal_dim: 32,
            n_train: 512,
            n_val: 256,
            noise: 0.01,
            lr: 0.5,
            steps: 2000,
            batch: 64,
            tau: DEFAULT_TEMPERATURE,
            seed: 0,
        }
    }
}

impl ToyDistillConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("latent_dim", self.latent_dim),
            ("teacher_dim", self.teacher_dim),
            ("thermal_dim", self.thermal_dim),
            ("n_val", self.n_val),
        ] {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be at least 1")));
            }
        }
        if self.n_train < 2 || self.batch < 2 {
            return Err(Error::InsufficientNegatives(self.n_train.min(self.batch)));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Validation(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Validation(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Validation(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub epoch: usize,
    pub step: usize,
    pub recall_at_1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDistillReport {
    /// Training loss before each update.
    pub loss: Vec<f64>,
    /// Held-out Recall@1 at initialisation and after every epoch.
    pub recall: Vec<RecallPoint>,
    pub student: Array2<f64>,
}

impl ToyDistillReport {
    pub fn initial_recall(&self) -> f64 {
        self.recall.first().map_or(0.0, |r| r.recall_at_1)
    }

    pub fn final_recall(&self) -> f64 {
        self.recall.last().map_or(0.0, |r| r.recall_at_1)
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.loss.iter().enumerate() {
            let _ = writeln!(s, "{i},{l}");
        }
        s
    }

    pub fn recall_csv(&self) -> String {
        let mut s = String::from("epoch,step,recall_at_1\n");
        for r in &self.recall {
            let _ = writeln!(s, "{},{},{}", r.epoch, r.step, r.recall_at_1);
        }
        s
    }
}

struct ToyData {
    teacher_train: Array2<f64>,
    thermal_train: Array2<f64>,
    teacher_val: Array2<f64>,
    thermal_val: Array2<f64>,
    student: Array2<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * rng.sample::<f64, _>(StandardNormal))
}

fn synthesize(cfg: &ToyDistillConfig, rng: &mut ChaCha8Rng) -> ToyData {
    let a = gaussian(rng, cfg.teacher_dim, cfg.latent_dim, 1.0);
    let b = gaussian(rng, cfg.thermal_dim, cfg.latent_dim, 1.0);
    let mut observe = |n: usize| {
        let z = gaussian(rng, n, cfg.latent_dim, 1.0);
        let teacher = z.dot(&a.t()) + gaussian(rng, n, cfg.teacher_dim, cfg.noise);
        let thermal = z.dot(&b.t()) + gaussian(rng, n, cfg.thermal_dim, cfg.noise);
        (l2_normalize(teacher.view()).0, thermal)
    };
    let (teacher_train, thermal_train) = observe(cfg.n_train);
    let (teacher_val, thermal_val) = observe(cfg.n_val);
    let student = gaussian(rng, cfg.teacher_dim, cfg.thermal_dim, 1.0 / (cfg.thermal_dim as f64).sqrt());
    ToyData { teacher_train, thermal_train, teacher_val, thermal_val, student }
}

/// Cross-modal Recall@1 of student features against teacher features,
/// where row `i` of each side is the matching pair.
pub fn paired_recall_at_1(student: ArrayView2<'_, f64>, teacher: ArrayView2<'_, f64>) -> Result<f64> {
    let (ranked, _) = knn_rank(student, teacher, 1, Metric::Cosine, None, Exec::Sequential)?;
    let hits = ranked.iter().enumerate().filter(|(i, r)| r.first() == Some(i)).count();
    Ok(hits as f64 / ranked.len() as f64)
}

/// Loss and gradient with respect to `w` for one batch.
fn loss_and_grad(w: &Array2<f64>, x: ArrayView2<'_, f64>, teacher: ArrayView2<'_, f64>, tau: f64) -> Result<(f64, Array2<f64>)> {
    let y = x.dot(&w.t());
    let (s, _) = l2_normalize(y.view());
    let (loss, gs) = infonce_loss(s.view(), teacher, tau)?;
    // back through the normalisation: (gs - s (s . gs)) / |y|
    let mut gy = gs;
    for ((mut g, s_row), y_row) in gy.axis_iter_mut(Axis(0)).zip(s.rows()).zip(y.rows()) {
        let norm = y_row.dot(&y_row).sqrt();
        if norm == 0.0 {
            g.fill(0.0);
            continue;
        }
        let proj = s_row.dot(&g);
        g.zip_mut_with(&s_row, |gv, &sv| *gv = (*gv - sv * proj) / norm);
    }
    Ok((loss, gy.t().dot(&x)))
}

pub fn toy_distill(cfg: &ToyDistillConfig) -> Result<ToyDistillReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = synthesize(cfg, &mut rng);
    let mut w = data.student;
    let batch = cfg.batch.min(cfg.n_train);
    let steps_per_epoch = cfg.n_train / batch;

    let val_recall = |w: &Array2<f64>| paired_recall_at_1(data.thermal_val.dot(&w.t()).view(), data.teacher_val.view());
    let mut recall = vec![RecallPoint { epoch: 0, step: 0, recall_at_1: val_recall(&w)? }];
    let mut loss = Vec::with_capacity(cfg.steps);
    let mut order: Vec<usize> = (0..cfg.n_train).collect();

    for step in 0..cfg.steps {
        let slot = step % steps_per_epoch;
        if slot == 0 && batch < cfg.n_train {
            order.shuffle(&mut rng);
        }
        let idx = &order[slot * batch..(slot + 1) * batch];
        let (l, g) = if batch == cfg.n_train {
            loss_and_grad(&w, data.thermal_train.view(), data.teacher_train.view(), cfg.tau)?
        } else {
            let x = data.thermal_train.select(Axis(0), idx);
            let t = data.teacher_train.select(Axis(0), idx);
            loss_and_grad(&w, x.view(), t.view(), cfg.tau)?
        };
        if !l.is_finite() {
            return Err(Error::Diverged { step, loss: l });
        }
        loss.push(l);
        w.scaled_add(-cfg.lr, &g);
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step, loss: f64::NAN });
        }
        if (step + 1) % steps_per_epoch == 0 || step + 1 == cfg.steps {
            recall.push(RecallPoint {
                epoch: (step + 1).div_ceil(steps_per_epoch),
                step: step + 1,
                recall_at_1: val_recall(&w)?,
            });
        }
    }
    Ok(ToyDistillReport { loss, recall, student: w })
}
