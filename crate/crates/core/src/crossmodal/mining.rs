//! Radius-based cross-modal triplet mining.
//!
//! Each row of either modality is an anchor. Its positives are the rows of
//! the other modality within `radius` of it (closed ball), minus its own
//! paired frame (same id); its negatives are the rows outside the radius.
//! One triplet is drawn per anchor: a uniform positive and a uniform pick
//! among the `k_hard` negatives closest to the anchor in embedding space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{location_distance, EmbeddingSet, Locations, Modality};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

pub const DEFAULT_K_HARD: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
    pub anchor_modality: Modality,
    pub other_modality: Modality,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningConfig {
    /// Metres for geographic locations, frames for frame indices.
    pub radius: f64,
    pub k_hard: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MiningResult {
    pub triplets: Vec<Triplet>,
    /// Anchors without a positive or without a negative.
    pub skipped: usize,
}

fn squared_distance(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mine_anchor(anchors: &EmbeddingSet, i: usize, others: &EmbeddingSet, cfg: &MiningConfig, stream: u64) -> Option<Triplet> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let anchor_id = &anchors.ids()[i];
    for j in 0..others.len() {
        let d = location_distance(anchors.locations(), i, others.locations(), j).expect("location kinds checked");
        if d <= cfg.radius {
            if &others.ids()[j] != anchor_id {
                positives.push(j);
            }
        } else {
            negatives.push(j);
        }
    }
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    let a = anchors.row(i);
    let mut ranked: Vec<(f64, usize)> = negatives
        .iter()
        .map(|&j| (squared_distance(a, others.row(j)), j))
        .collect();
    let k = cfg.k_hard.min(ranked.len());
    let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, cmp);
        ranked.truncate(k);
    }
    ranked.sort_unstable_by(cmp);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let p = positives[rng.random_range(0..positives.len())];
    let n = ranked[rng.random_range(0..k)].1;
    Some(Triplet {
        anchor: anchor_id.clone(),
        positive: others.ids()[p].clone(),
        negative: others.ids()[n].clone(),
        anchor_modality: anchors.modality(),
        other_modality: others.modality(),
    })
}

pub fn mine_triplets(rgb: &EmbeddingSet, thermal: &EmbeddingSet, cfg: &MiningConfig) -> Result<MiningResult> {
    mine_triplets_with(rgb, thermal, cfg, Exec::default())
}

pub fn mine_triplets_with(rgb: &EmbeddingSet, thermal: &EmbeddingSet, cfg: &MiningConfig, exec: Exec) -> Result<MiningResult> {
    if !(cfg.radius > 0.0) {
        return Err(Error::Validation(format!("mining radius must be positive, got {}", cfg.radius)));
    }
    if cfg.k_hard == 0 {
        return Err(Error::Validation("k_hard must be at least 1".into()));
    }
    if rgb.modality() == thermal.modality() {
        return Err(Error::Validation("mining needs one set per modality".into()));
    }
    if rgb.dim() != thermal.dim() {
        return Err(Error::Dimension(format!("embedding dims {} vs {}", rgb.dim(), thermal.dim())));
    }
    match (rgb.locations(), thermal.locations()) {
        (Locations::Geographic(_), Locations::Geographic(_)) | (Locations::Frame(_), Locations::Frame(_)) => {}
        _ => {
            return Err(Error::Validation(
                "both sets need the same kind of locations (positions or frame indices)".into(),
            ))
        }
    }
    let n_rgb = rgb.len();
    let total = n_rgb + thermal.len();
    let mined = par::map_indices(exec, total, |k| {
        if k < n_rgb {
            mine_anchor(rgb, k, thermal, cfg, k as u64)
        } else {
            mine_anchor(thermal, k - n_rgb, rgb, cfg, k as u64)
        }
    });
    let skipped = mined.iter().filter(|m| m.is_none()).count();
    Ok(MiningResult {
        triplets: mined.into_iter().flatten().collect(),
        skipped,
    })
}
