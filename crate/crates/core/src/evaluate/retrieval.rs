//! Exact k-NN retrieval and cross-modal Recall@K.

use std::collections::BTreeMap;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::crossmodal::{location_distance, EmbeddingSet, Locations, Metric};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Per-query ranked database indices (best first) and positive sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalResult {
    pub ranked: Vec<Vec<usize>>,
    pub positives: Vec<Vec<usize>>,
}

#[inline]
fn score(q: ArrayView1<'_, f64>, d: ArrayView1<'_, f64>, q_norm: f64, d_norm: f64, metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => q.iter().zip(d.iter()).map(|(a, b)| (a - b) * (a - b)).sum(),
        Metric::Cosine => {
            let denom = q_norm * d_norm;
            let cos = if denom > 0.0 { q.dot(&d) / denom } else { 0.0 };
            // ascending order = most similar first
            -cos
        }
    }
}

/// Top-`k` database rows per query by exact search. Ties go to the lower
/// database index. Rows listed in `excluded[q]` are never returned for
/// query `q`. Returns the ranking and the effective `k` (clamped to the
/// database size).
pub fn knn_rank(
    queries: ArrayView2<'_, f64>,
    db: ArrayView2<'_, f64>,
    k: usize,
    metric: Metric,
    excluded: Option<&[Vec<usize>]>,
    exec: Exec,
) -> Result<(Vec<Vec<usize>>, usize)> {
    if queries.ncols() != db.ncols() {
        return Err(Error::Dimension(format!(
            "query dim {} vs database dim {}",
            queries.ncols(),
            db.ncols()
        )));
    }
    if let Some(ex) = excluded {
        if ex.len() != queries.nrows() {
            return Err(Error::Dimension("one exclusion list per query is required".into()));
        }
    }
    let k_eff = k.min(db.nrows());
    if k_eff < k {
        log::warn!("k = {k} exceeds the database size {}; clamped", db.nrows());
    }
    let db_norms: Vec<f64> = db.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let ranked = par::map_indices(exec, queries.nrows(), |qi| {
        let q = queries.row(qi);
        let q_norm = q.dot(&q).sqrt();
        let skip = excluded.map(|e| e[qi].as_slice()).unwrap_or(&[]);
        let mut scored: Vec<(f64, usize)> = (0..db.nrows())
            .filter(|j| !skip.contains(j))
            .map(|j| (score(q, db.row(j), q_norm, db_norms[j], metric), j))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let take = k_eff.min(scored.len());
        if take == 0 {
            return Vec::new();
        }
        if take < scored.len() {
            scored.select_nth_unstable_by(take - 1, cmp);
            scored.truncate(take);
        }
        scored.sort_unstable_by(cmp);
        scored.into_iter().map(|(_, j)| j).collect()
    });
    Ok((ranked, k_eff))
}

pub fn knn_retrieve(queries: &EmbeddingSet, db: &EmbeddingSet, k: usize, metric: Metric) -> Result<Vec<Vec<usize>>> {
    Ok(knn_rank(queries.vectors().view(), db.vectors().view(), k, metric, None, Exec::default())?.0)
}

/// Ground-truth positives of every query and the database rows to remove
/// from its candidate list (its own paired frame).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PositiveSets {
    pub positives: Vec<Vec<usize>>,
    pub paired: Vec<Vec<usize>>,
}

/// Database rows within `radius` (closed ball) of each query, excluding the
/// query's paired database row. Pairing is by identical id.
pub fn positives_from_radius(queries: &EmbeddingSet, db: &EmbeddingSet, radius: f64) -> Result<PositiveSets> {
    if !(radius > 0.0) {
        return Err(Error::Validation(format!("positive radius must be positive, got {radius}")));
    }
    let kinds_match = matches!(
        (queries.locations(), db.locations()),
        (Locations::Geographic(_), Locations::Geographic(_)) | (Locations::Frame(_), Locations::Frame(_))
    );
    if !kinds_match {
        let culprit = if queries.locations().is_none() || !db.locations().is_none() {
            queries.ids().first()
        } else {
            db.ids().first()
        };
        let seq = culprit.map(|id| EmbeddingSet::sequence_of(id)).unwrap_or("");
        return Err(Error::Protocol(format!(
            "sequence {seq:?}: queries and database need matching positions or frame indices"
        )));
    }
    let index: std::collections::HashMap<&str, usize> =
        db.ids().iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
    let mut out = PositiveSets::default();
    for qi in 0..queries.len() {
        let paired: Vec<usize> = index.get(queries.ids()[qi].as_str()).copied().into_iter().collect();
        let positives = (0..db.len())
            .filter(|j| !paired.contains(j))
            .filter(|&j| location_distance(queries.locations(), qi, db.locations(), j).expect("kinds checked") <= radius)
            .collect();
        out.positives.push(positives);
        out.paired.push(paired);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAtK {
    pub k: usize,
    pub recall: f64,
    /// Queries with a non-empty positive set.
    pub evaluated: usize,
    /// Queries left out of the denominator.
    pub dropped: usize,
}

pub fn recall_at_k(res: &RetrievalResult, k: usize) -> Result<RecallAtK> {
    if k == 0 {
        return Err(Error::Domain("recall needs k >= 1".into()));
    }
    if res.ranked.len() != res.positives.len() {
        return Err(Error::Dimension("ranked and positive lists differ in length".into()));
    }
    let mut hits = 0usize;
    let mut evaluated = 0usize;
    for (ranked, positives) in res.ranked.iter().zip(&res.positives) {
        if positives.is_empty() {
            continue;
        }
        evaluated += 1;
        if ranked.iter().take(k).any(|j| positives.contains(j)) {
            hits += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::UndefinedRecall);
    }
    Ok(RecallAtK {
        k,
        recall: hits as f64 / evaluated as f64,
        evaluated,
        dropped: res.ranked.len() - evaluated,
    })
}

/// `sum(r_i * n_i) / sum(n_i)`.
pub fn weighted_mean_recall(per_seq: &[(f64, usize)]) -> Result<f64> {
    if per_seq.is_empty() {
        return Err(Error::Validation("weighted mean of an empty list".into()));
    }
    if let Some((_, n)) = per_seq.iter().find(|(_, n)| *n == 0) {
        return Err(Error::Validation(format!("sequence with {n} queries")));
    }
    let (num, den) = per_seq
        .iter()
        .fold((0.0, 0usize), |(num, den), &(r, n)| (num + r * n as f64, den + n));
    Ok(num / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusMode {
    /// Metric positions, one shared database across sequences.
    Geographic,
    /// Frame indices, evaluated within each sequence.
    Frame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VprConfig {
    pub radius: f64,
    pub ks: Vec<usize>,
    pub metric: Metric,
    pub mode: RadiusMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecall {
    pub sequence: String,
    pub queries: usize,
    pub evaluated: usize,
    pub dropped: usize,
    /// `"R@k" -> recall`
    pub recall: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VprReport {
    pub per_seq: Vec<SequenceRecall>,
    pub weighted_mean: BTreeMap<String, f64>,
    pub dropped_queries: usize,
}

fn group_by_sequence(set: &EmbeddingSet) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, id) in set.ids().iter().enumerate() {
        groups.entry(EmbeddingSet::sequence_of(id).to_string()).or_default().push(i);
    }
    groups
}

/// Full cross-modal VPR protocol: thermal queries against an RGB database,
/// per-sequence Recall@K and the query-weighted mean across sequences.
pub fn evaluate_vpr(queries: &EmbeddingSet, db: &EmbeddingSet, cfg: &VprConfig) -> Result<VprReport> {
    evaluate_vpr_with(queries, db, cfg, Exec::default())
}

pub fn evaluate_vpr_with(queries: &EmbeddingSet, db: &EmbeddingSet, cfg: &VprConfig, exec: Exec) -> Result<VprReport> {
    if cfg.ks.is_empty() || cfg.ks.contains(&0) {
        return Err(Error::Validation("k list must be non-empty and >= 1".into()));
    }
    let max_k = *cfg.ks.iter().max().unwrap();
    let db_groups = group_by_sequence(db);
    let mut per_seq = Vec::new();
    let mut dropped_total = 0;
    for (seq, q_idx) in group_by_sequence(queries) {
        let q = queries.select(&q_idx);
        let d = match cfg.mode {
            RadiusMode::Geographic => db.clone(),
            RadiusMode::Frame => match db_groups.get(&seq) {
                Some(idx) => db.select(idx),
                None => return Err(Error::Protocol(format!("sequence {seq:?} has no database rows"))),
            },
        };
        let pos = positives_from_radius(&q, &d, cfg.radius)?;
        let (ranked, _) = knn_rank(q.vectors().view(), d.vectors().view(), max_k, cfg.metric, Some(&pos.paired), exec)?;
        let res = RetrievalResult {
            ranked,
            positives: pos.positives,
        };
        let evaluated = res.positives.iter().filter(|p| !p.is_empty()).count();
        let dropped = q.len() - evaluated;
        dropped_total += dropped;
        let mut recall = BTreeMap::new();
        if evaluated > 0 {
            for &k in &cfg.ks {
                recall.insert(format!("R@{k}"), recall_at_k(&res, k)?.recall);
            }
        }
        per_seq.push(SequenceRecall {
            sequence: seq,
            queries: q.len(),
            evaluated,
            dropped,
            recall,
        });
    }
    let mut weighted_mean = BTreeMap::new();
    for &k in &cfg.ks {
        let key = format!("R@{k}");
        let entries: Vec<(f64, usize)> = per_seq
            .iter()
            .filter(|s| s.evaluated > 0)
            .map(|s| (s.recall[&key], s.evaluated))
            .collect();
        if entries.is_empty() {
            return Err(Error::UndefinedRecall);
        }
        weighted_mean.insert(key, weighted_mean_recall(&entries)?);
    }
    Ok(VprReport {
        per_seq,
        weighted_mean,
        dropped_queries: dropped_total,
    })
}
