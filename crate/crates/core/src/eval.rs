//! Retrieval evaluation: mAP and CMC with same-identity same-camera gallery
//! filtering.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{features_matrix, Sample};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSplit {
    pub name: String,
    pub query: Vec<Sample>,
    pub gallery: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    /// `cmc[k - 1]` = fraction of scored queries with a hit in the top `k`.
    pub cmc: Vec<f64>,
    pub scored_queries: usize,
    pub skipped_queries: usize,
}

impl EvalReport {
    /// Rank-`k` accuracy; ranks past the end of the curve count as the last value.
    pub fn rank(&self, k: usize) -> f64 {
        assert!(k >= 1);
        self.cmc
            .get(k - 1)
            .or(self.cmc.last())
            .copied()
            .unwrap_or(0.0)
    }
}

/// Gallery indices by descending similarity; ties keep ascending index.
pub fn rank_gallery(query: &[f64], gallery: &Matrix) -> Result<Vec<usize>> {
    if gallery.rows() == 0 {
        return Err(Error::EmptyGallery);
    }
    // `+ 0.0` folds -0.0 into +0.0 so that the two compare as a tie.
    let sims: Vec<f64> = gallery.iter_rows().map(|g| dot(query, g) + 0.0).collect();
    let mut order: Vec<usize> = (0..gallery.rows()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]));
    Ok(order)
}

/// `(1/R) Σ_{k relevant} precision@k`; `None` when nothing is relevant.
pub fn average_precision(relevant: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (k, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            acc += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| acc / hits as f64)
}

/// Per-query outcome of filtered ranking.
struct QueryResult {
    ap: f64,
    first_hit: usize,
}

fn score_query(
    q_emb: &[f64],
    q: &Sample,
    gallery: &[Sample],
    g_emb: &Matrix,
) -> Result<Option<QueryResult>> {
    let qid = q.gt_id().ok_or(Error::MissingGroundTruth)?;
    let order = rank_gallery(q_emb, g_emb)?;
    let mut relevant = Vec::with_capacity(order.len());
    for &g in &order {
        let s = &gallery[g];
        let gid = s.gt_id().ok_or(Error::MissingGroundTruth)?;
        if gid == qid && s.camera_id == q.camera_id {
            continue;
        }
        relevant.push(gid == qid);
    }
    Ok(average_precision(&relevant).map(|ap| QueryResult {
        ap,
        first_hit: relevant.iter().position(|&r| r).unwrap_or(usize::MAX),
    }))
}

/// Evaluates embeddings that were already computed for the split.
pub fn evaluate_embeddings(
    split: &EvalSplit,
    query_emb: &Matrix,
    gallery_emb: &Matrix,
) -> Result<EvalReport> {
    if split.gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let mut hits_at = vec![0usize; split.gallery.len()];
    let mut ap_sum = 0.0;
    let mut scored = 0;
    let mut skipped = 0;
    for (i, q) in split.query.iter().enumerate() {
        match score_query(query_emb.row(i), q, &split.gallery, gallery_emb)? {
            Some(r) => {
                ap_sum += r.ap;
                hits_at[r.first_hit] += 1;
                scored += 1;
            }
            None => skipped += 1,
        }
    }
    if scored == 0 {
        return Err(Error::AllQueriesSkipped);
    }
    let mut cum = 0;
    let cmc = hits_at
        .iter()
        .map(|&h| {
            cum += h;
            cum as f64 / scored as f64
        })
        .collect();
    Ok(EvalReport {
        map: ap_sum / scored as f64,
        cmc,
        scored_queries: scored,
        skipped_queries: skipped,
    })
}

/// Embeds query and gallery with `encoder` and scores the split.
pub fn evaluate(encoder: &EncoderParams, split: &EvalSplit) -> Result<EvalReport> {
    let q = encoder.embed(&features_matrix(&split.query))?;
    let g = encoder.embed(&features_matrix(&split.gallery))?;
    evaluate_embeddings(split, &q, &g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub map: f64,
    pub rank1: f64,
}

/// `(step, mAP, Rank-1)` per recorded step, in order.
pub fn forgetting_curve(reports: &[EvalReport]) -> Vec<CurvePoint> {
    reports
        .iter()
        .enumerate()
        .map(|(step, r)| CurvePoint {
            step,
            map: r.map,
            rank1: r.rank(1),
        })
        .collect()
}
