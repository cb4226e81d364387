use std::cmp::Ordering;

use super::protocol::{build_gallery_mask, Protocol};
use crate::data::SampleLabels;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Outcome for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub valid_gallery: usize,
    pub positives: usize,
    /// 1-based rank of the first match, if any.
    pub first_match_rank: Option<usize>,
    /// `None` when the query had no match and was skipped.
    pub average_precision: Option<f64>,
}

/// CMC and mAP for one protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    /// `cmc[k]` is the fraction of scored queries matched within rank `k + 1`.
    pub cmc: Vec<f64>,
    pub map: f64,
    pub queries: Vec<QueryResult>,
    pub scored: usize,
    pub skipped: usize,
}

impl ProtocolReport {
    pub fn top1(&self) -> f64 {
        self.top_k(1)
    }

    pub fn top_k(&self, k: usize) -> f64 {
        assert!(k >= 1, "ranks are 1-based");
        match self.cmc.get(k - 1) {
            Some(&v) => v,
            None => self.cmc.last().copied().unwrap_or(0.0),
        }
    }
}

/// Cosine similarities of unit-norm query rows against unit-norm gallery rows.
pub fn similarity(query: &Matrix, gallery: &Matrix) -> Result<Matrix> {
    if query.cols() != gallery.cols() {
        return Err(Error::Shape(format!(
            "query dimension {} differs from gallery dimension {}",
            query.cols(),
            gallery.cols()
        )));
    }
    query.matmul_t(gallery)
}

/// Scores a precomputed `queries × gallery` similarity matrix.
pub fn score_similarities(
    sim: &Matrix,
    query_labels: &[SampleLabels],
    gallery_labels: &[SampleLabels],
    protocol: Protocol,
) -> Result<ProtocolReport> {
    if sim.rows() != query_labels.len() || sim.cols() != gallery_labels.len() {
        return Err(Error::Shape(format!(
            "similarity {:?} for {} queries and {} gallery entries",
            sim.shape(),
            query_labels.len(),
            gallery_labels.len()
        )));
    }
    if !sim.is_finite() {
        return Err(Error::NonFinite("similarity matrix".into()));
    }
    let mut first_hits = vec![0usize; gallery_labels.len()];
    let mut ap_sum = 0.0;
    let mut queries = Vec::with_capacity(query_labels.len());
    let mut order: Vec<usize> = Vec::with_capacity(gallery_labels.len());

    for (qi, q) in query_labels.iter().enumerate() {
        let mask = build_gallery_mask(q, gallery_labels, protocol);
        let s = sim.row(qi);
        order.clear();
        order.extend((0..gallery_labels.len()).filter(|&j| mask.valid[j]));
        // `-0.0` and `0.0` are the same similarity, so this is not `total_cmp`
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));

        let positives = order.iter().filter(|&&j| mask.positive[j]).count();
        let mut result = QueryResult {
            valid_gallery: order.len(),
            positives,
            first_match_rank: None,
            average_precision: None,
        };
        if positives > 0 {
            let mut hits = 0usize;
            let mut precision_sum = 0.0;
            for (r, &j) in order.iter().enumerate() {
                if mask.positive[j] {
                    hits += 1;
                    precision_sum += hits as f64 / (r + 1) as f64;
                    result.first_match_rank.get_or_insert(r + 1);
                }
            }
            let ap = precision_sum / positives as f64;
            ap_sum += ap;
            result.average_precision = Some(ap);
            first_hits[result.first_match_rank.expect("has positives") - 1] += 1;
        }
        queries.push(result);
    }

    let scored = queries.iter().filter(|q| q.average_precision.is_some()).count();
    if scored == 0 {
        return Err(Error::NoScoredQueries(protocol.to_string()));
    }
    let mut cmc = Vec::with_capacity(first_hits.len());
    let mut running = 0usize;
    for h in first_hits {
        running += h;
        cmc.push(running as f64 / scored as f64);
    }
    Ok(ProtocolReport {
        protocol,
        cmc,
        map: ap_sum / scored as f64,
        skipped: queries.len() - scored,
        scored,
        queries,
    })
}

/// Ranks the gallery by descending cosine similarity for each query (ties go
/// to the lower gallery index) and computes CMC and mAP under `protocol`.
/// Queries without any match under the protocol are skipped and counted.
pub fn rank_and_score(
    query: &Matrix,
    gallery: &Matrix,
    query_labels: &[SampleLabels],
    gallery_labels: &[SampleLabels],
    protocol: Protocol,
) -> Result<ProtocolReport> {
    let sim = similarity(query, gallery)?;
    score_similarities(&sim, query_labels, gallery_labels, protocol)
}
