use std::fmt::Write as _;

use super::protocol::Protocol;
use super::ranking::{score_similarities, similarity, ProtocolReport};
use crate::data::{Dataset, SampleLabels, Split};
use crate::error::{Error, Result};
use crate::model::{embed, Backbone};
use crate::numerics::Matrix;

/// Results for several protocols on one query/gallery embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub sections: Vec<ProtocolReport>,
    /// Protocols that could not be scored, with the reason.
    pub skipped_protocols: Vec<(Protocol, String)>,
}

pub const CSV_HEADER: &str = "run_id,variant,protocol,metric,value";
const RANKS: [usize; 3] = [1, 5, 10];

impl RankingReport {
    pub fn section(&self, protocol: Protocol) -> Option<&ProtocolReport> {
        self.sections.iter().find(|s| s.protocol == protocol)
    }

    /// Plain-text report, one section per protocol.
    pub fn to_text(&self, run_id: &str, variant: &str) -> String {
        let mut out = String::new();
        writeln!(out, "# ranking report run_id={run_id} variant={variant}").unwrap();
        for s in &self.sections {
            writeln!(out, "\n[{}]", s.protocol).unwrap();
            for k in RANKS {
                writeln!(out, "top-{k} = {:.6}", s.top_k(k)).unwrap();
            }
            writeln!(out, "mAP = {:.6}", s.map).unwrap();
            writeln!(out, "scored queries = {}", s.scored).unwrap();
            writeln!(out, "skipped queries = {}", s.skipped).unwrap();
        }
        for (p, why) in &self.skipped_protocols {
            writeln!(out, "\n[{p}]\nskipped: {why}").unwrap();
        }
        out
    }

    /// CSV rows (without header): `run_id,variant,protocol,metric,value`.
    pub fn csv_rows(&self, run_id: &str, variant: &str) -> Vec<String> {
        let mut rows = Vec::new();
        for s in &self.sections {
            let p = s.protocol;
            for k in RANKS {
                rows.push(format!("{run_id},{variant},{p},top{k},{:.6}", s.top_k(k)));
            }
            rows.push(format!("{run_id},{variant},{p},mAP,{:.6}", s.map));
            rows.push(format!("{run_id},{variant},{p},skipped,{}", s.skipped));
        }
        rows
    }
}

/// Runs every protocol on one similarity matrix. Protocols without a single
/// scorable query are listed in `skipped_protocols` instead of failing.
pub fn evaluate(
    query: &Matrix,
    gallery: &Matrix,
    query_labels: &[SampleLabels],
    gallery_labels: &[SampleLabels],
    protocols: &[Protocol],
) -> Result<RankingReport> {
    let sim = similarity(query, gallery)?;
    let mut report = RankingReport {
        sections: Vec::new(),
        skipped_protocols: Vec::new(),
    };
    for &p in protocols {
        match score_similarities(&sim, query_labels, gallery_labels, p) {
            Ok(s) => report.sections.push(s),
            Err(e @ Error::NoScoredQueries(_)) => report.skipped_protocols.push((p, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// Embeds the query and gallery splits with `backbone` and scores them.
pub fn evaluate_backbone(backbone: &Backbone, dataset: &Dataset, protocols: &[Protocol]) -> Result<RankingReport> {
    let split = |s| {
        let samples = dataset.split(s);
        let labels: Vec<SampleLabels> = samples.iter().map(|x| x.labels()).collect();
        (Dataset::feature_matrix(&samples, dataset.dim()), labels)
    };
    let (q, ql) = split(Split::Query);
    let (g, gl) = split(Split::Gallery);
    if ql.is_empty() || gl.is_empty() {
        return Err(Error::Degenerate("dataset has no query or no gallery samples".into()));
    }
    evaluate(&embed(backbone, &q)?, &embed(backbone, &g)?, &ql, &gl, protocols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Mode;

    #[test]
    fn text_and_csv_shape() {
        let l = |identity, clothes, camera| SampleLabels {
            identity,
            clothes,
            camera,
        };
        let q = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let g = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let protocols: Vec<Protocol> = Mode::ALL.into_iter().map(Protocol::new).collect();
        let r = evaluate(&q, &g, &[l(0, 0, 0)], &[l(0, 1, 1), l(1, 2, 1)], &protocols).unwrap();
        assert_eq!(r.sections.len(), 2);
        assert_eq!(r.skipped_protocols.len(), 1);
        let text = r.to_text("run", "cal");
        assert!(text.contains("[general]\ntop-1 = 1.000000\n"));
        assert!(text.contains("[sc]\nskipped:"));
        let rows = r.csv_rows("run", "cal");
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0], "run,cal,general,top1,1.000000");
    }
}
