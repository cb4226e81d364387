//! Clothes-aware ranking evaluation (CMC and mAP under the general,
//! clothes-changing and same-clothes protocols) and classifier convergence
//! statistics.

mod convergence;
mod protocol;
mod ranking;
mod report;

pub use convergence::{convergence_stats, training_convergence, ConvergenceStats, LogHistogram, SampleProbabilities};
pub use protocol::{build_gallery_mask, GalleryMask, Mode, Protocol};
pub use ranking::{rank_and_score, score_similarities, similarity, ProtocolReport, QueryResult};
pub use report::{evaluate, evaluate_backbone, RankingReport, CSV_HEADER};
