//! Track-1 ABX discriminability and Track-2 unit-discovery scores against
//! gold annotations.

mod abx;
mod annotation;
mod dtw;
mod track2;

pub use abx::{abx_error, abx_items, AbxItem, AbxMode, AbxOptions, AbxResult};
pub use annotation::{Annotation, Interval, UtteranceAnnotation};
pub use dtw::dtw_divergence;
pub use track2::{
    grouping_scores, levenshtein, match_boundaries, ned_and_coverage, parsing_scores, transcribe, ClusterInterval,
    DiscoveredClusters, Grouping, NedCoverage, ParsingScores, Prf,
};
