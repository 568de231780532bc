//! Evaluation: frequency tables and SRMSE / Corr / R², Cramér's V, nearest-sample
//! diversity, PCA and the aggregated comparison report.

mod cramers;
mod diversity;
mod freq;
mod pca;
mod report;

pub use cramers::{cramers_v, cramers_v_table};
pub use diversity::{nearest_sample_distances, nearest_sample_stats, DiversityStats};
pub use freq::{
    corr_r2, corr_r2_vectors, frequency_distribution, frequency_distribution_coded, srmse, srmse_vectors, CorrR2,
    FrequencyDistribution,
};
pub use pca::{covariance, pca_fit, Pca};
pub use report::{
    concatenated_bins, evaluate, subsets, write_scatter, EvalInput, EvalReport, MethodRow, ReportMetadata,
    ScatterSeries, View, ViewMetrics, TRAINING_SET_ROW,
};
