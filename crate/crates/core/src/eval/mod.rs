//! Evaluation: enumeration oracles, AIS perplexity and the downstream tasks.

pub mod ais;
pub mod downstream;
pub mod exact;
pub mod perplexity;
pub mod report;
pub mod retrieval;

pub use ais::{ais_log_z, AisConfig, AisResult, BetaSchedule};
pub use downstream::{
    embed_threads, fit_deletion_classifier, fit_upvote_regressor, upvote_target, ClassifierModel,
    CommentEmbedding, FeatureSource, LogisticConfig, RegressionModel,
};
pub use exact::{
    exact_joint_stats, exact_log_likelihood, exact_log_z, exact_marginal_energy,
    exact_posterior_marginals, exact_posterior_stats, DEFAULT_ENUMERATION_LIMIT,
};
pub use perplexity::{perplexity, PerplexityReport, ThreadScore};
pub use report::{evaluate, AisSummary, EvalOptions, EvalReport, OracleRow};
pub use retrieval::{binarize, dice, precision_recall, rank, PrCurve, RetrievalItem};
