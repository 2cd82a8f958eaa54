//! The evaluation report written by `ddtm eval`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ais::AisConfig;
use super::downstream::{
    embed_threads, fit_deletion_classifier, fit_upvote_regressor, upvote_target, CommentEmbedding,
    FeatureSource, LogisticConfig,
};
use super::exact::exact_log_z;
use super::perplexity::{log_z_by_shape, perplexity};
use super::retrieval::{precision_recall, RetrievalItem};
use crate::corpus::Thread;
use crate::error::{Error, Result};
use crate::inference::MfSchedule;
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Held-out comments used as retrieval queries (the first ones in order).
    pub max_queries: usize,
    /// Compare every AIS estimate with exact enumeration.
    pub oracle: bool,
    pub logistic: LogisticConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            max_queries: 1000,
            oracle: false,
            logistic: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AisSummary {
    pub num_intermediate: usize,
    pub num_runs: usize,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub thread: String,
    pub ais_log_z: f64,
    pub exact_log_z: f64,
    pub abs_error: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub perplexity_nats: f64,
    pub perplexity_exp: f64,
    pub ais: AisSummary,
    pub upvote_mse: Option<f64>,
    pub deletion_accuracy: Option<f64>,
    /// Flagged when the deletion classifier saw a single class.
    pub deletion_constant_classifier: bool,
    pub upvote_ridge_fallback: bool,
    pub pr_curve: Vec<[f64; 2]>,
    pub precision_at_10: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Vec<OracleRow>>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn features(emb: &[CommentEmbedding], source: FeatureSource) -> Vec<Vec<f64>> {
    emb.iter().map(|e| e.features(source)).collect()
}

/// Perplexity on `test`, downstream tasks trained on `train` embeddings and
/// scored on `test`, and retrieval of test comments among train comments.
pub fn evaluate(
    train: &[Thread],
    test: &[Thread],
    params: &ModelParams,
    ais: &AisConfig,
    schedule: &MfSchedule,
    opts: &EvalOptions,
) -> Result<(EvalReport, super::retrieval::PrCurve)> {
    if test.is_empty() {
        return Err(Error::EmptyCorpus(
            "evaluation needs a non-empty test split".into(),
        ));
    }
    let ppl = perplexity(test, params, ais, schedule)?;
    let source = FeatureSource::for_variant(params.variant);
    let train_emb = embed_threads(train, params, schedule)?;
    let test_emb = embed_threads(test, params, schedule)?;

    let (mut upvote_mse, mut ridge) = (None, false);
    let (mut deletion_accuracy, mut constant) = (None, false);
    if !train_emb.is_empty() {
        let (xtr, xte) = (features(&train_emb, source), features(&test_emb, source));
        let ytr: Vec<f64> = train_emb.iter().map(|e| upvote_target(e.upvotes)).collect();
        let yte: Vec<f64> = test_emb.iter().map(|e| upvote_target(e.upvotes)).collect();
        let reg = fit_upvote_regressor(&xtr, &ytr)?;
        ridge = reg.ridge_fallback;
        upvote_mse = Some(reg.mse(&xte, &yte)?);
        let ltr: Vec<bool> = train_emb.iter().map(|e| e.has_deleted_child).collect();
        let lte: Vec<bool> = test_emb.iter().map(|e| e.has_deleted_child).collect();
        let clf = fit_deletion_classifier(&xtr, &ltr, &opts.logistic)?;
        constant = clf.constant.is_some();
        deletion_accuracy = Some(clf.accuracy(&xte, &lte)?);
    }

    let item = |e: &CommentEmbedding| {
        RetrievalItem::new(
            format!("{}/{}", e.thread, e.comment),
            &e.subreddit,
            &e.features(source),
        )
    };
    let candidates: Vec<RetrievalItem> = train_emb.iter().map(item).collect();
    let queries: Vec<RetrievalItem> = test_emb.iter().take(opts.max_queries).map(item).collect();
    let pr = precision_recall(&queries, &candidates);

    let oracle = if opts.oracle {
        let by_shape = log_z_by_shape(test, params, ais)?;
        let mut rows = Vec::new();
        for t in test {
            let shape = t.shape();
            let (_, r) = by_shape
                .iter()
                .find(|(s, _)| *s == shape)
                .expect("every test shape estimated");
            let exact = exact_log_z(&shape, params)?;
            rows.push(OracleRow {
                thread: t.id.clone(),
                ais_log_z: r.log_z,
                exact_log_z: exact,
                abs_error: (r.log_z - exact).abs(),
                se: r.se,
            });
        }
        Some(rows)
    } else {
        None
    };

    let report = EvalReport {
        perplexity_nats: ppl.nats,
        perplexity_exp: ppl.exp,
        ais: AisSummary {
            num_intermediate: ais.num_intermediate,
            num_runs: ais.num_runs,
            se: ppl.mean_se,
        },
        upvote_mse,
        deletion_accuracy,
        deletion_constant_classifier: constant,
        upvote_ridge_fallback: ridge,
        pr_curve: pr.points(),
        precision_at_10: (!pr.precision.is_empty()).then(|| pr.precision_at(10)),
        oracle,
    };
    Ok((report, pr))
}
