use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::ais::{ais_log_z, AisConfig, AisResult};
use crate::corpus::{Thread, ThreadShape};
use crate::error::{Error, Result};
use crate::inference::{fit_posterior, MfSchedule};
use crate::math::fnv64;
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreadScore {
    pub thread: String,
    pub words: usize,
    /// Lower bound on the marginal energy.
    pub elbo_e: f64,
    pub log_z: f64,
    pub log_z_se: f64,
}

impl ThreadScore {
    pub fn log_likelihood(&self) -> f64 {
        self.elbo_e - self.log_z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerplexityReport {
    /// Negative log-likelihood per word, in nats.
    pub nats: f64,
    /// `exp(nats)`.
    pub exp: f64,
    pub total_words: usize,
    /// Root mean square of the per-shape AIS standard errors.
    pub mean_se: f64,
    pub distinct_shapes: usize,
    pub threads: Vec<ThreadScore>,
}

/// AIS seed for one shape: the run seed mixed with a hash of the shape.
pub fn shape_seed(seed: u64, shape: &ThreadShape) -> u64 {
    let bytes = serde_json::to_vec(shape).expect("shapes serialize");
    seed ^ fnv64(&bytes)
}

/// AIS estimates for every distinct shape among `threads`, in a fixed order.
pub fn log_z_by_shape(
    threads: &[Thread],
    params: &ModelParams,
    ais: &AisConfig,
) -> Result<Vec<(ThreadShape, AisResult)>> {
    let mut shapes: Vec<ThreadShape> = threads.iter().map(Thread::shape).collect();
    shapes.sort_by(|a, b| (&a.lengths, &a.parents).cmp(&(&b.lengths, &b.parents)));
    shapes.dedup();
    shapes
        .into_par_iter()
        .map(|s| {
            let cfg = AisConfig {
                seed: shape_seed(ais.seed, &s),
                ..*ais
            };
            ais_log_z(&s, params, &cfg).map(|r| (s, r))
        })
        .collect()
}

/// Per-word perplexity in nats with `log p(x) ≈ elbo_E - log Z_AIS`.
pub fn perplexity(
    threads: &[Thread],
    params: &ModelParams,
    ais: &AisConfig,
    schedule: &MfSchedule,
) -> Result<PerplexityReport> {
    let total_words: usize = threads.iter().map(Thread::total_words).sum();
    if total_words == 0 {
        return Err(Error::EmptyCorpus(
            "perplexity needs at least one word".into(),
        ));
    }
    let by_shape = log_z_by_shape(threads, params, ais)?;
    let mean_se =
        (by_shape.iter().map(|(_, r)| r.se * r.se).sum::<f64>() / by_shape.len() as f64).sqrt();
    let distinct_shapes = by_shape.len();
    let log_z: HashMap<ThreadShape, AisResult> = by_shape.into_iter().collect();
    let scores: Vec<ThreadScore> = threads
        .par_iter()
        .map(|t| {
            let fit = fit_posterior(t, params, schedule)?;
            let z = &log_z[&t.shape()];
            Ok(ThreadScore {
                thread: t.id.clone(),
                words: t.total_words(),
                elbo_e: fit.bound,
                log_z: z.log_z,
                log_z_se: z.se,
            })
        })
        .collect::<Result<_>>()?;
    let ll: f64 = scores.iter().map(ThreadScore::log_likelihood).sum();
    let nats = -ll / total_words as f64;
    if !nats.is_finite() {
        return Err(Error::NonFinite("perplexity".into()));
    }
    Ok(PerplexityReport {
        nats,
        exp: nats.exp(),
        total_words,
        mean_se,
        distinct_shapes,
        threads: scores,
    })
}
