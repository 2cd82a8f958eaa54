//! Comment embeddings and the two metadata prediction tasks: upvote
//! regression (least squares) and deleted-child classification (logistic
//! regression fitted with Adam).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Thread;
use crate::error::{Error, Result};
use crate::inference::{fit_posterior, MfSchedule};
use crate::math::sigmoid;
use crate::model::{ModelParams, Variant};

/// Which fitted bit means make up a comment's feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    /// Comment bits followed by thread bits.
    Concat,
    Comment,
    Thread,
}

impl FeatureSource {
    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Ddtm | Variant::DdtmNocpl => FeatureSource::Concat,
            Variant::RsComment | Variant::Unigram => FeatureSource::Comment,
            Variant::RsThread => FeatureSource::Thread,
        }
    }
}

/// Posterior bit means of one comment, with its metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommentEmbedding {
    pub thread: String,
    pub comment: String,
    pub subreddit: String,
    pub upvotes: i64,
    pub has_deleted_child: bool,
    pub psi: Vec<f64>,
    pub psi0: Vec<f64>,
}

impl CommentEmbedding {
    pub fn features(&self, source: FeatureSource) -> Vec<f64> {
        match source {
            FeatureSource::Concat => self.psi.iter().chain(&self.psi0).copied().collect(),
            FeatureSource::Comment => self.psi.clone(),
            FeatureSource::Thread => self.psi0.clone(),
        }
    }
}

/// Posterior fits of every comment, in thread order then comment order.
pub fn embed_threads(
    threads: &[Thread],
    params: &ModelParams,
    schedule: &MfSchedule,
) -> Result<Vec<CommentEmbedding>> {
    let per_thread: Vec<Vec<CommentEmbedding>> = threads
        .par_iter()
        .map(|t| {
            let fit = fit_posterior(t, params, schedule)?;
            let psi0: Vec<f64> = fit.state.thread.iter().copied().collect();
            Ok(t.comments
                .iter()
                .zip(&fit.state.comment)
                .map(|(c, psi)| CommentEmbedding {
                    thread: t.id.clone(),
                    comment: c.id.clone(),
                    subreddit: t.subreddit.clone(),
                    upvotes: c.upvotes,
                    has_deleted_child: c.has_deleted_child,
                    psi: psi.iter().copied().collect(),
                    psi0: psi0.clone(),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_thread.into_iter().flatten().collect())
}

/// Regression target `sign(v) * log(1 + |v|)`.
pub fn upvote_target(votes: i64) -> f64 {
    let v = votes as f64;
    v.signum() * v.abs().ln_1p()
}

fn check_design(x: &[Vec<f64>], n_targets: usize) -> Result<usize> {
    if x.is_empty() || x.len() != n_targets {
        return Err(Error::Shape(format!(
            "{} feature rows for {} targets",
            x.len(),
            n_targets
        )));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged feature rows".into()));
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// The normal equations were singular and `1e-6` ridge was added.
    pub ridge_fallback: bool,
}

pub const RIDGE_FALLBACK: f64 = 1e-6;

/// Ordinary least squares with intercept.
///
/// Solved on centered data via Cholesky, so constant targets give zero
/// weights and an exact intercept.
pub fn fit_upvote_regressor(x: &[Vec<f64>], y: &[f64]) -> Result<RegressionModel> {
    let d = check_design(x, y.len())?;
    let n = x.len();
    let mean_x: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean_x[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean_y));
    let gram = xc.tr_mul(&xc);
    let rhs = xc.tr_mul(&yc);
    let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
    let well_posed = |ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        ch.l_dirty()
            .diagonal()
            .iter()
            .all(|&l| l * l > 1e-12 * scale)
    };
    let (w, ridge_fallback) = match gram.clone().cholesky() {
        Some(ch) if d > 0 && well_posed(&ch) => (ch.solve(&rhs), false),
        _ if d == 0 => (DVector::zeros(0), false),
        _ => {
            let ridge = gram + DMatrix::identity(d, d) * RIDGE_FALLBACK;
            let ch = ridge
                .cholesky()
                .ok_or_else(|| Error::NonFinite("ridge normal equations".into()))?;
            (ch.solve(&rhs), true)
        }
    };
    let intercept = mean_y - w.iter().zip(&mean_x).map(|(a, b)| a * b).sum::<f64>();
    let model = RegressionModel {
        weights: w.iter().copied().collect(),
        intercept,
        ridge_fallback,
    };
    if !model.intercept.is_finite() || model.weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression weights".into()));
    }
    Ok(model)
}

impl RegressionModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn mse(&self, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
        check_design(x, y.len())?;
        Ok(x.iter()
            .zip(y)
            .map(|(r, t)| (self.predict(r) - t).powi(2))
            .sum::<f64>()
            / y.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once the gradient's largest entry falls below this.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            step_size: 0.05,
            max_iters: 5000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Set when training saw a single class; the model then always predicts it.
    pub constant: Option<bool>,
    pub iterations: usize,
}

/// Logistic regression on mean log-likelihood, optimized with full-batch Adam.
pub fn fit_deletion_classifier(
    x: &[Vec<f64>],
    labels: &[bool],
    cfg: &LogisticConfig,
) -> Result<ClassifierModel> {
    let d = check_design(x, labels.len())?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Ok(ClassifierModel {
            weights: vec![0.0; d],
            intercept: 0.0,
            constant: Some(positives > 0),
            iterations: 0,
        });
    }
    let n = x.len() as f64;
    // parameters: weights then intercept
    let mut theta = vec![0.0; d + 1];
    let mut m = vec![0.0; d + 1];
    let mut v = vec![0.0; d + 1];
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut iterations = 0;
    for t in 1..=cfg.max_iters {
        iterations = t;
        let mut g = vec![0.0; d + 1];
        for (row, &label) in x.iter().zip(labels) {
            let z = theta[d] + row.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>();
            let r = label as u8 as f64 - sigmoid(z);
            for j in 0..d {
                g[j] += r * row[j] / n;
            }
            g[d] += r / n;
        }
        if g.iter().all(|gi| gi.abs() < cfg.tolerance) {
            break;
        }
        let (bc1, bc2) = (1.0 - b1.powi(t as i32), 1.0 - b2.powi(t as i32));
        for j in 0..=d {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            theta[j] += cfg.step_size * (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic regression weights".into()));
    }
    Ok(ClassifierModel {
        intercept: theta[d],
        weights: theta[..d].to_vec(),
        constant: None,
        iterations,
    })
}

impl ClassifierModel {
    pub fn predict(&self, x: &[f64]) -> bool {
        match self.constant {
            Some(c) => c,
            None => {
                self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() >= 0.0
            }
        }
    }

    pub fn accuracy(&self, x: &[Vec<f64>], labels: &[bool]) -> Result<f64> {
        check_design(x, labels.len())?;
        let hits = x
            .iter()
            .zip(labels)
            .filter(|(r, &l)| self.predict(r) == l)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upvote_transform() {
        assert_eq!(upvote_target(0), 0.0);
        assert!((upvote_target(9) - 10f64.ln()).abs() < 1e-15);
        assert!((upvote_target(-9) + 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn constant_targets() {
        let x = vec![
            vec![0.1, 0.9],
            vec![0.4, 0.2],
            vec![0.7, 0.5],
            vec![0.3, 0.3],
        ];
        let m = fit_upvote_regressor(&x, &[2.5; 4]).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
        assert_eq!(m.intercept, 2.5);
        assert_eq!(m.mse(&x, &[2.5; 4]).unwrap(), 0.0);
    }

    #[test]
    fn singular_design_falls_back_to_ridge() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        let m = fit_upvote_regressor(&x, &[1.0, 2.0, 3.0]).unwrap();
        assert!(m.ridge_fallback);
        assert!(m.mse(&x, &[1.0, 2.0, 3.0]).unwrap() < 1e-8);
    }

    #[test]
    fn single_class_is_flagged() {
        let x = vec![vec![0.0], vec![1.0]];
        let m = fit_deletion_classifier(&x, &[true, true], &LogisticConfig::default()).unwrap();
        assert_eq!(m.constant, Some(true));
        assert_eq!(m.accuracy(&x, &[true, false]).unwrap(), 0.5);
    }
}
