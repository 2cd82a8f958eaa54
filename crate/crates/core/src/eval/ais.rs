//! Annealed importance sampling estimates of `log Z`.
//!
//! The base distribution keeps only the biases of the parameters, so it
//! factorizes and its normalizer is closed form. The path multiplies the `U`,
//! `V` and `W` terms of the energy by `beta`, and each temperature applies block
//! Gibbs sweeps that leave its tempered joint invariant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ThreadShape;
use crate::error::{Error, Result};
use crate::math::log_mean_exp;
use crate::model::ModelParams;
use crate::sampling::GibbsSampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaSchedule {
    #[default]
    Linear,
    /// `beta_t = 10^(-4 (1 - t/M))` for `t >= 1`, after `beta_0 = 0`.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AisConfig {
    pub num_intermediate: usize,
    pub num_runs: usize,
    pub schedule: BetaSchedule,
    pub gibbs_sweeps: usize,
    pub seed: u64,
}

impl Default for AisConfig {
    fn default() -> Self {
        AisConfig {
            num_intermediate: 2000,
            num_runs: 20,
            schedule: BetaSchedule::Linear,
            gibbs_sweeps: 1,
            seed: 0,
        }
    }
}

impl AisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_intermediate == 0 || self.num_runs == 0 || self.gibbs_sweeps == 0 {
            return Err(Error::Config(
                "AIS needs num_intermediate, num_runs and gibbs_sweeps >= 1".into(),
            ));
        }
        Ok(())
    }

    /// `beta_0 = 0 < beta_1 < ... < beta_M = 1` with `M = num_intermediate`.
    pub fn betas(&self) -> Vec<f64> {
        let m = self.num_intermediate;
        (0..=m)
            .map(|t| match (t, self.schedule) {
                (0, _) => 0.0,
                (t, _) if t == m => 1.0,
                (t, BetaSchedule::Linear) => t as f64 / m as f64,
                (t, BetaSchedule::Geometric) => 10f64.powf(-4.0 * (1.0 - t as f64 / m as f64)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AisResult {
    /// Log importance weight of every run.
    pub log_weights: Vec<f64>,
    pub log_z_base: f64,
    /// `log_z_base + log mean exp(log_weights)`.
    pub log_z: f64,
    /// Delta-method standard error of `log_z`: `sd(w) / (sqrt(R) mean(w))`.
    pub se: f64,
}

fn standard_error(log_w: &[f64]) -> f64 {
    let r = log_w.len();
    if r < 2 {
        return 0.0;
    }
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let mean = w.iter().sum::<f64>() / r as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    var.sqrt() / ((r as f64).sqrt() * mean)
}

/// AIS estimate of `log Z` for one thread shape.
///
/// Run `r` uses random stream `r` of `seed`, so results do not depend on the
/// number of worker threads.
pub fn ais_log_z(shape: &ThreadShape, params: &ModelParams, cfg: &AisConfig) -> Result<AisResult> {
    cfg.validate()?;
    params.validate()?;
    let sampler = GibbsSampler::new(params, shape);
    let betas = cfg.betas();
    let log_weights: Vec<f64> = (0..cfg.num_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(run as u64);
            let mut st = sampler.sample_base(&mut rng);
            let mut lw = 0.0;
            for t in 1..betas.len() {
                lw += (betas[t] - betas[t - 1]) * sampler.interaction(&st);
                if t + 1 < betas.len() {
                    for _ in 0..cfg.gibbs_sweeps {
                        sampler.sweep(&mut st, betas[t], &mut rng);
                    }
                }
            }
            lw
        })
        .collect();
    if log_weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("AIS importance weight".into()));
    }
    let log_z_base = sampler.log_z_base();
    Ok(AisResult {
        log_z: log_z_base + log_mean_exp(&log_weights),
        se: standard_error(&log_weights),
        log_z_base,
        log_weights,
    })
}
