use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam_step, grad_estimate, AdamConfig, AdamState};
use crate::corpus::Thread;
use crate::error::{Error, Result};
use crate::eval::{perplexity, AisConfig};
use crate::inference::{fit_thread, MfSchedule, PosteriorMF};
use crate::model::{save_checkpoint, ModelParams};

/// Score used for early stopping and best-epoch selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HeldoutMetric {
    /// Mean `elbo_E - elbo_Z` over the held-out threads.
    #[default]
    ApproxLl,
    /// Negated AIS perplexity in nats per word.
    AisPerplexity { ais: AisConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Seeds the per-epoch thread order.
    pub seed: u64,
    pub schedule: MfSchedule,
    pub adam: AdamConfig,
    /// Rescale any minibatch gradient whose norm exceeds this.
    pub clip: Option<f64>,
    /// Write a checkpoint every this many epochs into `checkpoint_dir`.
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop after this many epochs without held-out improvement.
    pub patience: Option<usize>,
    pub heldout_metric: HeldoutMetric,
    /// Return the parameters of the best held-out epoch instead of the last.
    pub keep_best: bool,
    /// Threads per Adam step; their gradients are summed.
    pub batch_size: usize,
    pub workers: usize,
    /// Start each posterior fit from the thread's previous fit.
    pub warm_cache: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            seed: 0,
            schedule: MfSchedule::default(),
            adam: AdamConfig::default(),
            clip: None,
            checkpoint_every: None,
            checkpoint_dir: None,
            patience: None,
            heldout_metric: HeldoutMetric::ApproxLl,
            keep_best: false,
            batch_size: 1,
            workers: 1,
            warm_cache: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.adam.validate()?;
        if self.batch_size == 0 || self.workers == 0 {
            return Err(Error::Config(
                "batch_size and workers must be at least 1".into(),
            ));
        }
        if matches!(self.clip, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("clip must be positive".into()));
        }
        if let HeldoutMetric::AisPerplexity { ais } = &self.heldout_metric {
            ais.validate()?;
        }
        if self.checkpoint_every.is_some() && self.checkpoint_dir.is_none() {
            return Err(Error::Config(
                "checkpoint_every needs checkpoint_dir".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Cumulative number of training threads processed.
    pub threads_seen: usize,
    /// Mean `elbo_E - elbo_Z` over the epoch, measured before each step.
    pub mean_approx_ll: f64,
    /// Mean `elbo_E - elbo_Z` over the held-out threads after the epoch.
    pub heldout_approx_ll: Option<f64>,
    /// Held-out AIS perplexity in nats, when that is the held-out metric.
    pub heldout_nats: Option<f64>,
    pub wallclock_s: f64,
    pub mean_posterior_sweeps: f64,
    pub mean_joint_sweeps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedStep {
    pub epoch: usize,
    pub threads: Vec<String>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub rejected: Vec<RejectedStep>,
    pub stopped_early: bool,
    /// Epoch whose parameters were returned; 0 is the initialization.
    pub best_epoch: usize,
}

struct Visit {
    grad: super::GradEstimate,
    approx_ll: f64,
    posterior: PosteriorMF,
    posterior_sweeps: usize,
    joint_sweeps: usize,
}

fn visit(
    thread: &Thread,
    params: &ModelParams,
    schedule: &MfSchedule,
    init: Option<&PosteriorMF>,
) -> Result<Visit> {
    let fit = fit_thread(thread, params, schedule, init)?;
    let grad = grad_estimate(thread, params, &fit.posterior.state, &fit.joint.state)?;
    Ok(Visit {
        approx_ll: fit.approx_log_likelihood(),
        posterior_sweeps: fit.posterior.stats.sweeps,
        joint_sweeps: fit.joint.stats.sweeps,
        posterior: fit.posterior.state,
        grad,
    })
}

/// Mean approximate log-likelihood over `threads` with cold-start fits.
pub fn mean_approx_ll(
    threads: &[Thread],
    params: &ModelParams,
    schedule: &MfSchedule,
) -> Result<f64> {
    let lls: Vec<f64> = threads
        .par_iter()
        .map(|t| fit_thread(t, params, schedule, None).map(|f| f.approx_log_likelihood()))
        .collect::<Result<_>>()?;
    Ok(lls.iter().sum::<f64>() / lls.len().max(1) as f64)
}

/// Stochastic approximate maximum likelihood from `init`.
///
/// Each minibatch is fitted against one parameter snapshot and its summed
/// gradient applied in a single Adam step. Results do not depend on
/// `workers`: gradients are summed in thread order.
pub fn train(
    train: &[Thread],
    heldout: &[Thread],
    init: ModelParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.validate()?;
    if train.is_empty() && cfg.epochs > 0 {
        return Err(Error::EmptyCorpus("no training threads".into()));
    }
    for t in train.iter().chain(heldout) {
        init.check_thread(t)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let mut params = init;
    let mut adam = AdamState::new(&params, cfg.adam);
    let mut cache: HashMap<usize, PosteriorMF> = HashMap::new();
    let mut history = Vec::new();
    let mut rejected = Vec::new();
    let mut threads_seen = 0;
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_params = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let start = Instant::now();

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let (mut ll_sum, mut ps, mut js) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let snapshot = &params;
            let visits: Vec<Result<Visit>> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| {
                        let init = if cfg.warm_cache { cache.get(&i) } else { None };
                        visit(&train[i], snapshot, &cfg.schedule, init)
                    })
                    .collect()
            });
            let mut grad = params.zeros_like();
            let mut failure = None;
            for (&i, v) in batch.iter().zip(visits) {
                match v {
                    Ok(v) => {
                        ll_sum += v.approx_ll;
                        ps += v.posterior_sweeps;
                        js += v.joint_sweeps;
                        grad.axpy(1.0, &v.grad);
                        if cfg.warm_cache {
                            cache.insert(i, v.posterior);
                        }
                    }
                    Err(e) if e.is_numerical() => failure = Some(e.to_string()),
                    Err(e) => return Err(e),
                }
            }
            threads_seen += batch.len();
            if let Some(limit) = cfg.clip {
                let norm = grad.norm();
                if norm > limit {
                    grad.scale(limit / norm);
                }
            }
            let outcome = match failure {
                Some(reason) => Err(reason),
                None => adam_step(&mut params, &mut adam, &grad).map_err(|e| e.to_string()),
            };
            if let Err(reason) = outcome {
                rejected.push(RejectedStep {
                    epoch,
                    threads: batch.iter().map(|&i| train[i].id.clone()).collect(),
                    reason,
                });
            }
        }

        let (heldout_ll, heldout_nats) = if heldout.is_empty() {
            (None, None)
        } else {
            let ll = pool.install(|| mean_approx_ll(heldout, &params, &cfg.schedule))?;
            let nats = match &cfg.heldout_metric {
                HeldoutMetric::ApproxLl => None,
                HeldoutMetric::AisPerplexity { ais } => Some(
                    pool.install(|| perplexity(heldout, &params, ais, &cfg.schedule))?
                        .nats,
                ),
            };
            (Some(ll), nats)
        };
        let n = train.len() as f64;
        history.push(EpochStats {
            epoch,
            threads_seen,
            mean_approx_ll: ll_sum / n,
            heldout_approx_ll: heldout_ll,
            heldout_nats,
            wallclock_s: start.elapsed().as_secs_f64(),
            mean_posterior_sweeps: ps as f64 / n,
            mean_joint_sweeps: js as f64 / n,
        });

        if let (Some(every), Some(dir)) = (cfg.checkpoint_every, &cfg.checkpoint_dir) {
            if every > 0 && epoch % every == 0 {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                save_checkpoint(&params, &dir.join(format!("epoch_{epoch:04}.ddtm")))?;
            }
        }
        let score = heldout_nats.map(|n| -n).or(heldout_ll);
        if let Some(score) = score {
            if score > best {
                best = score;
                best_epoch = epoch;
                since_best = 0;
                if cfg.keep_best {
                    best_params = Some(params.clone());
                }
            } else {
                since_best += 1;
                if cfg.patience.is_some_and(|p| since_best >= p) {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    let last_epoch = history.last().map_or(0, |h| h.epoch);
    let (params, best_epoch) = match best_params {
        Some(p) => (p, best_epoch),
        None => (params, last_epoch),
    };
    Ok(TrainOutcome {
        params,
        history,
        rejected,
        stopped_early,
        best_epoch,
    })
}

/// CSV training log: `epoch,threads_seen,mean_approx_ll,heldout_approx_ll,wallclock_s`.
pub fn write_training_log(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,threads_seen,mean_approx_ll,heldout_approx_ll,wallclock_s\n");
    for s in history {
        let heldout = s
            .heldout_approx_ll
            .map(|v| v.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{:.3}\n",
            s.epoch, s.threads_seen, s.mean_approx_ll, heldout, s.wallclock_s
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
