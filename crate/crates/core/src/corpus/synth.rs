//! Synthetic corpora sampled from the model joint.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{split_of, Corpus, Split, Thread, ThreadShape, Vocabulary};
use crate::error::Result;
use crate::eval::exact::{hidden_log_weights, DEFAULT_ENUMERATION_LIMIT};
use crate::math::logsumexp;
use crate::model::{HiddenAssignment, ModelParams};
use crate::sampling::{GibbsSampler, GibbsState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthSampler {
    /// Draw the bits from their enumerated marginal, then the words given the bits.
    Exact { limit: f64 },
    /// Run block Gibbs from an exact draw of the bias-only model.
    Gibbs { burn_in: usize },
}

impl Default for SynthSampler {
    fn default() -> Self {
        SynthSampler::Exact {
            limit: DEFAULT_ENUMERATION_LIMIT,
        }
    }
}

/// Sampled threads together with the hidden bits that generated them.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub hidden: BTreeMap<String, HiddenAssignment>,
}

struct ShapeCdf {
    cdf: Vec<f64>,
}

impl ShapeCdf {
    fn new(shape: &ThreadShape, params: &ModelParams, limit: f64) -> Result<Self> {
        let log_w = hidden_log_weights(shape, params, limit)?;
        let lz = logsumexp(&log_w);
        let mut acc = 0.0;
        let cdf = log_w
            .iter()
            .map(|l| {
                acc += (l - lz).exp();
                acc
            })
            .collect();
        Ok(ShapeCdf { cdf })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = rng.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1) as u64
    }
}

fn thread_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Samples one thread per entry of `shapes`.
///
/// Thread `i` is named `{prefix}{i:06}` and draws from its own random stream,
/// so the output depends only on the inputs and `seed`.
pub fn synth_threads(
    params: &ModelParams,
    shapes: &[ThreadShape],
    sampler: SynthSampler,
    seed: u64,
    prefix: &str,
    subreddit: &str,
) -> Result<Vec<(Thread, HiddenAssignment)>> {
    params.validate()?;
    let cdfs: HashMap<&ThreadShape, ShapeCdf> = match sampler {
        SynthSampler::Exact { limit } => {
            let mut distinct: Vec<&ThreadShape> = shapes.iter().collect();
            distinct.sort_by(|a, b| (&a.parents, &a.lengths).cmp(&(&b.parents, &b.lengths)));
            distinct.dedup();
            distinct
                .into_par_iter()
                .map(|s| ShapeCdf::new(s, params, limit).map(|c| (s, c)))
                .collect::<Result<_>>()?
        }
        SynthSampler::Gibbs { .. } => HashMap::new(),
    };
    let (fc, ft) = (params.comment_bits(), params.thread_bits());
    Ok(shapes
        .par_iter()
        .enumerate()
        .map(|(i, shape)| {
            let mut rng = thread_rng(seed, i);
            let gibbs = GibbsSampler::new(params, shape);
            let state = match sampler {
                SynthSampler::Exact { .. } => {
                    let index = cdfs[shape].draw(&mut rng);
                    let h = HiddenAssignment::from_index(index, shape.len(), fc, ft);
                    let mut st = GibbsState {
                        words: shape.lengths.iter().map(|&d| vec![0; d]).collect(),
                        h,
                    };
                    for n in 0..shape.len() {
                        gibbs.sample_words(&mut st, n, 1.0, &mut rng);
                    }
                    st
                }
                SynthSampler::Gibbs { burn_in } => {
                    let mut st = gibbs.sample_base(&mut rng);
                    for _ in 0..burn_in {
                        gibbs.sweep(&mut st, 1.0, &mut rng);
                    }
                    st
                }
            };
            let thread = state.to_thread(shape, &format!("{prefix}{i:06}"), subreddit);
            (thread, state.h)
        })
        .collect())
}

/// Splits threads into train and test by hashing their ids.
pub fn corpus_from_threads(vocab: Vocabulary, threads: Vec<Thread>, test_fraction: f64) -> Corpus {
    let mut corpus = Corpus {
        vocab,
        train: Vec::new(),
        test: Vec::new(),
    };
    for t in threads {
        match split_of(&t.id, test_fraction) {
            Split::Train => corpus.train.push(t),
            Split::Test => corpus.test.push(t),
        }
    }
    corpus
}

/// Samples a labelled corpus over the synthetic vocabulary `w000, w001, ...`.
pub fn synth_corpus(
    params: &ModelParams,
    shapes: &[ThreadShape],
    sampler: SynthSampler,
    seed: u64,
    test_fraction: f64,
    subreddit: &str,
) -> Result<SynthCorpus> {
    let sampled = synth_threads(
        params,
        shapes,
        sampler,
        seed,
        &format!("{subreddit}_t"),
        subreddit,
    )?;
    let mut hidden = BTreeMap::new();
    let threads = sampled
        .into_iter()
        .map(|(t, h)| {
            hidden.insert(t.id.clone(), h);
            t
        })
        .collect();
    Ok(SynthCorpus {
        corpus: corpus_from_threads(
            Vocabulary::synthetic(params.vocab_size()),
            threads,
            test_fraction,
        ),
        hidden,
    })
}

/// A corpus mixing `regimes` thread populations that share `planted_params`
/// but differ in their thread-bit bias (see [`regime_params`]).
///
/// Shapes come from `seed + 1`; regime `r` takes every `regimes`-th shape
/// starting at `r`, samples from `seed + 2 + r`, and labels its threads
/// `regime{r}`. Thread `i` is named `t{i:06}` after its shape, so ids do not
/// reveal the regime. Returns the corpus and each regime's parameters.
pub fn synth_regimes(
    cfg: &PlantedConfig,
    threads: usize,
    regimes: usize,
    sampler: SynthSampler,
    seed: u64,
    test_fraction: f64,
) -> Result<(SynthCorpus, Vec<ModelParams>)> {
    if regimes == 0 {
        return Err(crate::error::Error::Config(
            "at least one regime is required".into(),
        ));
    }
    let base = planted_params(cfg, seed)?;
    let shapes = random_shapes(cfg, threads, seed.wrapping_add(1))?;
    let (mut all, mut hidden, mut params) = (Vec::new(), BTreeMap::new(), Vec::new());
    for r in 0..regimes {
        let p = regime_params(&base, cfg, r);
        let chunk: Vec<ThreadShape> = shapes.iter().skip(r).step_by(regimes).cloned().collect();
        let label = format!("regime{r}");
        let sampled = synth_threads(
            &p,
            &chunk,
            sampler,
            seed.wrapping_add(2 + r as u64),
            "",
            &label,
        )?;
        for (j, (mut t, h)) in sampled.into_iter().enumerate() {
            t.id = format!("t{:06}", r + regimes * j);
            for (n, c) in t.comments.iter_mut().enumerate() {
                c.id = format!("{}_c{n}", t.id);
            }
            hidden.insert(t.id.clone(), h);
            all.push(t);
        }
        params.push(p);
    }
    let corpus = corpus_from_threads(Vocabulary::synthetic(cfg.vocab_size), all, test_fraction);
    Ok((SynthCorpus { corpus, hidden }, params))
}

/// Random ground-truth parameters and thread shapes for planted-signal corpora.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub vocab_size: usize,
    pub comment_bits: usize,
    pub thread_bits: usize,
    /// Standard deviation of the entries of `U`.
    pub comment_emission: f64,
    /// Standard deviation of the entries of `V`.
    pub thread_emission: f64,
    /// Standard deviation of the entries of `a`.
    pub word_bias: f64,
    /// `W` is `coupling` on a random permutation and `-coupling / (F_c - 1)`
    /// elsewhere, so every row and column sums to zero.
    pub coupling: f64,
    /// Magnitude of the per-regime thread-bit bias `c` (per word).
    pub regime_bias: f64,
    pub min_comments: usize,
    pub max_comments: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Number of distinct shapes threads are drawn from.
    pub shape_pool: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            vocab_size: 24,
            comment_bits: 3,
            thread_bits: 3,
            comment_emission: 0.75,
            thread_emission: 0.5,
            word_bias: 0.5,
            coupling: 3.0,
            regime_bias: 0.0,
            min_comments: 3,
            max_comments: 5,
            min_len: 2,
            max_len: 5,
            shape_pool: 32,
        }
    }
}

/// Ground-truth parameters drawn from `seed`; `b`, `c` and the boundary biases are zero.
pub fn planted_params(cfg: &PlantedConfig, seed: u64) -> Result<ModelParams> {
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, Normal};
    let hidden = crate::model::HiddenConfig::new(
        cfg.comment_bits,
        cfg.thread_bits,
        crate::model::Variant::Ddtm,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(cfg.vocab_size, hidden);
    let normal =
        |sd: f64| Normal::new(0.0, sd).map_err(|e| crate::error::Error::Config(e.to_string()));
    let (nu, nv, na) = (
        normal(cfg.comment_emission)?,
        normal(cfg.thread_emission)?,
        normal(cfg.word_bias)?,
    );
    p.u.iter_mut().for_each(|x| *x = nu.sample(&mut rng));
    p.v.iter_mut().for_each(|x| *x = nv.sample(&mut rng));
    p.a.iter_mut().for_each(|x| *x = na.sample(&mut rng));
    let mut perm: Vec<usize> = (0..cfg.comment_bits).collect();
    perm.shuffle(&mut rng);
    let off = cfg.comment_bits.saturating_sub(1).max(1) as f64;
    for i in 0..cfg.comment_bits {
        for j in 0..cfg.comment_bits {
            p.w[(i, j)] = if perm[i] == j {
                cfg.coupling
            } else {
                -cfg.coupling / off
            };
        }
    }
    Ok(p)
}

/// `base` with thread-bit bias `+regime_bias` on the bits whose index has the
/// parity of `regime` and `-regime_bias` on the rest.
pub fn regime_params(base: &ModelParams, cfg: &PlantedConfig, regime: usize) -> ModelParams {
    let mut p = base.clone();
    for (f, c) in p.c.iter_mut().enumerate() {
        *c = if f % 2 == regime % 2 {
            cfg.regime_bias
        } else {
            -cfg.regime_bias
        };
    }
    p
}

/// `count` shapes drawn uniformly from a pool of `cfg.shape_pool` random
/// trees; comment `n > 0` replies to a uniformly chosen earlier comment.
pub fn random_shapes(cfg: &PlantedConfig, count: usize, seed: u64) -> Result<Vec<ThreadShape>> {
    if cfg.min_comments == 0
        || cfg.min_comments > cfg.max_comments
        || cfg.min_len > cfg.max_len
        || cfg.shape_pool == 0
    {
        return Err(crate::error::Error::Config(
            "invalid planted shape ranges".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<ThreadShape> = (0..cfg.shape_pool)
        .map(|_| {
            let n = rng.random_range(cfg.min_comments..=cfg.max_comments);
            let parents = (0..n)
                .map(|i| (i > 0).then(|| rng.random_range(0..i)))
                .collect();
            let lengths = (0..n)
                .map(|_| rng.random_range(cfg.min_len..=cfg.max_len))
                .collect();
            ThreadShape { parents, lengths }
        })
        .collect();
    Ok((0..count)
        .map(|_| pool[rng.random_range(0..pool.len())].clone())
        .collect())
}
