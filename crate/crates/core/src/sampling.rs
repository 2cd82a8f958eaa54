//! Block Gibbs sampling from the tempered joint
//!
//! ```text
//! p_beta(x, h) ∝ exp(E_base(x, h) + beta * I(x, h))
//! ```
//!
//! where `I` collects the `U`, `V` and `W` terms of the energy and `E_base`
//! keeps the biases. At `beta = 0` everything factorizes and can be sampled
//! exactly; at `beta = 1` this is the model joint. The blocks are: the words
//! of one comment, the bits of one comment, and the thread bits. Within each
//! block the variables are conditionally independent.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;

use crate::corpus::{CommentBag, Thread, ThreadShape};
use crate::math::{logsumexp, sigmoid, softmax, softplus};
use crate::model::{HiddenAssignment, ModelParams};

/// One joint configuration: the word sequence of every comment and all bits.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub words: Vec<Vec<u32>>,
    pub h: HiddenAssignment,
}

impl GibbsState {
    /// The sampled words as a thread with the given shape.
    pub fn to_thread(&self, shape: &ThreadShape, id: &str, subreddit: &str) -> Thread {
        let comments = self
            .words
            .iter()
            .enumerate()
            .map(|(n, ws)| {
                let mut bag =
                    CommentBag::new(format!("{id}_c{n}"), ws.iter().map(|&w| (w, 1)).collect());
                bag.parent = shape.parents[n];
                bag
            })
            .collect();
        Thread::new(id, subreddit, comments).expect("shapes are validated trees")
    }
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, logit: f64) -> f64 {
    if rng.random::<f64>() < sigmoid(logit) {
        1.0
    } else {
        0.0
    }
}

/// Gibbs kernels for one thread shape under fixed parameters.
pub struct GibbsSampler<'a> {
    params: &'a ModelParams,
    shape: &'a ThreadShape,
    children: Vec<Vec<usize>>,
    /// `D_n b + boundary biases`, the base logits of comment bits.
    comment_bias: Vec<DVector<f64>>,
    /// `c sum_n D_n`, the base logits of thread bits.
    thread_bias: DVector<f64>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(params: &'a ModelParams, shape: &'a ThreadShape) -> Self {
        let children = shape.children();
        let comment_bias = (0..shape.len())
            .map(|n| {
                let mut v = &params.b * shape.lengths[n] as f64;
                if shape.parents[n].is_none() {
                    v += &params.b_start;
                }
                if children[n].is_empty() {
                    v += &params.b_stop;
                }
                v
            })
            .collect();
        GibbsSampler {
            params,
            shape,
            children,
            comment_bias,
            thread_bias: &params.c * shape.total_words() as f64,
        }
    }

    pub fn shape(&self) -> &ThreadShape {
        self.shape
    }

    /// `log Z` of the `beta = 0` distribution, in closed form.
    pub fn log_z_base(&self) -> f64 {
        let lse_a = logsumexp(self.params.a.as_slice());
        let words: f64 = self.shape.total_words() as f64 * lse_a;
        let comment: f64 = self
            .comment_bias
            .iter()
            .flat_map(|v| v.iter())
            .map(|&l| softplus(l))
            .sum();
        let thread: f64 = self.thread_bias.iter().map(|&l| softplus(l)).sum();
        words + comment + thread
    }

    fn counts(&self, words: &[u32]) -> DVector<f64> {
        let mut x = DVector::zeros(self.params.vocab_size());
        for &w in words {
            x[w as usize] += 1.0;
        }
        x
    }

    /// The `U`, `V` and `W` part of the energy.
    pub fn interaction(&self, st: &GibbsState) -> f64 {
        let p = self.params;
        let h0 = &st.h.thread_bits;
        let mut e = 0.0;
        for n in 0..self.shape.len() {
            let hn = &st.h.comment_bits[n];
            for &w in &st.words[n] {
                let w = w as usize;
                e += hn.dot(&p.u.column(w)) + h0.dot(&p.v.column(w));
            }
            if let Some(par) = self.shape.parents[n] {
                e += st.h.comment_bits[par].dot(&(&p.w * hn));
            }
        }
        e
    }

    /// The bias part of the energy.
    pub fn base_energy(&self, st: &GibbsState) -> f64 {
        let mut e = st.h.thread_bits.dot(&self.thread_bias);
        for n in 0..self.shape.len() {
            e += st.h.comment_bits[n].dot(&self.comment_bias[n]);
            e += st.words[n]
                .iter()
                .map(|&w| self.params.a[w as usize])
                .sum::<f64>();
        }
        e
    }

    /// Exact draw from the `beta = 0` distribution.
    pub fn sample_base<R: Rng + ?Sized>(&self, rng: &mut R) -> GibbsState {
        let dist = WeightedIndex::new(softmax(&self.params.a).iter().copied())
            .expect("softmax weights are positive");
        let words = self
            .shape
            .lengths
            .iter()
            .map(|&d| (0..d).map(|_| dist.sample(rng) as u32).collect())
            .collect();
        let comment_bits = self
            .comment_bias
            .iter()
            .map(|v| v.map(|l| bernoulli(rng, l)))
            .collect();
        let thread_bits = self.thread_bias.map(|l| bernoulli(rng, l));
        GibbsState {
            words,
            h: HiddenAssignment {
                comment_bits,
                thread_bits,
            },
        }
    }

    /// Per-word distribution of comment `n` given the bits.
    pub fn word_distribution(&self, st: &GibbsState, n: usize, beta: f64) -> DVector<f64> {
        let p = self.params;
        let logits =
            (p.u.tr_mul(&st.h.comment_bits[n]) + p.v.tr_mul(&st.h.thread_bits)) * beta + &p.a;
        softmax(&logits)
    }

    /// Logits of the bits of comment `n` given its neighbors, the thread bits and its words.
    pub fn comment_logits(&self, st: &GibbsState, n: usize, beta: f64) -> DVector<f64> {
        let p = self.params;
        let mut inter = &p.u * self.counts(&st.words[n]);
        let mut child_sum = DVector::zeros(p.comment_bits());
        for &m in &self.children[n] {
            child_sum += &st.h.comment_bits[m];
        }
        inter += &p.w * child_sum;
        if let Some(par) = self.shape.parents[n] {
            inter += p.w.tr_mul(&st.h.comment_bits[par]);
        }
        &self.comment_bias[n] + inter * beta
    }

    /// Logits of the thread bits given all words.
    pub fn thread_logits(&self, st: &GibbsState, beta: f64) -> DVector<f64> {
        let all: Vec<u32> = st.words.iter().flatten().copied().collect();
        &self.thread_bias + (&self.params.v * self.counts(&all)) * beta
    }

    pub fn sample_words<R: Rng + ?Sized>(
        &self,
        st: &mut GibbsState,
        n: usize,
        beta: f64,
        rng: &mut R,
    ) {
        let d = self.shape.lengths[n];
        if d == 0 {
            return;
        }
        let dist = WeightedIndex::new(self.word_distribution(st, n, beta).iter().copied())
            .expect("softmax weights are positive");
        for w in st.words[n].iter_mut() {
            *w = dist.sample(rng) as u32;
        }
    }

    pub fn sample_comment_bits<R: Rng + ?Sized>(
        &self,
        st: &mut GibbsState,
        n: usize,
        beta: f64,
        rng: &mut R,
    ) {
        let logits = self.comment_logits(st, n, beta);
        st.h.comment_bits[n] = logits.map(|l| bernoulli(rng, l));
    }

    pub fn sample_thread_bits<R: Rng + ?Sized>(&self, st: &mut GibbsState, beta: f64, rng: &mut R) {
        let logits = self.thread_logits(st, beta);
        st.h.thread_bits = logits.map(|l| bernoulli(rng, l));
    }

    /// One sweep: all word blocks, comment bits in index order, thread bits.
    pub fn sweep<R: Rng + ?Sized>(&self, st: &mut GibbsState, beta: f64, rng: &mut R) {
        for n in 0..self.shape.len() {
            self.sample_words(st, n, beta, rng);
        }
        for n in 0..self.shape.len() {
            self.sample_comment_bits(st, n, beta, rng);
        }
        self.sample_thread_bits(st, beta, rng);
    }
}
