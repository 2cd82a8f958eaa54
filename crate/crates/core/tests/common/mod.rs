//! Brute-force oracles and random tiny instances shared by the integration tests.
//!
//! Nothing here calls the crate's energy or enumeration code: the energy is
//! written out term by term and every sum runs over explicit word sequences
//! and bit vectors.

#![allow(dead_code)]

pub mod chi_square;

use ddtm::corpus::{CommentBag, Thread, ThreadShape};
use ddtm::model::{HiddenConfig, ModelParams, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Bounds on the size of a random instance.
#[derive(Debug, Clone, Copy)]
pub struct Tiny {
    pub max_comments: usize,
    pub max_vocab: usize,
    pub max_comment_bits: usize,
    pub max_thread_bits: usize,
    pub max_len: usize,
    pub scale: f64,
}

impl Default for Tiny {
    fn default() -> Self {
        Tiny {
            max_comments: 3,
            max_vocab: 4,
            max_comment_bits: 2,
            max_thread_bits: 2,
            max_len: 2,
            scale: 1.0,
        }
    }
}

pub fn random_params<R: Rng>(
    rng: &mut R,
    k: usize,
    fc: usize,
    ft: usize,
    scale: f64,
) -> ModelParams {
    let mut p = ModelParams::zeros(k, HiddenConfig::new(fc, ft, Variant::Ddtm).unwrap());
    let mut draw = |x: &mut f64| *x = scale * (2.0 * rng.random::<f64>() - 1.0);
    p.a.iter_mut().for_each(&mut draw);
    p.b.iter_mut().for_each(&mut draw);
    p.c.iter_mut().for_each(&mut draw);
    p.b_start.iter_mut().for_each(&mut draw);
    p.b_stop.iter_mut().for_each(&mut draw);
    p.u.iter_mut().for_each(&mut draw);
    p.v.iter_mut().for_each(&mut draw);
    p.w.iter_mut().for_each(&mut draw);
    p
}

pub fn random_shape<R: Rng>(rng: &mut R, max_comments: usize, max_len: usize) -> ThreadShape {
    let n = rng.random_range(1..=max_comments);
    let parents = (0..n)
        .map(|i| (i > 0).then(|| rng.random_range(0..i)))
        .collect();
    let lengths = (0..n).map(|_| rng.random_range(0..=max_len)).collect();
    ThreadShape::new(parents, lengths).unwrap()
}

/// A thread of `shape` with uniformly drawn words.
pub fn random_thread<R: Rng>(rng: &mut R, shape: &ThreadShape, k: usize) -> Thread {
    let comments = (0..shape.len())
        .map(|n| {
            let words: Vec<(u32, u32)> = (0..shape.lengths[n])
                .map(|_| (rng.random_range(0..k) as u32, 1))
                .collect();
            let mut bag = CommentBag::new(format!("c{n}"), words);
            bag.parent = shape.parents[n];
            bag
        })
        .collect();
    Thread::new("t", "s", comments).unwrap()
}

pub fn random_instance<R: Rng>(rng: &mut R, tiny: Tiny) -> (Thread, ModelParams) {
    let k = rng.random_range(2..=tiny.max_vocab);
    let fc = rng.random_range(1..=tiny.max_comment_bits);
    let ft = rng.random_range(1..=tiny.max_thread_bits);
    let params = random_params(rng, k, fc, ft, tiny.scale);
    let shape = random_shape(rng, tiny.max_comments, tiny.max_len);
    (random_thread(rng, &shape, k), params)
}

/// Dense counts of every comment.
pub fn counts(thread: &Thread, k: usize) -> Vec<Vec<f64>> {
    thread
        .comments
        .iter()
        .map(|c| {
            let mut x = vec![0.0; k];
            for &(w, n) in &c.counts {
                x[w as usize] += n as f64;
            }
            x
        })
        .collect()
}

pub fn parents(thread: &Thread) -> Vec<Option<usize>> {
    thread.comments.iter().map(|c| c.parent).collect()
}

pub fn bit_vectors(width: usize) -> Vec<Vec<f64>> {
    (0..1usize << width)
        .map(|i| (0..width).map(|f| ((i >> f) & 1) as f64).collect())
        .collect()
}

/// The energy written out term by term.
pub fn energy(
    p: &ModelParams,
    parents: &[Option<usize>],
    x: &[Vec<f64>],
    h: &[Vec<f64>],
    h0: &[f64],
) -> f64 {
    let (k, fc, ft) = (p.vocab_size(), p.comment_bits(), p.thread_bits());
    let n = x.len();
    let mut e = 0.0;
    for m in 0..n {
        let d: f64 = x[m].iter().sum();
        for w in 0..k {
            e += x[m][w] * p.a[w];
            for f in 0..fc {
                e += h[m][f] * p.u[(f, w)] * x[m][w];
            }
            for g in 0..ft {
                e += h0[g] * p.v[(g, w)] * x[m][w];
            }
        }
        for f in 0..fc {
            e += d * h[m][f] * p.b[f];
        }
        for g in 0..ft {
            e += d * h0[g] * p.c[g];
        }
        match parents[m] {
            None => (0..fc).for_each(|f| e += h[m][f] * p.b_start[f]),
            Some(q) => {
                for i in 0..fc {
                    for j in 0..fc {
                        e += h[q][i] * p.w[(i, j)] * h[m][j];
                    }
                }
            }
        }
        if !parents.contains(&Some(m)) {
            (0..fc).for_each(|f| e += h[m][f] * p.b_stop[f]);
        }
    }
    e
}

/// Calls `visit(h, h0)` for every hidden configuration of `n` comments.
pub fn for_each_hidden(n: usize, fc: usize, ft: usize, mut visit: impl FnMut(&[Vec<f64>], &[f64])) {
    let comment = bit_vectors(fc);
    let thread = bit_vectors(ft);
    let total = comment.len().pow(n as u32);
    for h0 in &thread {
        for mut i in 0..total {
            let h: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let v = comment[i % comment.len()].clone();
                    i /= comment.len();
                    v
                })
                .collect();
            visit(&h, h0);
        }
    }
}

/// `log sum_h exp E(x, h)`.
pub fn marginal_energy(thread: &Thread, p: &ModelParams) -> f64 {
    let x = counts(thread, p.vocab_size());
    let par = parents(thread);
    let mut terms = Vec::new();
    for_each_hidden(thread.len(), p.comment_bits(), p.thread_bits(), |h, h0| {
        terms.push(energy(p, &par, &x, h, h0))
    });
    lse(&terms)
}

/// Every word sequence of the given lengths, as per-comment count vectors.
pub fn word_sequences(lengths: &[usize], k: usize) -> Vec<Vec<Vec<f64>>> {
    let total: usize = lengths.iter().sum();
    let count = k.pow(total as u32);
    (0..count)
        .map(|mut i| {
            lengths
                .iter()
                .map(|&d| {
                    let mut x = vec![0.0; k];
                    for _ in 0..d {
                        x[i % k] += 1.0;
                        i /= k;
                    }
                    x
                })
                .collect()
        })
        .collect()
}

/// `log Z`: the sum over every ordered word sequence and hidden configuration.
pub fn log_z(shape: &ThreadShape, p: &ModelParams) -> f64 {
    let seqs = word_sequences(&shape.lengths, p.vocab_size());
    let mut terms = Vec::with_capacity(seqs.len());
    for x in &seqs {
        let mut inner = Vec::new();
        for_each_hidden(shape.len(), p.comment_bits(), p.thread_bits(), |h, h0| {
            inner.push(energy(p, &shape.parents, x, h, h0))
        });
        terms.push(lse(&inner));
    }
    lse(&terms)
}

/// Posterior marginals `P(h_nf = 1 | x)` and `P(h_0f = 1 | x)`.
pub fn posterior_marginals(thread: &Thread, p: &ModelParams) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = counts(thread, p.vocab_size());
    let par = parents(thread);
    let (n, fc, ft) = (thread.len(), p.comment_bits(), p.thread_bits());
    let lz = marginal_energy(thread, p);
    let mut comment = vec![vec![0.0; fc]; n];
    let mut top = vec![0.0; ft];
    for_each_hidden(n, fc, ft, |h, h0| {
        let w = (energy(p, &par, &x, h, h0) - lz).exp();
        for m in 0..n {
            for f in 0..fc {
                comment[m][f] += w * h[m][f];
            }
        }
        for g in 0..ft {
            top[g] += w * h0[g];
        }
    });
    (comment, top)
}
