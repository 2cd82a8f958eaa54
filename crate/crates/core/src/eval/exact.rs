//! Brute-force enumeration over hidden configurations.
//!
//! Given the bits, the words of a comment are iid draws from
//! `softmax(a + U'h_n + V'h_0)`, so the sum over word sequences has the closed
//! form `D_n * logsumexp(a + U'h_n + V'h_0)` and only the `2^(N F_c + F_t)`
//! bit configurations need enumerating. Configuration `i` sets comment `n` bit
//! `f` to bit `n F_c + f` of `i`, and thread bit `f` to bit `N F_c + f`.

use nalgebra::DVector;

use crate::corpus::{Thread, ThreadShape};
use crate::error::{Error, Result};
use crate::math::{logsumexp, softmax};
use crate::model::{HiddenAssignment, ModelParams, ParamBlocks};
use crate::training::{joint_stats, posterior_stats};

/// Default cap on the number of enumerated hidden configurations.
pub const DEFAULT_ENUMERATION_LIMIT: f64 = 1_048_576.0;

/// Number of hidden configurations of a thread with `n` comments.
pub fn hidden_states(n: usize, fc: usize, ft: usize) -> f64 {
    2f64.powi((n * fc + ft) as i32)
}

fn check_limit(n: usize, params: &ModelParams, limit: f64) -> Result<u64> {
    let states = hidden_states(n, params.comment_bits(), params.thread_bits());
    if states > limit || states > 2f64.powi(62) {
        return Err(Error::EnumerationLimit { states, limit });
    }
    Ok(states as u64)
}

fn bits(index: u64, width: usize) -> DVector<f64> {
    DVector::from_fn(width, |f, _| ((index >> f) & 1) as f64)
}

/// Per-pattern lookup tables shared by all comments of a shape.
struct Tables {
    fc: usize,
    /// `logsumexp(a + U'h + V'g)` indexed `[h * 2^ft + g]`.
    word_lse: Vec<f64>,
    /// `h'W h'` indexed `[parent * 2^fc + child]`.
    coupling: Vec<f64>,
    comment_patterns: Vec<DVector<f64>>,
    thread_patterns: Vec<DVector<f64>>,
}

impl Tables {
    fn new(params: &ModelParams) -> Self {
        let (fc, ft) = (params.comment_bits(), params.thread_bits());
        let comment_patterns: Vec<_> = (0..1u64 << fc).map(|i| bits(i, fc)).collect();
        let thread_patterns: Vec<_> = (0..1u64 << ft).map(|i| bits(i, ft)).collect();
        let mut word_lse = Vec::with_capacity(comment_patterns.len() * thread_patterns.len());
        for h in &comment_patterns {
            let uh = params.u.tr_mul(h) + &params.a;
            for g in &thread_patterns {
                word_lse.push(logsumexp((&uh + params.v.tr_mul(g)).as_slice()));
            }
        }
        let mut coupling = Vec::with_capacity(comment_patterns.len().pow(2));
        for p in &comment_patterns {
            let pw = params.w.tr_mul(p);
            for c in &comment_patterns {
                coupling.push(pw.dot(c));
            }
        }
        Tables {
            fc,
            word_lse,
            coupling,
            comment_patterns,
            thread_patterns,
        }
    }

    fn split(&self, index: u64, n: usize) -> (impl Iterator<Item = usize> + '_, usize) {
        let mask = (1u64 << self.fc) - 1;
        let fc = self.fc;
        let comments = (0..n).map(move |c| ((index >> (c * fc)) & mask) as usize);
        (comments, (index >> (n * fc)) as usize)
    }

    fn assignment(&self, index: u64, n: usize) -> HiddenAssignment {
        let (comments, g) = self.split(index, n);
        HiddenAssignment {
            comment_bits: comments.map(|h| self.comment_patterns[h].clone()).collect(),
            thread_bits: self.thread_patterns[g].clone(),
        }
    }
}

/// Linear per-comment scores `score[n][h]` and thread scores `score[g]`.
struct Linear {
    comment: Vec<Vec<f64>>,
    thread: Vec<f64>,
}

fn boundary_bias(
    params: &ModelParams,
    shape: &ThreadShape,
    children: &[Vec<usize>],
    n: usize,
) -> DVector<f64> {
    let mut v = &params.b * shape.lengths[n] as f64;
    if shape.parents[n].is_none() {
        v += &params.b_start;
    }
    if children[n].is_empty() {
        v += &params.b_stop;
    }
    v
}

fn enumerate_log_weights(
    shape: &ThreadShape,
    tables: &Tables,
    linear: &Linear,
    words: bool,
    count: u64,
) -> Vec<f64> {
    let n = shape.len();
    let nt = tables.thread_patterns.len();
    let nc = tables.comment_patterns.len();
    (0..count)
        .map(|i| {
            let (comments, g) = tables.split(i, n);
            let hs: Vec<usize> = comments.collect();
            let mut e = linear.thread[g];
            for (c, &h) in hs.iter().enumerate() {
                e += linear.comment[c][h];
                if words && shape.lengths[c] > 0 {
                    e += shape.lengths[c] as f64 * tables.word_lse[h * nt + g];
                }
                if let Some(p) = shape.parents[c] {
                    e += tables.coupling[hs[p] * nc + h];
                }
            }
            e
        })
        .collect()
}

/// `log sum_x exp E(x, h)` for every hidden configuration of `shape`.
pub fn hidden_log_weights(
    shape: &ThreadShape,
    params: &ModelParams,
    limit: f64,
) -> Result<Vec<f64>> {
    let count = check_limit(shape.len(), params, limit)?;
    let tables = Tables::new(params);
    let children = shape.children();
    let linear = Linear {
        comment: (0..shape.len())
            .map(|n| {
                let bias = boundary_bias(params, shape, &children, n);
                tables
                    .comment_patterns
                    .iter()
                    .map(|h| h.dot(&bias))
                    .collect()
            })
            .collect(),
        thread: {
            let c = &params.c * shape.total_words() as f64;
            tables.thread_patterns.iter().map(|g| g.dot(&c)).collect()
        },
    };
    Ok(enumerate_log_weights(shape, &tables, &linear, true, count))
}

/// `E(x, h)` for every hidden configuration, with the words of `thread` fixed.
pub fn energies(thread: &Thread, params: &ModelParams, limit: f64) -> Result<Vec<f64>> {
    params.check_thread(thread)?;
    let shape = thread.shape();
    let count = check_limit(shape.len(), params, limit)?;
    let tables = Tables::new(params);
    let children = shape.children();
    let mut thread_lin = &params.c * shape.total_words() as f64;
    let mut word_bias = 0.0;
    let comment = thread
        .comments
        .iter()
        .enumerate()
        .map(|(n, bag)| {
            thread_lin += params.thread_emission(bag);
            word_bias += params.word_bias(bag);
            let lin = boundary_bias(params, &shape, &children, n) + params.comment_emission(bag);
            tables
                .comment_patterns
                .iter()
                .map(|h| h.dot(&lin))
                .collect()
        })
        .collect();
    let linear = Linear {
        comment,
        thread: tables
            .thread_patterns
            .iter()
            .map(|g| g.dot(&thread_lin) + word_bias)
            .collect(),
    };
    Ok(enumerate_log_weights(
        &shape, &tables, &linear, false, count,
    ))
}

/// Exact `log Z` over ordered word sequences and hidden configurations.
pub fn exact_log_z(shape: &ThreadShape, params: &ModelParams) -> Result<f64> {
    exact_log_z_with_limit(shape, params, DEFAULT_ENUMERATION_LIMIT)
}

pub fn exact_log_z_with_limit(
    shape: &ThreadShape,
    params: &ModelParams,
    limit: f64,
) -> Result<f64> {
    Ok(logsumexp(&hidden_log_weights(shape, params, limit)?))
}

/// Exact marginal energy `log sum_h exp E(x, h)`.
pub fn exact_marginal_energy(thread: &Thread, params: &ModelParams) -> Result<f64> {
    Ok(logsumexp(&energies(
        thread,
        params,
        DEFAULT_ENUMERATION_LIMIT,
    )?))
}

/// Exact `log p(x)`.
pub fn exact_log_likelihood(thread: &Thread, params: &ModelParams) -> Result<f64> {
    Ok(exact_marginal_energy(thread, params)? - exact_log_z(&thread.shape(), params)?)
}

fn normalized(log_w: &[f64]) -> Vec<f64> {
    let lz = logsumexp(log_w);
    log_w.iter().map(|l| (l - lz).exp()).collect()
}

/// Exact posterior marginals `P(h_nf = 1 | x)` and `P(h_0f = 1 | x)`.
pub fn exact_posterior_marginals(
    thread: &Thread,
    params: &ModelParams,
) -> Result<(Vec<DVector<f64>>, DVector<f64>)> {
    let probs = normalized(&energies(thread, params, DEFAULT_ENUMERATION_LIMIT)?);
    let tables = Tables::new(params);
    let n = thread.len();
    let mut comment = vec![DVector::zeros(params.comment_bits()); n];
    let mut thread_m = DVector::zeros(params.thread_bits());
    for (i, p) in probs.iter().enumerate() {
        let h = tables.assignment(i as u64, n);
        for c in 0..n {
            comment[c].axpy(*p, &h.comment_bits[c], 1.0);
        }
        thread_m.axpy(*p, &h.thread_bits, 1.0);
    }
    Ok((comment, thread_m))
}

/// Exact `E_{p(h|x)}[grad_theta E(x, h)]`.
pub fn exact_posterior_stats(thread: &Thread, params: &ModelParams) -> Result<ParamBlocks> {
    let probs = normalized(&energies(thread, params, DEFAULT_ENUMERATION_LIMIT)?);
    let tables = Tables::new(params);
    let mut out = params.zeros_like();
    for (i, p) in probs.iter().enumerate() {
        let h = tables.assignment(i as u64, thread.len());
        out.axpy(
            *p,
            &posterior_stats(thread, params, &h.comment_bits, &h.thread_bits),
        );
    }
    Ok(out)
}

/// Exact `E_{p(x,h)}[grad_theta E(x, h)]`.
pub fn exact_joint_stats(shape: &ThreadShape, params: &ModelParams) -> Result<ParamBlocks> {
    let probs = normalized(&hidden_log_weights(
        shape,
        params,
        DEFAULT_ENUMERATION_LIMIT,
    )?);
    let tables = Tables::new(params);
    let mut out = params.zeros_like();
    for (i, p) in probs.iter().enumerate() {
        let h = tables.assignment(i as u64, shape.len());
        let gammas: Vec<DVector<f64>> = h
            .comment_bits
            .iter()
            .map(|hn| softmax(&(params.u.tr_mul(hn) + params.v.tr_mul(&h.thread_bits) + &params.a)))
            .collect();
        out.axpy(
            *p,
            &joint_stats(shape, params, &h.comment_bits, &h.thread_bits, &gammas),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HiddenConfig, Variant};

    #[test]
    fn zero_params_closed_form() {
        let p = ModelParams::zeros(4, HiddenConfig::new(2, 1, Variant::Ddtm).unwrap());
        let shape = ThreadShape::chain(vec![2, 1]);
        let want = 3.0 * 4f64.ln() + 5.0 * 2f64.ln();
        assert!((exact_log_z(&shape, &p).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn word_bias_only_closed_form() {
        let mut p = ModelParams::zeros(3, HiddenConfig::new(1, 2, Variant::Ddtm).unwrap());
        p.a = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let shape = ThreadShape::chain(vec![2, 0, 1]);
        let want = 3.0 * logsumexp(p.a.as_slice()) + 5.0 * 2f64.ln();
        assert!((exact_log_z(&shape, &p).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn limit_is_enforced() {
        let p = ModelParams::zeros(2, HiddenConfig::new(4, 4, Variant::Ddtm).unwrap());
        let shape = ThreadShape::chain(vec![1; 5]);
        assert!(matches!(
            exact_log_z(&shape, &p),
            Err(Error::EnumerationLimit { .. })
        ));
    }
}
