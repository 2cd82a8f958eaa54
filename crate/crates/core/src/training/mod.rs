//! Gradient estimation and stochastic optimization.
//!
//! The energy is linear in the parameters, so `grad_theta E(x, h)` is a
//! sufficient statistic `T(x, h)` with one block per parameter block. The
//! log-likelihood gradient is `E_{p(h|x)}[T] - E_{p(x,h)}[T]`; the estimate
//! replaces both expectations by their mean-field counterparts.

mod adam;
mod train;

use nalgebra::DVector;

use crate::corpus::{Thread, ThreadShape};
use crate::error::{Error, Result};
use crate::inference::{JointMF, PosteriorMF};
use crate::model::{ModelParams, ParamBlocks};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use train::{
    mean_approx_ll, train, write_training_log, EpochStats, HeldoutMetric, RejectedStep,
    TrainConfig, TrainOutcome,
};

/// One gradient block per parameter block.
pub type GradEstimate = ParamBlocks;

fn boundary_stats(
    out: &mut ParamBlocks,
    parents: &[Option<usize>],
    children: &[Vec<usize>],
    q: &[DVector<f64>],
) {
    for (n, qn) in q.iter().enumerate() {
        if parents[n].is_none() {
            out.b_start += qn;
        }
        if children[n].is_empty() {
            out.b_stop += qn;
        }
        if let Some(p) = parents[n] {
            out.w.ger(1.0, &q[p], qn, 1.0);
        }
    }
}

/// Expected statistics with the words observed and the bits having the given
/// means under a factorized distribution. Binary means give `T(x, h)` itself.
pub fn posterior_stats(
    thread: &Thread,
    params: &ModelParams,
    comment: &[DVector<f64>],
    thread_bits: &DVector<f64>,
) -> ParamBlocks {
    let mut out = params.zeros_like();
    let mut total = 0.0;
    for (n, bag) in thread.comments.iter().enumerate() {
        let d = bag.len() as f64;
        total += d;
        out.b.axpy(d, &comment[n], 1.0);
        for &(w, cnt) in &bag.counts {
            let (w, cnt) = (w as usize, cnt as f64);
            out.a[w] += cnt;
            out.u.column_mut(w).axpy(cnt, &comment[n], 1.0);
            out.v.column_mut(w).axpy(cnt, thread_bits, 1.0);
        }
    }
    out.c.axpy(total, thread_bits, 1.0);
    let shape = thread.shape();
    boundary_stats(&mut out, &shape.parents, &shape.children(), comment);
    out
}

/// Expected statistics when the words of comment `n` are `D_n` iid draws from
/// `gammas[n]` and the bits have the given means, all independent.
pub fn joint_stats(
    shape: &ThreadShape,
    params: &ModelParams,
    comment: &[DVector<f64>],
    thread_bits: &DVector<f64>,
    gammas: &[DVector<f64>],
) -> ParamBlocks {
    let mut out = params.zeros_like();
    let mut word_total = DVector::zeros(params.vocab_size());
    for n in 0..shape.len() {
        let d = shape.lengths[n] as f64;
        out.b.axpy(d, &comment[n], 1.0);
        if d > 0.0 {
            word_total.axpy(d, &gammas[n], 1.0);
            out.u.ger(d, &comment[n], &gammas[n], 1.0);
        }
    }
    out.c.axpy(shape.total_words() as f64, thread_bits, 1.0);
    out.v.ger(1.0, thread_bits, &word_total, 1.0);
    out.a = word_total;
    boundary_stats(&mut out, &shape.parents, &shape.children(), comment);
    out
}

/// Mean-field gradient estimate of `log p(x)` for one thread.
pub fn grad_estimate(
    thread: &Thread,
    params: &ModelParams,
    posterior: &PosteriorMF,
    joint: &JointMF,
) -> Result<GradEstimate> {
    let (n, fc, ft, k) = (
        thread.len(),
        params.comment_bits(),
        params.thread_bits(),
        params.vocab_size(),
    );
    let ok = posterior.comment.len() == n
        && joint.comment.len() == n
        && joint.words.len() == n
        && posterior
            .comment
            .iter()
            .chain(&joint.comment)
            .all(|v| v.len() == fc)
        && posterior.thread.len() == ft
        && joint.thread.len() == ft
        && joint.words.iter().all(|g| g.len() == k);
    if !ok {
        return Err(Error::Shape(format!(
            "thread {}: fitted states do not match the thread and parameters",
            thread.id
        )));
    }
    params.check_thread(thread)?;
    let mut g = posterior_stats(thread, params, &posterior.comment, &posterior.thread);
    g.axpy(
        -1.0,
        &joint_stats(
            &thread.shape(),
            params,
            &joint.comment,
            &joint.thread,
            &joint.words,
        ),
    );
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CommentBag;
    use crate::model::{Block, HiddenConfig, Variant};

    #[test]
    fn matched_moments_give_zero_gradient() {
        let mut b0 = CommentBag::new("a", vec![(0, 2), (2, 1)]);
        b0.parent = None;
        let mut b1 = CommentBag::new("b", vec![(1, 1)]);
        b1.parent = Some(0);
        let t = Thread::new("t", "s", vec![b0, b1]).unwrap();
        let p = ModelParams::zeros(3, HiddenConfig::new(2, 1, Variant::Ddtm).unwrap());
        let psi = PosteriorMF {
            comment: vec![
                DVector::from_vec(vec![0.3, 0.8]),
                DVector::from_vec(vec![0.6, 0.1]),
            ],
            thread: DVector::from_vec(vec![0.4]),
        };
        let joint = JointMF {
            comment: psi.comment.clone(),
            thread: psi.thread.clone(),
            words: vec![
                DVector::from_vec(vec![2.0 / 3.0, 0.0, 1.0 / 3.0]),
                DVector::from_vec(vec![0.0, 1.0, 0.0]),
            ],
        };
        let g = grad_estimate(&t, &p, &psi, &joint).unwrap();
        for b in Block::ALL {
            assert!(g.block(b).iter().all(|v| v.abs() < 1e-15), "{b:?}");
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let t = Thread::new("t", "s", vec![CommentBag::new("a", vec![(0, 1)])]).unwrap();
        let p = ModelParams::zeros(2, HiddenConfig::new(1, 1, Variant::Ddtm).unwrap());
        let psi = PosteriorMF::uniform(2, 1, 1);
        let joint = JointMF {
            comment: psi.comment.clone(),
            thread: psi.thread.clone(),
            words: vec![DVector::from_element(2, 0.5); 2],
        };
        assert!(grad_estimate(&t, &p, &psi, &joint).is_err());
    }
}
