//! Mean-field inference.
//!
//! Two fully factorized approximations are fitted per thread:
//!
//! * the posterior family `q_E(h; psi)` lower-bounds the marginal energy
//!   `log sum_h exp E(x, h)`;
//! * the joint family `q_Z(x, h; phi, gamma)` lower-bounds `log Z`. Every word
//!   of comment `n` is drawn from the same categorical `gamma_n`.
//!
//! Both are fitted by coordinate ascent. Comment bits are swept leaves-to-root
//! and then root-to-leaves; the thread bits are refreshed once per sweep after
//! the downward pass; the word distributions of the joint family are all
//! refreshed at the end of the sweep. Every single update is the exact
//! maximizer of its bound with the other coordinates held fixed.

mod batch;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::corpus::Thread;
use crate::error::{Error, Result};
use crate::math::{bernoulli_entropy, categorical_entropy, clamp_prob, sigmoid, softmax};
use crate::model::ModelParams;

pub use batch::{fit_joint_batch, fit_posterior_batch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfSchedule {
    /// Upper bound on upward-downward sweeps.
    pub max_sweeps: usize,
    /// Stop once no parameter moved by more than this in a sweep.
    pub tolerance: f64,
    /// Initialize the joint family's bits from the fitted posterior.
    pub warm_start: bool,
}

impl Default for MfSchedule {
    fn default() -> Self {
        MfSchedule {
            max_sweeps: 10,
            tolerance: 1e-4,
            warm_start: true,
        }
    }
}

impl MfSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 || !(self.tolerance > 0.0) {
            return Err(Error::Config(
                "mean-field schedule needs max_sweeps >= 1 and tolerance > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Bernoulli means of the posterior family.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMF {
    pub comment: Vec<DVector<f64>>,
    pub thread: DVector<f64>,
}

impl PosteriorMF {
    pub fn uniform(n: usize, fc: usize, ft: usize) -> Self {
        PosteriorMF {
            comment: vec![DVector::from_element(fc, 0.5); n],
            thread: DVector::from_element(ft, 0.5),
        }
    }
}

/// Bernoulli means and per-comment word distributions of the joint family.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMF {
    pub comment: Vec<DVector<f64>>,
    pub thread: DVector<f64>,
    pub words: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FitStats {
    pub sweeps: usize,
    /// Number of single-comment bit-vector updates performed.
    pub updates: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFit {
    pub state: PosteriorMF,
    /// Lower bound on the marginal energy.
    pub bound: f64,
    pub stats: FitStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub state: JointMF,
    /// Lower bound on `log Z`.
    pub bound: f64,
    pub stats: FitStats,
}

fn max_abs_change(old: &DVector<f64>, new: &DVector<f64>) -> f64 {
    old.iter()
        .zip(new.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn logistic(pre: DVector<f64>) -> DVector<f64> {
    pre.map(|v| clamp_prob(sigmoid(v)))
}

/// Leaves-to-root update order: by height, ties by index.
pub fn upward_order(thread: &Thread) -> Vec<usize> {
    let heights = thread.heights();
    let mut order: Vec<usize> = (0..thread.len()).collect();
    order.sort_by_key(|&n| (heights[n], n));
    order
}

/// Per-thread quantities that stay fixed while the variational parameters move.
pub struct MeanField<'a> {
    thread: &'a Thread,
    params: &'a ModelParams,
    lengths: Vec<f64>,
    /// `U x_n`.
    emission: Vec<DVector<f64>>,
    /// `D_n b + [root] b_start + [leaf] b_stop`.
    bias: Vec<DVector<f64>>,
    /// `V sum_n x_n`.
    thread_emission: DVector<f64>,
    /// `c sum_n D_n`.
    thread_bias: DVector<f64>,
    /// `sum_n x_n'a`.
    word_bias: f64,
    order: Vec<usize>,
}

impl<'a> MeanField<'a> {
    pub fn new(thread: &'a Thread, params: &'a ModelParams) -> Result<Self> {
        params.check_thread(thread)?;
        let fc = params.comment_bits();
        let ft = params.thread_bits();
        let lengths: Vec<f64> = thread.comments.iter().map(|c| c.len() as f64).collect();
        let emission = thread
            .comments
            .iter()
            .map(|c| params.comment_emission(c))
            .collect();
        let bias = thread
            .comments
            .iter()
            .zip(&lengths)
            .map(|(c, &d)| {
                let mut v = &params.b * d;
                if c.is_root() {
                    v += &params.b_start;
                }
                if c.is_leaf() {
                    v += &params.b_stop;
                }
                debug_assert_eq!(v.len(), fc);
                v
            })
            .collect();
        let mut thread_emission = DVector::zeros(ft);
        for c in &thread.comments {
            thread_emission += params.thread_emission(c);
        }
        let total: f64 = lengths.iter().sum();
        Ok(MeanField {
            thread,
            params,
            thread_bias: &params.c * total,
            word_bias: thread.comments.iter().map(|c| params.word_bias(c)).sum(),
            lengths,
            emission,
            bias,
            thread_emission,
            order: upward_order(thread),
        })
    }

    pub fn thread(&self) -> &Thread {
        self.thread
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    pub fn upward_order(&self) -> &[usize] {
        &self.order
    }

    fn dims(&self) -> (usize, usize, usize) {
        (
            self.thread.len(),
            self.params.comment_bits(),
            self.params.thread_bits(),
        )
    }

    /// `sum_{m in C_n} W q_m + W' q_{P_n}`.
    fn neighbor_field(&self, q: &[DVector<f64>], n: usize) -> DVector<f64> {
        let bag = &self.thread.comments[n];
        let mut child_sum = DVector::zeros(self.params.comment_bits());
        for &m in &bag.children {
            child_sum += &q[m];
        }
        let mut field = &self.params.w * child_sum;
        if let Some(p) = bag.parent {
            field += self.params.w.tr_mul(&q[p]);
        }
        field
    }

    fn coupling(&self, q: &[DVector<f64>]) -> f64 {
        self.thread
            .comments
            .iter()
            .enumerate()
            .filter_map(|(m, c)| c.parent.map(|p| q[p].dot(&(&self.params.w * &q[m]))))
            .sum()
    }

    pub fn uniform_posterior(&self) -> PosteriorMF {
        let (n, fc, ft) = self.dims();
        PosteriorMF::uniform(n, fc, ft)
    }

    /// Posterior update of comment `n`; returns the largest change.
    pub fn update_psi(&self, st: &mut PosteriorMF, n: usize) -> f64 {
        let pre = &self.emission[n] + &self.bias[n] + self.neighbor_field(&st.comment, n);
        let new = logistic(pre);
        let delta = max_abs_change(&st.comment[n], &new);
        st.comment[n] = new;
        delta
    }

    /// Posterior update of the thread bits.
    pub fn update_psi0(&self, st: &mut PosteriorMF) -> f64 {
        let new = logistic(&self.thread_emission + &self.thread_bias);
        let delta = max_abs_change(&st.thread, &new);
        st.thread = new;
        delta
    }

    /// Joint-family update of comment `n`'s bits.
    pub fn update_phi(&self, st: &mut JointMF, n: usize) -> f64 {
        let d = self.lengths[n];
        let mut pre = &self.bias[n] + self.neighbor_field(&st.comment, n);
        if d > 0.0 {
            pre += (&self.params.u * &st.words[n]) * d;
        }
        let new = logistic(pre);
        let delta = max_abs_change(&st.comment[n], &new);
        st.comment[n] = new;
        delta
    }

    /// Joint-family update of the thread bits.
    pub fn update_phi0(&self, st: &mut JointMF) -> f64 {
        let mut pre = self.thread_bias.clone();
        for (gamma, &d) in st.words.iter().zip(&self.lengths) {
            if d > 0.0 {
                pre += (&self.params.v * gamma) * d;
            }
        }
        let new = logistic(pre);
        let delta = max_abs_change(&st.thread, &new);
        st.thread = new;
        delta
    }

    /// Word distribution of comment `n`: `softmax(U'phi_n + V'phi_0 + a)`.
    pub fn update_gamma(&self, st: &mut JointMF, n: usize) -> f64 {
        let logits = self.params.u.tr_mul(&st.comment[n])
            + self.params.v.tr_mul(&st.thread)
            + &self.params.a;
        let new = softmax(&logits);
        let delta = max_abs_change(&st.words[n], &new);
        st.words[n] = new;
        delta
    }

    /// Lower bound on the marginal energy at `st`.
    pub fn posterior_bound(&self, st: &PosteriorMF) -> f64 {
        let mut e = self.word_bias + st.thread.dot(&(&self.thread_emission + &self.thread_bias));
        for n in 0..self.thread.len() {
            e += st.comment[n].dot(&(&self.emission[n] + &self.bias[n]));
        }
        e += self.coupling(&st.comment);
        e + bits_entropy(&st.comment, &st.thread)
    }

    /// Lower bound on `log Z` at `st`.
    pub fn joint_bound(&self, st: &JointMF) -> f64 {
        let p = self.params;
        let mut e = st.thread.dot(&self.thread_bias);
        for n in 0..self.thread.len() {
            let d = self.lengths[n];
            e += st.comment[n].dot(&self.bias[n]);
            if d > 0.0 {
                let g = &st.words[n];
                e += d
                    * (st.comment[n].dot(&(&p.u * g))
                        + st.thread.dot(&(&p.v * g))
                        + p.a.dot(g)
                        + categorical_entropy(g));
            }
        }
        e += self.coupling(&st.comment);
        e + bits_entropy(&st.comment, &st.thread)
    }

    pub fn fit_posterior(&self, schedule: &MfSchedule, init: Option<&PosteriorMF>) -> PosteriorFit {
        let mut st = init.cloned().unwrap_or_else(|| self.uniform_posterior());
        let mut stats = FitStats::default();
        while stats.sweeps < schedule.max_sweeps {
            stats.sweeps += 1;
            let mut delta: f64 = 0.0;
            for &n in self.order.iter().chain(self.order.iter().rev()) {
                delta = delta.max(self.update_psi(&mut st, n));
                stats.updates += 1;
            }
            delta = delta.max(self.update_psi0(&mut st));
            if delta < schedule.tolerance {
                stats.converged = true;
                break;
            }
        }
        PosteriorFit {
            bound: self.posterior_bound(&st),
            state: st,
            stats,
        }
    }

    /// Initial joint state: bits from `warm` (or 0.5), word distributions from
    /// their coordinate update given those bits.
    pub fn init_joint(&self, warm: Option<&PosteriorMF>) -> JointMF {
        let (n, fc, ft) = self.dims();
        let (comment, thread) = match warm {
            Some(w) => (w.comment.clone(), w.thread.clone()),
            None => (
                vec![DVector::from_element(fc, 0.5); n],
                DVector::from_element(ft, 0.5),
            ),
        };
        let k = self.params.vocab_size();
        let mut st = JointMF {
            comment,
            thread,
            words: vec![DVector::from_element(k, 1.0 / k as f64); n],
        };
        for i in 0..n {
            self.update_gamma(&mut st, i);
        }
        st
    }

    pub fn fit_joint(&self, schedule: &MfSchedule, warm: Option<&PosteriorMF>) -> JointFit {
        let mut st = self.init_joint(warm);
        let mut stats = FitStats::default();
        while stats.sweeps < schedule.max_sweeps {
            stats.sweeps += 1;
            let mut delta: f64 = 0.0;
            for &n in self.order.iter().chain(self.order.iter().rev()) {
                delta = delta.max(self.update_phi(&mut st, n));
                stats.updates += 1;
            }
            delta = delta.max(self.update_phi0(&mut st));
            for n in 0..self.thread.len() {
                delta = delta.max(self.update_gamma(&mut st, n));
            }
            if delta < schedule.tolerance {
                stats.converged = true;
                break;
            }
        }
        JointFit {
            bound: self.joint_bound(&st),
            state: st,
            stats,
        }
    }
}

fn bits_entropy(comment: &[DVector<f64>], thread: &DVector<f64>) -> f64 {
    comment
        .iter()
        .chain(std::iter::once(thread))
        .flat_map(|v| v.iter())
        .map(|&p| bernoulli_entropy(p))
        .sum()
}

/// Fits the posterior family from `psi = 0.5`.
pub fn fit_posterior(
    thread: &Thread,
    params: &ModelParams,
    schedule: &MfSchedule,
) -> Result<PosteriorFit> {
    Ok(MeanField::new(thread, params)?.fit_posterior(schedule, None))
}

/// Fits the joint family, warm-started from `warm` when given.
pub fn fit_joint(
    thread: &Thread,
    params: &ModelParams,
    schedule: &MfSchedule,
    warm: Option<&PosteriorMF>,
) -> Result<JointFit> {
    Ok(MeanField::new(thread, params)?.fit_joint(schedule, warm))
}

/// `(bound on log Z, bound on the marginal energy)` at the given states.
pub fn bound_values(
    thread: &Thread,
    params: &ModelParams,
    posterior: &PosteriorMF,
    joint: &JointMF,
) -> Result<(f64, f64)> {
    let mf = MeanField::new(thread, params)?;
    Ok((mf.joint_bound(joint), mf.posterior_bound(posterior)))
}

/// Both fits for one thread, the joint one warm-started per `schedule`.
#[derive(Debug, Clone)]
pub struct ThreadFit {
    pub posterior: PosteriorFit,
    pub joint: JointFit,
}

impl ThreadFit {
    /// Difference of the two bounds. Not itself a bound on `log p(x)`.
    pub fn approx_log_likelihood(&self) -> f64 {
        self.posterior.bound - self.joint.bound
    }
}

pub fn fit_thread(
    thread: &Thread,
    params: &ModelParams,
    schedule: &MfSchedule,
    posterior_init: Option<&PosteriorMF>,
) -> Result<ThreadFit> {
    let mf = MeanField::new(thread, params)?;
    let posterior = mf.fit_posterior(schedule, posterior_init);
    let warm = schedule.warm_start.then_some(&posterior.state);
    let joint = mf.fit_joint(schedule, warm);
    Ok(ThreadFit { posterior, joint })
}

/// `elbo_E - elbo_Z` for one thread.
pub fn approx_log_likelihood(
    thread: &Thread,
    params: &ModelParams,
    schedule: &MfSchedule,
) -> Result<f64> {
    Ok(fit_thread(thread, params, schedule, None)?.approx_log_likelihood())
}
