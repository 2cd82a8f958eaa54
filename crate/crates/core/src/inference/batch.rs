//! Mean-field fits of many threads at once.
//!
//! Comments of equal height are never neighbors, so the upward pass can
//! update a whole height level in one step, and likewise the downward pass.
//! Levels are processed across every thread of the batch together, with the
//! emission products done as dense matrix products over all comments of the
//! level. Each thread stops on its own convergence test, so the result equals
//! fitting each thread alone.

use nalgebra::{DMatrix, DVector};

use super::{FitStats, JointFit, JointMF, MeanField, MfSchedule, PosteriorFit, PosteriorMF};
use crate::corpus::Thread;
use crate::error::Result;
use crate::math::{clamp_prob, sigmoid};
use crate::model::ModelParams;

struct Layout<'a> {
    fields: Vec<MeanField<'a>>,
    /// Global column of comment `n` of thread `t` is `offset[t] + n`.
    offset: Vec<usize>,
    /// `(thread, global column)` pairs of every comment, grouped by height.
    levels: Vec<Vec<(usize, usize)>>,
    owner: Vec<usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl<'a> Layout<'a> {
    fn new(threads: &'a [Thread], params: &'a ModelParams) -> Result<Self> {
        let fields = threads
            .iter()
            .map(|t| MeanField::new(t, params))
            .collect::<Result<Vec<_>>>()?;
        let mut offset = Vec::with_capacity(threads.len());
        let (mut levels, mut owner, mut parent, mut children) = (
            Vec::<Vec<(usize, usize)>>::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
        );
        let mut next = 0;
        for (t, thread) in threads.iter().enumerate() {
            offset.push(next);
            for (n, h) in thread.heights().into_iter().enumerate() {
                if levels.len() <= h {
                    levels.resize(h + 1, Vec::new());
                }
                levels[h].push((t, next + n));
                let c = &thread.comments[n];
                owner.push(t);
                parent.push(c.parent.map(|p| next + p));
                children.push(c.children.iter().map(|&m| next + m).collect());
            }
            next += thread.len();
        }
        Ok(Layout {
            fields,
            offset,
            levels,
            owner,
            parent,
            children,
        })
    }

    fn columns(&self) -> usize {
        self.owner.len()
    }

    /// Active comments of level `h`.
    fn level(&self, h: usize, active: &[bool]) -> Vec<usize> {
        self.levels[h]
            .iter()
            .filter(|(t, _)| active[*t])
            .map(|&(_, g)| g)
            .collect()
    }

    fn local(&self, g: usize) -> (usize, usize) {
        let t = self.owner[g];
        (t, g - self.offset[t])
    }

    /// `W sum_children q + W' q_parent` for each column in `cols`.
    fn neighbor_fields(&self, q: &DMatrix<f64>, w: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
        let f = q.nrows();
        let mut child_sum = DMatrix::zeros(f, cols.len());
        let mut parent = DMatrix::zeros(f, cols.len());
        for (j, &g) in cols.iter().enumerate() {
            for &m in &self.children[g] {
                let mut col = child_sum.column_mut(j);
                col += q.column(m);
            }
            if let Some(p) = self.parent[g] {
                parent.set_column(j, &q.column(p));
            }
        }
        w * child_sum + w.tr_mul(&parent)
    }

    /// Applies the logistic to `pre` and stores it in `q`, recording per-thread changes.
    fn store(&self, q: &mut DMatrix<f64>, cols: &[usize], pre: DMatrix<f64>, delta: &mut [f64]) {
        for (j, &g) in cols.iter().enumerate() {
            let t = self.owner[g];
            for i in 0..q.nrows() {
                let new = clamp_prob(sigmoid(pre[(i, j)]));
                delta[t] = delta[t].max((q[(i, g)] - new).abs());
                q[(i, g)] = new;
            }
        }
    }

    fn pack(&self, per_thread: impl Fn(usize) -> Vec<DVector<f64>>, rows: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(rows, self.columns());
        for t in 0..self.fields.len() {
            for (n, v) in per_thread(t).into_iter().enumerate() {
                q.set_column(self.offset[t] + n, &v);
            }
        }
        q
    }

    fn unpack(&self, q: &DMatrix<f64>, t: usize) -> Vec<DVector<f64>> {
        let n = self.fields[t].thread().len();
        (0..n)
            .map(|i| q.column(self.offset[t] + i).into_owned())
            .collect()
    }

    fn sweep_order(&self) -> Vec<usize> {
        let h = self.levels.len();
        (0..h).chain((0..h).rev()).collect()
    }
}

fn finish(stats: &mut FitStats, delta: f64, tolerance: f64, active: &mut bool) {
    if delta < tolerance {
        stats.converged = true;
        *active = false;
    }
}

/// [`MeanField::fit_posterior`] for every thread, batched by level.
pub fn fit_posterior_batch(
    threads: &[Thread],
    params: &ModelParams,
    schedule: &MfSchedule,
    inits: Option<&[PosteriorMF]>,
) -> Result<Vec<PosteriorFit>> {
    let lay = Layout::new(threads, params)?;
    let nt = threads.len();
    let fc = params.comment_bits();
    let init = |t: usize| -> PosteriorMF {
        inits.map_or_else(|| lay.fields[t].uniform_posterior(), |v| v[t].clone())
    };
    let mut q = lay.pack(|t| init(t).comment, fc);
    let mut q0: Vec<DVector<f64>> = (0..nt).map(|t| init(t).thread).collect();
    let fixed = lay.pack(
        |t| {
            let f = &lay.fields[t];
            (0..f.thread().len())
                .map(|n| &f.emission[n] + &f.bias[n])
                .collect()
        },
        fc,
    );
    let mut stats = vec![FitStats::default(); nt];
    let mut active = vec![true; nt];
    for _ in 0..schedule.max_sweeps {
        if !active.iter().any(|&a| a) {
            break;
        }
        let mut delta = vec![0.0; nt];
        for h in lay.sweep_order() {
            let cols = lay.level(h, &active);
            if cols.is_empty() {
                continue;
            }
            let mut pre = lay.neighbor_fields(&q, &params.w, &cols);
            for (j, &g) in cols.iter().enumerate() {
                let mut c = pre.column_mut(j);
                c += fixed.column(g);
                stats[lay.owner[g]].updates += 1;
            }
            lay.store(&mut q, &cols, pre, &mut delta);
        }
        for t in 0..nt {
            if !active[t] {
                continue;
            }
            let mut st = PosteriorMF {
                comment: Vec::new(),
                thread: q0[t].clone(),
            };
            delta[t] = delta[t].max(lay.fields[t].update_psi0(&mut st));
            q0[t] = st.thread;
            stats[t].sweeps += 1;
            finish(&mut stats[t], delta[t], schedule.tolerance, &mut active[t]);
        }
    }
    Ok((0..nt)
        .map(|t| {
            let state = PosteriorMF {
                comment: lay.unpack(&q, t),
                thread: q0[t].clone(),
            };
            PosteriorFit {
                bound: lay.fields[t].posterior_bound(&state),
                state,
                stats: stats[t],
            }
        })
        .collect())
}

/// [`MeanField::fit_joint`] for every thread, batched by level.
pub fn fit_joint_batch(
    threads: &[Thread],
    params: &ModelParams,
    schedule: &MfSchedule,
    warm: Option<&[PosteriorMF]>,
) -> Result<Vec<JointFit>> {
    let lay = Layout::new(threads, params)?;
    let nt = threads.len();
    let (fc, k) = (params.comment_bits(), params.vocab_size());
    let starts: Vec<JointMF> = (0..nt)
        .map(|t| lay.fields[t].init_joint(warm.map(|w| &w[t])))
        .collect();
    let mut q = lay.pack(|t| starts[t].comment.clone(), fc);
    let mut gamma = lay.pack(|t| starts[t].words.clone(), k);
    let mut q0: Vec<DVector<f64>> = starts.iter().map(|s| s.thread.clone()).collect();
    let lengths: Vec<f64> = (0..lay.columns())
        .map(|g| {
            let (t, n) = lay.local(g);
            lay.fields[t].lengths[n]
        })
        .collect();
    let bias = lay.pack(|t| lay.fields[t].bias.clone(), fc);
    let mut stats = vec![FitStats::default(); nt];
    let mut active = vec![true; nt];
    for _ in 0..schedule.max_sweeps {
        if !active.iter().any(|&a| a) {
            break;
        }
        let mut delta = vec![0.0; nt];
        for h in lay.sweep_order() {
            let cols = lay.level(h, &active);
            if cols.is_empty() {
                continue;
            }
            let mut pre = lay.neighbor_fields(&q, &params.w, &cols);
            let g_level = DMatrix::from_fn(k, cols.len(), |i, j| gamma[(i, cols[j])]);
            let emission = &params.u * g_level;
            for (j, &g) in cols.iter().enumerate() {
                let mut c = pre.column_mut(j);
                c += bias.column(g);
                if lengths[g] > 0.0 {
                    c += emission.column(j) * lengths[g];
                }
                stats[lay.owner[g]].updates += 1;
            }
            lay.store(&mut q, &cols, pre, &mut delta);
        }
        for t in (0..nt).filter(|&t| active[t]) {
            let mut st = JointMF {
                comment: Vec::new(),
                thread: q0[t].clone(),
                words: lay.unpack(&gamma, t),
            };
            delta[t] = delta[t].max(lay.fields[t].update_phi0(&mut st));
            q0[t] = st.thread;
        }
        let cols: Vec<usize> = (0..lay.columns())
            .filter(|&g| active[lay.owner[g]])
            .collect();
        if !cols.is_empty() {
            let phi = DMatrix::from_fn(fc, cols.len(), |i, j| q[(i, cols[j])]);
            let mut logits = params.u.tr_mul(&phi);
            for (j, &g) in cols.iter().enumerate() {
                let shift = params.v.tr_mul(&q0[lay.owner[g]]) + &params.a;
                let mut col = logits.column_mut(j);
                col += shift;
                let m = col.max();
                col.apply(|v| *v = (*v - m).exp());
                let z = col.sum();
                col /= z;
                let t = lay.owner[g];
                for i in 0..k {
                    delta[t] = delta[t].max((gamma[(i, g)] - col[i]).abs());
                }
                gamma.set_column(g, &col);
            }
        }
        for t in 0..nt {
            if !active[t] {
                continue;
            }
            stats[t].sweeps += 1;
            finish(&mut stats[t], delta[t], schedule.tolerance, &mut active[t]);
        }
    }
    Ok((0..nt)
        .map(|t| {
            let state = JointMF {
                comment: lay.unpack(&q, t),
                thread: q0[t].clone(),
                words: lay.unpack(&gamma, t),
            };
            JointFit {
                bound: lay.fields[t].joint_bound(&state),
                state,
                stats: stats[t],
            }
        })
        .collect())
}
