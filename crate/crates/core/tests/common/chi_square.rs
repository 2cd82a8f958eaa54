//! Pearson chi-square tests of sampler draws against enumerated conditionals.

use ddtm::model::ModelParams;
use ddtm::sampling::{GibbsSampler, GibbsState};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const SAMPLES: usize = 100_000;

/// Pearson goodness of fit, pooling categories whose expected count is below 5.
pub fn chi_square_p(observed: &[usize], probs: &[f64]) -> f64 {
    let n: usize = observed.iter().sum();
    let (mut stat, mut dof) = (0.0, 0usize);
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * n as f64;
        if e < 5.0 {
            pool_o += o as f64;
            pool_e += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            dof += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e.max(1e-300);
        dof += 1;
    }
    if dof < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((dof - 1) as f64).unwrap().cdf(stat)
}

pub fn normalize(log_w: &[f64]) -> Vec<f64> {
    let z = super::lse(log_w);
    log_w.iter().map(|l| (l - z).exp()).collect()
}

fn dense(words: &[Vec<u32>], k: usize) -> Vec<Vec<f64>> {
    words
        .iter()
        .map(|ws| {
            let mut x = vec![0.0; k];
            ws.iter().for_each(|&w| x[w as usize] += 1.0);
            x
        })
        .collect()
}

fn bits(v: &nalgebra::DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn state_energy(p: &ModelParams, parents: &[Option<usize>], st: &GibbsState) -> f64 {
    let h: Vec<Vec<f64>> = st.h.comment_bits.iter().map(bits).collect();
    super::energy(
        p,
        parents,
        &dense(&st.words, p.vocab_size()),
        &h,
        &bits(&st.h.thread_bits),
    )
}

pub fn index_of(v: &nalgebra::DVector<f64>) -> usize {
    v.iter().enumerate().map(|(f, &b)| (b as usize) << f).sum()
}

fn set_bits(v: &mut nalgebra::DVector<f64>, index: usize) {
    for (f, b) in v.iter_mut().enumerate() {
        *b = ((index >> f) & 1) as f64;
    }
}

pub enum Block {
    Words(usize),
    Comment(usize),
    Thread,
}

/// Enumerated conditional of one block and the p-value of the sampler's draws.
pub fn block_p_value<R: Rng>(
    p: &ModelParams,
    s: &GibbsSampler,
    st: &GibbsState,
    block: &Block,
    rng: &mut R,
) -> f64 {
    let parents = s.shape().parents.clone();
    let k = p.vocab_size();
    let (categories, set): (usize, Box<dyn Fn(&mut GibbsState, usize)>) = match *block {
        Block::Words(n) => {
            let d = s.shape().lengths[n];
            (
                k.pow(d as u32),
                Box::new(move |st: &mut GibbsState, mut i: usize| {
                    for w in st.words[n].iter_mut() {
                        *w = (i % k) as u32;
                        i /= k;
                    }
                }),
            )
        }
        Block::Comment(n) => (
            1 << p.comment_bits(),
            Box::new(move |st: &mut GibbsState, i| set_bits(&mut st.h.comment_bits[n], i)),
        ),
        Block::Thread => (
            1 << p.thread_bits(),
            Box::new(|st: &mut GibbsState, i| set_bits(&mut st.h.thread_bits, i)),
        ),
    };
    let log_w: Vec<f64> = (0..categories)
        .map(|i| {
            let mut alt = st.clone();
            set(&mut alt, i);
            state_energy(p, &parents, &alt)
        })
        .collect();
    let probs = normalize(&log_w);
    let mut observed = vec![0usize; categories];
    for _ in 0..SAMPLES {
        let mut draw = st.clone();
        let i = match *block {
            Block::Words(n) => {
                s.sample_words(&mut draw, n, 1.0, rng);
                draw.words[n]
                    .iter()
                    .rev()
                    .fold(0usize, |acc, &w| acc * k + w as usize)
            }
            Block::Comment(n) => {
                s.sample_comment_bits(&mut draw, n, 1.0, rng);
                index_of(&draw.h.comment_bits[n])
            }
            Block::Thread => {
                s.sample_thread_bits(&mut draw, 1.0, rng);
                index_of(&draw.h.thread_bits)
            }
        };
        observed[i] += 1;
    }
    chi_square_p(&observed, &probs)
}
