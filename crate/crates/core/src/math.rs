//! Small numerical helpers shared by inference, sampling and evaluation.

use nalgebra::DVector;

/// Mean-field parameters are kept inside this margin of (0, 1).
pub const PROB_CLAMP: f64 = 1e-7;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// log(1 + e^x) without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let m = logits.max();
    let mut out = logits.map(|l| (l - m).exp());
    let z = out.sum();
    out /= z;
    out
}

pub fn log_softmax(logits: &DVector<f64>) -> DVector<f64> {
    let lse = logsumexp(logits.as_slice());
    logits.map(|l| l - lse)
}

/// Entropy (nats) of a Bernoulli with mean `p`.
#[inline]
pub fn bernoulli_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

/// Entropy (nats) of a categorical distribution.
pub fn categorical_entropy(p: &DVector<f64>) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// Log of the mean of `exp(xs)`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    logsumexp(xs) - (xs.len() as f64).ln()
}

/// 64-bit FNV-1a over a byte slice.
pub fn fnv64(bytes: &[u8]) -> u64 {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_symmetric_and_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn softplus_matches_naive() {
        for x in [-5.0, -0.3, 0.0, 0.7, 4.0] {
            assert!((softplus(x) - (1.0f64 + f64::exp(x)).ln()).abs() < 1e-14);
        }
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_handles_empty_and_large() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert!((logsumexp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn fnv_reference_vector() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
