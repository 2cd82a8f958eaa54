//! Model parameters, the energy function and the baseline/ablation variants.
//!
//! The energy of a thread with word counts `x_n` (length `D_n`), comment bits
//! `h_n` and thread bits `h_0` is
//!
//! ```text
//! E(x, h) = sum_n [ h_n'U x_n + x_n'a + D_n h_n'b + h_0'V x_n + D_n h_0'c ]
//!         + sum_{(n,m) in R} h_n'W h_m
//!         + h_root'b_start + sum_{leaves} h_n'b_stop
//! ```
//!
//! and the joint is `exp(E) / Z` with `Z` summing over ordered word sequences
//! of the observed lengths and all binary hidden configurations.

mod checkpoint;

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{CommentBag, Thread};
use crate::error::{Error, Result};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting,
    save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

/// Comment-level emission variance at initialization.
pub const INIT_COMMENT_EMISSION_VAR: f64 = 0.01;
/// Thread-level emission variance at initialization.
pub const INIT_THREAD_EMISSION_VAR: f64 = 0.0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Ddtm,
    /// Coupling potentials removed (`W = 0`).
    DdtmNocpl,
    /// Replicated softmax over comments: no coupling, no thread bits.
    RsComment,
    /// Replicated softmax over whole threads: thread bits only.
    RsThread,
    /// Word bias only.
    Unigram,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Ddtm,
        Variant::DdtmNocpl,
        Variant::RsComment,
        Variant::RsThread,
        Variant::Unigram,
    ];

    pub fn tag(self) -> u32 {
        match self {
            Variant::Ddtm => 0,
            Variant::DdtmNocpl => 1,
            Variant::RsComment => 2,
            Variant::RsThread => 3,
            Variant::Unigram => 4,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ddtm => "ddtm",
            Variant::DdtmNocpl => "ddtm-nocpl",
            Variant::RsComment => "rs-comment",
            Variant::RsThread => "rs-thread",
            Variant::Unigram => "unigram",
        }
    }

    /// Blocks held at zero under this variant.
    pub fn is_frozen(self, block: Block) -> bool {
        use Block::*;
        match self {
            Variant::Ddtm => false,
            Variant::DdtmNocpl => block == W,
            Variant::RsComment => matches!(block, W | V | C),
            Variant::RsThread => matches!(block, U | W | B | BStart | BStop),
            Variant::Unigram => block != A,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// Hidden layer sizes: `F_c` comment bits and `F_t` thread bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenConfig {
    pub comment_bits: usize,
    pub thread_bits: usize,
    pub variant: Variant,
}

impl HiddenConfig {
    pub fn new(comment_bits: usize, thread_bits: usize, variant: Variant) -> Result<Self> {
        let cfg = HiddenConfig {
            comment_bits,
            thread_bits,
            variant,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Splits a total bit budget the way each variant uses it: DDTM models
    /// divide it equally between comment and thread level, the comment-level
    /// baseline puts every bit on comments, the thread-level baseline every
    /// bit on the thread, and the unigram model has none.
    pub fn from_total_bits(bits: usize, variant: Variant) -> Result<Self> {
        let (fc, ft) = match variant {
            Variant::Ddtm | Variant::DdtmNocpl => (bits - bits / 2, bits / 2),
            Variant::RsComment => (bits, 0),
            Variant::RsThread => (0, bits),
            Variant::Unigram => (0, 0),
        };
        HiddenConfig::new(fc, ft, variant)
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.variant, Variant::Ddtm | Variant::DdtmNocpl)
            && (self.comment_bits == 0 || self.thread_bits == 0)
        {
            return Err(Error::Config(format!(
                "{} needs at least one comment bit and one thread bit",
                self.variant
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    A,
    B,
    C,
    BStart,
    BStop,
    U,
    V,
    W,
}

impl Block {
    /// Serialization order.
    pub const ALL: [Block; 8] = [
        Block::A,
        Block::B,
        Block::C,
        Block::BStart,
        Block::BStop,
        Block::U,
        Block::V,
        Block::W,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::A => "a",
            Block::B => "b",
            Block::C => "c",
            Block::BStart => "b_start",
            Block::BStop => "b_stop",
            Block::U => "U",
            Block::V => "V",
            Block::W => "W",
        }
    }
}

/// The eight parameter blocks. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlocks {
    /// Word bias, length `K`.
    pub a: DVector<f64>,
    /// Comment-bit bias (scaled by `D_n`), length `F_c`.
    pub b: DVector<f64>,
    /// Thread-bit bias (scaled by `D_n`), length `F_t`.
    pub c: DVector<f64>,
    pub b_start: DVector<f64>,
    pub b_stop: DVector<f64>,
    /// Comment emissions, `F_c x K`.
    pub u: DMatrix<f64>,
    /// Thread emissions, `F_t x K`.
    pub v: DMatrix<f64>,
    /// Parent-to-child coupling, `F_c x F_c`, rows index parent bits.
    pub w: DMatrix<f64>,
}

impl ParamBlocks {
    pub fn zeros(k: usize, fc: usize, ft: usize) -> Self {
        ParamBlocks {
            a: DVector::zeros(k),
            b: DVector::zeros(fc),
            c: DVector::zeros(ft),
            b_start: DVector::zeros(fc),
            b_stop: DVector::zeros(fc),
            u: DMatrix::zeros(fc, k),
            v: DMatrix::zeros(ft, k),
            w: DMatrix::zeros(fc, fc),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ParamBlocks::zeros(self.vocab_size(), self.comment_bits(), self.thread_bits())
    }

    pub fn vocab_size(&self) -> usize {
        self.a.len()
    }

    pub fn comment_bits(&self) -> usize {
        self.b.len()
    }

    pub fn thread_bits(&self) -> usize {
        self.c.len()
    }

    /// Column-major storage of one block.
    pub fn block(&self, block: Block) -> &[f64] {
        match block {
            Block::A => self.a.as_slice(),
            Block::B => self.b.as_slice(),
            Block::C => self.c.as_slice(),
            Block::BStart => self.b_start.as_slice(),
            Block::BStop => self.b_stop.as_slice(),
            Block::U => self.u.as_slice(),
            Block::V => self.v.as_slice(),
            Block::W => self.w.as_slice(),
        }
    }

    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        match block {
            Block::A => self.a.as_mut_slice(),
            Block::B => self.b.as_mut_slice(),
            Block::C => self.c.as_mut_slice(),
            Block::BStart => self.b_start.as_mut_slice(),
            Block::BStop => self.b_stop.as_mut_slice(),
            Block::U => self.u.as_mut_slice(),
            Block::V => self.v.as_mut_slice(),
            Block::W => self.w.as_mut_slice(),
        }
    }

    pub fn same_shape(&self, other: &ParamBlocks) -> bool {
        self.a.len() == other.a.len()
            && self.b.len() == other.b.len()
            && self.c.len() == other.c.len()
    }

    pub fn is_finite(&self) -> bool {
        Block::ALL
            .iter()
            .all(|&b| self.block(b).iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, s: f64) {
        for b in Block::ALL {
            self.block_mut(b).iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &ParamBlocks) {
        for b in Block::ALL {
            for (x, y) in self.block_mut(b).iter_mut().zip(other.block(b)) {
                *x += s * y;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        Block::ALL
            .iter()
            .flat_map(|&b| self.block(b).iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// `U x_n` for a sparse bag.
    pub fn comment_emission(&self, bag: &CommentBag) -> DVector<f64> {
        let mut out = DVector::zeros(self.comment_bits());
        for &(k, cnt) in &bag.counts {
            out.axpy(cnt as f64, &self.u.column(k as usize), 1.0);
        }
        out
    }

    /// `V x_n` for a sparse bag.
    pub fn thread_emission(&self, bag: &CommentBag) -> DVector<f64> {
        let mut out = DVector::zeros(self.thread_bits());
        for &(k, cnt) in &bag.counts {
            out.axpy(cnt as f64, &self.v.column(k as usize), 1.0);
        }
        out
    }

    /// `x_n'a`.
    pub fn word_bias(&self, bag: &CommentBag) -> f64 {
        bag.counts
            .iter()
            .map(|&(k, cnt)| cnt as f64 * self.a[k as usize])
            .sum()
    }
}

/// Parameters tagged with the variant they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub blocks: ParamBlocks,
}

impl Deref for ModelParams {
    type Target = ParamBlocks;

    fn deref(&self) -> &ParamBlocks {
        &self.blocks
    }
}

impl DerefMut for ModelParams {
    fn deref_mut(&mut self) -> &mut ParamBlocks {
        &mut self.blocks
    }
}

impl ModelParams {
    pub fn zeros(k: usize, cfg: HiddenConfig) -> Self {
        ModelParams {
            variant: cfg.variant,
            blocks: ParamBlocks::zeros(k, cfg.comment_bits, cfg.thread_bits),
        }
    }

    pub fn hidden_config(&self) -> HiddenConfig {
        HiddenConfig {
            comment_bits: self.comment_bits(),
            thread_bits: self.thread_bits(),
            variant: self.variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.blocks.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Checks that every word id of `thread` is inside the vocabulary.
    pub fn check_thread(&self, thread: &Thread) -> Result<()> {
        let k = self.vocab_size();
        for c in &thread.comments {
            if let Some(&(w, _)) = c.counts.last() {
                if w as usize >= k {
                    return Err(Error::Shape(format!(
                        "thread {}: word id {w} outside vocabulary of size {k}",
                        thread.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Binary assignment of every comment's bits and the thread bits.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenAssignment {
    pub comment_bits: Vec<DVector<f64>>,
    pub thread_bits: DVector<f64>,
}

impl HiddenAssignment {
    pub fn zeros(n: usize, fc: usize, ft: usize) -> Self {
        HiddenAssignment {
            comment_bits: vec![DVector::zeros(fc); n],
            thread_bits: DVector::zeros(ft),
        }
    }

    pub fn from_bools(comment_bits: &[Vec<bool>], thread_bits: &[bool]) -> Self {
        let to = |v: &[bool]| DVector::from_iterator(v.len(), v.iter().map(|&b| b as u8 as f64));
        HiddenAssignment {
            comment_bits: comment_bits.iter().map(|v| to(v)).collect(),
            thread_bits: to(thread_bits),
        }
    }

    /// Decodes configuration `index` of `2^(n*fc + ft)`: comment `n` bit `f`
    /// is bit `n*fc + f`, thread bit `f` is bit `n*fc_total + f`.
    pub fn from_index(index: u64, n: usize, fc: usize, ft: usize) -> Self {
        let bit = |i: usize| ((index >> i) & 1) as f64;
        HiddenAssignment {
            comment_bits: (0..n)
                .map(|c| DVector::from_fn(fc, |f, _| bit(c * fc + f)))
                .collect(),
            thread_bits: DVector::from_fn(ft, |f, _| bit(n * fc + f)),
        }
    }

    pub fn is_binary(&self) -> bool {
        self.comment_bits
            .iter()
            .chain(std::iter::once(&self.thread_bits))
            .all(|v| v.iter().all(|&x| x == 0.0 || x == 1.0))
    }
}

fn check_assignment(thread: &Thread, h: &HiddenAssignment, params: &ModelParams) -> Result<()> {
    params.check_thread(thread)?;
    if h.comment_bits.len() != thread.len() {
        return Err(Error::Shape(format!(
            "{} comment bit vectors for {} comments",
            h.comment_bits.len(),
            thread.len()
        )));
    }
    if h.comment_bits
        .iter()
        .any(|v| v.len() != params.comment_bits())
        || h.thread_bits.len() != params.thread_bits()
    {
        return Err(Error::Shape(format!(
            "hidden assignment does not match F_c={} F_t={}",
            params.comment_bits(),
            params.thread_bits()
        )));
    }
    if !h.is_binary() {
        return Err(Error::Shape("hidden assignment is not binary".into()));
    }
    Ok(())
}

/// Energy `E(x, h; theta)` of one thread configuration.
pub fn energy(thread: &Thread, h: &HiddenAssignment, params: &ModelParams) -> Result<f64> {
    check_assignment(thread, h, params)?;
    let h0 = &h.thread_bits;
    let mut e = 0.0;
    for (n, bag) in thread.comments.iter().enumerate() {
        let hn = &h.comment_bits[n];
        let d = bag.len() as f64;
        e += hn.dot(&params.comment_emission(bag));
        e += params.word_bias(bag);
        e += d * hn.dot(&params.b);
        e += h0.dot(&params.thread_emission(bag));
        e += d * h0.dot(&params.c);
        if bag.is_root() {
            e += hn.dot(&params.b_start);
        }
        if bag.is_leaf() {
            e += hn.dot(&params.b_stop);
        }
        if let Some(p) = bag.parent {
            e += h.comment_bits[p].dot(&(&params.w * hn));
        }
    }
    Ok(e)
}

/// Train-set unigram log-probabilities over `k` words.
///
/// If some word never occurs, half a pseudo-count is added to every word so
/// the result stays finite.
pub fn unigram_log_probs<'a>(
    threads: impl IntoIterator<Item = &'a Thread>,
    k: usize,
) -> DVector<f64> {
    let mut counts = DVector::<f64>::zeros(k);
    for t in threads {
        for c in &t.comments {
            for &(w, n) in &c.counts {
                counts[w as usize] += n as f64;
            }
        }
    }
    if counts.iter().any(|&c| c == 0.0) {
        counts.add_scalar_mut(0.5);
    }
    let total = counts.sum();
    counts.map(|c| (c / total).ln())
}

/// Gaussian emissions, zero coupling and biases, word bias from unigram
/// log-probabilities; then the variant's frozen blocks are zeroed.
pub fn init_params(
    cfg: HiddenConfig,
    unigram_log_probs: &DVector<f64>,
    seed: u64,
) -> Result<ModelParams> {
    cfg.validate()?;
    let k = unigram_log_probs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(k, cfg);
    let comment = Normal::new(0.0, INIT_COMMENT_EMISSION_VAR.sqrt()).expect("valid std");
    let thread = Normal::new(0.0, INIT_THREAD_EMISSION_VAR.sqrt()).expect("valid std");
    for i in 0..cfg.comment_bits {
        for j in 0..k {
            params.u[(i, j)] = comment.sample(&mut rng);
        }
    }
    for i in 0..cfg.thread_bits {
        for j in 0..k {
            params.v[(i, j)] = thread.sample(&mut rng);
        }
    }
    params.a.copy_from(unigram_log_probs);
    Ok(apply_variant(&params, cfg.variant))
}

/// Copy of `params` retagged as `variant` with its frozen blocks zeroed.
pub fn apply_variant(params: &ModelParams, variant: Variant) -> ModelParams {
    let mut out = params.clone();
    out.variant = variant;
    for b in Block::ALL {
        if variant.is_frozen(b) {
            out.block_mut(b).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(Variant::from_tag(v.tag()), Some(v));
        }
        assert_eq!("ddtm_nocpl".parse::<Variant>().unwrap(), Variant::DdtmNocpl);
        assert!("lda".parse::<Variant>().is_err());
    }

    #[test]
    fn bit_budget_split() {
        let c = HiddenConfig::from_total_bits(64, Variant::Ddtm).unwrap();
        assert_eq!((c.comment_bits, c.thread_bits), (32, 32));
        let c = HiddenConfig::from_total_bits(64, Variant::RsComment).unwrap();
        assert_eq!((c.comment_bits, c.thread_bits), (64, 0));
        assert!(HiddenConfig::new(0, 4, Variant::Ddtm).is_err());
        assert!(HiddenConfig::from_total_bits(1, Variant::Ddtm).is_err());
    }

    #[test]
    fn from_index_layout() {
        let h = HiddenAssignment::from_index(0b1_10_01, 2, 2, 1);
        assert_eq!(h.comment_bits[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(h.comment_bits[1].as_slice(), &[0.0, 1.0]);
        assert_eq!(h.thread_bits.as_slice(), &[1.0]);
    }

    #[test]
    fn unigram_log_probs_normalize() {
        let mut bag = CommentBag::new("c", vec![(0, 3), (2, 1)]);
        bag.parent = None;
        let t = Thread::new("t", "s", vec![bag]).unwrap();
        let lp = unigram_log_probs([&t], 3);
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(lp[1].is_finite());
        let lp = unigram_log_probs([&t], 3).map(f64::exp);
        assert!(lp[0] > lp[2] && lp[2] > lp[1]);
    }
}
