//! Linear-chain CRF over the two case tags.
//!
//! The chain is scored as
//! `s(X, Y) = sum_i A[y_i, y_{i+1}] + sum_i P[i, y_i]`
//! where `P` holds per-character emission scores and `A` transition scores
//! over the augmented tag set {U, L, START, END}. The boundary terms use the
//! explicit START and END tags; transitions into START and out of END are
//! pinned at -inf and never learned or selected.
//!
//! `log_partition` runs the forward algorithm in log space, `viterbi` the
//! max-product analogue, and `brute_force` enumerates all `2^T` label
//! sequences as an exact oracle for both.

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::tensor::{log_sum_exp, Tensor};

/// Number of real tags (U, L).
pub const NUM_TAGS: usize = 2;
/// Index of the START boundary tag in the transition matrix.
pub const START: usize = 2;
/// Index of the END boundary tag in the transition matrix.
pub const END: usize = 3;
/// Side length of the augmented transition matrix.
pub const NUM_AUG: usize = 4;

/// Candidate order for argmax scans: L first, then U. Later entries replace
/// earlier ones only on a strictly greater score, so ties resolve to L.
const PREFER_L: [usize; NUM_TAGS] = [1, 0];

/// Transition scores `A` over {U, L, START, END}. Rows index the source
/// tag, columns the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub transitions: Tensor,
}

impl CrfParams {
    /// Fresh parameters: learned entries zero, illegal moves guarded.
    pub fn new() -> CrfParams {
        let mut t = Tensor::zeros(&[NUM_AUG, NUM_AUG]);
        for i in 0..NUM_AUG {
            t.set(i, START, f64::NEG_INFINITY);
            t.set(END, i, f64::NEG_INFINITY);
        }
        CrfParams { transitions: t }
    }

    pub fn from_transitions(transitions: Tensor) -> CrfParams {
        assert_eq!(transitions.shape(), &[NUM_AUG, NUM_AUG]);
        CrfParams { transitions }
    }

    #[inline]
    fn a(&self, from: usize, to: usize) -> f64 {
        self.transitions.at(from, to)
    }
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams::new()
    }
}

/// One scoring problem: the `T x 2` emission matrix produced by the encoder.
#[derive(Debug, Clone)]
pub struct CrfInstance {
    pub emissions: Tensor,
}

impl CrfInstance {
    pub fn new(emissions: Tensor) -> CrfInstance {
        assert_eq!(emissions.shape().len(), 2);
        assert_eq!(emissions.cols(), NUM_TAGS);
        assert!(emissions.rows() >= 1, "CRF instance needs T >= 1");
        CrfInstance { emissions }
    }

    pub fn len(&self) -> usize {
        self.emissions.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 1 by construction
    }

    #[inline]
    fn p(&self, t: usize, tag: usize) -> f64 {
        self.emissions.at(t, tag)
    }
}

/// The potential score `s(X, Y)` of one label sequence, boundary
/// transitions included.
pub fn sequence_score(inst: &CrfInstance, params: &CrfParams, y: &[Label]) -> Result<f64> {
    let t_len = inst.len();
    if y.len() != t_len {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: t_len,
        });
    }
    let mut s = params.a(START, y[0].index()) + inst.p(0, y[0].index());
    for t in 1..t_len {
        s += params.a(y[t - 1].index(), y[t].index()) + inst.p(t, y[t].index());
    }
    s += params.a(y[t_len - 1].index(), END);
    Ok(s)
}

/// log of the partition function: the log-sum-exp of `s(X, y')` over all
/// `2^T` label sequences, computed in `O(T * S^2)` by the forward
/// recursion in log space.
pub fn log_partition(inst: &CrfInstance, params: &CrfParams) -> f64 {
    let t_len = inst.len();
    let mut alpha = [0.0f64; NUM_TAGS];
    for (j, a) in alpha.iter_mut().enumerate() {
        *a = params.a(START, j) + inst.p(0, j);
    }
    let mut scratch = [0.0f64; NUM_TAGS];
    for t in 1..t_len {
        let mut next = [0.0f64; NUM_TAGS];
        for (j, nj) in next.iter_mut().enumerate() {
            for i in 0..NUM_TAGS {
                scratch[i] = alpha[i] + params.a(i, j);
            }
            *nj = inst.p(t, j) + log_sum_exp(&scratch).unwrap();
        }
        alpha = next;
    }
    for (j, s) in scratch.iter_mut().enumerate() {
        *s = alpha[j] + params.a(j, END);
    }
    log_sum_exp(&scratch).unwrap()
}

/// Negative log-likelihood `logZ - s(X, y_gold)`; the training loss.
pub fn nll(inst: &CrfInstance, params: &CrfParams, gold: &[Label]) -> Result<f64> {
    Ok(log_partition(inst, params) - sequence_score(inst, params, gold)?)
}

#[inline]
fn argmax_prefer_l(scores: &[f64; NUM_TAGS]) -> usize {
    let mut best = PREFER_L[0];
    for &cand in &PREFER_L[1..] {
        if scores[cand] > scores[best] {
            best = cand;
        }
    }
    best
}

/// Max-product decoding: the label sequence with the highest score (hence
/// the highest conditional probability). Ties resolve to L at every
/// backtrack step.
pub fn viterbi(inst: &CrfInstance, params: &CrfParams) -> (Vec<Label>, f64) {
    let t_len = inst.len();
    let mut delta = [0.0f64; NUM_TAGS];
    for (j, d) in delta.iter_mut().enumerate() {
        *d = params.a(START, j) + inst.p(0, j);
    }
    let mut backptr: Vec<[usize; NUM_TAGS]> = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 1..t_len {
        let mut next = [0.0f64; NUM_TAGS];
        let mut bp = [0usize; NUM_TAGS];
        for j in 0..NUM_TAGS {
            let mut cand = [0.0f64; NUM_TAGS];
            for i in 0..NUM_TAGS {
                cand[i] = delta[i] + params.a(i, j);
            }
            let best = argmax_prefer_l(&cand);
            bp[j] = best;
            next[j] = inst.p(t, j) + cand[best];
        }
        delta = next;
        backptr.push(bp);
    }
    let mut terminal = [0.0f64; NUM_TAGS];
    for (j, s) in terminal.iter_mut().enumerate() {
        *s = delta[j] + params.a(j, END);
    }
    let mut tag = argmax_prefer_l(&terminal);
    let score = terminal[tag];
    let mut tags = vec![tag; t_len];
    for t in (1..t_len).rev() {
        tag = backptr[t - 1][tag];
        tags[t - 1] = tag;
    }
    (tags.into_iter().map(Label::from_index).collect(), score)
}

/// Result of exhaustive enumeration over all label sequences.
#[derive(Debug, Clone)]
pub struct BruteForce {
    pub log_z: f64,
    pub best: Vec<Label>,
    pub best_score: f64,
}

/// Exhaustive `2^T` oracle for [`log_partition`] and [`viterbi`].
/// Enumeration visits sequences in the Viterbi preference order (L before U,
/// last position most significant), so on exact score ties the same
/// sequence wins.
pub fn brute_force(inst: &CrfInstance, params: &CrfParams) -> Result<BruteForce> {
    let t_len = inst.len();
    if t_len > 16 {
        return Err(Error::SequenceTooLong { len: t_len });
    }
    let count = 1u32 << t_len;
    let mut scores = Vec::with_capacity(count as usize);
    let mut best_score = f64::NEG_INFINITY;
    let mut best: Vec<Label> = Vec::new();
    let mut labels = vec![Label::Lower; t_len];
    for n in 0..count {
        for (t, l) in labels.iter_mut().enumerate() {
            // bit set -> U; n = 0 is all-L, the most preferred sequence
            *l = if (n >> t) & 1 == 1 { Label::Upper } else { Label::Lower };
        }
        let s = sequence_score(inst, params, &labels)?;
        scores.push(s);
        if s > best_score {
            best_score = s;
            best = labels.clone();
        }
    }
    Ok(BruteForce {
        log_z: log_sum_exp(&scores)?,
        best,
        best_score,
    })
}

/// NLL and its exact gradients w.r.t. emissions and transitions, from one
/// forward-backward sweep. The emission gradient is the classic moment
/// difference: posterior marginals minus the gold one-hot.
#[derive(Debug, Clone)]
pub struct CrfGradients {
    pub nll: f64,
    pub d_emissions: Tensor,
    pub d_transitions: Tensor,
}

/// Posterior unary marginals `p(y_t = j | X)` as a `T x 2` tensor.
pub fn marginals(inst: &CrfInstance, params: &CrfParams) -> Tensor {
    let (alpha, beta, log_z) = forward_backward_tables(inst, params);
    let t_len = inst.len();
    let mut m = Tensor::zeros(&[t_len, NUM_TAGS]);
    for t in 0..t_len {
        for j in 0..NUM_TAGS {
            m.set(t, j, (alpha.at(t, j) + beta.at(t, j) - log_z).exp());
        }
    }
    m
}

fn forward_backward_tables(inst: &CrfInstance, params: &CrfParams) -> (Tensor, Tensor, f64) {
    let t_len = inst.len();
    let mut alpha = Tensor::zeros(&[t_len, NUM_TAGS]);
    for j in 0..NUM_TAGS {
        alpha.set(0, j, params.a(START, j) + inst.p(0, j));
    }
    let mut scratch = [0.0f64; NUM_TAGS];
    for t in 1..t_len {
        for j in 0..NUM_TAGS {
            for (i, s) in scratch.iter_mut().enumerate() {
                *s = alpha.at(t - 1, i) + params.a(i, j);
            }
            alpha.set(t, j, inst.p(t, j) + log_sum_exp(&scratch).unwrap());
        }
    }
    let mut beta = Tensor::zeros(&[t_len, NUM_TAGS]);
    for i in 0..NUM_TAGS {
        beta.set(t_len - 1, i, params.a(i, END));
    }
    for t in (0..t_len - 1).rev() {
        for i in 0..NUM_TAGS {
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = params.a(i, j) + inst.p(t + 1, j) + beta.at(t + 1, j);
            }
            beta.set(t, i, log_sum_exp(&scratch).unwrap());
        }
    }
    for (j, s) in scratch.iter_mut().enumerate() {
        *s = alpha.at(t_len - 1, j) + params.a(j, END);
    }
    let log_z = log_sum_exp(&scratch).unwrap();
    (alpha, beta, log_z)
}

/// One forward-backward sweep for training.
pub fn forward_backward(
    inst: &CrfInstance,
    params: &CrfParams,
    gold: &[Label],
) -> Result<CrfGradients> {
    let t_len = inst.len();
    if gold.len() != t_len {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: t_len,
        });
    }
    let (alpha, beta, log_z) = forward_backward_tables(inst, params);
    let mut d_emissions = Tensor::zeros(&[t_len, NUM_TAGS]);
    for (t, g) in gold.iter().enumerate() {
        for j in 0..NUM_TAGS {
            let marginal = (alpha.at(t, j) + beta.at(t, j) - log_z).exp();
            let gold_hit = (g.index() == j) as u8 as f64;
            d_emissions.set(t, j, marginal - gold_hit);
        }
    }
    let mut d_transitions = Tensor::zeros(&[NUM_AUG, NUM_AUG]);
    // pairwise marginals for the real-tag transitions
    for t in 0..t_len - 1 {
        for i in 0..NUM_TAGS {
            for j in 0..NUM_TAGS {
                let xi = (alpha.at(t, i)
                    + params.a(i, j)
                    + inst.p(t + 1, j)
                    + beta.at(t + 1, j)
                    - log_z)
                    .exp();
                let v = d_transitions.at(i, j) + xi;
                d_transitions.set(i, j, v);
            }
        }
        let (gi, gj) = (gold[t].index(), gold[t + 1].index());
        let v = d_transitions.at(gi, gj) - 1.0;
        d_transitions.set(gi, gj, v);
    }
    // boundary transitions
    for j in 0..NUM_TAGS {
        let m0 = (alpha.at(0, j) + beta.at(0, j) - log_z).exp();
        let v = d_transitions.at(START, j) + m0 - ((gold[0].index() == j) as u8 as f64);
        d_transitions.set(START, j, v);
        let mt = (alpha.at(t_len - 1, j) + beta.at(t_len - 1, j) - log_z).exp();
        let v = d_transitions.at(j, END) + mt - ((gold[t_len - 1].index() == j) as u8 as f64);
        d_transitions.set(j, END, v);
    }
    let nll = log_z - sequence_score(inst, params, gold)?;
    Ok(CrfGradients {
        nll,
        d_emissions,
        d_transitions,
    })
}
