//! Minibatch Adam training on the CRF (or softmax) negative log-likelihood,
//! with seeded shuffling, dev-set early stopping, and fully deterministic
//! results for a given seed.
//!
//! Within a batch, per-sequence forward/backward passes run in parallel;
//! gradients reduce over a fixed binary tree keyed by batch indices, so the
//! floating-point accumulation order (and therefore every parameter bit)
//! is independent of the number of worker threads.

use std::path::Path;

use crate::checkpoint::Checkpoint;
use crate::corpus::{encode, make_batches, read_corpus, Batch, LabeledSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, EvalReport};
use crate::layers::DropoutSpec;
use crate::model::{
    dropout_rng, sequence_loss_grads, Head, ModelConfig, ModelParams, STREAM_SHUFFLE,
};
use crate::rng::mix_seed;

/// Training hyperparameters. Defaults: learning rate 0.002, batch size 64,
/// 0.25 input and recurrent dropout, Adam (0.9, 0.999, 1e-8).
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub input_dropout: f64,
    pub recurrent_dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub head: Head,
    pub use_cnn: bool,
    /// Global-norm gradient clipping; off unless set.
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.002,
            batch_size: 64,
            input_dropout: 0.25,
            recurrent_dropout: 0.25,
            max_epochs: 30,
            patience: 3,
            seed: 42,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            head: Head::Crf,
            use_cnn: true,
            clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::InvalidConfig(format!("lr {} must be > 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.input_dropout)
            || !(0.0..1.0).contains(&self.recurrent_dropout)
        {
            return Err(Error::InvalidConfig("dropout must be in [0, 1)".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and max_epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Architecture sizes, separate from the training schedule so tests can
/// shrink the network.
#[derive(Debug, Clone, Copy)]
pub struct ModelSizes {
    pub d_emb: usize,
    pub kernel: usize,
    pub filters: usize,
    pub hidden: usize,
}

impl Default for ModelSizes {
    fn default() -> Self {
        ModelSizes {
            d_emb: 32,
            kernel: 5,
            filters: 32,
            hidden: 150,
        }
    }
}

/// Adam moment estimates, one pair of tensors per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> AdamState {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// The update rule on one tensor's slices, split out for direct testing.
pub(crate) fn adam_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &TrainConfig,
) {
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let bc1 = 1.0 - b1.powi(step as i32);
    let bc2 = 1.0 - b2.powi(step as i32);
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
}

/// One Adam step over every parameter tensor. A non-finite gradient aborts
/// with the offending tensor's name.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    for (name, g) in grads.named() {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient {
                tensor: name.to_string(),
            });
        }
    }
    state.step += 1;
    let step = state.step;
    let gs = grads.named();
    let ms = state.m.named_mut();
    let vs = state.v.named_mut();
    let ps = params.named_mut();
    for ((((_, p), (_, g)), (_, m)), (_, v)) in
        ps.into_iter().zip(gs).zip(ms).zip(vs)
    {
        adam_update(p.data_mut(), g.data(), m.data_mut(), v.data_mut(), step, cfg);
    }
    Ok(())
}

/// How many sequences one reduction leaf accumulates sequentially. Fixed,
/// so the reduction tree depends only on the batch size.
const LEAF_SEQS: usize = 8;

/// Summed loss and gradients over a batch. Deterministic for any thread
/// count: the binary tree over `[lo, hi)` row ranges fixes the
/// floating-point accumulation order.
pub(crate) fn batch_grads(
    params: &ModelParams,
    batch: &Batch,
    spec: &DropoutSpec,
    seed: u64,
    epoch: usize,
) -> Result<(f64, ModelParams)> {
    fn go(
        params: &ModelParams,
        batch: &Batch,
        spec: &DropoutSpec,
        seed: u64,
        epoch: usize,
        lo: usize,
        hi: usize,
    ) -> Result<(f64, ModelParams)> {
        if hi - lo <= LEAF_SEQS {
            let mut grads = params.zeros_like();
            let mut nll = 0.0;
            for row in lo..hi {
                let mut rng = dropout_rng(seed, epoch, batch.example_indices[row]);
                nll += sequence_loss_grads(
                    params,
                    batch.seq_ids(row),
                    batch.seq_labels(row),
                    spec,
                    &mut rng,
                    &mut grads,
                )?;
            }
            Ok((nll, grads))
        } else {
            let mid = lo + (hi - lo) / 2;
            let (left, right) = rayon::join(
                || go(params, batch, spec, seed, epoch, lo, mid),
                || go(params, batch, spec, seed, epoch, mid, hi),
            );
            let (nll_l, mut g_l) = left?;
            let (nll_r, g_r) = right?;
            g_l.add_assign(&g_r);
            Ok((nll_l + nll_r, g_l))
        }
    }
    go(params, batch, spec, seed, epoch, 0, batch.batch_size())
}

/// Per-epoch training statistics.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_nll_per_seq: f64,
    pub train_nll_per_char: f64,
    pub dev: EvalReport,
}

/// A finished run: the best-dev-F1 checkpoint plus the epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
}

/// Trains the default-sized model (kernel 5, 32 filters, 2x150 hidden,
/// 32-dim embeddings). See [`train_sized`].
pub fn train(
    train_path: impl AsRef<Path>,
    dev_path: impl AsRef<Path>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_sized(train_path, dev_path, cfg, &ModelSizes::default())
}

/// Full training loop: derive labels from both corpora, build the
/// vocabulary from the training set only, then run minibatch Adam with
/// per-epoch dev evaluation, keeping the best-F1 parameters. Stops early
/// after `patience` epochs without improvement (or as soon as dev F1
/// reaches 1, which nothing can beat).
pub fn train_sized(
    train_path: impl AsRef<Path>,
    dev_path: impl AsRef<Path>,
    cfg: &TrainConfig,
    sizes: &ModelSizes,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let vocab = Vocabulary::build(&train_path, 1)?;
    let train_seqs: Vec<LabeledSequence> = read_corpus(&train_path)?
        .into_iter()
        .map(|s| encode(s, &vocab))
        .collect();
    let dev_seqs: Vec<LabeledSequence> = read_corpus(&dev_path)?
        .into_iter()
        .map(|s| encode(s, &vocab))
        .collect();

    let config = ModelConfig {
        vocab_size: vocab.size(),
        d_emb: sizes.d_emb,
        kernel: sizes.kernel,
        filters: sizes.filters,
        hidden: sizes.hidden,
        use_cnn: cfg.use_cnn,
        head: cfg.head,
    };
    let mut params = ModelParams::init(config, cfg.seed)?;
    let mut adam = AdamState::new(&params);
    let spec = DropoutSpec::train(cfg.input_dropout, cfg.recurrent_dropout);
    let total_chars: usize = train_seqs.iter().map(LabeledSequence::len).sum();

    let mut history: Vec<EpochStats> = Vec::new();
    let mut best: Option<(ModelParams, EvalReport, usize)> = None;
    let mut stale_epochs = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let shuffle_seed = mix_seed(cfg.seed, STREAM_SHUFFLE, epoch as u64);
        let batches = make_batches(&train_seqs, cfg.batch_size, Some(shuffle_seed))?;
        let mut epoch_nll = 0.0;
        for batch in &batches {
            let (nll, mut grads) = batch_grads(&params, batch, &spec, cfg.seed, epoch)?;
            if !nll.is_finite() {
                return Err(Error::Diverged {
                    last_good_epoch: epoch - 1,
                });
            }
            epoch_nll += nll;
            grads.scale(1.0 / batch.batch_size() as f64);
            if let Some(max_norm) = cfg.clip {
                let norm = grads.sq_norm().sqrt();
                if norm > max_norm {
                    grads.scale(max_norm / norm);
                }
            }
            adam_step(&mut params, &grads, &mut adam, cfg)?;
        }

        let dev = evaluate_model(&params, &dev_seqs)?;
        let stats = EpochStats {
            epoch,
            train_nll_per_seq: epoch_nll / train_seqs.len() as f64,
            train_nll_per_char: epoch_nll / total_chars as f64,
            dev,
        };
        let best_f1 = best.as_ref().map_or(f64::NEG_INFINITY, |(_, r, _)| r.f1);
        eprintln!(
            "epoch {:3}  nll/char {:.4}  dev f1 {:6.2}%  (best {:6.2}%)",
            epoch,
            stats.train_nll_per_char,
            dev.f1 * 100.0,
            best_f1.max(dev.f1) * 100.0,
        );
        history.push(stats);
        if dev.f1 > best_f1 {
            best = Some((params.clone(), dev, epoch));
            stale_epochs = 0;
            if dev.f1 >= 1.0 {
                break;
            }
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.patience {
                break;
            }
        }
    }

    let (mut best_params, best_report, best_epoch) = best.expect("at least one epoch ran");
    // storage precision: predictions from the returned checkpoint match a
    // reloaded one bit for bit
    best_params.round_to_f32();
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params: best_params,
            vocab,
            best_f1: best_report.f1,
            epoch: best_epoch as u32,
        },
        history,
    })
}
