//! Model assembly: the full parameter set (encoder + CRF), initialization,
//! per-sequence loss/gradient, prediction, and the end-to-end gradient
//! check fixture.

use crate::corpus::Label;
use crate::crf::{self, CrfInstance, CrfParams};
use crate::error::{Error, Result};
use crate::layers::{
    self, argmax_labels, encoder_backward, encoder_forward, ConvParams, DropoutSpec,
    EncoderParams, LstmDir, LstmLayer,
};
use crate::rng::{mix_seed, Rng};
use crate::tensor::{finite_diff_check, GradCheckReport, Tensor};

/// Stream tags for deriving independent RNG streams from one seed.
pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_SHUFFLE: u64 = 2;
pub(crate) const STREAM_DROPOUT: u64 = 3;

/// Which classifier sits on top of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Joint decoding with the linear-chain CRF (the default).
    Crf,
    /// Independent per-character softmax (the no-CRF ablation).
    Softmax,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_emb: usize,
    pub kernel: usize,
    pub filters: usize,
    pub hidden: usize,
    pub use_cnn: bool,
    pub head: Head,
}

impl ModelConfig {
    /// Defaults: 32-dim character embeddings, kernel-5 CNN with 32 filters,
    /// two BiLSTM layers of 150 hidden nodes, CRF head.
    pub fn new(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_emb: 32,
            kernel: 5,
            filters: 32,
            hidden: 150,
            use_cnn: true,
            head: Head::Crf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 3 {
            return Err(Error::InvalidConfig(format!(
                "vocab_size {} leaves no real characters",
                self.vocab_size
            )));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "kernel {} must be odd for same padding",
                self.kernel
            )));
        }
        if self.d_emb == 0 || self.filters == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig("zero-sized layer".into()));
        }
        Ok(())
    }

    /// Input width of the first BiLSTM layer.
    fn lstm1_input(&self) -> usize {
        if self.use_cnn {
            self.filters
        } else {
            self.d_emb
        }
    }
}

/// Every learnable tensor of the model plus its hyperparameters. The same
/// struct doubles as the gradient container (`zeros_like`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    /// Present iff `config.head == Head::Crf`.
    pub crf: Option<CrfParams>,
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(shape, -a, a, rng)
}

fn init_dir(d_in: usize, h: usize, rng: &mut Rng) -> LstmDir {
    let w = glorot(&[4 * h, d_in], d_in, 4 * h, rng);
    let u = glorot(&[4 * h, h], h, 4 * h, rng);
    let mut b = Tensor::zeros(&[4 * h]);
    // forget-gate bias starts at +1 so early training does not flush memory
    for v in &mut b.data_mut()[h..2 * h] {
        *v = 1.0;
    }
    LstmDir { w, u, b }
}

impl ModelParams {
    /// Deterministic initialization: uniform Glorot for dense weights,
    /// zero biases (forget gate +1), zero CRF transitions.
    pub fn init(config: ModelConfig, seed: u64) -> Result<ModelParams> {
        config.validate()?;
        let mut rng = Rng::new(mix_seed(seed, STREAM_INIT, 0));
        let embedding = glorot(
            &[config.vocab_size, config.d_emb],
            config.vocab_size,
            config.d_emb,
            &mut rng,
        );
        let conv = config.use_cnn.then(|| ConvParams {
            w: glorot(
                &[config.kernel, config.d_emb, config.filters],
                config.kernel * config.d_emb,
                config.kernel * config.filters,
                &mut rng,
            ),
            b: Tensor::zeros(&[config.filters]),
        });
        let h = config.hidden;
        let lstm = [
            LstmLayer {
                fwd: init_dir(config.lstm1_input(), h, &mut rng),
                bwd: init_dir(config.lstm1_input(), h, &mut rng),
            },
            LstmLayer {
                fwd: init_dir(2 * h, h, &mut rng),
                bwd: init_dir(2 * h, h, &mut rng),
            },
        ];
        let emit_w = glorot(&[2 * h, 2], 2 * h, 2, &mut rng);
        let emit_b = Tensor::zeros(&[2]);
        let crf = (config.head == Head::Crf).then(CrfParams::new);
        Ok(ModelParams {
            config,
            encoder: EncoderParams {
                embedding,
                conv,
                lstm,
                emit_w,
                emit_b,
            },
            crf,
        })
    }

    /// A same-shaped parameter set of zeros, used for gradients and
    /// optimizer moments.
    pub fn zeros_like(&self) -> ModelParams {
        let zero = |t: &Tensor| Tensor::zeros(t.shape());
        ModelParams {
            config: self.config.clone(),
            encoder: EncoderParams {
                embedding: zero(&self.encoder.embedding),
                conv: self.encoder.conv.as_ref().map(|c| ConvParams {
                    w: zero(&c.w),
                    b: zero(&c.b),
                }),
                lstm: [0, 1].map(|l| LstmLayer {
                    fwd: LstmDir {
                        w: zero(&self.encoder.lstm[l].fwd.w),
                        u: zero(&self.encoder.lstm[l].fwd.u),
                        b: zero(&self.encoder.lstm[l].fwd.b),
                    },
                    bwd: LstmDir {
                        w: zero(&self.encoder.lstm[l].bwd.w),
                        u: zero(&self.encoder.lstm[l].bwd.u),
                        b: zero(&self.encoder.lstm[l].bwd.b),
                    },
                }),
                emit_w: zero(&self.encoder.emit_w),
                emit_b: zero(&self.encoder.emit_b),
            },
            crf: self
                .crf
                .as_ref()
                .map(|c| CrfParams::from_transitions(zero(&c.transitions))),
        }
    }

    /// Tensors in canonical order with stable names; the checkpoint layout
    /// and the optimizer both follow this order.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let e = &self.encoder;
        let mut out: Vec<(&'static str, &Tensor)> = vec![("embedding", &e.embedding)];
        if let Some(c) = &e.conv {
            out.push(("conv.w", &c.w));
            out.push(("conv.b", &c.b));
        }
        let names = [
            ["lstm1.fwd.w", "lstm1.fwd.u", "lstm1.fwd.b", "lstm1.bwd.w", "lstm1.bwd.u", "lstm1.bwd.b"],
            ["lstm2.fwd.w", "lstm2.fwd.u", "lstm2.fwd.b", "lstm2.bwd.w", "lstm2.bwd.u", "lstm2.bwd.b"],
        ];
        for (l, layer) in e.lstm.iter().enumerate() {
            out.push((names[l][0], &layer.fwd.w));
            out.push((names[l][1], &layer.fwd.u));
            out.push((names[l][2], &layer.fwd.b));
            out.push((names[l][3], &layer.bwd.w));
            out.push((names[l][4], &layer.bwd.u));
            out.push((names[l][5], &layer.bwd.b));
        }
        out.push(("emit.w", &e.emit_w));
        out.push(("emit.b", &e.emit_b));
        if let Some(c) = &self.crf {
            out.push(("crf.transitions", &c.transitions));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let e = &mut self.encoder;
        let mut out: Vec<(&'static str, &mut Tensor)> = vec![("embedding", &mut e.embedding)];
        if let Some(c) = &mut e.conv {
            out.push(("conv.w", &mut c.w));
            out.push(("conv.b", &mut c.b));
        }
        let names = [
            ["lstm1.fwd.w", "lstm1.fwd.u", "lstm1.fwd.b", "lstm1.bwd.w", "lstm1.bwd.u", "lstm1.bwd.b"],
            ["lstm2.fwd.w", "lstm2.fwd.u", "lstm2.fwd.b", "lstm2.bwd.w", "lstm2.bwd.u", "lstm2.bwd.b"],
        ];
        for (l, layer) in e.lstm.iter_mut().enumerate() {
            out.push((names[l][0], &mut layer.fwd.w));
            out.push((names[l][1], &mut layer.fwd.u));
            out.push((names[l][2], &mut layer.fwd.b));
            out.push((names[l][3], &mut layer.bwd.w));
            out.push((names[l][4], &mut layer.bwd.u));
            out.push((names[l][5], &mut layer.bwd.b));
        }
        out.push(("emit.w", &mut e.emit_w));
        out.push(("emit.b", &mut e.emit_b));
        if let Some(c) = &mut self.crf {
            out.push(("crf.transitions", &mut c.transitions));
        }
        out
    }

    /// self += other over every tensor; panics on mismatched structure.
    pub fn add_assign(&mut self, other: &ModelParams) {
        let theirs = other.named();
        for ((_, mine), (_, t)) in self.named_mut().into_iter().zip(theirs) {
            mine.add_assign(t);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.named_mut() {
            t.scale(s);
        }
    }

    /// Sum of squares over every tensor (for gradient clipping).
    pub fn sq_norm(&self) -> f64 {
        self.named().iter().map(|(_, t)| t.sq_norm()).sum()
    }

    /// Rounds every tensor through f32, the checkpoint storage precision.
    pub fn round_to_f32(&mut self) {
        for (_, t) in self.named_mut() {
            t.round_to_f32();
        }
    }

    /// Clones of all tensors in canonical order.
    pub fn tensor_list(&self) -> Vec<Tensor> {
        self.named().into_iter().map(|(_, t)| t.clone()).collect()
    }

    /// Rebuilds a parameter set from tensors in canonical order.
    pub fn with_tensors(&self, list: &[Tensor]) -> ModelParams {
        let mut out = self.clone();
        {
            let slots = out.named_mut();
            assert_eq!(slots.len(), list.len());
            for ((_, slot), t) in slots.into_iter().zip(list) {
                *slot = t.clone();
            }
        }
        out
    }
}

/// Per-sequence dropout stream: reproducible regardless of execution order
/// across the batch.
pub fn dropout_rng(seed: u64, epoch: usize, example_index: usize) -> Rng {
    Rng::new(mix_seed(
        seed ^ STREAM_DROPOUT,
        epoch as u64,
        example_index as u64,
    ))
}

/// Forward pass to emission scores only (eval mode, no dropout).
pub fn emission_scores(params: &ModelParams, ids: &[u32]) -> Result<Tensor> {
    let mut rng = Rng::new(0); // eval mode draws nothing
    let (e, _) = encoder_forward(&params.encoder, ids, &DropoutSpec::eval(), &mut rng)?;
    Ok(e)
}

/// Loss of one sequence (CRF NLL or summed softmax cross-entropy).
pub fn sequence_loss(
    params: &ModelParams,
    ids: &[u32],
    gold: &[Label],
    spec: &DropoutSpec,
    rng: &mut Rng,
) -> Result<f64> {
    let (em, _) = encoder_forward(&params.encoder, ids, spec, rng)?;
    match params.config.head {
        Head::Crf => crf::nll(&CrfInstance::new(em), params.crf.as_ref().unwrap(), gold),
        Head::Softmax => Ok(layers::softmax_nll(&em, gold)?.0),
    }
}

/// Loss and gradients of one sequence, accumulated into `grads`
/// (unscaled; the batch loop divides by the batch size afterwards).
pub fn sequence_loss_grads(
    params: &ModelParams,
    ids: &[u32],
    gold: &[Label],
    spec: &DropoutSpec,
    rng: &mut Rng,
    grads: &mut ModelParams,
) -> Result<f64> {
    let (em, cache) = encoder_forward(&params.encoder, ids, spec, rng)?;
    let (loss, d_emissions) = match params.config.head {
        Head::Crf => {
            let out = crf::forward_backward(
                &CrfInstance::new(em),
                params.crf.as_ref().unwrap(),
                gold,
            )?;
            grads
                .crf
                .as_mut()
                .unwrap()
                .transitions
                .add_assign(&out.d_transitions);
            (out.nll, out.d_emissions)
        }
        Head::Softmax => layers::softmax_nll(&em, gold)?,
    };
    encoder_backward(&params.encoder, &cache, &d_emissions, &mut grads.encoder);
    Ok(loss)
}

/// Decodes one sequence: Viterbi under the CRF head, per-position argmax
/// under the softmax head.
pub fn predict(params: &ModelParams, ids: &[u32]) -> Result<Vec<Label>> {
    let em = emission_scores(params, ids)?;
    Ok(match params.config.head {
        Head::Crf => crf::viterbi(&CrfInstance::new(em), params.crf.as_ref().unwrap()).0,
        Head::Softmax => argmax_labels(&em),
    })
}

/// Posterior probability of U per character; CRF marginals or softmax,
/// depending on the head. Diagnostic output, not used for decoding.
pub fn upper_probabilities(params: &ModelParams, ids: &[u32]) -> Result<Vec<f64>> {
    let em = emission_scores(params, ids)?;
    let probs = match params.config.head {
        Head::Crf => crf::marginals(&CrfInstance::new(em), params.crf.as_ref().unwrap()),
        Head::Softmax => layers::softmax_rows(&em),
    };
    Ok((0..probs.rows()).map(|t| probs.at(t, Label::Upper.index())).collect())
}

/// The gradient-check fixture: a small model (vocab 20, 8-dim embeddings,
/// 8 filters, 16 hidden) and two short sequences, dropout in eval mode.
/// Returns the finite-difference report and the tensor names, so callers
/// can point at the worst offender.
pub fn gradient_check(seed: u64) -> Result<(GradCheckReport, Vec<&'static str>)> {
    let config = ModelConfig {
        vocab_size: 20,
        d_emb: 8,
        kernel: 5,
        filters: 8,
        hidden: 16,
        use_cnn: true,
        head: Head::Crf,
    };
    let params = ModelParams::init(config, seed)?;
    let mut rng = Rng::new(mix_seed(seed, 0xF1D, 0));
    let seqs: Vec<(Vec<u32>, Vec<Label>)> = [12usize, 9]
        .iter()
        .map(|&len| {
            let ids = (0..len).map(|_| 1 + rng.below(19) as u32).collect();
            let labels = (0..len)
                .map(|_| {
                    if rng.below(2) == 0 {
                        Label::Upper
                    } else {
                        Label::Lower
                    }
                })
                .collect();
            (ids, labels)
        })
        .collect();

    let spec = DropoutSpec::eval();
    let mut grads = params.zeros_like();
    let mut loss_total = 0.0;
    for (ids, gold) in &seqs {
        let mut r = Rng::new(0);
        loss_total += sequence_loss_grads(&params, ids, gold, &spec, &mut r, &mut grads)?;
    }
    if !loss_total.is_finite() {
        return Err(Error::NonFiniteLoss { value: loss_total });
    }
    let scale = 1.0 / seqs.len() as f64;
    grads.scale(scale);

    let names: Vec<&'static str> = params.named().into_iter().map(|(n, _)| n).collect();
    let tensors = params.tensor_list();
    let analytic = grads.tensor_list();
    let template = params.clone();
    let seqs_for_loss = seqs.clone();
    let report = finite_diff_check(
        move |ts: &[Tensor]| {
            let p = template.with_tensors(ts);
            let mut total = 0.0;
            for (ids, gold) in &seqs_for_loss {
                let mut r = Rng::new(0);
                total += sequence_loss(&p, ids, gold, &DropoutSpec::eval(), &mut r)?;
            }
            Ok(total * scale)
        },
        &tensors,
        &analytic,
        1e-5,
        200,
        &mut Rng::new(mix_seed(seed, 0xC0, 0)),
    )?;
    Ok((report, names))
}
