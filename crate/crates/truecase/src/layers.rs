//! The encoder stack: character embedding, input dropout, 1-D convolution,
//! two bidirectional LSTM layers with recurrent dropout, and the linear
//! emission projection.
//!
//! Every forward here has a matching hand-written backward; caches carry
//! exactly the activations the backward needs. The stack operates on one
//! unpadded sequence at a time (batching slices padded rows down to their
//! true length before calling in), so pad positions never touch any state
//! or gradient.

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{axpy, dot, log_sum_exp, matmul_nt, sigmoid, Tensor};

/// Train vs eval behaviour for dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dropout configuration for the encoder.
#[derive(Debug, Clone, Copy)]
pub struct DropoutSpec {
    /// Probability of zeroing an embedding entry before the CNN.
    pub input_p: f64,
    /// Probability of zeroing a recurrent hidden unit; one mask per
    /// sequence per layer and direction, reused at every time step.
    pub recurrent_p: f64,
    pub mode: Mode,
}

impl DropoutSpec {
    pub fn eval() -> DropoutSpec {
        DropoutSpec {
            input_p: 0.0,
            recurrent_p: 0.0,
            mode: Mode::Eval,
        }
    }

    pub fn train(input_p: f64, recurrent_p: f64) -> DropoutSpec {
        assert!((0.0..1.0).contains(&input_p));
        assert!((0.0..1.0).contains(&recurrent_p));
        DropoutSpec {
            input_p,
            recurrent_p,
            mode: Mode::Train,
        }
    }
}

/// 1-D convolution filters `[k, d_in, F]` and bias `[F]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub w: Tensor,
    pub b: Tensor,
}

/// One LSTM direction: input weights `[4H, d_in]`, recurrent weights
/// `[4H, H]`, bias `[4H]`. Gate order within the 4H axis is i, f, g, o.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDir {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

impl LstmDir {
    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    pub fn input_width(&self) -> usize {
        self.w.cols()
    }
}

/// Forward and backward directions of one bidirectional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub fwd: LstmDir,
    pub bwd: LstmDir,
}

/// All encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `[|V|, d_emb]`; row 0 is PAD, row 1 UNK.
    pub embedding: Tensor,
    /// `None` runs embeddings straight into the BiLSTM (the no-CNN ablation).
    pub conv: Option<ConvParams>,
    pub lstm: [LstmLayer; 2],
    /// `[2H, 2]` projection onto the two tag scores.
    pub emit_w: Tensor,
    /// `[2]`.
    pub emit_b: Tensor,
}

/// Looks up embedding rows: row `t` of the output is the embedding of
/// `ids[t]`.
pub fn embed(ids: &[u32], embedding: &Tensor) -> Result<Tensor> {
    let d = embedding.cols();
    let mut out = Tensor::zeros(&[ids.len(), d]);
    for (t, &id) in ids.iter().enumerate() {
        if id as usize >= embedding.rows() {
            return Err(Error::IdOutOfRange {
                id,
                vocab_size: embedding.rows(),
            });
        }
        out.row_mut(t).copy_from_slice(embedding.row(id as usize));
    }
    Ok(out)
}

/// Same-padded 1-D convolution over the time axis followed by ReLU.
/// `x` is `[T, d_in]`, filters `[k, d_in, F]` (k odd), output `[T, F]`.
pub fn conv1d_same(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, d_in, f) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    assert!(k % 2 == 1, "same padding requires an odd kernel, got {k}");
    if x.cols() != d_in {
        return Err(Error::ShapeMismatch {
            op: "conv1d_same",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    let t_len = x.rows();
    let off = k / 2;
    let mut out = Tensor::zeros(&[t_len, f]);
    for t in 0..t_len {
        let orow = out.row_mut(t);
        orow.copy_from_slice(b.data());
        for j in 0..k {
            let s = t + j;
            if s < off || s - off >= t_len {
                continue; // zero padding outside [0, T)
            }
            let xrow = x.row(s - off);
            for (c, &xv) in xrow.iter().enumerate() {
                if xv != 0.0 {
                    let wrow = &w.data()[(j * d_in + c) * f..(j * d_in + c + 1) * f];
                    axpy(orow, xv, wrow);
                }
            }
        }
        for v in orow.iter_mut() {
            *v = v.max(0.0);
        }
    }
    Ok(out)
}

/// Gradient of [`conv1d_same`]: given d(loss)/d(output), accumulates filter
/// and bias gradients and the input gradient. `out` is the forward output
/// (its positive entries locate the active ReLU region).
pub(crate) fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    out: &Tensor,
    d_out: &Tensor,
    d_x: &mut Tensor,
    g_w: &mut Tensor,
    g_b: &mut Tensor,
) {
    let (k, d_in, f) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let t_len = x.rows();
    let off = k / 2;
    let mut d_pre = vec![0.0f64; f];
    for t in 0..t_len {
        let orow = out.row(t);
        let drow = d_out.row(t);
        for c in 0..f {
            d_pre[c] = if orow[c] > 0.0 { drow[c] } else { 0.0 };
        }
        axpy(g_b.data_mut(), 1.0, &d_pre);
        for j in 0..k {
            let s = t + j;
            if s < off || s - off >= t_len {
                continue;
            }
            let s = s - off;
            let xrow = x.row(s);
            let dxrow = d_x.row_mut(s);
            for c in 0..d_in {
                let wslice = &w.data()[(j * d_in + c) * f..(j * d_in + c + 1) * f];
                dxrow[c] += dot(wslice, &d_pre);
                let gw = &mut g_w.data_mut()[(j * d_in + c) * f..(j * d_in + c + 1) * f];
                axpy(gw, xrow[c], &d_pre);
            }
        }
    }
}

/// Inverted dropout. Train mode zeroes each element with probability `p`
/// and scales survivors by `1/(1-p)`; eval mode is the identity.
pub fn dropout(x: &Tensor, p: f64, mode: Mode, rng: &mut Rng) -> Tensor {
    assert!((0.0..1.0).contains(&p));
    if mode == Mode::Eval || p == 0.0 {
        return x.clone();
    }
    let mask = dropout_mask(x.len(), p, rng);
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Tensor::from_vec(x.shape(), data)
}

/// Mask entries are either 0 or `1/(1-p)`, so multiplying by the mask is
/// the whole dropout operation in both directions of the pass.
pub(crate) fn dropout_mask(n: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n)
        .map(|_| if rng.next_f64() >= p { keep } else { 0.0 })
        .collect()
}

/// One LSTM step. `rec_mask` is the per-sequence recurrent dropout mask
/// applied to `h_prev` (all ones in eval). Returns `(h_t, c_t)`.
pub fn lstm_cell(
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    dir: &LstmDir,
    rec_mask: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let h = dir.hidden();
    assert_eq!(x_t.len(), dir.input_width());
    assert_eq!(h_prev.len(), h);
    assert_eq!(c_prev.len(), h);
    let h_tilde: Vec<f64> = h_prev.iter().zip(rec_mask).map(|(a, m)| a * m).collect();
    let mut h_t = vec![0.0; h];
    let mut c_t = vec![0.0; h];
    for idx in 0..h {
        let zi = dot(dir.w.row(idx), x_t) + dir.b.data()[idx] + dot(dir.u.row(idx), &h_tilde);
        let zf = dot(dir.w.row(h + idx), x_t)
            + dir.b.data()[h + idx]
            + dot(dir.u.row(h + idx), &h_tilde);
        let zg = dot(dir.w.row(2 * h + idx), x_t)
            + dir.b.data()[2 * h + idx]
            + dot(dir.u.row(2 * h + idx), &h_tilde);
        let zo = dot(dir.w.row(3 * h + idx), x_t)
            + dir.b.data()[3 * h + idx]
            + dot(dir.u.row(3 * h + idx), &h_tilde);
        let i = sigmoid(zi);
        let f = sigmoid(zf);
        let g = zg.tanh();
        let o = sigmoid(zo);
        c_t[idx] = f * c_prev[idx] + i * g;
        h_t[idx] = o * c_t[idx].tanh();
    }
    (h_t, c_t)
}

/// Per-direction activations cached for backpropagation through time.
#[derive(Debug, Clone)]
pub(crate) struct DirCache {
    /// Activated gates `[T, 4H]` in i, f, g, o order.
    gates: Tensor,
    /// Cell states `[T, H]`.
    cs: Tensor,
    /// `tanh(c_t)` `[T, H]`.
    tanh_c: Tensor,
    /// Hidden states `[T, H]`, indexed by original position.
    pub hs: Tensor,
    /// Recurrent dropout mask `[H]`.
    rec_mask: Vec<f64>,
    /// Whether this direction reads the sequence in reverse.
    rev: bool,
}

fn prev_index(t: usize, rev: bool, t_len: usize) -> Option<usize> {
    if rev {
        if t + 1 < t_len {
            Some(t + 1)
        } else {
            None
        }
    } else {
        t.checked_sub(1)
    }
}

/// Runs one direction over the whole sequence. All rows of the caches are
/// indexed by original position; `rev` only changes the iteration order.
pub(crate) fn lstm_dir_forward(
    x: &Tensor,
    dir: &LstmDir,
    rec_mask: Vec<f64>,
    rev: bool,
) -> DirCache {
    let t_len = x.rows();
    let h = dir.hidden();
    // W x_t for every t in one shot; the recurrent term stays per-step.
    let zx = matmul_nt(x, &dir.w).expect("lstm input width mismatch");
    let mut cache = DirCache {
        gates: Tensor::zeros(&[t_len, 4 * h]),
        cs: Tensor::zeros(&[t_len, h]),
        tanh_c: Tensor::zeros(&[t_len, h]),
        hs: Tensor::zeros(&[t_len, h]),
        rec_mask,
        rev,
    };
    let zero = vec![0.0f64; h];
    let mut h_tilde = vec![0.0f64; h];
    for step in 0..t_len {
        let t = if rev { t_len - 1 - step } else { step };
        let prev = prev_index(t, rev, t_len);
        {
            let h_prev = prev.map_or(&zero[..], |p| cache.hs.row(p));
            for ((ht, hp), m) in h_tilde.iter_mut().zip(h_prev).zip(&cache.rec_mask) {
                *ht = hp * m;
            }
        }
        let zxr = zx.row(t);
        for (idx, &zx_val) in zxr.iter().enumerate() {
            let z = zx_val + dir.b.data()[idx] + dot(dir.u.row(idx), &h_tilde);
            let a = if idx >= 2 * h && idx < 3 * h {
                z.tanh() // cell candidate gate
            } else {
                sigmoid(z)
            };
            cache.gates.set(t, idx, a);
        }
        for idx in 0..h {
            let i = cache.gates.at(t, idx);
            let f = cache.gates.at(t, h + idx);
            let g = cache.gates.at(t, 2 * h + idx);
            let o = cache.gates.at(t, 3 * h + idx);
            let c_prev = prev.map_or(0.0, |p| cache.cs.at(p, idx));
            let c = f * c_prev + i * g;
            let tc = c.tanh();
            cache.cs.set(t, idx, c);
            cache.tanh_c.set(t, idx, tc);
            cache.hs.set(t, idx, o * tc);
        }
    }
    cache
}

/// Backpropagation through time for one direction. `d_concat` rows carry
/// d(loss)/d(h_t) at columns `[col_off, col_off + H)`. Accumulates into
/// `d_x` and the gradient tensors.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_dir_backward(
    x: &Tensor,
    dir: &LstmDir,
    cache: &DirCache,
    d_concat: &Tensor,
    col_off: usize,
    d_x: &mut Tensor,
    g: &mut LstmDir,
) {
    let t_len = x.rows();
    let h = dir.hidden();
    let mut d_z = Tensor::zeros(&[t_len, 4 * h]);
    let mut carry_h = vec![0.0f64; h];
    let mut carry_c = vec![0.0f64; h];
    for step in (0..t_len).rev() {
        let t = if cache.rev { t_len - 1 - step } else { step };
        let prev = prev_index(t, cache.rev, t_len);
        let d_out = &d_concat.row(t)[col_off..col_off + h];
        let dzr = d_z.row_mut(t);
        for idx in 0..h {
            let i = cache.gates.at(t, idx);
            let f = cache.gates.at(t, h + idx);
            let gg = cache.gates.at(t, 2 * h + idx);
            let o = cache.gates.at(t, 3 * h + idx);
            let tc = cache.tanh_c.at(t, idx);
            let c_prev = prev.map_or(0.0, |p| cache.cs.at(p, idx));
            let d_h = d_out[idx] + carry_h[idx];
            let d_o = d_h * tc;
            let d_c = carry_c[idx] + d_h * o * (1.0 - tc * tc);
            let d_i = d_c * gg;
            let d_g = d_c * i;
            let d_f = d_c * c_prev;
            carry_c[idx] = d_c * f;
            dzr[idx] = d_i * i * (1.0 - i);
            dzr[h + idx] = d_f * f * (1.0 - f);
            dzr[2 * h + idx] = d_g * (1.0 - gg * gg);
            dzr[3 * h + idx] = d_o * o * (1.0 - o);
        }
        // d h_{t-1} via U^T dz, masked by the recurrent dropout mask
        carry_h.iter_mut().for_each(|v| *v = 0.0);
        for (idx, &dz) in dzr.iter().enumerate() {
            if dz != 0.0 {
                axpy(&mut carry_h, dz, dir.u.row(idx));
            }
        }
        for (c, m) in carry_h.iter_mut().zip(&cache.rec_mask) {
            *c *= m;
        }
    }
    // batched parameter and input gradients
    let mut h_tilde = vec![0.0f64; h];
    for t in 0..t_len {
        let dzr = d_z.row(t);
        axpy(g.b.data_mut(), 1.0, dzr);
        let prev = prev_index(t, cache.rev, t_len);
        match prev {
            Some(p) => {
                for ((ht, hp), m) in h_tilde.iter_mut().zip(cache.hs.row(p)).zip(&cache.rec_mask) {
                    *ht = hp * m;
                }
            }
            None => h_tilde.iter_mut().for_each(|v| *v = 0.0),
        }
        let xrow = x.row(t);
        let dxrow = d_x.row_mut(t);
        for (idx, &dz) in dzr.iter().enumerate() {
            if dz != 0.0 {
                axpy(g.w.row_mut(idx), dz, xrow);
                if prev.is_some() {
                    axpy(g.u.row_mut(idx), dz, &h_tilde);
                }
                axpy(dxrow, dz, dir.w.row(idx));
            }
        }
    }
}

/// Cache for one bidirectional layer.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub fwd: DirCache,
    pub bwd: DirCache,
    /// `[T, 2H]`: forward hiddens in columns `[0, H)`, backward in `[H, 2H)`.
    pub concat: Tensor,
}

fn run_layer(x: &Tensor, layer: &LstmLayer, rec_p: f64, mode: Mode, rng: &mut Rng) -> LayerCache {
    let h = layer.fwd.hidden();
    let mask_for = |rng: &mut Rng| {
        if mode == Mode::Train && rec_p > 0.0 {
            dropout_mask(h, rec_p, rng)
        } else {
            vec![1.0; h]
        }
    };
    let fwd_mask = mask_for(rng);
    let bwd_mask = mask_for(rng);
    let fwd = lstm_dir_forward(x, &layer.fwd, fwd_mask, false);
    let bwd = lstm_dir_forward(x, &layer.bwd, bwd_mask, true);
    let t_len = x.rows();
    let mut concat = Tensor::zeros(&[t_len, 2 * h]);
    for t in 0..t_len {
        concat.row_mut(t)[..h].copy_from_slice(fwd.hs.row(t));
        concat.row_mut(t)[h..].copy_from_slice(bwd.hs.row(t));
    }
    LayerCache { fwd, bwd, concat }
}

/// The two-layer bidirectional stack on its own: returns the final
/// `[T, 2H]` representation `h_t = [fwd_t ; bwd_t]` of layer 2.
pub fn bilstm_stack(
    x: &Tensor,
    layers: &[LstmLayer; 2],
    spec: &DropoutSpec,
    rng: &mut Rng,
) -> Tensor {
    let l1 = run_layer(x, &layers[0], spec.recurrent_p, spec.mode, rng);
    let l2 = run_layer(&l1.concat, &layers[1], spec.recurrent_p, spec.mode, rng);
    l2.concat
}

/// Affine projection of the `[T, 2H]` representation onto per-character
/// tag scores `[T, 2]`. The raw scores are what the CRF consumes.
pub fn emissions(h: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if h.cols() != w.rows() {
        return Err(Error::ShapeMismatch {
            op: "emissions",
            lhs: h.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    let t_len = h.rows();
    let out_w = w.cols();
    let mut out = Tensor::zeros(&[t_len, out_w]);
    for t in 0..t_len {
        let orow = out.row_mut(t);
        orow.copy_from_slice(b.data());
        for (i, &hv) in h.row(t).iter().enumerate() {
            axpy(orow, hv, w.row(i));
        }
    }
    Ok(out)
}

pub(crate) fn emissions_backward(
    h: &Tensor,
    w: &Tensor,
    d_out: &Tensor,
    d_h: &mut Tensor,
    g_w: &mut Tensor,
    g_b: &mut Tensor,
) {
    let t_len = h.rows();
    for t in 0..t_len {
        let drow = d_out.row(t);
        axpy(g_b.data_mut(), 1.0, drow);
        let hrow = h.row(t);
        let dhrow = d_h.row_mut(t);
        for i in 0..h.cols() {
            axpy(g_w.row_mut(i), hrow[i], drow);
            dhrow[i] += dot(w.row(i), drow);
        }
    }
}

/// Row-wise softmax, exposed for diagnostics and the no-CRF head.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for t in 0..x.rows() {
        let row = out.row_mut(t);
        let lse = log_sum_exp(row).unwrap();
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    out
}

/// Summed per-position cross-entropy of the softmax head, and its gradient
/// w.r.t. the emissions (`softmax - onehot`). This is the `--no-crf`
/// ablation's loss.
pub fn softmax_nll(emissions: &Tensor, gold: &[Label]) -> Result<(f64, Tensor)> {
    if emissions.rows() != gold.len() {
        return Err(Error::LengthMismatch {
            left: emissions.rows(),
            right: gold.len(),
        });
    }
    let mut loss = 0.0;
    let mut d = Tensor::zeros(&[emissions.rows(), emissions.cols()]);
    for (t, g) in gold.iter().enumerate() {
        let row = emissions.row(t);
        let lse = log_sum_exp(row).unwrap();
        loss += lse - row[g.index()];
        for (j, v) in row.iter().enumerate() {
            let p = (v - lse).exp();
            d.set(t, j, p - ((g.index() == j) as u8 as f64));
        }
    }
    Ok((loss, d))
}

/// Per-position argmax of the emission scores, ties to L; the decoder of
/// the softmax head.
pub fn argmax_labels(emissions: &Tensor) -> Vec<Label> {
    (0..emissions.rows())
        .map(|t| {
            let row = emissions.row(t);
            if row[Label::Upper.index()] > row[Label::Lower.index()] {
                Label::Upper
            } else {
                Label::Lower
            }
        })
        .collect()
}

/// Everything the encoder backward needs from one forward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    ids: Vec<u32>,
    /// Input dropout mask over the `[T, d_emb]` embedding, absent in eval.
    input_mask: Option<Vec<f64>>,
    emb_dropped: Tensor,
    /// Convolution output `[T, F]`, absent for the no-CNN ablation.
    conv_out: Option<Tensor>,
    layers: [LayerCache; 2],
}

impl EncoderCache {
    /// Final `[T, 2H]` features feeding the emission projection.
    pub fn features(&self) -> &Tensor {
        &self.layers[1].concat
    }
}

/// Full encoder forward for one sequence: embedding, input dropout,
/// optional CNN, the two BiLSTM layers, and the emission projection.
/// In train mode, `rng` must be the per-sequence dropout stream.
pub fn encoder_forward(
    enc: &EncoderParams,
    ids: &[u32],
    spec: &DropoutSpec,
    rng: &mut Rng,
) -> Result<(Tensor, EncoderCache)> {
    let emb = embed(ids, &enc.embedding)?;
    let (emb_dropped, input_mask) = if spec.mode == Mode::Train && spec.input_p > 0.0 {
        let mask = dropout_mask(emb.len(), spec.input_p, rng);
        let data = emb.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        (Tensor::from_vec(emb.shape(), data), Some(mask))
    } else {
        (emb, None)
    };
    let conv_out = match &enc.conv {
        Some(conv) => Some(conv1d_same(&emb_dropped, &conv.w, &conv.b)?),
        None => None,
    };
    let x1 = conv_out.as_ref().unwrap_or(&emb_dropped);
    let l1 = run_layer(x1, &enc.lstm[0], spec.recurrent_p, spec.mode, rng);
    let l2 = run_layer(&l1.concat, &enc.lstm[1], spec.recurrent_p, spec.mode, rng);
    let e = emissions(&l2.concat, &enc.emit_w, &enc.emit_b)?;
    Ok((
        e,
        EncoderCache {
            ids: ids.to_vec(),
            input_mask,
            emb_dropped,
            conv_out,
            layers: [l1, l2],
        },
    ))
}

/// Full encoder backward: given d(loss)/d(emissions), accumulates all
/// encoder parameter gradients into `grads`.
pub fn encoder_backward(
    enc: &EncoderParams,
    cache: &EncoderCache,
    d_emissions: &Tensor,
    grads: &mut EncoderParams,
) {
    let t_len = d_emissions.rows();
    let h = enc.lstm[0].fwd.hidden();

    let mut d_concat2 = Tensor::zeros(&[t_len, 2 * h]);
    emissions_backward(
        cache.features(),
        &enc.emit_w,
        d_emissions,
        &mut d_concat2,
        &mut grads.emit_w,
        &mut grads.emit_b,
    );

    let x2 = &cache.layers[0].concat;
    let mut d_x2 = Tensor::zeros(&[t_len, 2 * h]);
    lstm_dir_backward(
        x2,
        &enc.lstm[1].fwd,
        &cache.layers[1].fwd,
        &d_concat2,
        0,
        &mut d_x2,
        &mut grads.lstm[1].fwd,
    );
    lstm_dir_backward(
        x2,
        &enc.lstm[1].bwd,
        &cache.layers[1].bwd,
        &d_concat2,
        h,
        &mut d_x2,
        &mut grads.lstm[1].bwd,
    );

    let x1 = cache.conv_out.as_ref().unwrap_or(&cache.emb_dropped);
    let mut d_x1 = Tensor::zeros(&[t_len, x1.cols()]);
    lstm_dir_backward(
        x1,
        &enc.lstm[0].fwd,
        &cache.layers[0].fwd,
        &d_x2,
        0,
        &mut d_x1,
        &mut grads.lstm[0].fwd,
    );
    lstm_dir_backward(
        x1,
        &enc.lstm[0].bwd,
        &cache.layers[0].bwd,
        &d_x2,
        h,
        &mut d_x1,
        &mut grads.lstm[0].bwd,
    );

    let mut d_emb = match (&enc.conv, &cache.conv_out) {
        (Some(conv), Some(out)) => {
            let g_conv = grads.conv.as_mut().expect("grads missing conv tensors");
            let mut d_in = Tensor::zeros(&[t_len, enc.embedding.cols()]);
            conv1d_backward(
                &cache.emb_dropped,
                &conv.w,
                out,
                &d_x1,
                &mut d_in,
                &mut g_conv.w,
                &mut g_conv.b,
            );
            d_in
        }
        _ => d_x1,
    };
    if let Some(mask) = &cache.input_mask {
        for (v, m) in d_emb.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
    }
    for (t, &id) in cache.ids.iter().enumerate() {
        axpy(grads.embedding.row_mut(id as usize), 1.0, d_emb.row(t));
    }
}
