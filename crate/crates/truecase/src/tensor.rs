//! Dense row-major f64 tensors and the numeric primitives the model needs.
//!
//! This is deliberately small: matrix products, a stable `log_sum_exp`, a
//! handful of elementwise maps, and a central-difference gradient checker.
//! Training runs entirely in f64; checkpoints round storage to f32.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// Builds a tensor from existing data. Panics if the element count does
    /// not match the shape; this is a programming error, not an input error.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match {} elements",
            shape,
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(lo, hi)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows for a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns for a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.cols();
        &self.data[i * w..(i + 1) * w]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.cols();
        &mut self.data[i * w..(i + 1) * w]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.shape[1] + j] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// self += other, elementwise.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// self += s * other, elementwise.
    pub fn add_scaled(&mut self, other: &Tensor, s: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sum of squares of all entries.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    fn check_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn relu(&self) -> Tensor {
        self.map(|x| x.max(0.0))
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "mul")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }

    /// Rounds every entry through f32 and back, the storage precision used
    /// by checkpoints. Applying this before prediction makes in-memory and
    /// reloaded models bit-identical.
    pub fn round_to_f32(&mut self) {
        for x in &mut self.data {
            *x = *x as f32 as f64;
        }
    }
}

/// Numerically stable sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `a[m,k] * b[k,n]`, the plain matrix product.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.cols() != b.rows() {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (p, &av) in arow.iter().enumerate().take(k) {
            let brow = b.row(p);
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a[m,k] * b[n,k]^T`. Rows of both operands are contiguous, which is the
/// layout every hot loop in the model wants.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.cols() != b.cols() {
        return Err(Error::ShapeMismatch {
            op: "matmul_nt",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let (m, n) = (a.rows(), b.rows());
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (j, o) in orow.iter_mut().enumerate().take(n) {
            *o = dot(arow, b.row(j));
        }
    }
    Ok(out)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `acc += s * v`, the elementwise saxpy used all over the backward passes.
#[inline]
pub fn axpy(acc: &mut [f64], s: f64, v: &[f64]) {
    debug_assert_eq!(acc.len(), v.len());
    for (a, x) in acc.iter_mut().zip(v) {
        *a += s * x;
    }
}

/// log(sum_i exp(v_i)) with the max subtracted first so that large scores
/// cannot overflow. Exact for constant vectors. An all -inf vector yields
/// -inf (an empty sum), which the CRF recursions rely on.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let s: f64 = v.iter().map(|&x| (x - m).exp()).sum();
    Ok(m + s.ln())
}

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// Coordinates probed per tensor, in tensor-list order.
    pub per_tensor: Vec<usize>,
    /// Index into the tensor list and flat coordinate of the worst entry.
    pub worst: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Checks analytic gradients against central finite differences
/// `(f(x+eps) - f(x-eps)) / 2eps` on a sampled coordinate subset.
///
/// At least `min_coords` coordinates are probed (all of them when the
/// parameters are smaller than that), spread over every tensor so that no
/// parameter escapes the check. The relative error of a coordinate is
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)` and the report
/// carries the maximum. `loss_fn` must be deterministic.
pub fn finite_diff_check<F>(
    mut loss_fn: F,
    params: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
    min_coords: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    assert!(
        (1e-7..=1e-3).contains(&eps),
        "eps {eps} outside the supported range"
    );
    assert_eq!(params.len(), analytic.len());
    let total: usize = params.iter().map(Tensor::len).sum();
    let budget = min_coords.min(total);

    // Proportional quota per tensor, at least one coordinate each, then
    // top up round-robin until the budget is met.
    let mut quotas: Vec<usize> = params
        .iter()
        .map(|t| ((budget * t.len()) / total).max(1).min(t.len()))
        .collect();
    let mut assigned: usize = quotas.iter().sum();
    let mut cursor = 0;
    while assigned < budget {
        if quotas[cursor] < params[cursor].len() {
            quotas[cursor] += 1;
            assigned += 1;
        }
        cursor = (cursor + 1) % params.len();
    }

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        per_tensor: vec![0; params.len()],
        worst: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };

    for (ti, quota) in quotas.iter().enumerate() {
        let n = params[ti].len();
        let coords: Vec<usize> = if *quota >= n {
            (0..n).collect()
        } else {
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            idx.truncate(*quota);
            idx
        };
        for ci in coords {
            let orig = work[ti].data()[ci];
            work[ti].data_mut()[ci] = orig + eps;
            let up = loss_fn(&work)?;
            work[ti].data_mut()[ci] = orig - eps;
            let down = loss_fn(&work)?;
            work[ti].data_mut()[ci] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFiniteLoss {
                    value: if up.is_finite() { down } else { up },
                });
            }
            let numeric = (up - down) / (2.0 * eps);
            let ana = analytic[ti].data()[ci];
            let rel = (ana - numeric).abs() / (1e-8f64).max(ana.abs() + numeric.abs());
            report.coords_checked += 1;
            report.per_tensor[ti] += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (ti, ci);
                report.worst_analytic = ana;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
