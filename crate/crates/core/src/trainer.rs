//! Binary logistic regression math: stable sigmoid/log-loss, the analytic
//! gradient, SGD and Newton/IRLS steps, and sharded gradient accumulation.
//! Everything is f64 and allocation-light; the training *loop* (which owns
//! timing and the data pipeline) lives in the `loadforge` crate.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;

/// Newton is O(d³); beyond this it is out of scope by design.
pub const MAX_NEWTON_DIM: usize = 64;

/// A mini-batch: `x` is row-major B×d, `y` holds 0.0/1.0 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    x: Vec<f64>,
    y: Vec<f64>,
    d: usize,
}

impl FeatureBatch {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: usize) -> Result<Self, CoreError> {
        if d == 0 {
            return Err(CoreError::InvalidArgument("feature dimension must be ≥ 1"));
        }
        if x.len() != y.len() * d {
            return Err(CoreError::DimMismatch { expected: y.len() * d, got: x.len() });
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(CoreError::InvalidArgument("labels must be 0 or 1"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidArgument("features must be finite"));
        }
        Ok(FeatureBatch { x, y, d })
    }

    pub fn batch_size(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.y[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(d: usize) -> Self {
        WeightVector { w: vec![0.0; d] }
    }

    pub fn from_vec(w: Vec<f64>) -> Self {
        WeightVector { w }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }
}

/// Epoch-level accumulation: `loss` sums batch losses, `grad_norm` is the
/// L2 norm of the most recent batch gradient, `samples_seen` counts rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub loss: f64,
    pub grad_norm: f64,
    pub samples_seen: u64,
}

/// Numerically stable σ(x) = 1/(1+e^{−x}): never exponentiates a positive
/// argument, so it cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// log(1 + e^t) without overflow or log(0).
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + libm::log1p(libm::exp(-t))
    } else {
        libm::log1p(libm::exp(t))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

fn check_dims(w: &WeightVector, batch: &FeatureBatch) -> Result<(), CoreError> {
    if w.dim() != batch.dim() {
        return Err(CoreError::DimMismatch { expected: w.dim(), got: batch.dim() });
    }
    Ok(())
}

/// Negative log-likelihood −Σ [y log σ(z) + (1−y) log(1−σ(z))], evaluated
/// through softplus: per sample, y·softplus(−z) + (1−y)·softplus(z).
pub fn loss(w: &WeightVector, batch: &FeatureBatch) -> Result<f64, CoreError> {
    check_dims(w, batch)?;
    let mut total = 0.0;
    for i in 0..batch.batch_size() {
        let z = dot(batch.row(i), w.as_slice());
        let y = batch.label(i);
        total += y * softplus(-z) + (1.0 - y) * softplus(z);
    }
    Ok(total)
}

/// ∇L = Σ (σ(xᵢᵀw) − yᵢ) xᵢ.
pub fn gradient(w: &WeightVector, batch: &FeatureBatch) -> Result<Vec<f64>, CoreError> {
    check_dims(w, batch)?;
    let mut g = vec![0.0; w.dim()];
    for i in 0..batch.batch_size() {
        let row = batch.row(i);
        let r = sigmoid(dot(row, w.as_slice())) - batch.label(i);
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    Ok(g)
}

/// w' = w − η·grad.
pub fn sgd_step(w: &WeightVector, grad: &[f64], eta: f64) -> Result<WeightVector, CoreError> {
    if grad.len() != w.dim() {
        return Err(CoreError::DimMismatch { expected: w.dim(), got: grad.len() });
    }
    if !(eta > 0.0) {
        return Err(CoreError::InvalidArgument("learning rate must be > 0"));
    }
    Ok(WeightVector::from_vec(
        w.as_slice().iter().zip(grad).map(|(wi, gi)| wi - eta * gi).collect(),
    ))
}

/// Dense symmetric d×d matrix, row-major. Solved by LDLᵀ factorization
/// (square-root-free Cholesky), which keeps small rational examples exact
/// and reports indefinite/singular pivots cleanly.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianMatrix {
    d: usize,
    data: Vec<f64>,
}

impl HessianMatrix {
    pub fn zeros(d: usize) -> Self {
        HessianMatrix { d, data: vec![0.0; d * d] }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    /// H += weight · x xᵀ
    pub fn add_outer(&mut self, x: &[f64], weight: f64) {
        debug_assert_eq!(x.len(), self.d);
        for i in 0..self.d {
            let wi = weight * x[i];
            for j in 0..self.d {
                self.data[i * self.d + j] += wi * x[j];
            }
        }
    }

    /// H += r · I
    pub fn add_ridge(&mut self, r: f64) {
        for i in 0..self.d {
            self.data[i * self.d + i] += r;
        }
    }

    /// Solve H δ = b. Fails with SingularHessian when a pivot collapses
    /// (relative to the largest diagonal entry) or goes negative.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, CoreError> {
        if b.len() != self.d {
            return Err(CoreError::DimMismatch { expected: self.d, got: b.len() });
        }
        let d = self.d;
        let mut lower = vec![0.0; d * d]; // unit lower triangle, diagonal implied 1
        let mut diag = vec![0.0; d];
        let max_diag = (0..d).fold(0.0f64, |m, i| {
            let v = libm::fabs(self.get(i, i));
            if v > m { v } else { m }
        });
        let tol = 1e-12 * if max_diag > 0.0 { max_diag } else { 1.0 };
        for j in 0..d {
            let mut dj = self.get(j, j);
            for k in 0..j {
                dj -= lower[j * d + k] * lower[j * d + k] * diag[k];
            }
            if dj <= tol {
                return Err(CoreError::SingularHessian);
            }
            diag[j] = dj;
            for i in (j + 1)..d {
                let mut v = self.get(i, j);
                for k in 0..j {
                    v -= lower[i * d + k] * lower[j * d + k] * diag[k];
                }
                lower[i * d + j] = v / dj;
            }
        }
        // Forward: L z = b
        let mut z = b.to_vec();
        for i in 0..d {
            for k in 0..i {
                z[i] -= lower[i * d + k] * z[k];
            }
        }
        // Scale: D y = z
        for i in 0..d {
            z[i] /= diag[i];
        }
        // Back: Lᵀ δ = y
        for i in (0..d).rev() {
            for k in (i + 1)..d {
                z[i] -= lower[k * d + i] * z[k];
            }
        }
        Ok(z)
    }
}

/// One Newton/IRLS step: H = Σ σᵢ(1−σᵢ) xᵢxᵢᵀ + ridge·I, solve H δ = ∇L,
/// return w − δ. (The textbook curvature for this loss; an unweighted
/// Σ xᵢxᵢᵀ is a common shorthand but is not the Hessian.)
pub fn newton_step(
    w: &WeightVector,
    data: &FeatureBatch,
    ridge: f64,
) -> Result<WeightVector, CoreError> {
    check_dims(w, data)?;
    if w.dim() > MAX_NEWTON_DIM {
        return Err(CoreError::Unsupported("newton_step is limited to small d"));
    }
    if ridge < 0.0 {
        return Err(CoreError::InvalidArgument("ridge must be ≥ 0"));
    }
    let mut h = HessianMatrix::zeros(w.dim());
    let mut g = vec![0.0; w.dim()];
    for i in 0..data.batch_size() {
        let row = data.row(i);
        let s = sigmoid(dot(row, w.as_slice()));
        h.add_outer(row, s * (1.0 - s));
        let r = s - data.label(i);
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    if ridge > 0.0 {
        h.add_ridge(ridge);
    }
    let delta = h.solve(&g)?;
    Ok(WeightVector::from_vec(
        w.as_slice().iter().zip(&delta).map(|(wi, di)| wi - di).collect(),
    ))
}

/// Gradient over shards, accumulated shard by shard: equals the gradient of
/// the concatenated data up to summation order, without materializing it.
pub fn partial_sum_gradient(
    w: &WeightVector,
    shards: &[FeatureBatch],
) -> Result<Vec<f64>, CoreError> {
    if shards.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let mut total = vec![0.0; w.dim()];
    for shard in shards {
        let g = gradient(w, shard)?;
        for (t, gi) in total.iter_mut().zip(&g) {
            *t += gi;
        }
    }
    Ok(total)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}
