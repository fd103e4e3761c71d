//! Dense third-order tensors.
//!
//! A [`Tensor3`] of dimensions `(q1, q2, q3)` stores entry `T[i, a, c]` at
//! linear position `i + q1·(a + q2·c)` (zero-based, column-major). With this
//! layout the 1-mode matricization is the stored buffer itself, and the
//! frontal slices `T[:, :, c]` are contiguous column-major `q1 × q2` blocks.
//!
//! The n-mode matricization `T_(n)` has row `k` equal to the column-major
//! vectorization of the slice obtained by fixing index `n` to `k`:
//!
//! * `T_(1)[i, a + q2·c] = T[i, a, c]`
//! * `T_(2)[a, i + q1·c] = T[i, a, c]`
//! * `T_(3)[c, i + q1·a] = T[i, a, c]`
//!
//! so that the mode-n product satisfies `(T ×ₙ X)_(n) = X T_(n)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::symm::{qd_matrix, sd, skron_unchecked};

/// Dense real tensor of order three.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    /// Zero tensor of the given dimensions.
    pub fn zeros(q1: usize, q2: usize, q3: usize) -> Self {
        Tensor3 { dims: [q1, q2, q3], data: vec![0.0; q1 * q2 * q3] }
    }

    /// Tensor with entries `f(i, a, c)`.
    pub fn from_fn(q1: usize, q2: usize, q3: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(q1, q2, q3);
        for c in 0..q3 {
            for a in 0..q2 {
                for i in 0..q1 {
                    t.data[i + q1 * (a + q2 * c)] = f(i, a, c);
                }
            }
        }
        t
    }

    /// Tensor whose frontal slices `T[:, :, c]` are the given equally shaped matrices.
    pub fn from_frontal_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let first = slices.first().ok_or(Error::EmptyModeList)?;
        let (q1, q2) = first.shape();
        if slices.iter().any(|s| s.shape() != (q1, q2)) {
            return Err(Error::ShapeMismatch("frontal slices differ in shape".into()));
        }
        let mut data = Vec::with_capacity(q1 * q2 * slices.len());
        for s in slices {
            data.extend_from_slice(s.as_slice());
        }
        Ok(Tensor3 { dims: [q1, q2, slices.len()], data })
    }

    /// Dimensions `(q1, q2, q3)`.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Size along mode `n` (one-based).
    pub fn dim(&self, n: usize) -> Result<usize> {
        check_mode(n)?;
        Ok(self.dims[n - 1])
    }

    /// Entry `T[i, a, c]` (zero-based).
    pub fn get(&self, i: usize, a: usize, c: usize) -> f64 {
        let [q1, q2, _] = self.dims;
        self.data[i + q1 * (a + q2 * c)]
    }

    /// Sets entry `T[i, a, c]`.
    pub fn set(&mut self, i: usize, a: usize, c: usize, v: f64) {
        let [q1, q2, _] = self.dims;
        self.data[i + q1 * (a + q2 * c)] = v;
    }

    /// Raw buffer in the documented layout.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Frontal slice `T[:, :, c]` as a `q1 × q2` matrix.
    pub fn frontal_slice(&self, c: usize) -> DMatrix<f64> {
        let [q1, q2, _] = self.dims;
        DMatrix::from_column_slice(q1, q2, &self.data[q1 * q2 * c..q1 * q2 * (c + 1)])
    }

    /// All frontal slices.
    pub fn frontal_slices(&self) -> Vec<DMatrix<f64>> {
        (0..self.dims[2]).map(|c| self.frontal_slice(c)).collect()
    }

    /// Sub-tensor keeping mode-2 indices in `range`.
    pub fn mode2_range(&self, range: std::ops::Range<usize>) -> Tensor3 {
        let [q1, _, q3] = self.dims;
        let start = range.start;
        Tensor3::from_fn(q1, range.len(), q3, |i, a, c| self.get(i, a + start, c))
    }

    /// Sub-tensor keeping mode-3 indices in `range`.
    pub fn mode3_range(&self, range: std::ops::Range<usize>) -> Tensor3 {
        let [q1, q2, _] = self.dims;
        let start = range.start;
        Tensor3::from_fn(q1, q2, range.len(), |i, a, c| self.get(i, a, c + start))
    }

    /// Largest absolute entry.
    pub fn amax(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

fn check_mode(n: usize) -> Result<()> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidMode(n))
    }
}

/// n-mode matricization `T_(n)` of shape `q_n × Π_{k≠n} q_k`.
pub fn matricize(t: &Tensor3, n: usize) -> Result<DMatrix<f64>> {
    check_mode(n)?;
    let [q1, q2, q3] = t.dims;
    Ok(match n {
        1 => DMatrix::from_column_slice(q1, q2 * q3, &t.data),
        2 => DMatrix::from_fn(q2, q1 * q3, |a, col| t.get(col % q1, a, col / q1)),
        _ => DMatrix::from_fn(q3, q1 * q2, |c, col| t.get(col % q1, col / q1, c)),
    })
}

/// Inverse of [`matricize`]: folds `m` back into a tensor of dimensions `dims`.
pub fn fold(m: &DMatrix<f64>, n: usize, dims: [usize; 3]) -> Result<Tensor3> {
    check_mode(n)?;
    let [q1, q2, q3] = dims;
    let expect = match n {
        1 => (q1, q2 * q3),
        2 => (q2, q1 * q3),
        _ => (q3, q1 * q2),
    };
    if m.shape() != expect {
        return Err(Error::ShapeMismatch(format!(
            "cannot fold {}x{} into mode-{n} matricization of {:?}",
            m.nrows(),
            m.ncols(),
            dims
        )));
    }
    Ok(match n {
        1 => Tensor3 { dims, data: m.as_slice().to_vec() },
        2 => Tensor3::from_fn(q1, q2, q3, |i, a, c| m[(a, i + q1 * c)]),
        _ => Tensor3::from_fn(q1, q2, q3, |i, a, c| m[(c, i + q1 * a)]),
    })
}

/// Mode-n product `T ×ₙ X` with `X` of shape `p × q_n`.
pub fn mode_product(t: &Tensor3, x: &DMatrix<f64>, n: usize) -> Result<Tensor3> {
    let qn = t.dim(n)?;
    if x.ncols() != qn {
        return Err(Error::ShapeMismatch(format!(
            "mode-{n} product needs {qn} columns, got {}",
            x.ncols()
        )));
    }
    let mut dims = t.dims;
    dims[n - 1] = x.nrows();
    fold(&(x * matricize(t, n)?), n, dims)
}

/// Mode-n vector product `T ×̄ₙ x = Σ_j x_j T_{n|j}`.
///
/// The result keeps the other two modes in their original order: a
/// `q2 × q3` matrix for `n = 1`, `q1 × q3` for `n = 2`, `q1 × q2` for `n = 3`.
pub fn mode_vec_product(t: &Tensor3, x: &DVector<f64>, n: usize) -> Result<DMatrix<f64>> {
    let qn = t.dim(n)?;
    if x.len() != qn {
        return Err(Error::ShapeMismatch(format!(
            "mode-{n} vector product needs length {qn}, got {}",
            x.len()
        )));
    }
    let [q1, q2, q3] = t.dims;
    Ok(match n {
        1 => DMatrix::from_fn(q2, q3, |a, c| (0..q1).map(|i| x[i] * t.get(i, a, c)).sum()),
        2 => DMatrix::from_fn(q1, q3, |i, c| (0..q2).map(|a| x[a] * t.get(i, a, c)).sum()),
        _ => {
            let mut out = DMatrix::zeros(q1, q2);
            for c in 0..q3 {
                if x[c] != 0.0 {
                    out += t.frontal_slice(c) * x[c];
                }
            }
            out
        }
    })
}

/// Factor applied along one mode by [`tucker`].
#[derive(Debug, Clone)]
pub enum Factor {
    /// Leave the mode unchanged.
    Identity,
    /// Multiply the mode by a matrix with `q_n` columns.
    Matrix(DMatrix<f64>),
    /// Contract the mode with a vector of length `q_n`; the axis is removed.
    Vector(DVector<f64>),
}

/// Result of [`tucker`]: the product tensor plus the modes that were contracted away.
#[derive(Debug, Clone)]
pub struct TuckerOutput {
    tensor: Tensor3,
    contracted: [bool; 3],
}

impl TuckerOutput {
    /// Full tensor, with contracted modes kept as singleton axes.
    pub fn tensor(&self) -> &Tensor3 {
        &self.tensor
    }

    /// Number of remaining (uncontracted) modes.
    pub fn order(&self) -> usize {
        self.contracted.iter().filter(|c| !**c).count()
    }

    /// Result as a matrix when exactly one mode was contracted.
    pub fn into_matrix(self) -> Result<DMatrix<f64>> {
        let keep: Vec<usize> = (0..3).filter(|&k| !self.contracted[k]).collect();
        if keep.len() != 2 {
            return Err(Error::ShapeMismatch(format!("tucker result has order {}, not 2", keep.len())));
        }
        let d = self.tensor.dims;
        let t = &self.tensor;
        Ok(DMatrix::from_fn(d[keep[0]], d[keep[1]], |r, s| {
            let mut idx = [0usize; 3];
            idx[keep[0]] = r;
            idx[keep[1]] = s;
            t.get(idx[0], idx[1], idx[2])
        }))
    }

    /// Result as a vector when exactly two modes were contracted.
    pub fn into_vector(self) -> Result<DVector<f64>> {
        let keep: Vec<usize> = (0..3).filter(|&k| !self.contracted[k]).collect();
        if keep.len() != 1 {
            return Err(Error::ShapeMismatch(format!("tucker result has order {}, not 1", keep.len())));
        }
        Ok(DVector::from_column_slice(&self.tensor.data))
    }

    /// Result as a scalar when all modes were contracted.
    pub fn into_scalar(self) -> Result<f64> {
        if self.order() != 0 {
            return Err(Error::ShapeMismatch(format!("tucker result has order {}, not 0", self.order())));
        }
        Ok(self.tensor.data[0])
    }
}

/// Tucker operator `⟦T; X1, X2, X3⟧ = ((T ×₃ X3) ×₂ X2) ×₁ X1`.
///
/// Vector factors act as `1 × q_n` matrices and their axis is removed once
/// all products are applied.
pub fn tucker(t: &Tensor3, factors: [&Factor; 3]) -> Result<TuckerOutput> {
    let mut cur = t.clone();
    let mut contracted = [false; 3];
    for n in [3usize, 2, 1] {
        match factors[n - 1] {
            Factor::Identity => {}
            Factor::Matrix(x) => cur = mode_product(&cur, x, n)?,
            Factor::Vector(v) => {
                cur = mode_product(&cur, &DMatrix::from_row_slice(1, v.len(), v.as_slice()), n)?;
                contracted[n - 1] = true;
            }
        }
    }
    Ok(TuckerOutput { tensor: cur, contracted })
}

/// Tensor Kronecker product with
/// `(T ⊗ T)[i + q1·j, a + q2·b, c + q3·d] = T[i, a, c] · T[j, b, d]`.
pub fn tensor_kron(t: &Tensor3) -> Tensor3 {
    let [q1, q2, q3] = t.dims;
    Tensor3::from_fn(q1 * q1, q2 * q2, q3 * q3, |r, s, u| {
        t.get(r % q1, s % q2, u % q3) * t.get(r / q1, s / q2, u / q3)
    })
}

/// Symmetrized tensor Kronecker product `T ⊛ T = ⟦T ⊗ T; Q_{q1}, Q_{q2}, Q_{q3}⟧`.
///
/// Assembled slice by slice: the frontal slice indexed by the `svec`
/// position of the pair `(c, d)`, `c ≥ d`, equals `T_c ⊛ T_c` when `c = d`
/// and `√2 · (T_c ⊛ T_d)` otherwise, where `T_c` is the c-th frontal slice.
pub fn tensor_skron(t: &Tensor3) -> Tensor3 {
    let [q1, q2, q3] = t.dims;
    let slices = t.frontal_slices();
    let mut out = Vec::with_capacity(sd(q3));
    for d in 0..q3 {
        for c in d..q3 {
            let s = skron_unchecked(&slices[c], &slices[d]);
            out.push(if c == d { s } else { s * std::f64::consts::SQRT_2 });
        }
    }
    if out.is_empty() {
        return Tensor3::zeros(sd(q1), sd(q2), 0);
    }
    Tensor3::from_frontal_slices(&out).expect("slices share shape")
}

/// Brute-force `T ⊛ T` through the dense Kronecker tensor; for cross-checks.
pub fn tensor_skron_dense(t: &Tensor3) -> Tensor3 {
    let [q1, q2, q3] = t.dims;
    let k = tensor_kron(t);
    let f = |q| Factor::Matrix(qd_matrix(q));
    tucker(&k, [&f(q1), &f(q2), &f(q3)]).expect("conformable").tensor
}

/// Flattening upper bound `min_n ‖T_(n)‖₂` on the tensor spectral norm.
pub fn tensor_spectral_norm_ub(t: &Tensor3) -> f64 {
    (1..=3)
        .map(|n| crate::linalg::spectral_norm(&matricize(t, n).expect("valid mode")))
        .fold(f64::INFINITY, f64::min)
}

/// Lower bound on `sup{⟦T; x, z, w⟧ : ‖x‖ = ‖z‖ = ‖w‖ = 1}` by alternating maximization.
///
/// Each restart draws unit starting vectors from a ChaCha8 stream seeded
/// with `seed` and numbered by the restart index, then cycles through the
/// three modes, replacing one vector by the normalized contraction of the
/// tensor with the other two. The best value over all restarts and
/// iterations is returned, so adding restarts never lowers the result.
pub fn tensor_spectral_norm_lb(t: &Tensor3, iters: usize, restarts: usize, seed: u64) -> f64 {
    let [q1, q2, q3] = t.dims;
    if t.amax() == 0.0 || q1 * q2 * q3 == 0 {
        return 0.0;
    }
    let mut best = 0.0_f64;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut rand_unit = |n: usize| {
            let v = DVector::from_fn(n, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
            let nv = v.norm();
            if nv > 0.0 { v / nv } else { DVector::from_element(n, 1.0 / (n as f64).sqrt()) }
        };
        let mut x = rand_unit(q1);
        let mut z = rand_unit(q2);
        let mut w = rand_unit(q3);
        for _ in 0..iters.max(1) {
            // x <- T ×̄₂ z ×̄₃ w
            let m23 = mode_vec_product(t, &w, 3).expect("length q3");
            let gx = &m23 * &z;
            if let Some(v) = normalized(&gx) {
                x = v;
            }
            let gz = m23.transpose() * &x;
            if let Some(v) = normalized(&gz) {
                z = v;
            }
            let m13 = mode_vec_product(t, &x, 1).expect("length q1");
            let gw = m13.transpose() * &z;
            if let Some(v) = normalized(&gw) {
                w = v;
            }
            let val = (m13.transpose() * &z).dot(&w).abs();
            best = best.max(val);
        }
    }
    best
}

fn normalized(v: &DVector<f64>) -> Option<DVector<f64>> {
    let n = v.norm();
    (n > 0.0).then(|| v / n)
}
