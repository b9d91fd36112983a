//! Dense 3-way tensors, CP reconstruction, mode unfoldings and Khatri-Rao
//! products.
//!
//! Entries are stored in a fixed linear order: index `(i, j, k)` maps to
//! `i + j*n1 + k*n1*n2` (zero-based, mode-1 fastest). All unfolding and
//! Khatri-Rao row conventions below are chosen so that the three identities
//!
//! ```text
//! unfold_mode1(X)     = A * khatri_rao(C, B)^T
//! unfold_mode2(X)     = B * khatri_rao(C, A)^T
//! matricize_mode3(X)  = C * khatri_rao(B, A)^T
//! ```
//!
//! hold exactly for `X = cp_reconstruct([A, B, C])`.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Dense real 3-way tensor with dimensions `(n1, n2, n3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dims: (usize, usize, usize), values: Vec<f64>) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "tensor dims must be positive, got {:?}",
                dims
            )));
        }
        if values.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for dims {:?}, got {}",
                n,
                dims,
                values.len()
            )));
        }
        Ok(Tensor3 { dims, values })
    }

    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Tensor3 {
            dims,
            values: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Tensor3::zeros(dims);
        for k in 0..dims.2 {
            for j in 0..dims.1 {
                for i in 0..dims.0 {
                    t.values[i + j * dims.0 + k * dims.0 * dims.1] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + j * self.dims.0 + k * self.dims.0 * self.dims.1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.linear_index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.linear_index(i, j, k);
        self.values[idx] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max_{i,j,k} |X_{i,j,k}|`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Tensor3) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// CP factor triple `(A, B, C)` with `A: n1 x F`, `B: n2 x F`, `C: n3 x F`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub c: Array2<f64>,
}

impl CpFactors {
    pub fn new(a: Array2<f64>, b: Array2<f64>, c: Array2<f64>) -> Result<Self> {
        if a.ncols() != b.ncols() || b.ncols() != c.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "factor column counts differ: A has {}, B has {}, C has {}",
                a.ncols(),
                b.ncols(),
                c.ncols()
            )));
        }
        if a.ncols() == 0 {
            return Err(Error::InvalidParameter("rank F must be positive".into()));
        }
        Ok(CpFactors { a, b, c })
    }

    /// Number of latent components F.
    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.nrows(), self.b.nrows(), self.c.nrows())
    }
}

/// Reconstructs the dense tensor `sum_f a_f ∘ b_f ∘ c_f`.
pub fn cp_reconstruct(factors: &CpFactors) -> Tensor3 {
    let (n1, n2, n3) = factors.dims();
    let rank = factors.rank();
    let mut t = Tensor3::zeros((n1, n2, n3));
    let vals = t.values_mut();
    for f in 0..rank {
        for k in 0..n3 {
            let ck = factors.c[(k, f)];
            if ck == 0.0 {
                continue;
            }
            for j in 0..n2 {
                let bc = factors.b[(j, f)] * ck;
                let base = j * n1 + k * n1 * n2;
                for i in 0..n1 {
                    vals[base + i] += factors.a[(i, f)] * bc;
                }
            }
        }
    }
    t
}

/// Column-wise Kronecker product: column `f` of the result is
/// `outer[:,f] ⊗ inner[:,f]` with row index `(i, j) -> i + j*n_inner`, where
/// `i` ranges over rows of `inner` and `j` over rows of `outer`.
pub fn khatri_rao(outer: &Array2<f64>, inner: &Array2<f64>) -> Result<Array2<f64>> {
    if outer.ncols() != inner.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "khatri_rao column mismatch: {} vs {}",
            outer.ncols(),
            inner.ncols()
        )));
    }
    let (no, ni, rank) = (outer.nrows(), inner.nrows(), outer.ncols());
    let mut out = Array2::zeros((no * ni, rank));
    for f in 0..rank {
        for j in 0..no {
            let oj = outer[(j, f)];
            for i in 0..ni {
                out[(i + j * ni, f)] = inner[(i, f)] * oj;
            }
        }
    }
    Ok(out)
}

/// Mode-1 unfolding: `n1 x (n2*n3)`, column `(j, k) -> j + k*n2`.
pub fn unfold_mode1(t: &Tensor3) -> Array2<f64> {
    let (n1, n2, n3) = t.dims();
    Array2::from_shape_fn((n1, n2 * n3), |(i, col)| {
        let j = col % n2;
        let k = col / n2;
        t.get(i, j, k)
    })
}

/// Mode-2 unfolding: `n2 x (n1*n3)`, column `(i, k) -> i + k*n1`.
pub fn unfold_mode2(t: &Tensor3) -> Array2<f64> {
    let (n1, n2, n3) = t.dims();
    Array2::from_shape_fn((n2, n1 * n3), |(j, col)| {
        let i = col % n1;
        let k = col / n1;
        t.get(i, j, k)
    })
}

/// Mode-3 matricization: `n3 x (n1*n2)`, column `(i, j) -> i + j*n1`.
pub fn matricize_mode3(t: &Tensor3) -> Array2<f64> {
    let (n1, n2, n3) = t.dims();
    Array2::from_shape_fn((n3, n1 * n2), |(k, col)| {
        let i = col % n1;
        let j = col / n1;
        t.get(i, j, k)
    })
}

pub fn fold_mode1(m: &Array2<f64>, dims: (usize, usize, usize)) -> Result<Tensor3> {
    let (n1, n2, n3) = dims;
    if m.nrows() != n1 || m.ncols() != n2 * n3 {
        return Err(Error::DimensionMismatch(format!(
            "fold_mode1 expects {}x{}, got {}x{}",
            n1,
            n2 * n3,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(Tensor3::from_fn(dims, |i, j, k| m[(i, j + k * n2)]))
}

pub fn fold_mode2(m: &Array2<f64>, dims: (usize, usize, usize)) -> Result<Tensor3> {
    let (n1, n2, n3) = dims;
    if m.nrows() != n2 || m.ncols() != n1 * n3 {
        return Err(Error::DimensionMismatch(format!(
            "fold_mode2 expects {}x{}, got {}x{}",
            n2,
            n1 * n3,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(Tensor3::from_fn(dims, |i, j, k| m[(j, i + k * n1)]))
}

pub fn fold_mode3(m: &Array2<f64>, dims: (usize, usize, usize)) -> Result<Tensor3> {
    let (n1, n2, n3) = dims;
    if m.nrows() != n3 || m.ncols() != n1 * n2 {
        return Err(Error::DimensionMismatch(format!(
            "fold_mode3 expects {}x{}, got {}x{}",
            n3,
            n1 * n2,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(Tensor3::from_fn(dims, |i, j, k| m[(k, i + j * n1)]))
}

/// Number of nonzero entries of a matrix.
pub fn nnz(m: &Array2<f64>) -> usize {
    m.iter().filter(|v| **v != 0.0).count()
}
