//! Constants and bound evaluation for the error analysis: the smoothness
//! exponent beta, quantization level counts, the KL bound Q_D, the
//! regularizer threshold, the code-length penalty with its Kraft check, and
//! the Gaussian-case error-bound right-hand side.
//!
//! Unit conventions follow the analysis: `log` is natural in beta, the
//! lambda threshold and the error bound; the penalty counts bits (log2).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tensor::{cp_reconstruct, CpFactors};

/// Number of quantization levels for factor entries:
/// `L_lev = 2^ceil(log2(n_max^beta))`.
pub fn l_lev(n_max: usize, beta: f64) -> u64 {
    let bits = (beta * (n_max as f64).log2() - 1e-9).ceil().max(0.0) as u32;
    1u64 << bits
}

/// Number of location codes for nonzeros of C: `L_loc = 2^ceil(log2(n3 F))`.
pub fn l_loc(n3: usize, rank: usize) -> u64 {
    let bits = (((n3 * rank) as f64).log2() - 1e-9).ceil().max(0.0) as u32;
    1u64 << bits
}

/// `beta = max{1, 1 + log(14 F A_max B_max C_max / X_max + 1)/log(n_max)}`.
pub fn compute_beta(
    rank: usize,
    a_max: f64,
    b_max: f64,
    c_max: f64,
    x_max: f64,
    n_max: usize,
) -> Result<f64> {
    if rank == 0 || !(a_max > 0.0) || !(b_max > 0.0) || !(c_max > 0.0) || !(x_max > 0.0) {
        return Err(Error::InvalidParameter(
            "compute_beta requires positive inputs".into(),
        ));
    }
    if n_max < 2 {
        return Err(Error::InvalidParameter("n_max must be >= 2".into()));
    }
    let ratio = 14.0 * rank as f64 * a_max * b_max * c_max / x_max;
    let second = 1.0 + (ratio + 1.0).ln() / (n_max as f64).ln();
    Ok(second.max(1.0))
}

/// Gaussian KL bound over the box: `Q_D = 2 X_max^2 / sigma^2`.
pub fn compute_qd_gaussian(x_max: f64, sigma: f64) -> f64 {
    2.0 * x_max * x_max / (sigma * sigma)
}

/// Regularizer choice `lambda = 4 (1 + 2 Q_D / 3)(beta + 2) log(n_max)`,
/// which meets the requirement of the error analysis with equality.
pub fn compute_lambda(beta: f64, q_d: f64, n_max: usize) -> f64 {
    4.0 * (1.0 + 2.0 * q_d / 3.0) * (beta + 2.0) * (n_max as f64).ln()
}

/// Smallest regularizer admitted by the error analysis:
/// `lambda >= 4 (beta + 2)(1 + 2 Q/3) log n_max`.
pub fn lambda_lower_bound(beta: f64, q_d: f64, n_max: usize) -> f64 {
    4.0 * (beta + 2.0) * (1.0 + 2.0 * q_d / 3.0) * (n_max as f64).ln()
}

/// Code-length penalty in bits:
/// `pen = (n1 + n2) F log2(L_lev) + c_nnz log2(L_loc L_lev)`.
pub fn penalty(
    n1: usize,
    n2: usize,
    n3: usize,
    rank: usize,
    c_nnz: usize,
    beta: f64,
) -> Result<f64> {
    if c_nnz > n3 * rank {
        return Err(Error::InvalidParameter(format!(
            "c_nnz = {} exceeds n3*F = {}",
            c_nnz,
            n3 * rank
        )));
    }
    let n_max = n1.max(n2).max(n3).max(rank);
    let lev_bits = l_lev(n_max, beta).trailing_zeros() as f64;
    let loc_bits = l_loc(n3, rank).trailing_zeros() as f64;
    Ok(((n1 + n2) * rank) as f64 * lev_bits + c_nnz as f64 * (loc_bits + lev_bits))
}

/// Checkable predicate: `log2(L_loc L_lev) <= 2 (beta + 2) log(n_max)`,
/// valid for n_max >= 4.
pub fn codelength_predicate(n1: usize, n2: usize, n3: usize, rank: usize, beta: f64) -> bool {
    let n_max = n1.max(n2).max(n3).max(rank);
    let lev_bits = l_lev(n_max, beta).trailing_zeros() as f64;
    let loc_bits = l_loc(n3, rank).trailing_zeros() as f64;
    lev_bits + loc_bits <= 2.0 * (beta + 2.0) * (n_max as f64).ln()
}

/// Quantization-level predicates used by the Gaussian-case analysis. The
/// first follows from the beta formula; the second is stated there without
/// an explicit derivation, so both are exposed as checks rather than
/// asserted.
pub fn l_lev_exceeds_quantization_floor(
    n_max: usize,
    beta: f64,
    rank: usize,
    a_max: f64,
    b_max: f64,
    c_max: f64,
    x_max: f64,
) -> bool {
    l_lev(n_max, beta) as f64 >= 14.0 * rank as f64 * a_max * b_max * c_max / x_max + 1.0
}

#[allow(clippy::too_many_arguments)]
pub fn l_lev_exceeds_sqrt_m_floor(
    n_max: usize,
    beta: f64,
    rank: usize,
    m: usize,
    a_max: f64,
    b_max: f64,
    c_max: f64,
    x_max: f64,
) -> bool {
    l_lev(n_max, beta) as f64
        >= 7.0 * rank as f64 * (m as f64).sqrt() * a_max * b_max * c_max / x_max
}

/// `(n1 + n2) F + ||C||_0`, the model's degrees of freedom.
pub fn degrees_of_freedom(n1: usize, n2: usize, rank: usize, c_nnz: usize) -> usize {
    (n1 + n2) * rank + c_nnz
}

/// Gaussian-case bound on the expected per-entry squared error:
/// `70 X_max^2 log(m)/m
///  + 24 (sigma^2 + 2 X_max^2)(beta + 2) log(n_max) ((n1+n2)F + c_nnz)/m`.
#[allow(clippy::too_many_arguments)]
pub fn error_bound_rhs(
    n1: usize,
    n2: usize,
    n3: usize,
    rank: usize,
    c_nnz: usize,
    m: usize,
    sigma: f64,
    x_max: f64,
    beta: f64,
) -> Result<f64> {
    if m == 0 || m > n1 * n2 * n3 {
        return Err(Error::InvalidParameter(format!(
            "m = {} out of range (1..={})",
            m,
            n1 * n2 * n3
        )));
    }
    let n_max = n1.max(n2).max(n3).max(rank) as f64;
    let m_f = m as f64;
    let dof = degrees_of_freedom(n1, n2, rank, c_nnz) as f64;
    let first = 70.0 * x_max * x_max * m_f.ln() / m_f;
    let second =
        24.0 * (sigma * sigma + 2.0 * x_max * x_max) * (beta + 2.0) * n_max.ln() * dof / m_f;
    Ok(first + second)
}

/// Bundle of the derived constants for one problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryParams {
    pub beta: f64,
    pub l_lev: u64,
    pub l_loc: u64,
    pub q_d: f64,
    pub lambda_min: f64,
    pub lambda_choice: f64,
    pub n_max: usize,
}

impl TheoryParams {
    #[allow(clippy::too_many_arguments)]
    pub fn for_gaussian(
        n1: usize,
        n2: usize,
        n3: usize,
        rank: usize,
        a_max: f64,
        b_max: f64,
        c_max: f64,
        x_max: f64,
        sigma: f64,
    ) -> Result<Self> {
        let n_max = n1.max(n2).max(n3).max(rank);
        let beta = compute_beta(rank, a_max, b_max, c_max, x_max, n_max)?;
        let q_d = compute_qd_gaussian(x_max, sigma);
        Ok(TheoryParams {
            beta,
            l_lev: l_lev(n_max, beta),
            l_loc: l_loc(n3, rank),
            q_d,
            lambda_min: lambda_lower_bound(beta, q_d, n_max),
            lambda_choice: compute_lambda(beta, q_d, n_max),
            n_max,
        })
    }
}

/// Description of a (tiny) discretized candidate class for the enumeration
/// Kraft check. Factor entries range over `L_lev` uniform levels on
/// `[-bound, bound]`; C entries are zero or one of those levels, optionally
/// restricted to an exact sparsity; candidates must satisfy
/// `||[A,B,C]||_inf <= x_max`.
#[derive(Debug, Clone)]
pub struct KraftClass {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub rank: usize,
    pub l_lev: u64,
    pub l_loc: u64,
    pub a_max: f64,
    pub b_max: f64,
    pub c_max: f64,
    pub x_max: f64,
    /// When set, the class keeps only candidates with `||C||_0` exactly this.
    pub exact_sparsity: Option<usize>,
}

fn levels(count: u64, bound: f64) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    (0..count)
        .map(|i| -bound + 2.0 * bound * i as f64 / (count - 1) as f64)
        .collect()
}

/// Exhaustive `sum over the class of 2^-pen(X)` with
/// `pen = (n1+n2) F log2(L_lev) + ||C||_0 log2(L_loc L_lev)`.
/// Size-capped: errors out beyond 200_000 codewords.
pub fn kraft_sum(class: &KraftClass) -> Result<f64> {
    const CAP: f64 = 200_000.0;
    let a_cells = class.n1 * class.rank;
    let b_cells = class.n2 * class.rank;
    let c_cells = class.n3 * class.rank;
    let lev = class.l_lev as f64;
    let total =
        lev.powi(a_cells as i32) * lev.powi(b_cells as i32) * (lev + 1.0).powi(c_cells as i32);
    if !(total <= CAP) {
        return Err(Error::InvalidParameter(format!(
            "class too large to enumerate: ~{} codewords",
            total
        )));
    }
    let lev_bits = (class.l_lev as f64).log2();
    let loc_bits = (class.l_loc as f64).log2();
    let a_levels = levels(class.l_lev, class.a_max);
    let b_levels = levels(class.l_lev, class.b_max);
    let c_levels: Vec<f64> = std::iter::once(0.0)
        .chain(levels(class.l_lev, class.c_max))
        .collect();

    let mut sum = 0.0;
    let mut a_assign = vec![0usize; a_cells];
    loop {
        let mut b_assign = vec![0usize; b_cells];
        loop {
            let mut c_assign = vec![0usize; c_cells];
            loop {
                let c_nnz = c_assign.iter().filter(|&&v| v != 0).count();
                let admissible = class.exact_sparsity.map(|k| c_nnz == k).unwrap_or(true);
                if admissible {
                    let a = Array2::from_shape_fn((class.n1, class.rank), |(i, f)| {
                        a_levels[a_assign[i * class.rank + f]]
                    });
                    let b = Array2::from_shape_fn((class.n2, class.rank), |(i, f)| {
                        b_levels[b_assign[i * class.rank + f]]
                    });
                    let c = Array2::from_shape_fn((class.n3, class.rank), |(i, f)| {
                        c_levels[c_assign[i * class.rank + f]]
                    });
                    let factors = CpFactors::new(a, b, c)?;
                    if cp_reconstruct(&factors).max_abs() <= class.x_max {
                        let pen = ((class.n1 + class.n2) * class.rank) as f64 * lev_bits
                            + c_nnz as f64 * (loc_bits + lev_bits);
                        sum += 2.0_f64.powf(-pen);
                    }
                }
                if !increment(&mut c_assign, class.l_lev as usize + 1) {
                    break;
                }
            }
            if !increment(&mut b_assign, class.l_lev as usize) {
                break;
            }
        }
        if !increment(&mut a_assign, class.l_lev as usize) {
            break;
        }
    }
    Ok(sum)
}

fn increment(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}
