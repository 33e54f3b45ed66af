//! Dense matrix utilities: norms, spectra, pseudoinverses and the truncated
//! Taylor operators used by the under-approximation engine.
//!
//! Every norm in this crate is the maximum norm on vectors and its induced
//! operator norm (maximum absolute row sum) on matrices.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{ReachError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff used for rank decisions.
pub const DEFAULT_TOL_RANK: f64 = 1e-10;

/// Relative width of the band used when comparing eigenvalues against
/// points of the imaginary axis; scaled by `1 + ‖A‖∞`.
pub const DEFAULT_TOL_EIG_REL: f64 = 1e-9;

/// Numeric thresholds shared by the invertibility tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rank: f64,
    pub eig_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: DEFAULT_TOL_RANK,
            eig_rel: DEFAULT_TOL_EIG_REL,
        }
    }
}

impl Tolerances {
    /// Absolute eigenvalue band for the matrix `a`.
    pub fn eig_band(&self, a: &Matrix) -> f64 {
        self.eig_rel * (1.0 + inf_norm(a))
    }
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn is_finite(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Eigenvalues of a square matrix, or `None` when the Schur iteration does
/// not converge.
pub fn eigenvalues(a: &Matrix) -> Option<Vec<Complex<f64>>> {
    assert!(a.is_square(), "eigenvalues of a non-square matrix");
    if a.nrows() == 0 {
        return Some(Vec::new());
    }
    let max_iter = 500 * a.nrows().max(4);
    a.clone()
        .try_schur(f64::EPSILON, max_iter)
        .map(|schur| schur.complex_eigenvalues().iter().copied().collect())
}

/// Spectral radius, or the `‖A‖∞` upper bound when the eigen solver fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRadius {
    pub value: f64,
    /// Set when `value` is the norm bound rather than an eigenvalue modulus.
    pub is_bound: bool,
}

pub fn spectral_radius(a: &Matrix) -> SpectralRadius {
    match eigenvalues(a) {
        Some(eigs) => SpectralRadius {
            value: eigs.iter().map(|z| z.norm()).fold(0.0, f64::max),
            is_bound: false,
        },
        None => SpectralRadius {
            value: inf_norm(a),
            is_bound: true,
        },
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn has_full_rank(sv: &[f64], expected: usize, tol_rank: f64) -> bool {
    if sv.len() < expected || expected == 0 {
        return false;
    }
    let max = sv[0];
    let min = sv[expected - 1];
    max > 0.0 && min > tol_rank * max
}

/// Moore–Penrose inverse of a full-row-rank matrix.
pub fn pinv(g: &Matrix, tol_rank: f64) -> Result<Matrix> {
    let rows = g.nrows();
    if rows > g.ncols() {
        return Err(ReachError::RankDeficient {
            rows,
            cols: g.ncols(),
            detail: "more rows than columns".into(),
        });
    }
    let svd = g.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0 && min > tol_rank * max) {
        return Err(ReachError::RankDeficient {
            rows,
            cols: g.ncols(),
            detail: format!("singular values span [{min:e}, {max:e}]"),
        });
    }
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    // G = U Σ Vᵀ  =>  G† = V Σ⁻¹ Uᵀ
    let mut scaled_v = v_t.transpose();
    for (j, s) in sv.iter().enumerate() {
        scaled_v.column_mut(j).scale_mut(1.0 / s);
    }
    Ok(scaled_v * u.transpose())
}

/// `‖G†‖∞` for a full-row-rank `G`.
pub fn pinv_inf_norm(g: &Matrix, tol_rank: f64) -> Result<f64> {
    pinv(g, tol_rank).map(|p| inf_norm(&p))
}

/// Tail of the exponential series: `e^r − Σ_{j<p} r^j/j!`.
///
/// Summed from the tail so small values stay accurate.
pub fn theta(r: f64, p: u32) -> f64 {
    assert!(r >= 0.0, "theta requires r >= 0");
    assert!(p >= 1, "theta requires p >= 1");
    if r == 0.0 {
        return 0.0;
    }
    // first tail term r^p / p!, built incrementally to avoid overflow
    let mut term = 1.0;
    for j in 1..=p {
        term *= r / f64::from(j);
    }
    if term == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut j = p;
    loop {
        sum += term;
        j += 1;
        term *= r / f64::from(j);
        // terms decrease once j > r
        if f64::from(j) > r && term <= 1e-17 * sum {
            break;
        }
        if !sum.is_finite() {
            break;
        }
    }
    sum
}

/// `𝓛(t,k) = Σ_{j=0}^{k−1} (tA)^j / j!`.
pub fn taylor_l(a: &Matrix, t: f64, k: u32) -> Matrix {
    assert!(a.is_square(), "taylor_l of a non-square matrix");
    assert!(k >= 1, "taylor_l requires k >= 1");
    let n = a.nrows();
    let ta = a * t;
    let mut acc = Matrix::identity(n, n);
    for j in (1..k).rev() {
        acc = &ta * &acc / f64::from(j);
        for i in 0..n {
            acc[(i, i)] += 1.0;
        }
    }
    acc
}

/// `𝓣(t,k) = Σ_{j=0}^{k−1} t^{j+1} A^j / (j+1)!`, the integral of `𝓛(·,k)` over `[0,t]`.
pub fn taylor_t(a: &Matrix, t: f64, k: u32) -> Matrix {
    assert!(a.is_square(), "taylor_t of a non-square matrix");
    assert!(k >= 1, "taylor_t requires k >= 1");
    let n = a.nrows();
    let ta = a * t;
    let mut acc = Matrix::identity(n, n);
    for j in (1..k).rev() {
        acc = &ta * &acc / f64::from(j + 1);
        for i in 0..n {
            acc[(i, i)] += 1.0;
        }
    }
    acc * t
}

/// Relative singular-value test for a square matrix.
pub fn is_invertible(m: &Matrix, tol_rank: f64) -> bool {
    assert!(m.is_square(), "is_invertible of a non-square matrix");
    has_full_rank(&singular_values(m), m.nrows(), tol_rank)
}

/// Whether `∫₀ᵗ e^{sA} ds` is invertible, i.e. no eigenvalue of `A` equals
/// `2πz𝐢/t` for a nonzero integer `z`.
///
/// Returns `false` when the eigenvalues cannot be computed.
pub fn integral_invertible(a: &Matrix, t: f64, tol_eig: f64) -> bool {
    assert!(t > 0.0, "integral_invertible requires t > 0");
    let Some(eigs) = eigenvalues(a) else {
        return false;
    };
    let step = 2.0 * PI / t;
    let rho = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let z_max = (t * rho / (2.0 * PI)).ceil() as i64 + 1;
    !eigs.iter().any(|ev| {
        if ev.re.abs() > tol_eig {
            return false;
        }
        (1..=z_max).any(|z| {
            let target = step * z as f64;
            (ev.im - target).abs() <= tol_eig || (ev.im + target).abs() <= tol_eig
        })
    })
}

/// Largest horizon below which `∫₀ᵗ e^{sA} ds` stays invertible:
/// `2π / max |Im λ|` over nonzero purely imaginary eigenvalues, `None` if
/// there are none.
pub fn invertibility_tmax(a: &Matrix, tol_eig: f64) -> Option<f64> {
    let eigs = eigenvalues(a)?;
    eigs.iter()
        .filter(|ev| ev.re.abs() <= tol_eig && ev.im.abs() > tol_eig)
        .map(|ev| ev.im.abs())
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |m| m.max(x))))
        .map(|max_im| 2.0 * PI / max_im)
}
