//! Zonotopes `Z⟨c,G⟩ = c + G·B∞` and their exact set arithmetic.

use std::fmt::Write as _;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{ReachError, Result};
use crate::linalg::{self, Matrix, Vector};

/// Upper limit on the number of `n`-subsets enumerated by [`Zonotope::volume`].
pub const VOLUME_SUBSET_LIMIT: u128 = 1_000_000;
pub const VOLUME_MAX_DIM: usize = 6;

/// A zonotope with center `c ∈ ℝⁿ` and generator matrix `G ∈ ℝ^{n×p}`.
///
/// Zero generator columns are dropped on construction, so `gen_count`
/// always counts nonzero generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: Vector,
    generators: Matrix,
}

impl Zonotope {
    pub fn new(center: Vector, generators: Matrix) -> Result<Self> {
        if center.is_empty() {
            return Err(ReachError::InvalidSystem("zonotope of dimension 0".into()));
        }
        if generators.nrows() != center.len() {
            return Err(ReachError::DimensionMismatch {
                expected: center.len(),
                found: generators.nrows(),
            });
        }
        if !center.iter().all(|x| x.is_finite()) || !linalg::is_finite(&generators) {
            return Err(ReachError::InvalidSystem("non-finite zonotope entry".into()));
        }
        Ok(Self::from_parts(center, generators))
    }

    fn from_parts(center: Vector, generators: Matrix) -> Self {
        let keep: Vec<usize> = (0..generators.ncols())
            .filter(|&j| generators.column(j).iter().any(|&x| x != 0.0))
            .collect();
        let generators = if keep.len() == generators.ncols() {
            generators
        } else {
            generators.select_columns(keep.iter())
        };
        Self { center, generators }
    }

    pub fn point(center: Vector) -> Self {
        let n = center.len();
        Self::from_parts(center, Matrix::zeros(n, 0))
    }

    pub fn origin(n: usize) -> Self {
        Self::point(Vector::zeros(n))
    }

    /// The max-norm unit ball `B∞ⁿ`.
    pub fn unit_box(n: usize) -> Self {
        Self::from_parts(Vector::zeros(n), Matrix::identity(n, n))
    }

    /// Axis-aligned box `[lo, hi]`.
    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(ReachError::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        let center = Vector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)));
        let radii = Vector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)));
        Self::new(center, Matrix::from_diagonal(&radii))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn gen_count(&self) -> usize {
        self.generators.ncols()
    }

    pub fn order(&self) -> f64 {
        self.gen_count() as f64 / self.dim() as f64
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn generators(&self) -> &Matrix {
        &self.generators
    }

    /// `{0}` exactly.
    pub fn is_origin(&self) -> bool {
        self.gen_count() == 0 && self.center.iter().all(|&x| x == 0.0)
    }

    /// Whether the generators span `ℝⁿ`, judged by relative singular values.
    pub fn is_full_dim(&self, tol_rank: f64) -> bool {
        if self.gen_count() < self.dim() {
            return false;
        }
        let sv = linalg::singular_values(&self.generators);
        let max = sv[0];
        max > 0.0 && sv[self.dim() - 1] > tol_rank * max
    }

    /// `L·Z = Z⟨Lc, LG⟩`.
    pub fn linear_map(&self, l: &Matrix) -> Result<Self> {
        if l.ncols() != self.dim() {
            return Err(ReachError::DimensionMismatch {
                expected: self.dim(),
                found: l.ncols(),
            });
        }
        Ok(Self::from_parts(l * &self.center, l * &self.generators))
    }

    /// `Z⟨c₁+c₂, [G₁ G₂]⟩`.
    pub fn minkowski_sum(&self, other: &Self) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(ReachError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let n = self.dim();
        let (p, q) = (self.gen_count(), other.gen_count());
        let mut generators = Matrix::zeros(n, p + q);
        generators.columns_mut(0, p).copy_from(&self.generators);
        generators.columns_mut(p, q).copy_from(&other.generators);
        Ok(Self {
            center: &self.center + &other.center,
            generators,
        })
    }

    /// Sum of many zonotopes of equal dimension; `None` for an empty list.
    pub fn sum_all<'a>(sets: impl IntoIterator<Item = &'a Zonotope>) -> Result<Option<Self>> {
        let sets: Vec<&Zonotope> = sets.into_iter().collect();
        let Some(first) = sets.first() else {
            return Ok(None);
        };
        let n = first.dim();
        if let Some(bad) = sets.iter().find(|z| z.dim() != n) {
            return Err(ReachError::DimensionMismatch {
                expected: n,
                found: bad.dim(),
            });
        }
        let total: usize = sets.iter().map(|z| z.gen_count()).sum();
        let mut center = Vector::zeros(n);
        let mut generators = Matrix::zeros(n, total);
        let mut offset = 0;
        for z in sets {
            center += &z.center;
            generators.columns_mut(offset, z.gen_count()).copy_from(&z.generators);
            offset += z.gen_count();
        }
        Ok(Some(Self { center, generators }))
    }

    /// `Z⟨c, αG⟩`.
    pub fn scale_generators(&self, alpha: f64) -> Self {
        Self::from_parts(self.center.clone(), &self.generators * alpha)
    }

    /// `−Z = Z⟨−c, G⟩` (zonotopes are centrally symmetric).
    pub fn negate(&self) -> Self {
        Self {
            center: -&self.center,
            generators: self.generators.clone(),
        }
    }

    /// `sup_{x∈Z} ‖x‖∞ = max_i |c_i| + Σ_j |G_ij|`.
    pub fn set_norm(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.center[i].abs() + self.generators.row(i).iter().map(|g| g.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Support function `h_Z(d) = dᵀc + Σ_j |dᵀg_j|`.
    pub fn support(&self, d: &Vector) -> f64 {
        assert_eq!(d.len(), self.dim(), "direction dimension");
        let spread: f64 = self.generators.tr_mul(d).iter().map(|x| x.abs()).sum();
        self.center.dot(d) + spread
    }

    /// Point membership: feasibility of `Gξ = x − c` with `‖ξ‖∞ ≤ 1 + tol`,
    /// decided by a linear program.
    pub fn contains(&self, point: &Vector, tol: f64) -> bool {
        assert_eq!(point.len(), self.dim(), "point dimension");
        let offset = point - &self.center;
        if self.gen_count() == 0 {
            return offset.iter().all(|x| x.abs() <= tol);
        }
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let xi: Vec<_> = (0..self.gen_count()).map(|_| lp.add_var(0.0, (-1.0 - tol, 1.0 + tol))).collect();
        for i in 0..self.dim() {
            let row: Vec<_> = xi.iter().enumerate().map(|(j, &v)| (v, self.generators[(i, j)])).collect();
            lp.add_constraint(row.as_slice(), ComparisonOp::Eq, offset[i]);
        }
        lp.solve().is_ok()
    }

    /// Order reduction by generator summation.
    ///
    /// Keeps the `⌊target_order·n⌋ − 1` generators of largest max-norm and
    /// replaces the rest by their sum, which yields a subset of `self`.
    /// Ties are broken by column index, lower index kept first.
    pub fn reduce_sum(&self, target_order: f64) -> Self {
        let n = self.dim();
        let budget = (target_order * n as f64).floor() as usize;
        assert!(budget >= 1, "reduce_sum needs target_order·n >= 1");
        if self.gen_count() <= budget {
            return self.clone();
        }
        let norms: Vec<f64> = (0..self.gen_count())
            .map(|j| self.generators.column(j).iter().fold(0.0, |m: f64, x| m.max(x.abs())))
            .collect();
        let mut ranked: Vec<usize> = (0..self.gen_count()).collect();
        ranked.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
        let (kept, merged) = ranked.split_at(budget - 1);
        let mut kept = kept.to_vec();
        kept.sort_unstable();
        let mut generators = Matrix::zeros(n, budget);
        for (slot, &j) in kept.iter().enumerate() {
            generators.set_column(slot, &self.generators.column(j));
        }
        let mut sum = Vector::zeros(n);
        for &j in merged {
            sum += self.generators.column(j);
        }
        generators.set_column(budget - 1, &sum);
        Self::from_parts(self.center.clone(), generators)
    }

    /// Exact volume `2ⁿ Σ_{|S|=n} |det G_S|`, for small problems only.
    pub fn volume(&self) -> Result<f64> {
        let n = self.dim();
        let p = self.gen_count();
        let subsets = binomial(p as u128, n as u128);
        if n > VOLUME_MAX_DIM || subsets > VOLUME_SUBSET_LIMIT {
            return Err(ReachError::TooLarge { dim: n, subsets });
        }
        if p < n {
            return Ok(0.0);
        }
        let mut total = 0.0;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            total += self.generators.select_columns(idx.iter()).determinant().abs();
            // next n-combination of 0..p in lexicographic order
            let Some(pos) = (0..n).rev().find(|&i| idx[i] != i + p - n) else {
                break;
            };
            idx[pos] += 1;
            for i in pos + 1..n {
                idx[i] = idx[i - 1] + 1;
            }
        }
        Ok(total * 2f64.powi(n as i32))
    }

    /// Row selection onto the given (0-based) coordinates.
    pub fn project(&self, dims: &[usize]) -> Result<Self> {
        if let Some(&bad) = dims.iter().find(|&&d| d >= self.dim()) {
            return Err(ReachError::IndexOutOfRange {
                index: bad,
                dim: self.dim(),
            });
        }
        Ok(Self::from_parts(
            Vector::from_iterator(dims.len(), dims.iter().map(|&d| self.center[d])),
            self.generators.select_rows(dims.iter()),
        ))
    }

    /// Boundary polygon of a planar zonotope, counter-clockwise.
    ///
    /// Parallel generators are merged first, so no vertex is repeated and
    /// no three consecutive vertices are collinear.
    pub fn vertices_2d(&self) -> Vec<[f64; 2]> {
        assert_eq!(self.dim(), 2, "vertices_2d needs a planar zonotope");
        let c = [self.center[0], self.center[1]];
        // orient into the upper half plane, angle in [0, π)
        let mut gens: Vec<[f64; 2]> = self
            .generators
            .column_iter()
            .map(|g| {
                let (x, y) = (g[0], g[1]);
                if y < 0.0 || (y == 0.0 && x < 0.0) {
                    [-x, -y]
                } else {
                    [x, y]
                }
            })
            .collect();
        gens.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));
        let mut merged: Vec<[f64; 2]> = Vec::with_capacity(gens.len());
        for g in gens {
            match merged.last_mut() {
                Some(last) if parallel(*last, g) => {
                    last[0] += g[0];
                    last[1] += g[1];
                }
                _ => merged.push(g),
            }
        }
        match merged.len() {
            0 => return vec![c],
            1 => {
                let g = merged[0];
                return vec![[c[0] - g[0], c[1] - g[1]], [c[0] + g[0], c[1] + g[1]]];
            }
            _ => {}
        }
        let sum = merged.iter().fold([0.0, 0.0], |s, g| [s[0] + g[0], s[1] + g[1]]);
        // lowest vertex: all generators at −1 (they point upward)
        let mut v = [c[0] - sum[0], c[1] - sum[1]];
        let mut out = Vec::with_capacity(2 * merged.len());
        for g in merged.iter().chain(merged.iter()).enumerate().map(|(i, g)| {
            if i < merged.len() {
                [2.0 * g[0], 2.0 * g[1]]
            } else {
                [-2.0 * g[0], -2.0 * g[1]]
            }
        }) {
            out.push(v);
            v = [v[0] + g[0], v[1] + g[1]];
        }
        out
    }

    /// JSON object `{"center": [..], "generators": [[..row..], ..]}` with every
    /// number written to 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut s = String::from("{\"center\":[");
        write_numbers(&mut s, self.center.iter().copied());
        s.push_str("],\"generators\":[");
        for i in 0..self.dim() {
            if i > 0 {
                s.push(',');
            }
            s.push('[');
            write_numbers(&mut s, self.generators.row(i).iter().copied());
            s.push(']');
        }
        s.push_str("]}");
        s
    }
}

fn parallel(a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = a[0] * b[1] - a[1] * b[0];
    let scale = (a[0].hypot(a[1])) * (b[0].hypot(b[1]));
    cross.abs() <= 1e-14 * scale
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Appends comma-separated numbers in `{:.16e}` form (17 significant digits).
pub fn write_numbers(out: &mut String, values: impl Iterator<Item = f64>) {
    for (i, x) in values.enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{x:.16e}").expect("writing to a String");
    }
}

/// Wire form of a zonotope.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZonotopeJson {
    pub center: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
}

impl TryFrom<ZonotopeJson> for Zonotope {
    type Error = ReachError;

    fn try_from(wire: ZonotopeJson) -> Result<Self> {
        let n = wire.center.len();
        if wire.generators.len() != n {
            return Err(ReachError::InvalidConfig(format!(
                "generator matrix has {} rows, center has {n}",
                wire.generators.len()
            )));
        }
        let p = wire.generators.first().map_or(0, Vec::len);
        if wire.generators.iter().any(|row| row.len() != p) {
            return Err(ReachError::InvalidConfig("generator matrix is not rectangular".into()));
        }
        let flat: Vec<f64> = wire.generators.iter().flatten().copied().collect();
        Zonotope::new(Vector::from_vec(wire.center), Matrix::from_row_slice(n, p, &flat))
    }
}

impl From<&Zonotope> for ZonotopeJson {
    fn from(z: &Zonotope) -> Self {
        Self {
            center: z.center.iter().copied().collect(),
            generators: z.generators.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}
