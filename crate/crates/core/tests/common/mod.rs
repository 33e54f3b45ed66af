#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reach_under::linalg::{self, Matrix, Vector};
use reach_under::{SystemSpec, Zonotope};

pub const TOL_RANK: f64 = 1e-10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `A = [[0,0],[1,0]]`, `X₀ = {0}`, `U = [0,1]²`, `T = 1`.
pub fn double_integrator() -> SystemSpec {
    let a = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    SystemSpec::new(a, Zonotope::origin(2), double_integrator_input(), 1.0, TOL_RANK).unwrap()
}

pub fn double_integrator_input() -> Zonotope {
    Zonotope::new(Vector::from_row_slice(&[0.5, 0.5]), Matrix::identity(2, 2) * 0.5).unwrap()
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Entries uniform in `[−1, 1]`, scaled to unit max norm.
pub fn normalized_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = uniform_matrix(rng, n, n, -1.0, 1.0);
    let norm = linalg::inf_norm(&a);
    a / norm
}

/// Random full-dimensional zonotope with `gens ≥ n` generators.
pub fn random_zonotope(rng: &mut ChaCha8Rng, n: usize, gens: usize, center_scale: f64) -> Zonotope {
    loop {
        let c = Vector::from_fn(n, |_, _| rng.random_range(-center_scale..=center_scale));
        let g = uniform_matrix(rng, n, gens, -1.0, 1.0);
        let z = Zonotope::new(c, g).unwrap();
        if z.is_full_dim(1e-3) {
            return z;
        }
    }
}

/// Random `n`-dimensional system with normalized `A`, `T = 1`.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize) -> SystemSpec {
    let a = normalized_matrix(rng, n);
    let x0 = random_zonotope(rng, n, n + 1, 1.0);
    let u = random_zonotope(rng, n, n, 0.5);
    SystemSpec::new(a, x0, u, 1.0, TOL_RANK).unwrap()
}

/// `max_d |h_exact(d) − h_Z(d)|` over the sample: a lower bound on the
/// max-norm Hausdorff distance for unit 1-norm directions.
pub fn two_sided_gap(z: &Zonotope, dirs: &[Vector], exact: impl Fn(&Vector) -> f64) -> f64 {
    dirs.iter().map(|d| (exact(d) - z.support(d)).abs()).fold(0.0, f64::max)
}

pub fn temp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("reach-under-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
