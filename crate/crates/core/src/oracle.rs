//! Ground truth for validation: a high-accuracy matrix exponential, support
//! functions of exact reachable sets by quadrature, simulated witness
//! states, and Hausdorff gap estimates.
//!
//! Nothing here is used by the engine; the engine only sees truncated
//! Taylor operators.

use std::sync::OnceLock;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::SystemSpec;
use crate::linalg::{inf_norm, Matrix, Vector};
use crate::zonotope::Zonotope;

pub const DEFAULT_QUADRATURE_STEPS: usize = 2048;
pub const MIN_QUADRATURE_STEPS: usize = 64;
pub const DEFAULT_RANDOM_DIRECTIONS: usize = 200;
const WITNESS_PIECES: usize = 64;

/// Environment variable capping the validation thread pool.
pub const THREADS_ENV: &str = "REACH_UNDER_THREADS";

fn validation_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("building the validation thread pool")
    })
}

/// `e^{tA}` by scaling and squaring of a long Taylor sum.
///
/// The scaled argument has norm at most 1/4 and the series is cut once the
/// remainder bound drops below 1e−17, so the result is accurate to roughly
/// `1e−12·e^{t‖A‖∞}`.
pub fn accurate_expm(a: &Matrix, t: f64) -> Matrix {
    assert!(a.is_square(), "accurate_expm of a non-square matrix");
    let n = a.nrows();
    let norm = t.abs() * inf_norm(a);
    let mut squarings = 0;
    while norm / 2f64.powi(squarings) > 0.25 {
        squarings += 1;
    }
    let b = a * (t / 2f64.powi(squarings));
    let r = norm / 2f64.powi(squarings);

    let mut sum = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for j in 1..64u32 {
        term = &term * &b / f64::from(j);
        sum += &term;
        // remainder after this term is at most r^{j+1}/(j+1)! · e^r
        let mut bound = r.exp();
        for i in 1..=j + 1 {
            bound *= r / f64::from(i);
        }
        if bound <= 1e-17 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `∫₀ʰ e^{sA} ds` from the exponential of the block matrix `[[A, I], [0, 0]]`.
pub fn accurate_expm_integral(a: &Matrix, h: f64) -> Matrix {
    let n = a.nrows();
    let mut block = Matrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, n)).fill_with_identity();
    accurate_expm(&block, h).view((0, n), (n, n)).into_owned()
}

/// Directions normalized in the 1-norm (the dual of the max norm),
/// beginning with the `2n` signed axis directions.
#[derive(Debug, Clone)]
pub struct DirectionSample {
    pub directions: Vec<Vector>,
    pub seed: u64,
}

impl DirectionSample {
    pub fn new(n: usize, random: usize, seed: u64) -> Self {
        let mut directions = Vec::with_capacity(2 * n + random);
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut e = Vector::zeros(n);
                e[i] = sign;
                directions.push(e);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while directions.len() < 2 * n + random {
            // i.i.d. Laplace coordinates normalized in 1-norm are uniform on the 1-sphere
            let d = Vector::from_fn(n, |_, _| {
                let magnitude = -(1.0 - rng.random::<f64>()).ln();
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            });
            let l1 = d.lp_norm(1);
            if l1 > 0.0 {
                directions.push(d / l1);
            }
        }
        Self { directions, seed }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// A quadrature-based value with a step-halving error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    pub slack: f64,
}

/// `∫₀ᵗ h_U(e^{sAᵀ}d) ds` by composite Simpson on `panels` panels, with every
/// panel split at the sign changes of `g_jᵀe^{sAᵀ}d` so that each Simpson
/// piece integrates an analytic function.
fn input_support_integral(a_t: &Matrix, u: &Zonotope, t: f64, d: &Vector, panels: usize) -> f64 {
    input_support_cumulative(a_t, u, t, 1, d, panels)[1]
}

/// `∫₀^{iτ} h_U(e^{sAᵀ}d) ds` for `i = 0..=steps`, with `panels_per_step`
/// panels on each `[iτ, (i+1)τ]`.
fn input_support_cumulative(a_t: &Matrix, u: &Zonotope, tau: f64, steps: usize, d: &Vector, panels_per_step: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.0);
    if u.is_origin() || tau == 0.0 {
        out.resize(steps + 1, 0.0);
        return out;
    }
    let h = tau / panels_per_step as f64;
    let half_step = accurate_expm(a_t, 0.5 * h);
    let gens = u.generators();
    let phis = |w: &Vector| gens.tr_mul(w);

    let mut w_left = d.clone();
    let mut total = 0.0;
    for _ in 0..steps {
        for _ in 0..panels_per_step {
            let w_mid = &half_step * &w_left;
            let w_right = &half_step * &w_mid;
            let (p_left, p_mid, p_right) = (phis(&w_left), phis(&w_mid), phis(&w_right));
            let mut roots: Vec<f64> = Vec::new();
            for j in 0..gens.ncols() {
                for (a_off, pa, b_off, pb) in [(0.0, p_left[j], 0.5 * h, p_mid[j]), (0.5 * h, p_mid[j], h, p_right[j])] {
                    if pa * pb < 0.0 {
                        roots.push(bisect_root(a_t, gens, j, &w_left, a_off, b_off, pa));
                    }
                }
            }
            if roots.is_empty() {
                let f = |w: &Vector| u.support(w);
                total += h / 6.0 * (f(&w_left) + 4.0 * f(&w_mid) + f(&w_right));
            } else {
                roots.sort_by(f64::total_cmp);
                let mut cuts = vec![0.0];
                cuts.extend(roots);
                cuts.push(h);
                for pair in cuts.windows(2) {
                    let (lo, hi) = (pair[0], pair[1]);
                    if hi <= lo {
                        continue;
                    }
                    let at = |off: f64| {
                        let w = &accurate_expm(a_t, off) * &w_left;
                        u.support(&w)
                    };
                    total += (hi - lo) / 6.0 * (at(lo) + 4.0 * at(0.5 * (lo + hi)) + at(hi));
                }
            }
            w_left = w_right;
        }
        out.push(total);
    }
    out
}

/// Root of `s ↦ g_jᵀ e^{sAᵀ} w₀` on `[lo, hi]`, given a sign change.
fn bisect_root(a_t: &Matrix, gens: &Matrix, j: usize, w0: &Vector, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let eval = |s: f64| gens.column(j).dot(&(&accurate_expm(a_t, s) * w0));
    let lo_sign = f_lo.signum();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eval(mid).signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Support of the exact reachable set
/// `𝓡(t) = e^{tA}X₀ + ∫₀ᵗ e^{sA}U ds` along `d`.
pub fn support_of_reachable(a: &Matrix, x0: &Zonotope, u: &Zonotope, t: f64, d: &Vector, panels: usize) -> OracleValue {
    assert!(panels >= MIN_QUADRATURE_STEPS, "at least {MIN_QUADRATURE_STEPS} quadrature steps");
    let a_t = a.transpose();
    let homogeneous = x0.support(&(&accurate_expm(&a_t, t) * d));
    let fine = input_support_integral(&a_t, u, t, d, panels);
    let coarse = input_support_integral(&a_t, u, t, d, panels / 2);
    OracleValue {
        value: homogeneous + fine,
        slack: (fine - coarse).abs() / 15.0,
    }
}

/// Supports of `𝓡(iτ)` along `d` for `i = 0..=steps` from a single
/// quadrature sweep (the input integral is cumulative in its upper limit).
/// `panels_per_step` must be even; the slack compares against half as many.
pub fn support_profile(sys: &SystemSpec, tau: f64, steps: usize, d: &Vector, panels_per_step: usize) -> Vec<OracleValue> {
    assert!(panels_per_step >= 2 && panels_per_step.is_multiple_of(2), "an even number of panels per step");
    let a_t = sys.a().transpose();
    let fine = input_support_cumulative(&a_t, sys.u(), tau, steps, d, panels_per_step);
    let coarse = input_support_cumulative(&a_t, sys.u(), tau, steps, d, panels_per_step / 2);
    let step = accurate_expm(&a_t, tau);
    let mut w = d.clone();
    (0..=steps)
        .map(|i| {
            if i > 0 {
                w = &step * &w;
            }
            OracleValue {
                value: sys.x0().support(&w) + fine[i],
                slack: (fine[i] - coarse[i]).abs() / 15.0,
            }
        })
        .collect()
}

pub fn reach_support_oracle(sys: &SystemSpec, t: f64, d: &Vector, panels: usize) -> OracleValue {
    support_of_reachable(sys.a(), sys.x0(), sys.u(), t, d, panels)
}

/// Support of the exact backward reachable set
/// `e^{−TA}X_target + e^{−TA}(−𝓡_u(T))` along `d`.
pub fn backward_support_oracle(a: &Matrix, target: &Zonotope, u: &Zonotope, horizon: f64, d: &Vector, panels: usize) -> OracleValue {
    let w = &accurate_expm(&a.transpose(), -horizon) * d;
    let origin = Zonotope::origin(a.nrows());
    let input = support_of_reachable(a, &origin, u, horizon, &(-&w), panels);
    OracleValue {
        value: target.support(&w) + input.value,
        slack: input.slack,
    }
}

/// Membership in `{(x,y): x²/2 ≤ y ≤ x − x²/2 + 1, x ∈ [0,1]}`, the exact
/// reachable set at `t = 1` of the double integrator `A = [[0,0],[1,0]]`
/// from `{0}` with inputs in `[0,1]²`.
pub fn closed_form_membership_2d(point: [f64; 2], tol: f64) -> bool {
    let [x, y] = point;
    (-tol..=1.0 + tol).contains(&x) && x * x / 2.0 - tol <= y && y <= x - x * x / 2.0 + 1.0 + tol
}

/// Endpoints of random trajectories: `x₀` uniform in `X₀` and a piecewise
/// constant input with values uniform in `U` on 64 equal pieces.
pub fn inner_witness_points(sys: &SystemSpec, t: f64, samples: usize, seed: u64) -> Vec<Vector> {
    assert!(samples >= 1, "at least one witness");
    let h = t / WITNESS_PIECES as f64;
    let step = accurate_expm(sys.a(), h);
    let integral = accurate_expm_integral(sys.a(), h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |z: &Zonotope| -> Vector {
        let xi = Vector::from_fn(z.gen_count(), |_, _| rng.random_range(-1.0..=1.0));
        z.center() + z.generators() * xi
    };
    (0..samples)
        .map(|_| {
            let mut x = draw(sys.x0());
            for _ in 0..WITNESS_PIECES {
                let u = draw(sys.u());
                x = &step * x + &integral * u;
            }
            x
        })
        .collect()
}

/// `max_d (h_{𝓡(t)}(d) − h_Z(d))` over the sample, a lower bound on the
/// max-norm Hausdorff distance when `Z ⊆ 𝓡(t)`. Clamped at zero.
pub fn hausdorff_gap_estimate(z: &Zonotope, sys: &SystemSpec, t: f64, dirs: &DirectionSample) -> f64 {
    support_gaps(z, dirs, |d| reach_support_oracle(sys, t, d, DEFAULT_QUADRATURE_STEPS).value)
        .into_iter()
        .fold(0.0, f64::max)
}

/// `oracle(d) − h_Z(d)` for every sampled direction, evaluated in parallel.
pub fn support_gaps(z: &Zonotope, dirs: &DirectionSample, oracle: impl Fn(&Vector) -> f64 + Sync) -> Vec<f64> {
    validation_pool().install(|| {
        dirs.directions
            .par_iter()
            .map(|d| oracle(d) - z.support(d))
            .collect()
    })
}
