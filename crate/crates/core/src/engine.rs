//! Under-approximate reachability for `ẋ = Ax + u`, `x(0) ∈ X₀`, `u(t) ∈ U`.
//!
//! Exponential images are replaced by truncated Taylor images with
//! deflated generators, so every produced set is contained in the exact
//! one. The homogeneous stream `𝓢ᵢ`, the input stream `𝓥ᵢ` and their
//! accumulation `𝓦ᵢ` combine into `Λᵢ = 𝓢ᵢ + 𝓦ᵢ ⊆ 𝓡(iτ)`.

use std::time::{Duration, Instant};

use crate::error::{ReachError, Result};
use crate::linalg::{self, Matrix, SpectralRadius, Tolerances};
use crate::zonotope::Zonotope;

pub const DEFAULT_K_CAP: u32 = 500;

/// `(ε_h, ε_u) = (1 − 1/N², 1 − 1/N)`, the schedule with first-order
/// convergence as `N → ∞`.
pub fn eps_schedule(steps: usize) -> (f64, f64) {
    assert!(steps >= 1, "eps_schedule needs N >= 1");
    let n = steps as f64;
    (1.0 - 1.0 / (n * n), 1.0 - 1.0 / n)
}

/// A problem instance: system matrix, initial set, input set and horizon.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    a: Matrix,
    x0: Zonotope,
    u: Zonotope,
    horizon: f64,
}

impl SystemSpec {
    /// `X₀` and `U` must each be full-dimensional or exactly `{0}`, and not
    /// both `{0}`.
    pub fn new(a: Matrix, x0: Zonotope, u: Zonotope, horizon: f64, tol_rank: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(ReachError::InvalidSystem(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !linalg::is_finite(&a) {
            return Err(ReachError::InvalidSystem("A has non-finite entries".into()));
        }
        let n = a.nrows();
        for (name, set) in [("X0", &x0), ("U", &u)] {
            if set.dim() != n {
                return Err(ReachError::DimensionMismatch {
                    expected: n,
                    found: set.dim(),
                });
            }
            if !set.is_origin() && !set.is_full_dim(tol_rank) {
                return Err(ReachError::InvalidSystem(format!(
                    "{name} must be full-dimensional or the singleton {{0}}"
                )));
            }
        }
        if x0.is_origin() && u.is_origin() {
            return Err(ReachError::InvalidSystem("X0 and U are both {0}".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ReachError::InvalidSystem(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { a, x0, u, horizon })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn x0(&self) -> &Zonotope {
        &self.x0
    }

    pub fn u(&self) -> &Zonotope {
        &self.u
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Where order reduction is applied during the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionTarget {
    /// Reduce each `Λᵢ` after it is formed.
    Lambda,
    /// Reduce the input accumulant `𝓦ᵢ` after each Minkowski accumulation.
    Accumulated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionPolicy {
    pub target_order: f64,
    pub apply_to: ReductionTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub steps: usize,
    pub eps_h: f64,
    pub eps_u: f64,
    pub k_cap: u32,
    pub reduction: Option<ReductionPolicy>,
    pub tolerances: Tolerances,
    /// Set when `(eps_h, eps_u)` come from [`eps_schedule`]; the run then
    /// also requires `τ‖A‖∞ ≤ 1`.
    pub convergence_schedule: bool,
}

impl EngineConfig {
    pub fn new(steps: usize, eps_h: f64, eps_u: f64) -> Self {
        Self {
            steps,
            eps_h,
            eps_u,
            k_cap: DEFAULT_K_CAP,
            reduction: None,
            tolerances: Tolerances::default(),
            convergence_schedule: false,
        }
    }

    pub fn with_schedule(steps: usize) -> Self {
        let (eps_h, eps_u) = eps_schedule(steps);
        Self {
            convergence_schedule: true,
            ..Self::new(steps, eps_h, eps_u)
        }
    }

    pub fn with_reduction(mut self, policy: ReductionPolicy) -> Self {
        self.reduction = Some(policy);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ReachError::InvalidConfig(msg));
        if self.steps == 0 {
            return bad("N must be at least 1".into());
        }
        for (name, eps) in [("eps_h", self.eps_h), ("eps_u", self.eps_u)] {
            if !(0.0..1.0).contains(&eps) {
                return bad(format!("{name} = {eps} is outside [0, 1)"));
            }
        }
        if self.k_cap < 2 {
            return bad(format!("k_cap = {} must be at least 2", self.k_cap));
        }
        if let Some(policy) = &self.reduction {
            if policy.target_order.is_nan() || policy.target_order < 1.0 {
                return bad(format!("reduction order {} must be at least 1", policy.target_order));
            }
        }
        Ok(())
    }
}

/// Norm data of a full-dimensional zonotope that the deflation coefficient
/// depends on.
#[derive(Debug, Clone, Copy)]
struct DeflationData {
    pinv_norm: f64,
    center_norm: f64,
    gen_norm: f64,
}

impl DeflationData {
    fn of(z: &Zonotope, tol_rank: f64) -> Result<Self> {
        Ok(Self {
            pinv_norm: linalg::pinv_inf_norm(z.generators(), tol_rank)?,
            center_norm: linalg::vec_inf_norm(z.center()),
            gen_norm: linalg::inf_norm(z.generators()),
        })
    }

    fn condition(&self) -> f64 {
        self.gen_norm * self.pinv_norm
    }
}

/// Result of one under-approximating operator application.
#[derive(Debug, Clone)]
pub struct Image {
    pub set: Zonotope,
    /// Number of Taylor terms used.
    pub order: u32,
    pub lambda: f64,
}

/// A system matrix with its norm and spectral radius cached.
#[derive(Debug, Clone)]
pub struct Propagator {
    a: Matrix,
    norm: f64,
    rho: SpectralRadius,
    tol: Tolerances,
    k_cap: u32,
}

impl Propagator {
    pub fn new(a: Matrix, tol: Tolerances, k_cap: u32) -> Self {
        assert!(a.is_square(), "system matrix must be square");
        let norm = linalg::inf_norm(&a);
        let rho = linalg::spectral_radius(&a);
        Self {
            a,
            norm,
            rho,
            tol,
            k_cap,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn spectral_radius(&self) -> SpectralRadius {
        self.rho
    }

    pub fn integral_invertible(&self, t: f64) -> bool {
        linalg::integral_invertible(&self.a, t, self.tol.eig_band(&self.a))
    }

    fn not_invertible(&self, t: f64) -> ReachError {
        let tmax = linalg::invertibility_tmax(&self.a, self.tol.eig_band(&self.a))
            .map_or_else(|| "any bound (eigen solver failed)".to_string(), |x| format!("{x}"));
        ReachError::NotInInvertibilityDomain { t, tmax }
    }

    /// Smallest `k` with `θ(tρ, k)·e^{tρ} < 1`.
    pub fn k_min(&self, t: f64) -> Result<u32> {
        let r = t * self.rho.value;
        let growth = r.exp();
        (1..=self.k_cap)
            .find(|&k| linalg::theta(r, k) * growth < 1.0)
            .ok_or(ReachError::SearchCapExceeded {
                cap: self.k_cap,
                t,
                eps: 0.0,
                condition: f64::NAN,
            })
    }

    fn lambda_with(&self, t: f64, data: &DeflationData, k: u32) -> f64 {
        let r = t * self.norm;
        let q = r.exp() * linalg::theta(r, k) * data.pinv_norm;
        (1.0 - q * data.center_norm) / (1.0 + q * data.gen_norm)
    }

    /// Deflation coefficient `λ(t, Z, k)`; may be negative.
    pub fn lambda(&self, t: f64, z: &Zonotope, k: u32) -> Result<f64> {
        let data = DeflationData::of(z, self.tol.rank)?;
        Ok(self.lambda_with(t, &data, k))
    }

    fn kappa_with(&self, t: f64, data: &DeflationData, eps: f64) -> Result<(u32, f64)> {
        let floor = self.k_min(t)?.max(2);
        (floor..=self.k_cap)
            .map(|k| (k, self.lambda_with(t, data, k)))
            .find(|&(_, lambda)| lambda > eps)
            .ok_or(ReachError::SearchCapExceeded {
                cap: self.k_cap,
                t,
                eps,
                condition: data.condition(),
            })
    }

    /// Smallest `k ≥ max(k_min(t), 2)` with `λ(t, Z, k) > ε`.
    pub fn kappa(&self, t: f64, z: &Zonotope, eps: f64) -> Result<u32> {
        let data = DeflationData::of(z, self.tol.rank)?;
        self.kappa_with(t, &data, eps).map(|(k, _)| k)
    }

    fn eta_with(&self, t: f64, data: &DeflationData, eps: f64) -> Result<(u32, f64, Matrix)> {
        if !self.integral_invertible(t) {
            return Err(self.not_invertible(t));
        }
        for k in 1..=self.k_cap {
            let lambda = self.lambda_with(t, data, k);
            if lambda > eps {
                let integral = linalg::taylor_t(&self.a, t, k);
                if linalg::is_invertible(&integral, self.tol.rank) {
                    return Ok((k, lambda, integral));
                }
            }
        }
        Err(ReachError::SearchCapExceeded {
            cap: self.k_cap,
            t,
            eps,
            condition: data.condition(),
        })
    }

    /// Smallest `k ≥ 1` with `λ(t, Z, k) > ε` and `𝓣(t, k)` invertible.
    pub fn eta(&self, t: f64, z: &Zonotope, eps: f64) -> Result<u32> {
        let data = DeflationData::of(z, self.tol.rank)?;
        self.eta_with(t, &data, eps).map(|(k, _, _)| k)
    }

    /// `𝓗(t, Z, ε) = 𝓛(t, κ)[c + λG·B]`, a full-dimensional subset of `e^{tA}Z`.
    pub fn op_h(&self, t: f64, z: &Zonotope, eps: f64) -> Result<Image> {
        let data = DeflationData::of(z, self.tol.rank)?;
        let (order, lambda) = self.kappa_with(t, &data, eps)?;
        let set = z
            .scale_generators(lambda)
            .linear_map(&linalg::taylor_l(&self.a, t, order))?;
        Ok(Image { set, order, lambda })
    }

    /// `𝓘(t, Z, ε) = 𝓣(t, η)[c + λG·B]`, a full-dimensional subset of `∫₀ᵗ e^{sA}Z ds`.
    pub fn op_i(&self, t: f64, z: &Zonotope, eps: f64) -> Result<Image> {
        let data = DeflationData::of(z, self.tol.rank)?;
        let (order, lambda, integral) = self.eta_with(t, &data, eps)?;
        let set = z.scale_generators(lambda).linear_map(&integral)?;
        Ok(Image { set, order, lambda })
    }
}

pub fn k_min(a: &Matrix, t: f64, k_cap: u32) -> Result<u32> {
    Propagator::new(a.clone(), Tolerances::default(), k_cap).k_min(t)
}

pub fn deflation_lambda(a: &Matrix, t: f64, z: &Zonotope, k: u32) -> Result<f64> {
    Propagator::new(a.clone(), Tolerances::default(), DEFAULT_K_CAP).lambda(t, z, k)
}

pub fn kappa(a: &Matrix, t: f64, z: &Zonotope, eps: f64) -> Result<u32> {
    Propagator::new(a.clone(), Tolerances::default(), DEFAULT_K_CAP).kappa(t, z, eps)
}

pub fn eta(a: &Matrix, t: f64, z: &Zonotope, eps: f64) -> Result<u32> {
    Propagator::new(a.clone(), Tolerances::default(), DEFAULT_K_CAP).eta(t, z, eps)
}

pub fn op_h(a: &Matrix, t: f64, z: &Zonotope, eps: f64) -> Result<Zonotope> {
    Propagator::new(a.clone(), Tolerances::default(), DEFAULT_K_CAP)
        .op_h(t, z, eps)
        .map(|img| img.set)
}

pub fn op_i(a: &Matrix, t: f64, z: &Zonotope, eps: f64) -> Result<Zonotope> {
    Propagator::new(a.clone(), Tolerances::default(), DEFAULT_K_CAP)
        .op_i(t, z, eps)
        .map(|img| img.set)
}

/// Largest certified deflation `α_m` for replacing `P` by `P̃` on `Z`, using
/// `1/‖(PG)†‖∞` as the lower bound of `PG`.
pub fn alpha_max(p: &Matrix, p_tilde: &Matrix, z: &Zonotope, tol_rank: f64) -> Result<f64> {
    if p.shape() != p_tilde.shape() {
        return Err(ReachError::DimensionMismatch {
            expected: p.nrows() * p.ncols(),
            found: p_tilde.nrows() * p_tilde.ncols(),
        });
    }
    if p.ncols() != z.dim() {
        return Err(ReachError::DimensionMismatch {
            expected: p.ncols(),
            found: z.dim(),
        });
    }
    let lower = 1.0 / linalg::pinv_inf_norm(&(p * z.generators()), tol_rank)?;
    let delta = p_tilde - p;
    let offset = linalg::vec_inf_norm(&(&delta * z.center()));
    if offset > lower {
        return Err(ReachError::BoundViolated { offset, bound: lower });
    }
    Ok((lower - offset) / (lower + linalg::inf_norm(&(&delta * z.generators()))))
}

/// `P̃·Z⟨c, αG⟩ ⊆ P·Z` for `α ∈ [0, α_m]`.
pub fn image_under(p: &Matrix, p_tilde: &Matrix, z: &Zonotope, alpha: f64, tol_rank: f64) -> Result<Zonotope> {
    let max = alpha_max(p, p_tilde, z, tol_rank)?;
    if !(0.0..=max).contains(&alpha) {
        return Err(ReachError::AlphaOutOfRange { alpha, max });
    }
    z.scale_generators(alpha).linear_map(p_tilde)
}

/// Per-step record of the selectors and deflation values used.
#[derive(Debug, Clone, Default)]
pub struct StepDiagnostics {
    pub index: usize,
    /// `κ` used for `𝓢ᵢ`.
    pub kappa_s: Option<u32>,
    /// `κ` used for `𝓥ᵢ`.
    pub kappa_v: Option<u32>,
    /// `η` used for `𝓥₀`.
    pub eta: Option<u32>,
    pub lambdas: Vec<f64>,
    pub wall: Duration,
}

impl StepDiagnostics {
    pub fn kappa(&self) -> Option<u32> {
        self.kappa_s.max(self.kappa_v)
    }

    pub fn lambda_min(&self) -> Option<f64> {
        self.lambdas.iter().copied().reduce(f64::min)
    }
}

/// The sequences `𝓢ᵢ, 𝓥ᵢ, 𝓦ᵢ, Λᵢ` for `i = 0..=N`.
///
/// `𝓦ᵢ` and `Λᵢ` are Minkowski sums of stored sets and are formed on
/// demand unless reduction stored them explicitly; keeping all of them would
/// cost `O(N²n²)` memory.
#[derive(Debug, Clone)]
pub struct ReachResult {
    pub tau: f64,
    pub eps_h: f64,
    pub eps_u: f64,
    pub s_seq: Vec<Zonotope>,
    pub v_seq: Vec<Zonotope>,
    pub steps: Vec<StepDiagnostics>,
    pub reduced: bool,
    dim: usize,
    w_store: Option<Vec<Zonotope>>,
    lambda_store: Option<Vec<Zonotope>>,
}

impl ReachResult {
    pub fn steps_count(&self) -> usize {
        self.s_seq.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `𝓦ᵢ = Σ_{j<i} 𝓥ⱼ`.
    pub fn w(&self, i: usize) -> Zonotope {
        if let Some(store) = &self.w_store {
            return store[i].clone();
        }
        Zonotope::sum_all(&self.v_seq[..i])
            .expect("stored sets share a dimension")
            .unwrap_or_else(|| Zonotope::origin(self.dim))
    }

    /// `Λᵢ = 𝓢ᵢ + 𝓦ᵢ ⊆ 𝓡(iτ)`.
    pub fn lambda(&self, i: usize) -> Zonotope {
        if let Some(store) = &self.lambda_store {
            return store[i].clone();
        }
        self.s_seq[i]
            .minkowski_sum(&self.w(i))
            .expect("stored sets share a dimension")
    }

    pub fn lambda_gen_count(&self, i: usize) -> usize {
        match (&self.lambda_store, &self.w_store) {
            (Some(store), _) => store[i].gen_count(),
            (None, Some(ws)) => self.s_seq[i].gen_count() + ws[i].gen_count(),
            (None, None) => self.s_seq[i].gen_count() + self.v_seq[..i].iter().map(Zonotope::gen_count).sum::<usize>(),
        }
    }

    pub fn lambda_sets(&self) -> impl Iterator<Item = Zonotope> + '_ {
        (0..self.s_seq.len()).map(|i| self.lambda(i))
    }
}

/// Runs the under-approximation recursion with `τ = T/N`.
pub fn reach_under(sys: &SystemSpec, cfg: &EngineConfig) -> Result<ReachResult> {
    cfg.validate()?;
    let prop = Propagator::new(sys.a.clone(), cfg.tolerances, cfg.k_cap);
    let steps = cfg.steps;
    let tau = sys.horizon / steps as f64;
    if cfg.convergence_schedule && tau * prop.norm() > 1.0 {
        return Err(ReachError::InvalidConfig(format!(
            "the convergence schedule needs τ‖A‖∞ ≤ 1, got {}; increase N",
            tau * prop.norm()
        )));
    }
    let n = sys.dim();
    let with_x0 = !sys.x0.is_origin();
    let with_u = !sys.u.is_origin();
    if with_u && !prop.integral_invertible(tau) {
        return Err(prop.not_invertible(tau));
    }

    let mut s_seq = Vec::with_capacity(steps + 1);
    let mut v_seq = Vec::with_capacity(steps + 1);
    let mut diagnostics = Vec::with_capacity(steps + 1);
    let reduce_w = matches!(cfg.reduction, Some(p) if p.apply_to == ReductionTarget::Accumulated);
    let reduce_lambda = matches!(cfg.reduction, Some(p) if p.apply_to == ReductionTarget::Lambda);
    let mut w_store = reduce_w.then(|| vec![Zonotope::origin(n)]);
    let mut lambda_store = reduce_lambda.then(Vec::new);
    let target_order = cfg.reduction.map_or(1.0, |p| p.target_order);

    // step 0
    let start = Instant::now();
    let mut diag = StepDiagnostics::default();
    s_seq.push(sys.x0.clone());
    if with_u {
        let img = prop.op_i(tau, &sys.u, cfg.eps_u)?;
        diag.eta = Some(img.order);
        diag.lambdas.push(img.lambda);
        v_seq.push(img.set);
    } else {
        v_seq.push(Zonotope::origin(n));
    }
    if let Some(store) = lambda_store.as_mut() {
        store.push(sys.x0.reduce_sum(target_order));
    }
    diag.wall = start.elapsed();
    diagnostics.push(diag);

    let mut w_acc = Zonotope::origin(n);
    for i in 1..=steps {
        let start = Instant::now();
        let mut diag = StepDiagnostics {
            index: i,
            ..Default::default()
        };
        if with_x0 {
            let img = prop.op_h(tau, &s_seq[i - 1], cfg.eps_h)?;
            diag.kappa_s = Some(img.order);
            diag.lambdas.push(img.lambda);
            s_seq.push(img.set);
        } else {
            s_seq.push(Zonotope::origin(n));
        }
        if with_u {
            let img = prop.op_h(tau, &v_seq[i - 1], cfg.eps_h)?;
            diag.kappa_v = Some(img.order);
            diag.lambdas.push(img.lambda);
            v_seq.push(img.set);
        } else {
            v_seq.push(Zonotope::origin(n));
        }
        if let Some(store) = w_store.as_mut() {
            let next = store[i - 1].minkowski_sum(&v_seq[i - 1])?.reduce_sum(target_order);
            store.push(next);
        }
        if let Some(store) = lambda_store.as_mut() {
            w_acc = w_acc.minkowski_sum(&v_seq[i - 1])?;
            store.push(s_seq[i].minkowski_sum(&w_acc)?.reduce_sum(target_order));
        }
        diag.wall = start.elapsed();
        diagnostics.push(diag);
    }

    Ok(ReachResult {
        tau,
        eps_h: cfg.eps_h,
        eps_u: cfg.eps_u,
        s_seq,
        v_seq,
        steps: diagnostics,
        reduced: cfg.reduction.is_some(),
        dim: n,
        w_store,
        lambda_store,
    })
}

/// Under-approximation of the set of states that some admissible input
/// drives into `X_target` in time `T`:
/// `e^{−TA}X_target + e^{−TA}(−𝓡_u(T))`.
///
/// `𝓡_u(T)` is under-approximated by `𝓦_N` of a forward run from `{0}`;
/// both exponential images are taken as `N` steps of `𝓗` with `−A`.
pub fn backward_reach_under(
    a: &Matrix,
    target: &Zonotope,
    u: &Zonotope,
    horizon: f64,
    cfg: &EngineConfig,
) -> Result<Zonotope> {
    cfg.validate()?;
    if !target.is_full_dim(cfg.tolerances.rank) {
        return Err(ReachError::InvalidSystem("X_target must be full-dimensional".into()));
    }
    let n = a.nrows();
    if target.dim() != n {
        return Err(ReachError::DimensionMismatch {
            expected: n,
            found: target.dim(),
        });
    }
    let tau = horizon / cfg.steps as f64;
    let reverse = Propagator::new(-a, cfg.tolerances, cfg.k_cap);
    let pull_back = |set: &Zonotope| -> Result<Zonotope> {
        let mut current = set.clone();
        for _ in 0..cfg.steps {
            current = reverse.op_h(tau, &current, cfg.eps_h)?.set;
        }
        Ok(current)
    };
    let mut result = pull_back(target)?;
    if !u.is_origin() {
        let forward = SystemSpec::new(a.clone(), Zonotope::origin(n), u.clone(), horizon, cfg.tolerances.rank)?;
        let input_set = reach_under(&forward, cfg)?.w(cfg.steps);
        result = result.minkowski_sum(&pull_back(&input_set.negate())?)?;
    }
    Ok(result)
}
