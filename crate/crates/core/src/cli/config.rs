//! Strictly parsed JSON run configurations.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::engine::{EngineConfig, ReductionPolicy, ReductionTarget, SystemSpec};
use crate::error::{ReachError, Result};
use crate::linalg::{Matrix, Vector};
use crate::zonotope::{Zonotope, ZonotopeJson};

/// A set given either as a zonotope or as the keyword `"origin"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SetSpec {
    Keyword(String),
    Zonotope(ZonotopeJson),
}

impl SetSpec {
    fn resolve(&self, n: usize, name: &str) -> Result<Zonotope> {
        match self {
            SetSpec::Keyword(k) if k == "origin" => Ok(Zonotope::origin(n)),
            SetSpec::Keyword(k) => Err(ReachError::InvalidConfig(format!(
                "{name}: expected a zonotope or \"origin\", got \"{k}\""
            ))),
            SetSpec::Zonotope(z) => Zonotope::try_from(z.clone()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EpsSpec {
    Keyword(String),
    Fixed(FixedEps),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedEps {
    pub eps_h: f64,
    pub eps_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApplyTo {
    Lambda,
    Accumulated,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSection {
    pub target_order: f64,
    pub apply_to: ApplyTo,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    #[serde(rename = "N")]
    pub steps: usize,
    pub eps: EpsSpec,
    #[serde(default)]
    pub reduction: Option<ReductionSection>,
    #[serde(default)]
    pub k_cap: Option<u32>,
}

impl EngineSection {
    pub fn to_engine_config(&self) -> Result<EngineConfig> {
        self.to_engine_config_with_steps(self.steps)
    }

    /// Same settings with `N` replaced.
    pub fn to_engine_config_with_steps(&self, steps: usize) -> Result<EngineConfig> {
        if steps == 0 {
            return Err(ReachError::InvalidConfig("N must be at least 1".into()));
        }
        let mut cfg = match &self.eps {
            EpsSpec::Keyword(k) if k == "schedule" => EngineConfig::with_schedule(steps),
            EpsSpec::Keyword(k) => {
                return Err(ReachError::InvalidConfig(format!(
                    "eps: expected \"schedule\" or {{eps_h, eps_u}}, got \"{k}\""
                )))
            }
            EpsSpec::Fixed(f) => EngineConfig::new(steps, f.eps_h, f.eps_u),
        };
        if let Some(cap) = self.k_cap {
            cfg.k_cap = cap;
        }
        if let Some(r) = self.reduction {
            cfg.reduction = Some(ReductionPolicy {
                target_order: r.target_order,
                apply_to: match r.apply_to {
                    ApplyTo::Lambda => ReductionTarget::Lambda,
                    ApplyTo::Accumulated => ReductionTarget::Accumulated,
                },
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    /// 1-based coordinate pairs to plot; defaults to `[[1, 2]]`.
    #[serde(default)]
    pub projections: Option<Vec<[usize; 2]>>,
    /// Draw the closed-form double-integrator boundary behind the sets.
    #[serde(default)]
    pub overlay_closed_form: bool,
}

impl OutputSection {
    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    /// 0-based projection pairs, validated against `n`.
    pub fn projections(&self, n: usize) -> Result<Vec<[usize; 2]>> {
        let pairs = self.projections.clone().unwrap_or_else(|| vec![[1, 2]]);
        pairs
            .into_iter()
            .map(|[a, b]| {
                if a == 0 || b == 0 || a > n || b > n || a == b {
                    Err(ReachError::InvalidConfig(format!(
                        "projection ({a}, {b}) is invalid in dimension {n}"
                    )))
                } else {
                    Ok([a - 1, b - 1])
                }
            })
            .collect()
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(ReachError::InvalidConfig(format!("{name} must be a nonempty rectangular matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(ReachError::InvalidConfig(format!("{name} has non-finite entries")));
    }
    Ok(Matrix::from_row_slice(r, c, &flat))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "X0")]
    pub x0: SetSpec,
    #[serde(rename = "U")]
    pub u: SetSpec,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl SystemSection {
    pub fn to_system(&self, tol_rank: f64) -> Result<SystemSpec> {
        let a = matrix_from_rows(&self.a, "A")?;
        let n = a.nrows();
        SystemSpec::new(a, self.x0.resolve(n, "X0")?, self.u.resolve(n, "U")?, self.horizon, tol_rank)
    }
}

/// Configuration of `reach` and `converge`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub engine: EngineSection,
    pub outputs: OutputSection,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackwardSystemSection {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "X_target")]
    pub target: ZonotopeJson,
    #[serde(rename = "U")]
    pub u: SetSpec,
    #[serde(rename = "T")]
    pub horizon: f64,
}

/// Resolved backward problem.
#[derive(Debug, Clone)]
pub struct BackwardProblem {
    pub a: Matrix,
    pub target: Zonotope,
    pub u: Zonotope,
    pub horizon: f64,
}

impl BackwardSystemSection {
    pub fn to_problem(&self) -> Result<BackwardProblem> {
        let a = matrix_from_rows(&self.a, "A")?;
        if !a.is_square() {
            return Err(ReachError::InvalidConfig("A must be square".into()));
        }
        let n = a.nrows();
        let target = Zonotope::try_from(self.target.clone())?;
        let u = self.u.resolve(n, "U")?;
        for set in [&target, &u] {
            if set.dim() != n {
                return Err(ReachError::DimensionMismatch {
                    expected: n,
                    found: set.dim(),
                });
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ReachError::InvalidConfig(format!("T must be positive, got {}", self.horizon)));
        }
        Ok(BackwardProblem {
            a,
            target,
            u,
            horizon: self.horizon,
        })
    }
}

/// Configuration of `backward`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackwardConfig {
    pub system: BackwardSystemSection,
    pub engine: EngineSection,
    pub outputs: OutputSection,
    /// Points to classify against the computed set.
    #[serde(default)]
    pub query: Vec<Vec<f64>>,
}

impl BackwardConfig {
    pub fn query_points(&self, n: usize) -> Result<Vec<Vector>> {
        self.query
            .iter()
            .map(|p| {
                if p.len() != n || p.iter().any(|x| !x.is_finite()) {
                    Err(ReachError::InvalidConfig(format!("query point {p:?} is not a finite {n}-vector")))
                } else {
                    Ok(Vector::from_row_slice(p))
                }
            })
            .collect()
    }
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ReachError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ReachError::InvalidConfig(format!("{}: {e}", path.display())))
}
