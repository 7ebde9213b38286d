//! The JSON run configuration shared by every command.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use hbary_core::diagnostics::DEFAULT_PAIR_BUDGET;
use hbary_core::tensor::DEFAULT_BUDGET;
use hbary_core::{ConvexCost, DiagnosticsOptions, DiscreteMeasure, Problem, Weights};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{load_measure, read_json, MeasureFormat, PAIR_KEY};
use crate::sample::{sample_density, DensitySpec, SampleMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostBlock {
    Quadratic { dim: usize },
    /// `matrix` is the SPD matrix in row-major order.
    AnisotropicQuadratic { dim: usize, matrix: Vec<f64> },
    PseudoHuber { dim: usize, delta: f64 },
    SmoothedPower { dim: usize, p: f64, eps: f64 },
    LogCosh { dim: usize },
}

impl CostBlock {
    pub fn build(&self) -> CliResult<ConvexCost> {
        Ok(match self {
            Self::Quadratic { dim } => ConvexCost::quadratic(*dim)?,
            Self::AnisotropicQuadratic { dim, matrix } => ConvexCost::anisotropic_from_row_major(*dim, matrix)?,
            Self::PseudoHuber { dim, delta } => ConvexCost::pseudo_huber(*dim, *delta)?,
            Self::SmoothedPower { dim, p, eps } => ConvexCost::smoothed_power(*dim, *p, *eps)?,
            Self::LogCosh { dim } => ConvexCost::log_cosh(*dim)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MarginalSource {
    File {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<MeasureFormat>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Density {
        density: DensitySpec,
        n: usize,
        #[serde(default)]
        mode: SampleMode,
        /// Defaults to the run seed plus the marginal's position.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

impl MarginalSource {
    pub fn is_density(&self) -> bool {
        matches!(self, Self::Density { .. })
    }

    fn label(&self) -> Option<&str> {
        match self {
            Self::File { label, .. } | Self::Density { label, .. } => label.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverChoice {
    #[default]
    Lp,
    Entropic {
        eps: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_entropic_tol")]
        tol: f64,
    },
}

fn default_max_iter() -> usize {
    10_000
}

fn default_entropic_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub barycenter: f64,
    /// Distance below which barycenters count as one atom of the push-forward.
    pub merge: f64,
    /// Relative gap allowed by `equivalence`.
    pub equivalence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            barycenter: hbary_core::barycenter::DEFAULT_TOL,
            merge: 1e-9,
            equivalence: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsBlock {
    pub pair_budget: usize,
    /// Neighbourhood size for potential gradients; defaults to `dim + 2`.
    pub neighbors: Option<usize>,
    pub quadrature_orders: Option<[usize; 2]>,
    pub quadrature_pair_budget: usize,
}

impl Default for DiagnosticsBlock {
    fn default() -> Self {
        Self {
            pair_budget: DEFAULT_PAIR_BUDGET,
            neighbors: None,
            quadrature_orders: None,
            quadrature_pair_budget: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cost: CostBlock,
    /// Uniform when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub marginals: Vec<MarginalSource>,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    /// Threads for tensor assembly; all cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub diagnostics: DiagnosticsBlock,
    /// Sample sizes for `sweep`.
    #[serde(default)]
    pub resolutions: Vec<usize>,
    /// Saved plan for `diagnose`.
    #[serde(default)]
    pub plan: Option<PathBuf>,
    /// Saved potentials for `diagnose`.
    #[serde(default)]
    pub potentials: Option<PathBuf>,
    /// Perturbed candidates tried by `equivalence`.
    #[serde(default = "default_perturbations")]
    pub perturbations: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_perturbations() -> usize {
    20
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for m in &mut cfg.marginals {
            if let MarginalSource::File { path, .. } = m {
                *path = resolve(base, path);
            }
        }
        for p in [&mut cfg.plan, &mut cfg.potentials, &mut cfg.out].into_iter().flatten() {
            *p = resolve(base, p);
        }
        Ok(cfg)
    }

    pub fn labels(&self) -> Vec<String> {
        self.marginals
            .iter()
            .enumerate()
            .map(|(i, m)| m.label().map_or_else(|| format!("mu{}", i + 1), str::to_string))
            .collect()
    }

    /// Checks everything that does not need the marginals loaded.
    pub fn validate(&self) -> CliResult<()> {
        let n = self.marginals.len();
        if n < 2 {
            return Err(CliError::Validation(format!("need at least two marginals, got {n}")));
        }
        if let Some(w) = &self.weights {
            if w.len() != n {
                return Err(CliError::Validation(format!("{} weights for {n} marginals", w.len())));
            }
        }
        let labels = self.labels();
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(CliError::Validation(format!("marginal labels {labels:?} are not distinct")));
        }
        if labels.iter().any(|l| l == PAIR_KEY || l == "barycenter") {
            return Err(CliError::Validation(format!("labels {PAIR_KEY:?} and \"barycenter\" are reserved")));
        }
        for m in &self.marginals {
            if let MarginalSource::File { path, .. } = m {
                if !path.is_file() {
                    return Err(CliError::Validation(format!("marginal file {} does not exist", path.display())));
                }
            }
        }
        for p in [&self.plan, &self.potentials].into_iter().flatten() {
            if !p.is_file() {
                return Err(CliError::Validation(format!("{} does not exist", p.display())));
            }
        }
        if let SolverChoice::Entropic { eps, tol, .. } = self.solver {
            if !(eps > 0.0 && eps.is_finite() && tol > 0.0) {
                return Err(CliError::Validation("entropic eps and tol must be positive".into()));
            }
        }
        if !(self.tolerances.barycenter > 0.0 && self.tolerances.merge >= 0.0 && self.tolerances.equivalence >= 0.0) {
            return Err(CliError::Validation("tolerances must be nonnegative, the barycenter one positive".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> CliResult<Weights> {
        Ok(match &self.weights {
            Some(w) => Weights::new(w.clone())?,
            None => Weights::uniform(self.marginals.len())?,
        })
    }

    /// Loads or samples every marginal; `n_override` replaces the sample
    /// size of density sources.
    pub fn measures(&self, n_override: Option<usize>) -> CliResult<Vec<DiscreteMeasure>> {
        let labels = self.labels();
        self.marginals
            .iter()
            .zip(&labels)
            .enumerate()
            .map(|(i, (m, label))| match m {
                MarginalSource::File { path, format, .. } => {
                    let format = match format {
                        Some(f) => *f,
                        None => MeasureFormat::from_path(path)?,
                    };
                    Ok(load_measure(path, format)?.with_label(label.clone()))
                }
                MarginalSource::Density {
                    density,
                    n,
                    mode,
                    seed,
                    ..
                } => {
                    let seed = seed.unwrap_or(self.seed.wrapping_add(i as u64));
                    sample_density(density, n_override.unwrap_or(*n), seed, *mode, label)
                }
            })
            .collect()
    }

    pub fn problem(&self, n_override: Option<usize>) -> CliResult<Problem> {
        self.validate()?;
        let cost = self.cost.build()?;
        let mut problem = Problem::new(cost, self.weights()?, self.measures(n_override)?)?;
        problem.tol = self.tolerances.barycenter;
        Ok(problem)
    }

    pub fn diagnostics_options(&self, dim: usize) -> DiagnosticsOptions {
        DiagnosticsOptions {
            pair_budget: self.diagnostics.pair_budget,
            seed: self.seed,
            neighbors: Some(self.diagnostics.neighbors.unwrap_or(hbary_core::diagnostics::default_neighbors(dim))),
            merge_tol: self.tolerances.merge,
            quadrature_orders: self.diagnostics.quadrature_orders.map(|[a, b]| (a, b)),
            quadrature_pair_budget: self.diagnostics.quadrature_pair_budget,
        }
    }
}
