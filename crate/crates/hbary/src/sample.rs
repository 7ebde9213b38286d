//! Seeded quantizations of densities truncated to a box.

use hbary_core::DiscreteMeasure;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Rejection draws allowed per requested atom before giving up.
const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    Gaussian { mean: Vec<f64>, sigma: f64, lo: Vec<f64>, hi: Vec<f64> },
    Mixture { components: Vec<Component>, lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    #[default]
    Iid,
    Grid,
}

impl DensitySpec {
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        match self {
            Self::UniformBox { lo, hi } | Self::Gaussian { lo, hi, .. } | Self::Mixture { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds().0.len()
    }

    fn components(&self) -> Vec<Component> {
        match self {
            Self::UniformBox { .. } => Vec::new(),
            Self::Gaussian { mean, sigma, .. } => vec![Component {
                weight: 1.0,
                mean: mean.clone(),
                sigma: *sigma,
            }],
            Self::Mixture { components, .. } => components.clone(),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let (lo, hi) = self.bounds();
        let bad = |m: String| Err(CliError::Validation(m));
        if lo.is_empty() || lo.len() != hi.len() {
            return bad(format!("box bounds have lengths {} and {}", lo.len(), hi.len()));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return bad("box needs finite bounds with lo < hi in every coordinate".into());
        }
        if let Self::Mixture { components, .. } = self {
            if components.is_empty() {
                return bad("mixture needs at least one component".into());
            }
        }
        for c in self.components() {
            if c.mean.len() != lo.len() || c.mean.iter().any(|v| !v.is_finite()) {
                return bad(format!("component mean {:?} does not match dimension {}", c.mean, lo.len()));
            }
            if !(c.sigma > 0.0 && c.sigma.is_finite()) || !(c.weight > 0.0 && c.weight.is_finite()) {
                return bad("component sigma and weight must be positive".into());
            }
        }
        Ok(())
    }

    /// Density up to a constant factor, zero outside the box.
    pub fn unnormalized_density(&self, x: &[f64]) -> f64 {
        let (lo, hi) = self.bounds();
        if x.iter().zip(lo.iter().zip(hi)).any(|(v, (a, b))| v < a || v > b) {
            return 0.0;
        }
        let comps = self.components();
        if comps.is_empty() {
            return 1.0;
        }
        let d = x.len() as f64;
        comps
            .iter()
            .map(|c| {
                let r2: f64 = x.iter().zip(&c.mean).map(|(a, b)| (a - b) * (a - b)).sum();
                c.weight * c.sigma.powf(-d) * (-0.5 * r2 / (c.sigma * c.sigma)).exp()
            })
            .sum()
    }

    fn inside(&self, x: &[f64]) -> bool {
        let (lo, hi) = self.bounds();
        x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v >= a && v <= b)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, comps: &[Component], pick: Option<&WeightedIndex<f64>>) -> Vec<f64> {
        let (lo, hi) = self.bounds();
        match pick {
            None => lo.iter().zip(hi).map(|(a, b)| rng.random_range(*a..*b)).collect(),
            Some(w) => {
                let c = &comps[w.sample(rng)];
                c.mean
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + c.sigma * z
                    })
                    .collect()
            }
        }
    }
}

/// Quantizes `spec` with `n` atoms.
///
/// `Iid` draws `n` equal-mass atoms from the truncated density. `Grid` needs
/// `n = m^d`; it places atoms at the centers of an `m^d` grid of cells over
/// the box, weighted by the density there.
pub fn sample_density(
    spec: &DensitySpec,
    n: usize,
    seed: u64,
    mode: SampleMode,
    label: &str,
) -> CliResult<DiscreteMeasure> {
    spec.validate()?;
    if n == 0 {
        return Err(CliError::Validation("sample size must be at least 1".into()));
    }
    let d = spec.dim();
    match mode {
        SampleMode::Iid => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let comps = spec.components();
            let pick = if comps.is_empty() {
                None
            } else {
                Some(WeightedIndex::new(comps.iter().map(|c| c.weight)).map_err(|e| CliError::Validation(e.to_string()))?)
            };
            let mut coords = Vec::with_capacity(n * d);
            let mut rejected = 0usize;
            while coords.len() < n * d {
                let x = spec.draw(&mut rng, &comps, pick.as_ref());
                if spec.inside(&x) {
                    coords.extend(x);
                } else {
                    rejected += 1;
                    if rejected > MAX_REJECTIONS * n {
                        return Err(CliError::Validation(
                            "the truncation box holds almost none of the density's mass".into(),
                        ));
                    }
                }
            }
            Ok(DiscreteMeasure::new(d, coords, vec![1.0 / n as f64; n], label)?)
        }
        SampleMode::Grid => {
            let m = (n as f64).powf(1.0 / d as f64).round() as usize;
            if m.checked_pow(d as u32) != Some(n) {
                return Err(CliError::Validation(format!("grid sampling needs n = m^{d}, got n = {n}")));
            }
            let (lo, hi) = spec.bounds();
            let mut coords = Vec::with_capacity(n * d);
            let mut masses = Vec::with_capacity(n);
            let mut cell = vec![0usize; d];
            for _ in 0..n {
                let x: Vec<f64> = (0..d)
                    .map(|k| lo[k] + (cell[k] as f64 + 0.5) * (hi[k] - lo[k]) / m as f64)
                    .collect();
                let w = spec.unnormalized_density(&x);
                if w > 0.0 {
                    coords.extend(x);
                    masses.push(w);
                }
                for k in (0..d).rev() {
                    cell[k] += 1;
                    if cell[k] < m {
                        break;
                    }
                    cell[k] = 0;
                }
            }
            let total: f64 = masses.iter().sum();
            if !(total > 0.0) {
                return Err(CliError::Validation("density vanishes on every grid node".into()));
            }
            masses.iter_mut().for_each(|v| *v /= total);
            Ok(DiscreteMeasure::new(d, coords, masses, label)?)
        }
    }
}
