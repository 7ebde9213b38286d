//! Finitely supported probability measures on `R^d`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;

/// Atoms closer than this are merged at construction.
pub const MERGE_TOL: f64 = 1e-12;
/// Largest deviation of the total mass from one that is silently renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    masses: Vec<f64>,
    label: String,
}

impl DiscreteMeasure {
    /// Validates, merges coincident atoms and renormalizes.
    ///
    /// `coords` holds the points row by row. The total mass must be within
    /// [`RENORMALIZE_TOL`] of one.
    pub fn new(dim: usize, coords: Vec<f64>, masses: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        Self::with_merge_tol(dim, coords, masses, label, MERGE_TOL)
    }

    pub fn with_merge_tol(
        dim: usize,
        coords: Vec<f64>,
        masses: Vec<f64>,
        label: impl Into<String>,
        merge_tol: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("measure dimension must be positive".into()));
        }
        if masses.is_empty() {
            return Err(Error::Validation("measure needs at least one atom".into()));
        }
        if coords.len() != dim * masses.len() {
            return Err(Error::Validation(format!(
                "{} coordinates for {} atoms of dimension {dim}",
                coords.len(),
                masses.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::Validation(format!("non-finite coordinate in atom {}", pos / dim)));
        }
        if let Some((j, m)) = masses.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::Validation(format!("atom {j} has non-positive mass {m}")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::Validation(format!("masses sum to {total}, expected 1")));
        }

        let mut out_coords: Vec<f64> = Vec::with_capacity(coords.len());
        let mut out_masses: Vec<f64> = Vec::with_capacity(masses.len());
        for (j, &m) in masses.iter().enumerate() {
            let p = &coords[j * dim..(j + 1) * dim];
            let hit = out_coords
                .chunks(dim)
                .position(|q| linalg::dist(p, q) <= merge_tol);
            match hit {
                Some(k) => out_masses[k] += m,
                None => {
                    out_coords.extend_from_slice(p);
                    out_masses.push(m);
                }
            }
        }
        let total: f64 = out_masses.iter().sum();
        if total != 1.0 {
            for m in &mut out_masses {
                *m /= total;
            }
        }
        Ok(Self {
            dim,
            coords: out_coords,
            masses: out_masses,
            label: label.into(),
        })
    }

    pub fn from_points(points: &[Vec<f64>], masses: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        let coords = points.iter().flat_map(|p| p.iter().copied()).collect();
        Self::new(dim.max(1), coords, masses, label)
    }

    /// Equal masses on the given points.
    pub fn uniform(points: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        let n = points.len().max(1);
        Self::from_points(points, alloc::vec![1.0 / n as f64; points.len()], label)
    }

    pub fn dirac(point: &[f64], label: impl Into<String>) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), alloc::vec![1.0], label)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn mass(&self, j: usize) -> f64 {
        self.masses[j]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn max_mass(&self) -> f64 {
        self.masses.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the atom within `tol` of `p`, if any.
    pub fn find(&self, p: &[f64], tol: f64) -> Option<usize> {
        self.points().position(|q| linalg::dist(p, q) <= tol)
    }

    /// Same atoms in a different order: atom `j` of the result is atom
    /// `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::Validation("permutation length differs from atom count".into()));
        }
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut masses = Vec::with_capacity(self.len());
        for &k in perm {
            coords.extend_from_slice(self.point(k));
            masses.push(self.masses[k]);
        }
        Self::new(self.dim, coords, masses, self.label.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn two_atoms() {
        let m = DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5], "mu").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.point(1), &[1.0]);
        assert_eq!(m.label(), "mu");
    }

    #[test]
    fn rejects_bad_total() {
        let e = DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.45, 0.45], "mu");
        assert!(matches!(e, Err(Error::Validation(_))));
    }

    #[test]
    fn renormalizes_small_deviation() {
        let m = DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5 + 5e-10], "mu").unwrap();
        assert!((m.masses().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn merges_duplicates() {
        let m = DiscreteMeasure::new(2, vec![0.0, 1.0, 0.0, 1.0, 2.0, 2.0], vec![0.25, 0.25, 0.5], "mu").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.masses(), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_invalid_atoms() {
        assert!(DiscreteMeasure::new(1, vec![], vec![], "e").is_err());
        assert!(DiscreteMeasure::new(1, vec![0.0, 1.0], vec![1.5, -0.5], "neg").is_err());
        assert!(DiscreteMeasure::new(1, vec![f64::NAN], vec![1.0], "nan").is_err());
        assert!(DiscreteMeasure::new(2, vec![0.0, 1.0, 2.0], vec![0.5, 0.5], "ragged").is_err());
        assert!(DiscreteMeasure::from_points(&[vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5], "x").is_err());
    }

    #[test]
    fn permutation() {
        let m = DiscreteMeasure::new(1, vec![0.0, 1.0, 2.0], vec![0.2, 0.3, 0.5], "mu").unwrap();
        let p = m.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.point(0), &[2.0]);
        assert_eq!(p.masses(), &[0.5, 0.2, 0.3]);
    }
}
