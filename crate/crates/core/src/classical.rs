//! Classical hitting times of reversible chains through the spectrum of the
//! deleted matrix `P₋z`.
//!
//! With `S₋z = √Π₋z P₋z √Π₋z⁻¹` symmetric, write its eigenvalues as
//! `λ_j = cos θ_j` with `θ_j ∈ (0, π/2]` and let `ν_j = ⟨v_j, √π₋z⟩`. Then
//! `HT(P,z) = Σ ν_j²/(1 − λ_j)` and the random variable `H_z` takes value
//! `1/θ_j²` with probability `ν_j²` (and 0 otherwise).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chains::MarkovChain;
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_sorted;

/// Eigenphases closer than this are merged into one atom.
pub const GROUP_TOL: f64 = 1e-9;
/// Eigenvalues above `-NEG_EIG_TOL` count as nonnegative.
pub const NEG_EIG_TOL: f64 = 1e-9;
/// Slack applied to every `tail ≤ ε` comparison so that ties decided by
/// rounding noise resolve the same way on every route.
pub const QUANTILE_TOL: f64 = 1e-10;
/// Iteration cap for [`h_eps`].
pub const MAX_STEPS: usize = 1_000_000;

/// Spectrum of the symmetrised deleted matrix for one marked state.
#[derive(Debug, Clone, Serialize)]
pub struct DeletedSpectrum {
    pub z: usize,
    /// Eigenvalues `λ_j` of `S₋z`, ordered to match `thetas`.
    pub lambdas: Vec<f64>,
    /// `θ_j = arccos λ_j`, ascending.
    pub thetas: Vec<f64>,
    /// Overlaps `ν_j = ⟨v_j, √π₋z⟩`.
    pub nus: Vec<f64>,
    /// `(θ, Σν²)` with θ values merged within [`GROUP_TOL`].
    pub groups: Vec<(f64, f64)>,
}

/// Deleted matrix `P₋z` (row and column `z` removed).
pub fn deleted_matrix(chain: &MarkovChain, z: usize) -> DMatrix<f64> {
    let n = chain.n();
    let idx: Vec<usize> = (0..n).filter(|&x| x != z).collect();
    DMatrix::from_fn(n - 1, n - 1, |i, j| chain.transition()[(idx[i], idx[j])])
}

fn deleted_pi(chain: &MarkovChain, z: usize) -> DVector<f64> {
    DVector::from_iterator(
        chain.n() - 1,
        (0..chain.n())
            .filter(|&x| x != z)
            .map(|x| chain.stationary()[x]),
    )
}

fn check_state(chain: &MarkovChain, z: usize) -> Result<()> {
    if z >= chain.n() {
        return Err(Error::InvalidParameter(format!(
            "state {z} out of range for n = {}",
            chain.n()
        )));
    }
    if chain.n() < 2 {
        return Err(Error::InvalidParameter(
            "chain needs at least 2 states".into(),
        ));
    }
    Ok(())
}

pub fn deleted_spectrum(chain: &MarkovChain, z: usize) -> Result<DeletedSpectrum> {
    check_state(chain, z)?;
    chain.require_reversible()?;
    let min_eig = chain.min_eigenvalue()?;
    if min_eig < -NEG_EIG_TOL {
        return Err(Error::NegativeEigenvalue { value: min_eig });
    }
    let pi = deleted_pi(chain, z);
    let sqrt_pi = pi.map(f64::sqrt);
    let pz = deleted_matrix(chain, z);
    let m = pz.nrows();
    let s = DMatrix::from_fn(m, m, |i, j| sqrt_pi[i] * pz[(i, j)] / sqrt_pi[j]);
    let s = (&s + s.transpose()) * 0.5;
    let (values, vectors) = sym_eigen_sorted(&s);

    // Descending λ is ascending θ.
    let mut lambdas = Vec::with_capacity(m);
    let mut thetas = Vec::with_capacity(m);
    let mut nus = Vec::with_capacity(m);
    for k in (0..m).rev() {
        let lambda = values[k];
        if lambda < -NEG_EIG_TOL {
            return Err(Error::NegativeEigenvalue { value: lambda });
        }
        let v = vectors.column(k);
        let residual = (&s * v - v * lambda).norm();
        if residual > 1e-10 {
            return Err(Error::Inconsistent {
                what: "eigenpair residual of S_-z".into(),
                a: residual,
                b: 1e-10,
            });
        }
        lambdas.push(lambda);
        thetas.push(lambda.clamp(0.0, 1.0).acos());
        nus.push(v.dot(&sqrt_pi));
    }
    let groups = group_atoms(&thetas, &nus);
    Ok(DeletedSpectrum {
        z,
        lambdas,
        thetas,
        nus,
        groups,
    })
}

fn group_atoms(thetas: &[f64], nus: &[f64]) -> Vec<(f64, f64)> {
    let mut groups: Vec<(f64, f64)> = Vec::new();
    for (&t, &nu) in thetas.iter().zip(nus) {
        match groups.last_mut() {
            Some((gt, mass)) if (t - *gt).abs() <= GROUP_TOL => *mass += nu * nu,
            _ => groups.push((t, nu * nu)),
        }
    }
    groups
}

impl DeletedSpectrum {
    /// Builds a spectrum directly from `(θ, ν)` pairs.
    pub fn from_pairs(z: usize, pairs: &[(f64, f64)]) -> Self {
        let mut pairs = pairs.to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let thetas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let nus: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let groups = group_atoms(&thetas, &nus);
        Self {
            z,
            lambdas: thetas.iter().map(|t| t.cos()).collect(),
            thetas,
            nus,
            groups,
        }
    }

    /// `Σ ν_j²`, equal to `1 − π_z` for a chain.
    pub fn total_mass(&self) -> f64 {
        self.nus.iter().map(|v| v * v).sum()
    }

    /// `Σ ν_j²/(1 − λ_j)`.
    pub fn hitting_time(&self) -> f64 {
        self.lambdas
            .iter()
            .zip(&self.nus)
            .map(|(l, nu)| nu * nu / (1.0 - l))
            .sum()
    }

    pub fn distribution(&self) -> HzDistribution {
        let mut atoms: Vec<(f64, f64)> = self
            .groups
            .iter()
            .map(|&(t, mass)| (1.0 / (t * t), mass))
            .collect();
        atoms.push((0.0, (1.0 - self.total_mass()).max(0.0)));
        HzDistribution::new(atoms)
    }

    /// Largest grouped `ν²`, attached to the smallest θ.
    pub fn principal_mass(&self) -> f64 {
        self.groups.first().map_or(0.0, |g| g.1)
    }
}

/// Finite distribution on `[0, ∞)` given by `(value, mass)` atoms.
#[derive(Debug, Clone, Serialize)]
pub struct HzDistribution {
    /// Sorted by ascending value, values distinct.
    pub atoms: Vec<(f64, f64)>,
}

impl HzDistribution {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (v, m) in atoms {
            match merged.last_mut() {
                Some((pv, pm)) if (v - *pv).abs() <= GROUP_TOL * v.abs().max(1.0) => *pm += m,
                _ => merged.push((v, m)),
            }
        }
        Self { atoms: merged }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, m)| v * m).sum()
    }

    /// `Pr[X > y]`.
    pub fn tail(&self, y: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 > y).map(|a| a.1).sum()
    }

    /// `min { y : Pr[X > y] ≤ ε }`; always 0 or an atom value.
    pub fn quantile(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!("eps {eps} outside (0, 1)")));
        }
        let candidates = std::iter::once(0.0).chain(self.atoms.iter().map(|a| a.0));
        for y in candidates {
            if y >= 0.0 && self.tail(y) <= eps + QUANTILE_TOL {
                return Ok(y);
            }
        }
        Ok(self.atoms.last().map_or(0.0, |a| a.0.max(0.0)))
    }
}

/// `π₋zᵀ (I − P₋z)⁻¹ u₋z` by a dense linear solve.
pub fn hitting_time(chain: &MarkovChain, z: usize) -> Result<f64> {
    check_state(chain, z)?;
    let pz = deleted_matrix(chain, z);
    let m = pz.nrows();
    let a = DMatrix::identity(m, m) - pz;
    let x = a
        .lu()
        .solve(&DVector::from_element(m, 1.0))
        .ok_or(Error::SingularSystem)?;
    let ht = deleted_pi(chain, z).dot(&x);
    if !ht.is_finite() || ht <= 0.0 {
        return Err(Error::SingularSystem);
    }
    Ok(ht)
}

/// `E[H_z] = Σ ν_j²/θ_j²`.
pub fn hz_mean(spectrum: &DeletedSpectrum) -> f64 {
    spectrum.distribution().mean()
}

pub fn ht_eps(spectrum: &DeletedSpectrum, eps: f64) -> Result<f64> {
    spectrum.distribution().quantile(eps)
}

/// Probability `s_k = π₋zᵀ P₋z^k u₋z` that `z` is not reached in the
/// first `k` steps, starting from `π`.
pub fn survival(chain: &MarkovChain, z: usize, k: usize) -> Result<f64> {
    check_state(chain, z)?;
    let pz = deleted_matrix(chain, z);
    let mut v = DVector::from_element(pz.nrows(), 1.0);
    for _ in 0..k {
        v = &pz * v;
    }
    Ok(deleted_pi(chain, z).dot(&v))
}

/// Smallest `k` with `s_k ≤ ε`.
pub fn h_eps(chain: &MarkovChain, z: usize, eps: f64) -> Result<usize> {
    check_state(chain, z)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps {eps} outside (0, 1)")));
    }
    let pz = deleted_matrix(chain, z);
    let pi = deleted_pi(chain, z);
    let mut v = DVector::from_element(pz.nrows(), 1.0);
    for k in 0..=MAX_STEPS {
        if pi.dot(&v) <= eps + QUANTILE_TOL {
            return Ok(k);
        }
        v = &pz * v;
    }
    Err(Error::NoConvergence {
        iterations: MAX_STEPS,
    })
}

/// One row of classical quantities for `(chain, z, ε)`.
#[derive(Debug, Clone, Serialize)]
pub struct ClassicalRow {
    pub z: usize,
    pub eps: f64,
    pub ht: f64,
    pub e_hz: f64,
    pub ht_eps: f64,
    pub h_eps: usize,
}

pub fn classical_row(chain: &MarkovChain, z: usize, eps: f64) -> Result<ClassicalRow> {
    let spec = deleted_spectrum(chain, z)?;
    Ok(ClassicalRow {
        z,
        eps,
        ht: hitting_time(chain, z)?,
        e_hz: hz_mean(&spec),
        ht_eps: ht_eps(&spec, eps)?,
        h_eps: h_eps(chain, z, eps)?,
    })
}
