//! Quantum hitting times.
//!
//! `QH` takes the value `1/|α|` on each eigencomponent of `φ̃₀` for the
//! search operator `U = U₂U₁` and `0` on its `+1` component. For a
//! reversible chain `U₂U₁ = SWAP·ref(A₋z)`, whose phases are the angles
//! `θ_j` of the deleted chain, so `QH² = H_z` holds atom by atom.

use nalgebra::DVector;
use serde::Serialize;
use std::f64::consts::PI;

use crate::chains::MarkovChain;
use crate::classical::{deleted_spectrum, HzDistribution, NEG_EIG_TOL};
use crate::error::{Error, Result};
use crate::linalg::cnorm;
use crate::search::{decompose_target, initial_coefficients, secular_phases, TargetDecomposition};
use crate::szegedy::{quantum_analogue, search_operator, EdgeOperator};

/// Allowed gap between the two routes to `QHT(P, z)`.
pub const QHT_CROSSCHECK_TOL: f64 = 1e-8;

/// Distribution of `QH`; same atom representation as the classical `H_z`.
pub type QHDistribution = HzDistribution;

pub fn qh_from_decomposition(dec: &TargetDecomposition) -> Result<QHDistribution> {
    let total = cnorm(&dec.phi_tilde()).powi(2);
    let roots = secular_phases(dec)?;
    if roots.is_empty() {
        return Ok(HzDistribution::new(vec![(0.0, total)]));
    }
    let sys = initial_coefficients(dec, &roots);
    let mut atoms = Vec::with_capacity(roots.len() + 1);
    let mut carried = 0.0;
    for (&a, &d) in sys.alphas.iter().zip(sys.deltas.iter()) {
        let mass = if a == PI { d * d } else { 2.0 * d * d };
        carried += mass;
        atoms.push((1.0 / a, mass));
    }
    let residual = (total - carried).max(0.0);
    if residual > 0.0 {
        atoms.push((0.0, residual));
    }
    Ok(HzDistribution::new(atoms))
}

pub fn qh_distribution(u2: &EdgeOperator, mu: &DVector<f64>) -> Result<QHDistribution> {
    qh_from_decomposition(&decompose_target(u2, mu)?)
}

pub fn qht(u2: &EdgeOperator, mu: &DVector<f64>) -> Result<f64> {
    Ok(qh_distribution(u2, mu)?.mean())
}

pub fn qht_eps(u2: &EdgeOperator, mu: &DVector<f64>, eps: f64) -> Result<f64> {
    qh_distribution(u2, mu)?.quantile(eps)
}

fn chain_distribution(chain: &MarkovChain, z: usize) -> Result<QHDistribution> {
    chain.require_reversible()?;
    let min = chain.min_eigenvalue()?;
    if min < -NEG_EIG_TOL {
        return Err(Error::NegativeEigenvalue { value: min });
    }
    let s = search_operator(chain, z)?;
    let dist = qh_distribution(&s.u2, &s.mu)?;
    let spectral = deleted_spectrum(chain, z)?;
    let via_nu: f64 = spectral
        .groups
        .iter()
        .map(|(theta, mass)| mass / theta)
        .sum();
    if (dist.mean() - via_nu).abs() > QHT_CROSSCHECK_TOL * via_nu.max(1.0) {
        return Err(Error::Inconsistent {
            what: "QHT from the QH distribution vs sum of nu^2/theta".into(),
            a: dist.mean(),
            b: via_nu,
        });
    }
    Ok(dist)
}

/// `QHT(P, z) = QHT(SWAP·ref(A), |z⟩|p_z⟩)`.
pub fn qht_chain(chain: &MarkovChain, z: usize) -> Result<f64> {
    Ok(chain_distribution(chain, z)?.mean())
}

pub fn qht_eps_chain(chain: &MarkovChain, z: usize, eps: f64) -> Result<f64> {
    chain_distribution(chain, z)?.quantile(eps)
}

/// `QH` distribution for a chain, after the consistency check.
pub fn qh_distribution_chain(chain: &MarkovChain, z: usize) -> Result<QHDistribution> {
    chain_distribution(chain, z)
}

/// `QHT_ε² / HT_ε`, taken as 1 when both vanish.
pub fn ratio_sq(qht_eps: f64, ht_eps: f64) -> f64 {
    if ht_eps == 0.0 {
        if qht_eps == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        qht_eps * qht_eps / ht_eps
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    pub mean_deviation: f64,
    pub phi_tilde_norm: f64,
    /// `mean_deviation / ‖φ̃₀‖`, zero when `φ̃₀ = 0`.
    pub ratio: f64,
    pub t_max: usize,
    pub qht: f64,
}

/// Exact mean of `‖W(P,z)^t φ̃₀ − φ̃₀‖` over `t ∈ {1, …, ⌈QHT(P,z)⌉}`.
pub fn deviation_experiment(chain: &MarkovChain, z: usize) -> Result<DeviationReport> {
    let s = search_operator(chain, z)?;
    let qht = qht(&s.u2, &s.mu)?;
    let w = quantum_analogue(chain, Some(z))?;
    let phi = s.phi_tilde();
    let t_max = (qht.ceil() as usize).max(1);
    let mut cur = phi.clone();
    let mut total = 0.0;
    for _ in 0..t_max {
        cur = &w.matrix * cur;
        total += (&cur - &phi).norm();
    }
    let mean = total / t_max as f64;
    let norm = phi.norm();
    Ok(DeviationReport {
        mean_deviation: mean,
        phi_tilde_norm: norm,
        ratio: if norm > 0.0 { mean / norm } else { 0.0 },
        t_max,
        qht,
    })
}
