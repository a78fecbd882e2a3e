//! Spectrum of the abstract search operator `U = U₂(I − 2|μ⟩⟨μ|)`.
//!
//! The target `μ` is expanded in the eigenbasis of `U₂`. The positive
//! eigenphases of `U` are then the roots of the secular function
//!
//! ```text
//! f(α) = a₀² cot(α/2) + Σ_j a_j² (cot((α+θ_j)/2) + cot((α−θ_j)/2)) − a₋₁² tan(α/2)
//! ```
//!
//! which decreases strictly between consecutive poles, so every root is
//! bracketed and found by bisection. Eigenvectors have the closed form
//! `w_α = μ + i·w′_α`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{apply_real, cdot, cnorm, to_complex, CVector};
use crate::szegedy::{EdgeOperator, OpLabel};

/// Poles whose squared weight falls below this are removable and dropped.
pub const POLE_MASS_FLOOR: f64 = 1e-12;
/// Poles closer than this are merged into one.
pub const POLE_MERGE_TOL: f64 = 1e-9;
/// Initial offset of a bracket from its poles.
const BRACKET_OFFSET: f64 = 1e-11;
/// `μ` must lie in the operator domain to this accuracy.
const DOMAIN_TOL: f64 = 1e-8;

/// One eigenpair `e^{±iθ}` of `U₂` that carries part of `μ`.
#[derive(Debug, Clone)]
pub struct TargetPair {
    pub theta: f64,
    /// Real, positive: `μ` contains `a·(φ⁺ + φ⁻)`.
    pub a: f64,
    /// Unit eigenvector for `e^{iθ}`; its partner is the complex conjugate.
    pub phi_plus: CVector,
}

impl TargetPair {
    pub fn phi_minus(&self) -> CVector {
        self.phi_plus.map(|z| z.conj())
    }
}

/// `μ = a₀φ₀ + Σ_j a_j(φ_j⁺ + φ_j⁻) + a₋₁φ₋₁`.
#[derive(Debug, Clone)]
pub struct TargetDecomposition {
    pub mu: CVector,
    pub a0: f64,
    pub phi0: CVector,
    /// Sorted by increasing `theta`.
    pub pairs: Vec<TargetPair>,
    pub a_minus1: f64,
    pub phi_minus1: Option<CVector>,
}

impl TargetDecomposition {
    /// `a₀² + 2Σa_j² + a₋₁²`, equal to `‖μ‖²`.
    pub fn norm_sq(&self) -> f64 {
        self.a0 * self.a0
            + 2.0 * self.pairs.iter().map(|p| p.a * p.a).sum::<f64>()
            + self.a_minus1 * self.a_minus1
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.theta).collect()
    }

    /// `φ̃₀ = φ₀ − a₀μ`.
    pub fn phi_tilde(&self) -> CVector {
        &self.phi0 - &self.mu * Complex64::new(self.a0, 0.0)
    }

    /// Sum of the stored components, which should reproduce `μ`.
    pub fn rebuild_mu(&self) -> CVector {
        let mut v = &self.phi0 * Complex64::new(self.a0, 0.0);
        for p in &self.pairs {
            v += (&p.phi_plus + p.phi_minus()) * Complex64::new(p.a, 0.0);
        }
        if let Some(phi) = &self.phi_minus1 {
            v += phi * Complex64::new(self.a_minus1, 0.0);
        }
        v
    }

    /// Merges poles within [`POLE_MERGE_TOL`] and drops those below
    /// [`POLE_MASS_FLOOR`].
    fn normalise_poles(&mut self) {
        self.pairs.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        let mut merged: Vec<TargetPair> = Vec::new();
        for p in self.pairs.drain(..) {
            if p.a * p.a < POLE_MASS_FLOOR {
                continue;
            }
            match merged.last_mut() {
                Some(q) if p.theta - q.theta <= POLE_MERGE_TOL => {
                    let a = (q.a * q.a + p.a * p.a).sqrt();
                    let theta = (q.theta * q.a * q.a + p.theta * p.a * p.a) / (a * a);
                    let v = (&q.phi_plus * Complex64::new(q.a, 0.0)
                        + &p.phi_plus * Complex64::new(p.a, 0.0))
                        / Complex64::new(a, 0.0);
                    *q = TargetPair {
                        theta,
                        a,
                        phi_plus: v,
                    };
                }
                _ => merged.push(p),
            }
        }
        self.pairs = merged;
        if self.a_minus1 * self.a_minus1 < POLE_MASS_FLOOR {
            self.a_minus1 = 0.0;
            self.phi_minus1 = None;
        }
    }
}

/// Expands `μ` in the eigenbasis of `U₂` restricted to its domain.
pub fn decompose_target(u2: &EdgeOperator, mu: &DVector<f64>) -> Result<TargetDecomposition> {
    if mu.len() != u2.dim() {
        return Err(Error::DimensionMismatch {
            expected: u2.dim(),
            got: mu.len(),
        });
    }
    let q = u2.domain_basis();
    let local = q.transpose() * mu;
    let residual = (&q * &local - mu).norm();
    if residual > DOMAIN_TOL {
        return Err(Error::OutsideDomain { residual });
    }
    let spec = u2.spectrum();
    let fixed_dim = spec.fixed_dim();
    if fixed_dim != 1 {
        return Err(Error::DegeneratePlusOneSpace { dim: fixed_dim });
    }
    let lift = |v: &DVector<f64>| -> DVector<f64> { &q * v };
    let lift_c = |v: &CVector| -> CVector {
        let re = &q * v.map(|z| z.re);
        let im = &q * v.map(|z| z.im);
        CVector::from_iterator(
            re.len(),
            re.iter()
                .zip(im.iter())
                .map(|(&r, &i)| Complex64::new(r, i)),
        )
    };

    let mut phi0 = lift(&spec.fixed_cluster().unwrap().basis.column(0).into_owned());
    let mut a0 = phi0.dot(mu);
    if a0 < 0.0 || (a0 == 0.0 && phi0.sum() < 0.0) {
        phi0 = -phi0;
        a0 = -a0;
    }

    let mut pairs = Vec::new();
    let mut a_minus1 = 0.0;
    let mut phi_minus1 = None;
    let local_c = to_complex(&local);
    for comp in spec.components(&local_c, 0.0) {
        if comp.phase.abs() <= 1e-9 {
            continue;
        }
        let weight = cnorm(&comp.vector);
        if (comp.phase - PI).abs() <= 1e-9 {
            a_minus1 = weight;
            let v = lift_c(&comp.vector) / Complex64::new(weight, 0.0);
            phi_minus1 = Some(v);
        } else if comp.phase > 0.0 {
            pairs.push(TargetPair {
                theta: comp.phase,
                a: weight,
                phi_plus: lift_c(&comp.vector) / Complex64::new(weight, 0.0),
            });
        }
    }
    let mut dec = TargetDecomposition {
        mu: to_complex(mu),
        a0,
        phi0: to_complex(&phi0),
        pairs,
        a_minus1,
        phi_minus1,
    };
    dec.normalise_poles();
    Ok(dec)
}

fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

/// Value of the secular function at `alpha`.
pub fn secular_fn(dec: &TargetDecomposition, alpha: f64) -> f64 {
    let h = alpha / 2.0;
    let mut f = dec.a0 * dec.a0 * cot(h);
    for p in &dec.pairs {
        f += p.a * p.a * (cot(h + p.theta / 2.0) + cot(h - p.theta / 2.0));
    }
    if dec.a_minus1 != 0.0 {
        f -= dec.a_minus1 * dec.a_minus1 * h.tan();
    }
    f
}

/// Root of a strictly decreasing function on `(lo_pole, hi_pole)` that
/// tends to `+∞` at the left end and `−∞` at the right end.
pub(crate) fn bisect_decreasing(f: impl Fn(f64) -> f64, lo_pole: f64, hi_pole: f64) -> Result<f64> {
    let inside = |pole: f64, dir: f64, want_positive: bool| -> Option<f64> {
        let mut off = BRACKET_OFFSET * pole.abs().max(1.0);
        for _ in 0..8 {
            let x = pole + dir * off;
            let v = f(x);
            if (want_positive && v > 0.0) || (!want_positive && v < 0.0) {
                return Some(x);
            }
            off *= 1e-1;
        }
        None
    };
    let fail = Error::BracketFailure {
        lo: lo_pole,
        hi: hi_pole,
    };
    let mut lo = inside(lo_pole, 1.0, true).ok_or(fail.clone())?;
    let mut hi = inside(hi_pole, -1.0, false).ok_or(fail.clone())?;
    if lo >= hi {
        return Err(fail);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Positive eigenphases of `U` that carry part of `μ`, ascending. Empty when
/// `a₀ = 0`. The last root equals `π` exactly when `a₋₁ = 0`.
pub fn secular_phases(dec: &TargetDecomposition) -> Result<Vec<f64>> {
    if dec.a0 * dec.a0 < POLE_MASS_FLOOR {
        return Ok(Vec::new());
    }
    let mut poles = vec![0.0];
    poles.extend(dec.pairs.iter().map(|p| p.theta));
    let f = |x: f64| secular_fn(dec, x);
    let mut roots = Vec::with_capacity(poles.len());
    for w in poles.windows(2) {
        roots.push(bisect_decreasing(f, w[0], w[1])?);
    }
    let last = *poles.last().unwrap();
    if dec.a_minus1 != 0.0 {
        roots.push(bisect_decreasing(f, last, PI)?);
    } else {
        roots.push(PI);
    }
    Ok(roots)
}

/// `w′_α` for a signed phase `alpha`.
pub fn eigvec_w_prime(dec: &TargetDecomposition, alpha: f64) -> CVector {
    let h = alpha / 2.0;
    let mut v = &dec.phi0 * Complex64::new(dec.a0 * cot(h), 0.0);
    if dec.a0 == 0.0 {
        v.fill(Complex64::new(0.0, 0.0));
    }
    for p in &dec.pairs {
        v += &p.phi_plus * Complex64::new(p.a * cot(h - p.theta / 2.0), 0.0);
        v += p.phi_minus() * Complex64::new(p.a * cot(h + p.theta / 2.0), 0.0);
    }
    if let Some(phi) = &dec.phi_minus1 {
        v -= phi * Complex64::new(dec.a_minus1 * h.tan(), 0.0);
    }
    v
}

/// Unnormalised eigenvector `w_α = μ + i·w′_α` for a signed phase.
pub fn eigvec_w(dec: &TargetDecomposition, alpha: f64) -> CVector {
    &dec.mu + eigvec_w_prime(dec, alpha) * Complex64::new(0.0, 1.0)
}

/// `‖w_α‖²` from the coefficients alone.
pub fn w_norm_sq(dec: &TargetDecomposition, alpha: f64) -> f64 {
    let h = alpha / 2.0;
    let mut s = 1.0;
    if dec.a0 != 0.0 {
        s += (dec.a0 * cot(h)).powi(2);
    }
    for p in &dec.pairs {
        s += p.a * p.a * (cot(h - p.theta / 2.0).powi(2) + cot(h + p.theta / 2.0).powi(2));
    }
    if dec.a_minus1 != 0.0 {
        s += (dec.a_minus1 * h.tan()).powi(2);
    }
    s
}

/// Eigen-data of `U` relevant to `μ` and `φ̃₀`.
#[derive(Debug, Clone, Serialize)]
pub struct SearchEigensystem {
    /// Positive eigenphases, ascending.
    pub alphas: Vec<f64>,
    pub w_norms: Vec<f64>,
    #[serde(skip)]
    pub w_vectors: Vec<CVector>,
    /// Coefficient of `φ̃₀` on each normalised `w_{±α}`, up to a phase.
    pub deltas: Vec<f64>,
    /// Component of `φ̃₀` on the `+1` eigenspace of `U`.
    pub delta0: f64,
    /// Component of `φ̃₀` on the `−1` eigenspace of `U`.
    pub delta_minus1: f64,
}

impl SearchEigensystem {
    /// Whether the largest phase is the single eigenvalue `−1`.
    pub fn has_minus_one_root(&self) -> bool {
        self.alphas.last().is_some_and(|&a| a == PI)
    }

    /// Every eigenpair `(signed α, w_α)`: both signs for roots below `π`.
    pub fn signed_pairs(&self) -> Vec<(f64, CVector)> {
        let mut out = Vec::new();
        for (a, w) in self.alphas.iter().zip(self.w_vectors.iter()) {
            out.push((*a, w.clone()));
            if *a < PI {
                out.push((-*a, w.map(|z| z.conj())));
            }
        }
        out
    }

    /// `δ₀² + Σ_{±α} δ² + δ₋₁²`.
    pub fn total_mass(&self) -> f64 {
        let mut s = self.delta0 * self.delta0 + self.delta_minus1 * self.delta_minus1;
        for (a, d) in self.alphas.iter().zip(self.deltas.iter()) {
            if *a < PI {
                s += 2.0 * d * d;
            }
        }
        s
    }
}

pub fn initial_coefficients(dec: &TargetDecomposition, roots: &[f64]) -> SearchEigensystem {
    if roots.is_empty() {
        // a₀ = 0: φ̃₀ = φ₀ is itself fixed by U.
        return SearchEigensystem {
            alphas: Vec::new(),
            w_norms: Vec::new(),
            w_vectors: Vec::new(),
            deltas: Vec::new(),
            delta0: cnorm(&dec.phi_tilde()),
            delta_minus1: 0.0,
        };
    }
    let mut alphas = Vec::new();
    let mut w_norms = Vec::new();
    let mut w_vectors = Vec::new();
    let mut deltas = Vec::new();
    let mut delta_minus1 = 0.0;
    for &a in roots {
        let norm = w_norm_sq(dec, a).sqrt();
        let delta = dec.a0 * cot(a / 2.0) / norm;
        if a == PI {
            delta_minus1 = delta.abs();
        }
        alphas.push(a);
        w_norms.push(norm);
        w_vectors.push(eigvec_w(dec, a));
        deltas.push(delta);
    }
    SearchEigensystem {
        alphas,
        w_norms,
        w_vectors,
        deltas,
        delta0: 0.0,
        delta_minus1,
    }
}

/// `φ̃₀` rebuilt from the eigenvectors: `−Σ a₀·i·cot(α/2)/‖w_α‖² · w_α`.
/// The sign follows from `⟨w_α|φ̃₀⟩ = −i·a₀cot(α/2)`.
pub fn rebuild_phi_tilde(dec: &TargetDecomposition, sys: &SearchEigensystem) -> CVector {
    let mut v = CVector::zeros(dec.mu.len());
    for (a, w) in sys.signed_pairs() {
        let c = dec.a0 * cot(a / 2.0) / w_norm_sq(dec, a);
        v -= w * Complex64::new(0.0, c);
    }
    v
}

/// `μ` rebuilt from the eigenvectors: `Σ ‖w_α‖⁻² w_α`.
pub fn rebuild_mu(dec: &TargetDecomposition, sys: &SearchEigensystem) -> CVector {
    let mut v = CVector::zeros(dec.mu.len());
    for (a, w) in sys.signed_pairs() {
        v += w / Complex64::new(w_norm_sq(dec, a), 0.0);
    }
    v
}

/// Closed-form `⟨μ|U-rotation(φ̃₀)⟩`; its modulus is
/// `2a₀ Σ_{0<α<π} cot(α/2)/‖w_α‖²`.
pub fn rotation_overlap_closed_form(dec: &TargetDecomposition, sys: &SearchEigensystem) -> f64 {
    sys.alphas
        .iter()
        .filter(|&&a| a < PI)
        .map(|&a| 2.0 * dec.a0 * cot(a / 2.0) / w_norm_sq(dec, a))
        .sum()
}

/// `U = U₂(I − 2|μ⟩⟨μ|)` sharing the domain of `U₂`.
pub fn search_from_walk(u2: &EdgeOperator, mu: &DVector<f64>) -> EdgeOperator {
    let d = u2.dim();
    let u1 = DMatrix::identity(d, d) - (mu * mu.transpose()) * 2.0;
    EdgeOperator {
        n: u2.n,
        matrix: &u2.matrix * u1,
        label: OpLabel::U,
        domain: u2.domain.clone(),
    }
}

/// Flips the sign of every negative-phase eigencomponent of `psi`. Parts of
/// `psi` outside the domain are returned unchanged.
pub fn u_rotation(u: &EdgeOperator, psi: &CVector) -> CVector {
    let q = u.domain_basis();
    let local = q.transpose().map(|x| Complex64::new(x, 0.0)) * psi;
    let inside = q.map(|x| Complex64::new(x, 0.0)) * &local;
    let outside = psi - &inside;
    let mut rotated = CVector::zeros(local.len());
    for c in u.spectrum().components(&local, 0.0) {
        if c.phase < 0.0 {
            rotated -= &c.vector;
        } else {
            rotated += &c.vector;
        }
    }
    q.map(|x| Complex64::new(x, 0.0)) * rotated + outside
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionEntry {
    pub index: usize,
    /// Smallest positive eigenphase `α_z` of `U₂(I − 2|μ_z⟩⟨μ_z|)`.
    pub alpha: f64,
    /// Length of the projection of `φ̃₀` onto `span(w_{α_z}, w_{−α_z})`.
    pub length: f64,
}

/// Projection of `φ̃₀ = φ₀ − ⟨φ₀|μ_z⟩μ_z` onto the principal eigenpair of
/// each target's search operator. Targets with `φ̃₀ = 0` or `⟨φ₀|μ_z⟩ = 0`
/// are skipped.
pub fn principal_projection(
    u2: &EdgeOperator,
    targets: &[DVector<f64>],
) -> Result<Vec<ProjectionEntry>> {
    let phi0 = u2.fixed_vector()?;
    let mut rest = phi0.clone();
    for t in targets {
        rest.axpy(-t.dot(&phi0), t, 1.0);
    }
    let residual = rest.norm();
    if residual > 1e-8 {
        return Err(Error::SpanViolation { residual });
    }
    let mut out = Vec::new();
    for (index, mu) in targets.iter().enumerate() {
        let dec = decompose_target(u2, mu)?;
        if cnorm(&dec.phi_tilde()) < 1e-12 {
            continue;
        }
        let roots = secular_phases(&dec)?;
        let Some(&alpha) = roots.first() else {
            continue;
        };
        let length = if alpha == PI {
            0.0
        } else {
            std::f64::consts::SQRT_2 * dec.a0 * cot(alpha / 2.0) / w_norm_sq(&dec, alpha).sqrt()
        };
        out.push(ProjectionEntry {
            index,
            alpha,
            length,
        });
    }
    Ok(out)
}

/// Projection of `psi` onto `span(a, b)` for orthogonal `a, b`.
pub fn projection_length(psi: &CVector, a: &CVector, b: &CVector) -> f64 {
    let pa = cdot(a, psi).norm_sqr() / cdot(a, a).re;
    let pb = cdot(b, psi).norm_sqr() / cdot(b, b).re;
    (pa + pb).sqrt()
}

/// `‖U w − e^{iα} w‖ / ‖w‖`.
pub fn eigen_residual(u: &EdgeOperator, alpha: f64, w: &CVector) -> f64 {
    let uw = apply_real(&u.matrix, w);
    cnorm(&(uw - w * Complex64::from_polar(1.0, alpha))) / cnorm(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{Family, MarkovChain};
    use crate::szegedy::search_operator;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn two_state_dec() -> (EdgeOperator, TargetDecomposition) {
        let c = MarkovChain::family(&Family::Cycle { n: 2 }).unwrap();
        let s = search_operator(&c, 1).unwrap();
        let dec = decompose_target(&s.u2, &s.mu).unwrap();
        (s.u, dec)
    }

    /// Fixed vector `e₀`, a rotation by θ on `(e₁, e₂)` and, when asked
    /// for, `−1` on `e₃`.
    fn model_u2(theta: f64, with_minus: bool) -> EdgeOperator {
        let mut m = DMatrix::identity(3 + with_minus as usize, 3 + with_minus as usize);
        let (s, c) = theta.sin_cos();
        m[(1, 1)] = c;
        m[(1, 2)] = -s;
        m[(2, 1)] = s;
        m[(2, 2)] = c;
        if with_minus {
            m[(3, 3)] = -1.0;
        }
        EdgeOperator::new(2, m, OpLabel::U2)
    }

    fn dense_positive_phases(u: &EdgeOperator) -> Vec<f64> {
        u.spectrum()
            .phases()
            .into_iter()
            .filter(|p| *p > 1e-9)
            .collect()
    }

    #[test]
    fn target_equal_to_fixed_vector() {
        let u2 = model_u2(0.7, false);
        let mu = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let dec = decompose_target(&u2, &mu).unwrap();
        assert_relative_eq!(dec.a0, 1.0, epsilon = 1e-12);
        assert!(dec.pairs.is_empty());
        assert_eq!(secular_phases(&dec).unwrap(), vec![PI]);
    }

    #[test]
    fn target_orthogonal_to_fixed_vector() {
        let u2 = model_u2(0.7, false);
        let mu = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let dec = decompose_target(&u2, &mu).unwrap();
        assert!(dec.a0.abs() < 1e-12);
        assert!(secular_phases(&dec).unwrap().is_empty());
    }

    #[test]
    fn model_operator_roots_match_dense() {
        let u2 = model_u2(1.1, true);
        let mu = DVector::from_vec(vec![0.5, 0.6, 0.2, 0.3]).normalize();
        let dec = decompose_target(&u2, &mu).unwrap();
        assert_relative_eq!(dec.norm_sq(), 1.0, epsilon = 1e-10);
        let roots = secular_phases(&dec).unwrap();
        assert_eq!(roots.len(), 2);
        let u = search_from_walk(&u2, &mu);
        let dense = dense_positive_phases(&u);
        for (r, d) in roots.iter().zip(dense.iter()) {
            assert!((r - d).abs() < 1e-10, "{roots:?} vs {dense:?}");
        }
        for &r in &roots {
            assert!(secular_fn(&dec, r).abs() < 1e-6);
            let w = eigvec_w(&dec, r);
            assert!(eigen_residual(&u, r, &w) < 1e-10);
            assert!(eigen_residual(&u, -r, &w.map(|z| z.conj())) < 1e-10);
        }
    }

    #[test]
    fn two_state_decomposition() {
        let (_, dec) = two_state_dec();
        assert_relative_eq!(dec.a0, FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_relative_eq!(dec.norm_sq(), 1.0, epsilon = 1e-10);
        assert!((cnorm(&(dec.rebuild_mu() - &dec.mu))) < 1e-10);
    }

    #[test]
    fn two_state_roots_and_vectors() {
        let (u, dec) = two_state_dec();
        let roots = secular_phases(&dec).unwrap();
        let dense = dense_positive_phases(&u);
        for r in &roots {
            assert!(
                dense.iter().any(|d| (d - r).abs() < 1e-10),
                "{roots:?} {dense:?}"
            );
        }
        for &r in &roots {
            let w = eigvec_w(&dec, r);
            assert!(eigen_residual(&u, r, &w) < 1e-10);
            assert!(cdot(&dec.mu, &eigvec_w_prime(&dec, r)).norm() < 1e-10);
            assert_relative_eq!(cnorm(&w).powi(2), w_norm_sq(&dec, r), epsilon = 1e-10);
        }
    }

    #[test]
    fn two_state_reconstructions() {
        let (u, dec) = two_state_dec();
        let roots = secular_phases(&dec).unwrap();
        let sys = initial_coefficients(&dec, &roots);
        assert!(cnorm(&(rebuild_mu(&dec, &sys) - &dec.mu)) < 1e-10);
        let pt = dec.phi_tilde();
        assert!(cnorm(&(rebuild_phi_tilde(&dec, &sys) - &pt)) < 1e-10);
        assert_relative_eq!(sys.total_mass(), 1.0 - dec.a0 * dec.a0, epsilon = 1e-10);

        let dense: f64 = u
            .spectrum()
            .masses(&(u.domain_basis().transpose().map(|x| Complex64::new(x, 0.0)) * &pt))
            .iter()
            .filter(|(p, _)| (*p - roots[0]).abs() < 1e-9)
            .map(|m| m.1)
            .sum();
        assert_relative_eq!(dense, 2.0 * sys.deltas[0].powi(2), epsilon = 1e-9);
    }

    #[test]
    fn rotation_of_phi_tilde() {
        let (u, dec) = two_state_dec();
        let roots = secular_phases(&dec).unwrap();
        let sys = initial_coefficients(&dec, &roots);
        let out = u_rotation(&u, &dec.phi_tilde());
        assert_relative_eq!(cnorm(&out), cnorm(&dec.phi_tilde()), epsilon = 1e-12);
        let overlap = cdot(&dec.mu, &out).norm();
        assert_relative_eq!(
            overlap,
            rotation_overlap_closed_form(&dec, &sys).abs(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn rotation_fixes_fixed_vector_and_swaps_pairs() {
        let u2 = model_u2(0.9, false);
        let e = |i: usize| {
            let mut v = CVector::zeros(3);
            v[i] = Complex64::new(1.0, 0.0);
            v
        };
        assert!(cnorm(&(u_rotation(&u2, &e(0)) - e(0))) < 1e-12);
        let out = u_rotation(&u2, &e(1));
        assert!(cdot(&e(1), &out).norm() < 1e-12);
        assert_relative_eq!(cnorm(&out), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_on_two_state_chain() {
        let c = MarkovChain::family(&Family::Cycle { n: 2 }).unwrap();
        let s = search_operator(&c, 0).unwrap();
        let targets: Vec<_> = (0..2).map(|z| search_operator(&c, z).unwrap().mu).collect();
        let entries = principal_projection(&s.u2, &targets).unwrap();
        assert_eq!(entries.len(), 2);
        let best = entries.iter().map(|e| e.length).fold(0.0, f64::max);
        assert!(best >= FRAC_1_SQRT_2 - 1e-9, "{entries:?}");

        // Compare with an explicit projection.
        let dec = decompose_target(&s.u2, &targets[0]).unwrap();
        let a = entries[0].alpha;
        let w = eigvec_w(&dec, a);
        let direct = projection_length(&dec.phi_tilde(), &w, &w.map(|z| z.conj()));
        assert_relative_eq!(direct, entries[0].length, epsilon = 1e-10);
    }

    #[test]
    fn projection_equal_on_transitive_chain() {
        let c = MarkovChain::family(&Family::Complete { n: 4 }).unwrap();
        let s = search_operator(&c, 0).unwrap();
        let targets: Vec<_> = (0..4).map(|z| search_operator(&c, z).unwrap().mu).collect();
        let entries = principal_projection(&s.u2, &targets).unwrap();
        for e in &entries {
            assert!((e.length - entries[0].length).abs() < 1e-10);
            assert!(e.length >= FRAC_1_SQRT_2 - 1e-9);
        }
    }

    #[test]
    fn projection_single_target_is_empty() {
        let u2 = model_u2(0.4, false);
        let mu = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(principal_projection(&u2, &[mu]).unwrap().is_empty());
    }

    #[test]
    fn projection_needs_span() {
        let u2 = model_u2(0.4, false);
        let mu = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert!(matches!(
            principal_projection(&u2, &[mu]),
            Err(Error::SpanViolation { .. })
        ));
    }
}
