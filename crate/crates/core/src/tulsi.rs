//! Tulsi's controlled search operator on `ℂ² ⊗ (edge space)`.
//!
//! With `|θ⟩ = (cos θ, −sin θ)` and `|θ⊥⟩ = (sin θ, cos θ)`:
//!
//! ```text
//! U₂^θ = |θ⟩⟨θ| ⊗ (−I) + |θ⊥⟩⟨θ⊥| ⊗ U₂
//! U₁^θ = |0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ U₁
//! T    = U₂^θ U₁^θ
//! ```
//!
//! `U₁^θ` reflects about `|1⟩|μ⟩`, so `T` is again an abstract search
//! operator. Since `|1⟩ = cos θ|θ⊥⟩ − sin θ|θ⟩`, the extended target has
//! coefficients `a₀cos θ`, `a_j cos θ` and `a₋₁ = sin θ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::chains::MarkovChain;
use crate::error::{Error, Result};
use crate::linalg::{cdot, cnorm, to_complex, CVector};
use crate::phase::{rotate, rotate_unchecked, PEConfig, RotateReport};
use crate::qht::qht_eps;
use crate::search::{
    bisect_decreasing, decompose_target, initial_coefficients, rotation_overlap_closed_form,
    secular_phases, w_norm_sq, TargetDecomposition, TargetPair,
};
use crate::szegedy::{search_operator, EdgeOperator, OpLabel};

/// `|a₋₁|` above which `U₂` is taken to have a `−1` eigenvector.
pub const MINUS_ONE_TOL: f64 = 1e-8;
/// Lower bound on `α₁^θ/α₁` when `α₁ ≤ π/4`.
pub const ALPHA_RATIO: f64 = 0.78;
pub const COT_FACTOR: f64 = 1.01;
pub const NORM_FACTOR: f64 = 3.0;
/// Error parameter of the Rotate call in the finding procedure.
pub const FIND_EPS: f64 = 0.25;

fn ket_theta(theta: f64) -> DVector<f64> {
    DVector::from_vec(vec![theta.cos(), -theta.sin()])
}

fn ket_theta_perp(theta: f64) -> DVector<f64> {
    DVector::from_vec(vec![theta.sin(), theta.cos()])
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

fn kron_vec(a: &DVector<f64>, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for (i, &ai) in a.iter().enumerate() {
        out.rows_mut(i * b.len(), b.len())
            .copy_from(&(b * Complex64::new(ai, 0.0)));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TulsiOperator {
    pub theta: f64,
    pub t: EdgeOperator,
    pub u2_theta: EdgeOperator,
    pub u1_theta: EdgeOperator,
    /// `|1⟩|μ⟩`.
    pub mu_ext: DVector<f64>,
    /// `|θ⊥⟩|φ̃₀⟩`.
    pub start_ext: DVector<f64>,
}

/// Builds `T(U₁, U₂, θ)` for the target `mu`. `U₂` must have no `−1`
/// eigenvector in its domain.
pub fn build_t(u2: &EdgeOperator, mu: &DVector<f64>, theta: f64) -> Result<TulsiOperator> {
    if !(0.0..PI / 2.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "theta {theta} outside [0, pi/2)"
        )));
    }
    if let Some(c) = u2
        .spectrum()
        .clusters
        .iter()
        .find(|c| c.is_real() && c.phase > 1.0)
    {
        return Err(Error::MinusOnePresent {
            weight: c.dim() as f64,
        });
    }
    let d = u2.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let th = ket_theta(theta);
    let tp = ket_theta_perp(theta);
    let u2t = kron(&(&th * th.transpose()), &(-&id)) + kron(&(&tp * tp.transpose()), &u2.matrix);
    let u1 = &id - (mu * mu.transpose()) * 2.0;
    let mut p0 = DMatrix::zeros(2, 2);
    p0[(0, 0)] = 1.0;
    let mut p1 = DMatrix::zeros(2, 2);
    p1[(1, 1)] = 1.0;
    let u1t = kron(&p0, &id) + kron(&p1, &u1);
    let domain = kron(&DMatrix::identity(2, 2), &u2.domain_basis());
    let mk = |m: DMatrix<f64>, label| EdgeOperator::new(u2.n, m, label).with_domain(domain.clone());
    let phi0 = u2.fixed_vector()?;
    let a0 = phi0.dot(mu);
    let phi_tilde = &phi0 - mu * a0;
    let mut mu_ext = DVector::zeros(2 * d);
    mu_ext.rows_mut(d, d).copy_from(mu);
    let start = kron_vec(&tp, &to_complex(&phi_tilde)).map(|z| z.re);
    Ok(TulsiOperator {
        theta,
        t: mk(&u2t * &u1t, OpLabel::TulsiEmbedded),
        u2_theta: mk(u2t, OpLabel::U2),
        u1_theta: mk(u1t, OpLabel::U1),
        mu_ext,
        start_ext: start,
    })
}

/// `θ = arctan(a₀·cot(α₁/2)/10)`.
pub fn theta_star(a0: f64, alpha1: f64) -> f64 {
    (a0 * (alpha1 / 2.0).cos() / (alpha1 / 2.0).sin() / 10.0).atan()
}

/// Decomposition of `|1⟩|μ⟩` over the eigenvectors of `U₂^θ`, derived from
/// the decomposition of `μ` over those of `U₂`.
pub fn extend_decomposition(dec: &TargetDecomposition, theta: f64) -> TargetDecomposition {
    let (s, c) = theta.sin_cos();
    let tp = ket_theta_perp(theta);
    let e1 = DVector::from_vec(vec![0.0, 1.0]);
    let pairs = dec
        .pairs
        .iter()
        .map(|p| TargetPair {
            theta: p.theta,
            a: p.a * c,
            phi_plus: kron_vec(&tp, &p.phi_plus),
        })
        .collect();
    let (a_minus1, phi_minus1) = if s > 0.0 {
        (s, Some(kron_vec(&(-ket_theta(theta)), &dec.mu)))
    } else {
        (0.0, None)
    };
    TargetDecomposition {
        mu: kron_vec(&e1, &dec.mu),
        a0: dec.a0 * c,
        phi0: kron_vec(&tp, &dec.phi0),
        pairs,
        a_minus1,
        phi_minus1,
    }
}

/// The secular function of `T` divided by `cos²θ`.
pub fn tulsi_secular_fn(dec: &TargetDecomposition, theta: f64, x: f64) -> f64 {
    let h = x / 2.0;
    let cot = |v: f64| v.cos() / v.sin();
    let mut f = dec.a0 * dec.a0 * cot(h);
    for p in &dec.pairs {
        f += p.a * p.a * (cot(h + p.theta / 2.0) + cot(h - p.theta / 2.0));
    }
    f - theta.tan().powi(2) * h.tan()
}

/// Smallest positive eigenphase `α₁^θ` of `T`, from the decomposition of
/// the original target.
pub fn tulsi_secular(dec: &TargetDecomposition, theta: f64) -> Result<f64> {
    let upper = dec.pairs.first().map_or(PI, |p| p.theta);
    if theta == 0.0 && dec.pairs.is_empty() {
        return Ok(PI);
    }
    bisect_decreasing(|x| tulsi_secular_fn(dec, theta, x), 0.0, upper)
}

/// Unnormalised eigenvector `w_{α,θ}` of `T`.
pub fn tulsi_eigvec(dec: &TargetDecomposition, theta: f64, alpha: f64) -> CVector {
    crate::search::eigvec_w(&extend_decomposition(dec, theta), alpha)
}

#[derive(Debug, Clone, Serialize)]
pub struct TulsiLemmas {
    pub theta: f64,
    pub alpha1: f64,
    pub alpha1_theta: f64,
    pub cot_ok: bool,
    /// `None` when `α₁ > π/4`, outside the ratio bound's hypothesis.
    pub ratio_ok: Option<bool>,
    pub norm_ok: bool,
    pub w_norm: f64,
    pub w_norm_theta: f64,
}

/// Evaluates the bounds relating `α₁^θ` and `w_{α₁,θ}` to the original
/// principal eigenpair, at the chosen `θ`.
pub fn tulsi_lemmas(dec: &TargetDecomposition, theta: f64) -> Result<TulsiLemmas> {
    let roots = secular_phases(dec)?;
    let alpha1 = *roots.first().ok_or(Error::InvalidParameter(
        "target orthogonal to the fixed vector".into(),
    ))?;
    let alpha1_theta = tulsi_secular(dec, theta)?;
    let cot = |v: f64| (v / 2.0).cos() / (v / 2.0).sin();
    let ext = extend_decomposition(dec, theta);
    let w_norm = w_norm_sq(dec, alpha1).sqrt();
    let w_norm_theta = w_norm_sq(&ext, alpha1_theta).sqrt();
    Ok(TulsiLemmas {
        theta,
        alpha1,
        alpha1_theta,
        cot_ok: cot(alpha1_theta) <= COT_FACTOR * cot(alpha1) + 1e-9,
        ratio_ok: (alpha1 <= PI / 4.0).then_some(alpha1_theta >= ALPHA_RATIO * alpha1 - 1e-9),
        norm_ok: w_norm_theta <= NORM_FACTOR * theta.cos() * w_norm + 1e-9,
        w_norm,
        w_norm_theta,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FindReport {
    pub chain: String,
    pub z: usize,
    pub theta: f64,
    pub alpha1: f64,
    pub alpha1_theta: f64,
    pub steps: f64,
    pub overlap_closed_form: f64,
    pub overlap_simulated: f64,
    /// `|simulated − closed form|` may not exceed this.
    pub agreement_budget: f64,
    pub distance_to_ideal: f64,
    /// `2a₀²cot²(α₁/2)/‖w_{α₁}‖² ≥ 1 − ε`.
    pub in_hypothesis: bool,
    /// Whether every significant eigencomponent of the start state under
    /// `T` has phase in `[−π/2, π/2]`.
    pub phase_range_ok: bool,
}

impl FindReport {
    pub fn agrees(&self) -> bool {
        (self.overlap_simulated - self.overlap_closed_form).abs() <= self.agreement_budget
    }
}

/// Runs `Rotate(T, 1/T_steps, 1/4)` on `|θ⊥⟩|φ̃₀⟩` with
/// `T_steps = max(1, QHT_ε(U₂, μ)/0.78)` and `θ = θ*`, unless
/// `theta_override` is given.
pub fn find_experiment_with(
    chain: &MarkovChain,
    z: usize,
    eps: f64,
    theta_override: Option<f64>,
) -> Result<FindReport> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "eps {eps} outside (0, 1/2]"
        )));
    }
    let s = search_operator(chain, z)?;
    let dec = decompose_target(&s.u2, &s.mu)?;
    if dec.a_minus1.abs() > MINUS_ONE_TOL {
        return Err(Error::MinusOnePresent {
            weight: dec.a_minus1,
        });
    }
    let roots = secular_phases(&dec)?;
    let alpha1 = *roots.first().ok_or(Error::InvalidParameter(
        "target orthogonal to the fixed vector".into(),
    ))?;
    let theta = theta_override.unwrap_or_else(|| theta_star(dec.a0, alpha1));
    let op = build_t(&s.u2, &s.mu, theta)?;
    let alpha1_theta = tulsi_secular(&dec, theta)?;

    let ext = extend_decomposition(&dec, theta);
    let ext_roots = secular_phases(&ext)?;
    let sys = initial_coefficients(&ext, &ext_roots);
    let closed = rotation_overlap_closed_form(&ext, &sys).abs();

    let steps = (qht_eps(&s.u2, &s.mu, eps)? / ALPHA_RATIO).max(1.0);
    let cfg = PEConfig::new(1.0 / steps, FIND_EPS)?;
    let start = to_complex(&op.start_ext);
    let (report, phase_range_ok): (RotateReport, bool) = match rotate(&op.t, &cfg, &start) {
        Ok(r) => (r, true),
        Err(Error::PhaseRangeViolation { .. }) => (rotate_unchecked(&op.t, &cfg, &start)?, false),
        Err(e) => return Err(e),
    };
    let simulated = cdot(&to_complex(&op.mu_ext), &report.output).norm();

    let cot1 = (alpha1 / 2.0).cos() / (alpha1 / 2.0).sin();
    let principal = 2.0 * (dec.a0 * cot1).powi(2) / w_norm_sq(&dec, alpha1);
    // The start state differs from the extended φ̃ by −a₀ sin θ |0⟩|μ⟩.
    let budget = report.distance_to_ideal + dec.a0 * theta.sin() + 1e-9;
    Ok(FindReport {
        chain: chain.label().to_string(),
        z,
        theta,
        alpha1,
        alpha1_theta,
        steps,
        overlap_closed_form: closed,
        overlap_simulated: simulated,
        agreement_budget: budget,
        distance_to_ideal: report.distance_to_ideal,
        in_hypothesis: principal >= 1.0 - eps,
        phase_range_ok,
    })
}

pub fn find_experiment(chain: &MarkovChain, z: usize, eps: f64) -> Result<FindReport> {
    find_experiment_with(chain, z, eps, None)
}

/// `‖T − U₂^θU₁^θ‖`, `‖TᵀT − I‖` and the extended-decomposition gap
/// against a direct projection of `|1⟩|μ⟩`.
pub fn structural_checks(op: &TulsiOperator, dec: &TargetDecomposition) -> (f64, f64, f64) {
    let prod = (&op.t.matrix - &op.u2_theta.matrix * &op.u1_theta.matrix).amax();
    let orth = op.t.orthogonality_defect();
    let ext = extend_decomposition(dec, op.theta);
    let gap = cnorm(&(ext.rebuild_mu() - to_complex(&op.mu_ext)));
    (prod, orth, gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::Family;
    use crate::search::{eigen_residual, eigvec_w, rebuild_mu, search_from_walk};
    use approx::assert_relative_eq;

    fn setup(
        f: Family,
        z: usize,
    ) -> (
        MarkovChain,
        crate::szegedy::SearchOperator,
        TargetDecomposition,
    ) {
        let c = MarkovChain::family(&f).unwrap();
        let s = search_operator(&c, z).unwrap();
        let dec = decompose_target(&s.u2, &s.mu).unwrap();
        (c, s, dec)
    }

    #[test]
    fn theta_star_limits() {
        assert_eq!(theta_star(0.0, 0.5), 0.0);
        assert!(theta_star(1.0, PI).abs() < 1e-15);
        let t = theta_star(0.3, 0.4);
        assert!(t > 0.0 && t < PI / 2.0);
    }

    #[test]
    fn operator_structure() {
        let (_, s, dec) = setup(Family::Cycle { n: 2 }, 1);
        let op = build_t(&s.u2, &s.mu, 0.3).unwrap();
        assert_eq!(op.t.dim(), 8);
        let (prod, orth, gap) = structural_checks(&op, &dec);
        assert!(prod < 1e-12 && orth < 1e-12 && gap < 1e-9);
        let ext = extend_decomposition(&dec, 0.3);
        assert_relative_eq!(ext.norm_sq(), 1.0, epsilon = 1e-10);
        // Direct decomposition against U₂^θ agrees on the coefficients.
        let direct = decompose_target(&op.u2_theta, &op.mu_ext).unwrap();
        assert_relative_eq!(direct.a0, ext.a0, epsilon = 1e-9);
        assert_relative_eq!(direct.a_minus1, ext.a_minus1, epsilon = 1e-9);
    }

    #[test]
    fn zero_theta_reduces_to_original() {
        let (_, s, dec) = setup(Family::Complete { n: 4 }, 0);
        let roots = secular_phases(&dec).unwrap();
        assert_eq!(tulsi_secular(&dec, 0.0).unwrap(), roots[0]);
        let ext = extend_decomposition(&dec, 0.0);
        assert_eq!(ext.a_minus1, 0.0);
        let w = tulsi_eigvec(&dec, 0.0, roots[0]);
        let base = eigvec_w(&dec, roots[0]);
        let e1 = DVector::from_vec(vec![0.0, 1.0]);
        assert!(cnorm(&(w - kron_vec(&e1, &base))) < 1e-12);
        let _ = s;
    }

    #[test]
    fn root_matches_dense_and_bounds_hold() {
        for (f, z) in [(Family::Cycle { n: 2 }, 1), (Family::Complete { n: 4 }, 0)] {
            let (_, s, dec) = setup(f, z);
            let alpha1 = secular_phases(&dec).unwrap()[0];
            let theta = theta_star(dec.a0, alpha1);
            let op = build_t(&s.u2, &s.mu, theta).unwrap();
            let lem = tulsi_lemmas(&dec, theta).unwrap();
            assert!(lem.alpha1_theta > 0.0 && lem.alpha1_theta <= alpha1);
            assert!(
                lem.cot_ok && lem.norm_ok && lem.ratio_ok != Some(false),
                "{lem:?}"
            );
            let dense = op.t.spectrum().phases();
            assert!(dense.iter().any(|p| (p - lem.alpha1_theta).abs() < 1e-8));
            let w = tulsi_eigvec(&dec, theta, lem.alpha1_theta);
            assert!(eigen_residual(&op.t, lem.alpha1_theta, &w) < 1e-8);
            assert!(cdot(&to_complex(&op.mu_ext), &(&w - to_complex(&op.mu_ext))).norm() < 1e-10);
        }
    }

    #[test]
    fn extended_reconstruction() {
        let (_, _, dec) = setup(Family::Cycle { n: 2 }, 1);
        let alpha1 = secular_phases(&dec).unwrap()[0];
        let theta = theta_star(dec.a0, alpha1);
        let ext = extend_decomposition(&dec, theta);
        let roots = secular_phases(&ext).unwrap();
        let sys = initial_coefficients(&ext, &roots);
        assert!(cnorm(&(rebuild_mu(&ext, &sys) - &ext.mu)) < 1e-8);
    }

    #[test]
    fn rejects_minus_one() {
        let mut m = DMatrix::identity(3, 3);
        m[(2, 2)] = -1.0;
        let u2 = EdgeOperator::new(1, m, OpLabel::U2);
        let mu = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        assert!(matches!(
            build_t(&u2, &mu, 0.2),
            Err(Error::MinusOnePresent { .. })
        ));
    }

    #[test]
    fn finding_on_small_chains() {
        for (f, z) in [(Family::Cycle { n: 2 }, 1), (Family::Complete { n: 4 }, 0)] {
            let c = MarkovChain::family(&f).unwrap();
            let r = find_experiment(&c, z, 0.5).unwrap();
            assert!(r.agrees(), "{r:?}");
        }
        let c = MarkovChain::family(&Family::Complete { n: 4 }).unwrap();
        assert!(find_experiment(&c, 0, 0.5).unwrap().overlap_simulated >= 0.1);
    }

    #[test]
    fn zero_theta_matches_plain_rotation() {
        let c = MarkovChain::family(&Family::Complete { n: 4 }).unwrap();
        let r = find_experiment_with(&c, 0, 0.5, Some(0.0)).unwrap();
        let s = search_operator(&c, 0).unwrap();
        let dec = decompose_target(&s.u2, &s.mu).unwrap();
        let sys = initial_coefficients(&dec, &secular_phases(&dec).unwrap());
        let plain = rotation_overlap_closed_form(&dec, &sys).abs();
        assert_relative_eq!(r.overlap_closed_form, plain, epsilon = 1e-10);
        let u = search_from_walk(&s.u2, &s.mu);
        let ideal = crate::search::u_rotation(&u, &to_complex(&s.phi_tilde()));
        assert_relative_eq!(
            cdot(&to_complex(&s.mu), &ideal).norm(),
            plain,
            epsilon = 1e-9
        );
    }
}
