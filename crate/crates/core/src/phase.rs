//! Phase estimation, Detect, MainDetect and Rotate.
//!
//! The analytic path works per eigencomponent of `ψ`: one round of
//! estimation with `t` bits returns grid outcome `y` with the Fejér
//! probability `|N⁻¹ Σ_k e^{ik(α − 2πy/N)}|²`, `N = 2^t`. The dense oracle
//! instead carries the joint state of all `r` ancilla registers and the
//! system explicitly.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{cdot, cnorm, to_complex, CVector, Component};
use crate::search::{search_from_walk, u_rotation};
use crate::szegedy::EdgeOperator;

pub const MAX_BITS: u32 = 20;
/// Largest joint-state dimension the dense oracle will build.
pub const ORACLE_LIMIT: usize = 1 << 22;
/// Components lighter than this are ignored by the phase-range check.
const NEGLIGIBLE_COMPONENT: f64 = 1e-9;
const PHASE_RANGE_SLACK: f64 = 1e-9;
const DOMAIN_TOL: f64 = 1e-8;
/// Eigencomponents below this norm are eigensolver roundoff and dropped.
pub const COMPONENT_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PEConfig {
    pub t: u32,
    pub r: usize,
    pub delta: f64,
    pub eps: f64,
}

impl PEConfig {
    /// `2^t ≥ 2π/Δ` (Δ in radians) and `r = 2⌈log₂(1/ε)⌉ + 1`.
    pub fn new(delta: f64, eps: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta {delta} must be positive"
            )));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!("eps {eps} outside (0, 1)")));
        }
        let t = (2.0 * PI / delta).log2().ceil().max(1.0);
        if t > MAX_BITS as f64 {
            return Err(Error::InvalidParameter(format!(
                "delta {delta} needs {t} bits, limit {MAX_BITS}"
            )));
        }
        let r = 2 * ((1.0 / eps).log2().ceil().max(0.0) as usize) + 1;
        Ok(Self {
            t: t as u32,
            r,
            delta,
            eps,
        })
    }

    /// Explicit bit and round counts; `delta`/`eps` are set to the values
    /// they imply.
    pub fn explicit(t: u32, r: usize) -> Result<Self> {
        if t == 0 || t > MAX_BITS || r == 0 || r.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= t <= {MAX_BITS} and odd r, got t={t}, r={r}"
            )));
        }
        Ok(Self {
            t,
            r,
            delta: 2.0 * PI / (1u64 << t) as f64,
            eps: 0.5f64.powi(((r - 1) / 2) as i32),
        })
    }

    pub fn grid(&self) -> usize {
        1usize << self.t
    }
}

/// Outcome law of one estimation round for eigenphase `alpha`.
pub fn pe_pmf(alpha: f64, t: u32) -> Vec<f64> {
    let n = 1usize << t;
    let nf = n as f64;
    let scaled = alpha * nf / (2.0 * PI);
    let nearest = scaled.round();
    if (scaled - nearest).abs() <= 1e-12 * nf.max(1.0) {
        let m = (nearest as i64).rem_euclid(n as i64) as usize;
        let mut out = vec![0.0; n];
        out[m] = 1.0;
        return out;
    }
    (0..n)
        .map(|y| {
            let x = alpha - 2.0 * PI * y as f64 / nf;
            let num = (nf * x / 2.0).sin();
            let den = nf * (x / 2.0).sin();
            (num / den).powi(2)
        })
        .collect()
}

/// Signed estimate in `(−π, π]` for grid outcome `y`.
pub fn signed_phase(y: usize, t: u32) -> f64 {
    let n = (1usize << t) as f64;
    let a = 2.0 * PI * y as f64 / n;
    if a <= PI {
        a
    } else {
        a - 2.0 * PI
    }
}

/// Probability that one round returns a negative estimate.
pub fn negative_probability(alpha: f64, t: u32) -> f64 {
    let n = 1usize << t;
    pe_pmf(alpha, t)
        .iter()
        .enumerate()
        .filter(|(y, _)| 2 * y > n)
        .map(|(_, p)| p)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Probability that more than half of `r` independent rounds succeed.
pub fn majority_probability(p: f64, r: usize) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0f64;
    for k in 0..=r {
        if k > 0 {
            binom = binom * (r - k + 1) as f64 / k as f64;
        }
        if 2 * k > r {
            total += binom * p.powi(k as i32) * (1.0 - p).powi((r - k) as i32);
        }
    }
    total
}

/// Eigencomponents of `psi` under `u`, lifted to the full space.
fn components_of(u: &EdgeOperator, psi: &CVector) -> Result<Vec<Component>> {
    let q = u.domain_basis();
    let qc = q.map(|x| Complex64::new(x, 0.0));
    let local = qc.adjoint() * psi;
    let residual = cnorm(&(&qc * &local - psi));
    if residual > DOMAIN_TOL {
        return Err(Error::OutsideDomain { residual });
    }
    Ok(u.spectrum()
        .components(&local, COMPONENT_FLOOR)
        .into_iter()
        .map(|c| Component {
            phase: c.phase,
            vector: &qc * c.vector,
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectResult {
    pub accept_prob: f64,
    pub accepted: bool,
}

/// Accepts when any of `r` estimates is nonzero.
pub fn detect(u: &EdgeOperator, cfg: &PEConfig, psi: &CVector, seed: u64) -> Result<DetectResult> {
    let mut accept = 0.0;
    for c in components_of(u, psi)? {
        let q = pe_pmf(c.phase, cfg.t)[0];
        accept += cnorm(&c.vector).powi(2) * (1.0 - q.powi(cfg.r as i32));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accepted = rng.random_bool(accept.clamp(0.0, 1.0));
    Ok(DetectResult {
        accept_prob: accept,
        accepted,
    })
}

/// Measures `{μ, μ⊥}`, accepting on `μ`; otherwise runs Detect on the
/// search operator built from `u2` and `mu`.
pub fn main_detect(
    u2: &EdgeOperator,
    mu: &DVector<f64>,
    cfg: &PEConfig,
    psi: &CVector,
    seed: u64,
) -> Result<f64> {
    let muc = to_complex(mu);
    let overlap = cdot(&muc, psi);
    let rest = psi - &muc * overlap;
    let u = search_from_walk(u2, mu);
    Ok(overlap.norm_sqr() + detect(&u, cfg, &rest, seed)?.accept_prob)
}

#[derive(Debug, Clone, Serialize)]
pub struct RotateReport {
    #[serde(skip)]
    pub output: CVector,
    pub garbage_norm: f64,
    pub distance_to_ideal: f64,
}

fn rotate_inner(
    u: &EdgeOperator,
    cfg: &PEConfig,
    psi: &CVector,
    check: bool,
) -> Result<RotateReport> {
    let mut output = CVector::zeros(psi.len());
    for c in components_of(u, psi)? {
        if check
            && cnorm(&c.vector) > NEGLIGIBLE_COMPONENT
            && c.phase.abs() > PI / 2.0 + PHASE_RANGE_SLACK
        {
            return Err(Error::PhaseRangeViolation { phase: c.phase });
        }
        let p = majority_probability(negative_probability(c.phase, cfg.t), cfg.r);
        output += &c.vector * Complex64::new(1.0 - 2.0 * p, 0.0);
    }
    let garbage = (cnorm(psi).powi(2) - cnorm(&output).powi(2))
        .max(0.0)
        .sqrt();
    let ideal = u_rotation(u, psi);
    Ok(RotateReport {
        distance_to_ideal: cnorm(&(&output - ideal)),
        output,
        garbage_norm: garbage,
    })
}

/// Ancilla-zero part of Rotate: each component is scaled by
/// `1 − 2·Pr[majority of estimates negative]`.
pub fn rotate(u: &EdgeOperator, cfg: &PEConfig, psi: &CVector) -> Result<RotateReport> {
    rotate_inner(u, cfg, psi, true)
}

/// Rotate without the `|α| ≤ π/2` precondition.
pub fn rotate_unchecked(u: &EdgeOperator, cfg: &PEConfig, psi: &CVector) -> Result<RotateReport> {
    rotate_inner(u, cfg, psi, false)
}

/// Outcome-1 probability of the control test, `‖ψ − Vψ‖²/4`.
pub fn control_test_prob(v: &DMatrix<f64>, psi: &CVector) -> f64 {
    let vc = v.map(|x| Complex64::new(x, 0.0));
    (cnorm(&(psi - vc * psi)).powi(2) / 4.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub accept_prob: f64,
    pub rotate_output: CVector,
    pub joint_dim: usize,
}

/// Explicit joint-state simulation of `r` estimation registers.
///
/// Each register goes through `H^{⊗t}`, controlled-`U^k` and the inverse
/// QFT, which maps the system state to `M_y ψ` on outcome `y` with
/// `M_y = N⁻¹ Σ_k e^{−2πiky/N} U^k`.
pub fn dense_oracle(u: &EdgeOperator, cfg: &PEConfig, psi: &CVector) -> Result<OracleResult> {
    let d = u.dim();
    let n = cfg.grid();
    let outcomes = n
        .checked_pow(cfg.r as u32)
        .filter(|&o| o.saturating_mul(d) <= ORACLE_LIMIT)
        .ok_or(Error::TooLarge {
            dim: n.saturating_pow(cfg.r as u32).saturating_mul(d),
            limit: ORACLE_LIMIT,
        })?;

    let uc = u.matrix.map(|x| Complex64::new(x, 0.0));
    let mut powers = Vec::with_capacity(n);
    let mut cur = DMatrix::<Complex64>::identity(d, d);
    for _ in 0..n {
        powers.push(cur.clone());
        cur = &uc * cur;
    }
    let m: Vec<DMatrix<Complex64>> = (0..n)
        .map(|y| {
            let mut acc = DMatrix::<Complex64>::zeros(d, d);
            for (k, pk) in powers.iter().enumerate() {
                let phase = -2.0 * PI * (k * y) as f64 / n as f64;
                acc += pk * Complex64::from_polar(1.0 / n as f64, phase);
            }
            acc
        })
        .collect();
    let m_adj: Vec<DMatrix<Complex64>> = m.iter().map(|x| x.adjoint()).collect();

    // Joint state: block `idx` (base-N digits y_1..y_r) holds the system
    // amplitude. Registers are applied one at a time.
    let mut joint: Vec<CVector> = vec![psi.clone()];
    for _ in 0..cfg.r {
        let mut next = Vec::with_capacity(joint.len() * n);
        for block in &joint {
            for my in &m {
                next.push(my * block);
            }
        }
        joint = next;
    }
    debug_assert_eq!(joint.len(), outcomes);

    let mut accept = 0.0;
    let mut rotated = CVector::zeros(d);
    for (idx, block) in joint.iter().enumerate() {
        let mut digits = Vec::with_capacity(cfg.r);
        let mut rest = idx;
        for _ in 0..cfg.r {
            digits.push(rest % n);
            rest /= n;
        }
        if digits.iter().any(|&y| y != 0) {
            accept += cnorm(block).powi(2);
        }
        let negatives = digits.iter().filter(|&&y| 2 * y > n).count();
        let sign = if 2 * negatives > cfg.r { -1.0 } else { 1.0 };
        // Uncompute: apply the adjoints in reverse register order.
        let mut back = block * Complex64::new(sign, 0.0);
        for &y in &digits {
            back = &m_adj[y] * back;
        }
        rotated += back;
    }
    Ok(OracleResult {
        accept_prob: accept,
        rotate_output: rotated,
        joint_dim: outcomes * d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{Family, MarkovChain};
    use crate::szegedy::{quantum_analogue, search_operator, OpLabel};
    use approx::assert_relative_eq;

    fn rotation(angles: &[f64], fixed: usize) -> EdgeOperator {
        let d = 2 * angles.len() + fixed;
        let mut m = DMatrix::identity(d, d);
        for (k, &a) in angles.iter().enumerate() {
            let (s, c) = a.sin_cos();
            let i = fixed + 2 * k;
            m[(i, i)] = c;
            m[(i, i + 1)] = -s;
            m[(i + 1, i)] = s;
            m[(i + 1, i + 1)] = c;
        }
        EdgeOperator::new(1, m, OpLabel::U)
    }

    fn basis(d: usize, i: usize) -> CVector {
        let mut v = CVector::zeros(d);
        v[i] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(pe_pmf(0.0, 4)[0], 1.0);
        let p = pe_pmf(2.0 * PI * 3.0 / 16.0, 4);
        assert_eq!(p[3], 1.0);
        let p = pe_pmf(PI / 3.0, 4);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let best = p.iter().cloned().fold(0.0, f64::max);
        assert!(best >= 4.0 / (PI * PI));
        let m = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(p[m - 1] + p[m] + p[m + 1] >= 8.0 / (PI * PI));
    }

    #[test]
    fn signed_phase_examples() {
        assert_eq!(signed_phase(0, 4), 0.0);
        assert_relative_eq!(signed_phase(8, 4), PI);
        assert_relative_eq!(signed_phase(15, 4), -PI / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn config_sizes() {
        let c = PEConfig::new(1.0, 0.2).unwrap();
        assert_eq!(c.t, 3);
        assert_eq!(c.r, 7);
        assert!(c.grid() as f64 >= 2.0 * PI / c.delta);
        assert!(PEConfig::new(1e-9, 0.1).is_err());
    }

    #[test]
    fn majority_limits() {
        assert_eq!(majority_probability(1.0, 5), 1.0);
        assert_eq!(majority_probability(0.0, 5), 0.0);
        assert_relative_eq!(majority_probability(0.5, 3), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn detect_on_fixed_vector_is_zero() {
        let u = rotation(&[0.9], 1);
        let cfg = PEConfig::explicit(4, 3).unwrap();
        let r = detect(&u, &cfg, &basis(3, 0), 1).unwrap();
        assert_eq!(r.accept_prob, 0.0);
        assert!(!r.accepted);

        let c = MarkovChain::family(&Family::Random { n: 5, seed: 4 }).unwrap();
        let s = search_operator(&c, 2).unwrap();
        let r = detect(&s.u2, &cfg, &to_complex(&s.phi0), 1).unwrap();
        assert_eq!(r.accept_prob, 0.0);
    }

    #[test]
    fn detect_on_grid_phases_is_certain() {
        let u = rotation(&[2.0 * PI / 8.0, 2.0 * PI * 3.0 / 8.0], 0);
        let cfg = PEConfig::explicit(3, 3).unwrap();
        let psi = (basis(4, 0) + basis(4, 2)) * Complex64::new(0.5, 0.0);
        let r = detect(&u, &cfg, &psi, 0).unwrap();
        assert_relative_eq!(r.accept_prob, cnorm(&psi).powi(2), epsilon = 1e-12);
    }

    #[test]
    fn detect_is_monotone_in_rounds() {
        let u = rotation(&[0.2, 1.3], 0);
        let psi =
            (basis(4, 0) + basis(4, 3)) * Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut last = 0.0;
        for r in [1, 3, 5, 7] {
            let p = detect(&u, &PEConfig::explicit(3, r).unwrap(), &psi, 0)
                .unwrap()
                .accept_prob;
            assert!(p >= last - 1e-15);
            last = p;
        }
    }

    #[test]
    fn rotate_examples() {
        let u = rotation(&[0.6], 1);
        let cfg = PEConfig::explicit(4, 3).unwrap();
        let w0 = basis(3, 0);
        let r = rotate(&u, &cfg, &w0).unwrap();
        assert!(cnorm(&(&r.output - &w0)) == 0.0);
        assert_eq!(r.garbage_norm, 0.0);

        let u = rotation(&[2.0 * PI / 16.0], 0);
        let i = Complex64::new(0.0, 1.0);
        let minus =
            (basis(2, 0) + basis(2, 1) * i) * Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let r = rotate(&u, &cfg, &minus).unwrap();
        // `minus` is the e^{−iα} eigenvector; its estimate is exactly −α.
        assert!(cnorm(&(&r.output + &minus)) < 1e-12);
    }

    #[test]
    fn rotate_rejects_wide_phases() {
        let u = rotation(&[2.5], 0);
        let cfg = PEConfig::explicit(4, 3).unwrap();
        assert!(matches!(
            rotate(&u, &cfg, &basis(2, 0)),
            Err(Error::PhaseRangeViolation { .. })
        ));
    }

    #[test]
    fn rotate_conserves_norm() {
        let u = rotation(&[0.3, 1.1], 1);
        let cfg = PEConfig::explicit(3, 5).unwrap();
        let psi =
            (basis(5, 0) + basis(5, 1) + basis(5, 4)) * Complex64::new(1.0 / 3f64.sqrt(), 0.0);
        let r = rotate(&u, &cfg, &psi).unwrap();
        assert_relative_eq!(
            cnorm(&r.output).powi(2) + r.garbage_norm.powi(2),
            1.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn control_test_examples() {
        let psi = basis(2, 0);
        assert_eq!(control_test_prob(&DMatrix::identity(2, 2), &psi), 0.0);
        assert_relative_eq!(control_test_prob(&(-DMatrix::identity(2, 2)), &psi), 1.0);

        let c = MarkovChain::family(&Family::Cycle { n: 2 }).unwrap();
        let w = quantum_analogue(&c, Some(1)).unwrap();
        let s = search_operator(&c, 1).unwrap();
        let pt = to_complex(&s.phi_tilde());
        let direct = (&s.phi_tilde() - &w.matrix * s.phi_tilde()).norm_squared() / 4.0;
        assert_relative_eq!(control_test_prob(&w.matrix, &pt), direct, epsilon = 1e-15);
    }

    #[test]
    fn oracle_agrees_on_two_state_chain() {
        let c = MarkovChain::family(&Family::Cycle { n: 2 }).unwrap();
        let s = search_operator(&c, 1).unwrap();
        let cfg = PEConfig::explicit(4, 3).unwrap();
        let pt = to_complex(&s.phi_tilde());
        let oracle = dense_oracle(&s.u, &cfg, &pt).unwrap();
        let analytic = detect(&s.u, &cfg, &pt, 3).unwrap();
        assert!((oracle.accept_prob - analytic.accept_prob).abs() < 1e-10);
        let rot = rotate_unchecked(&s.u, &cfg, &pt).unwrap();
        assert!(cnorm(&(oracle.rotate_output - rot.output)) < 1e-10);
    }

    #[test]
    fn oracle_agrees_on_synthetic_operator() {
        let u = rotation(&[0.4, 1.2], 1);
        let cfg = PEConfig::explicit(3, 3).unwrap();
        let psi = (basis(5, 0) * Complex64::new(0.3, 0.0)
            + basis(5, 1) * Complex64::new(0.5, 0.0)
            + basis(5, 4) * Complex64::new(0.0, 0.6))
            / Complex64::new((0.09f64 + 0.25 + 0.36).sqrt(), 0.0);
        let oracle = dense_oracle(&u, &cfg, &psi).unwrap();
        let rot = rotate(&u, &cfg, &psi).unwrap();
        assert!(cnorm(&(oracle.rotate_output - rot.output)) < 1e-10);
        let fixed = dense_oracle(&u, &cfg, &basis(5, 0)).unwrap();
        assert!(fixed.accept_prob < 1e-20);
    }

    #[test]
    fn oracle_size_limit() {
        let u = rotation(&[0.4], 0);
        let cfg = PEConfig::explicit(8, 5).unwrap();
        assert!(matches!(
            dense_oracle(&u, &cfg, &basis(2, 0)),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn main_detect_examples() {
        let c = MarkovChain::family(&Family::Cycle { n: 2 }).unwrap();
        let s = search_operator(&c, 1).unwrap();
        let cfg = PEConfig::new(0.5, 0.1).unwrap();
        let p = main_detect(&s.u2, &s.mu, &cfg, &to_complex(&s.mu), 0).unwrap();
        assert_relative_eq!(p, 1.0, epsilon = 1e-12);
        let p = main_detect(&s.u2, &s.mu, &cfg, &to_complex(&s.phi0), 0).unwrap();
        assert!(p >= 1.0 - 10.0 * cfg.eps, "{p}");
    }
}
