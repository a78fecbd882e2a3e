//! Property sweep over a single chain.
//!
//! [`verify_chain`] evaluates the structural identities and inequalities of
//! every module on one chain and returns the violated ones, each carrying a
//! short tag naming the statement it checks.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chains::MarkovChain;
use crate::classical::{deleted_matrix, deleted_spectrum, h_eps, hitting_time, DeletedSpectrum};
use crate::error::{Error, Result};
use crate::linalg::{cnorm, op_norm, to_complex};
use crate::phase::{dense_oracle, detect, rotate, PEConfig};
use crate::qht::{qh_distribution, qht, qht_eps};
use crate::search::{
    decompose_target, eigen_residual, initial_coefficients, principal_projection, rebuild_mu,
    rebuild_phi_tilde, secular_phases,
};
use crate::szegedy::{
    classical_analogue, quantum_analogue, random_signs, reflection_walk, search_operator,
    signed_blocks, walk_decomposition, SearchOperator,
};
use crate::tulsi::{build_t, structural_checks, theta_star, tulsi_lemmas};

/// Largest chain for which the edge-space checks run.
pub const QUANTUM_NMAX: usize = 12;
/// Largest chain for which the dense phase-estimation oracle runs.
pub const ORACLE_NMAX: usize = 2;
/// Bound on the measured Detect and Rotate constants.
pub const PE_CONSTANT: f64 = 10.0;
/// Error levels for the `h_ε` comparison.
pub const CLASSICAL_EPS: [f64; 4] = [0.05, 0.1, 0.2, 0.3];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    /// Relative tolerance on identities between computed quantities.
    pub identity: f64,
    /// Eigenvector residuals and root agreement.
    pub residual: f64,
    /// Exact constructions (operator identities, round trips).
    pub construction: f64,
    /// Additive slack on inequalities.
    pub slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-8,
            residual: 1e-8,
            construction: 1e-10,
            slack: 1e-9,
        }
    }
}

impl Tolerances {
    /// Replaces the identity and residual tolerances; constructions keep the
    /// tighter of their default and `tol`.
    pub fn with_override(tol: f64) -> Result<Self> {
        if !(tol >= 1e-14 && tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tolerance {tol} below 1e-14"
            )));
        }
        let d = Self::default();
        Ok(Self {
            identity: tol,
            residual: tol,
            construction: d.construction.min(tol),
            slack: d.slack,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub tag: &'static str,
    pub chain: String,
    pub z: Option<usize>,
    pub eps: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub chains: usize,
    pub checks: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn merge(&mut self, other: VerifyReport) {
        self.chains += other.chains;
        self.checks += other.checks;
        self.violations.extend(other.violations);
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

struct Sweep<'a> {
    chain: &'a MarkovChain,
    tol: Tolerances,
    report: VerifyReport,
}

impl<'a> Sweep<'a> {
    fn check(
        &mut self,
        tag: &'static str,
        z: Option<usize>,
        eps: Option<f64>,
        ok: bool,
        detail: impl FnOnce() -> String,
    ) {
        self.report.checks += 1;
        if !ok {
            self.report.violations.push(Violation {
                tag,
                chain: self.chain.label().to_string(),
                z,
                eps,
                detail: detail(),
            });
        }
    }

    fn rel_close(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.tol.identity * a.abs().max(b.abs()).max(1.0)
    }
}

/// Runs every applicable check on `chain` for the error levels `eps`.
/// The chain must be reversible with nonnegative eigenvalues.
pub fn verify_chain(
    chain: &MarkovChain,
    eps: &[f64],
    seed: u64,
    tol: Tolerances,
) -> Result<VerifyReport> {
    chain.require_reversible()?;
    let mut sw = Sweep {
        chain,
        tol,
        report: VerifyReport {
            chains: 1,
            ..Default::default()
        },
    };
    chain_checks(&mut sw)?;
    let spectra: Vec<DeletedSpectrum> = (0..chain.n())
        .map(|z| deleted_spectrum(chain, z))
        .collect::<Result<_>>()?;
    classical_checks(&mut sw, &spectra, eps)?;
    if chain.n() <= QUANTUM_NMAX {
        let ops: Vec<SearchOperator> = (0..chain.n())
            .map(|z| search_operator(chain, z))
            .collect::<Result<_>>()?;
        walk_checks(&mut sw, &ops, &spectra, eps, seed)?;
        search_checks(&mut sw, &ops, &spectra, eps)?;
        phase_checks(&mut sw, &ops, eps, seed)?;
        tulsi_checks(&mut sw, &ops)?;
    }
    Ok(sw.report)
}

fn chain_checks(sw: &mut Sweep) -> Result<()> {
    let c = sw.chain;
    let p = c.transition();
    let rows = (0..c.n())
        .map(|x| (p.row(x).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    sw.check("chain-stochastic", None, None, rows <= 1e-12, || {
        format!("row sum off by {rows:e}")
    });
    let pi = c.stationary();
    let drift = (p.transpose() * pi - pi).amax();
    sw.check("chain-stationary", None, None, drift <= 1e-10, || {
        format!("pi P - pi = {drift:e}")
    });
    let db = c.detailed_balance_violation();
    sw.check("chain-detailed-balance", None, None, db <= 1e-10, || {
        format!("violation {db:e}")
    });
    for alpha in [0.0, 0.1, 0.3] {
        let min = c.lazify(alpha)?.min_eigenvalue()?;
        sw.check(
            "lazify-spectrum",
            None,
            None,
            min >= alpha - sw.tol.slack,
            || format!("alpha {alpha}: min eigenvalue {min}"),
        );
    }
    let rev = (c.time_reversal().transition() - p).amax();
    sw.check("time-reversal", None, None, rev <= 1e-12, || {
        format!("P* - P = {rev:e}")
    });
    Ok(())
}

fn classical_checks(sw: &mut Sweep, spectra: &[DeletedSpectrum], eps: &[f64]) -> Result<()> {
    let c = sw.chain;
    let kappa = c.min_eigenvalue()?;
    let slack = sw.tol.slack;
    let mut hts = Vec::with_capacity(c.n());
    for (z, spec) in spectra.iter().enumerate() {
        let eig = deleted_matrix(c, z).complex_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| {
                (lo.min(l.re), hi.max(l.re))
            });
        sw.check(
            "deleted-spectrum-claim",
            Some(z),
            None,
            lo >= kappa - slack && hi < 1.0 - slack,
            || format!("eigenvalues in [{lo}, {hi}], kappa {kappa}"),
        );
        let dist = spec.distribution();
        let e = dist.mean();
        let ht = hitting_time(c, z)?;
        hts.push(ht);
        let spectral = spec.hitting_time();
        sw.check(
            "ht-two-routes",
            Some(z),
            None,
            sw.rel_close(ht, spectral),
            || format!("linear solve {ht}, spectral sum {spectral}"),
        );
        sw.check(
            "hitting-sandwich",
            Some(z),
            None,
            2.0 * e <= ht + slack && ht <= 4.0 * e + slack,
            || format!("E[H_z] {e}, HT {ht}"),
        );
        for ce in CLASSICAL_EPS {
            let h = h_eps(c, z, ce)? as f64;
            let half = dist.quantile(ce / 2.0)?;
            let third = h_eps(c, z, ce / 3.0)? as f64;
            let ht_eps = dist.quantile(ce)?;
            sw.check(
                "h-eps-bounds",
                Some(z),
                Some(ce),
                h <= 4.0 * (2.0 / ce).ln() * half + slack && ht_eps <= third / 2.0 + slack,
                || format!("h_eps {h}, HT_eps/2 {half}, HT_eps {ht_eps}, h_eps/3 {third}"),
            );
        }
        for &e in eps {
            let q = dist.quantile(e)?;
            sw.check(
                "ht-eps-markov",
                Some(z),
                Some(e),
                q <= ht / (2.0 * e) + slack,
                || format!("HT_eps {q}, HT/(2 eps) {}", ht / (2.0 * e)),
            );
        }
    }
    // Some z satisfies HT ≤ 4·HT_ε for every ε < 1/2 in the list.
    let small: Vec<f64> = eps.iter().copied().filter(|&e| e < 0.5).collect();
    let witness = (0..c.n()).find(|&z| {
        let dist = spectra[z].distribution();
        small
            .iter()
            .all(|&e| dist.quantile(e).is_ok_and(|q| hts[z] <= 4.0 * q + slack))
    });
    sw.check(
        "ht-comparison-witness",
        None,
        None,
        witness.is_some(),
        || "no state with HT <= 4 HT_eps for all eps < 1/2".into(),
    );
    let nu1 = spectra
        .iter()
        .map(|s| s.principal_mass())
        .fold(0.0, f64::max);
    sw.check("principal-mass", None, None, nu1 >= 0.5 - slack, || {
        format!("max_z nu_1^2 = {nu1}")
    });
    Ok(())
}

fn walk_checks(
    sw: &mut Sweep,
    ops: &[SearchOperator],
    spectra: &[DeletedSpectrum],
    eps: &[f64],
    seed: u64,
) -> Result<()> {
    let c = sw.chain;
    let n = c.n();
    let ctol = sw.tol.construction;
    for (z, s) in ops.iter().enumerate() {
        let w = quantum_analogue(c, Some(z))?;
        let err = op_norm(&(&s.u.matrix * &s.u.matrix - &w.matrix));
        sw.check("fact-u2u1-squared", Some(z), None, err <= ctol, || {
            format!("operator norm gap {err:e}")
        });
        // Positive eigenphases of W(P,z) are the doubled deleted angles.
        let doubled: Vec<f64> = spectra[z]
            .thetas
            .iter()
            .map(|t| 2.0 * t)
            .filter(|&p| p > sw.tol.residual && p < PI - sw.tol.residual)
            .collect();
        let wspec = w.spectrum();
        let mut w_phases: Vec<f64> = Vec::new();
        for cl in &wspec.clusters {
            if cl.phase > sw.tol.residual && cl.phase < PI - sw.tol.residual {
                let mult = if cl.is_real() { cl.dim() } else { cl.dim() / 2 };
                w_phases.extend(std::iter::repeat_n(cl.phase, mult));
            }
        }
        w_phases.sort_by(f64::total_cmp);
        let mut expect = doubled.clone();
        expect.sort_by(f64::total_cmp);
        let matched = w_phases.len() == expect.len()
            && w_phases
                .iter()
                .zip(&expect)
                .all(|(a, b)| (a - b).abs() <= sw.tol.residual);
        sw.check("eigenphase-doubling", Some(z), None, matched, || {
            format!("W phases {w_phases:?}, doubled angles {expect:?}")
        });
        // The search operator carries every deleted angle as an eigenphase.
        let phases = s.u.spectrum().phases();
        let missing = spectra[z].thetas.iter().copied().find(|t| {
            *t > sw.tol.residual && !phases.iter().any(|p| (p - t).abs() <= sw.tol.residual)
        });
        sw.check(
            "swap-ref-eigenphases",
            Some(z),
            None,
            missing.is_none(),
            || format!("angle {missing:?} absent from {phases:?}"),
        );
    }
    for signs in [None, Some(random_signs(n, seed))] {
        let blocks = signed_blocks(c, signs.as_ref());
        let walk = reflection_walk(&blocks, Some(c.transition()))?;
        let back = classical_analogue(&walk)?;
        let err = (back.transition() - c.transition()).amax();
        sw.check("analogue-round-trip", None, None, err <= ctol, || {
            format!("gap {err:e}")
        });
        let dec = walk_decomposition(&walk)?;
        let off_graph = back
            .edges()
            .into_iter()
            .any(|(x, y)| c.transition()[(x, y)] == 0.0);
        let stat = (back.transition().transpose() * &dec.pi - &dec.pi).amax();
        sw.check(
            "analogue-lemma",
            None,
            None,
            !off_graph && stat <= 1e-9,
            || format!("off-graph support {off_graph}, stationarity {stat:e}"),
        );
        for (z, spec) in spectra.iter().enumerate() {
            let mut mu = DVector::zeros(n * n);
            mu.rows_mut(z * n, n).copy_from(&blocks[z]);
            let dist = spec.distribution();
            let qd = qh_distribution(&walk, &mu)?;
            for &e in eps {
                let q = qd.quantile(e)?;
                let target = dist.quantile(e)?.sqrt();
                sw.check(
                    "lower-bound-theorem",
                    Some(z),
                    Some(e),
                    sw.rel_close(q, target),
                    || format!("QHT_eps {q}, sqrt HT_eps {target}"),
                );
            }
        }
    }
    Ok(())
}

fn search_checks(
    sw: &mut Sweep,
    ops: &[SearchOperator],
    spectra: &[DeletedSpectrum],
    eps: &[f64],
) -> Result<()> {
    let c = sw.chain;
    let rtol = sw.tol.residual;
    let slack = sw.tol.slack;
    for (z, s) in ops.iter().enumerate() {
        let dec = decompose_target(&s.u2, &s.mu)?;
        let roots = secular_phases(&dec)?;
        let dense = s.u.spectrum();
        let phases = dense.phases();
        let worst = roots
            .iter()
            .map(|r| {
                phases
                    .iter()
                    .map(|p| (p - r).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        sw.check("secular-roots", Some(z), None, worst <= rtol, || {
            format!("root off dense spectrum by {worst:e}")
        });
        let sys = initial_coefficients(&dec, &roots);
        let res = sys
            .signed_pairs()
            .iter()
            .map(|(a, w)| eigen_residual(&s.u, *a, w))
            .fold(0.0, f64::max);
        sw.check("eigvec-residual", Some(z), None, res <= rtol, || {
            format!("residual {res:e}")
        });
        let r1 = cnorm(&(rebuild_mu(&dec, &sys) - &dec.mu));
        let r2 = cnorm(&(rebuild_phi_tilde(&dec, &sys) - dec.phi_tilde()));
        sw.check(
            "reconstruction",
            Some(z),
            None,
            r1 <= rtol && r2 <= rtol,
            || format!("mu gap {r1:e}, phi~ gap {r2:e}"),
        );
        let fixed = dense.fixed_dim();
        sw.check("akr0", Some(z), None, dec.a0 == 0.0 || fixed == 0, || {
            format!(
                "a0 = {} but U has a {fixed}-dimensional fixed space",
                dec.a0
            )
        });
        let qd = qh_distribution(&s.u2, &s.mu)?;
        let q = qd.mean();
        let ht = hitting_time(c, z)?;
        sw.check(
            "qht-sqrt-bound",
            Some(z),
            None,
            q <= (ht / 2.0).sqrt() + slack,
            || format!("QHT {q}, sqrt(HT/2) {}", (ht / 2.0).sqrt()),
        );
        let dist = spectra[z].distribution();
        for &e in eps {
            let qe = qd.quantile(e)?;
            let he = dist.quantile(e)?;
            let ok = if he == 0.0 {
                qe == 0.0
            } else {
                (qe * qe - he).abs() <= sw.tol.identity * he
            };
            sw.check("quadratic-identity", Some(z), Some(e), ok, || {
                format!("QHT_eps^2 {}, HT_eps {he}", qe * qe)
            });
            sw.check("qht-markov", Some(z), Some(e), qe <= q / e + slack, || {
                format!("QHT_eps {qe}, QHT/eps {}", q / e)
            });
        }
    }
    // The principal-projection witness.
    let targets: Vec<DVector<f64>> = ops.iter().map(|s| s.mu.clone()).collect();
    let entries = principal_projection(&ops[0].u2, &targets)?;
    let best = entries
        .iter()
        .max_by(|a, b| a.length.total_cmp(&b.length))
        .ok_or_else(|| Error::InvalidParameter("no targets".into()))?;
    sw.check(
        "projection-lemma",
        Some(best.index),
        None,
        best.length >= FRAC_1_SQRT_2 - slack,
        || format!("max projection {}", best.length),
    );
    let mu = &targets[best.index];
    let q = qht(&ops[0].u2, mu)?;
    for &e in eps.iter().filter(|&&e| e <= 0.5) {
        let qe = qht_eps(&ops[0].u2, mu, e)?;
        sw.check(
            "marioq",
            Some(best.index),
            Some(e),
            sw.rel_close(qe, 1.0 / best.alpha),
            || {
                format!(
                    "QHT_eps {qe}, 1/alpha_z {} (projection {})",
                    1.0 / best.alpha,
                    best.length
                )
            },
        );
        sw.check(
            "qht-comparison",
            Some(best.index),
            Some(e),
            q <= qe + slack,
            || format!("QHT {q}, QHT_eps {qe} (projection {})", best.length),
        );
    }
    Ok(())
}

fn phase_checks(sw: &mut Sweep, ops: &[SearchOperator], eps: &[f64], seed: u64) -> Result<()> {
    let n = sw.chain.n();
    for (z, s) in ops.iter().enumerate() {
        let pt = to_complex(&s.phi_tilde());
        let fixed = to_complex(&s.phi0);
        let probe = PEConfig::explicit(5, 3)?;
        let a = detect(&s.u2, &probe, &fixed, seed)?.accept_prob;
        sw.check("detect-fixed-zero", Some(z), None, a == 0.0, || {
            format!("accept probability {a:e} on the fixed vector")
        });
        let mut last = 0.0;
        let mut monotone = true;
        for r in [1, 3, 5] {
            let a = detect(&s.u, &PEConfig::explicit(4, r)?, &pt, seed)?.accept_prob;
            monotone &= a >= last - 1e-12;
            last = a;
        }
        sw.check("detect-monotone", Some(z), None, monotone, || {
            "accept probability fell with r".into()
        });
        if n <= ORACLE_NMAX {
            let cfg = PEConfig::explicit(4, 3)?;
            let oracle = dense_oracle(&s.u, &cfg, &pt)?;
            let a = detect(&s.u, &cfg, &pt, seed)?.accept_prob;
            let r = crate::phase::rotate_unchecked(&s.u, &cfg, &pt)?;
            let gap = (oracle.accept_prob - a)
                .abs()
                .max(cnorm(&(&oracle.rotate_output - &r.output)));
            sw.check("oracle-agreement", Some(z), None, gap <= 1e-10, || {
                format!("gap {gap:e}")
            });
        }
        let qd = qh_distribution(&s.u2, &s.mu)?;
        for &e in eps {
            let steps = qd.quantile(e)?.max(1.0);
            let cfg = PEConfig::new(1.0 / steps, e)?;
            let a = detect(&s.u, &cfg, &pt, seed)?.accept_prob;
            let k = (pt.norm_squared() - a).max(0.0) / e;
            sw.check("detect-theorem", Some(z), Some(e), k < PE_CONSTANT, || {
                format!("measured constant {k}")
            });
            match rotate(&s.u, &cfg, &pt) {
                Ok(r) => {
                    let norm_gap = (r.output.norm_squared() + r.garbage_norm.powi(2)
                        - pt.norm_squared())
                    .abs();
                    sw.check("rotate-norm", Some(z), Some(e), norm_gap <= 1e-9, || {
                        format!("norm drift {norm_gap:e}")
                    });
                    let k = r.distance_to_ideal / e.sqrt();
                    sw.check("rotate-theorem", Some(z), Some(e), k < PE_CONSTANT, || {
                        format!("measured constant {k}")
                    });
                }
                // Rotate is only defined for phases within ±π/2.
                Err(Error::PhaseRangeViolation { .. }) => {}
                Err(other) => return Err(other),
            }
        }
    }
    Ok(())
}

fn tulsi_checks(sw: &mut Sweep, ops: &[SearchOperator]) -> Result<()> {
    let slack = sw.tol.slack;
    for (z, s) in ops.iter().enumerate() {
        let dec = decompose_target(&s.u2, &s.mu)?;
        let Some(&alpha1) = secular_phases(&dec)?.first() else {
            continue;
        };
        let theta = theta_star(dec.a0, alpha1);
        let lem = tulsi_lemmas(&dec, theta)?;
        sw.check(
            "tulsi-lemma1",
            Some(z),
            None,
            lem.cot_ok && lem.ratio_ok != Some(false),
            || format!("{lem:?}"),
        );
        sw.check("tulsi-lemma2", Some(z), None, lem.norm_ok, || {
            format!("{lem:?}")
        });
        debug_assert!(lem.ratio_ok.is_some() == (alpha1 <= FRAC_PI_4));
        let op = match build_t(&s.u2, &s.mu, theta) {
            Ok(op) => op,
            Err(Error::MinusOnePresent { .. }) => continue,
            Err(e) => return Err(e),
        };
        let q = op.t.domain_basis();
        let local = to_complex(&(q.transpose() * &op.mu_ext));
        let inside: Vec<f64> =
            op.t.spectrum()
                .masses(&local)
                .into_iter()
                .filter(|(p, m)| *m > 1e-12 && *p > 0.0 && *p <= alpha1 + slack)
                .map(|(p, _)| p)
                .collect();
        let unique = inside.len() == 1 && (inside[0] - lem.alpha1_theta).abs() <= sw.tol.residual;
        sw.check("tulsi-dense-root", Some(z), None, unique, || {
            format!(
                "dense phases in (0, alpha1]: {inside:?}, secular root {}",
                lem.alpha1_theta
            )
        });
        let (prod, orth, gap) = structural_checks(&op, &dec);
        sw.check(
            "tulsi-extension",
            Some(z),
            None,
            prod <= sw.tol.construction && orth <= sw.tol.construction && gap <= 1e-9,
            || format!("product {prod:e}, orthogonality {orth:e}, extension {gap:e}"),
        );
    }
    Ok(())
}

/// Checks for a chain matrix given directly, mainly for tests.
pub fn verify_matrix(p: DMatrix<f64>, eps: &[f64]) -> Result<VerifyReport> {
    verify_chain(
        &MarkovChain::from_transition(p)?,
        eps,
        0,
        Tolerances::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::Family;

    #[test]
    fn clean_on_small_families() {
        for f in [
            Family::Cycle { n: 5 },
            Family::Complete { n: 4 },
            Family::Hypercube { dim: 2 },
            Family::Random { n: 6, seed: 3 },
        ] {
            let c = MarkovChain::family(&f).unwrap().lazify(0.0).unwrap();
            let r = verify_chain(&c, &[0.1, 0.25, 0.5], 1, Tolerances::default()).unwrap();
            assert!(r.passed(), "{:?}", r.violations);
            assert!(r.checks > 50);
        }
    }

    #[test]
    fn two_state_boundary_is_reported() {
        let c = MarkovChain::family(&Family::Cycle { n: 2 }).unwrap();
        let r = verify_chain(&c, &[0.5], 1, Tolerances::default()).unwrap();
        let tags: Vec<&str> = r.violations.iter().map(|v| v.tag).collect();
        assert_eq!(tags, ["marioq", "qht-comparison"]);
        let r = verify_chain(&c, &[0.25], 1, Tolerances::default()).unwrap();
        assert!(r.passed(), "{:?}", r.violations);
    }

    #[test]
    fn tolerance_override() {
        assert!(Tolerances::with_override(1e-15).is_err());
        let t = Tolerances::with_override(1e-6).unwrap();
        assert_eq!(t.identity, 1e-6);
        assert_eq!(t.construction, 1e-10);
    }

    #[test]
    fn non_reversible_rejected() {
        let p = DMatrix::from_row_slice(3, 3, &[0.5, 0.4, 0.1, 0.1, 0.5, 0.4, 0.4, 0.1, 0.5]);
        assert!(matches!(
            verify_matrix(p, &[0.1]),
            Err(Error::NonReversible { .. })
        ));
    }
}
