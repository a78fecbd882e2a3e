//! Ergodic Markov chains, standard reversible families and the
//! transformations used before quantisation.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_sorted;

/// Accepted deviation of an input row sum from 1.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Detailed-balance tolerance used by [`MarkovChain::is_reversible`].
pub const REVERSIBLE_TOL: f64 = 1e-10;

/// A row-stochastic, ergodic Markov chain together with its stationary
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    p: DMatrix<f64>,
    pi: DVector<f64>,
    known_transitive: bool,
    label: String,
}

impl MarkovChain {
    /// Validates `p`, renormalises rows and solves for the stationary
    /// distribution.
    pub fn from_transition(p: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = p.shape();
        if rows != cols || rows == 0 {
            return Err(Error::NotSquare { rows, cols });
        }
        let mut p = p;
        for i in 0..rows {
            let row = p.row(i);
            let sum: f64 = row.iter().sum();
            let min = row.min();
            if !(sum - 1.0).abs().le(&ROW_SUM_TOL) || min < 0.0 || !min.is_finite() {
                return Err(Error::NotStochastic { row: i, sum, min });
            }
            p.row_mut(i).scale_mut(1.0 / sum);
        }
        check_ergodic(&p)?;
        let pi = stationary(&p)?;
        Ok(Self {
            p,
            pi,
            known_transitive: false,
            label: "transition".into(),
        })
    }

    /// Reversible chain from a symmetric nonnegative weight matrix:
    /// `p_xy = W_xy / Σ_y W_xy`, `π_x ∝ Σ_y W_xy`.
    pub fn from_weights(w: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = w.shape();
        if rows != cols || rows == 0 {
            return Err(Error::NotSquare { rows, cols });
        }
        let n = rows;
        for i in 0..n {
            for j in 0..n {
                let v = w[(i, j)];
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "weight ({i},{j}) = {v} is negative"
                    )));
                }
                if (v - w[(j, i)]).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "weights not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let degrees: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
        if degrees.iter().any(|&d| d <= 0.0) || !strongly_connected(w) {
            return Err(Error::Disconnected);
        }
        let mut p = w.clone();
        for (i, d) in degrees.iter().enumerate() {
            p.row_mut(i).scale_mut(1.0 / d);
        }
        check_ergodic(&p)?;
        let total: f64 = degrees.iter().sum();
        let pi = DVector::from_iterator(n, degrees.iter().map(|d| d / total));
        Ok(Self {
            p,
            pi,
            known_transitive: false,
            label: "weights".into(),
        })
    }

    pub fn family(family: &Family) -> Result<Self> {
        let mut chain = Self::from_weights(&family.weights()?)?;
        chain.known_transitive = family.is_transitive();
        chain.label = family.to_string();
        Ok(chain)
    }

    /// `P ↦ ((1 − α)P + (1 + α)I)/2`; all eigenvalues of the result are at
    /// least `α`.
    pub fn lazify(&self, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "laziness {alpha} outside [0, 1)"
            )));
        }
        let n = self.n();
        let p = (&self.p * (1.0 - alpha) + DMatrix::identity(n, n) * (1.0 + alpha)) * 0.5;
        Ok(Self {
            p,
            pi: self.pi.clone(),
            known_transitive: self.known_transitive,
            label: format!("{}-lazy{}", self.label, alpha),
        })
    }

    /// Time reversal `π_y p*_yx = π_x p_xy`.
    pub fn time_reversal(&self) -> Self {
        let n = self.n();
        let p = DMatrix::from_fn(n, n, |y, x| self.pi[x] * self.p[(x, y)] / self.pi[y]);
        Self {
            p,
            pi: self.pi.clone(),
            known_transitive: self.known_transitive,
            label: format!("{}-reversed", self.label),
        }
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn known_transitive(&self) -> bool {
        self.known_transitive
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Ordered pairs `(x, y)` with `p_xy > 0`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n)
            .flat_map(|x| (0..n).map(move |y| (x, y)))
            .filter(|&(x, y)| self.p[(x, y)] > 0.0)
            .collect()
    }

    /// `max_xy |π_x p_xy − π_y p_yx|`.
    pub fn detailed_balance_violation(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for y in 0..n {
                let d = self.pi[x] * self.p[(x, y)] - self.pi[y] * self.p[(y, x)];
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    pub fn is_reversible(&self) -> bool {
        self.detailed_balance_violation() <= REVERSIBLE_TOL
    }

    pub fn require_reversible(&self) -> Result<()> {
        let violation = self.detailed_balance_violation();
        if violation > REVERSIBLE_TOL {
            return Err(Error::NonReversible { violation });
        }
        Ok(())
    }

    /// `√Π P √Π⁻¹`, symmetric when the chain is reversible.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |x, y| {
            self.pi[x].sqrt() * self.p[(x, y)] / self.pi[y].sqrt()
        })
    }

    /// Eigenvalues of a reversible chain, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.require_reversible()?;
        Ok(sym_eigen_sorted(&self.symmetrized()).0)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    /// Short content hash of `P`, stable across runs and platforms.
    pub fn spec_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n() as u64).to_le_bytes());
        for i in 0..self.n() {
            for j in 0..self.n() {
                hasher.update(self.p[(i, j)].to_bits().to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .take(6)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Solves `πP = π`, `Σπ = 1` as a dense linear system.
fn stationary(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
    if pi.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let s = pi.sum();
    Ok(pi / s)
}

fn reachable(adj: &DMatrix<f64>, transpose: bool) -> Vec<Option<usize>> {
    let n = adj.nrows();
    let mut level = vec![None; n];
    level[0] = Some(0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            let w = if transpose { adj[(v, u)] } else { adj[(u, v)] };
            if w > 0.0 && level[v].is_none() {
                level[v] = Some(level[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn strongly_connected(adj: &DMatrix<f64>) -> bool {
    reachable(adj, false).iter().all(Option::is_some)
        && reachable(adj, true).iter().all(Option::is_some)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Strong connectivity plus aperiodicity. The period is the gcd of
/// `level(u) + 1 − level(v)` over all edges of a BFS layering.
fn check_ergodic(p: &DMatrix<f64>) -> Result<()> {
    let n = p.nrows();
    if !strongly_connected(p) {
        return Err(Error::NotErgodic("transition graph is reducible".into()));
    }
    let level = reachable(p, false);
    let mut period = 0;
    for u in 0..n {
        for v in 0..n {
            if p[(u, v)] > 0.0 {
                let lu = level[u].unwrap() as i64;
                let lv = level[v].unwrap() as i64;
                period = gcd(period, (lu + 1 - lv).unsigned_abs() as usize);
            }
        }
    }
    if period != 1 {
        return Err(Error::NotErgodic(format!("chain has period {period}")));
    }
    Ok(())
}

/// Built-in reversible families. Graph families are lazy walks: the chain
/// stays put with probability 1/2 and otherwise moves to a uniform
/// neighbour (with multiplicity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Cycle {
        n: usize,
    },
    /// `P = J/n`, self loops included.
    Complete {
        n: usize,
    },
    Torus2d {
        side: usize,
    },
    Hypercube {
        dim: usize,
    },
    Random {
        n: usize,
        seed: u64,
    },
}

impl Family {
    /// Parses a family name with the single size parameter used by the
    /// CLI: state count for cycle/complete/random, side length for torus2d,
    /// dimension for hypercube.
    pub fn parse(name: &str, size: usize, seed: u64) -> Result<Self> {
        let f = match name {
            "cycle" => Family::Cycle { n: size },
            "complete" => Family::Complete { n: size },
            "torus2d" | "torus" => Family::Torus2d { side: size },
            "hypercube" => Family::Hypercube { dim: size },
            "random" => Family::Random { n: size, seed },
            other => return Err(Error::InvalidParameter(format!("unknown family '{other}'"))),
        };
        Ok(f)
    }

    pub fn state_count(&self) -> usize {
        match *self {
            Family::Cycle { n } | Family::Complete { n } | Family::Random { n, .. } => n,
            Family::Torus2d { side } => side * side,
            Family::Hypercube { dim } => 1usize.checked_shl(dim as u32).unwrap_or(0),
        }
    }

    pub fn is_transitive(&self) -> bool {
        !matches!(self, Family::Random { .. })
    }

    pub fn weights(&self) -> Result<DMatrix<f64>> {
        let n = self.state_count();
        let too_small = match *self {
            Family::Hypercube { dim } => !(1..=16).contains(&dim),
            Family::Torus2d { side } => side < 2,
            _ => n < 2,
        };
        if too_small {
            return Err(Error::InvalidParameter(format!("{self}: size too small")));
        }
        let lazy = |neigh: &dyn Fn(usize) -> Vec<usize>| {
            let mut w = DMatrix::zeros(n, n);
            for x in 0..n {
                let nb = neigh(x);
                let deg = nb.len() as f64;
                w[(x, x)] += 1.0;
                for y in nb {
                    w[(x, y)] += 1.0 / deg;
                }
            }
            w
        };
        let w = match *self {
            Family::Cycle { n } => lazy(&|x| vec![(x + 1) % n, (x + n - 1) % n]),
            Family::Complete { n } => DMatrix::from_element(n, n, 1.0),
            Family::Torus2d { side } => lazy(&|x| {
                let (r, c) = (x / side, x % side);
                vec![
                    ((r + 1) % side) * side + c,
                    ((r + side - 1) % side) * side + c,
                    r * side + (c + 1) % side,
                    r * side + (c + side - 1) % side,
                ]
            }),
            Family::Hypercube { dim } => lazy(&|x| (0..dim).map(|b| x ^ (1 << b)).collect()),
            Family::Random { n, seed } => random_weights(n, seed),
        };
        Ok(w)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Cycle { n } => write!(f, "cycle-{n}"),
            Family::Complete { n } => write!(f, "complete-{n}"),
            Family::Torus2d { side } => write!(f, "torus2d-{side}"),
            Family::Hypercube { dim } => write!(f, "hypercube-{dim}"),
            Family::Random { n, seed } => write!(f, "random-{n}-s{seed}"),
        }
    }
}

/// Random spanning tree (random attachment order) plus independent extra
/// edges with probability 1/2; weights uniform in `[0.1, 1]`. Self loops
/// carry a random weight as well so the chain is aperiodic.
fn random_weights(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::zeros(n, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        let child = order[i];
        let weight = rng.random_range(0.1..=1.0);
        w[(parent, child)] = weight;
        w[(child, parent)] = weight;
    }
    for x in 0..n {
        for y in (x + 1)..n {
            if w[(x, y)] == 0.0 && rng.random_bool(0.5) {
                let weight = rng.random_range(0.1..=1.0);
                w[(x, y)] = weight;
                w[(y, x)] = weight;
            }
        }
    }
    for x in 0..n {
        w[(x, x)] = rng.random_range(0.1..=1.0);
    }
    w
}

/// Chain description as read from a JSON file. Exactly one of
/// `transition`, `weights` or `family` must be present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lazy: Option<f64>,
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::NotSquare {
            rows: n,
            cols: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ChainSpec {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn build(&self) -> Result<MarkovChain> {
        let sources = [
            self.transition.is_some(),
            self.weights.is_some(),
            self.family.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::InvalidParameter(
                "chain spec needs exactly one of transition, weights, family".into(),
            ));
        }
        let chain = if let Some(rows) = &self.transition {
            MarkovChain::from_transition(matrix_from_rows(rows)?)?
        } else if let Some(rows) = &self.weights {
            MarkovChain::from_weights(&matrix_from_rows(rows)?)?
        } else {
            let name = self.family.as_deref().unwrap_or_default();
            let size = self.n.ok_or_else(|| {
                Error::InvalidParameter(format!("family '{name}' needs parameter n"))
            })?;
            MarkovChain::family(&Family::parse(name, size, self.seed.unwrap_or(0))?)?
        };
        match self.lazy {
            Some(alpha) => chain.lazify(alpha),
            None => Ok(chain),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn uniform_two_state() {
        let c = MarkovChain::from_transition(m(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        assert_relative_eq!(c.stationary()[0], 0.5, epsilon = 1e-14);
        assert!(c.is_reversible());
    }

    #[test]
    fn identity_is_not_ergodic() {
        let err = MarkovChain::from_transition(DMatrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::NotErgodic(_)));
    }

    #[test]
    fn periodic_flip_is_not_ergodic() {
        let err = MarkovChain::from_transition(m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::NotErgodic(_)));
    }

    #[test]
    fn two_state_stationary_by_hand() {
        let c = MarkovChain::from_transition(m(&[&[0.9, 0.1], &[0.3, 0.7]])).unwrap();
        assert_relative_eq!(c.stationary()[0], 0.75, epsilon = 1e-13);
        assert_relative_eq!(c.stationary()[1], 0.25, epsilon = 1e-13);
    }

    #[test]
    fn row_sum_error() {
        let err = MarkovChain::from_transition(m(&[&[0.5, 0.6], &[0.5, 0.5]])).unwrap_err();
        assert!(matches!(err, Error::NotStochastic { row: 0, .. }));
    }

    #[test]
    fn weights_all_ones() {
        let c = MarkovChain::from_weights(&DMatrix::from_element(3, 3, 1.0)).unwrap();
        for x in 0..3 {
            assert_relative_eq!(c.stationary()[x], 1.0 / 3.0, epsilon = 1e-14);
            for y in 0..3 {
                assert_relative_eq!(c.transition()[(x, y)], 1.0 / 3.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn weights_path_graph() {
        // The bare path is periodic; a tiny self loop would change pi, so
        // check the degree formula on a lazy path instead.
        let w = m(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        assert!(matches!(
            MarkovChain::from_weights(&w).unwrap_err(),
            Error::NotErgodic(_)
        ));
        let w = m(&[&[1.0, 1.0, 0.0], &[1.0, 2.0, 1.0], &[0.0, 1.0, 1.0]]);
        let c = MarkovChain::from_weights(&w).unwrap();
        assert_relative_eq!(c.stationary()[0], 0.25, epsilon = 1e-14);
        assert_relative_eq!(c.stationary()[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn zero_row_is_disconnected() {
        let w = m(&[&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 0.0]]);
        assert_eq!(
            MarkovChain::from_weights(&w).unwrap_err(),
            Error::Disconnected
        );
    }

    #[test]
    fn complete_family_is_uniform() {
        let c = MarkovChain::family(&Family::Complete { n: 4 }).unwrap();
        assert!(c.known_transitive());
        assert_relative_eq!(c.transition()[(1, 2)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn cycle_two_is_uniform_two_state() {
        let c = MarkovChain::family(&Family::Cycle { n: 2 }).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_relative_eq!(c.transition()[(x, y)], 0.5, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn random_family_is_deterministic() {
        let f = Family::Random { n: 5, seed: 7 };
        let a = MarkovChain::family(&f).unwrap();
        let b = MarkovChain::family(&f).unwrap();
        assert_eq!(a, b);
        assert!(!a.known_transitive());
        assert!(a.is_reversible());
    }

    #[test]
    fn family_rejects_small() {
        assert!(MarkovChain::family(&Family::Cycle { n: 1 }).is_err());
        assert!(MarkovChain::family(&Family::Hypercube { dim: 0 }).is_err());
    }

    #[test]
    fn lazify_uniform_two_state() {
        let c = MarkovChain::family(&Family::Cycle { n: 2 }).unwrap();
        let l = c.lazify(0.0).unwrap();
        assert_relative_eq!(l.transition()[(0, 0)], 0.75, epsilon = 1e-15);
        assert_relative_eq!(l.transition()[(0, 1)], 0.25, epsilon = 1e-15);
        assert!(c.lazify(1.0).is_err());
        assert!(c.lazify(-0.1).is_err());
    }

    #[test]
    fn lazify_complete_min_eigenvalue() {
        let c = MarkovChain::family(&Family::Complete { n: 4 }).unwrap();
        let l = c.lazify(0.2).unwrap();
        assert!(l.min_eigenvalue().unwrap() >= 0.2 - 1e-12);
    }

    #[test]
    fn biased_cycle_reversal() {
        let p = m(&[&[0.0, 0.9, 0.1], &[0.1, 0.0, 0.9], &[0.9, 0.1, 0.0]]);
        let c = MarkovChain::from_transition(p).unwrap();
        assert!(!c.is_reversible());
        let r = c.time_reversal();
        // doubly stochastic, so the reversal is the transpose
        assert_relative_eq!(r.transition()[(0, 1)], 0.1, epsilon = 1e-12);
        assert_relative_eq!(r.transition()[(0, 2)], 0.9, epsilon = 1e-12);
        let rr = r.time_reversal();
        assert!((rr.transition() - c.transition()).amax() < 1e-12);
    }

    #[test]
    fn chain_spec_parsing() {
        let s = ChainSpec::from_json(r#"{"family": "cycle", "n": 16, "lazy": 0.5}"#).unwrap();
        let c = s.build().unwrap();
        assert_eq!(c.n(), 16);
        let s = ChainSpec::from_json(r#"{"transition": [[0.5,0.5],[0.5,0.5]]}"#).unwrap();
        assert_eq!(s.build().unwrap().n(), 2);
        let s = ChainSpec::from_json(r#"{"weights": [[1,1],[1,1]], "family": "cycle"}"#).unwrap();
        assert!(s.build().is_err());
    }

    #[test]
    fn spec_hash_is_stable() {
        let c = MarkovChain::family(&Family::Complete { n: 3 }).unwrap();
        assert_eq!(c.spec_hash(), c.clone().spec_hash());
        assert_eq!(c.spec_hash().len(), 12);
    }
}
