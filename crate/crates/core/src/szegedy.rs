//! Edge-space operators: Szegedy quantisation, the shifted walk
//! `U₂ = SWAP·ref(A)`, search operators, reflection walks and the classical
//! analogue of a walk.
//!
//! The edge space is `ℝ^{n²}` with `|x⟩|y⟩ ↦ x·n + y`. Operators are kept as
//! dense matrices over the whole space; each one also records the invariant
//! subspace it acts on nontrivially (its *domain*), since on the full edge
//! space a walk generally has a large spurious `+1` eigenspace.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chains::MarkovChain;
use crate::error::{Error, Result};
use crate::linalg::{orthogonality_defect, orthonormal_basis, OrthogonalSpectrum};

/// Tolerance for the structural identities of edge operators.
pub const CONSTRUCTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OpLabel {
    RefA,
    RefB,
    W,
    U2,
    U1,
    U,
    Swap,
    Walk,
    TulsiEmbedded,
}

/// Real orthogonal operator on the edge space (or an extension of it).
#[derive(Debug, Clone)]
pub struct EdgeOperator {
    /// Number of chain states.
    pub n: usize,
    pub matrix: DMatrix<f64>,
    pub label: OpLabel,
    /// Orthonormal basis (columns) of an invariant subspace on which the
    /// operator is studied; `None` means the whole space.
    pub domain: Option<DMatrix<f64>>,
}

impl EdgeOperator {
    pub fn new(n: usize, matrix: DMatrix<f64>, label: OpLabel) -> Self {
        Self {
            n,
            matrix,
            label,
            domain: None,
        }
    }

    pub fn with_domain(mut self, domain: DMatrix<f64>) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.matrix)
    }

    /// Domain basis, identity when no domain is set.
    pub fn domain_basis(&self) -> DMatrix<f64> {
        self.domain
            .clone()
            .unwrap_or_else(|| DMatrix::identity(self.dim(), self.dim()))
    }

    /// `QᵀMQ` for the domain basis `Q`.
    pub fn restricted(&self) -> DMatrix<f64> {
        match &self.domain {
            Some(q) => q.transpose() * &self.matrix * q,
            None => self.matrix.clone(),
        }
    }

    /// `‖MQ − Q(QᵀMQ)‖`, zero when the domain is invariant.
    pub fn domain_leak(&self) -> f64 {
        match &self.domain {
            Some(q) => {
                let mq = &self.matrix * q;
                (&mq - q * (q.transpose() * &mq)).amax()
            }
            None => 0.0,
        }
    }

    /// Spectrum of the operator restricted to its domain; eigenvectors are
    /// expressed in domain coordinates.
    pub fn spectrum(&self) -> OrthogonalSpectrum {
        OrthogonalSpectrum::new(&self.restricted())
    }

    /// The unique `+1` eigenvector inside the domain, with its entries
    /// summing to a nonnegative value.
    pub fn fixed_vector(&self) -> Result<DVector<f64>> {
        let spec = self.spectrum();
        let dim = spec.fixed_dim();
        if dim != 1 {
            return Err(Error::DegeneratePlusOneSpace { dim });
        }
        let local = spec.fixed_cluster().unwrap().basis.column(0).into_owned();
        let mut v = match &self.domain {
            Some(q) => q * local,
            None => local,
        };
        let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
        v *= sign / v.norm();
        Ok(v)
    }

    pub fn compose(&self, rhs: &EdgeOperator, label: OpLabel) -> EdgeOperator {
        EdgeOperator {
            n: self.n,
            matrix: &self.matrix * &rhs.matrix,
            label,
            domain: self.domain.clone(),
        }
    }
}

fn edge_index(n: usize, x: usize, y: usize) -> usize {
    x * n + y
}

/// The permutation `|x⟩|y⟩ ↦ |y⟩|x⟩`.
pub fn swap(n: usize) -> EdgeOperator {
    let d = n * n;
    let mut m = DMatrix::zeros(d, d);
    for x in 0..n {
        for y in 0..n {
            m[(edge_index(n, y, x), edge_index(n, x, y))] = 1.0;
        }
    }
    EdgeOperator::new(n, m, OpLabel::Swap)
}

/// Star states `|x⟩|p_x⟩` and `|p*_y⟩|y⟩`.
#[derive(Debug, Clone)]
pub struct StarStates {
    pub a: Vec<DVector<f64>>,
    pub b: Vec<DVector<f64>>,
}

pub fn star_states(chain: &MarkovChain) -> StarStates {
    let n = chain.n();
    let p = chain.transition();
    let rev = chain.time_reversal();
    let ps = rev.transition();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for x in 0..n {
        let mut v = DVector::zeros(n * n);
        for y in 0..n {
            v[edge_index(n, x, y)] = p[(x, y)].sqrt();
        }
        a.push(v);
    }
    for y in 0..n {
        let mut v = DVector::zeros(n * n);
        for x in 0..n {
            v[edge_index(n, x, y)] = ps[(y, x)].sqrt();
        }
        b.push(v);
    }
    StarStates { a, b }
}

/// `2Σ|v⟩⟨v| − I` over an orthonormal family.
fn reflection_through(vectors: &[&DVector<f64>], dim: usize) -> DMatrix<f64> {
    for (i, u) in vectors.iter().enumerate() {
        for (j, v) in vectors.iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!(
                (u.dot(v) - expect).abs() < 1e-12,
                "star states are not orthonormal"
            );
        }
    }
    let mut m = -DMatrix::identity(dim, dim);
    for v in vectors {
        m += (*v * v.transpose()) * 2.0;
    }
    m
}

/// Basis of `A + B`, the invariant subspace of every Szegedy operator.
pub fn szegedy_domain(stars: &StarStates) -> DMatrix<f64> {
    let all: Vec<DVector<f64>> = stars.a.iter().chain(stars.b.iter()).cloned().collect();
    orthonormal_basis(&all, 1e-9)
}

/// `(ref(A), ref(B))`, or `(ref(A₋z), ref(B₋z))` when a state is marked.
pub fn reflections(
    chain: &MarkovChain,
    marked: Option<usize>,
) -> Result<(EdgeOperator, EdgeOperator)> {
    let n = chain.n();
    if let Some(z) = marked {
        if z >= n {
            return Err(Error::InvalidParameter(format!("state {z} out of range")));
        }
    }
    let stars = star_states(chain);
    let keep = |x: &usize| Some(*x) != marked;
    let a: Vec<&DVector<f64>> = (0..n).filter(keep).map(|x| &stars.a[x]).collect();
    let b: Vec<&DVector<f64>> = (0..n).filter(keep).map(|y| &stars.b[y]).collect();
    let domain = szegedy_domain(&stars);
    Ok((
        EdgeOperator::new(n, reflection_through(&a, n * n), OpLabel::RefA)
            .with_domain(domain.clone()),
        EdgeOperator::new(n, reflection_through(&b, n * n), OpLabel::RefB).with_domain(domain),
    ))
}

/// `W(P) = ref(B)·ref(A)` or `W(P,z) = ref(B₋z)·ref(A₋z)`.
pub fn quantum_analogue(chain: &MarkovChain, marked: Option<usize>) -> Result<EdgeOperator> {
    let (ra, rb) = reflections(chain, marked)?;
    Ok(rb.compose(&ra, OpLabel::W))
}

/// `φ₀ = Σ_x √π_x |x⟩|p_x⟩`.
pub fn stationary_edge_state(chain: &MarkovChain) -> DVector<f64> {
    let stars = star_states(chain);
    let mut v = DVector::zeros(chain.n() * chain.n());
    for (x, s) in stars.a.iter().enumerate() {
        v.axpy(chain.stationary()[x].sqrt(), s, 1.0);
    }
    v
}

/// The abstract search operator built from a reversible chain.
#[derive(Debug, Clone)]
pub struct SearchOperator {
    pub z: usize,
    /// `SWAP·ref(A)`.
    pub u2: EdgeOperator,
    /// `I − 2|μ⟩⟨μ|`.
    pub u1: EdgeOperator,
    /// `U₂U₁`.
    pub u: EdgeOperator,
    /// `|z⟩|p_z⟩`.
    pub mu: DVector<f64>,
    /// `Σ √π_x |x⟩|p_x⟩`.
    pub phi0: DVector<f64>,
}

impl SearchOperator {
    /// `⟨φ₀|μ⟩`.
    pub fn a0(&self) -> f64 {
        self.phi0.dot(&self.mu)
    }

    /// `φ̃₀ = φ₀ − ⟨φ₀|μ⟩μ`.
    pub fn phi_tilde(&self) -> DVector<f64> {
        &self.phi0 - &self.mu * self.a0()
    }
}

pub fn search_operator(chain: &MarkovChain, z: usize) -> Result<SearchOperator> {
    chain.require_reversible()?;
    let n = chain.n();
    if z >= n {
        return Err(Error::InvalidParameter(format!("state {z} out of range")));
    }
    let stars = star_states(chain);
    let domain = szegedy_domain(&stars);
    let (ref_a, _) = reflections(chain, None)?;
    let u2 = swap(n)
        .compose(&ref_a, OpLabel::U2)
        .with_domain(domain.clone());
    let mu = stars.a[z].clone();
    let u1 = EdgeOperator::new(
        n,
        DMatrix::identity(n * n, n * n) - (&mu * mu.transpose()) * 2.0,
        OpLabel::U1,
    )
    .with_domain(domain);
    let u = u2.compose(&u1, OpLabel::U);
    Ok(SearchOperator {
        z,
        u2,
        u1,
        u,
        mu,
        phi0: stationary_edge_state(chain),
    })
}

/// `U₂ = SWAP·F` with `F^x = 2|φ^x⟩⟨φ^x| − I`, acting on
/// `span{|x⟩|φ^x⟩} + SWAP(span{|x⟩|φ^x⟩})`. Fails unless the walk has a
/// single `+1` eigenvector there. When `graph` is given, each block must
/// be supported on the neighbours of its state.
pub fn reflection_walk(
    blocks: &[DVector<f64>],
    graph: Option<&DMatrix<f64>>,
) -> Result<EdgeOperator> {
    let n = blocks.len();
    if n == 0 {
        return Err(Error::InvalidBlock("no blocks".into()));
    }
    for (x, b) in blocks.iter().enumerate() {
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        if (b.norm() - 1.0).abs() > CONSTRUCTION_TOL || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBlock(format!(
                "block {x} has norm {}",
                b.norm()
            )));
        }
        if let Some(g) = graph {
            if let Some(y) = (0..n).find(|&y| b[y] != 0.0 && g[(x, y)] == 0.0) {
                return Err(Error::InvalidBlock(format!(
                    "block {x} uses non-edge ({x},{y})"
                )));
            }
        }
    }
    let d = n * n;
    let lifted: Vec<DVector<f64>> = blocks
        .iter()
        .enumerate()
        .map(|(x, b)| {
            let mut v = DVector::zeros(d);
            v.rows_mut(x * n, n).copy_from(b);
            v
        })
        .collect();
    let refs: Vec<&DVector<f64>> = lifted.iter().collect();
    let f = reflection_through(&refs, d);
    let sw = swap(n);
    let mut span: Vec<DVector<f64>> = lifted.clone();
    span.extend(lifted.iter().map(|v| &sw.matrix * v));
    let domain = orthonormal_basis(&span, 1e-9);
    let op = EdgeOperator::new(n, &sw.matrix * f, OpLabel::U2).with_domain(domain);
    op.fixed_vector().map_err(|e| match e {
        Error::DegeneratePlusOneSpace { dim } => Error::DegeneratePlusOneSpace { dim },
        other => other,
    })?;
    Ok(op)
}

/// `U₂ = SWAP·F` for arbitrary real orthogonal blocks `F^x`, acting on the
/// span of the edges of `graph` (the whole edge space when `graph` is
/// `None`). Fails unless that span is invariant and holds exactly one
/// `+1` eigenvector.
pub fn block_walk(blocks: &[DMatrix<f64>], graph: Option<&DMatrix<f64>>) -> Result<EdgeOperator> {
    let n = blocks.len();
    if n == 0 {
        return Err(Error::InvalidBlock("no blocks".into()));
    }
    let d = n * n;
    let mut f = DMatrix::zeros(d, d);
    for (x, b) in blocks.iter().enumerate() {
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.nrows().max(b.ncols()),
            });
        }
        let defect = orthogonality_defect(b);
        if defect > CONSTRUCTION_TOL {
            return Err(Error::InvalidBlock(format!(
                "block {x} is not orthogonal (defect {defect:e})"
            )));
        }
        f.view_mut((x * n, x * n), (n, n)).copy_from(b);
    }
    let edges: Vec<DVector<f64>> = (0..d)
        .filter(|&i| graph.is_none_or(|g| g[(i / n, i % n)] != 0.0))
        .map(|i| {
            let mut v = DVector::zeros(d);
            v[i] = 1.0;
            v
        })
        .collect();
    let op = EdgeOperator::new(n, &swap(n).matrix * f, OpLabel::Walk)
        .with_domain(orthonormal_basis(&edges, 1e-12));
    let leak = op.domain_leak();
    if leak > CONSTRUCTION_TOL {
        return Err(Error::InvalidBlock(format!(
            "blocks move amplitude off the graph (leak {leak:e})"
        )));
    }
    op.fixed_vector()?;
    Ok(op)
}

/// Blocks sending `|p_x⟩` to `|p*_x⟩`, the star state of the time reversal.
/// The map is a rotation of the plane they span when `flip_plane[x]` is
/// false and a reflection of it otherwise; the orthogonal complement is
/// multiplied by `−1` when `flip_rest[x]` is set. The walk these blocks
/// define fixes `Σ_x √π_x |x⟩|p_x⟩` whether or not the chain is reversible.
pub fn transport_blocks(
    chain: &MarkovChain,
    flip_plane: &[bool],
    flip_rest: &[bool],
) -> Vec<DMatrix<f64>> {
    let n = chain.n();
    let p = chain.transition();
    let ps = chain.time_reversal().transition().clone();
    (0..n)
        .map(|x| {
            let phi = DVector::from_fn(n, |y, _| p[(x, y)].sqrt());
            let psi = DVector::from_fn(n, |y, _| ps[(x, y)].sqrt());
            let c = phi.dot(&psi);
            let perp = &psi - &phi * c;
            let rest_sign = if flip_rest.get(x).copied().unwrap_or(false) {
                -1.0
            } else {
                1.0
            };
            let mut block = (DMatrix::identity(n, n) - &phi * phi.transpose()) * rest_sign;
            if perp.norm() > 1e-12 {
                let e2 = perp.normalize();
                let s = e2.dot(&psi);
                let plane_sign = if flip_plane.get(x).copied().unwrap_or(false) {
                    -1.0
                } else {
                    1.0
                };
                let image2 = (&phi * (-s) + &e2 * c) * plane_sign;
                block -= &e2 * e2.transpose() * rest_sign;
                block += &image2 * e2.transpose();
            }
            block + &psi * phi.transpose()
        })
        .collect()
}

/// Per-state data of a walk's fixed vector
/// `φ₀ = Σ_x √π_x |x⟩|φ^x⟩`, together with `ψ^x = F^x φ^x`.
#[derive(Debug, Clone)]
pub struct WalkDecomposition {
    pub pi: DVector<f64>,
    pub phi: Vec<DVector<f64>>,
    pub psi: Vec<DVector<f64>>,
    pub phi0: DVector<f64>,
}

/// Slices the fixed vector into first-register blocks.
pub fn walk_decomposition(u2: &EdgeOperator) -> Result<WalkDecomposition> {
    let n = u2.n;
    if u2.dim() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: u2.dim(),
        });
    }
    let phi0 = u2.fixed_vector().map_err(|e| match e {
        Error::DegeneratePlusOneSpace { dim } => Error::NoUniqueFixedVector { dim },
        other => other,
    })?;
    let f = &swap(n).matrix * &u2.matrix;
    let mut pi = DVector::zeros(n);
    let mut phi = Vec::with_capacity(n);
    let mut psi = Vec::with_capacity(n);
    for x in 0..n {
        let block = phi0.rows(x * n, n).into_owned();
        let mass = block.norm_squared();
        if mass < 1e-12 {
            return Err(Error::ZeroMass { state: x });
        }
        pi[x] = mass;
        let phi_x = block / mass.sqrt();
        let fx = f.view((x * n, x * n), (n, n));
        psi.push(fx * &phi_x);
        phi.push(phi_x);
    }
    Ok(WalkDecomposition { pi, phi, psi, phi0 })
}

/// Classical analogue `p_xy = ⟨y|φ^x⟩²` of a walk.
pub fn classical_analogue(u2: &EdgeOperator) -> Result<MarkovChain> {
    let dec = walk_decomposition(u2)?;
    let n = u2.n;
    let p = DMatrix::from_fn(n, n, |x, y| dec.phi[x][y] * dec.phi[x][y]);
    let chain = MarkovChain::from_transition(p)?.with_label("analogue");
    let drift = (chain.stationary() - &dec.pi).amax();
    if drift > 1e-9 {
        return Err(Error::Inconsistent {
            what: "analogue stationary distribution vs fixed-vector masses".into(),
            a: drift,
            b: 1e-9,
        });
    }
    Ok(chain)
}

/// Whether `SWAP·φ₀ = φ₀`.
pub fn is_reversible_walk(u2: &EdgeOperator) -> Result<bool> {
    let phi0 = walk_decomposition(u2)?.phi0;
    let swapped = &swap(u2.n).matrix * &phi0;
    Ok((swapped - phi0).amax() <= 1e-9)
}

/// Blocks `φ^x_y = s_xy √p_xy` for a symmetric sign pattern `s`. With all
/// signs positive this is Szegedy's `|p_x⟩`.
pub fn signed_blocks(chain: &MarkovChain, signs: Option<&DMatrix<f64>>) -> Vec<DVector<f64>> {
    let n = chain.n();
    (0..n)
        .map(|x| {
            DVector::from_fn(n, |y, _| {
                let s = signs.map_or(1.0, |s| s[(x, y)]);
                s * chain.transition()[(x, y)].sqrt()
            })
        })
        .collect()
}

/// Random symmetric `±1` pattern.
pub fn random_signs(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = DMatrix::from_element(n, n, 1.0);
    for x in 0..n {
        for y in x..n {
            let v = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            s[(x, y)] = v;
            s[(y, x)] = v;
        }
    }
    s
}

/// A walk `SWAP·F` whose blocks `F^x = (2|φ^x⟩⟨φ^x| − I)·G^x` add a random
/// rotation `G^x` on the complement of `φ^x`; the domain is the whole edge
/// space of the chain's graph. Used only by the experiment harness.
pub fn general_walk(chain: &MarkovChain, angle: f64, seed: u64) -> EdgeOperator {
    let n = chain.n();
    let d = n * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = signed_blocks(chain, None);
    let mut f = DMatrix::zeros(d, d);
    for (x, phi) in blocks.iter().enumerate() {
        let support: Vec<usize> = (0..n).filter(|&y| phi[y] != 0.0).collect();
        let mut block = -DMatrix::identity(n, n) + (phi * phi.transpose()) * 2.0;
        if support.len() >= 3 {
            // Plane orthogonal to φ^x inside the support.
            let rand_vec = |rng: &mut ChaCha8Rng| {
                let mut v = DVector::zeros(n);
                for &y in &support {
                    v[y] = rng.random_range(-1.0..1.0);
                }
                v
            };
            let q = orthonormal_basis(&[phi.clone(), rand_vec(&mut rng), rand_vec(&mut rng)], 1e-9);
            if q.ncols() == 3 {
                let (e1, e2) = (q.column(1).into_owned(), q.column(2).into_owned());
                let (s, c) = angle.sin_cos();
                let g = DMatrix::identity(n, n)
                    + (&e1 * e1.transpose() + &e2 * e2.transpose()) * (c - 1.0)
                    + (&e2 * e1.transpose() - &e1 * e2.transpose()) * s;
                block *= g;
            }
        }
        f.view_mut((x * n, x * n), (n, n)).copy_from(&block);
    }
    let edges: Vec<DVector<f64>> = chain
        .edges()
        .into_iter()
        .map(|(x, y)| {
            let mut v = DVector::zeros(d);
            v[edge_index(n, x, y)] = 1.0;
            v
        })
        .collect();
    EdgeOperator::new(n, &swap(n).matrix * f, OpLabel::Walk)
        .with_domain(orthonormal_basis(&edges, 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::Family;
    use crate::classical::deleted_spectrum;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn two_state() -> MarkovChain {
        MarkovChain::family(&Family::Cycle { n: 2 }).unwrap()
    }

    #[test]
    fn star_state_entries() {
        let s = star_states(&two_state());
        let expect = [FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0];
        for (a, b) in s.a[0].iter().zip(expect.iter()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-15);
        }
        for v in s.a.iter().chain(s.b.iter()) {
            assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic_row_gives_basis_state() {
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.25, 0.5, 0.25, 0.5, 0.0, 0.5]);
        let c = MarkovChain::from_transition(p).unwrap();
        let s = star_states(&c);
        assert_eq!(s.a[0][1], 1.0);
        assert_eq!(s.a[0].iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn reversible_chain_has_symmetric_stars() {
        let c = MarkovChain::family(&Family::Random { n: 4, seed: 3 }).unwrap();
        let s = star_states(&c);
        let sw = swap(4);
        for x in 0..4 {
            assert!((&sw.matrix * &s.a[x] - &s.b[x]).amax() < 1e-12);
        }
    }

    #[test]
    fn reflection_properties() {
        let c = MarkovChain::family(&Family::Cycle { n: 4 }).unwrap();
        let (ra, rb) = reflections(&c, None).unwrap();
        let d = 16;
        for r in [&ra, &rb] {
            assert!((&r.matrix - r.matrix.transpose()).amax() < 1e-12);
            assert!((&r.matrix * &r.matrix - DMatrix::identity(d, d)).amax() < 1e-10);
        }
        let stars = star_states(&c);
        for x in 0..4 {
            assert!((&ra.matrix * &stars.a[x] - &stars.a[x]).amax() < 1e-12);
        }
        let (raz, _) = reflections(&c, Some(2)).unwrap();
        assert!((&raz.matrix * &stars.a[2] + &stars.a[2]).amax() < 1e-12);
    }

    #[test]
    fn walk_fixes_stationary_edge_state() {
        let c = two_state();
        let w = quantum_analogue(&c, None).unwrap();
        let phi0 = stationary_edge_state(&c);
        assert!((&w.matrix * &phi0 - &phi0).amax() < 1e-10);
    }

    #[test]
    fn complete_two_walk_by_hand() {
        // P = J/2: every star state is the uniform vector on its row/column.
        let c = two_state();
        let w = quantum_analogue(&c, None).unwrap();
        let h = 0.5;
        let ra = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0,
            ],
        );
        let rb = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
            ],
        );
        let by_hand = &rb * &ra;
        assert!((&w.matrix - &by_hand).amax() < 1e-12, "{h}");
    }

    #[test]
    fn marked_walk_phases_double_the_deleted_phases() {
        let c = two_state();
        let w = quantum_analogue(&c, Some(1)).unwrap();
        let phases = w.spectrum().phases();
        assert!(phases.iter().any(|p| (p - 2.0 * PI / 3.0).abs() < 1e-10));
        assert!(phases.iter().any(|p| (p + 2.0 * PI / 3.0).abs() < 1e-10));
        let theta = deleted_spectrum(&c, 1).unwrap().thetas[0];
        assert_relative_eq!(theta, PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn search_operator_fact() {
        let c = two_state();
        let s = search_operator(&c, 1).unwrap();
        let w = quantum_analogue(&c, Some(1)).unwrap();
        let uu = &s.u.matrix * &s.u.matrix;
        assert!((uu - &w.matrix).amax() < 1e-12);
        assert_relative_eq!(s.a0(), FRAC_1_SQRT_2, epsilon = 1e-14);
    }

    #[test]
    fn search_operator_rejects_non_reversible() {
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 0.9, 0.1, 0.1, 0.0, 0.9, 0.9, 0.1, 0.0]);
        let c = MarkovChain::from_transition(p).unwrap();
        assert!(matches!(
            search_operator(&c, 0),
            Err(Error::NonReversible { .. })
        ));
    }

    #[test]
    fn reflection_walk_reproduces_szegedy() {
        let c = MarkovChain::family(&Family::Random { n: 5, seed: 11 }).unwrap();
        let walk = reflection_walk(&signed_blocks(&c, None), Some(c.transition())).unwrap();
        let s = search_operator(&c, 0).unwrap();
        assert!((&walk.matrix - &s.u2.matrix).amax() < 1e-12);
    }

    #[test]
    fn two_block_walk_fixes_uniform_state() {
        let phi = DVector::from_vec(vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        let walk = reflection_walk(&[phi.clone(), phi], None).unwrap();
        let v = walk.fixed_vector().unwrap();
        for x in v.iter() {
            assert_relative_eq!(*x, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn reflection_walk_rejects_bad_blocks() {
        let bad = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            reflection_walk(&[bad.clone(), bad], None),
            Err(Error::InvalidBlock(_))
        ));
    }

    #[test]
    fn analogue_round_trip() {
        let c = MarkovChain::family(&Family::Random { n: 6, seed: 5 }).unwrap();
        let walk = reflection_walk(&signed_blocks(&c, None), None).unwrap();
        let back = classical_analogue(&walk).unwrap();
        assert!((back.transition() - c.transition()).amax() < 1e-10);
        assert!(is_reversible_walk(&walk).unwrap());
    }

    #[test]
    fn signed_walk_is_reversible() {
        let c = MarkovChain::family(&Family::Complete { n: 4 }).unwrap();
        let walk = reflection_walk(&signed_blocks(&c, Some(&random_signs(4, 9))), None).unwrap();
        assert!(is_reversible_walk(&walk).unwrap());
        let back = classical_analogue(&walk).unwrap();
        assert!((back.transition() - c.transition()).amax() < 1e-10);
    }

    #[test]
    fn walk_decomposition_fact() {
        let c = MarkovChain::family(&Family::Cycle { n: 5 }).unwrap();
        let walk = reflection_walk(&signed_blocks(&c, None), None).unwrap();
        let dec = walk_decomposition(&walk).unwrap();
        let n = 5;
        let mut rebuilt = DVector::zeros(n * n);
        for x in 0..n {
            for y in 0..n {
                rebuilt[y * n + x] += dec.pi[x].sqrt() * dec.psi[x][y];
            }
        }
        assert!((rebuilt - &dec.phi0).amax() < 1e-9);
    }

    fn biased_cycle() -> MarkovChain {
        let p = DMatrix::from_row_slice(3, 3, &[0.5, 0.4, 0.1, 0.1, 0.5, 0.4, 0.4, 0.1, 0.5]);
        MarkovChain::from_transition(p).unwrap()
    }

    #[test]
    fn transport_blocks_are_orthogonal() {
        let c = biased_cycle();
        let ps = c.time_reversal().transition().clone();
        for (x, b) in transport_blocks(&c, &[true, false, true], &[false, true, true])
            .iter()
            .enumerate()
        {
            assert!(orthogonality_defect(b) < 1e-12);
            let phi = DVector::from_fn(3, |y, _| c.transition()[(x, y)].sqrt());
            let psi = DVector::from_fn(3, |y, _| ps[(x, y)].sqrt());
            assert!((b * phi - psi).amax() < 1e-12);
        }
    }

    #[test]
    fn biased_cycle_walk_is_not_reversible() {
        let c = biased_cycle();
        // Only the orientation of the first block's complement is flipped;
        // this choice leaves a single fixed vector.
        let blocks = transport_blocks(&c, &[false; 3], &[true, false, false]);
        let walk = block_walk(&blocks, None).unwrap();
        assert!(!is_reversible_walk(&walk).unwrap());
        let back = classical_analogue(&walk).unwrap();
        assert!((back.transition() - c.transition()).amax() < 1e-10);
        assert!(!back.is_reversible());
    }

    #[test]
    fn block_walk_rejects_degenerate_fixed_space() {
        let c = biased_cycle();
        let blocks = transport_blocks(&c, &[false; 3], &[false; 3]);
        assert!(matches!(
            block_walk(&blocks, None),
            Err(Error::DegeneratePlusOneSpace { .. })
        ));
        let bad = vec![DMatrix::from_element(3, 3, 0.5); 3];
        assert!(matches!(
            block_walk(&bad, None),
            Err(Error::InvalidBlock(_))
        ));
    }
}
