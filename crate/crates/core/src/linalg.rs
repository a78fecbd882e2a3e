//! Dense linear-algebra helpers shared by the spectral modules.
//!
//! Every operator in this crate is real orthogonal. Its spectrum is obtained
//! from the symmetric part `S = (U + Uᵀ)/2`, whose eigenspaces are the real
//! invariant subspaces carrying the conjugate pairs `e^{±iα}`. The skew part
//! `K = (U − Uᵀ)/2` then splits each such subspace into its `+α` and `−α`
//! halves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// Eigenvalues of `S` closer than this are treated as one cluster.
pub const CLUSTER_GAP: f64 = 1e-10;

/// Skew weight below which a cluster is taken to be real (phase 0 or π).
const REAL_PHASE_TOL: f64 = 1e-9;

pub type CVector = DVector<Complex64>;

pub fn to_complex(v: &DVector<f64>) -> CVector {
    v.map(|x| Complex64::new(x, 0.0))
}

/// `⟨a|b⟩` with the conjugate on the left argument.
pub fn cdot(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm(v: &CVector) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn apply_real(m: &DMatrix<f64>, v: &CVector) -> CVector {
    let re = m * v.map(|x| x.re);
    let im = m * v.map(|x| x.im);
    CVector::from_iterator(
        v.len(),
        re.iter()
            .zip(im.iter())
            .map(|(&r, &i)| Complex64::new(r, i)),
    )
}

/// Eigen-decomposition of a symmetric matrix with ascending eigenvalues.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Orthonormal basis (as columns) of the span of `vectors`, by modified
/// Gram–Schmidt with one re-orthogonalisation pass. Vectors whose residual
/// norm drops below `tol` are discarded.
pub fn orthonormal_basis(vectors: &[DVector<f64>], tol: f64) -> DMatrix<f64> {
    let dim = vectors.first().map_or(0, |v| v.len());
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut r = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let norm = r.norm();
        if norm > tol {
            basis.push(r / norm);
        }
    }
    if basis.is_empty() {
        return DMatrix::zeros(dim, 0);
    }
    DMatrix::from_columns(&basis)
}

/// Spectral (operator 2-) norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let (values, _) = sym_eigen_sorted(&gram);
    values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// `‖MᵀM − I‖_max`.
pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m - DMatrix::identity(m.ncols(), m.ncols());
    g.amax()
}

/// One real invariant subspace of an orthogonal operator.
#[derive(Debug, Clone)]
pub struct PhaseCluster {
    /// Phase in `[0, π]`; the subspace carries `e^{±i·phase}`.
    pub phase: f64,
    /// Orthonormal real basis (columns).
    pub basis: DMatrix<f64>,
}

impl PhaseCluster {
    pub fn is_real(&self) -> bool {
        self.phase <= REAL_PHASE_TOL || self.phase >= std::f64::consts::PI - REAL_PHASE_TOL
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// A vector's component on one eigenspace of an orthogonal operator.
#[derive(Debug, Clone)]
pub struct Component {
    /// Signed phase in `(−π, π]`.
    pub phase: f64,
    pub vector: CVector,
}

/// Spectral decomposition of a real orthogonal matrix.
#[derive(Debug, Clone)]
pub struct OrthogonalSpectrum {
    pub clusters: Vec<PhaseCluster>,
    skew: DMatrix<f64>,
}

impl OrthogonalSpectrum {
    pub fn new(u: &DMatrix<f64>) -> Self {
        let sym = (u + u.transpose()) * 0.5;
        let skew = (u - u.transpose()) * 0.5;
        let (values, vectors) = sym_eigen_sorted(&sym);
        let mut clusters = Vec::new();
        let mut start = 0;
        for i in 1..=values.len() {
            if i == values.len() || values[i] - values[i - 1] > CLUSTER_GAP {
                let cols: Vec<DVector<f64>> =
                    (start..i).map(|k| vectors.column(k).into_owned()).collect();
                let basis = DMatrix::from_columns(&cols);
                let m = (i - start) as f64;
                let c = values[start..i].iter().sum::<f64>() / m;
                let s = ((&skew * &basis).norm_squared() / m).sqrt();
                let phase = if s < REAL_PHASE_TOL {
                    if c > 0.0 {
                        0.0
                    } else {
                        std::f64::consts::PI
                    }
                } else {
                    s.atan2(c)
                };
                clusters.push(PhaseCluster { phase, basis });
                start = i;
            }
        }
        clusters.sort_by(|a, b| a.phase.total_cmp(&b.phase));
        Self { clusters, skew }
    }

    pub fn fixed_cluster(&self) -> Option<&PhaseCluster> {
        self.clusters.iter().find(|c| c.is_real() && c.phase < 1.0)
    }

    pub fn fixed_dim(&self) -> usize {
        self.fixed_cluster().map_or(0, |c| c.dim())
    }

    /// All eigenphases in `(−π, π]` with multiplicity, ascending.
    pub fn phases(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for c in &self.clusters {
            if c.is_real() {
                out.extend(std::iter::repeat_n(c.phase, c.dim()));
            } else {
                let half = c.dim() / 2;
                out.extend(std::iter::repeat_n(c.phase, half));
                out.extend(std::iter::repeat_n(-c.phase, half));
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }

    /// Decompose `psi` into eigencomponents. Components below `floor` in
    /// norm are dropped.
    pub fn components(&self, psi: &CVector, floor: f64) -> Vec<Component> {
        let mut out = Vec::new();
        for c in &self.clusters {
            let q = &c.basis;
            let coeff_re = q.transpose() * psi.map(|x| x.re);
            let coeff_im = q.transpose() * psi.map(|x| x.im);
            let proj = CVector::from_iterator(
                psi.len(),
                (q * &coeff_re)
                    .iter()
                    .zip((q * &coeff_im).iter())
                    .map(|(&r, &i)| Complex64::new(r, i)),
            );
            if cnorm(&proj) <= floor {
                continue;
            }
            if c.is_real() {
                out.push(Component {
                    phase: c.phase,
                    vector: proj,
                });
                continue;
            }
            let s = c.phase.sin();
            let k_proj = apply_real(&self.skew, &proj);
            let i_over_s = Complex64::new(0.0, 1.0 / s);
            let plus = (&proj - &k_proj * i_over_s) * Complex64::new(0.5, 0.0);
            let minus = &proj - &plus;
            for (phase, vector) in [(c.phase, plus), (-c.phase, minus)] {
                if cnorm(&vector) > floor {
                    out.push(Component { phase, vector });
                }
            }
        }
        out
    }

    /// Squared norm of `psi` carried by each cluster, keyed by the cluster
    /// phase in `[0, π]`.
    pub fn masses(&self, psi: &CVector) -> Vec<(f64, f64)> {
        self.clusters
            .iter()
            .map(|c| {
                let re = c.basis.transpose() * psi.map(|x| x.re);
                let im = c.basis.transpose() * psi.map(|x| x.im);
                (c.phase, re.norm_squared() + im.norm_squared())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rotation_block(angles: &[f64]) -> DMatrix<f64> {
        let n = 2 * angles.len();
        let mut m = DMatrix::zeros(n, n);
        for (k, &a) in angles.iter().enumerate() {
            let (s, c) = a.sin_cos();
            m[(2 * k, 2 * k)] = c;
            m[(2 * k, 2 * k + 1)] = -s;
            m[(2 * k + 1, 2 * k)] = s;
            m[(2 * k + 1, 2 * k + 1)] = c;
        }
        m
    }

    #[test]
    fn phases_of_block_rotation() {
        let u = rotation_block(&[0.3, 1.2]);
        let spec = OrthogonalSpectrum::new(&u);
        let phases = spec.phases();
        let expect = [-1.2, -0.3, 0.3, 1.2];
        for (a, b) in phases.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12, "{phases:?}");
        }
    }

    #[test]
    fn components_are_eigenvectors() {
        let u = rotation_block(&[0.7, 2.9]);
        let spec = OrthogonalSpectrum::new(&u);
        let psi = to_complex(&DVector::from_vec(vec![0.5, -0.1, 0.3, 0.8]));
        let comps = spec.components(&psi, 1e-14);
        assert_eq!(comps.len(), 4);
        let mut sum = CVector::zeros(4);
        for c in &comps {
            let uv = apply_real(&u, &c.vector);
            let expected = &c.vector * Complex64::from_polar(1.0, c.phase);
            assert!(cnorm(&(uv - expected)) < 1e-12);
            sum += &c.vector;
        }
        assert!(cnorm(&(sum - psi)) < 1e-12);
    }

    #[test]
    fn real_eigenvalues_detected() {
        let mut u = DMatrix::identity(3, 3);
        u[(2, 2)] = -1.0;
        let spec = OrthogonalSpectrum::new(&u);
        assert_eq!(spec.fixed_dim(), 2);
        assert!(spec.clusters.iter().any(|c| (c.phase - PI).abs() < 1e-12));
    }

    #[test]
    fn gram_schmidt_drops_dependent_vectors() {
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let c = DVector::from_vec(vec![2.0, 1.0, 0.0]);
        let q = orthonormal_basis(&[a, b, c], 1e-10);
        assert_eq!(q.ncols(), 2);
        assert!(orthogonality_defect(&q) < 1e-14);
    }
}
