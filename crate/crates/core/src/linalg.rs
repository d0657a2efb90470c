//! Dense complex linear algebra and Haar sampling.
//!
//! Vectors in `C^k ⊗ C^n` are identified with `k × n` matrices row-major:
//! amplitude `x[i * n + j]` is entry `X[(i, j)]`. All tensor legs are
//! ordered (output, environment), so `Tr_env[x x*] = X X*`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

pub const KET_NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const STATE_HERMITIAN_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;

/// A unit vector in `C^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    amplitudes: ComplexVector,
}

impl Ket {
    pub fn new(amplitudes: ComplexVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidDimension("ket of dimension 0".into()));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > KET_NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes `v`; fails on the zero vector.
    pub fn normalized(v: ComplexVector) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Precondition("cannot normalize a zero or non-finite vector".into()));
        }
        Self::new(v.unscale(norm))
    }

    /// Canonical basis vector `e_index` of `C^dim`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidDimension(format!("basis index {index} out of range for dimension {dim}")));
        }
        let mut v = ComplexVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.amplitudes
    }

    pub fn into_inner(self) -> ComplexVector {
        self.amplitudes
    }

    /// `x ⊗ y`.
    pub fn tensor(&self, other: &Ket) -> Ket {
        Ket { amplitudes: kron_vec(&self.amplitudes, &other.amplitudes) }
    }

    /// Rank-one projector `x x*`.
    pub fn projector(&self) -> DensityMatrix {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix::from_hermitian_unchecked(m)
    }

    pub fn conj(&self) -> Ket {
        Ket { amplitudes: self.amplitudes.map(|z| z.conj()) }
    }
}

/// Hermitian, positive semidefinite, trace-one matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, trace and positivity.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "density matrix must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let dev = hermitian_defect(&matrix);
        if dev > STATE_HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidTrace(tr.re));
        }
        let m = hermitize(&matrix);
        let min = eigh_values(&m).into_iter().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(Self { matrix: m })
    }

    /// Wraps a matrix known to be a state up to rounding, symmetrizing it.
    pub(crate) fn from_hermitian_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix: hermitize(&matrix) }
    }

    /// `I_d / d`.
    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("dimension 0".into()));
        }
        Ok(Self { matrix: ComplexMatrix::identity(dim, dim).unscale(dim as f64) })
    }

    /// `diag(probabilities)`.
    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        let d = probabilities.len();
        let mut m = ComplexMatrix::zeros(d, d);
        for (i, &p) in probabilities.iter().enumerate() {
            m[(i, i)] = C64::new(p, 0.0);
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.matrix
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev = eigh_values(&self.matrix);
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix { matrix: self.matrix.kronecker(&other.matrix) }
    }

    /// Entrywise complex conjugate (equivalently, the transpose).
    pub fn conj(&self) -> DensityMatrix {
        DensityMatrix { matrix: self.matrix.map(|z| z.conj()) }
    }

    /// `Σ p_i ρ_i`; weights must be a probability vector.
    pub fn mixture(weights: &[f64], states: &[DensityMatrix]) -> Result<DensityMatrix> {
        if weights.len() != states.len() || states.is_empty() {
            return Err(Error::Precondition("mixture needs one weight per state".into()));
        }
        let d = states[0].dim();
        let mut acc = ComplexMatrix::zeros(d, d);
        for (w, s) in weights.iter().zip(states) {
            if s.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: s.dim() });
            }
            acc += s.matrix.scale(*w);
        }
        DensityMatrix::new(acc)
    }
}

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest entrywise deviation `|A - A*|`.
pub fn hermitian_defect(a: &ComplexMatrix) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(A + A*) / 2`.
pub fn hermitize(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).unscale(2.0)
}

/// `‖U*U - I‖_max` for a matrix with orthonormal columns.
pub fn isometry_defect(u: &ComplexMatrix) -> f64 {
    let g = u.adjoint() * u;
    let id = ComplexMatrix::identity(g.nrows(), g.ncols());
    (g - id).iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn eigh_values(a: &ComplexMatrix) -> Vec<f64> {
    SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect()
}

/// Eigen-decomposition of a Hermitian matrix: eigenvalues (descending) and
/// matching unit eigenvectors as columns.
pub fn hermitian_eigh(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    check_hermitian(a)?;
    let eig = SymmetricEigen::new(hermitize(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_fn(a.nrows(), a.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

fn check_hermitian(a: &ComplexMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::InvalidDimension(format!("{}x{} matrix is not square", a.nrows(), a.ncols())));
    }
    let dev = hermitian_defect(a);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    Ok(())
}

/// Real eigenvalues of a Hermitian matrix in descending order.
pub fn hermitian_eigvals(a: &ComplexMatrix) -> Result<Vec<f64>> {
    check_hermitian(a)?;
    let mut ev = eigh_values(&hermitize(a));
    ev.sort_by(|x, y| y.total_cmp(x));
    Ok(ev)
}

/// Hilbert–Schmidt (Frobenius) norm.
pub fn hs_norm(a: &ComplexMatrix) -> f64 {
    a.norm()
}

/// Operator norm: the largest singular value.
pub fn op_norm(a: &ComplexMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().fold(0.0, |acc: f64, &s| acc.max(s))
}

pub fn kron_vec(a: &ComplexVector, b: &ComplexVector) -> ComplexVector {
    let mut out = ComplexVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rows × cols` matrix of i.i.d. standard complex Gaussians (`E|z|² = 1`).
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    // Column-major fill order is part of the reproducibility contract.
    ComplexMatrix::from_fn(rows, cols, |_, _| standard_complex_normal(rng))
}

/// Haar-distributed unitary on `C^d`: QR of a Ginibre matrix with the phases
/// of `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if d == 0 {
        return Err(Error::InvalidDimension("Haar unitary of dimension 0".into()));
    }
    let g = ginibre(d, d, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let norm = rjj.norm();
        let phase = if norm > 0.0 { rjj / norm } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}

/// Uniform point on the unit sphere of `C^d`.
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Ket> {
    if d == 0 {
        return Err(Error::InvalidDimension("unit vector of dimension 0".into()));
    }
    loop {
        let v = ComplexVector::from_fn(d, |_, _| standard_complex_normal(rng));
        let norm = v.norm();
        if norm > 1e-300 {
            return Ket::new(v.unscale(norm));
        }
    }
}

/// Random state `G G* / Tr[G G*]` with `G` a `d × rank` Ginibre matrix.
pub fn random_density_matrix<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> Result<DensityMatrix> {
    if d == 0 || rank == 0 {
        return Err(Error::InvalidDimension("random state needs d, rank ≥ 1".into()));
    }
    let g = ginibre(d, rank, rng);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    Ok(DensityMatrix::from_hermitian_unchecked(m.unscale(tr)))
}

fn check_bipartite(dim: usize, k: usize, n: usize) -> Result<()> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidDimension("factor dimensions must be positive".into()));
    }
    if dim != k * n {
        return Err(Error::DimensionMismatch { expected: k * n, got: dim });
    }
    Ok(())
}

/// Matrix view `X` of `x ∈ C^k ⊗ C^n`, `X[(i, j)] = x[i * n + j]`.
pub fn ket_to_matrix(x: &Ket, k: usize, n: usize) -> Result<ComplexMatrix> {
    vector_to_matrix(x.amplitudes(), k, n)
}

pub fn vector_to_matrix(x: &ComplexVector, k: usize, n: usize) -> Result<ComplexMatrix> {
    check_bipartite(x.len(), k, n)?;
    Ok(ComplexMatrix::from_fn(k, n, |i, j| x[i * n + j]))
}

/// Inverse of [`ket_to_matrix`].
pub fn matrix_to_ket(m: &ComplexMatrix) -> Result<Ket> {
    Ket::new(matrix_to_vector(m))
}

pub fn matrix_to_vector(m: &ComplexMatrix) -> ComplexVector {
    let (k, n) = m.shape();
    ComplexVector::from_fn(k * n, |idx, _| m[(idx / n, idx % n)])
}

/// `Tr_{C^n}[x x*] = X X*`.
pub fn partial_trace_env(x: &Ket, k: usize, n: usize) -> Result<DensityMatrix> {
    let m = ket_to_matrix(x, k, n)?;
    Ok(DensityMatrix::from_hermitian_unchecked(&m * m.adjoint()))
}

/// `Tr_{C^k}[x x*] = (X* X)^T`.
pub fn partial_trace_out(x: &Ket, k: usize, n: usize) -> Result<DensityMatrix> {
    let m = ket_to_matrix(x, k, n)?;
    Ok(DensityMatrix::from_hermitian_unchecked((m.adjoint() * m).transpose()))
}

/// Partial trace over the second factor of an operator on `C^k ⊗ C^n`.
pub fn partial_trace_second(a: &ComplexMatrix, k: usize, n: usize) -> Result<ComplexMatrix> {
    if a.nrows() != k * n || a.ncols() != k * n {
        return Err(Error::DimensionMismatch { expected: k * n, got: a.nrows() });
    }
    Ok(ComplexMatrix::from_fn(k, k, |i, j| {
        (0..n).fold(C64::new(0.0, 0.0), |acc, e| acc + a[(i * n + e, j * n + e)])
    }))
}
