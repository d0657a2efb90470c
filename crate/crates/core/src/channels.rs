//! Quantum channels in the Stinespring picture and random unitary mixtures.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    c64, haar_unitary, isometry_defect, matrix_to_vector, partial_trace_second, vector_to_matrix, ComplexMatrix,
    ComplexVector, DensityMatrix, Ket, C64,
};

pub const ISOMETRY_TOL: f64 = 1e-10;

/// A linear CPTP map given by its Schrödinger and Heisenberg actions.
///
/// `apply_operator` must accept arbitrary (non-Hermitian) operators so that
/// Choi matrices can be assembled from matrix units.
pub trait QuantumChannel: Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn apply_operator(&self, a: &ComplexMatrix) -> Result<ComplexMatrix>;

    /// Adjoint map `Φ†` with `Tr[G Φ(A)] = Tr[Φ†(G) A]`.
    fn apply_adjoint(&self, g: &ComplexMatrix) -> Result<ComplexMatrix>;

    /// Output operator for the pure input `x x*`.
    fn apply_ket_operator(&self, x: &Ket) -> Result<ComplexMatrix> {
        let p = x.amplitudes() * x.amplitudes().adjoint();
        self.apply_operator(&p)
    }

    /// `Φ†(G) x`, the ingredient of the entropy gradient.
    fn pullback(&self, g: &ComplexMatrix, x: &Ket) -> Result<ComplexVector> {
        Ok(self.apply_adjoint(g)? * x.amplitudes())
    }

    fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_dim(self.input_dim(), rho.dim())?;
        Ok(DensityMatrix::from_hermitian_unchecked(self.apply_operator(rho.matrix())?))
    }

    fn apply_to_ket(&self, x: &Ket) -> Result<DensityMatrix> {
        check_dim(self.input_dim(), x.dim())?;
        Ok(DensityMatrix::from_hermitian_unchecked(self.apply_ket_operator(x)?))
    }

    /// `Σ_ij Φ(e_i e_j*) ⊗ e_i e_j*`, ordered (output, input).
    fn choi_matrix(&self) -> Result<ComplexMatrix> {
        let (l, k) = (self.input_dim(), self.output_dim());
        let mut choi = ComplexMatrix::zeros(k * l, k * l);
        for i in 0..l {
            for j in 0..l {
                let mut unit = ComplexMatrix::zeros(l, l);
                unit[(i, j)] = c64(1.0, 0.0);
                let out = self.apply_operator(&unit)?;
                for a in 0..k {
                    for b in 0..k {
                        choi[(a * l + i, b * l + j)] = out[(a, b)];
                    }
                }
            }
        }
        Ok(choi)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Channel `ρ ↦ Tr_{C^n}[V ρ V*]` for an isometry `V: C^l → C^k ⊗ C^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct StinespringChannel {
    l: usize,
    k: usize,
    n: usize,
    isometry: ComplexMatrix,
}

impl StinespringChannel {
    pub fn new(isometry: ComplexMatrix, k: usize, n: usize) -> Result<Self> {
        if k == 0 || n == 0 || isometry.ncols() == 0 {
            return Err(Error::InvalidDimension("channel dimensions must be positive".into()));
        }
        if isometry.nrows() != k * n {
            return Err(Error::DimensionMismatch { expected: k * n, got: isometry.nrows() });
        }
        if isometry.ncols() > k * n {
            return Err(Error::InvalidDimension(format!("l = {} exceeds kn = {}", isometry.ncols(), k * n)));
        }
        let defect = isometry_defect(&isometry);
        if !(defect <= ISOMETRY_TOL) {
            return Err(Error::Precondition(format!("V*V deviates from identity by {defect:e}")));
        }
        Ok(Self { l: isometry.ncols(), k, n, isometry })
    }

    /// Identity channel on `C^k` (`l = k`, `n = 1`).
    pub fn identity(k: usize) -> Result<Self> {
        Self::new(ComplexMatrix::identity(k, k), k, 1)
    }

    /// Completely depolarizing channel `ρ ↦ I_k / k` on `C^l`, realized by
    /// `x ↦ b_k ⊗ x` with environment `C^k ⊗ C^l`.
    pub fn constant(k: usize, l: usize) -> Result<Self> {
        if k == 0 || l == 0 {
            return Err(Error::InvalidDimension("constant channel needs k, l ≥ 1".into()));
        }
        let n = k * l;
        let amp = 1.0 / (k as f64).sqrt();
        let mut v = ComplexMatrix::zeros(k * n, l);
        for i in 0..k {
            for j in 0..l {
                v[(i * n + i * l + j, j)] = c64(amp, 0.0);
            }
        }
        Self::new(v, k, n)
    }

    pub fn input_dim(&self) -> usize {
        self.l
    }

    pub fn output_dim(&self) -> usize {
        self.k
    }

    pub fn env_dim(&self) -> usize {
        self.n
    }

    /// `(l, k, n)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.l, self.k, self.n)
    }

    pub fn isometry(&self) -> &ComplexMatrix {
        &self.isometry
    }

    /// `V x` as a unit vector of `C^k ⊗ C^n`.
    pub fn embed(&self, x: &Ket) -> Result<Ket> {
        check_dim(self.l, x.dim())?;
        Ket::normalized(&self.isometry * x.amplitudes())
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        QuantumChannel::apply(self, rho)
    }

    pub fn apply_to_ket(&self, x: &Ket) -> Result<DensityMatrix> {
        QuantumChannel::apply_to_ket(self, x)
    }

    pub fn to_record(&self) -> ChannelRecord {
        ChannelRecord {
            l: self.l,
            k: self.k,
            n: self.n,
            v: (0..self.k * self.n)
                .flat_map(|r| (0..self.l).map(move |c| (r, c)))
                .map(|(r, c)| {
                    let z = self.isometry[(r, c)];
                    [z.re, z.im]
                })
                .collect(),
        }
    }

    pub fn from_record(record: &ChannelRecord) -> Result<Self> {
        let rows = record.k * record.n;
        if record.v.len() != rows * record.l {
            return Err(Error::DimensionMismatch { expected: rows * record.l, got: record.v.len() });
        }
        let v = ComplexMatrix::from_fn(rows, record.l, |r, c| {
            let [re, im] = record.v[r * record.l + c];
            c64(re, im)
        });
        Self::new(v, record.k, record.n)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(s)?)
    }
}

impl QuantumChannel for StinespringChannel {
    fn input_dim(&self) -> usize {
        self.l
    }

    fn output_dim(&self) -> usize {
        self.k
    }

    fn apply_operator(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dim(self.l, a.nrows())?;
        check_dim(self.l, a.ncols())?;
        let full = &self.isometry * a * self.isometry.adjoint();
        partial_trace_second(&full, self.k, self.n)
    }

    fn apply_adjoint(&self, g: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dim(self.k, g.nrows())?;
        check_dim(self.k, g.ncols())?;
        let mut lifted = ComplexMatrix::zeros(self.k * self.n, self.l);
        for c in 0..self.l {
            let col: ComplexVector = self.isometry.column(c).into_owned();
            let y = g * vector_to_matrix(&col, self.k, self.n)?;
            lifted.set_column(c, &matrix_to_vector(&y));
        }
        Ok(self.isometry.adjoint() * lifted)
    }

    fn apply_ket_operator(&self, x: &Ket) -> Result<ComplexMatrix> {
        check_dim(self.l, x.dim())?;
        let y = vector_to_matrix(&(&self.isometry * x.amplitudes()), self.k, self.n)?;
        Ok(&y * y.adjoint())
    }

    fn pullback(&self, g: &ComplexMatrix, x: &Ket) -> Result<ComplexVector> {
        check_dim(self.l, x.dim())?;
        check_dim(self.k, g.nrows())?;
        let y = vector_to_matrix(&(&self.isometry * x.amplitudes()), self.k, self.n)?;
        Ok(self.isometry.adjoint() * matrix_to_vector(&(g * y)))
    }
}

/// Serialized form of a [`StinespringChannel`]: `V` row-major as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub l: usize,
    pub k: usize,
    pub n: usize,
    pub v: Vec<[f64; 2]>,
}

/// Channel whose isometry is the first `l` columns of a Haar unitary on `C^{kn}`.
pub fn random_subspace_channel<R: Rng + ?Sized>(l: usize, k: usize, n: usize, rng: &mut R) -> Result<StinespringChannel> {
    if l == 0 || k == 0 || n == 0 {
        return Err(Error::InvalidDimension("l, k, n must be positive".into()));
    }
    if l > k * n {
        return Err(Error::InvalidDimension(format!("l = {l} exceeds kn = {}", k * n)));
    }
    let u = haar_unitary(k * n, rng)?;
    StinespringChannel::new(u.columns(0, l).into_owned(), k, n)
}

/// Channel defined by the entrywise conjugate isometry `V̄`.
pub fn conjugate_channel(channel: &StinespringChannel) -> StinespringChannel {
    StinespringChannel { isometry: channel.isometry.map(|z| z.conj()), ..channel.clone() }
}

/// `Φ ⊗ Ω` with composite legs ordered (k1, k2, n1, n2).
pub fn tensor_channels(phi: &StinespringChannel, omega: &StinespringChannel) -> StinespringChannel {
    let (k1, n1) = (phi.k, phi.n);
    let (k2, n2) = (omega.k, omega.n);
    let kron = phi.isometry.kronecker(&omega.isometry);
    let mut v = ComplexMatrix::zeros(kron.nrows(), kron.ncols());
    for i1 in 0..k1 {
        for j1 in 0..n1 {
            for i2 in 0..k2 {
                for j2 in 0..n2 {
                    let from = (i1 * n1 + j1) * (k2 * n2) + i2 * n2 + j2;
                    let to = (i1 * k2 + i2) * (n1 * n2) + j1 * n2 + j2;
                    v.set_row(to, &kron.row(from));
                }
            }
        }
    }
    StinespringChannel { l: phi.l * omega.l, k: k1 * k2, n: n1 * n2, isometry: v }
}

/// `b_d = d^{-1/2} Σ e_i ⊗ e_i`.
pub fn bell_state(d: usize) -> Result<Ket> {
    if d == 0 {
        return Err(Error::InvalidDimension("Bell state of dimension 0".into()));
    }
    let amp = 1.0 / (d as f64).sqrt();
    let mut v = ComplexVector::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = c64(amp, 0.0);
    }
    Ket::new(v)
}

/// `ρ ↦ (1/k) Σ U_i ρ U_i*` on `C^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomUnitaryChannel {
    n: usize,
    unitaries: Vec<ComplexMatrix>,
}

impl RandomUnitaryChannel {
    pub fn new(unitaries: Vec<ComplexMatrix>) -> Result<Self> {
        let n = unitaries
            .first()
            .map(|u| u.nrows())
            .ok_or_else(|| Error::InvalidDimension("need at least one unitary".into()))?;
        for u in &unitaries {
            if u.nrows() != n || u.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, got: u.nrows() });
            }
            let defect = isometry_defect(u);
            if defect > ISOMETRY_TOL {
                return Err(Error::Precondition(format!("U*U deviates from identity by {defect:e}")));
            }
        }
        Ok(Self { n, unitaries })
    }

    pub fn num_unitaries(&self) -> usize {
        self.unitaries.len()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn unitaries(&self) -> &[ComplexMatrix] {
        &self.unitaries
    }
}

impl QuantumChannel for RandomUnitaryChannel {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.n
    }

    fn apply_operator(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dim(self.n, a.nrows())?;
        let mut acc = ComplexMatrix::zeros(self.n, self.n);
        for u in &self.unitaries {
            acc += u * a * u.adjoint();
        }
        Ok(acc.unscale(self.unitaries.len() as f64))
    }

    fn apply_adjoint(&self, g: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dim(self.n, g.nrows())?;
        let mut acc = ComplexMatrix::zeros(self.n, self.n);
        for u in &self.unitaries {
            acc += u.adjoint() * g * u;
        }
        Ok(acc.unscale(self.unitaries.len() as f64))
    }
}

/// Mixture of `k` independent Haar unitaries on `C^n`.
pub fn random_unitary_channel<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<RandomUnitaryChannel> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidDimension("k, n must be positive".into()));
    }
    let unitaries = (0..k).map(|_| haar_unitary(n, rng)).collect::<Result<Vec<_>>>()?;
    RandomUnitaryChannel::new(unitaries)
}

pub fn apply_ru(channel: &RandomUnitaryChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    channel.apply(rho)
}

/// Entrywise maximum distance between two matrices.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y): (&C64, &C64)| acc.max((x - y).norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{partial_trace_env, random_density_matrix, random_unit_vector};
    use crate::rng::substream;

    fn real_isometry() -> StinespringChannel {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = ComplexMatrix::from_row_slice(
            4,
            2,
            &[c64(s, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(s, 0.0), c64(0.0, 0.0), c64(s, 0.0), c64(s, 0.0), c64(0.0, 0.0)],
        );
        StinespringChannel::new(v, 2, 2).unwrap()
    }

    #[test]
    fn subspace_channel_dimension_errors() {
        let mut rng = substream(10, 0);
        assert!(matches!(random_subspace_channel(5, 2, 2, &mut rng), Err(Error::InvalidDimension(_))));
        let ch = random_subspace_channel(4, 2, 2, &mut rng).unwrap();
        assert!(isometry_defect(&ch.isometry().adjoint()) < 1e-10);
        let bad = DensityMatrix::maximally_mixed(3).unwrap();
        assert!(matches!(ch.apply(&bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn bell_marginal_through_identity_isometry() {
        let ch = StinespringChannel::new(ComplexMatrix::identity(4, 4), 2, 2).unwrap();
        let out = ch.apply(&bell_state(2).unwrap().projector()).unwrap();
        let half = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(max_abs_diff(out.matrix(), half.matrix()) < 1e-12);
    }

    #[test]
    fn single_column_channel_has_single_output() {
        let mut rng = substream(11, 0);
        let ch = random_subspace_channel(1, 2, 3, &mut rng).unwrap();
        let v0 = Ket::new(ch.isometry().column(0).into_owned()).unwrap();
        let expected = partial_trace_env(&v0, 2, 3).unwrap();
        let out = ch.apply_to_ket(&Ket::basis(1, 0).unwrap()).unwrap();
        assert!(max_abs_diff(out.matrix(), expected.matrix()) < 1e-12);
    }

    #[test]
    fn outputs_are_states_and_paths_agree() {
        let mut rng = substream(12, 0);
        for _ in 0..100 {
            let ch = random_subspace_channel(2, 2, 2, &mut rng).unwrap();
            let x = random_unit_vector(2, &mut rng).unwrap();
            let fast = ch.apply_to_ket(&x).unwrap();
            let slow = ch.apply(&x.projector()).unwrap();
            assert!(max_abs_diff(fast.matrix(), slow.matrix()) < 1e-12);
            let direct = partial_trace_env(&ch.embed(&x).unwrap(), 2, 2).unwrap();
            assert!(max_abs_diff(fast.matrix(), direct.matrix()) < 1e-12);
            assert!(DensityMatrix::new(fast.into_inner()).is_ok());
            let mixed = ch.apply(&DensityMatrix::maximally_mixed(2).unwrap()).unwrap();
            assert!((mixed.matrix().trace().re - 1.0).abs() < 1e-12);
        }
        let col = random_subspace_channel(3, 2, 2, &mut rng).unwrap();
        let out = col.apply_to_ket(&Ket::basis(3, 0).unwrap()).unwrap();
        let v0 = Ket::new(col.isometry().column(0).into_owned()).unwrap();
        assert!(max_abs_diff(out.matrix(), partial_trace_env(&v0, 2, 2).unwrap().matrix()) < 1e-12);
    }

    #[test]
    fn adjoint_is_dual_to_apply() {
        let mut rng = substream(13, 0);
        let ch = random_subspace_channel(3, 2, 3, &mut rng).unwrap();
        let rho = random_density_matrix(3, 3, &mut rng).unwrap();
        let g = random_density_matrix(2, 2, &mut rng).unwrap();
        let lhs = (g.matrix() * ch.apply(&rho).unwrap().matrix()).trace();
        let rhs = (ch.apply_adjoint(g.matrix()).unwrap() * rho.matrix()).trace();
        assert!((lhs - rhs).norm() < 1e-12);
        let x = random_unit_vector(3, &mut rng).unwrap();
        let fast = ch.pullback(g.matrix(), &x).unwrap();
        let slow = ch.apply_adjoint(g.matrix()).unwrap() * x.amplitudes();
        assert!((fast - slow).norm() < 1e-12);
    }

    #[test]
    fn conjugation() {
        let real = real_isometry();
        assert_eq!(conjugate_channel(&real), real);
        let mut rng = substream(14, 0);
        let ch = random_subspace_channel(2, 2, 2, &mut rng).unwrap();
        assert_eq!(conjugate_channel(&conjugate_channel(&ch)), ch);
        let bar = conjugate_channel(&ch);
        for _ in 0..20 {
            let rho = DensityMatrix::diagonal(&{
                let p: f64 = rng.random();
                [p, 1.0 - p]
            })
            .unwrap();
            let a = ch.apply(&rho).unwrap().conj();
            let b = bar.apply(&rho).unwrap();
            assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-12);
        }
    }

    #[test]
    fn tensor_product_factorizes() {
        let mut rng = substream(15, 0);
        let phi = random_subspace_channel(2, 2, 3, &mut rng).unwrap();
        let omega = random_subspace_channel(3, 3, 2, &mut rng).unwrap();
        let prod = tensor_channels(&phi, &omega);
        assert_eq!(prod.dims(), (6, 6, 6));
        assert!(isometry_defect(prod.isometry()) < 1e-10);
        let rho = random_density_matrix(2, 2, &mut rng).unwrap();
        let sigma = random_density_matrix(3, 2, &mut rng).unwrap();
        let joint = prod.apply(&rho.tensor(&sigma)).unwrap();
        let split = phi.apply(&rho).unwrap().tensor(&omega.apply(&sigma).unwrap());
        assert!(max_abs_diff(joint.matrix(), split.matrix()) < 1e-12);
        let any = random_density_matrix(6, 6, &mut rng).unwrap();
        assert!((prod.apply(&any).unwrap().matrix().trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bell_state_properties() {
        assert_eq!(bell_state(1).unwrap(), Ket::basis(1, 0).unwrap());
        let mut rng = substream(16, 0);
        for d in 2..=4 {
            let b = bell_state(d).unwrap();
            assert!((b.amplitudes().norm() - 1.0).abs() < 1e-15);
            for _ in 0..20 {
                let u = haar_unitary(d, &mut rng).unwrap();
                let rotated = u.kronecker(&u.map(|z| z.conj())) * b.amplitudes();
                assert!((rotated - b.amplitudes()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn choi_matrix_is_positive() {
        let mut rng = substream(17, 0);
        for trial in 0..50 {
            let k = 1 + trial % 3;
            let n = 1 + (trial / 3) % 3;
            let l = 1 + trial % (k * n).min(4);
            let ch = random_subspace_channel(l, k, n, &mut rng).unwrap();
            let choi = ch.choi_matrix().unwrap();
            let ev = crate::linalg::hermitian_eigvals(&choi).unwrap();
            assert!(ev.iter().all(|&e| e >= -1e-9), "trial {trial}: {ev:?}");
        }
    }

    #[test]
    fn random_unitary_channel_behaviour() {
        let mut rng = substream(18, 0);
        let single = random_unitary_channel(1, 3, &mut rng).unwrap();
        let rho = random_density_matrix(3, 2, &mut rng).unwrap();
        let out = apply_ru(&single, &rho).unwrap();
        for (a, b) in out.eigenvalues().iter().zip(rho.eigenvalues()) {
            assert!((a - b).abs() < 1e-10);
        }
        let ch = random_unitary_channel(2, 2, &mut rng).unwrap();
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(max_abs_diff(ch.apply(&mixed).unwrap().matrix(), mixed.matrix()) < 1e-12);
        let pure = random_unit_vector(2, &mut rng).unwrap().projector();
        let ev = ch.apply(&pure).unwrap().eigenvalues();
        assert!((ev.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(ev.iter().all(|&e| (-1e-12..=1.0 + 1e-12).contains(&e)));
        assert!(apply_ru(&ch, &DensityMatrix::maximally_mixed(3).unwrap()).is_err());
    }

    #[test]
    fn constant_channel_outputs_maximally_mixed() {
        let ch = StinespringChannel::constant(3, 2).unwrap();
        let mut rng = substream(19, 0);
        let x = random_unit_vector(2, &mut rng).unwrap();
        let out = ch.apply_to_ket(&x).unwrap();
        assert!(max_abs_diff(out.matrix(), DensityMatrix::maximally_mixed(3).unwrap().matrix()) < 1e-12);
    }

    #[test]
    fn record_round_trip() {
        let mut rng = substream(20, 0);
        let ch = random_subspace_channel(2, 2, 3, &mut rng).unwrap();
        let back = StinespringChannel::from_json(&ch.to_json().unwrap()).unwrap();
        assert_eq!(back, ch);
        let mut rec = ch.to_record();
        rec.v.pop();
        assert!(StinespringChannel::from_record(&rec).is_err());
    }
}
