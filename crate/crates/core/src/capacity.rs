//! Discrete Weyl operators, the Weyl extension of a channel, and ensemble
//! Holevo values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{tensor_channels, QuantumChannel, StinespringChannel};
use crate::entropy::{min_output_entropy_estimate, von_neumann_entropy};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, DensityMatrix, C64};
use crate::rng::derive_seed;

pub const MAX_EXTENSION_DIM: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeylLabel {
    x: usize,
    y: usize,
    k: usize,
}

impl WeylLabel {
    pub fn new(x: usize, y: usize, k: usize) -> Result<Self> {
        if k == 0 || x >= k || y >= k {
            return Err(Error::Precondition(format!("Weyl label ({x}, {y}) needs 0 ≤ x, y < k = {k}")));
        }
        Ok(Self { x, y, k })
    }

    pub fn x(&self) -> usize {
        self.x
    }

    pub fn y(&self) -> usize {
        self.y
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// All `k²` labels, `x` major.
    pub fn all(k: usize) -> Vec<WeylLabel> {
        (0..k).flat_map(|x| (0..k).map(move |y| WeylLabel { x, y, k })).collect()
    }
}

/// `U^x V^y` with `U e_r = e_{r+1}` and `V e_r = ω^r e_r`, `ω = e^{2πi/k}`.
pub fn weyl_operator(z: WeylLabel) -> ComplexMatrix {
    let k = z.k;
    let mut w = ComplexMatrix::zeros(k, k);
    for r in 0..k {
        let phase = std::f64::consts::TAU * ((r * z.y) % k) as f64 / k as f64;
        w[((r + z.x) % k, r)] = C64::from_polar(1.0, phase);
    }
    w
}

/// `(1/k²) Σ_z W_z A W_z*`.
pub fn weyl_twirl(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::InvalidDimension("twirl needs a nonempty square matrix".into()));
    }
    let k = a.nrows();
    let mut acc = ComplexMatrix::zeros(k, k);
    for z in WeylLabel::all(k) {
        let w = weyl_operator(z);
        acc += &w * a * w.adjoint();
    }
    Ok(acc.unscale((k * k) as f64))
}

fn product_weyl(moduli: &[usize], index: usize) -> ComplexMatrix {
    let mut rest = index;
    let mut labels = Vec::with_capacity(moduli.len());
    for &k in moduli.iter().rev() {
        let local = rest % (k * k);
        rest /= k * k;
        labels.push(WeylLabel { x: local / k, y: local % k, k });
    }
    labels.reverse();
    labels.iter().fold(ComplexMatrix::identity(1, 1), |acc, &z| acc.kronecker(&weyl_operator(z)))
}

/// `ρ ↦ Σ_z W_z Φ((e_z* ⊗ I) ρ (e_z ⊗ I)) W_z*` on `C^R ⊗ C^l`, where the
/// classical register runs over joint labels of `⊗_i Z_{k_i}²` and `W_z` is
/// the tensor product of the factor Weyl operators. With one modulus this is
/// the single-channel extension; with several it is the product of
/// extensions with the registers gathered in front.
pub struct WeylExtendedChannel {
    base: StinespringChannel,
    moduli: Vec<usize>,
    operators: Vec<ComplexMatrix>,
}

impl WeylExtendedChannel {
    pub fn new(base: StinespringChannel, moduli: Vec<usize>) -> Result<Self> {
        let prod: usize = moduli.iter().product();
        if moduli.is_empty() || moduli.contains(&0) || prod != base.output_dim() {
            return Err(Error::Precondition(format!(
                "Weyl moduli {moduli:?} must multiply to the output dimension {}",
                base.output_dim()
            )));
        }
        let labels: usize = moduli.iter().map(|k| k * k).product();
        let operators = (0..labels).map(|i| product_weyl(&moduli, i)).collect();
        Ok(Self { base, moduli, operators })
    }

    /// Single-channel extension with modulus `k`.
    pub fn single(base: StinespringChannel) -> Result<Self> {
        let k = base.output_dim();
        Self::new(base, vec![k])
    }

    pub fn base(&self) -> &StinespringChannel {
        &self.base
    }

    pub fn moduli(&self) -> &[usize] {
        &self.moduli
    }

    pub fn num_labels(&self) -> usize {
        self.operators.len()
    }

    pub fn operator(&self, index: usize) -> &ComplexMatrix {
        &self.operators[index]
    }

    /// `e_z e_z* ⊗ ρ0`.
    pub fn register_state(&self, index: usize, rho0: &DensityMatrix) -> Result<DensityMatrix> {
        if index >= self.num_labels() {
            return Err(Error::Precondition(format!("label {index} out of range")));
        }
        let r = self.num_labels();
        let mut reg = ComplexMatrix::zeros(r, r);
        reg[(index, index)] = C64::new(1.0, 0.0);
        DensityMatrix::new(reg.kronecker(rho0.matrix()))
    }
}

impl QuantumChannel for WeylExtendedChannel {
    fn input_dim(&self) -> usize {
        self.num_labels() * self.base.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.base.output_dim()
    }

    fn apply_operator(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        let d = self.input_dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: a.nrows() });
        }
        let l = self.base.input_dim();
        let k = self.output_dim();
        let mut out = ComplexMatrix::zeros(k, k);
        for (z, w) in self.operators.iter().enumerate() {
            let block = a.view((z * l, z * l), (l, l)).into_owned();
            if block.iter().all(|v| *v == C64::new(0.0, 0.0)) {
                continue;
            }
            out += w * QuantumChannel::apply_operator(&self.base, &block)? * w.adjoint();
        }
        Ok(out)
    }

    fn apply_adjoint(&self, g: &ComplexMatrix) -> Result<ComplexMatrix> {
        let k = self.output_dim();
        if g.nrows() != k || g.ncols() != k {
            return Err(Error::DimensionMismatch { expected: k, got: g.nrows() });
        }
        let l = self.base.input_dim();
        let d = self.input_dim();
        let mut out = ComplexMatrix::zeros(d, d);
        for (z, w) in self.operators.iter().enumerate() {
            let block = self.base.apply_adjoint(&(w.adjoint() * g * w))?;
            out.view_mut((z * l, z * l), (l, l)).copy_from(&block);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    probabilities: Vec<f64>,
    states: Vec<DensityMatrix>,
}

impl Ensemble {
    pub fn new(probabilities: Vec<f64>, states: Vec<DensityMatrix>) -> Result<Self> {
        if probabilities.is_empty() || probabilities.len() != states.len() {
            return Err(Error::Precondition("ensemble needs matching, nonempty weights and states".into()));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Precondition("ensemble weights must be nonnegative".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidTrace(total));
        }
        let d = states[0].dim();
        if let Some(s) = states.iter().find(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: s.dim() });
        }
        Ok(Self { probabilities, states })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn average(&self) -> Result<DensityMatrix> {
        DensityMatrix::mixture(&self.probabilities, &self.states)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolevoBreakdown {
    pub chi_nats: f64,
    pub average_output_entropy_nats: f64,
    pub member_entropies_nats: Vec<f64>,
}

pub fn ensemble_holevo_breakdown<C: QuantumChannel + ?Sized>(channel: &C, ensemble: &Ensemble) -> Result<HolevoBreakdown> {
    let d = channel.input_dim();
    if ensemble.states[0].dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: ensemble.states[0].dim() });
    }
    let member_entropies_nats: Vec<f64> = ensemble
        .states
        .par_iter()
        .map(|s| Ok(von_neumann_entropy(&channel.apply(s)?)?.nats()))
        .collect::<Result<_>>()?;
    let average_output_entropy_nats = von_neumann_entropy(&channel.apply(&ensemble.average()?)?)?.nats();
    let mean: f64 = ensemble.probabilities.iter().zip(&member_entropies_nats).map(|(p, s)| p * s).sum();
    Ok(HolevoBreakdown { chi_nats: average_output_entropy_nats - mean, average_output_entropy_nats, member_entropies_nats })
}

/// `S(Φ(Σ p_i ρ_i)) - Σ p_i S(Φ(ρ_i))`.
pub fn ensemble_holevo_value<C: QuantumChannel + ?Sized>(channel: &C, ensemble: &Ensemble) -> Result<f64> {
    Ok(ensemble_holevo_breakdown(channel, ensemble)?.chi_nats)
}

/// Equal-weight ensemble `{e_z e_z* ⊗ ρ0}` over all labels of the extension.
pub fn weyl_capacity_ensemble(channel: &WeylExtendedChannel, rho0: &DensityMatrix) -> Result<Ensemble> {
    if rho0.dim() != channel.base().input_dim() {
        return Err(Error::DimensionMismatch { expected: channel.base().input_dim(), got: rho0.dim() });
    }
    let r = channel.num_labels();
    let states = (0..r).map(|z| channel.register_state(z, rho0)).collect::<Result<Vec<_>>>()?;
    Ensemble::new(vec![1.0 / r as f64; r], states)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub m: usize,
    pub n: usize,
    /// `(l, k, n)` of each tensor factor, `Φ` copies first.
    pub dims: Vec<(usize, usize, usize)>,
    pub chi_ens_nats: f64,
    pub avg_output_entropy_nats: f64,
    /// `ln(k^m k'^n)`.
    pub expected_avg_output_entropy_nats: f64,
    pub per_string_entropy_nats: f64,
    /// Largest spread of member output entropies across strings.
    pub per_string_spread: f64,
    pub smin_estimate_nats: f64,
    /// `|χ_ens - (ln(k^m k'^n) - S_min estimate)|`.
    pub identity_residual: f64,
    /// `|avg output entropy - ln(k^m k'^n)|`.
    pub average_residual: f64,
    /// Heuristic `S_min(A⊗B) ≤ S_min(A) + S_min(B) + 1e-3` at `m + n = 2`;
    /// advisory, since all three values are upper estimates.
    pub subadditivity_advisory: Option<bool>,
}

/// Builds the extension of `Φ^{⊗m} ⊗ Ω^{⊗n}`, feeds it the product Weyl
/// ensemble seeded with the estimated minimizer, and compares both sides of
/// the capacity identity.
pub fn verify_extension_identity(
    phi: &StinespringChannel,
    omega: &StinespringChannel,
    m: usize,
    n: usize,
    restarts: usize,
    seed: u64,
) -> Result<ExtensionReport> {
    let factors: Vec<&StinespringChannel> = std::iter::repeat(phi).take(m).chain(std::iter::repeat(omega).take(n)).collect();
    if !(1..=2).contains(&factors.len()) {
        return Err(Error::Precondition(format!("need m + n ∈ {{1, 2}}, got m = {m}, n = {n}")));
    }
    let base = match factors.as_slice() {
        [a] => (*a).clone(),
        [a, b] => tensor_channels(a, b),
        _ => unreachable!(),
    };
    let moduli: Vec<usize> = factors.iter().map(|f| f.output_dim()).collect();
    let labels: usize = moduli.iter().map(|k| k * k).product();
    let big = base.output_dim() * base.env_dim();
    if big > MAX_EXTENSION_DIM || labels * base.input_dim() > MAX_EXTENSION_DIM {
        return Err(Error::UnsupportedDimension(format!(
            "extension needs dimension {} (isometry range {big}); the limit is {MAX_EXTENSION_DIM}",
            labels * base.input_dim()
        )));
    }
    let estimate = min_output_entropy_estimate(&base, restarts, seed)?;
    let rho0 = estimate.minimizer.projector();
    let ext = WeylExtendedChannel::new(base, moduli.clone())?;
    let ens = weyl_capacity_ensemble(&ext, &rho0)?;
    let hb = ensemble_holevo_breakdown(&ext, &ens)?;
    let ln_dim: f64 = moduli.iter().map(|&k| (k as f64).ln()).sum();
    let (lo, hi) = hb.member_entropies_nats.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let smin = estimate.value.nats();
    let subadditivity_advisory = if factors.len() == 2 {
        let a = min_output_entropy_estimate(factors[0], restarts, derive_seed(seed, 1))?.value.nats();
        let b = min_output_entropy_estimate(factors[1], restarts, derive_seed(seed, 2))?.value.nats();
        Some(smin <= a + b + 1e-3)
    } else {
        None
    };
    Ok(ExtensionReport {
        m,
        n,
        dims: factors.iter().map(|f| f.dims()).collect(),
        chi_ens_nats: hb.chi_nats,
        avg_output_entropy_nats: hb.average_output_entropy_nats,
        expected_avg_output_entropy_nats: ln_dim,
        per_string_entropy_nats: hb.member_entropies_nats[0],
        per_string_spread: hi - lo,
        smin_estimate_nats: smin,
        identity_residual: (hb.chi_nats - (ln_dim - smin)).abs(),
        average_residual: (hb.average_output_entropy_nats - ln_dim).abs(),
        subadditivity_advisory,
    })
}
