//! Entropy functionals, Bell-input bounds and minimum output entropy search.
//!
//! All entropies are in nats.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{bell_state, conjugate_channel, tensor_channels, QuantumChannel, StinespringChannel};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigh, hs_norm, random_unit_vector, ComplexMatrix, ComplexVector, DensityMatrix, Ket, C64};
use crate::rng::substream;

/// Eigenvalues below this are treated as invalid input rather than rounding.
pub const NEGATIVE_EIGENVALUE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntropyValue(f64);

impl EntropyValue {
    pub fn new(nats: f64) -> Result<Self> {
        if !nats.is_finite() || nats < 0.0 {
            return Err(Error::Precondition(format!("entropy must be finite and nonnegative, got {nats}")));
        }
        Ok(Self(nats))
    }

    pub(crate) fn clamped(nats: f64) -> Self {
        Self(nats.max(0.0))
    }

    pub fn nats(self) -> f64 {
        self.0
    }
}

/// `-Σ λ ln λ` over a spectrum, with `0 ln 0 = 0`.
pub fn spectrum_entropy(eigenvalues: &[f64]) -> Result<EntropyValue> {
    let mut s = 0.0;
    for &ev in eigenvalues {
        if ev < -NEGATIVE_EIGENVALUE_TOL {
            return Err(Error::NotPositive(ev));
        }
        if ev > 0.0 {
            s -= ev * ev.ln();
        }
    }
    Ok(EntropyValue::clamped(s))
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<EntropyValue> {
    spectrum_entropy(&rho.eigenvalues())
}

/// `(ln k - S(ρ), k ‖ρ - I/k‖₂²)`; the first never exceeds the second.
pub fn entropy_gap_bound(rho: &DensityMatrix, k: usize) -> Result<(f64, f64)> {
    if rho.dim() != k {
        return Err(Error::DimensionMismatch { expected: k, got: rho.dim() });
    }
    let gap = (k as f64).ln() - von_neumann_entropy(rho)?.nats();
    let mixed = DensityMatrix::maximally_mixed(k)?;
    let dev = hs_norm(&(rho.matrix() - mixed.matrix()));
    Ok((gap, k as f64 * dev * dev))
}

/// `(Φ ⊗ Φ̄)(b_l b_l*)`.
pub fn bell_output(channel: &StinespringChannel) -> Result<DensityMatrix> {
    let product = tensor_channels(channel, &conjugate_channel(channel));
    product.apply_to_ket(&bell_state(channel.input_dim())?)
}

/// Entropy of the Bell output: an upper bound on `S_min(Φ ⊗ Φ̄)`.
pub fn bell_upper_bound_exact(channel: &StinespringChannel) -> Result<EntropyValue> {
    von_neumann_entropy(&bell_output(channel)?)
}

/// Largest entropy of a `d`-dimensional state whose top eigenvalue is at
/// least `p`: `-p ln p - (1-p) ln((1-p)/(d-1))`.
pub fn max_entropy_given_lambda(p: f64, d: usize) -> Result<EntropyValue> {
    if d == 0 {
        return Err(Error::InvalidDimension("d must be positive".into()));
    }
    let floor = 1.0 / d as f64;
    if !(p <= 1.0) || p < floor * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("need 1/d ≤ p ≤ 1, got p = {p}, d = {d}")));
    }
    let p = p.max(floor);
    let head = if p > 0.0 { -p * p.ln() } else { 0.0 };
    let rest = 1.0 - p;
    let tail = if rest > 0.0 && d > 1 { -rest * (rest / (d - 1) as f64).ln() } else { 0.0 };
    Ok(EntropyValue::clamped(head + tail))
}

/// Large-`k` closed form `2 ln k - a ln k / k + 2a / k` for the product
/// channel at `l = a n`. Only asymptotically valid; certification paths use
/// [`max_entropy_given_lambda`] instead.
pub fn lemma_bell_bound(k: usize, a: f64) -> Result<EntropyValue> {
    if k < 2 {
        return Err(Error::Precondition("closed-form Bell bound needs k ≥ 2".into()));
    }
    if !(a >= 0.0) || a > k as f64 {
        return Err(Error::Precondition(format!("need 0 ≤ a ≤ k, got a = {a}")));
    }
    let kf = k as f64;
    let lk = kf.ln();
    EntropyValue::new(2.0 * lk - a * lk / kf + 2.0 * a / kf)
}

/// Tuning for the projected-gradient minimizer.
#[derive(Clone, Copy, Debug)]
pub struct MoeOptions {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub armijo: f64,
}

impl Default for MoeOptions {
    fn default() -> Self {
        Self { max_iterations: 200, gradient_tol: 1e-8, armijo: 1e-4 }
    }
}

#[derive(Clone, Debug)]
pub struct MoeEstimate {
    pub value: EntropyValue,
    pub minimizer: Ket,
    pub restarts: usize,
    pub converged: bool,
}

const LOG_FLOOR: f64 = 1e-300;

fn output_entropy<C: QuantumChannel + ?Sized>(channel: &C, x: &Ket) -> Result<f64> {
    let out = channel.apply_ket_operator(x)?;
    let (ev, _) = hermitian_eigh(&crate::linalg::hermitize(&out))?;
    Ok(spectrum_entropy(&ev)?.nats())
}

/// Riemannian gradient of `x ↦ S(Φ(x x*))` on the unit sphere.
fn sphere_gradient<C: QuantumChannel + ?Sized>(channel: &C, x: &Ket) -> Result<(f64, ComplexVector)> {
    let out = crate::linalg::hermitize(&channel.apply_ket_operator(x)?);
    let (ev, vecs) = hermitian_eigh(&out)?;
    let value = spectrum_entropy(&ev)?.nats();
    // dS/dρ = -(ln ρ + I); the identity part is radial and projects out.
    let weights = ComplexMatrix::from_diagonal(&ComplexVector::from_iterator(
        ev.len(),
        ev.iter().map(|&e| C64::new(e.max(LOG_FLOOR).ln(), 0.0)),
    ));
    let log_rho = &vecs * weights * vecs.adjoint();
    let g = channel.pullback(&log_rho, x)?.scale(-2.0);
    let radial = x.amplitudes().dotc(&g).re;
    Ok((value, g - x.amplitudes().scale(radial)))
}

fn retract(x: &Ket, direction: &ComplexVector, t: f64) -> Result<Ket> {
    Ket::normalized(x.amplitudes() - direction.scale(t))
}

/// One projected-gradient descent with Armijo backtracking.
fn descend<C: QuantumChannel + ?Sized>(
    channel: &C,
    start: Ket,
    opts: &MoeOptions,
    rng: &mut crate::rng::SeededRng,
) -> Result<(f64, Ket, bool)> {
    let mut x = start;
    let mut step: f64 = 1.0;
    let mut perturbed = false;
    let mut converged = false;
    let mut value = output_entropy(channel, &x)?;
    for _ in 0..opts.max_iterations {
        let (v, grad) = sphere_gradient(channel, &x)?;
        value = v;
        let gnorm2 = grad.norm_squared();
        if gnorm2.sqrt() < opts.gradient_tol {
            converged = true;
            break;
        }
        let mut t = (2.0 * step).min(10.0);
        let mut accepted = None;
        while t > 1e-20 {
            let trial = retract(&x, &grad, t)?;
            let tv = output_entropy(channel, &trial)?;
            if tv <= value - opts.armijo * t * gnorm2 {
                accepted = Some((trial, tv));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((next, nv)) => {
                step = t;
                x = next;
                value = nv;
            }
            None if !perturbed => {
                // Degenerate spectrum: nudge off the kink once and retry.
                perturbed = true;
                let noise = random_unit_vector(x.dim(), rng)?;
                x = Ket::normalized(x.amplitudes() + noise.amplitudes().scale(1e-8))?;
                value = output_entropy(channel, &x)?;
                step = 1.0;
            }
            None => break,
        }
    }
    Ok((value, x, converged))
}

fn descend_from_stream<C: QuantumChannel + ?Sized>(
    channel: &C,
    seed: u64,
    restart: usize,
    opts: &MoeOptions,
) -> Result<(f64, Ket, bool)> {
    let mut rng = substream(seed, restart as u64);
    let start = random_unit_vector(channel.input_dim(), &mut rng)?;
    descend(channel, start, opts, &mut rng)
}

/// Best of `restarts` projected-gradient runs from uniform starts. This is an
/// upper bound on the true minimum output entropy.
pub fn min_output_entropy_estimate<C: QuantumChannel + ?Sized>(
    channel: &C,
    restarts: usize,
    seed: u64,
) -> Result<MoeEstimate> {
    min_output_entropy_estimate_with(channel, restarts, seed, &MoeOptions::default())
}

pub fn min_output_entropy_estimate_with<C: QuantumChannel + ?Sized>(
    channel: &C,
    restarts: usize,
    seed: u64,
    opts: &MoeOptions,
) -> Result<MoeEstimate> {
    if restarts == 0 {
        return Err(Error::Precondition("restarts must be at least 1".into()));
    }
    let runs: Vec<(f64, Ket, bool)> = (0..restarts)
        .into_par_iter()
        .map(|r| descend_from_stream(channel, seed, r, opts))
        .collect::<Result<_>>()?;
    let (value, minimizer, converged) = runs
        .into_iter()
        .reduce(|best, cand| if cand.0 < best.0 { cand } else { best })
        .expect("restarts ≥ 1");
    Ok(MoeEstimate { value: EntropyValue::clamped(value), minimizer, restarts, converged })
}

/// Projective coordinates of a pure state on `C^l`, `l ≤ 3`.
fn projective_point(l: usize, params: &[f64]) -> Result<Ket> {
    let amps: Vec<C64> = match l {
        1 => vec![C64::new(1.0, 0.0)],
        2 => {
            let (a, phi) = (params[0], params[1]);
            vec![C64::new(a.cos(), 0.0), C64::from_polar(a.sin(), phi)]
        }
        3 => {
            let (a, b, p1, p2) = (params[0], params[1], params[2], params[3]);
            vec![
                C64::new(a.cos(), 0.0),
                C64::from_polar(a.sin() * b.cos(), p1),
                C64::from_polar(a.sin() * b.sin(), p2),
            ]
        }
        _ => return Err(Error::UnsupportedDimension(format!("oracle supports l ≤ 3, got {l}"))),
    };
    Ket::normalized(ComplexVector::from_vec(amps))
}

fn oracle_axes(l: usize, resolution: usize) -> Vec<Vec<f64>> {
    let r = resolution.max(2);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let tau = std::f64::consts::TAU;
    let polar: Vec<f64> = (0..r).map(|i| half_pi * i as f64 / (r - 1) as f64).collect();
    let phase: Vec<f64> = (0..r).map(|i| tau * i as f64 / r as f64).collect();
    match l {
        2 => vec![polar, phase],
        3 => vec![polar.clone(), polar, phase.clone(), phase],
        _ => vec![],
    }
}

/// Brute-force reference: exhaustive grid over projective space followed by
/// compass-search refinement of the best grid cells. Returns the value and
/// the state attaining it.
pub fn min_output_entropy_oracle_with_minimizer<C: QuantumChannel + ?Sized>(
    channel: &C,
    grid_resolution: usize,
) -> Result<(EntropyValue, Ket)> {
    let l = channel.input_dim();
    if l > 3 {
        return Err(Error::UnsupportedDimension(format!("oracle supports l ≤ 3, got {l}")));
    }
    if l == 1 {
        let x = projective_point(1, &[])?;
        return Ok((EntropyValue::clamped(output_entropy(channel, &x)?), x));
    }
    let axes = oracle_axes(l, grid_resolution);
    let total: usize = axes.iter().map(Vec::len).product();
    let eval = |params: &[f64]| -> Result<f64> { output_entropy(channel, &projective_point(l, params)?) };
    let mut scored: Vec<(f64, Vec<f64>)> = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let params: Vec<f64> = axes
                .iter()
                .map(|axis| {
                    let v = axis[idx % axis.len()];
                    idx /= axis.len();
                    v
                })
                .collect();
            eval(&params).map(|v| (v, params))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let spacing = std::f64::consts::FRAC_PI_2 / (grid_resolution.max(2) - 1) as f64;
    let refined: Vec<(f64, Vec<f64>)> = scored
        .into_iter()
        .take(4)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(v, p)| compass_search(&eval, v, p, spacing))
        .collect::<Result<_>>()?;
    let (value, params) = refined.into_iter().reduce(|a, b| if b.0 < a.0 { b } else { a }).expect("non-empty grid");
    Ok((EntropyValue::clamped(value), projective_point(l, &params)?))
}

pub fn min_output_entropy_oracle<C: QuantumChannel + ?Sized>(channel: &C, grid_resolution: usize) -> Result<EntropyValue> {
    Ok(min_output_entropy_oracle_with_minimizer(channel, grid_resolution)?.0)
}

fn compass_search(
    eval: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    mut value: f64,
    mut params: Vec<f64>,
    mut step: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut evaluations = 0usize;
    while step > 1e-12 && evaluations < 200_000 {
        let mut improved = false;
        for axis in 0..params.len() {
            for sign in [1.0, -1.0] {
                let mut trial = params.clone();
                trial[axis] += sign * step;
                let v = eval(&trial)?;
                evaluations += 1;
                if v < value {
                    value = v;
                    params = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((value, params))
}
