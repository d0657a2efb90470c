//! The deviation function `f(x) = ‖XX* - Tr[XX*] I/k‖₂`, its moments, and
//! Monte Carlo checks of the concentration bounds built on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigvals, hs_norm, op_norm, random_unit_vector, vector_to_matrix, ComplexMatrix, ComplexVector, Ket, C64};
use crate::rng::substream;

/// Lévy constants of the unit sphere with the geodesic metric.
pub const LEVY_C1: f64 = 0.626_657_068_657_750_1; // sqrt(pi / 8)
pub const LEVY_C2: f64 = 0.5;

fn check_dims(len: usize, k: usize, n: usize) -> Result<()> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidDimension("k and n must be positive".into()));
    }
    if len != k * n {
        return Err(Error::DimensionMismatch { expected: k * n, got: len });
    }
    Ok(())
}

fn marginal(x: &ComplexVector, k: usize, n: usize) -> Result<ComplexMatrix> {
    let m = vector_to_matrix(x, k, n)?;
    Ok(&m * m.adjoint())
}

fn deviation_of_marginal(xx: &ComplexMatrix, k: usize) -> f64 {
    let tr = xx.trace().re;
    let mut d = xx.clone();
    for i in 0..k {
        d[(i, i)] -= C64::new(tr / k as f64, 0.0);
    }
    hs_norm(&d)
}

pub fn f_value(x: &Ket, k: usize, n: usize) -> Result<f64> {
    check_dims(x.dim(), k, n)?;
    Ok(deviation_of_marginal(&marginal(x.amplitudes(), k, n)?, k))
}

/// `E f² = (k+n)/(kn+1) - 1/k` for uniform `x` on the sphere of `C^k ⊗ C^n`.
pub fn exact_second_moment(k: usize, n: usize) -> Result<f64> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidDimension("k and n must be positive".into()));
    }
    let (kf, nf) = (k as f64, n as f64);
    Ok(((kf + nf) / (kf * nf + 1.0) - 1.0 / kf).max(0.0))
}

/// `h(k, α, ε) = 2ε(1 + 2α + ε)/k`.
pub fn h_bound(k: usize, alpha: f64, epsilon: f64) -> Result<f64> {
    if k == 0 || !(alpha >= 0.0) || !(epsilon >= 0.0) {
        return Err(Error::Precondition("h needs k ≥ 1 and α, ε ≥ 0".into()));
    }
    Ok(2.0 * epsilon * (1.0 + 2.0 * alpha + epsilon) / k as f64)
}

/// `√(π/8) exp(-ε²(n - 1/k))`: Lévy's lemma on `S^{2kn-1}` at distance `ε/√k`.
pub fn deviation_bound_rhs(k: usize, n: usize, epsilon: f64) -> Result<f64> {
    if k == 0 || n == 0 || !(epsilon >= 0.0) {
        return Err(Error::Precondition("deviation bound needs k, n ≥ 1 and ε ≥ 0".into()));
    }
    let dist2 = epsilon * epsilon / k as f64;
    let r = (2 * k * n) as f64 - 2.0;
    Ok(LEVY_C1 * (-LEVY_C2 * dist2 * r).exp())
}

/// `α` with `k² = α² n`.
pub fn alpha_for(k: usize, n: usize) -> f64 {
    k as f64 / (n as f64).sqrt()
}

/// `(|f(x) - f(y)|, (‖X‖∞ + ‖Y‖∞)‖X - Y‖₂)`.
pub fn lipschitz_bound_check(x: &Ket, y: &Ket, k: usize, n: usize) -> Result<(f64, f64)> {
    check_dims(x.dim(), k, n)?;
    check_dims(y.dim(), k, n)?;
    let xm = vector_to_matrix(x.amplitudes(), k, n)?;
    let ym = vector_to_matrix(y.amplitudes(), k, n)?;
    let lhs = (f_value(x, k, n)? - f_value(y, k, n)?).abs();
    let rhs = (op_norm(&xm) + op_norm(&ym)) * hs_norm(&(&xm - &ym));
    Ok((lhs, rhs))
}

fn sample_f(k: usize, n: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, t as u64);
            let x = random_unit_vector(k * n, &mut rng)?;
            Ok(deviation_of_marginal(&marginal(x.amplitudes(), k, n)?, k))
        })
        .collect()
}

/// Lower median of an unsorted sample.
pub fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentChecks {
    pub mean_within_bound: bool,
    pub median_within_bound: bool,
    pub second_moment_matches: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub k: usize,
    pub n: usize,
    pub trials: usize,
    pub mean_f: f64,
    pub stderr_mean: f64,
    pub median_f: f64,
    /// Order statistic that lies below the true median with ~93% confidence.
    pub median_lower_confidence: f64,
    pub mean_f2: f64,
    pub stderr_f2: f64,
    pub exact_f2: f64,
    pub bound_mean: f64,
    pub bound_median: f64,
    pub checks: MomentChecks,
}

/// Flat row with the fixed CSV column order.
#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub k: usize,
    pub n: usize,
    pub trials: usize,
    pub mean_f: f64,
    pub stderr_mean: f64,
    pub median_f: f64,
    pub mean_f2: f64,
    pub stderr_f2: f64,
    pub exact_f2: f64,
    pub bound_mean: f64,
    pub bound_median: f64,
}

impl MomentReport {
    pub fn row(&self) -> MomentRow {
        MomentRow {
            k: self.k,
            n: self.n,
            trials: self.trials,
            mean_f: self.mean_f,
            stderr_mean: self.stderr_mean,
            median_f: self.median_f,
            mean_f2: self.mean_f2,
            stderr_f2: self.stderr_f2,
            exact_f2: self.exact_f2,
            bound_mean: self.bound_mean,
            bound_median: self.bound_median,
        }
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.mean_within_bound && self.checks.median_within_bound && self.checks.second_moment_matches
    }
}

pub fn estimate_moments(k: usize, n: usize, trials: usize, seed: u64) -> Result<MomentReport> {
    if trials < 100 {
        return Err(Error::Precondition(format!("need at least 100 trials, got {trials}")));
    }
    check_dims(k * n, k, n)?;
    let mut fs = sample_f(k, n, trials, seed)?;
    let f2: Vec<f64> = fs.iter().map(|v| v * v).collect();
    let (mean_f, stderr_mean) = mean_and_stderr(&fs);
    let (mean_f2, stderr_f2) = mean_and_stderr(&f2);
    fs.sort_by(f64::total_cmp);
    let median_f = fs[(trials - 1) / 2];
    let rank = ((trials as f64) / 2.0 - 1.5 * (trials as f64).sqrt()).floor().max(0.0) as usize;
    let median_lower_confidence = fs[rank.min(trials - 1)];
    let exact_f2 = exact_second_moment(k, n)?;
    let bound_mean = 1.0 / (n as f64).sqrt();
    let bound_median = bound_mean * (1.0 + 3.0 / (k as f64).sqrt());
    let checks = MomentChecks {
        mean_within_bound: mean_f <= bound_mean + 2.0 * stderr_mean,
        median_within_bound: median_lower_confidence <= bound_median,
        second_moment_matches: (mean_f2 - exact_f2).abs() <= 3.0 * stderr_f2,
    };
    Ok(MomentReport {
        k,
        n,
        trials,
        mean_f,
        stderr_mean,
        median_f,
        median_lower_confidence,
        mean_f2,
        stderr_f2,
        exact_f2,
        bound_mean,
        bound_median,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub trials: usize,
    pub sample_median: f64,
    pub epsilon_grid: Vec<f64>,
    pub threshold_used: Vec<f64>,
    pub empirical_tail: Vec<f64>,
    pub analytic_bound: Vec<f64>,
    /// `3 √(p(1-p)/trials)` with `p` the analytic bound capped at 1.
    pub slack: Vec<f64>,
    /// Frequency within bound plus slack; always true where the bound exceeds 1.
    pub within_bound: Vec<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailRow {
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub trials: usize,
    pub epsilon: f64,
    pub threshold: f64,
    pub empirical_tail: f64,
    pub analytic_bound: f64,
    pub slack: f64,
    pub within_bound: bool,
}

impl TailReport {
    pub fn rows(&self) -> Vec<TailRow> {
        (0..self.epsilon_grid.len())
            .map(|i| TailRow {
                k: self.k,
                n: self.n,
                alpha: self.alpha,
                trials: self.trials,
                epsilon: self.epsilon_grid[i],
                threshold: self.threshold_used[i],
                empirical_tail: self.empirical_tail[i],
                analytic_bound: self.analytic_bound[i],
                slack: self.slack[i],
                within_bound: self.within_bound[i],
            })
            .collect()
    }

    pub fn all_within_bound(&self) -> bool {
        self.within_bound.iter().all(|&b| b)
    }
}

pub fn empirical_tail(k: usize, n: usize, epsilon_grid: &[f64], trials: usize, seed: u64) -> Result<TailReport> {
    if trials < 1000 {
        return Err(Error::Precondition(format!("need at least 1000 trials, got {trials}")));
    }
    check_dims(k * n, k, n)?;
    if epsilon_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Precondition("ε grid must be positive".into()));
    }
    let fs = sample_f(k, n, trials, seed)?;
    let sample_median = lower_median(&fs);
    let alpha = alpha_for(k, n);
    let mut report = TailReport {
        k,
        n,
        alpha,
        trials,
        sample_median,
        epsilon_grid: epsilon_grid.to_vec(),
        threshold_used: vec![],
        empirical_tail: vec![],
        analytic_bound: vec![],
        slack: vec![],
        within_bound: vec![],
    };
    for &eps in epsilon_grid {
        let threshold = sample_median + h_bound(k, alpha, eps)?;
        let freq = fs.iter().filter(|&&v| v > threshold).count() as f64 / trials as f64;
        let bound = deviation_bound_rhs(k, n, eps)?;
        let p = bound.min(1.0);
        let slack = 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
        report.threshold_used.push(threshold);
        report.empirical_tail.push(freq);
        report.analytic_bound.push(bound);
        report.slack.push(slack);
        report.within_bound.push(bound > 1.0 || freq <= bound + slack);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpnormReport {
    pub k: usize,
    pub n: usize,
    pub trials: usize,
    pub bound: f64,
    pub vacuous: bool,
    pub sample_median: f64,
    pub conditioned_samples: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    pub max_opnorm_conditioned: f64,
}

/// `1/√k + 2√(k/n)`, the operator-norm bound on `X` below the median of `f`.
pub fn opnorm_bound(k: usize, n: usize) -> f64 {
    1.0 / (k as f64).sqrt() + 2.0 * (k as f64 / n as f64).sqrt()
}

pub fn opnorm_bound_check(k: usize, n: usize, trials: usize, seed: u64) -> Result<OpnormReport> {
    if trials < 1000 {
        return Err(Error::Precondition(format!("need at least 1000 trials, got {trials}")));
    }
    check_dims(k * n, k, n)?;
    let samples: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, t as u64);
            let x = random_unit_vector(k * n, &mut rng)?;
            let xx = marginal(x.amplitudes(), k, n)?;
            let top = hermitian_eigvals(&crate::linalg::hermitize(&xx))?[0].max(0.0);
            Ok((deviation_of_marginal(&xx, k), top.sqrt()))
        })
        .collect::<Result<_>>()?;
    let fs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let sample_median = lower_median(&fs);
    let bound = opnorm_bound(k, n);
    let conditioned: Vec<f64> = samples.iter().filter(|s| s.0 <= sample_median).map(|s| s.1).collect();
    let violations = conditioned.iter().filter(|&&v| v > bound).count();
    Ok(OpnormReport {
        k,
        n,
        trials,
        bound,
        vacuous: bound >= 1.0,
        sample_median,
        conditioned_samples: conditioned.len(),
        violations,
        violation_fraction: violations as f64 / conditioned.len().max(1) as f64,
        max_opnorm_conditioned: conditioned.iter().cloned().fold(0.0, f64::max),
    })
}
