//! Certified bounds on minimum output entropy and the violation gap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{random_subspace_channel, StinespringChannel};
use crate::concentration::{alpha_for, h_bound};
use crate::entropy::{bell_upper_bound_exact, min_output_entropy_estimate, EntropyValue};
use crate::error::{Error, Result};
use crate::nets::{build_theta_net, correction_factor, net_max_f, NetConstruction, NetOptions, ThetaNet};
use crate::rng::{derive_seed, substream};

/// A gap must exceed this to count as a certified violation.
pub const CERTIFICATION_MARGIN: f64 = 1e-9;
pub const MAX_EXISTENCE_ATTEMPTS: usize = 100;

fn check_net(channel: &StinespringChannel, theta: f64, net: &ThetaNet) -> Result<()> {
    if net.l() != channel.input_dim() {
        return Err(Error::DimensionMismatch { expected: channel.input_dim(), got: net.l() });
    }
    if net.theta() > theta * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("net has θ = {} but {theta} was requested", net.theta())));
    }
    if net.construction() == NetConstruction::Custom {
        return Err(Error::Precondition("certification needs a constructed net".into()));
    }
    correction_factor(theta)?;
    Ok(())
}

/// `(max(0, ln k - k (c_θ M)²), M)` with `M` the net maximum of `f`.
pub fn certified_smin_lower_with_max(channel: &StinespringChannel, theta: f64, net: &ThetaNet) -> Result<(EntropyValue, f64)> {
    check_net(channel, theta, net)?;
    let k = channel.output_dim() as f64;
    let (m, _) = net_max_f(channel, net)?;
    let cm = correction_factor(theta)? * m;
    Ok((EntropyValue::clamped(k.ln() - k * cm * cm), m))
}

pub fn certified_smin_lower(channel: &StinespringChannel, theta: f64, net: &ThetaNet) -> Result<EntropyValue> {
    Ok(certified_smin_lower_with_max(channel, theta, net)?.0)
}

/// Exact Bell-input entropy of `Φ ⊗ Φ̄`.
pub fn certified_product_upper(channel: &StinespringChannel) -> Result<EntropyValue> {
    bell_upper_bound_exact(channel)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub l: usize,
    pub k: usize,
    pub n: usize,
    pub theta: f64,
    pub seed: u64,
    pub net_size: usize,
    pub net_max_f: f64,
    pub c_theta: f64,
    pub lower_nats: f64,
    pub bell_upper_nats: f64,
    pub gap_nats: f64,
    pub certified: bool,
    pub heuristic_smin_nats: f64,
    pub heuristic_converged: bool,
}

/// Flat row with the fixed CSV column order.
#[derive(Clone, Debug, Serialize)]
pub struct GapRow {
    pub k: usize,
    pub n: usize,
    pub l: usize,
    pub theta: f64,
    pub seed: u64,
    pub net_size: usize,
    pub net_max_f: f64,
    pub c_theta: f64,
    pub lower_nats: f64,
    pub bell_upper_nats: f64,
    pub gap_nats: f64,
    pub certified: bool,
    pub heuristic_smin_nats: f64,
}

impl GapReport {
    pub fn row(&self) -> GapRow {
        GapRow {
            k: self.k,
            n: self.n,
            l: self.l,
            theta: self.theta,
            seed: self.seed,
            net_size: self.net_size,
            net_max_f: self.net_max_f,
            c_theta: self.c_theta,
            lower_nats: self.lower_nats,
            bell_upper_nats: self.bell_upper_nats,
            gap_nats: self.gap_nats,
            certified: self.certified,
            heuristic_smin_nats: self.heuristic_smin_nats,
        }
    }

    /// Lower bound below the heuristic minimum and a consistent verdict.
    pub fn invariants_hold(&self) -> bool {
        self.lower_nats <= self.heuristic_smin_nats + 1e-6
            && self.bell_upper_nats >= 0.0
            && (!self.certified || self.gap_nats > 0.0)
    }
}

/// `2L - U` for the pair `Φ, Φ̄`, with a multi-start estimate of `S_min(Φ)`
/// for context.
pub fn violation_gap(channel: &StinespringChannel, theta: f64, net: &ThetaNet, restarts: usize, seed: u64) -> Result<GapReport> {
    let (lower, m) = certified_smin_lower_with_max(channel, theta, net)?;
    let upper = certified_product_upper(channel)?;
    let heuristic = min_output_entropy_estimate(channel, restarts, seed)?;
    let gap = 2.0 * lower.nats() - upper.nats();
    let (l, k, n) = channel.dims();
    Ok(GapReport {
        l,
        k,
        n,
        theta,
        seed,
        net_size: net.len(),
        net_max_f: m,
        c_theta: correction_factor(theta)?,
        lower_nats: lower.nats(),
        bell_upper_nats: upper.nats(),
        gap_nats: gap,
        certified: gap > CERTIFICATION_MARGIN,
        heuristic_smin_nats: heuristic.value.nats(),
        heuristic_converged: heuristic.converged,
    })
}

/// `ε²/(4 ln(1 + 2/θ)) - l/n`; nonnegative iff the subspace condition holds.
pub fn exist_subspace_slack(l: usize, n: usize, theta: f64, epsilon: f64) -> Result<f64> {
    correction_factor(theta)?;
    if l == 0 || n == 0 {
        return Err(Error::InvalidDimension("l and n must be positive".into()));
    }
    Ok(epsilon * epsilon / (4.0 * (1.0 + 2.0 / theta).ln()) - l as f64 / n as f64)
}

/// `l/n ≤ ε²/(4 ln(1 + 2/θ))`, accepting equality up to relative rounding.
pub fn exist_subspace_condition(l: usize, n: usize, theta: f64, epsilon: f64) -> Result<bool> {
    let slack = exist_subspace_slack(l, n, theta, epsilon)?;
    Ok(slack >= -1e-12 * (l as f64 / n as f64))
}

/// `ε = 2√(a ln(1 + 2/θ))`, the choice that makes `l = an` tight.
pub fn epsilon_for_ratio(a: f64, theta: f64) -> f64 {
    2.0 * (a * (1.0 + 2.0 / theta).ln()).sqrt()
}

/// `(c_θ (h(k, α, ε) + 4α/k), C)` with `C = k · value`.
pub fn thebound_rhs(k: usize, alpha: f64, theta: f64, epsilon: f64) -> Result<(f64, f64)> {
    let c = correction_factor(theta)?;
    let v = c * (h_bound(k, alpha, epsilon)? + 4.0 * alpha / k as f64);
    Ok((v, k as f64 * v))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalBound {
    pub l: usize,
    pub k: usize,
    pub n: usize,
    pub terms: [f64; 4],
    pub value: f64,
    /// The value exceeds `√((k-1)/k)`, the largest value `f` can take.
    pub vacuous: bool,
}

/// `15/k √(l/n) + 30 √l/n + 36 l/(kn) + 10/√n`.
pub fn typical_bound_rhs(l: usize, k: usize, n: usize) -> Result<TypicalBound> {
    if l < 2 || k < 2 || n < 2 {
        return Err(Error::Precondition(format!("need l, k, n ≥ 2, got ({l}, {k}, {n})")));
    }
    let (lf, kf, nf) = (l as f64, k as f64, n as f64);
    let terms = [15.0 / kf * (lf / nf).sqrt(), 30.0 * lf.sqrt() / nf, 36.0 * lf / (kf * nf), 10.0 / nf.sqrt()];
    let value = terms.iter().sum();
    Ok(TypicalBound { l, k, n, terms, value, vacuous: value > ((kf - 1.0) / kf).sqrt() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", content = "beta", rename_all = "kebab-case")]
pub enum BetaRegime {
    /// `β → 0`, so `α = 0` in `C`.
    Zero,
    /// `k² = βn`, so `α = √β`.
    Value(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverResult {
    pub a: f64,
    pub theta: f64,
    pub regime: BetaRegime,
    pub epsilon: f64,
    pub alpha: f64,
    pub c: f64,
    /// `None` when no finite `k` satisfies the inequality.
    pub ln_k_star: Option<f64>,
}

/// `a ln k - 2a > 2C²`.
pub fn crossover_inequality(a: f64, c: f64, ln_k: f64) -> bool {
    a * ln_k - 2.0 * a > 2.0 * c * c
}

/// Smallest `ln k` with `a ln k - 2a > 2C²`, by bisection on `ln k`.
pub fn analytic_crossover(a: f64, theta: f64, regime: BetaRegime) -> Result<CrossoverResult> {
    correction_factor(theta)?;
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::Precondition(format!("a must be finite and nonnegative, got {a}")));
    }
    let alpha = match regime {
        BetaRegime::Zero => 0.0,
        BetaRegime::Value(beta) if beta > 0.0 && beta.is_finite() => beta.sqrt(),
        BetaRegime::Value(beta) => return Err(Error::Precondition(format!("β must be positive, got {beta}"))),
    };
    let epsilon = epsilon_for_ratio(a, theta);
    // C does not depend on k here, since α and ε are fixed by (a, θ, β).
    let c = correction_factor(theta)? * (2.0 * epsilon * (1.0 + 2.0 * alpha + epsilon) + 4.0 * alpha);
    let holds = |x: f64| crossover_inequality(a, c, x);
    let mut result = CrossoverResult { a, theta, regime, epsilon, alpha, c, ln_k_star: None };
    if a == 0.0 {
        return Ok(result);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while !holds(hi) {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e300 {
            return Ok(result);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    result.ln_k_star = Some(hi);
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub ks: Vec<usize>,
    pub ns: Vec<usize>,
    pub ls: Vec<usize>,
    pub seeds: Vec<u64>,
    pub theta: f64,
    pub restarts: usize,
    pub phase_quotient: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanError {
    pub k: usize,
    pub n: usize,
    pub l: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub rows: Vec<GapReport>,
    pub errors: Vec<ScanError>,
}

fn dims_tag(l: usize, k: usize, n: usize) -> u64 {
    ((l as u64) << 42) ^ ((k as u64) << 21) ^ n as u64
}

/// Channel drawn for `(l, k, n)` at `seed`; independent of the rest of a grid.
pub fn scan_channel(l: usize, k: usize, n: usize, seed: u64) -> Result<StinespringChannel> {
    let mut rng = substream(derive_seed(seed, dims_tag(l, k, n)), 0);
    random_subspace_channel(l, k, n, &mut rng)
}

/// Gap report for every `(k, n, l, seed)` in grid order. Failures are
/// recorded per row and do not stop the scan.
pub fn gap_scan(config: &ScanConfig) -> Result<ScanResult> {
    correction_factor(config.theta)?;
    let mut cells = Vec::new();
    for &k in &config.ks {
        for &n in &config.ns {
            for &l in &config.ls {
                for &seed in &config.seeds {
                    cells.push((k, n, l, seed));
                }
            }
        }
    }
    let opts = NetOptions { phase_quotient: config.phase_quotient, ..NetOptions::default() };
    let mut nets = std::collections::BTreeMap::new();
    for &(_, _, l, _) in &cells {
        nets.entry(l).or_insert_with(|| build_theta_net(l, config.theta, &opts, 0).map_err(|e| e.to_string()));
    }
    let outcomes: Vec<std::result::Result<GapReport, ScanError>> = cells
        .par_iter()
        .map(|&(k, n, l, seed)| {
            let row = || -> Result<GapReport> {
                let net = nets[&l].as_ref().map_err(|e| Error::ConstructionFailure(e.clone()))?;
                let channel = scan_channel(l, k, n, seed)?;
                violation_gap(&channel, config.theta, net, config.restarts, derive_seed(seed, 0x5eed))
            };
            row().map_err(|e| ScanError { k, n, l, seed, message: e.to_string() })
        })
        .collect();
    let mut result = ScanResult::default();
    for o in outcomes {
        match o {
            Ok(r) => result.rows.push(r),
            Err(e) => result.errors.push(e),
        }
    }
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub l: usize,
    pub k: usize,
    pub n: usize,
    pub theta: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub threshold: f64,
    pub attempts: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub first_success: Option<usize>,
    /// `c_θ M` for each attempt.
    pub certified_max: Vec<f64>,
}

/// Samples up to `attempts` channels and counts those whose certified
/// full-sphere maximum `c_θ M` stays below `thebound_rhs` with `α = k/√n`.
pub fn sample_good_subspace(
    l: usize,
    k: usize,
    n: usize,
    theta: f64,
    epsilon: f64,
    attempts: usize,
    net: &ThetaNet,
    seed: u64,
) -> Result<ExistenceReport> {
    if attempts == 0 || attempts > MAX_EXISTENCE_ATTEMPTS {
        return Err(Error::Precondition(format!("attempts must be in 1..={MAX_EXISTENCE_ATTEMPTS}")));
    }
    let alpha = alpha_for(k, n);
    let (threshold, _) = thebound_rhs(k, alpha, theta, epsilon)?;
    let c = correction_factor(theta)?;
    let certified_max: Vec<f64> = (0..attempts)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let ch = random_subspace_channel(l, k, n, &mut rng)?;
            check_net(&ch, theta, net)?;
            Ok(c * net_max_f(&ch, net)?.0)
        })
        .collect::<Result<_>>()?;
    let good: Vec<usize> = (0..attempts).filter(|&i| certified_max[i] <= threshold).collect();
    Ok(ExistenceReport {
        l,
        k,
        n,
        theta,
        epsilon,
        alpha,
        threshold,
        attempts,
        successes: good.len(),
        success_rate: good.len() as f64 / attempts as f64,
        first_success: good.first().copied(),
        certified_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::min_output_entropy_oracle;
    use crate::nets::grid_net_default;

    #[test]
    fn closed_forms() {
        let (v, c) = thebound_rhs(10, 1.0, 0.25, 0.5).unwrap();
        assert!((v - 16.0 / 7.0 * 0.75).abs() < 1e-4 && (c - 10.0 * v).abs() < 1e-12);
        assert!(thebound_rhs(10, 0.0, 0.25, 0.0).unwrap().0 == 0.0);
        let (v20, _) = thebound_rhs(20, 1.0, 0.25, 0.5).unwrap();
        assert!((2.0 * v20 - v).abs() < 1e-15);

        let t = typical_bound_rhs(4, 4, 16).unwrap();
        assert!((t.value - 10.375).abs() < 1e-12 && t.vacuous);
        // 0.106066 + 0.004243 + 0.0036 + 0.1
        let t = typical_bound_rhs(2, 2, 10_000).unwrap();
        assert!((t.value - 0.213909).abs() < 1e-6 && !t.vacuous);
        assert!(typical_bound_rhs(2, 2, 1 << 40).unwrap().value < 1e-4);
        assert!(typical_bound_rhs(1, 2, 2).is_err());
    }

    #[test]
    fn subspace_condition() {
        for &a in &[0.1, 0.5, 1.0, 2.0] {
            let eps = epsilon_for_ratio(a, 0.25);
            let n = 1000;
            let l = (a * n as f64) as usize;
            assert!(exist_subspace_slack(l, n, 0.25, eps).unwrap().abs() < 1e-12);
            assert!(exist_subspace_condition(l, n, 0.25, eps).unwrap());
        }
        assert!(exist_subspace_condition(11, 100, 0.25, 1.0).unwrap());
        assert!(!exist_subspace_condition(12, 100, 0.25, 1.0).unwrap());
        assert!(!exist_subspace_condition(1, 100, 0.25, 1e-6).unwrap());
    }

    #[test]
    fn crossover_values() {
        let r = analytic_crossover(1.0, 0.25, BetaRegime::Zero).unwrap();
        assert!((r.epsilon - 2.9646).abs() < 1e-4);
        assert!((r.c - 53.73).abs() < 0.01);
        let lk = r.ln_k_star.unwrap();
        assert!((lk / 5776.0 - 1.0).abs() < 0.01);
        assert!(crossover_inequality(1.0, r.c, lk));
        assert!(!crossover_inequality(1.0, r.c, lk - 2f64.ln()));
        assert!(analytic_crossover(0.0, 0.25, BetaRegime::Zero).unwrap().ln_k_star.is_none());
        let tiny = analytic_crossover(1e-9, 0.25, BetaRegime::Value(1.0)).unwrap();
        assert!(tiny.ln_k_star.unwrap() > 1e9);
        assert!(analytic_crossover(1.0, 0.25, BetaRegime::Value(-1.0)).is_err());
    }

    #[test]
    fn crossover_shift_scales_with_c_squared() {
        let a = 0.7;
        let c: f64 = 3.0;
        let base = 2.0 + 2.0 * c * c / a;
        let doubled = 2.0 + 2.0 * (2.0 * c).powi(2) / a;
        assert!((doubled - 2.0 - 4.0 * (base - 2.0)).abs() < 1e-9);
        let with_beta = analytic_crossover(a, 0.25, BetaRegime::Value(0.5)).unwrap();
        let without = analytic_crossover(a, 0.25, BetaRegime::Zero).unwrap();
        assert!(with_beta.c > without.c && with_beta.ln_k_star > without.ln_k_star);
    }

    #[test]
    fn lower_bound_examples() {
        let net = grid_net_default(2, 0.25).unwrap();
        let constant = StinespringChannel::constant(2, 2).unwrap();
        assert_eq!(certified_smin_lower(&constant, 0.25, &net).unwrap().nats(), 2f64.ln());
        let id = StinespringChannel::identity(2).unwrap();
        assert_eq!(certified_smin_lower(&id, 0.25, &net).unwrap().nats(), 0.0);
        let custom = ThetaNet::from_points(2, 0.25, net.points().to_vec(), false).unwrap();
        assert!(certified_smin_lower(&id, 0.25, &custom).is_err());
        let net1 = grid_net_default(1, 0.25).unwrap();
        assert!(matches!(certified_smin_lower(&id, 0.25, &net1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sandwich_on_random_channels() {
        let net = grid_net_default(2, 0.25).unwrap();
        for seed in 0..5 {
            let ch = scan_channel(2, 2, 2, seed).unwrap();
            let lower = certified_smin_lower(&ch, 0.25, &net).unwrap().nats();
            let oracle = min_output_entropy_oracle(&ch, 32).unwrap().nats();
            assert!(lower <= oracle + 1e-6);
            let upper = certified_product_upper(&ch).unwrap().nats();
            assert!(upper <= 2.0 * 2f64.ln() + 1e-9);
        }
    }

    #[test]
    fn gap_report_examples() {
        let net = grid_net_default(2, 0.25).unwrap();
        let constant = StinespringChannel::constant(2, 2).unwrap();
        let r = violation_gap(&constant, 0.25, &net, 2, 0).unwrap();
        assert!((r.gap_nats - (2.0 * 2f64.ln() - r.bell_upper_nats)).abs() < 1e-12);
        assert!(!r.certified && r.invariants_hold());
        let id = StinespringChannel::identity(2).unwrap();
        let r = violation_gap(&id, 0.25, &net, 2, 0).unwrap();
        assert_eq!(r.lower_nats, 0.0);
        assert!((r.gap_nats + r.bell_upper_nats).abs() < 1e-15 && !r.certified);
    }

    #[test]
    fn scan_shape_and_determinism() {
        let cfg = ScanConfig { ks: vec![2], ns: vec![2, 4], ls: vec![2], seeds: vec![1, 2], theta: 0.25, restarts: 3, phase_quotient: false };
        let a = gap_scan(&cfg).unwrap();
        assert_eq!(a.rows.len(), 4);
        assert!(a.errors.is_empty());
        assert!(a.rows.iter().all(|r| r.invariants_hold() && !r.certified));
        assert_eq!(a, gap_scan(&cfg).unwrap());
        let single = ScanConfig { ns: vec![4], seeds: vec![2], ..cfg.clone() };
        assert_eq!(gap_scan(&single).unwrap().rows[0], a.rows[3]);

        let empty = ScanConfig { ks: vec![], ..cfg.clone() };
        assert!(gap_scan(&empty).unwrap().rows.is_empty());
        let bad = ScanConfig { ls: vec![9], ..cfg };
        let r = gap_scan(&bad).unwrap();
        assert!(r.rows.is_empty() && r.errors.len() == 4);
    }

    #[test]
    fn existence_sampling() {
        let net = grid_net_default(1, 0.25).unwrap();
        let r = sample_good_subspace(1, 2, 50, 0.25, 0.5, 10, &net, 3).unwrap();
        assert_eq!(r.attempts, 10);
        assert_eq!(r.certified_max.len(), 10);
        assert!((0.0..=1.0).contains(&r.success_rate));
        assert!(sample_good_subspace(1, 2, 50, 0.25, 0.5, 101, &net, 3).is_err());
    }
}
