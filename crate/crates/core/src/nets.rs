//! θ-nets on the unit sphere of `C^l` in the chord metric, and the
//! net-to-sphere correction factor.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channels::StinespringChannel;
use crate::concentration::f_value;
use crate::error::{Error, Result};
use crate::linalg::{random_unit_vector, ComplexVector, Ket, C64};
use crate::rng::{derive_seed, substream, SeededRng};

pub const MAX_THETA: f64 = 0.25;
/// Hard cap on stored points, independent of the cardinality bound.
pub const MAX_NET_POINTS: usize = 5_000_000;
pub const MIN_COVERING_SAMPLES: usize = 10_000;

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= MAX_THETA) {
        return Err(Error::Precondition(format!("θ must lie in (0, 1/4], got {theta}")));
    }
    Ok(())
}

/// `⌈(1 + 2/θ)^{2l}⌉`, saturating at `u64::MAX`.
pub fn net_cardinality_bound(l: usize, theta: f64) -> Result<u64> {
    if !(theta > 0.0) || l == 0 {
        return Err(Error::Precondition("need l ≥ 1 and θ > 0".into()));
    }
    let v = (1.0 + 2.0 / theta).powf(2.0 * l as f64);
    // Shave rounding noise so exact integer powers are not bumped up.
    let r = v.round();
    let c = if (v - r).abs() <= 1e-9 * v { r } else { v.ceil() };
    Ok(if c >= u64::MAX as f64 { u64::MAX } else { c as u64 })
}

/// `c_θ = 1/(1 - θ² - 2θ)`.
pub fn correction_factor(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(1.0 / (1.0 - theta * theta - 2.0 * theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetConstruction {
    DeterministicGrid,
    GreedyVerified,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringCertificate {
    /// `analytic`, `monte-carlo` or `unverified`.
    pub method: String,
    /// Proven covering radius for grid nets.
    pub analytic_radius: Option<f64>,
    pub samples: Option<usize>,
    pub max_observed_gap: Option<f64>,
    /// Distances are taken modulo a global phase.
    pub phase_quotient: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaNet {
    l: usize,
    theta: f64,
    points: Vec<Ket>,
    construction: NetConstruction,
    certificate: CoveringCertificate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetMethod {
    DeterministicGrid,
    GreedyVerified,
}

#[derive(Clone, Copy, Debug)]
pub struct NetOptions {
    pub method: NetMethod,
    pub phase_quotient: bool,
    pub verify_samples: usize,
    pub pool_size: usize,
}

impl Default for NetOptions {
    fn default() -> Self {
        Self { method: NetMethod::DeterministicGrid, phase_quotient: false, verify_samples: 100_000, pool_size: 200_000 }
    }
}

fn chord(x: &[C64], p: &[C64], quotient: bool) -> f64 {
    if quotient {
        let overlap: C64 = p.iter().zip(x).map(|(a, b)| a.conj() * b).sum();
        (2.0 - 2.0 * overlap.norm()).max(0.0).sqrt()
    } else {
        p.iter().zip(x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }
}

impl ThetaNet {
    /// Wraps arbitrary unit vectors; the covering property is not certified.
    pub fn from_points(l: usize, theta: f64, points: Vec<Ket>, phase_quotient: bool) -> Result<Self> {
        if l == 0 || points.is_empty() {
            return Err(Error::Precondition("a net needs l ≥ 1 and at least one point".into()));
        }
        if !(theta > 0.0) {
            return Err(Error::Precondition("θ must be positive".into()));
        }
        if let Some(p) = points.iter().find(|p| p.dim() != l) {
            return Err(Error::DimensionMismatch { expected: l, got: p.dim() });
        }
        Ok(Self {
            l,
            theta,
            points,
            construction: NetConstruction::Custom,
            certificate: CoveringCertificate {
                method: "unverified".into(),
                analytic_radius: None,
                samples: None,
                max_observed_gap: None,
                phase_quotient,
            },
        })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn points(&self) -> &[Ket] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn construction(&self) -> NetConstruction {
        self.construction
    }

    pub fn certificate(&self) -> &CoveringCertificate {
        &self.certificate
    }

    pub fn phase_quotient(&self) -> bool {
        self.certificate.phase_quotient
    }

    /// Distance from `x` to the nearest net point.
    pub fn gap(&self, x: &Ket) -> f64 {
        let xs = x.amplitudes().as_slice();
        let q = self.phase_quotient();
        self.points.iter().map(|p| chord(xs, p.amplitudes().as_slice(), q)).fold(f64::INFINITY, f64::min)
    }

    pub fn to_record(&self) -> NetRecord {
        let mut rec = NetRecord {
            l: self.l,
            theta: self.theta,
            construction: self.construction,
            certificate: self.certificate.clone(),
            points: self.points.iter().map(|p| p.amplitudes().iter().map(|z| [z.re, z.im]).collect()).collect(),
            hash: String::new(),
        };
        rec.hash = rec.content_hash();
        rec
    }

    pub fn from_record(rec: &NetRecord) -> Result<Self> {
        if rec.content_hash() != rec.hash {
            return Err(Error::Integrity("net content hash does not match".into()));
        }
        let points = rec
            .points
            .iter()
            .map(|p| Ket::new(ComplexVector::from_iterator(p.len(), p.iter().map(|a| C64::new(a[0], a[1])))))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::from_points(rec.l, rec.theta, points, rec.certificate.phase_quotient)?;
        net.construction = rec.construction;
        net.certificate = rec.certificate.clone();
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetRecord {
    pub l: usize,
    pub theta: f64,
    pub construction: NetConstruction,
    pub certificate: CoveringCertificate,
    pub points: Vec<Vec<[f64; 2]>>,
    /// SHA-256 of the record serialized with an empty hash.
    pub hash: String,
}

impl NetRecord {
    pub fn content_hash(&self) -> String {
        let mut blank = self.clone();
        blank.hash.clear();
        let bytes = serde_json::to_vec(&blank).expect("net record serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

pub fn build_theta_net(l: usize, theta: f64, opts: &NetOptions, seed: u64) -> Result<ThetaNet> {
    check_theta(theta)?;
    if l == 0 {
        return Err(Error::InvalidDimension("l must be positive".into()));
    }
    let net = match opts.method {
        NetMethod::DeterministicGrid => {
            if l > 4 {
                return Err(Error::UnsupportedDimension(format!("grid nets support l ≤ 4, got {l}")));
            }
            grid_net(l, theta, opts.phase_quotient)?
        }
        NetMethod::GreedyVerified => {
            if l > 6 {
                return Err(Error::UnsupportedDimension(format!("greedy nets support l ≤ 6, got {l}")));
            }
            greedy_net(l, theta, opts, seed)?
        }
    };
    let bound = net_cardinality_bound(l, theta)?;
    if net.len() as u64 > bound {
        return Err(Error::ConstructionFailure(format!("{} points exceed the bound {bound}", net.len())));
    }
    Ok(net)
}

/// Deterministic grid net with the default (full-sphere) metric.
pub fn grid_net_default(l: usize, theta: f64) -> Result<ThetaNet> {
    build_theta_net(l, theta, &NetOptions::default(), 0)
}

fn phase_count(target_chord: f64) -> usize {
    if target_chord >= 2.0 {
        1
    } else {
        (std::f64::consts::PI / (2.0 * (target_chord / 2.0).asin())).ceil() as usize
    }
}

fn phase_chord(count: usize) -> f64 {
    2.0 * (std::f64::consts::PI / (2.0 * count as f64)).sin()
}

fn grid_net(l: usize, theta: f64, quotient: bool) -> Result<ThetaNet> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let tau = std::f64::consts::TAU;
    let (points, radius) = if l == 1 {
        if quotient {
            (vec![Ket::basis(1, 0)?], 0.0)
        } else {
            let count = (std::f64::consts::PI / (theta / 2.0).asin()).ceil() as usize;
            let pts = (0..count)
                .map(|t| Ket::new(ComplexVector::from_element(1, C64::from_polar(1.0, tau * t as f64 / count as f64))))
                .collect::<Result<Vec<_>>>()?;
            (pts, phase_chord(count))
        }
    } else {
        let theta_mod = theta / 2.0;
        let theta_phase = theta / 2.0;
        let angles = l - 1;
        let delta = theta_mod / (angles as f64).sqrt();
        let cells = (half_pi / (2.0 * delta)).ceil() as usize;
        let centers: Vec<f64> = (0..cells).map(|i| (i as f64 + 0.5) * half_pi / cells as f64).collect();
        let modulus_err = (angles as f64).sqrt() * (half_pi / 2.0) / cells as f64;
        let free = if quotient { l - 1 } else { l };
        let per_coord = theta_phase / (free as f64).sqrt();

        let mut moduli_sets = Vec::new();
        let mut idx = vec![0usize; angles];
        loop {
            let mut s = vec![0.0; l];
            let mut tail = 1.0;
            for (j, &i) in idx.iter().enumerate() {
                s[j] = tail * centers[i].cos();
                tail *= centers[i].sin();
            }
            s[l - 1] = tail;
            let counts: Vec<usize> = (0..l)
                .map(|j| if quotient && j == 0 { 1 } else if s[j] <= 0.0 { 1 } else { phase_count(per_coord / s[j]) })
                .collect();
            moduli_sets.push((s, counts));
            let mut a = 0;
            while a < angles {
                idx[a] += 1;
                if idx[a] < cells {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == angles {
                break;
            }
        }
        let total: u128 = moduli_sets.iter().map(|(_, c)| c.iter().map(|&v| v as u128).product::<u128>()).sum();
        let bound = net_cardinality_bound(l, theta)? as u128;
        if total > bound {
            return Err(Error::ConstructionFailure(format!("grid needs {total} points, above the bound {bound}")));
        }
        if total > MAX_NET_POINTS as u128 {
            return Err(Error::ConstructionFailure(format!("grid needs {total} points, above the storage cap {MAX_NET_POINTS}")));
        }
        let mut phase_err: f64 = 0.0;
        let mut pts = Vec::with_capacity(total as usize);
        for (s, counts) in &moduli_sets {
            let e: f64 = (0..l)
                .filter(|&j| !(quotient && j == 0))
                .map(|j| (s[j] * phase_chord(counts[j])).powi(2))
                .sum::<f64>()
                .sqrt();
            phase_err = phase_err.max(e);
            let combos: usize = counts.iter().product();
            for mut c in 0..combos {
                let amps: Vec<C64> = (0..l)
                    .map(|j| {
                        let t = c % counts[j];
                        c /= counts[j];
                        C64::from_polar(s[j], tau * t as f64 / counts[j] as f64)
                    })
                    .collect();
                pts.push(Ket::normalized(ComplexVector::from_vec(amps))?);
            }
        }
        (pts, modulus_err + phase_err)
    };
    if radius > theta {
        return Err(Error::ConstructionFailure(format!("grid radius {radius} exceeds θ = {theta}")));
    }
    Ok(ThetaNet {
        l,
        theta,
        points,
        construction: NetConstruction::DeterministicGrid,
        certificate: CoveringCertificate {
            method: "analytic".into(),
            analytic_radius: Some(radius),
            samples: None,
            max_observed_gap: None,
            phase_quotient: quotient,
        },
    })
}

fn sample_pool(l: usize, count: usize, rng: &mut SeededRng) -> Result<Vec<Ket>> {
    (0..count).map(|_| random_unit_vector(l, rng)).collect()
}

fn greedy_net(l: usize, theta: f64, opts: &NetOptions, seed: u64) -> Result<ThetaNet> {
    if opts.verify_samples < MIN_COVERING_SAMPLES {
        return Err(Error::Precondition(format!("verification needs at least {MIN_COVERING_SAMPLES} samples")));
    }
    let q = opts.phase_quotient;
    let bound = net_cardinality_bound(l, theta)?.min(MAX_NET_POINTS as u64) as usize;
    let mut rng = substream(seed, 0);
    let mut pool = sample_pool(l, opts.pool_size.max(1), &mut rng)?;
    let mut points = vec![pool[0].clone()];
    let mut nearest: Vec<f64> = pool.par_iter().map(|x| chord(x.amplitudes().as_slice(), points[0].amplitudes().as_slice(), q)).collect();
    let target = 0.8 * theta;
    for round in 0..4 {
        loop {
            let (far, gap) = nearest
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
            if gap <= target {
                break;
            }
            if points.len() >= bound {
                return Err(Error::ConstructionFailure(format!("greedy net reached {} points without covering", points.len())));
            }
            let p = pool[far].clone();
            let ps = p.amplitudes().as_slice().to_vec();
            nearest.par_iter_mut().zip(pool.par_iter()).for_each(|(d, x)| {
                *d = d.min(chord(x.amplitudes().as_slice(), &ps, q));
            });
            points.push(p);
        }
        let mut net = ThetaNet::from_points(l, theta, points.clone(), q)?;
        let verify_seed = derive_seed(seed, 1 + round as u64);
        let (gap, pass) = covering_check(&net, opts.verify_samples, verify_seed)?;
        if pass {
            net.construction = NetConstruction::GreedyVerified;
            net.certificate = CoveringCertificate {
                method: "monte-carlo".into(),
                analytic_radius: None,
                samples: Some(opts.verify_samples),
                max_observed_gap: Some(gap),
                phase_quotient: q,
            };
            return Ok(net);
        }
        let extra = sample_pool(l, pool.len(), &mut rng)?;
        let extra_near: Vec<f64> = extra.par_iter().map(|x| net.gap(x)).collect();
        pool.extend(extra);
        nearest.extend(extra_near);
    }
    Err(Error::ConstructionFailure("greedy net failed Monte Carlo verification".into()))
}

/// Largest distance from `samples` uniform sphere points to the net, and
/// whether it stays within θ.
pub fn covering_check(net: &ThetaNet, samples: usize, seed: u64) -> Result<(f64, bool)> {
    if samples < MIN_COVERING_SAMPLES {
        return Err(Error::Precondition(format!("covering check needs at least {MIN_COVERING_SAMPLES} samples")));
    }
    let l = net.l();
    let gap = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            random_unit_vector(l, &mut rng).map(|x| net.gap(&x))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok((gap, gap <= net.theta()))
}

/// Largest `f(Vp)` over net points `p`, with the first maximizer.
pub fn net_max_f(channel: &StinespringChannel, net: &ThetaNet) -> Result<(f64, Ket)> {
    let (l, k, n) = channel.dims();
    if net.l() != l {
        return Err(Error::DimensionMismatch { expected: l, got: net.l() });
    }
    let values: Vec<f64> = net
        .points()
        .par_iter()
        .map(|p| f_value(&channel.embed(p)?, k, n))
        .collect::<Result<_>>()?;
    let (best, m) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    Ok((m, net.points()[best].clone()))
}

/// Largest `f` over `samples` uniform points of the image subspace.
pub fn sampled_max_f<R: Rng + ?Sized>(channel: &StinespringChannel, samples: usize, rng: &mut R) -> Result<f64> {
    let (l, k, n) = channel.dims();
    let mut m: f64 = 0.0;
    for _ in 0..samples {
        let x = random_unit_vector(l, rng)?;
        m = m.max(f_value(&channel.embed(&x)?, k, n)?);
    }
    Ok(m)
}
