//! One function per subcommand: resolve settings, run the pipeline, build
//! the report.

use serde::Serialize;
use serde_json::json;

use moelab_core::capacity::verify_extension_identity;
use moelab_core::certify::{analytic_crossover, gap_scan, scan_channel, typical_bound_rhs, BetaRegime, ScanConfig};
use moelab_core::channels::StinespringChannel;
use moelab_core::concentration::{empirical_tail, estimate_moments};
use moelab_core::entropy::{bell_output, lemma_bell_bound, max_entropy_given_lambda, von_neumann_entropy};
use moelab_core::nets::{build_theta_net, correction_factor, covering_check, net_cardinality_bound, net_max_f, sampled_max_f, NetMethod, NetOptions};
use moelab_core::rng::{derive_seed, substream};

use crate::config::{config_error, BellArgs, Command, CrossoverArgs, GapArgs, MomentsArgs, NetArgs, Settings, TailArgs, TypicalArgs, WeylArgs};
use crate::report::{num, Report};

pub fn run(command: &Command, s: &mut Settings, seed: u64) -> anyhow::Result<Report> {
    let mut report = Report::new(command.name());
    match command {
        Command::Moments(a) => moments(a, s, seed, &mut report)?,
        Command::Tail(a) => tail(a, s, seed, &mut report)?,
        Command::Bell(a) => bell(a, s, seed, &mut report)?,
        Command::NetCertify(a) => net_certify(a, s, seed, &mut report)?,
        Command::GapScan(a) => gap(a, s, seed, &mut report)?,
        Command::Crossover(a) => crossover(a, s, &mut report)?,
        Command::Weyl(a) => weyl(a, s, seed, &mut report)?,
        Command::TypicalBound(a) => typical(a, s, &mut report)?,
    }
    report.config = s.resolved();
    Ok(report)
}

fn positive_dims(name: &str, values: &[usize]) -> anyhow::Result<()> {
    if values.contains(&0) {
        return config_error(format!("{name} must be positive"));
    }
    Ok(())
}

fn moments(a: &MomentsArgs, s: &mut Settings, seed: u64, report: &mut Report) -> anyhow::Result<()> {
    s.flag("k", a.k.clone());
    s.flag("n", a.n.clone());
    s.flag("trials", a.trials.map(|v| v as i64));
    let ks = s.usize_grid("k", Some("2"))?;
    let ns = s.usize_grid("n", Some("2"))?;
    let trials = s.usize("trials", 20_000)?;
    positive_dims("k", &ks)?;
    positive_dims("n", &ns)?;
    if trials < 100 {
        return config_error("moments needs at least 100 trials");
    }
    let mut reports = vec![];
    for (i, &k) in ks.iter().enumerate() {
        for (j, &n) in ns.iter().enumerate() {
            let stream = derive_seed(seed, (i * ns.len() + j) as u64);
            reports.push(estimate_moments(k, n, trials, stream)?);
        }
    }
    report.check("mean of f at most 1/sqrt(n) + 2 stderr", reports.iter().all(|r| r.checks.mean_within_bound));
    report.check(
        "median of f at most (1 + 3/sqrt(k))/sqrt(n), order-statistic slack",
        reports.iter().all(|r| r.checks.median_within_bound),
    );
    report.check("mean of f^2 within 3 stderr of (k+n)/(kn+1) - 1/k", reports.iter().all(|r| r.checks.second_moment_matches));
    let rows: Vec<_> = reports.iter().map(|r| r.row()).collect();
    report.table(
        &["k", "n", "trials", "mean_f", "stderr_mean", "median_f", "mean_f2", "stderr_f2", "exact_f2", "bound_mean", "bound_median"],
        &rows,
    )?;
    report.data = serde_json::to_value(&reports)?;
    Ok(())
}

fn tail(a: &TailArgs, s: &mut Settings, seed: u64, report: &mut Report) -> anyhow::Result<()> {
    s.flag("k", a.k.map(|v| v as i64));
    s.flag("n", a.n.map(|v| v as i64));
    s.flag("epsilon", a.epsilon.clone());
    s.flag("trials", a.trials.map(|v| v as i64));
    let k = s.positive("k", Some(4))?;
    let n = s.positive("n", Some(64))?;
    let eps = s.f64_grid("epsilon", "0.1,0.2,0.3")?;
    let trials = s.usize("trials", 100_000)?;
    if trials < 1000 {
        return config_error("tail needs at least 1000 trials");
    }
    if eps.is_empty() || eps.iter().any(|e| *e <= 0.0) {
        return config_error("epsilon grid must be nonempty and positive");
    }
    let r = empirical_tail(k, n, &eps, trials, seed)?;
    report.check(
        "tail frequency above median + h at most sqrt(pi/8) exp(-eps^2 (n - 1/k)) + 3 binomial stderr",
        r.all_within_bound(),
    );
    report.table(
        &["k", "n", "alpha", "trials", "epsilon", "threshold", "empirical_tail", "analytic_bound", "slack", "within_bound"],
        &r.rows(),
    )?;
    report.data = serde_json::to_value(&r)?;
    Ok(())
}

#[derive(Serialize)]
struct BellRow {
    l: usize,
    k: usize,
    n: usize,
    trial: usize,
    lambda_max: f64,
    lambda_floor: f64,
    bell_entropy_nats: f64,
    profile_bound_nats: Option<f64>,
    closed_form_nats: Option<f64>,
}

fn bell_row(ch: &StinespringChannel, trial: usize) -> anyhow::Result<BellRow> {
    let (l, k, n) = ch.dims();
    let out = bell_output(ch)?;
    let p = l as f64 / (k * n) as f64;
    let profile = if p >= 1.0 / (k * k) as f64 { Some(max_entropy_given_lambda(p, k * k)?.nats()) } else { None };
    let closed = if k >= 2 { Some(lemma_bell_bound(k, l as f64 / n as f64)?.nats()) } else { None };
    Ok(BellRow {
        l,
        k,
        n,
        trial,
        lambda_max: out.eigenvalues()[0],
        lambda_floor: p,
        bell_entropy_nats: von_neumann_entropy(&out)?.nats(),
        profile_bound_nats: profile,
        closed_form_nats: closed,
    })
}

fn load_channel(path: &std::path::Path) -> anyhow::Result<StinespringChannel> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::config::ConfigError(format!("cannot read channel {}: {e}", path.display())))?;
    StinespringChannel::from_json(&text).map_err(|e| crate::config::ConfigError(format!("invalid channel file {}: {e}", path.display())).into())
}

fn bell(a: &BellArgs, s: &mut Settings, seed: u64, report: &mut Report) -> anyhow::Result<()> {
    s.flag("l", a.l.clone());
    s.flag("k", a.k.clone());
    s.flag("n", a.n.clone());
    s.flag("trials", a.trials.map(|v| v as i64));
    s.flag("channel", a.channel.as_ref().map(|p| p.display().to_string()));
    s.flag("save_channel", a.save_channel.as_ref().map(|p| p.display().to_string()));
    let mut rows = vec![];
    let mut saved = None;
    if let Some(path) = s.path("channel")? {
        if s.is_set("l") || s.is_set("k") || s.is_set("n") {
            return config_error("--channel fixes the dimensions; do not also pass l, k or n");
        }
        let ch = load_channel(&path)?;
        rows.push(bell_row(&ch, 0)?);
        saved = Some(ch);
    } else {
        let ls = s.usize_grid("l", Some("2"))?;
        let ks = s.usize_grid("k", Some("2"))?;
        let ns = s.usize_grid("n", Some("2"))?;
        let trials = s.positive("trials", Some(100))?;
        for name_vals in [("l", &ls), ("k", &ks), ("n", &ns)] {
            positive_dims(name_vals.0, name_vals.1)?;
        }
        for &l in &ls {
            for &k in &ks {
                for &n in &ns {
                    if l > k * n {
                        return config_error(format!("l = {l} exceeds k n = {}", k * n));
                    }
                    for t in 0..trials {
                        let ch = scan_channel(l, k, n, derive_seed(seed, t as u64))?;
                        rows.push(bell_row(&ch, t)?);
                        if saved.is_none() {
                            saved = Some(ch);
                        }
                    }
                }
            }
        }
    }
    if let (Some(path), Some(ch)) = (s.path("save_channel")?, saved.as_ref()) {
        std::fs::write(path, ch.to_json()?)?;
    }
    report.check("largest Bell-output eigenvalue at least l/(kn)", rows.iter().all(|r| r.lambda_max >= r.lambda_floor - 1e-9));
    report.check(
        "Bell-output entropy at most the largest-eigenvalue entropy profile",
        rows.iter().all(|r| r.profile_bound_nats.is_none_or(|b| r.bell_entropy_nats <= b + 1e-9)),
    );
    report.check("Bell-output entropy at most 2 ln k", rows.iter().all(|r| r.bell_entropy_nats <= 2.0 * (r.k as f64).ln() + 1e-9));
    report.table(
        &["l", "k", "n", "trial", "lambda_max", "lambda_floor", "bell_entropy_nats", "profile_bound_nats", "closed_form_nats"],
        &rows,
    )?;
    report.data = serde_json::to_value(&rows)?;
    Ok(())
}

#[derive(Serialize)]
struct NetRow {
    l: usize,
    theta: f64,
    method: String,
    phase_quotient: bool,
    size: usize,
    cardinality_bound: u64,
    analytic_radius: Option<f64>,
    samples: usize,
    max_gap: f64,
    covering_pass: bool,
    c_theta: f64,
    soundness_channels: usize,
    soundness_failures: usize,
}

fn net_certify(a: &NetArgs, s: &mut Settings, seed: u64, report: &mut Report) -> anyhow::Result<()> {
    s.flag("l", a.l.map(|v| v as i64));
    s.flag("theta", a.theta);
    s.flag("samples", a.samples.map(|v| v as i64));
    s.flag("method", a.method.clone());
    s.switch("phase_quotient", a.phase_quotient);
    s.flag("k", a.k.map(|v| v as i64));
    s.flag("n", a.n.map(|v| v as i64));
    s.flag("trials", a.trials.map(|v| v as i64));
    s.flag("save_net", a.save_net.as_ref().map(|p| p.display().to_string()));
    let l = s.positive("l", Some(2))?;
    let theta = s.f64("theta", Some(0.25))?;
    let samples = s.usize("samples", 100_000)?;
    let method = match s.string("method", "grid")?.as_str() {
        "grid" => NetMethod::DeterministicGrid,
        "greedy" => NetMethod::GreedyVerified,
        other => return config_error(format!("unknown net method `{other}` (grid or greedy)")),
    };
    let quotient = s.bool("phase_quotient", false)?;
    if !(theta > 0.0 && theta <= 0.25) {
        return config_error("theta must lie in (0, 1/4]");
    }
    if samples < 10_000 {
        return config_error("covering check needs at least 10000 samples");
    }
    let trials = s.usize("trials", 20)?;
    let opts = NetOptions { method, phase_quotient: quotient, ..NetOptions::default() };
    let net = match build_theta_net(l, theta, &opts, seed) {
        Ok(net) => net,
        Err(moelab_core::Error::UnsupportedDimension(m)) => return config_error(m),
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = s.path("save_net")? {
        std::fs::write(path, net.to_json()?)?;
    }
    let (gap, pass) = covering_check(&net, samples, derive_seed(seed, 1))?;
    let c = correction_factor(theta)?;
    let mut failures = 0;
    if trials > 0 {
        let k = s.positive("k", Some(2))?;
        let n = s.positive("n", Some(2))?;
        if l > k * n {
            return config_error(format!("l = {l} exceeds k n = {}", k * n));
        }
        let mut rng = substream(derive_seed(seed, 2), 0);
        for t in 0..trials {
            let ch = scan_channel(l, k, n, derive_seed(seed, 100 + t as u64))?;
            let (m, _) = net_max_f(&ch, &net)?;
            if c * m < sampled_max_f(&ch, 10_000, &mut rng)? {
                failures += 1;
            }
        }
    }
    let bound = net_cardinality_bound(l, theta)?;
    report.check("net cardinality at most (1 + 2/theta)^(2l)", net.len() as u64 <= bound);
    report.check("sampled covering gap at most theta", pass);
    report.check("c_theta times net maximum of f dominates sampled subspace maximum", failures == 0);
    let row = NetRow {
        l,
        theta,
        method: if method == NetMethod::DeterministicGrid { "grid".into() } else { "greedy".into() },
        phase_quotient: quotient,
        size: net.len(),
        cardinality_bound: bound,
        analytic_radius: net.certificate().analytic_radius,
        samples,
        max_gap: gap,
        covering_pass: pass,
        c_theta: c,
        soundness_channels: trials,
        soundness_failures: failures,
    };
    report.table(
        &[
            "l", "theta", "method", "phase_quotient", "size", "cardinality_bound", "analytic_radius", "samples", "max_gap", "covering_pass",
            "c_theta", "soundness_channels", "soundness_failures",
        ],
        &[&row],
    )?;
    report.data = json!({"net": row, "certificate": net.certificate()});
    Ok(())
}

fn gap(a: &GapArgs, s: &mut Settings, seed: u64, report: &mut Report) -> anyhow::Result<()> {
    s.flag("k", a.k.clone());
    s.flag("n", a.n.clone());
    s.flag("l", a.l.clone());
    s.flag("seeds", a.seeds.clone());
    s.flag("theta", a.theta);
    s.flag("restarts", a.restarts.map(|v| v as i64));
    s.switch("phase_quotient", a.phase_quotient);
    let ks = s.usize_grid("k", Some("2"))?;
    let ns = s.usize_grid("n", Some("2"))?;
    let ls = s.usize_grid("l", Some("2"))?;
    let seeds = s.u64_grid("seeds", &[seed])?;
    let theta = s.f64("theta", Some(0.25))?;
    let restarts = s.positive("restarts", Some(8))?;
    let phase_quotient = s.bool("phase_quotient", false)?;
    for name_vals in [("l", &ls), ("k", &ks), ("n", &ns)] {
        positive_dims(name_vals.0, name_vals.1)?;
    }
    if !(theta > 0.0 && theta <= 0.25) {
        return config_error("theta must lie in (0, 1/4]");
    }
    let result = gap_scan(&ScanConfig { ks, ns, ls, seeds, theta, restarts, phase_quotient })?;
    report.check(
        "certified lower bound at most the heuristic minimum; certified rows have positive gap",
        result.rows.iter().all(|r| r.invariants_hold()),
    );
    let rows: Vec<_> = result.rows.iter().map(|r| r.row()).collect();
    report.table(
        &[
            "k", "n", "l", "theta", "seed", "net_size", "net_max_f", "c_theta", "lower_nats", "bell_upper_nats", "gap_nats", "certified",
            "heuristic_smin_nats",
        ],
        &rows,
    )?;
    for e in &result.errors {
        eprintln!("row (k={}, n={}, l={}, seed={}) failed: {}", e.k, e.n, e.l, e.seed, e.message);
    }
    report.data = serde_json::to_value(&result)?;
    Ok(())
}

#[derive(Serialize)]
struct CrossoverRow {
    a: f64,
    theta: f64,
    regime: String,
    beta: Option<f64>,
    epsilon: f64,
    alpha: f64,
    c: f64,
    ln_k_star: String,
}

fn crossover(args: &CrossoverArgs, s: &mut Settings, report: &mut Report) -> anyhow::Result<()> {
    s.flag("a", args.a);
    s.flag("theta", args.theta);
    s.switch("beta_zero", args.beta_zero);
    s.flag("beta", args.beta);
    let a = s.f64("a", Some(1.0))?;
    let theta = s.f64("theta", Some(0.25))?;
    let beta_zero = s.bool("beta_zero", false)?;
    let beta = s.optional_f64("beta")?;
    if !(theta > 0.0 && theta <= 0.25) {
        return config_error("theta must lie in (0, 1/4]");
    }
    if a < 0.0 {
        return config_error("a must be nonnegative");
    }
    let regime = match (beta_zero, beta) {
        (true, Some(_)) => return config_error("--beta-zero and --beta are mutually exclusive"),
        (true, None) => BetaRegime::Zero,
        (false, Some(b)) if b > 0.0 => BetaRegime::Value(b),
        (false, Some(_)) => return config_error("beta must be positive"),
        (false, None) => return config_error("pass --beta-zero or --beta"),
    };
    let r = analytic_crossover(a, theta, regime)?;
    if let Some(lk) = r.ln_k_star {
        let ok = moelab_core::certify::crossover_inequality(a, r.c, lk) && !moelab_core::certify::crossover_inequality(a, r.c, lk - 2f64.ln());
        report.check("crossover inequality holds at k* and fails at k*/2", ok);
    }
    let row = CrossoverRow {
        a,
        theta,
        regime: if beta_zero { "beta-zero".into() } else { "beta".into() },
        beta,
        epsilon: r.epsilon,
        alpha: r.alpha,
        c: r.c,
        ln_k_star: r.ln_k_star.map_or("inf".into(), |v| v.to_string()),
    };
    report.table(&["a", "theta", "regime", "beta", "epsilon", "alpha", "c", "ln_k_star"], &[&row])?;
    report.data = json!({
        "a": a, "theta": theta, "regime": row.regime, "beta": beta, "epsilon": r.epsilon, "alpha": r.alpha, "c": r.c,
        "ln_k_star": num(r.ln_k_star.unwrap_or(f64::INFINITY)),
    });
    Ok(())
}

fn weyl(args: &WeylArgs, s: &mut Settings, seed: u64, report: &mut Report) -> anyhow::Result<()> {
    s.flag("l", args.l.map(|v| v as i64));
    s.flag("k", args.k.map(|v| v as i64));
    s.flag("n", args.n.map(|v| v as i64));
    s.flag("phi_copies", args.phi_copies.map(|v| v as i64));
    s.flag("omega_copies", args.omega_copies.map(|v| v as i64));
    s.flag("restarts", args.restarts.map(|v| v as i64));
    s.flag("channel", args.channel.as_ref().map(|p| p.display().to_string()));
    s.flag("save_channel", args.save_channel.as_ref().map(|p| p.display().to_string()));
    let m = s.usize("phi_copies", 1)?;
    let copies = s.usize("omega_copies", 0)?;
    let restarts = s.positive("restarts", Some(16))?;
    if !(1..=2).contains(&(m + copies)) {
        return config_error("phi-copies + omega-copies must be 1 or 2");
    }
    let phi = match s.path("channel")? {
        Some(path) => {
            if s.is_set("l") || s.is_set("k") || s.is_set("n") {
                return config_error("--channel fixes the dimensions; do not also pass l, k or n");
            }
            load_channel(&path)?
        }
        None => {
            let l = s.positive("l", Some(2))?;
            let k = s.positive("k", Some(2))?;
            let n = s.positive("n", Some(2))?;
            if l > k * n {
                return config_error(format!("l = {l} exceeds k n = {}", k * n));
            }
            scan_channel(l, k, n, derive_seed(seed, 0))?
        }
    };
    let (l, k, n) = phi.dims();
    let omega = scan_channel(l, k, n, derive_seed(seed, 1))?;
    if let Some(path) = s.path("save_channel")? {
        std::fs::write(path, phi.to_json()?)?;
    }
    let r = match verify_extension_identity(&phi, &omega, m, copies, restarts, derive_seed(seed, 2)) {
        Ok(r) => r,
        Err(moelab_core::Error::UnsupportedDimension(msg)) => return config_error(msg),
        Err(e) => return Err(e.into()),
    };
    report.check("average Weyl-ensemble output entropy equals ln(k^m k'^n)", r.average_residual < 1e-3);
    report.check("every string has the same output entropy", r.per_string_spread < 1e-3);
    report.check("ensemble chi equals ln(k^m k'^n) minus the minimum output entropy estimate", r.identity_residual < 1e-3);
    if let Some(sub) = r.subadditivity_advisory {
        report.advisory("product minimum output entropy estimate at most the sum of factor estimates", sub);
    }
    #[derive(Serialize)]
    struct Row {
        m: usize,
        n: usize,
        dims: String,
        chi_ens_nats: f64,
        avg_output_entropy_nats: f64,
        per_string_entropy_nats: f64,
        smin_estimate_nats: f64,
        identity_residual: f64,
    }
    let dims = r.dims.iter().map(|(l, k, n)| format!("{l}x{k}x{n}")).collect::<Vec<_>>().join(";");
    report.table(
        &["m", "n", "dims", "chi_ens_nats", "avg_output_entropy_nats", "per_string_entropy_nats", "smin_estimate_nats", "identity_residual"],
        &[Row {
            m: r.m,
            n: r.n,
            dims,
            chi_ens_nats: r.chi_ens_nats,
            avg_output_entropy_nats: r.avg_output_entropy_nats,
            per_string_entropy_nats: r.per_string_entropy_nats,
            smin_estimate_nats: r.smin_estimate_nats,
            identity_residual: r.identity_residual,
        }],
    )?;
    report.data = serde_json::to_value(&r)?;
    Ok(())
}

#[derive(Serialize)]
struct TypicalRow {
    l: usize,
    k: usize,
    n: usize,
    term_a: f64,
    term_b: f64,
    term_c: f64,
    term_d: f64,
    value: f64,
    f_max: f64,
    vacuous: bool,
}

fn typical(a: &TypicalArgs, s: &mut Settings, report: &mut Report) -> anyhow::Result<()> {
    s.flag("l", a.l.clone());
    s.flag("k", a.k.clone());
    s.flag("n", a.n.clone());
    let ls = s.usize_grid("l", Some("2"))?;
    let ks = s.usize_grid("k", Some("2"))?;
    let ns = s.usize_grid("n", Some("10000"))?;
    let mut rows = vec![];
    for &l in &ls {
        for &k in &ks {
            for &n in &ns {
                let t = match typical_bound_rhs(l, k, n) {
                    Ok(t) => t,
                    Err(e) => return config_error(e.to_string()),
                };
                rows.push(TypicalRow {
                    l,
                    k,
                    n,
                    term_a: t.terms[0],
                    term_b: t.terms[1],
                    term_c: t.terms[2],
                    term_d: t.terms[3],
                    value: t.value,
                    f_max: ((k as f64 - 1.0) / k as f64).sqrt(),
                    vacuous: t.vacuous,
                });
            }
        }
    }
    report.table(&["l", "k", "n", "term_a", "term_b", "term_c", "term_d", "value", "f_max", "vacuous"], &rows)?;
    report.data = serde_json::to_value(&rows)?;
    Ok(())
}
