use crate::config::RunConfig;
use crate::output::Outputs;
use crate::CliError;
use serde::Serialize;
use std::fmt::Write as _;
use torus_elliptic::evolution::{
    e1_norm, equation_residual, maxreg_ratio, maxreg_samples, solve_cauchy, vanishing_check, weighted_sup_norm, MaxRegStats,
    NormSelector,
};
use torus_elliptic::multiplier::{build_mj, eta2, log_grid, marcinkiewicz_constants, MarcinkiewiczReport, SymbolSequence};
use torus_elliptic::operators::{
    check_normal_ellipticity, check_uniform_ellipticity, find_normal_sector_angle, EllipticityCertificate, SectorProbe,
};
use torus_elliptic::resolvent::estimates::{lambda_ladder, resolvent_decay_sweep, TestDictionary};
use torus_elliptic::resolvent::localization::{build_partition, find_thresholds, sup_localized_norm, working_bandwidth, Thresholds};
use torus_elliptic::spaces::{besov_blocks, besov_norm, decay_profile, holder_norm, make_dyadic_system, sup_norm, HolderIndex};
use torus_elliptic::{Error, C64};

/// Samples for maximal regularity sweeps have this bandwidth.
const SAMPLE_BANDWIDTH: usize = 8;

#[derive(Serialize)]
struct CheckResult {
    dim: usize,
    uniform: Option<EllipticityCertificate>,
    normal: Option<EllipticityCertificate>,
    normal_probe: Option<SectorProbe>,
    /// Largest passing sector angle found by bisection (scalar operators).
    normal_sector_angle: Option<f64>,
}

pub fn check(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let a = cfg.require_operator()?;
    let result = if a.dim == 1 {
        let uniform = check_uniform_ellipticity(a, cfg.grid)?;
        let angle = find_normal_sector_angle(a, cfg.grid);
        let (normal, normal_probe) = match check_normal_ellipticity(a, cfg.theta, &[], cfg.grid) {
            Ok((c, p)) => (Some(c), Some(p)),
            Err(e) if e.is_numerical() => (None, None),
            Err(e) => return Err(e.into()),
        };
        CheckResult { dim: 1, uniform: Some(uniform), normal, normal_probe, normal_sector_angle: angle }
    } else {
        let (c, p) = check_normal_ellipticity(a, cfg.theta, &[], cfg.grid)?;
        CheckResult { dim: a.dim, uniform: None, normal: Some(c), normal_probe: Some(p), normal_sector_angle: None }
    };
    out.json("certificate.json", &result)
}

#[derive(Serialize)]
struct FunctionNorms {
    index: usize,
    sup: f64,
    holder: Vec<(f64, f64)>,
    besov: Vec<(f64, f64)>,
    decay_profile: Vec<(f64, f64)>,
}

pub fn norms(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    if cfg.functions.is_empty() {
        return Err(CliError::Validation("norms needs at least one function".into()));
    }
    let thetas: Vec<HolderIndex> = cfg.thetas.iter().map(|&t| HolderIndex::new(t)).collect::<Result<_, _>>()?;
    let mut report = Vec::new();
    for (i, f) in cfg.functions.iter().enumerate() {
        let sys = make_dyadic_system(f.bandwidth().max(1));
        let holder = thetas.iter().map(|&t| (t.theta(), holder_norm(f, t, cfg.grid))).collect();
        let besov = cfg.besov_s.iter().map(|&s| (s, besov_norm(f, s, &sys))).collect();
        let profile = decay_profile(f, cfg.alpha, &cfg.deltas, cfg.grid);
        let mut csv = String::from("delta,modulus\n");
        for (d, m) in &profile {
            writeln!(csv, "{d:.17e},{m:.17e}").unwrap();
        }
        out.csv(&format!("decay_profile_{i}.csv"), &csv)?;
        let mut csv = String::from("s,j,weighted_block_norm\n");
        for &s in &cfg.besov_s {
            for (j, v) in besov_blocks(f, s, &sys) {
                writeln!(csv, "{s},{j},{v:.17e}").unwrap();
            }
        }
        out.csv(&format!("besov_blocks_{i}.csv"), &csv)?;
        report.push(FunctionNorms { index: i, sup: sup_norm(f, cfg.grid), holder, besov, decay_profile: profile });
    }
    out.json("norms.json", &report)
}

#[derive(Serialize)]
struct MultiplierAudit {
    s1: f64,
    s2: f64,
    s3: Option<f64>,
    argmax_k: ArgMax,
    report: MarcinkiewiczReport,
    eta2_per_block: Vec<f64>,
}

#[derive(Serialize)]
struct ArgMax {
    s1: i64,
    s2: i64,
    s3: Option<i64>,
}

/// Audits the resolvent symbol (λ + b k^{2m})^{−1} of a constant principal operator.
pub fn multiplier_audit(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let a = cfg.require_operator()?;
    if !(a.is_constant() && a.is_principal_only()) {
        return Err(CliError::Validation("multiplier-audit needs a constant-coefficient principal operator".into()));
    }
    let lambda = C64::new(cfg.lambda.0, cfg.lambda.1);
    let sym = SymbolSequence::resolvent(&a.leading().block_matrix(0), a.m, lambda);
    let report = marcinkiewicz_constants(&sym, cfg.scan_bound, a.dim > 1)?;
    let grid = log_grid(-3.0, 3.0, 61);
    let eta2_per_block = (1..=cfg.blocks).map(|j| eta2(&build_mj(&sym, j, sym.gap()), &grid).value).collect();
    let audit = MultiplierAudit {
        s1: report.s1.value,
        s2: report.s2.value,
        s3: report.s3.map(|e| e.value),
        argmax_k: ArgMax { s1: report.s1.argmax, s2: report.s2.argmax, s3: report.s3.map(|e| e.argmax) },
        report,
        eta2_per_block,
    };
    out.json("multiplier_audit.json", &audit)
}

pub fn resolvent_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let a = cfg.require_operator()?;
    let dict = TestDictionary::new(cfg.k_dict, a.dim, cfg.seed);
    let sweep = resolvent_decay_sweep(a, &lambda_ladder(cfg.ladder_shift, &cfg.ladder_exponents), &dict, cfg.alpha)?;
    let mut csv = String::from("lambda_re,lambda_im,resolvent_estimate,intermediate_estimate,resolvent_slope,intermediate_slope\n");
    for r in &sweep.rows {
        writeln!(
            csv,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.lambda.re, r.lambda.im, r.resolvent, r.intermediate, sweep.resolvent_slope, sweep.intermediate_slope
        )
        .unwrap();
    }
    out.csv("resolvent_sweep.csv", &csv)?;
    out.json("resolvent_sweep.json", &sweep)
}

#[derive(Serialize)]
struct PartitionRow {
    eps: f64,
    n: usize,
    bandwidth: usize,
    sup_localized_norm: f64,
    argmax_center: f64,
    thresholds: Option<Thresholds>,
    refusal: Option<String>,
}

/// Every ε is attempted; the first refusal is reported after all rows are written.
pub fn partition_audit(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let a = cfg.require_operator()?.principal_part();
    let dict = TestDictionary::new(cfg.k_dict, a.dim, cfg.seed);
    let dir = C64::new(cfg.direction.0, cfg.direction.1);
    let mut rows = Vec::new();
    let mut first_refusal: Option<Error> = None;
    for &eps in &cfg.eps {
        let part = build_partition(eps)?;
        let (sup, center) = sup_localized_norm(a.leading(), eps, cfg.alpha)?;
        let k = working_bandwidth(eps);
        let (thresholds, refusal) = match find_thresholds(&part, &a, dir, k, cfg.alpha, &dict) {
            Ok(t) => (Some(t), None),
            Err(e) if e.is_numerical() => {
                let msg = e.to_string();
                first_refusal.get_or_insert(e);
                (None, Some(msg))
            }
            Err(e) => return Err(e.into()),
        };
        rows.push(PartitionRow { eps, n: part.n, bandwidth: k, sup_localized_norm: sup, argmax_center: center, thresholds, refusal });
    }
    let mut csv = String::from("eps,n,sup_localized_norm,omega1,omega2,c_norm,rcd_norm,status\n");
    for r in &rows {
        let (w1, w2, c, d) = match &r.thresholds {
            Some(t) => (t.omega1.to_string(), t.omega2.to_string(), format!("{:.17e}", t.c_norm), format!("{:.17e}", t.rcd_norm)),
            None => Default::default(),
        };
        let status = if r.refusal.is_some() { "refused" } else { "ok" };
        writeln!(csv, "{},{},{:.17e},{w1},{w2},{c},{d},{status}", r.eps, r.n, r.sup_localized_norm).unwrap();
    }
    out.csv("partition_audit.csv", &csv)?;
    out.json("partition_audit.json", &rows)?;
    match first_refusal {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct SolveSummary {
    bandwidth: usize,
    steps: usize,
    mu: f64,
    horizon: f64,
    weighted_sup: f64,
    e1_norm: f64,
    trace_index: f64,
    trace_norm: Option<f64>,
    vanishing_profile: Vec<(f64, f64)>,
    equation_residual: f64,
    maxreg: Option<MaxRegStats>,
    maxreg_refusal: Option<String>,
}

pub fn solve(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = cfg
        .problem
        .as_ref()
        .ok_or_else(|| CliError::Validation("solve needs a problem (config field or --problem)".into()))?;
    let traj = solve_cauchy(p, cfg.bandwidth, cfg.steps)?;
    out.csv("trajectory.csv", &traj.to_csv())?;
    let a = &p.operator;
    let trace_index = 2.0 * a.m as f64 * p.mu + cfg.alpha;
    let trace_norm = HolderIndex::new(trace_index)
        .ok()
        .map(|t| holder_norm(&p.initial.with_bandwidth(cfg.bandwidth), t, torus_elliptic::trig::resolving_grid(cfg.bandwidth)));
    let samples = maxreg_samples(cfg.samples, SAMPLE_BANDWIDTH, a.dim, cfg.seed);
    let (maxreg, maxreg_refusal) = match maxreg_ratio(a, &samples, p.mu, p.horizon, cfg.bandwidth, cfg.steps, cfg.alpha) {
        Ok(s) => (Some(s), None),
        Err(e @ Error::IntegerTraceIndex { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let summary = SolveSummary {
        bandwidth: cfg.bandwidth,
        steps: cfg.steps,
        mu: p.mu,
        horizon: p.horizon,
        weighted_sup: weighted_sup_norm(&traj, NormSelector::Sup)?,
        e1_norm: e1_norm(&traj, a.m, cfg.alpha)?,
        trace_index,
        trace_norm,
        vanishing_profile: vanishing_check(&traj, NormSelector::Sup)?,
        equation_residual: equation_residual(&traj, a, &p.forcing)?,
        maxreg,
        maxreg_refusal,
    };
    out.json("solve.json", &summary)
}
