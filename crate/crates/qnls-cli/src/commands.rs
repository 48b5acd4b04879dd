//! The subcommands. Each one reads the loaded configuration, evaluates the
//! requested quantities and writes its files into the output directory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

use qnls::asym::{assemble, logdet_leading, AsymptoticResult, LeadingLogDet, LeadingMode};
use qnls::fields::{find_capital_lambdas, FieldSet, FieldValidation};
use qnls::fredholm::{det_v, lambda_grid, DetReport};
use qnls::localized::{asymptotic_match_all, model_scalars, verify_sector_jumps, AsymptoticMatch, JumpResiduals};
use qnls::numerics::{gauss_panels, lu_determinant, QuadGrid, SolverReport};
use qnls::pcf::{pcf_d, pcf_d_rk4, pcf_d_series, recurrence_residuals, weber_residual};
use qnls::rankone::{
    det2, g22_inverse_transpose_closed, jump_g, make_vectors, quasidet_check, rep_hat, tau,
};
use qnls::scalar_rhp::{Contour, DeltaExpansion, DeltaRhp, IndexReport};
use qnls::thermo::ThermoState;
use qnls::{QnlsError, Result, C64};

use crate::config::{Loaded, Point};
use crate::output::{cplx, num, write_json, Table};

/// Radius in the `ξ` plane at which the local model is matched to its large-`ξ` form.
pub const MATCH_RADIUS: f64 = 40.0;

/// Everything a subcommand needs.
pub struct Context {
    pub loaded: Loaded,
    pub out: PathBuf,
    pub mode: LeadingMode,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn setup(&self) -> Result<(FieldSet, ThermoState)> {
        Ok((self.loaded.fields()?, self.loaded.thermo()?))
    }

    fn evaluation_points(&self) -> Result<Vec<Point>> {
        self.loaded.points(&self.loaded.times()?)
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[derive(Serialize)]
struct ThermoSummary<'a> {
    q_roots: &'a [f64],
    solver: &'a SolverReport,
}

pub fn thermo(ctx: &Context) -> Result<()> {
    let th = ctx.loaded.thermo()?;
    let mut table = Table::new(&["lambda", "epsilon", "theta", "rho_t"]);
    for (k, lam) in th.grid.real_nodes().iter().enumerate() {
        table.push(vec![num(*lam), num(th.epsilon[k]), num(th.theta[k]), num(th.rho_t[k])]);
    }
    table.write(&ctx.path("thermo.csv"))?;
    write_json(
        &ctx.path("q_roots.json"),
        &ThermoSummary {
            q_roots: &th.q_roots,
            solver: &th.report,
        },
    )
}

#[derive(Serialize)]
struct RootsAt {
    lambda0: f64,
    capital_lambdas: Option<(f64, f64)>,
}

#[derive(Serialize)]
struct RootsReport {
    q_roots: Vec<f64>,
    validation: FieldValidation,
    capital_lambdas: Option<(f64, f64)>,
    per_lambda0: Vec<RootsAt>,
}

pub fn roots(ctx: &Context) -> Result<()> {
    let (f, th) = ctx.setup()?;
    let validation = f.validate()?;
    let capital_lambdas = find_capital_lambdas(&f, &th, None)?;
    let lambda0s = ctx.loaded.lambda0s().unwrap_or_default();
    let per_lambda0 = lambda0s
        .iter()
        .map(|l| {
            Ok(RootsAt {
                lambda0: *l,
                capital_lambdas: find_capital_lambdas(&f, &th, Some(*l))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &ctx.path("roots.json"),
        &RootsReport {
            q_roots: th.q_roots.clone(),
            validation,
            capital_lambdas,
            per_lambda0,
        },
    )
}

#[derive(Serialize)]
struct DeltaRow {
    lambda0: f64,
    coefficients: DeltaExpansion,
    large_lambda_fit: DeltaExpansion,
    detour_radius: f64,
    index: IndexReport,
    nodes: usize,
}

pub fn delta(ctx: &Context) -> Result<()> {
    let (f, th) = ctx.setup()?;
    let mut table = Table::new(&[
        "lambda0",
        "re_delta0",
        "im_delta0",
        "re_delta1",
        "im_delta1",
        "re_fit_delta0",
        "im_fit_delta0",
        "re_fit_delta1",
        "im_fit_delta1",
    ]);
    let mut rows = Vec::new();
    for l0 in ctx.loaded.lambda0s()? {
        let rhp = DeltaRhp::new(&f, &th, Contour::for_config(&f, &th, c(l0))?)?;
        let e = rhp.coeffs();
        let fit = rhp.fit_large_lambda(&f, &th)?;
        let mut row = vec![num(l0)];
        for z in [e.delta0, e.delta1, fit.delta0, fit.delta1] {
            row.extend(cplx(z));
        }
        table.push(row);
        rows.push(DeltaRow {
            lambda0: l0,
            coefficients: e,
            large_lambda_fit: fit,
            detour_radius: rhp.contour.detour_radius,
            index: rhp.index,
            nodes: rhp.nodes.nodes.len(),
        });
    }
    table.write(&ctx.path("delta.csv"))?;
    write_json(&ctx.path("delta.json"), &rows)
}

/// Number of `λ` nodes the oracle would use at a point (zero for an empty support).
fn oracle_nodes(ctx: &Context, f: &FieldSet, th: &ThermoState, p: Point) -> Result<usize> {
    let cfg = ctx.loaded.kernel(f, th, p)?;
    Ok(lambda_grid(&cfg)?.map(|g| g.len()).unwrap_or(0))
}

/// Fails when the oracle grid at `p` exceeds the node budget, reporting the
/// largest admissible time at the same `λ₀`.
fn check_envelope(ctx: &Context, f: &FieldSet, th: &ThermoState, p: Point) -> Result<()> {
    let budget = ctx.loaded.config.grid.max_nodes;
    if oracle_nodes(ctx, f, th, p)? <= budget {
        return Ok(());
    }
    let l0 = p.lambda0();
    let at = |t: f64| Point { x: 2.0 * t * l0, t };
    let (mut lo, mut hi) = (0.0, p.t);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if oracle_nodes(ctx, f, th, at(mid))? <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(QnlsError::Resolution(format!(
        "t = {} at λ₀ = {l0} needs more than max_nodes = {budget} oracle nodes; \
         the largest admissible time is t ≈ {lo:.4}",
        p.t
    )))
}

fn oracle(ctx: &Context, f: &FieldSet, th: &ThermoState, p: Point) -> Result<DetReport> {
    check_envelope(ctx, f, th, p)?;
    det_v(&ctx.loaded.kernel(f, th, p)?, None)
}

pub fn fredholm(ctx: &Context) -> Result<()> {
    let (f, th) = ctx.setup()?;
    let points = ctx.evaluation_points()?;
    for p in &points {
        check_envelope(ctx, &f, &th, *p)?;
    }
    let reports: Vec<DetReport> = points
        .iter()
        .map(|p| det_v(&ctx.loaded.kernel(&f, &th, *p)?, None))
        .collect::<Result<_>>()?;
    let mut table = Table::new(&[
        "x",
        "t",
        "lambda0",
        "re_logdet",
        "im_logdet",
        "re_logdet_kt",
        "im_logdet_kt",
        "n_lambda",
        "n_xi",
    ]);
    for (p, r) in points.iter().zip(&reports) {
        let mut row = vec![num(p.x), num(p.t), num(p.lambda0())];
        row.extend(cplx(r.log_det));
        row.extend(cplx(r.log_det_kt));
        row.push(r.stats.n_lambda.to_string());
        row.push(r.stats.n_xi.to_string());
        table.push(row);
    }
    table.write(&ctx.path("fredholm.csv"))
}

#[derive(Serialize)]
struct LocalizedRow {
    x: f64,
    t: f64,
    lambda0: f64,
    nu: C64,
    jumps: JumpResiduals,
    max_jump: f64,
    matches: Vec<AsymptoticMatch>,
    max_match_error: f64,
}

pub fn localized_check(ctx: &Context) -> Result<()> {
    let (f, th) = ctx.setup()?;
    let rows = ctx
        .evaluation_points()?
        .into_iter()
        .map(|p| {
            let m = model_scalars(&f, &th, c(p.lambda0()), p.x, p.t)?;
            let jumps = verify_sector_jumps(&m, p.t)?;
            let matches = asymptotic_match_all(&m, p.t, MATCH_RADIUS)?;
            Ok(LocalizedRow {
                x: p.x,
                t: p.t,
                lambda0: p.lambda0(),
                nu: m.nu,
                max_jump: jumps.max_jump(),
                jumps,
                max_match_error: matches.iter().map(|a| a.max_rel_err).fold(0.0, f64::max),
                matches,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&ctx.path("localized.json"), &rows)
}

const ASYM_HEADER: [&str; 11] = [
    "x",
    "t",
    "lambda0",
    "re_Lambda",
    "im_Lambda",
    "re_nu",
    "im_nu",
    "re_exp_exponent",
    "im_exp_exponent",
    "re_power_exponent",
    "im_power_exponent",
];

fn asym_row(p: Point, r: &AsymptoticResult) -> Vec<String> {
    let mut row = vec![num(p.x), num(p.t), num(p.lambda0())];
    for z in [r.saddle.lambda, r.saddle.nu, r.exp_exponent, r.power_exponent] {
        row.extend(cplx(z));
    }
    row
}

#[derive(Serialize)]
struct AsymRow {
    law: AsymptoticResult,
    leading: Option<LeadingLogDet>,
}

pub fn asym(ctx: &Context) -> Result<()> {
    let (f, th) = ctx.setup()?;
    let points = ctx.evaluation_points()?;
    let mut table = Table::new(&ASYM_HEADER);
    let mut rows = Vec::new();
    for p in points {
        let law = assemble(&f, &th, p.x, p.t)?;
        let leading = if th.params.h < 0.0 {
            Some(logdet_leading(&f, &th, p.x, p.t, ctx.mode)?)
        } else {
            None
        };
        table.push(asym_row(p, &law));
        rows.push(AsymRow { law, leading });
    }
    table.write(&ctx.path("asym.csv"))?;
    write_json(&ctx.path("asym.json"), &rows)
}

/// Least-squares fit `y ≈ constant + p·ln t`.
#[derive(Debug, Clone, Serialize)]
pub struct LogFit {
    pub constant: f64,
    pub p: f64,
    pub residual: Vec<f64>,
}

pub fn fit_constant_log(ts: &[f64], ys: &[f64]) -> Result<LogFit> {
    let n = ts.len() as f64;
    let ls: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let (sl, sll) = (ls.iter().sum::<f64>(), ls.iter().map(|l| l * l).sum::<f64>());
    let (sy, sly) = (ys.iter().sum::<f64>(), ls.iter().zip(ys).map(|(l, y)| l * y).sum::<f64>());
    let det = n * sll - sl * sl;
    if ts.len() < 2 || det.abs() < 1e-12 * n * sll.max(1.0) {
        return Err(QnlsError::Config("the constant + p·ln t fit needs at least two distinct times".into()));
    }
    let p = (n * sly - sl * sy) / det;
    let constant = (sy - p * sl) / n;
    let residual = ls.iter().zip(ys).map(|(l, y)| y - constant - p * l).collect();
    Ok(LogFit { constant, p, residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub lambda0: f64,
    pub mode: LeadingMode,
    pub t: Vec<f64>,
    pub logdet_oracle: Vec<C64>,
    pub logdet_asym: Vec<C64>,
    /// Mean of `Re(oracle - asym)`.
    pub fitted_constant: f64,
    /// `Re(oracle - asym) - fitted_constant` at every time.
    pub residual: Vec<f64>,
    /// `Re(oracle - asym)` fitted by `constant + p·ln t` (absent for a single time).
    pub log_fit: Option<LogFit>,
}

fn asymptotic_log(f: &FieldSet, th: &ThermoState, p: Point, mode: LeadingMode) -> Result<C64> {
    if th.params.h < 0.0 {
        Ok(logdet_leading(f, th, p.x, p.t, mode)?.value)
    } else {
        Ok(assemble(f, th, p.x, p.t)?.log_value())
    }
}

pub fn compare_at(ctx: &Context, f: &FieldSet, th: &ThermoState, lambda0: f64, times: &[f64]) -> Result<Comparison> {
    let points: Vec<Point> = times.iter().map(|t| Point { x: 2.0 * t * lambda0, t: *t }).collect();
    for p in &points {
        check_envelope(ctx, f, th, *p)?;
    }
    let mut logdet_oracle = Vec::new();
    let mut logdet_asym = Vec::new();
    for p in &points {
        logdet_oracle.push(oracle(ctx, f, th, *p)?.log_det);
        logdet_asym.push(asymptotic_log(f, th, *p, ctx.mode)?);
    }
    let diff: Vec<f64> = logdet_oracle.iter().zip(&logdet_asym).map(|(o, a)| (o - a).re).collect();
    let fitted_constant = diff.iter().sum::<f64>() / diff.len() as f64;
    let residual = diff.iter().map(|d| d - fitted_constant).collect();
    let log_fit = if times.len() >= 2 { Some(fit_constant_log(times, &diff)?) } else { None };
    Ok(Comparison {
        lambda0,
        mode: ctx.mode,
        t: times.to_vec(),
        logdet_oracle,
        logdet_asym,
        fitted_constant,
        residual,
        log_fit,
    })
}

pub fn compare(ctx: &Context) -> Result<()> {
    let (f, th) = ctx.setup()?;
    let times = ctx.loaded.times()?;
    if times.iter().any(|t| !(*t > 0.0)) {
        return Err(QnlsError::Config("compare needs positive times".into()));
    }
    let lambda0s = if ctx.loaded.config.experiment.lambda0.is_empty() {
        let mut v: Vec<f64> = Vec::new();
        for p in ctx.evaluation_points()? {
            if !v.contains(&p.lambda0()) {
                v.push(p.lambda0());
            }
        }
        v
    } else {
        ctx.loaded.config.experiment.lambda0.clone()
    };
    let out = lambda0s
        .iter()
        .map(|l| compare_at(ctx, &f, &th, *l, &times))
        .collect::<Result<Vec<_>>>()?;
    write_json(&ctx.path("compare.json"), &out)
}

/// One entry of the `checks` report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChecksReport {
    pub seed: u64,
    pub draws: usize,
    pub all_pass: bool,
    pub checks: Vec<Check>,
}

struct Checks(Vec<Check>);

impl Checks {
    fn record(&mut self, name: &str, tolerance: f64, value: Result<f64>) {
        let (value, error) = match value {
            Ok(v) => (v, None),
            Err(e) => (f64::INFINITY, Some(e.to_string())),
        };
        self.0.push(Check {
            name: name.to_string(),
            value: if value.is_finite() { value } else { f64::MAX },
            tolerance,
            pass: error.is_none() && value < tolerance,
            error,
        });
    }
}

fn max_over<I: IntoIterator<Item = Result<f64>>>(it: I) -> Result<f64> {
    it.into_iter().try_fold(0.0, |acc: f64, v| Ok(acc.max(v?)))
}

const DEFAULT_DRAWS: usize = 20;

/// 100-node `u` grid on the window `λ ± 6√ε` where the regularized vectors live.
pub fn window_grid(lambda: f64, eps: f64) -> Result<QuadGrid> {
    let w = 6.0 * eps.sqrt();
    gauss_panels(c(lambda - w), c(lambda + w), 10, 10)
}

fn random_c(rng: &mut ChaCha8Rng, scale: f64) -> C64 {
    C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

fn rankone_checks(checks: &mut Checks, f: &FieldSet, rng: &mut ChaCha8Rng, draws: usize) {
    let samples: Vec<(f64, [[C64; 2]; 2], f64, f64, f64)> = (0..draws)
        .map(|_| {
            let lam = rng.gen_range(-1.0..1.0);
            let g = [
                [random_c(rng, 1.0) + 1.5, random_c(rng, 1.0)],
                [random_c(rng, 1.0), random_c(rng, 1.0) + 1.5],
            ];
            (lam, g, rng.gen_range(0.05..0.6), rng.gen_range(-2.0..2.0), rng.gen_range(0.1..2.0))
        })
        .collect();
    let eps = 0.01;
    let mut det_err = Ok(0.0);
    let mut quasi_err = Ok(0.0);
    for (lam, g, theta, x, t) in &samples {
        let v = match window_grid(*lam, eps).and_then(|ug| make_vectors(f, *lam, eps, &ug)) {
            Ok(v) => v,
            Err(e) => {
                det_err = Err(e.clone());
                quasi_err = Err(e);
                break;
            }
        };
        det_err = det_err.and_then(|acc: f64| {
            let dense = lu_determinant(rep_hat(g, &v).dense())?.det;
            Ok(acc.max((dense - det2(g)).norm() / det2(g).norm()))
        });
        quasi_err = quasi_err.and_then(|acc: f64| {
            let jump = jump_g(f, *theta, *lam, tau(c(*lam), *x, *t), &v)?;
            let closed = g22_inverse_transpose_closed(f, *theta, &v)?;
            Ok(acc.max(quasidet_check(&jump, &closed)?.max_residual()))
        });
    }
    checks.record("rankone.representation_determinant", 1e-8, det_err);
    checks.record("rankone.quasideterminants", 1e-8, quasi_err);
}

fn scalar_rhp_checks(checks: &mut Checks, f: &FieldSet, th: &ThermoState, lambda0: f64) {
    let rhp = Contour::for_config(f, th, c(lambda0)).and_then(|g| DeltaRhp::new(f, th, g));
    let rhp = match rhp {
        Ok(r) => r,
        Err(e) => {
            for name in ["scalar_rhp.jump_relation", "scalar_rhp.large_lambda_fit"] {
                checks.record(name, 1.0, Err(e.clone()));
            }
            return;
        }
    };
    checks.record("scalar_rhp.jump_relation", 1e-5, rhp.jump_relation_residual(f, th, 20));
    checks.record(
        "scalar_rhp.large_lambda_fit",
        1e-3,
        rhp.fit_large_lambda(f, th).map(|fit| {
            let e = rhp.coeffs();
            let rel = |a: C64, b: C64| (a - b).norm() / b.norm().max(1e-12);
            rel(fit.delta0, e.delta0).max(rel(fit.delta1, e.delta1))
        }),
    );
    if rhp.contour.roots.is_some() {
        checks.record(
            "scalar_rhp.gamma_invariance",
            1e-8,
            rhp.contour
                .with_radius(2.0 * rhp.contour.detour_radius)
                .and_then(|g| DeltaRhp::new(f, th, g))
                .map(|other| {
                    let (a, b) = (rhp.coeffs(), other.coeffs());
                    (a.delta0 - b.delta0).norm().max((a.delta1 - b.delta1).norm())
                }),
        );
    }
}

fn pcf_checks(checks: &mut Checks, rng: &mut ChaCha8Rng, draws: usize) {
    checks.record(
        "pcf.d0_at_2",
        1e-15,
        pcf_d(c(0.0), c(2.0)).map(|v| (v.value - (-1.0f64).exp()).norm()),
    );
    let samples: Vec<(C64, C64)> = (0..draws)
        .map(|_| {
            let nu = C64::from_polar(rng.gen_range(0.0..3.0), rng.gen_range(-3.14..3.14));
            (nu, C64::from_polar(rng.gen_range(3.0..8.0), rng.gen_range(-3.14..3.14)))
        })
        .collect();
    checks.record(
        "pcf.method_agreement",
        1e-8,
        max_over(samples.iter().map(|(nu, xi)| {
            let auto = pcf_d(*nu, *xi)?;
            let (series, canc) = pcf_d_series(*nu, *xi)?;
            let (v, d) = if canc <= qnls::pcf::SERIES_MAX_CANCELLATION {
                (series.value, series.derivative)
            } else {
                pcf_d_rk4(*nu, *xi, 1e-3)?
            };
            Ok(((auto.value - v).norm() / v.norm()).max((auto.derivative - d).norm() / d.norm()))
        })),
    );
    let far: Vec<(C64, C64)> = samples.iter().map(|(nu, xi)| (*nu, xi * 5.0)).collect();
    checks.record(
        "pcf.recurrences",
        1e-8,
        max_over(samples.iter().chain(&far).map(|(nu, xi)| {
            let r = recurrence_residuals(*nu, *xi)?;
            Ok(r.r1.norm().max(r.r2.norm()) / r.scale)
        })),
    );
    checks.record(
        "pcf.weber",
        1e-7,
        max_over(samples.iter().chain(&far).map(|(nu, xi)| {
            let (res, scale) = weber_residual(*nu, *xi)?;
            Ok(res.norm() / scale)
        })),
    );
}

fn localized_checks(checks: &mut Checks, f: &FieldSet, th: &ThermoState, p: Point) {
    let m = model_scalars(f, th, c(p.lambda0()), p.x, p.t);
    let jumps = m.as_ref().map_err(Clone::clone).and_then(|m| verify_sector_jumps(m, p.t));
    checks.record("localized.sector_jumps", 1e-10, jumps.as_ref().map(JumpResiduals::max_jump).map_err(Clone::clone));
    checks.record("localized.identity", 1e-10, jumps.as_ref().map(|j| j.identity).map_err(Clone::clone));
    checks.record("localized.nu_invariance", 1e-12, jumps.as_ref().map(|j| j.nu_invariance).map_err(Clone::clone));
    checks.record(
        "localized.asymptotic_match",
        1e-3,
        m.and_then(|m| asymptotic_match_all(&m, p.t, MATCH_RADIUS))
            .map(|v| v.iter().map(|a| a.max_rel_err).fold(0.0, f64::max)),
    );
}

pub fn run_checks(ctx: &Context) -> Result<ChecksReport> {
    let e = &ctx.loaded.config.experiment;
    let draws = if e.draws == 0 { DEFAULT_DRAWS } else { e.draws };
    let mut rng = ChaCha8Rng::seed_from_u64(e.seed);
    let mut checks = Checks(Vec::new());
    let fields = ctx.loaded.fields();
    checks.record("fields.validate", 0.5, fields.as_ref().map_err(Clone::clone).and_then(|f| f.validate()).map(|_| 0.0));
    let th = ctx.loaded.thermo();
    checks.record("thermo.converged", 1.0, th.as_ref().map(|s| s.report.residual).map_err(Clone::clone));
    if let (Ok(f), Ok(th)) = (&fields, &th) {
        let p = ctx
            .evaluation_points()
            .ok()
            .and_then(|v| v.first().copied())
            .unwrap_or(Point { x: 10.0, t: 10.0 });
        rankone_checks(&mut checks, f, &mut rng, draws);
        scalar_rhp_checks(&mut checks, f, th, p.lambda0());
        localized_checks(&mut checks, f, th, p);
    }
    pcf_checks(&mut checks, &mut rng, draws);
    let all_pass = checks.0.iter().all(|c| c.pass);
    Ok(ChecksReport {
        seed: e.seed,
        draws,
        all_pass,
        checks: checks.0,
    })
}

pub fn checks(ctx: &Context) -> Result<()> {
    let report = run_checks(ctx)?;
    write_json(&ctx.path("checks.json"), &report)?;
    if let Err(e) = ctx.loaded.fields().and_then(|f| f.validate()) {
        return Err(e);
    }
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(QnlsError::Accuracy(format!("failed checks: {}", failed.join(", "))))
    }
}

struct SweepRow {
    p: Point,
    law: AsymptoticResult,
    oracle: Option<C64>,
}

pub fn sweep(ctx: &Context) -> Result<()> {
    let (f, th) = ctx.setup()?;
    let times = match &ctx.loaded.config.experiment.sweep {
        Some(r) => r.values()?,
        None => ctx.loaded.times()?,
    };
    let points = ctx.loaded.points(&times)?;
    let with_oracle = ctx.loaded.config.experiment.oracle;
    if with_oracle {
        for p in &points {
            check_envelope(ctx, &f, &th, *p)?;
        }
    }
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|p| {
            let law = assemble(&f, &th, p.x, p.t)?;
            let oracle = if with_oracle {
                Some(det_v(&ctx.loaded.kernel(&f, &th, *p)?, None)?.log_det)
            } else {
                None
            };
            Ok(SweepRow { p: *p, law, oracle })
        })
        .collect::<Result<_>>()?;
    let mut header: Vec<&str> = ASYM_HEADER.to_vec();
    header.extend(["re_log_value", "im_log_value", "re_logdet_oracle", "im_logdet_oracle"]);
    let mut table = Table::new(&header);
    for r in &rows {
        let mut row = asym_row(r.p, &r.law);
        row.extend(cplx(r.law.log_value()));
        match r.oracle {
            Some(z) => row.extend(cplx(z)),
            None => row.extend([String::new(), String::new()]),
        }
        table.push(row);
    }
    table.write(&ctx.path("sweep.csv"))
}

/// Creates the output directory.
pub fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| QnlsError::Config(format!("cannot create output directory {}: {e}", out.display())))
}
