use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use nls_core::problem::check_assumption_a;
use nls_core::{
    barrier_w_eps, check_solves_original, comparison_check, compute_ground_state,
    concentration_diagnostics, decay_envelope_fit, limit_energy, loglog_slope, rescaled_error,
    solve_least_energy, tail_lower_bound, threshold_bisection, BarrierFamily, ComparisonReport,
    DecayVariant, EnvelopeFit, Error, GroundState, PenalizationParams, ProblemSpec, RadialGrid,
    SolveReport, SolvesOriginalReport, SweepDiagnostics, TailReport,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, CliResult, ExitKind};

/// Everything the per-epsilon pipeline needs, computed once per run.
pub struct Prepared {
    pub config: RunConfig,
    pub params: PenalizationParams,
    pub grid: Arc<RadialGrid>,
    pub gs: GroundState,
    /// interior infimum and argmin of the concentration function
    pub inf_a: f64,
    pub argmin_a: f64,
    /// inf over Lambda of (V/K)^{1/(p-1)}, the spike-height onset
    pub onset: f64,
}

pub fn prepare(config: RunConfig) -> CliResult<Prepared> {
    config.problem.validate().map_err(|e| CliError::config(e.to_string()))?;
    let params = config.resolve_penalization()?;
    let grid = nls_core::build_grid(config.grid.core_end, config.grid.n_core, config.grid.r_max)
        .map_err(|e| CliError::config(e.to_string()))?;
    let gs = compute_ground_state(config.problem.n_dim, config.problem.p)?;
    let a_rep = check_assumption_a(&config.problem)?;
    let onset = onset_level(&config.problem);
    Ok(Prepared {
        params,
        grid,
        gs,
        inf_a: a_rep.inf_interior,
        argmin_a: a_rep.argmin_radius,
        onset,
        config,
    })
}

/// inf over Lambda of (V/K)^{1/(p-1)} by dense radial sampling.
fn onset_level(spec: &ProblemSpec) -> f64 {
    let (lo, hi) = match spec.lambda {
        nls_core::DomainLambda::Ball { radius } => (0.0, radius),
        nls_core::DomainLambda::Annulus { r_inner, r_outer } => (r_inner, r_outer),
    };
    let mut inf = f64::INFINITY;
    let m = 2000;
    for i in 0..=m {
        let r = lo + (hi - lo) * i as f64 / m as f64;
        let v = spec.v.eval(r);
        let k = spec.k.eval(r);
        if v > 0.0 && k > 0.0 {
            inf = inf.min((v / k).powf(1.0 / (spec.p - 1.0)));
        }
    }
    inf
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub residual_ok: bool,
    pub solves_original: Option<SolvesOriginalReport>,
    pub envelope: Option<EnvelopeFit>,
    pub tail: Option<TailReport>,
    pub rescaled_error: Option<f64>,
    pub comparison: Option<ComparisonReport>,
    /// comparison is skipped when eps R does not fit the gluing geometry
    pub comparison_skipped: bool,
    pub u_max_above_onset: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsReport {
    pub eps: f64,
    pub j_value: f64,
    pub j_over_eps_n: f64,
    pub norm_eps_value: f64,
    pub norm_over_eps_n2: f64,
    pub x_eps: f64,
    pub u_max: f64,
    pub newton_iters: usize,
    pub residual_max: f64,
    pub max_in_lambda: bool,
    pub verification: VerificationReport,
}

pub fn verify_solution(
    prep: &Prepared,
    rep: &SolveReport,
) -> CliResult<(VerificationReport, Option<BarrierFamily>)> {
    let spec = &prep.config.problem;
    let vc = &prep.config.verification;
    let eps = rep.eps;
    let mut passed = true;

    let residual_ok = rep.residual_max <= vc.residual_factor * rep.u_max;
    passed &= residual_ok;

    let solves_original = if vc.solves_original {
        let so = check_solves_original(&rep.solution, spec, &prep.params, eps)?;
        passed &= so.holds;
        Some(so)
    } else {
        None
    };

    let envelope = if vc.envelope {
        let fit = decay_envelope_fit(&rep.solution, rep.x_eps, eps, spec.n_dim, DecayVariant::Fast, None)?;
        passed &= fit.max_log_excess <= 0.0 && fit.lambda > 0.0;
        Some(fit)
    } else {
        None
    };

    let tail = if vc.tail {
        let t = tail_lower_bound(&rep.solution, spec.n_dim, vc.tail_window[0], vc.tail_window[1])?;
        passed &= t.holds;
        Some(t)
    } else {
        None
    };

    let rescaled = if vc.rescaled {
        let e = rescaled_error(&rep.solution, rep.x_eps, eps, &prep.gs, spec)?;
        passed &= e <= vc.rescaled_max;
        Some(e)
    } else {
        None
    };

    let mut comparison_skipped = false;
    let (comparison, barrier) = if vc.comparison {
        match barrier_w_eps(spec, &prep.params, eps, rep.x_eps, vc.barrier_r_cap, vc.barrier_nu, &prep.grid) {
            Ok(bar) => {
                let cmp = comparison_check(&rep.solution, &bar, spec, &prep.params, eps)?;
                passed &= cmp.holds;
                (Some(cmp), Some(bar))
            }
            // eps too large for the gluing geometry: the barrier only exists
            // for small eps, so this is a skip, not a failure
            Err(Error::Geometry(_)) => {
                comparison_skipped = true;
                (None, None)
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        (None, None)
    };

    let u_max_above_onset = rep.u_max > prep.onset;
    passed &= u_max_above_onset;

    Ok((
        VerificationReport {
            residual_ok,
            solves_original,
            envelope,
            tail,
            rescaled_error: rescaled,
            comparison,
            comparison_skipped,
            u_max_above_onset,
            passed,
        },
        barrier,
    ))
}

pub fn run_eps(
    prep: &Prepared,
    eps: f64,
) -> CliResult<(SolveReport, EpsReport, Option<BarrierFamily>)> {
    let spec = &prep.config.problem;
    let rep = solve_least_energy(spec, &prep.params, eps, &prep.grid, &prep.gs, None)?;
    let (verification, barrier) = verify_solution(prep, &rep)?;
    let nf = spec.n_dim as f64;
    let eps_report = EpsReport {
        eps,
        j_value: rep.j_value,
        j_over_eps_n: rep.j_value / eps.powf(nf),
        norm_eps_value: rep.norm_eps_value,
        norm_over_eps_n2: rep.norm_eps_value / eps.powf(nf / 2.0),
        x_eps: rep.x_eps,
        u_max: rep.u_max,
        newton_iters: rep.newton_iters,
        residual_max: rep.residual_max,
        max_in_lambda: rep.max_in_lambda,
        verification,
    };
    Ok((rep, eps_report, barrier))
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub struct SweepOutcome {
    pub solves: Vec<SolveReport>,
    pub rows: Vec<EpsReport>,
    pub barriers: Vec<Option<BarrierFamily>>,
    pub diagnostics: SweepDiagnostics,
    pub eps0: Option<f64>,
    pub criteria: Vec<CriterionOutcome>,
}

/// Number of worker threads actually used. NLS_SEED_DETERMINISM=strict forces
/// sequential execution; results are identical either way since the per-eps
/// pipelines are independent.
pub fn effective_jobs(requested: usize) -> usize {
    if std::env::var("NLS_SEED_DETERMINISM").as_deref() == Ok("strict") {
        1
    } else {
        requested.max(1)
    }
}

pub fn run_sweep(prep: &Prepared, jobs: usize) -> CliResult<SweepOutcome> {
    let epsilons = prep.config.epsilons();
    if epsilons.len() < 3 {
        return Err(CliError {
            kind: ExitKind::Config,
            message: Error::InsufficientSweep(epsilons.len()).to_string(),
        });
    }
    let jobs = effective_jobs(jobs).min(epsilons.len());

    type Slot = Option<CliResult<(SolveReport, EpsReport, Option<BarrierFamily>)>>;
    let results: Mutex<Vec<Slot>> = Mutex::new((0..epsilons.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= epsilons.len() {
                    break;
                }
                let out = run_eps(prep, epsilons[i]);
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });

    let mut solves = Vec::new();
    let mut rows = Vec::new();
    let mut barriers = Vec::new();
    for (i, slot) in results.into_inner().unwrap().into_iter().enumerate() {
        let (rep, row, bar) = slot.expect("worker finished").map_err(|mut e| {
            e.message = format!("eps = {}: {}", epsilons[i], e.message);
            e
        })?;
        solves.push(rep);
        rows.push(row);
        barriers.push(bar);
    }

    let diagnostics = concentration_diagnostics(&solves, &prep.config.problem, &prep.params)?;
    let eps0 = locate_threshold(prep, &epsilons);
    let criteria = sweep_criteria(prep, &rows, &solves, &diagnostics, eps0);
    Ok(SweepOutcome { solves, rows, barriers, diagnostics, eps0, criteria })
}

/// Bisect for the largest eps at which the solution still solves the original
/// problem. Returns None when no failing eps is found below the probe cap.
pub fn locate_threshold(prep: &Prepared, epsilons: &[f64]) -> Option<f64> {
    let spec = &prep.config.problem;
    let probe = |eps: f64| -> nls_core::Result<bool> {
        let rep = solve_least_energy(spec, &prep.params, eps, &prep.grid, &prep.gs, None)?;
        Ok(check_solves_original(&rep.solution, spec, &prep.params, eps)?.holds)
    };
    let eps_pass = *epsilons.last()?;
    let mut eps_fail = *epsilons.first()?;
    // walk up until the criterion fails (it must, for eps large enough)
    for _ in 0..8 {
        match probe(eps_fail) {
            Ok(true) => eps_fail *= 1.5,
            // solver breakdown at large eps also marks the failing side
            Ok(false) | Err(_) => {
                return threshold_bisection(eps_fail, eps_pass, |e| {
                    Ok(probe(e).unwrap_or(false))
                })
                .ok();
            }
        }
    }
    None
}

/// Decreasing overall: the last value improves on the first and no
/// intermediate value regresses above the starting level (small slack). A
/// three-point sweep cannot certify strict monotonicity once the deviations
/// approach the discretization floor, so the endpoints carry the claim.
fn trend_decreasing(xs: &[f64]) -> bool {
    let first = xs[0];
    let last = *xs.last().unwrap();
    last <= first && xs.iter().all(|&x| x <= first * 1.05 + 1e-12)
}

/// Evaluate the sweep-level acceptance checks; `rows` sorted by decreasing eps.
pub fn sweep_criteria(
    prep: &Prepared,
    rows: &[EpsReport],
    solves: &[SolveReport],
    diagnostics: &SweepDiagnostics,
    eps0: Option<f64>,
) -> Vec<CriterionOutcome> {
    let vc = &prep.config.verification;
    let mut out = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        out.push(CriterionOutcome { name: name.into(), passed, detail });
    };
    let last = rows.len() - 1;

    let residual_ok = rows.iter().all(|r| r.residual_max <= vc.residual_factor * r.u_max);
    let worst = rows
        .iter()
        .map(|r| r.residual_max / r.u_max)
        .fold(0.0f64, f64::max);
    push("residual", residual_ok, format!("worst residual/u_max = {worst:.3e}"));

    let limit = limit_energy(&prep.gs, prep.inf_a);
    let devs: Vec<f64> = rows.iter().map(|r| (r.j_over_eps_n / limit - 1.0).abs()).collect();
    let energy_ok = devs[last] <= 0.15 && trend_decreasing(&devs);
    push(
        "energy_limit",
        energy_ok,
        format!("|eps^-N J / {limit:.6e} - 1| = {:?}", devs.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>()),
    );

    let norms: Vec<f64> = rows.iter().map(|r| r.norm_over_eps_n2).collect();
    let (nmin, nmax) = norms.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    push(
        "norm_scaling",
        nmax / nmin < 2.0,
        format!("eps^-N/2 norm spread factor = {:.4}", nmax / nmin),
    );

    let heights_ok = rows.iter().all(|r| r.u_max > prep.onset);
    let hmin = rows.iter().map(|r| r.u_max).fold(f64::INFINITY, f64::min);
    push(
        "spike_height",
        heights_ok,
        format!("min u_max = {hmin:.4} vs onset {:.4}", prep.onset),
    );

    let so_last = rows[last]
        .verification
        .solves_original
        .as_ref()
        .map(|s| s.holds)
        .unwrap_or(false);
    let so_ok = so_last && eps0.is_some();
    push(
        "solves_original",
        so_ok,
        match eps0 {
            Some(e0) => format!("holds at eps = {}; threshold eps0 in ({e0:.4}, ...)", rows[last].eps),
            None => "no failing eps located for the threshold bisection".into(),
        },
    );

    let tail_ok = rows[last].verification.tail.as_ref().map(|t| t.holds).unwrap_or(false);
    let u = &solves[last].solution;
    let log_u: Vec<f64> = u.values.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NAN }).collect();
    let slope = loglog_slope(&u.grid.nodes, &log_u, vc.tail_window[0], vc.tail_window[1]).unwrap_or(f64::NAN);
    let slope_ok = slope >= vc.slope_range[0] && slope <= vc.slope_range[1];
    push(
        "far_field_tail",
        tail_ok && slope_ok,
        format!("log-log slope = {slope:.4} on [{}, {}]", vc.tail_window[0], vc.tail_window[1]),
    );

    let rescaled: Vec<f64> = rows
        .iter()
        .map(|r| r.verification.rescaled_error.unwrap_or(f64::INFINITY))
        .collect();
    let rescaled_ok = rescaled[last] <= vc.rescaled_max && trend_decreasing(&rescaled);
    push(
        "rescaled_convergence",
        rescaled_ok,
        format!("{:?}", rescaled.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()),
    );

    let envelope_ok = rows.iter().all(|r| {
        r.verification
            .envelope
            .as_ref()
            .map(|f| f.max_log_excess <= 0.0 && f.lambda > 0.0)
            .unwrap_or(false)
    });
    let lam = rows[last].verification.envelope.as_ref().map(|f| f.lambda).unwrap_or(f64::NAN);
    push("envelope", envelope_ok, format!("lambda at smallest eps = {lam:.4}"));

    push(
        "concentration_trend",
        diagnostics.a_trend_ok && diagnostics.outside_sup_decreasing,
        format!(
            "A trend ok = {}, outside-ball sup decreasing = {}",
            diagnostics.a_trend_ok, diagnostics.outside_sup_decreasing
        ),
    );

    out
}

#[derive(Debug, Serialize)]
pub struct SweepSummary<'a> {
    pub diagnostics: &'a SweepDiagnostics,
    pub rows: &'a [EpsReport],
    pub eps0: Option<f64>,
    pub criteria: &'a [CriterionOutcome],
    pub all_passed: bool,
}
