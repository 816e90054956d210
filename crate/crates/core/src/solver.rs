//! Penalized functional, its Euler-Lagrange residual, and the damped
//! semismooth Newton solver for least-energy solutions, with the Nehari-ray
//! verification devices.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grids::{assemble_operator, FarFieldBc, Geometry, RadialField, RadialGrid, Tridiag};
use crate::groundstate::GroundState;
use crate::penalization::{big_g_eps, g_eps, g_eps_slope, PenalizationParams};
use crate::problem::ProblemSpec;

/// Converged solution with solve diagnostics.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: RadialField,
    pub eps: f64,
    pub j_value: f64,
    pub norm_eps_value: f64,
    /// radius of the node attaining the maximum
    pub x_eps: f64,
    pub u_max: f64,
    pub newton_iters: usize,
    pub residual_max: f64,
    /// max-norm residual after each Newton step
    pub residual_history: Vec<f64>,
    pub max_in_lambda: bool,
}

/// J_eps(u) = 1/2 int (eps^2 |grad u|^2 + V u^2) - int G_eps(x, u), evaluated
/// with exactly the quadratures whose gradient is `residual` (including the
/// decay-matched boundary term). G_eps is extended by zero for u <= 0.
pub fn functional_j(
    field: &RadialField,
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
) -> Result<f64> {
    let geom = Geometry::new(&field.grid, spec.n_dim);
    let grad = geom.grad_energy(&field.values);
    let n = field.values.len();
    let boundary = geom.robin * field.values[n - 1] * field.values[n - 1];
    let mut mass = 0.0;
    let mut big_g = 0.0;
    for (i, (&r, &u)) in field.grid.nodes.iter().zip(&field.values).enumerate() {
        mass += geom.vols[i] * spec.v.eval(r) * u * u;
        if u > 0.0 {
            big_g += geom.vols[i] * big_g_eps(spec, params, eps, r, u)?;
        }
    }
    Ok(geom.ang * (0.5 * (eps * eps * (grad + boundary) + mass) - big_g))
}

/// Nodal Euler-Lagrange residual  A u - g_eps(x, u_+)  with the decay-matched
/// far-field closure; this is the gradient of `functional_j` in the
/// cell-volume inner product.
pub fn residual(
    field: &RadialField,
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
) -> Result<RadialField> {
    let geom = Geometry::new(&field.grid, spec.n_dim);
    let v_nodes: Vec<f64> = field.grid.nodes.iter().map(|&r| spec.v.eval(r)).collect();
    let op = assemble_operator(&geom, &field.grid, eps, &v_nodes, FarFieldBc::DecayMatch);
    let mut res = op.apply(&field.values);
    for (i, (&r, &u)) in field.grid.nodes.iter().zip(&field.values).enumerate() {
        res[i] -= g_eps(spec, params, eps, r, u.max(0.0))?;
    }
    RadialField::new(field.grid.clone(), res)
}

fn res_max(res: &[f64]) -> f64 {
    res.iter().map(|r| r.abs()).fold(0.0, f64::max)
}

struct NewtonOutcome {
    values: Vec<f64>,
    iters: usize,
    history: Vec<f64>,
}

fn newton_solve(
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
    grid: &Arc<RadialGrid>,
    init: Vec<f64>,
) -> Result<NewtonOutcome> {
    let geom = Geometry::new(grid, spec.n_dim);
    let v_nodes: Vec<f64> = grid.nodes.iter().map(|&r| spec.v.eval(r)).collect();
    let op = assemble_operator(&geom, grid, eps, &v_nodes, FarFieldBc::DecayMatch);
    let n = grid.len();
    let eval_res = |u: &[f64]| -> Result<Vec<f64>> {
        let mut r = op.apply(u);
        for i in 0..n {
            r[i] -= g_eps(spec, params, eps, grid.nodes[i], u[i].max(0.0))?;
        }
        Ok(r)
    };
    // merit uses the cell-volume weights so it matches the functional metric
    let merit = |r: &[f64]| -> f64 {
        r.iter().zip(&geom.vols).map(|(x, v)| x * x * v).sum::<f64>()
    };
    let mut u = init;
    let mut res = eval_res(&u)?;
    let mut history = vec![res_max(&res)];
    let mut iters = 0;
    for _ in 0..100 {
        let u_max = u.iter().cloned().fold(0.0f64, f64::max);
        let tol = 1e-10 * u_max.max(1e-12);
        if res_max(&res) <= tol {
            let outcome = NewtonOutcome { values: u, iters, history };
            return Ok(outcome);
        }
        let mut jac = Tridiag {
            sub: op.sub.clone(),
            diag: op.diag.clone(),
            sup: op.sup.clone(),
        };
        for i in 0..n {
            jac.diag[i] -= g_eps_slope(spec, params, eps, grid.nodes[i], u[i].max(0.0))?;
        }
        let step = jac.solve(&res)?;
        let m0 = merit(&res);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = u
                .iter()
                .zip(&step)
                .map(|(x, s)| (x - t * s).max(0.0))
                .collect();
            let trial_res = eval_res(&trial)?;
            if merit(&trial_res) <= (1.0 - 1e-4 * t) * m0 {
                u = trial;
                res = trial_res;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iters += 1;
        history.push(res_max(&res));
        if !accepted {
            return Err(Error::SolverFailure(format!(
                "Armijo line search stalled at eps = {eps}; residual history {history:?}"
            )));
        }
    }
    Err(Error::SolverFailure(format!(
        "Newton did not converge in 100 iterations at eps = {eps}; residual history {history:?}"
    )))
}

fn auto_init(
    spec: &ProblemSpec,
    eps: f64,
    grid: &Arc<RadialGrid>,
    gs: &GroundState,
) -> Result<Vec<f64>> {
    let rep = crate::problem::check_assumption_a(spec)?;
    let x_star = rep.argmin_radius;
    let v_star = spec.v.eval(x_star);
    let k_star = spec.k.eval(x_star);
    if !(v_star > 0.0 && k_star > 0.0) {
        return Err(Error::UndefinedConcentration(x_star));
    }
    let amp = (v_star / k_star).powf(1.0 / (spec.p - 1.0));
    Ok(grid
        .nodes
        .iter()
        .map(|&r| amp * gs.eval(v_star.sqrt() * (r - x_star).abs() / eps))
        .collect())
}

fn finish_report(
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
    grid: &Arc<RadialGrid>,
    outcome: NewtonOutcome,
) -> Result<SolveReport> {
    let solution = RadialField::new(grid.clone(), outcome.values)?;
    let u_max = solution.max_value();
    if u_max < 1e-8 {
        return Err(Error::DegenerateSolution);
    }
    let res = residual(&solution, spec, params, eps)?;
    let j_value = functional_j(&solution, spec, params, eps)?;
    let norm = crate::grids::norm_eps(&solution, spec.n_dim, eps, &spec.v);
    let x_eps = solution.argmax_radius();
    Ok(SolveReport {
        max_in_lambda: spec.lambda.contains(x_eps),
        residual_max: res_max(&res.values),
        solution,
        eps,
        j_value,
        norm_eps_value: norm,
        x_eps,
        u_max,
        newton_iters: outcome.iters,
        residual_history: outcome.history,
    })
}

/// Least-energy solve: damped semismooth Newton from the rescaled-ground-state
/// ansatz; on failure, continuation walks down from a larger eps where the
/// ansatz is good enough.
pub fn solve_least_energy(
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
    grid: &Arc<RadialGrid>,
    gs: &GroundState,
    init: Option<&RadialField>,
) -> Result<SolveReport> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let init_vals = match init {
        Some(f) => {
            if f.grid.nodes != grid.nodes {
                return Err(Error::GridMismatch);
            }
            f.values.clone()
        }
        None => auto_init(spec, eps, grid, gs)?,
    };
    match newton_solve(spec, params, eps, grid, init_vals) {
        Ok(out) => finish_report(spec, params, eps, grid, out),
        Err(first_err) => {
            if init.is_some() {
                return Err(first_err);
            }
            // find a larger eps where the ansatz converges, then walk down
            let mut e_hi = eps;
            let mut warm: Option<Vec<f64>> = None;
            for _ in 0..8 {
                e_hi *= 2.0;
                if let Ok(out) = newton_solve(spec, params, e_hi, grid, auto_init(spec, e_hi, grid, gs)?) {
                    warm = Some(out.values);
                    break;
                }
            }
            let mut current = warm.ok_or(first_err)?;
            let mut e = e_hi;
            loop {
                e = (e * 0.75).max(eps);
                let out = newton_solve(spec, params, e, grid, current)?;
                if e <= eps {
                    return finish_report(spec, params, eps, grid, out);
                }
                current = out.values;
            }
        }
    }
}

fn golden_max<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..200 {
        if b - a < 1e-12 * b.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, f(t)?))
}

/// Maximize t -> J(t u) along the ray through `field`. For fields supported in
/// Lambda the closed form t* = (||u||_eps^2 / int K u^{p+1})^{1/(p-1)} holds.
pub fn nehari_project(
    field: &RadialField,
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
) -> Result<(f64, f64)> {
    if field.max_value() <= 0.0 {
        return Err(Error::Domain("Nehari ray needs a nonnegative nonzero field".into()));
    }
    let j_of = |t: f64| -> Result<f64> {
        let scaled = RadialField {
            grid: field.grid.clone(),
            values: field.values.iter().map(|&u| t * u).collect(),
        };
        functional_j(&scaled, spec, params, eps)
    };
    // find t_end with J < 0 past the maximum
    let mut t_end = 1.0;
    let mut found = false;
    for _ in 0..60 {
        if j_of(t_end)? < 0.0 {
            found = true;
            break;
        }
        t_end *= 2.0;
    }
    if !found {
        return Err(Error::NoMaximum(format!(
            "J(t u) stayed nonnegative up to t = {t_end:.3e}"
        )));
    }
    let (t_star, j_star) = golden_max(&j_of, 0.0, t_end)?;
    if j_star <= 0.0 {
        return Err(Error::NoMaximum("ray maximum is nonpositive".into()));
    }
    Ok((t_star, j_star))
}

/// Max of J along the ray through the converged solution — the path upper
/// bound for the mountain-pass level, equal to J(u) when t* = 1.
pub fn mountain_pass_level_estimate(
    report: &SolveReport,
    spec: &ProblemSpec,
    params: &PenalizationParams,
) -> Result<f64> {
    let (_, j_star) = nehari_project(&report.solution, spec, params, report.eps)?;
    Ok(j_star.max(report.j_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::build_grid;
    use crate::groundstate::compute_ground_state;
    use crate::penalization::select_params;
    use crate::problem::{DomainLambda, Potential};

    fn plateau_spec() -> ProblemSpec {
        ProblemSpec {
            n_dim: 3,
            p: 4.0,
            epsilons: vec![0.2, 0.1, 0.05],
            v: Potential::Plateau {
                poly: vec![1.0, 0.0, 1.0],
                r_on: 2.0,
                r_off: 3.0,
            },
            k: Potential::Constant { value: 1.0 },
            lambda: DomainLambda::Ball { radius: 1.0 },
            sigma: 0.0,
            m_bound: 1.0,
        }
    }

    fn setup() -> (ProblemSpec, PenalizationParams, Arc<RadialGrid>) {
        let spec = plateau_spec();
        let params = select_params(&spec, 0.5).unwrap();
        let grid = build_grid(5.0, 2048, 1000.0).unwrap();
        (spec, params, grid)
    }

    fn bump(r: f64, c: f64, w: f64) -> f64 {
        let t = (r - c) / w;
        if t.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - t * t)).exp()
        }
    }

    #[test]
    fn functional_vanishes_at_zero() {
        let (spec, params, grid) = setup();
        let zero = RadialField::zeros(grid);
        assert_eq!(functional_j(&zero, &spec, &params, 0.1).unwrap(), 0.0);
        let res = residual(&zero, &spec, &params, 0.1).unwrap();
        assert!(res.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn interior_ray_is_pure_power() {
        // for u supported in Lambda with K = 1:
        // J(t u) = t^2 a / 2 - t^{p+1} b / (p+1) exactly in the discrete
        // quadratures
        let (spec, params, grid) = setup();
        let eps = 0.15;
        let u = RadialField::from_fn(grid.clone(), |r| bump(r, 0.5, 0.4));
        let geom = Geometry::new(&grid, 3);
        let a = {
            let n = crate::grids::norm_eps(&u, 3, eps, &spec.v);
            n * n
        };
        let b: f64 = geom.ang
            * grid
                .nodes
                .iter()
                .zip(&u.values)
                .zip(&geom.vols)
                .map(|((_, &x), &v)| v * x.powf(spec.p + 1.0))
                .sum::<f64>();
        for t in [0.3, 1.0, 2.7] {
            let scaled = RadialField::from_fn(grid.clone(), |r| t * bump(r, 0.5, 0.4));
            let j = functional_j(&scaled, &spec, &params, eps).unwrap();
            let expect = t * t * a / 2.0 - t.powf(spec.p + 1.0) * b / (spec.p + 1.0);
            assert!((j - expect).abs() < 1e-12 * expect.abs().max(1.0), "t = {t}");
        }
        // unbounded below along the ray
        let big = RadialField::from_fn(grid, |r| 50.0 * bump(r, 0.5, 0.4));
        assert!(functional_j(&big, &spec, &params, eps).unwrap() < 0.0);
    }

    #[test]
    fn residual_is_gradient_of_functional() {
        let (spec, params, grid) = setup();
        let eps = 0.2;
        let geom = Geometry::new(&grid, 3);
        let base = RadialField::from_fn(grid.clone(), |r| 1.2 * bump(r, 0.6, 0.5) + 0.3 * bump(r, 1.8, 0.9));
        let res = residual(&base, &spec, &params, eps).unwrap();
        let mut state = 0xdeadbeefcafeu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for k in 0..20 {
            let (c, w) = (0.3 + 3.0 * next(), 0.2 + 0.8 * next());
            let phi = RadialField::from_fn(grid.clone(), |r| bump(r, c, w));
            let h = 1e-5;
            let plus = RadialField::from_fn(grid.clone(), |r| {
                1.2 * bump(r, 0.6, 0.5) + 0.3 * bump(r, 1.8, 0.9) + h * bump(r, c, w)
            });
            let minus = RadialField::from_fn(grid.clone(), |r| {
                1.2 * bump(r, 0.6, 0.5) + 0.3 * bump(r, 1.8, 0.9) - h * bump(r, c, w)
            });
            let fd = (functional_j(&plus, &spec, &params, eps).unwrap()
                - functional_j(&minus, &spec, &params, eps).unwrap())
                / (2.0 * h);
            let pairing: f64 = geom.ang
                * res
                    .values
                    .iter()
                    .zip(&phi.values)
                    .zip(&geom.vols)
                    .map(|((r, p), v)| r * p * v)
                    .sum::<f64>();
            assert!(
                (fd - pairing).abs() <= 1e-5 * pairing.abs().max(1e-8),
                "direction {k}: fd {fd} vs pairing {pairing}"
            );
        }
    }

    #[test]
    fn nehari_closed_form_for_interior_fields() {
        let (spec, params, grid) = setup();
        let eps = 0.15;
        let u = RadialField::from_fn(grid.clone(), |r| bump(r, 0.5, 0.4));
        let geom = Geometry::new(&grid, 3);
        let a = {
            let n = crate::grids::norm_eps(&u, 3, eps, &spec.v);
            n * n
        };
        let b: f64 = geom.ang
            * u.values
                .iter()
                .zip(&geom.vols)
                .map(|(&x, &v)| v * x.powf(spec.p + 1.0))
                .sum::<f64>();
        let t_exact = (a / b).powf(1.0 / (spec.p - 1.0));
        let (t_star, j_star) = nehari_project(&u, &spec, &params, eps).unwrap();
        assert!((t_star - t_exact).abs() < 1e-6 * t_exact, "{t_star} vs {t_exact}");
        assert!(j_star > 0.0);
        // doubling the field halves t*
        let double = RadialField::from_fn(grid, |r| 2.0 * bump(r, 0.5, 0.4));
        let (t2, _) = nehari_project(&double, &spec, &params, eps).unwrap();
        assert!((t2 - 0.5 * t_star).abs() < 1e-6 * t_star);
    }

    #[test]
    fn solves_plateau_problem() {
        let (spec, params, grid) = setup();
        let gs = compute_ground_state(3, 4.0).unwrap();
        let rep = solve_least_energy(&spec, &params, 0.1, &grid, &gs, None).unwrap();
        assert!(rep.residual_max <= 1e-8 * rep.u_max, "residual {}", rep.residual_max);
        assert!(rep.solution.values.iter().all(|&x| x >= 0.0));
        assert_eq!(rep.x_eps, 0.0);
        assert!(rep.max_in_lambda);
        // amplitude approaches (V(0)/K(0))^{1/(p-1)} w(0) = w0
        assert!(
            (rep.u_max - gs.w0).abs() < 0.1 * gs.w0,
            "u_max {} vs w0 {}",
            rep.u_max,
            gs.w0
        );
        // nondegeneracy floor: amplitude above inf_Lambda (V/K)^{1/(p-1)} = 1
        assert!(rep.u_max > 1.0);
        // restarting from the solution is a fixed point
        let again = solve_least_energy(&spec, &params, 0.1, &grid, &gs, Some(&rep.solution)).unwrap();
        assert!(again.newton_iters <= 1);
        assert_eq!(again.solution.values, rep.solution.values);
        // converged solutions sit on their own Nehari maximum
        let (t_star, _) = nehari_project(&rep.solution, &spec, &params, 0.1).unwrap();
        assert!((t_star - 1.0).abs() < 1e-4, "t* = {t_star}");
        let level = mountain_pass_level_estimate(&rep, &spec, &params).unwrap();
        assert!((level - rep.j_value).abs() < 1e-4 * rep.j_value.abs());
        assert!(level >= rep.j_value - 1e-10);
    }

    #[test]
    fn ray_is_unimodal_through_solution() {
        let (spec, params, grid) = setup();
        let gs = compute_ground_state(3, 4.0).unwrap();
        let rep = solve_least_energy(&spec, &params, 0.15, &grid, &gs, None).unwrap();
        let mut t_end = 1.0;
        while functional_j(
            &RadialField::from_fn(grid.clone(), |r| t_end * rep.solution.interp(r)),
            &spec,
            &params,
            0.15,
        )
        .unwrap()
            >= 0.0
        {
            t_end *= 2.0;
        }
        let mut prev = 0.0;
        let mut rising = true;
        let mut flips = 0;
        for i in 1..=200 {
            let t = t_end * i as f64 / 200.0;
            let scaled = RadialField {
                grid: grid.clone(),
                values: rep.solution.values.iter().map(|&u| t * u).collect(),
            };
            let j = functional_j(&scaled, &spec, &params, 0.15).unwrap();
            if rising && j < prev {
                rising = false;
                flips += 1;
            } else if !rising && j > prev + 1e-12 * j.abs().max(1.0) {
                flips += 1;
            }
            prev = j;
        }
        assert!(flips <= 1, "ray not unimodal: {flips} direction changes");
    }

    #[test]
    fn zero_init_reports_degenerate() {
        let (spec, params, grid) = setup();
        let gs = compute_ground_state(3, 4.0).unwrap();
        let zero = RadialField::zeros(grid.clone());
        assert!(matches!(
            solve_least_energy(&spec, &params, 0.1, &grid, &gs, Some(&zero)),
            Err(Error::DegenerateSolution)
        ));
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let (spec, params, grid) = setup();
        let gs = compute_ground_state(3, 4.0).unwrap();
        assert!(solve_least_energy(&spec, &params, 0.0, &grid, &gs, None).is_err());
    }
}
