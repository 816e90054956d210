//! Barrier constructions: the minimal positive solution of -Delta w - H w = 0
//! outside Lambda, the explicit supersolution W, the glued cosh barrier
//! family, and the comparison checks run against computed solutions.
//!
//! Barrier values are carried as logarithms; the cosh pieces are evaluated
//! through log cosh(z) = |z| + log1p(e^{-2|z|}) - log 2 so eps-sweeps never
//! overflow.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{Geometry, RadialField, RadialGrid, Tridiag};
use crate::penalization::{hardy_potential, PenalizationParams};
use crate::problem::{DomainLambda, Potential, ProblemSpec};
use crate::verify::{fit_envelope_log, DecayVariant};

fn log_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Minimal positive solution of -Delta w - H w = 0 in Lambda^c with w = 1 on
/// the outer boundary sphere of Lambda, decay-matched at R_max. Returns the
/// field (extended by 1 inside Lambda) and the sandwich constants (c, C) with
/// c r^{-(N-2)} <= w <= C r^{-(N-2)} for N >= 3, or c <= w <= C for N = 2.
pub fn minimal_solution_w(
    params: &PenalizationParams,
    lambda: &DomainLambda,
    n_dim: u32,
    grid: &Arc<RadialGrid>,
) -> Result<(RadialField, f64, f64)> {
    if n_dim < 2 {
        return Err(Error::DimensionUnsupported(n_dim, "minimal solution needs N >= 2".into()));
    }
    params
        .validate(n_dim, lambda)
        .map_err(|e| Error::FormNotPositive(e.to_string()))?;
    let r_lam = lambda.outer_radius();
    let geom = Geometry::new(grid, n_dim);
    let n = grid.len();
    // first node strictly outside the boundary sphere
    let i0 = grid.nodes.partition_point(|&r| r <= r_lam);
    if i0 + 2 >= n {
        return Err(Error::Geometry(format!(
            "grid has no exterior nodes beyond R_Lambda = {r_lam}"
        )));
    }
    // boundary value 1 is imposed at the last node with r <= R_Lambda; the
    // unknowns are the nodes i0..n
    let m = n - i0;
    let mut sub = vec![0.0; m - 1];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m - 1];
    let mut rhs = vec![0.0; m];
    for j in 0..m {
        let i = i0 + j;
        let vol = geom.vols[i];
        let h = hardy_potential(params, lambda, n_dim, grid.nodes[i])?;
        let mut d = -h;
        let t_in = geom.trans[i - 1];
        d += t_in / vol;
        if j == 0 {
            rhs[j] = t_in / vol; // Dirichlet datum w = 1 at the boundary node
        } else {
            sub[j - 1] = -t_in / vol;
        }
        if i + 1 < n {
            let t_out = geom.trans[i];
            d += t_out / vol;
            sup[j] = -t_out / vol;
        } else if n_dim >= 3 {
            d += geom.robin / vol; // decay matching w ~ r^{-(N-2)}
        } // N = 2: zero-flux closure for the bounded variant
        diag[j] = d;
    }
    let sol = Tridiag { sub, diag, sup }.solve(&rhs)?;
    let mut values = vec![0.0; n];
    for i in 0..i0 {
        values[i] = 1.0;
    }
    values[i0..].copy_from_slice(&sol);
    if values.iter().any(|&v| v <= 0.0) {
        return Err(Error::FormNotPositive(
            "minimal solution not positive: comparison principle unavailable".into(),
        ));
    }
    let pw = if n_dim >= 3 { n_dim as f64 - 2.0 } else { 0.0 };
    let mut c_lo = f64::INFINITY;
    let mut c_hi = 0.0f64;
    for (&r, &w) in grid.nodes[i0..].iter().zip(&values[i0..]) {
        let s = w * r.powf(pw);
        c_lo = c_lo.min(s);
        c_hi = c_hi.max(s);
    }
    Ok((RadialField::new(grid.clone(), values)?, c_lo, c_hi))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupersolutionPoint {
    pub value: f64,
    pub neg_laplacian: f64,
    /// -Delta W - H W, from the closed forms; nonnegative outside Lambda
    pub residual: f64,
}

/// The explicit supersolution W of -Delta - H:
/// N >= 3:  W = |x|^{-(N-2)} ((N-2) beta - kappa L^{-beta}),  L = log(|x|/rho0)
/// N = 2:   W = beta(beta+1) - kappa L^{-beta}
pub fn supersolution_w(
    params: &PenalizationParams,
    n_dim: u32,
    x_radius: f64,
) -> Result<SupersolutionPoint> {
    if x_radius <= params.rho0 {
        return Err(Error::Domain(format!(
            "supersolution needs |x| > rho0 = {}, got {x_radius}",
            params.rho0
        )));
    }
    let (kappa, beta, rho0) = (params.kappa, params.beta, params.rho0);
    let l = (x_radius / rho0).ln();
    let r = x_radius;
    match n_dim {
        2 => {
            let value = beta * (beta + 1.0) - kappa * l.powf(-beta);
            let neg_lap = kappa * beta * (beta + 1.0) / (r * r * l.powf(2.0 + beta));
            let residual = kappa * kappa / (r * r * l.powf(2.0 + 2.0 * beta));
            Ok(SupersolutionPoint { value, neg_laplacian: neg_lap, residual })
        }
        n if n >= 3 => {
            let nf = n as f64;
            let value = r.powf(2.0 - nf) * ((nf - 2.0) * beta - kappa * l.powf(-beta));
            let neg_lap = kappa * (nf - 2.0) * beta / (r.powf(nf) * l.powf(1.0 + beta))
                + kappa * beta * (beta + 1.0) / (r.powf(nf) * l.powf(2.0 + beta));
            let residual = kappa * beta * (beta + 1.0) / (r.powf(nf) * l.powf(2.0 + beta))
                + kappa * kappa / (r.powf(nf) * l.powf(1.0 + 2.0 * beta));
            Ok(SupersolutionPoint { value, neg_laplacian: neg_lap, residual })
        }
        n => Err(Error::DimensionUnsupported(n, "supersolution needs N >= 2".into())),
    }
}

/// The glued barrier family: cosh spike inside the gluing radius, the minimal
/// solution's extension outside, normalized to 1 on the sphere of radius
/// eps R about the concentration point.
#[derive(Debug, Clone)]
pub struct BarrierFamily {
    pub mu: f64,
    pub nu: f64,
    pub r_bar: f64,
    pub r_cap: f64,
    pub delta0: f64,
    pub x_eps: f64,
    pub eps: f64,
    /// log W_eps at the grid nodes
    pub log_values: Vec<f64>,
    pub grid: Arc<RadialGrid>,
    pub lambda_fit: f64,
    pub c_fit: f64,
    /// min over checked nodes of the scaled supersolution margin
    pub residual_margin: f64,
}

impl BarrierFamily {
    /// log W_eps at distance d from x_eps (continuous formula, not sampled).
    pub fn log_value_at(&self, log_w_tilde: f64, d: f64) -> f64 {
        let norm = log_cosh(self.mu * (self.r_bar / self.eps - self.r_cap));
        if d <= self.r_bar {
            log_cosh(self.mu * (self.r_bar - d) / self.eps) - norm
        } else {
            log_w_tilde - norm
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.log_values[i].exp()
    }
}

fn inf_over_lambda(pot: &Potential, lambda: &DomainLambda) -> f64 {
    let (lo, hi) = match *lambda {
        DomainLambda::Ball { radius } => (0.0, radius),
        DomainLambda::Annulus { r_inner, r_outer } => (r_inner, r_outer),
    };
    let mut inf = f64::INFINITY;
    for i in 0..=4096 {
        let r = lo + (hi - lo) * i as f64 / 4096.0;
        inf = inf.min(pot.eval(r));
    }
    inf
}

/// Construct the barrier on the given grid. `r_cap` is the radius R (the
/// normalization sphere has radius eps * r_cap); `nu` in (0,1) fixes the
/// smallness level delta0 = inf_Lambda (nu V / K)^{1/(p-1)} and the slope cap
/// mu = 0.9 sqrt((1-nu) inf_Lambda V).
pub fn barrier_w_eps(
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
    x_eps: f64,
    r_cap: f64,
    nu: f64,
    grid: &Arc<RadialGrid>,
) -> Result<BarrierFamily> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::Domain(format!("nu must lie in (0,1), got {nu}")));
    }
    let inf_v = inf_over_lambda(&spec.v, &spec.lambda);
    if !(inf_v > 0.0) {
        return Err(Error::Domain("inf_Lambda V must be positive".into()));
    }
    let mu = 0.9 * ((1.0 - nu) * inf_v).sqrt();
    // gluing radius: safely inside Lambda relative to the concentration point
    let dist_boundary = spec
        .lambda
        .boundary_radii()
        .iter()
        .map(|rb| (rb - x_eps).abs())
        .fold(f64::INFINITY, f64::min);
    let r_bar = 0.4 * dist_boundary;
    if eps * r_cap >= 0.5 * r_bar {
        return Err(Error::Geometry(format!(
            "eps R = {} too large for the gluing radius r_bar = {r_bar}",
            eps * r_cap
        )));
    }
    let delta0 = {
        let (lo, hi) = match spec.lambda {
            DomainLambda::Ball { radius } => (0.0, radius),
            DomainLambda::Annulus { r_inner, r_outer } => (r_inner, r_outer),
        };
        let mut inf = f64::INFINITY;
        for i in 0..=4096 {
            let r = lo + (hi - lo) * i as f64 / 4096.0;
            let k = spec.k.eval(r);
            if k > 0.0 {
                inf = inf.min((nu * spec.v.eval(r) / k).powf(1.0 / (spec.p - 1.0)));
            }
        }
        inf
    };
    let (w_min, _, _) = minimal_solution_w(params, &spec.lambda, spec.n_dim, grid)?;
    // w tilde: 1 deep inside Lambda, blended to the minimal solution by a
    // quintic ramp over the outer half of Lambda; since w = 1 on the boundary
    // sphere the blend is w itself outside and exactly 1 inside
    let r_lam = spec.lambda.outer_radius();
    let log_w_tilde = |r: f64, w: f64| -> f64 {
        if r <= r_lam {
            0.0
        } else {
            w.ln()
        }
    };
    let norm = log_cosh(mu * (r_bar / eps - r_cap));
    let mut log_values = Vec::with_capacity(grid.len());
    for (i, &r) in grid.nodes.iter().enumerate() {
        let d = (r - x_eps).abs();
        let lv = if d <= r_bar {
            log_cosh(mu * (r_bar - d) / eps) - norm
        } else {
            log_w_tilde(r, w_min.values[i]) - norm
        };
        log_values.push(lv);
    }
    // discrete supersolution margin of -eps^2 Delta W - eps^2 H W + (1-nu) V W
    // at nodes beyond the normalization sphere, scaled by the local row size
    let geom = Geometry::new(grid, spec.n_dim);
    let n = grid.len();
    let e2 = eps * eps;
    let w_at = |i: usize| log_values[i].exp();
    let mut margin = f64::INFINITY;
    for i in 1..n {
        let r = grid.nodes[i];
        let d = (r - x_eps).abs();
        if d < eps * r_cap {
            continue;
        }
        let vol = geom.vols[i];
        let mut flux = geom.trans[i - 1] * (w_at(i) - w_at(i - 1));
        if i + 1 < n {
            flux += geom.trans[i] * (w_at(i) - w_at(i + 1));
        } else {
            flux += geom.robin * w_at(i);
        }
        let h = hardy_potential(params, &spec.lambda, spec.n_dim, r)?;
        let res = e2 * flux / vol + (-e2 * h + (1.0 - nu) * spec.v.eval(r)) * w_at(i);
        let scale = (e2 * (geom.trans[i - 1] + if i + 1 < n { geom.trans[i] } else { 0.0 }) / vol
            + spec.v.eval(r)
            + 1.0)
            * w_at(i);
        margin = margin.min(res / scale);
    }
    let fit = fit_envelope_log(
        &grid.nodes,
        &log_values,
        x_eps,
        eps,
        spec.n_dim,
        DecayVariant::Fast,
        eps * r_cap,
    )?;
    Ok(BarrierFamily {
        mu,
        nu,
        r_bar,
        r_cap,
        delta0,
        x_eps,
        eps,
        log_values,
        grid: grid.clone(),
        lambda_fit: fit.lambda,
        c_fit: fit.c,
        residual_margin: margin,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub holds: bool,
    /// max over far nodes of u - delta0 W_eps (<= 0 when the bound holds)
    pub max_violation: f64,
    /// max over far nodes of g_eps(u) - nu V u - eps^2 H u
    pub e36_margin: f64,
}

/// Check u <= delta0 W_eps at every node beyond the normalization sphere,
/// together with the smallness hypothesis that makes the comparison machinery
/// applicable.
pub fn comparison_check(
    u: &RadialField,
    barrier: &BarrierFamily,
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
) -> Result<ComparisonReport> {
    if u.grid.nodes != barrier.grid.nodes {
        return Err(Error::GridMismatch);
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut any = false;
    for (i, &r) in u.grid.nodes.iter().enumerate() {
        let d = (r - barrier.x_eps).abs();
        if d < eps * barrier.r_cap {
            continue;
        }
        any = true;
        max_violation = max_violation.max(u.values[i] - barrier.delta0 * barrier.value(i));
    }
    if !any {
        return Err(Error::Window("no nodes beyond the normalization sphere".into()));
    }
    let e36 = crate::verify::e36_margin(
        u,
        spec,
        params,
        eps,
        barrier.nu,
        eps * barrier.r_cap,
        barrier.x_eps,
    )?;
    Ok(ComparisonReport {
        holds: max_violation <= 0.0,
        max_violation,
        e36_margin: e36,
    })
}

/// Residual of (-Delta + V) applied to the explicit subsolution
/// phi = r^{-(N-2)} (1 + r^{-delta}); nonpositive at large radii whenever
/// V(r) <= c r^{-2-delta} with small enough c — the classical lower-bound
/// device at infinity.
pub fn subsolution_residual(v: &Potential, n_dim: u32, delta: f64, r: f64) -> Result<f64> {
    if n_dim < 3 {
        return Err(Error::DimensionUnsupported(n_dim, "subsolution probe needs N >= 3".into()));
    }
    if !(delta > 0.0 && r > 0.0) {
        return Err(Error::Domain(format!("need delta > 0 and r > 0, got {delta}, {r}")));
    }
    let nf = n_dim as f64;
    let a = nf - 2.0 + delta;
    // Delta r^{-a} = a (a + 2 - N) r^{-a-2}
    let neg_lap = -a * (a + 2.0 - nf) * r.powf(-a - 2.0);
    let phi = r.powf(2.0 - nf) * (1.0 + r.powf(-delta));
    Ok(neg_lap + v.eval(r) * phi)
}
