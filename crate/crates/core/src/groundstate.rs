//! The limiting ground state w of -Delta w + w = w^p on R^N, computed by
//! shooting, plus the Sobolev quotient, the canonical mountain-pass energy
//! and the concentration-rescaled limit profiles built from it.
//!
//! A second, independent route (Nehari-projected inverse iteration on a
//! radial grid) is provided so the two can be cross-checked against each
//! other in tests.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{assemble_operator, FarFieldBc, Geometry, RadialField, RadialGrid};
use crate::problem::{eval_concentration, ProblemSpec};

const SHOOT_STEP: f64 = 1e-3;
const SHOOT_HORIZON: f64 = 40.0;

/// Radial profile of the ground state, with enough structure to evaluate it
/// (and its derivative) anywhere: dense Hermite data up to the truncation
/// radius, then the matched exponential asymptote c r^{-(N-1)/2} e^{-r}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundState {
    pub n_dim: u32,
    pub p: f64,
    /// value at the origin
    pub w0: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    /// coefficient of the far-field asymptote
    pub tail_c: f64,
    /// S = ||w||_{H^1} / ||w||_{L^{p+1}}, attained by w
    pub sobolev: f64,
    /// mountain-pass energy of the limit problem with V = K = 1
    pub energy: f64,
}

/// Exponent r_mp in the identity  c = S^{r_mp} / r_mp.
pub fn mp_exponent(p: f64) -> f64 {
    2.0 * (p + 1.0) / (p - 1.0)
}

fn rhs(n_dim: u32, p: f64, r: f64, w: f64, dw: f64) -> (f64, f64) {
    let drift = if n_dim > 1 { (n_dim as f64 - 1.0) / r * dw } else { 0.0 };
    let wp = if w > 0.0 { w.powf(p) } else { -(-w).powf(p) };
    (dw, w - wp - drift)
}

enum Shot {
    Crossed,
    TurnedUp,
    Decayed,
}

/// Integrate from the series start at r = h; optionally record the profile.
fn integrate(
    n_dim: u32,
    p: f64,
    a: f64,
    record: Option<&mut (Vec<f64>, Vec<f64>, Vec<f64>)>,
) -> Shot {
    let h = SHOOT_STEP;
    let nf = n_dim as f64;
    let mut r = h;
    let mut w = a + (a - a.powf(p)) * r * r / (2.0 * nf);
    let mut dw = (a - a.powf(p)) * r / nf;
    let mut rec = record;
    if let Some(store) = rec.as_deref_mut() {
        store.0.push(0.0);
        store.1.push(a);
        store.2.push(0.0);
        store.0.push(r);
        store.1.push(w);
        store.2.push(dw);
    }
    while r < SHOOT_HORIZON - 0.5 * h {
        // classic RK4 on (w, w')
        let (k1w, k1d) = rhs(n_dim, p, r, w, dw);
        let (k2w, k2d) = rhs(n_dim, p, r + 0.5 * h, w + 0.5 * h * k1w, dw + 0.5 * h * k1d);
        let (k3w, k3d) = rhs(n_dim, p, r + 0.5 * h, w + 0.5 * h * k2w, dw + 0.5 * h * k2d);
        let (k4w, k4d) = rhs(n_dim, p, r + h, w + h * k3w, dw + h * k3d);
        w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        dw += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
        r += h;
        if w <= 0.0 {
            return Shot::Crossed;
        }
        if dw > 0.0 && w < 1.0 {
            return Shot::TurnedUp;
        }
        if w < 1e-16 {
            break;
        }
        if let Some(store) = rec.as_deref_mut() {
            store.0.push(r);
            store.1.push(w);
            store.2.push(dw);
        }
    }
    Shot::Decayed
}

/// Compute the ground state by bisection on the shooting parameter w(0).
pub fn compute_ground_state(n_dim: u32, p: f64) -> Result<GroundState> {
    if n_dim == 0 {
        return Err(Error::DimensionUnsupported(0, "need N >= 1".into()));
    }
    // the limit equation only needs subcriticality, which is weaker than the
    // admissible window of the concentration statement
    let critical = if n_dim >= 3 {
        (n_dim as f64 + 2.0) / (n_dim as f64 - 2.0)
    } else {
        f64::INFINITY
    };
    if !(p > 1.0 && p < critical) {
        return Err(Error::Domain(format!(
            "ground state needs 1 < p < {critical}, got {p} for N = {n_dim}"
        )));
    }
    // bracket: small amplitudes turn back up, large ones cross zero
    let mut lo = 1.0 + 1e-9;
    let mut hi = 2.0;
    loop {
        match integrate(n_dim, p, hi, None) {
            Shot::Crossed => break,
            _ => {
                hi *= 2.0;
                if hi > 1e6 {
                    return Err(Error::SolverFailure(
                        "shooting bracket: no zero crossing up to a = 1e6".into(),
                    ));
                }
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match integrate(n_dim, p, mid, None) {
            Shot::Crossed => hi = mid,
            _ => lo = mid,
        }
    }
    let a = 0.5 * (lo + hi);
    let mut store = (Vec::new(), Vec::new(), Vec::new());
    integrate(n_dim, p, a, Some(&mut store));
    let (mut radii, mut values, mut derivs) = store;
    // the bracket is only ULP-wide, so the shot leaves the decaying branch
    // around r where ULP(a) e^r ~ w(r); drop the last stretch before the
    // deviation becomes visible (contamination shrinks like e^{2 dr})
    let r_last = *radii.last().unwrap_or(&0.0);
    let keep = radii.partition_point(|&r| r <= r_last - 6.0);
    radii.truncate(keep);
    values.truncate(keep);
    derivs.truncate(keep);
    if radii.len() < 100 || *radii.last().unwrap() < 10.0 {
        return Err(Error::SolverFailure(format!(
            "shooting profile truncated at r = {}",
            radii.last().unwrap_or(&0.0)
        )));
    }
    let tail_c = fit_tail(n_dim, &radii, &values)?;
    let (h1, lp1) = profile_integrals(n_dim, p, &radii, &values, &derivs);
    let sobolev = h1.sqrt() / lp1.powf(1.0 / (p + 1.0));
    let energy = 0.5 * h1 - lp1 / (p + 1.0);
    Ok(GroundState {
        n_dim,
        p,
        w0: a,
        radii,
        values,
        derivs,
        tail_c,
        sobolev,
        energy,
    })
}

/// Average of w(r) r^{(N-1)/2} e^r over the window where w has decayed to
/// [1e-6, 1e-3]; errors out if the prefactor is not flat there.
fn fit_tail(n_dim: u32, radii: &[f64], values: &[f64]) -> Result<f64> {
    let half = (n_dim as f64 - 1.0) / 2.0;
    let mut cs = Vec::new();
    for (&r, &w) in radii.iter().zip(values) {
        if w > 1e-6 && w < 1e-3 {
            cs.push(w * r.powf(half) * r.exp());
        }
    }
    if cs.len() < 10 {
        return Err(Error::Window("tail window [1e-6, 1e-3] too thin".into()));
    }
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    let spread = cs
        .iter()
        .map(|c| (c / mean - 1.0).abs())
        .fold(0.0f64, f64::max);
    if spread > 0.05 {
        return Err(Error::Window(format!(
            "tail prefactor varies by {spread:.2e} over the fit window"
        )));
    }
    Ok(mean)
}

/// (||w||_{H^1}^2, ||w||_{L^{p+1}}^{p+1}) by composite Simpson on the uniform
/// shooting nodes.
fn profile_integrals(n_dim: u32, p: f64, radii: &[f64], values: &[f64], derivs: &[f64]) -> (f64, f64) {
    let ang = crate::grids::angular_factor(n_dim);
    let nf = n_dim as f64;
    let f_h1 = |i: usize| (derivs[i] * derivs[i] + values[i] * values[i]) * radii[i].powf(nf - 1.0);
    let f_lp = |i: usize| values[i].powf(p + 1.0) * radii[i].powf(nf - 1.0);
    let n = radii.len() - 1 - (radii.len() - 1) % 2; // even number of intervals
    let h = radii[1] - radii[0];
    let simpson = |f: &dyn Fn(usize) -> f64| -> f64 {
        let mut s = f(0) + f(n);
        for i in (1..n).step_by(2) {
            s += 4.0 * f(i);
        }
        for i in (2..n).step_by(2) {
            s += 2.0 * f(i);
        }
        s * h / 3.0
    };
    (ang * simpson(&f_h1), ang * simpson(&f_lp))
}

impl GroundState {
    fn tail(&self, r: f64) -> f64 {
        let half = (self.n_dim as f64 - 1.0) / 2.0;
        self.tail_c * r.powf(-half) * (-r).exp()
    }

    /// Evaluate w at any radius: cubic Hermite on the shooting nodes, the
    /// matched asymptote beyond them.
    pub fn eval(&self, r: f64) -> f64 {
        let last = *self.radii.last().unwrap();
        if r >= last {
            return self.tail(r);
        }
        if r <= 0.0 {
            return self.w0;
        }
        let h = SHOOT_STEP;
        let i = ((r / h) as usize).min(self.radii.len() - 2);
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let dr = r1 - r0;
        let t = (r - r0) / dr;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.derivs[i] * dr, self.derivs[i + 1] * dr);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }

    pub fn deriv(&self, r: f64) -> f64 {
        let last = *self.radii.last().unwrap();
        let half = (self.n_dim as f64 - 1.0) / 2.0;
        if r >= last {
            return self.tail(r) * (-1.0 - half / r);
        }
        if r <= 0.0 {
            return 0.0;
        }
        let h = SHOOT_STEP;
        let i = ((r / h) as usize).min(self.radii.len() - 2);
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let dr = r1 - r0;
        let t = (r - r0) / dr;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.derivs[i] * dr, self.derivs[i + 1] * dr);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / dr
    }

    /// Limit profile at a concentration point with V(x*) = v_star and
    /// K(x*) = k_star:  v(y) = (v*/k*)^{1/(p-1)} w(sqrt(v*) |y|).
    pub fn rescaled(&self, v_star: f64, k_star: f64, y: f64) -> f64 {
        (v_star / k_star).powf(1.0 / (self.p - 1.0)) * self.eval(v_star.sqrt() * y)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub tail_c: f64,
    pub max_rel_deviation: f64,
    pub window: (f64, f64),
}

/// Flatness of w(r) r^{(N-1)/2} e^r over a far window — the exponential-decay
/// certificate for the computed profile.
pub fn check_exponential_decay(gs: &GroundState, r_lo: f64, r_hi: f64) -> Result<DecayReport> {
    if !(r_lo < r_hi) || r_lo <= 0.0 {
        return Err(Error::Window(format!("bad window [{r_lo}, {r_hi}]")));
    }
    let half = (gs.n_dim as f64 - 1.0) / 2.0;
    let mut max_dev = 0.0f64;
    let steps = 200;
    for i in 0..=steps {
        let r = r_lo + (r_hi - r_lo) * i as f64 / steps as f64;
        let c = gs.eval(r) * r.powf(half) * r.exp();
        max_dev = max_dev.max((c / gs.tail_c - 1.0).abs());
    }
    Ok(DecayReport {
        tail_c: gs.tail_c,
        max_rel_deviation: max_dev,
        window: (r_lo, r_hi),
    })
}

/// Mountain-pass energy of the limit problem at concentration value a_star,
/// c = S^{r_mp} / r_mp * a_star.
pub fn limit_energy(gs: &GroundState, a_star: f64) -> f64 {
    let rm = mp_exponent(gs.p);
    gs.sobolev.powf(rm) / rm * a_star
}

/// Predicted concentration level for a problem spec: the limit energy at the
/// interior infimum of the concentration function over Lambda.
pub fn predicted_level(gs: &GroundState, spec: &ProblemSpec) -> Result<f64> {
    let rep = crate::problem::check_assumption_a(spec)?;
    let _ = eval_concentration(spec, rep.argmin_radius)?;
    Ok(limit_energy(gs, rep.inf_interior))
}

/// Independent route: Nehari-projected inverse iteration on a radial grid
/// (Dirichlet truncation), finished with plain Newton steps.
pub fn ground_state_on_grid(n_dim: u32, p: f64, grid: Arc<RadialGrid>) -> Result<RadialField> {
    let geom = Geometry::new(&grid, n_dim);
    let v_nodes = vec![1.0; grid.len()];
    let op = assemble_operator(&geom, &grid, 1.0, &v_nodes, FarFieldBc::Dirichlet);
    let n = grid.len();
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(&geom.vols).map(|((x, y), v)| x * y * v).sum()
    };
    let mut u: Vec<f64> = grid.nodes.iter().map(|&r| (-0.5 * r * r).exp()).collect();
    u[n - 1] = 0.0;
    for _ in 0..200 {
        let mut rhs: Vec<f64> = u.iter().map(|&x| x.max(0.0).powf(p)).collect();
        rhs[n - 1] = 0.0;
        let mut w = op.solve(&rhs)?;
        // Nehari projection: scale t w so that <A(tw), tw> = int (tw)^{p+1}
        let au = op.apply(&w);
        let quad = inner(&au, &w);
        let pot = inner(
            &w.iter().map(|&x| x.max(0.0).powf(p)).collect::<Vec<_>>(),
            &w,
        );
        if !(quad > 0.0 && pot > 0.0) {
            return Err(Error::SolverFailure("inverse iteration degenerated".into()));
        }
        let t = (quad / pot).powf(1.0 / (p - 1.0));
        for x in w.iter_mut() {
            *x *= t;
        }
        let diff = u
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        u = w;
        if diff < 1e-10 {
            break;
        }
    }
    // Newton polish on F(u) = A u - u_+^p
    for _ in 0..30 {
        let au = op.apply(&u);
        let mut res: Vec<f64> = au
            .iter()
            .zip(&u)
            .map(|(a, x)| a - x.max(0.0).powf(p))
            .collect();
        res[n - 1] = u[n - 1];
        let rnorm = res.iter().map(|r| r.abs()).fold(0.0f64, f64::max);
        let mut jac = crate::grids::Tridiag {
            sub: op.sub.clone(),
            diag: op.diag.clone(),
            sup: op.sup.clone(),
        };
        for i in 0..n - 1 {
            jac.diag[i] -= p * u[i].max(0.0).powf(p - 1.0);
        }
        let step = jac.solve(&res)?;
        for i in 0..n {
            u[i] -= step[i];
        }
        if rnorm < 1e-12 {
            break;
        }
    }
    if u.iter().any(|x| !x.is_finite()) || u[0] < 1.0 {
        return Err(Error::SolverFailure("grid ground state diverged".into()));
    }
    RadialField::new(grid, u)
}
