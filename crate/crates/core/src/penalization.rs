//! The Hardy-type penalization potential H, the truncated nonlinearity
//! g_eps and its antiderivative G_eps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{DomainLambda, ProblemSpec};

/// Parameters (kappa, beta, rho0, rho) of the penalization potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenalizationParams {
    pub kappa: f64,
    pub beta: f64,
    pub rho0: f64,
    pub rho: f64,
}

impl PenalizationParams {
    /// Largest admissible kappa for the given geometry:
    /// ((N-2)^2/4) (log rho/rho0)^{1+beta} for N >= 3,
    /// (1/4) (log rho/rho0)^{beta} for N = 2.
    pub fn kappa_bound(n_dim: u32, beta: f64, rho0: f64, rho: f64) -> f64 {
        let l = (rho / rho0).ln();
        if n_dim >= 3 {
            let c = (n_dim as f64 - 2.0) * (n_dim as f64 - 2.0) / 4.0;
            c * l.powf(1.0 + beta)
        } else {
            0.25 * l.powf(beta)
        }
    }

    /// The quadratic-form margin constant:
    /// (N-2)^2/4 - kappa/(log rho/rho0)^{1+beta} for N >= 3,
    /// 1/4 - kappa/(log rho/rho0)^{beta} for N = 2.
    pub fn form_bound(&self, n_dim: u32) -> f64 {
        let l = (self.rho / self.rho0).ln();
        if n_dim >= 3 {
            let c = (n_dim as f64 - 2.0) * (n_dim as f64 - 2.0) / 4.0;
            c - self.kappa / l.powf(1.0 + self.beta)
        } else {
            0.25 - self.kappa / l.powf(self.beta)
        }
    }

    pub fn validate(&self, n_dim: u32, lambda: &DomainLambda) -> Result<()> {
        if n_dim < 2 {
            return Err(Error::DimensionUnsupported(n_dim, "penalization defined for N >= 2".into()));
        }
        if !(self.rho0 > 0.0 && self.rho0 < self.rho) {
            return Err(Error::Config("penalization requires 0 < rho0 < rho".into()));
        }
        if !(self.kappa > 0.0 && self.beta > 0.0) {
            return Err(Error::Config("penalization requires kappa > 0 and beta > 0".into()));
        }
        let inradius = lambda.inradius_at_origin();
        if !(self.rho < inradius) {
            return Err(Error::InvalidRegion(format!(
                "closure of B(0, rho = {}) must lie inside Lambda (inradius {})",
                self.rho, inradius
            )));
        }
        let bound = Self::kappa_bound(n_dim, self.beta, self.rho0, self.rho);
        if !(self.kappa < bound) {
            return Err(Error::FormNotPositive(format!(
                "kappa = {} must be below {} for the Hardy form to stay positive",
                self.kappa, bound
            )));
        }
        Ok(())
    }
}

/// Choose penalization parameters from the region geometry:
/// rho is half the inradius, rho0 = rho/e, beta = 1 and
/// kappa = safety * kappa_bound.
pub fn select_params(spec: &ProblemSpec, safety: f64) -> Result<PenalizationParams> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::Config("safety factor must lie in (0, 1)".into()));
    }
    let inradius = spec.lambda.inradius_at_origin();
    if inradius <= 0.0 {
        return Err(Error::InvalidRegion(
            "Lambda must contain a ball around the origin".into(),
        ));
    }
    let rho = 0.5 * inradius;
    let rho0 = rho / std::f64::consts::E;
    let beta = 1.0;
    let kappa = safety * PenalizationParams::kappa_bound(spec.n_dim, beta, rho0, rho);
    let params = PenalizationParams { kappa, beta, rho0, rho };
    params.validate(spec.n_dim, &spec.lambda)?;
    Ok(params)
}

/// H(x) = kappa (1 - chi_Lambda) / (|x|^2 (log |x|/rho0)^{1+beta});
/// the log exponent becomes 2+beta in dimension two.
pub fn hardy_potential(
    params: &PenalizationParams,
    lambda: &DomainLambda,
    n_dim: u32,
    r: f64,
) -> Result<f64> {
    if lambda.contains(r) {
        return Ok(0.0);
    }
    if r <= params.rho0 {
        return Err(Error::InconsistentRegion(r, params.rho0));
    }
    let expo = if n_dim >= 3 { 1.0 + params.beta } else { 2.0 + params.beta };
    let l = (r / params.rho0).ln();
    Ok(params.kappa / (r * r * l.powf(expo)))
}

/// g_eps(x, s) = chi_Lambda K s^p + min(eps^2 H, K s^{p-1}) s for s >= 0.
pub fn g_eps(
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
    r: f64,
    s: f64,
) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::Domain(format!("g_eps defined on s >= 0, got {s}")));
    }
    let k = spec.k.eval(r);
    if spec.lambda.contains(r) {
        return Ok(k * s.powf(spec.p));
    }
    let h = hardy_potential(params, &spec.lambda, spec.n_dim, r)?;
    let cap = eps * eps * h;
    let pure = k * s.powf(spec.p - 1.0);
    Ok(cap.min(pure) * s)
}

/// Derivative of g_eps in s along the a.e. branch (semismooth Newton slope).
pub fn g_eps_slope(
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
    r: f64,
    s: f64,
) -> Result<f64> {
    let s = s.max(0.0);
    let k = spec.k.eval(r);
    if spec.lambda.contains(r) {
        return Ok(spec.p * k * s.powf(spec.p - 1.0));
    }
    let h = hardy_potential(params, &spec.lambda, spec.n_dim, r)?;
    let cap = eps * eps * h;
    let pure = k * s.powf(spec.p - 1.0);
    if pure < cap {
        Ok(spec.p * k * s.powf(spec.p - 1.0))
    } else {
        Ok(cap)
    }
}

/// Switch height s* = (eps^2 H / K)^{1/(p-1)}, computed in log space;
/// infinite when K vanishes or the point lies in Lambda.
pub fn switch_height(
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
    r: f64,
) -> Result<f64> {
    if spec.lambda.contains(r) {
        return Ok(f64::INFINITY);
    }
    let k = spec.k.eval(r);
    if k == 0.0 {
        return Ok(f64::INFINITY);
    }
    let h = hardy_potential(params, &spec.lambda, spec.n_dim, r)?;
    if h == 0.0 {
        return Ok(0.0);
    }
    let log_cap = 2.0 * eps.ln() + h.ln();
    Ok(((log_cap - k.ln()) / (spec.p - 1.0)).exp())
}

/// Closed-form antiderivative G_eps(x, s) = int_0^s g_eps(x, t) dt.
pub fn big_g_eps(
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
    r: f64,
    s: f64,
) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::Domain(format!("G_eps defined on s >= 0, got {s}")));
    }
    let k = spec.k.eval(r);
    if spec.lambda.contains(r) {
        return Ok(k * s.powf(spec.p + 1.0) / (spec.p + 1.0));
    }
    if k == 0.0 {
        return Ok(0.0);
    }
    let h = hardy_potential(params, &spec.lambda, spec.n_dim, r)?;
    let s_star = switch_height(spec, params, eps, r)?;
    if s <= s_star {
        Ok(k * s.powf(spec.p + 1.0) / (spec.p + 1.0))
    } else {
        let cap = eps * eps * h;
        Ok(k * s_star.powf(spec.p + 1.0) / (spec.p + 1.0) + cap * (s * s - s_star * s_star) / 2.0)
    }
}

/// One violated sample in a g-properties report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GViolation {
    pub r: f64,
    pub s: f64,
    pub property: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GPropertiesReport {
    pub ok: bool,
    pub violations: Vec<GViolation>,
    /// max of g/s at the small-s probes (g1: should be near zero)
    pub g1_max_ratio: f64,
    /// max of g/s^p at the large-s probes (g2: should stay bounded)
    pub g2_max_ratio: f64,
}

/// Check (g1)-(g4) on the sample set. (g3)/(g4) are exact algebra up to
/// roundoff; (g1)/(g2) are probed as limit ratios at s in {1e-6, 1e-4} and
/// {1e2, 1e4}.
pub fn verify_g_properties(
    spec: &ProblemSpec,
    params: &PenalizationParams,
    eps: f64,
    samples: &[(f64, f64)],
) -> Result<GPropertiesReport> {
    let tol = 1e-12;
    let mut violations = Vec::new();
    let mut g1_max: f64 = 0.0;
    let mut g2_max: f64 = 0.0;
    for &(r, s) in samples {
        if !(s > 0.0) {
            return Err(Error::Domain("g-property samples need s > 0".into()));
        }
        let g = g_eps(spec, params, eps, r, s)?;
        let big_g = big_g_eps(spec, params, eps, r, s)?;
        let scale = (s * g).abs().max(big_g.abs()).max(1e-300);
        if spec.lambda.contains(r) {
            // (g3): 0 <= (p+1) G <= s g
            let lhs = (spec.p + 1.0) * big_g;
            if big_g < -tol * scale || lhs > s * g + tol * scale {
                violations.push(GViolation {
                    r,
                    s,
                    property: "g3".into(),
                    lhs,
                    rhs: s * g,
                });
            }
        } else {
            // (g4): 0 <= 2G <= s g <= eps^2 H s^2
            let h = hardy_potential(params, &spec.lambda, spec.n_dim, r)?;
            let cap = eps * eps * h * s * s;
            if big_g < -tol * scale || 2.0 * big_g > s * g + tol * scale.max(cap) || s * g > cap + tol * cap.max(scale) {
                violations.push(GViolation {
                    r,
                    s,
                    property: "g4".into(),
                    lhs: 2.0 * big_g,
                    rhs: cap,
                });
            }
        }
        // limit-ratio probes at fixed heights
        for s_small in [1e-6, 1e-4] {
            let g = g_eps(spec, params, eps, r, s_small)?;
            g1_max = g1_max.max(g / s_small);
        }
        for s_large in [1e2, 1e4] {
            let g = g_eps(spec, params, eps, r, s_large)?;
            g2_max = g2_max.max(g / s_large.powf(spec.p));
        }
    }
    Ok(GPropertiesReport {
        ok: violations.is_empty(),
        violations,
        g1_max_ratio: g1_max,
        g2_max_ratio: g2_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Potential;

    fn spec_with(n_dim: u32, p: f64, k: Potential) -> ProblemSpec {
        ProblemSpec {
            n_dim,
            p,
            epsilons: vec![0.1],
            v: Potential::Constant { value: 1.0 },
            k,
            lambda: DomainLambda::Ball { radius: 1.0 },
            sigma: if n_dim >= 3 { (n_dim as f64 - 2.0) * p - n_dim as f64 - 0.5 } else { -2.5 },
            m_bound: 2.0,
        }
    }

    fn params_unit_log() -> PenalizationParams {
        // rho/rho0 = e so log = 1
        PenalizationParams {
            kappa: 0.125,
            beta: 1.0,
            rho0: 0.5 / std::f64::consts::E,
            rho: 0.5,
        }
    }

    #[test]
    fn select_params_examples() {
        let spec = spec_with(3, 4.0, Potential::Constant { value: 1.0 });
        let p = select_params(&spec, 0.5).unwrap();
        assert!((p.kappa - 0.125).abs() < 1e-14);
        assert!((p.rho - 0.5).abs() < 1e-14);
        assert!(((p.rho / p.rho0).ln() - 1.0).abs() < 1e-14);

        let spec5 = spec_with(5, 2.0, Potential::Constant { value: 1.0 });
        let p5 = select_params(&spec5, 0.9).unwrap();
        assert!((p5.kappa - 2.025).abs() < 1e-12);

        let spec2 = spec_with(2, 3.0, Potential::Constant { value: 1.0 });
        let p2 = select_params(&spec2, 0.5).unwrap();
        assert!((p2.kappa - 0.125).abs() < 1e-14);
    }

    #[test]
    fn select_params_requires_interior_origin() {
        let mut spec = spec_with(3, 4.0, Potential::Constant { value: 1.0 });
        spec.lambda = DomainLambda::Annulus { r_inner: 0.5, r_outer: 1.0 };
        assert!(matches!(select_params(&spec, 0.5), Err(Error::InvalidRegion(_))));
    }

    #[test]
    fn hardy_potential_values() {
        let lambda = DomainLambda::Ball { radius: 1.5 };
        let p = PenalizationParams { kappa: 1.0, beta: 1.0, rho0: 1.0, rho: 1.4 };
        // inside Lambda
        assert_eq!(hardy_potential(&p, &lambda, 3, 0.7).unwrap(), 0.0);
        // N=3, |x| = e^2: H = 1/(e^4 * 2^2)
        let e2 = std::f64::consts::E * std::f64::consts::E;
        let h = hardy_potential(&p, &lambda, 3, e2).unwrap();
        assert!((h - 1.0 / (4.0 * e2 * e2)).abs() < 1e-15);
        assert!((h - 0.004_579_5).abs() < 1e-6);
        // N=2, |x| = e: exponent 2+beta = 3, H = e^{-2}
        let h2 = hardy_potential(&p, &lambda, 2, std::f64::consts::E).unwrap();
        assert!((h2 - (-2.0f64).exp()).abs() < 1e-15);
        // outside Lambda with r <= rho0 is inconsistent
        let tight = DomainLambda::Ball { radius: 0.5 };
        assert!(matches!(
            hardy_potential(&p, &tight, 3, 0.8),
            Err(Error::InconsistentRegion(..))
        ));
    }

    #[test]
    fn hardy_identity_outside() {
        // H * |x|^2 (log|x|/rho0)^{1+beta} = kappa exactly for x outside Lambda
        let lambda = DomainLambda::Ball { radius: 1.0 };
        let p = params_unit_log();
        for r in [1.1, 2.0, 17.0, 400.0] {
            let h = hardy_potential(&p, &lambda, 3, r).unwrap();
            let back = h * r * r * (r / p.rho0).ln().powf(1.0 + p.beta);
            assert!((back - p.kappa).abs() < 1e-15 * p.kappa.max(back));
        }
    }

    #[test]
    fn g_branches() {
        // x in Lambda, K=2, p=2, s=3 -> 18
        let spec = spec_with(3, 2.0, Potential::Constant { value: 2.0 });
        let prm = params_unit_log();
        assert!((g_eps(&spec, &prm, 0.1, 0.5, 3.0).unwrap() - 18.0).abs() < 1e-12);

        // outside: small-s branch and capped branch with eps^2 H = 0.1
        let spec = spec_with(3, 3.0, Potential::Constant { value: 1.0 });
        let r_out = 2.0;
        let h = hardy_potential(&prm, &spec.lambda, 3, r_out).unwrap();
        let eps = (0.1f64 / h).sqrt();
        let g_small = g_eps(&spec, &prm, eps, r_out, 0.2).unwrap();
        assert!((g_small - 0.008).abs() < 1e-14);
        let g_cap = g_eps(&spec, &prm, eps, r_out, 1.0).unwrap();
        assert!((g_cap - 0.1).abs() < 1e-14);
        // negative s is rejected
        assert!(g_eps(&spec, &prm, eps, r_out, -1.0).is_err());
    }

    #[test]
    fn big_g_closed_form() {
        let spec = spec_with(3, 3.0, Potential::Constant { value: 1.0 });
        let prm = params_unit_log();
        // inside: K s^{p+1}/(p+1)
        assert!((big_g_eps(&spec, &prm, 0.1, 0.3, 1.0).unwrap() - 0.25).abs() < 1e-14);
        // outside with eps^2 H = 0.1: G(1) = 0.01/4 + 0.1*(1 - 0.1)/2 = 0.0475
        let r_out = 2.0;
        let h = hardy_potential(&prm, &spec.lambda, 3, r_out).unwrap();
        let eps = (0.1f64 / h).sqrt();
        let g = big_g_eps(&spec, &prm, eps, r_out, 1.0).unwrap();
        assert!((g - 0.0475).abs() < 1e-12);
        // K = 0 outside: g vanishes identically
        let spec0 = spec_with(3, 3.0, Potential::Plateau { poly: vec![1.0], r_on: 1.0, r_off: 1.5 });
        assert_eq!(big_g_eps(&spec0, &prm, 0.1, 3.0, 5.0).unwrap(), 0.0);
    }

    /// Adaptive Simpson quadrature, the independent oracle for G_eps.
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, a, m, fa, flm, fm, tol / 2.0, depth - 1)
                + simpson(f, m, b, fm, frm, fb, tol / 2.0, depth - 1)
        }
    }

    fn quad<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        simpson(&f, a, b, fa, fm, fb, tol, 40)
    }

    #[test]
    fn big_g_matches_quadrature() {
        let spec = spec_with(3, 3.5, Potential::Constant { value: 0.7 });
        let prm = params_unit_log();
        let eps = 0.2;
        // deterministic pseudo-random samples over radii and heights
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let r = 0.2 + 4.0 * next();
            let s = 0.01 + 3.0 * next();
            let closed = big_g_eps(&spec, &prm, eps, r, s).unwrap();
            // split at the kink so the Simpson error estimate stays honest
            let brk = switch_height(&spec, &prm, eps, r).unwrap();
            let tol = 1e-13 * closed.max(1e-6);
            let f = |t: f64| g_eps(&spec, &prm, eps, r, t).unwrap();
            let numeric = if brk.is_finite() && brk > 0.0 && brk < s {
                quad(&f, 0.0, brk, tol) + quad(&f, brk, s, tol)
            } else {
                quad(&f, 0.0, s, tol)
            };
            let scale = closed.abs().max(1e-12);
            assert!(
                (closed - numeric).abs() <= 1e-10 * scale,
                "r={r} s={s} closed={closed} numeric={numeric}"
            );
        }
    }

    #[test]
    fn switch_height_no_overflow_for_tiny_ratios() {
        let spec = spec_with(3, 1.2, Potential::Constant { value: 1e200 });
        let prm = params_unit_log();
        let s = switch_height(&spec, &prm, 1e-150, 2.0).unwrap();
        assert!(s.is_finite() && s >= 0.0);
    }

    #[test]
    fn g_properties_hold_on_samples() {
        let spec = spec_with(3, 3.0, Potential::Constant { value: 1.0 });
        let prm = params_unit_log();
        let mut samples = Vec::new();
        for i in 1..=100 {
            let r = 0.05 * i as f64; // spans inside and outside Lambda
            for s in [1e-3, 0.1, 1.0, 10.0, 1e3] {
                samples.push((r, s));
            }
        }
        let rep = verify_g_properties(&spec, &prm, 0.1, &samples).unwrap();
        assert!(rep.ok, "violations: {:?}", rep.violations.first());
        assert!(rep.g1_max_ratio < 1e-7);
        assert!(rep.g2_max_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn g3_equality_for_pure_power() {
        // x in Lambda, K=1, p=3, s=2: (p+1) G = 16 = s g
        let spec = spec_with(3, 3.0, Potential::Constant { value: 1.0 });
        let prm = params_unit_log();
        let g = g_eps(&spec, &prm, 0.1, 0.2, 2.0).unwrap();
        let big_g = big_g_eps(&spec, &prm, 0.1, 0.2, 2.0).unwrap();
        assert!((4.0 * big_g - 16.0).abs() < 1e-12);
        assert!((2.0 * g - 16.0).abs() < 1e-12);
    }

    #[test]
    fn g4_capped_branch_saturates() {
        let spec = spec_with(3, 3.0, Potential::Constant { value: 1.0 });
        let prm = params_unit_log();
        let r = 2.0;
        let eps = 0.1;
        let h = hardy_potential(&prm, &spec.lambda, 3, r).unwrap();
        let s_star = switch_height(&spec, &prm, eps, r).unwrap();
        let s = 50.0 * s_star;
        let g = g_eps(&spec, &prm, eps, r, s).unwrap();
        assert!((s * g - eps * eps * h * s * s).abs() < 1e-12 * (s * g));
    }

    #[test]
    fn slope_matches_finite_difference() {
        let spec = spec_with(3, 3.0, Potential::Constant { value: 1.0 });
        let prm = params_unit_log();
        let eps = 0.15;
        for r in [0.4, 1.7, 6.0] {
            for s in [0.05, 0.9, 4.0] {
                let d = g_eps_slope(&spec, &prm, eps, r, s).unwrap();
                let h = 1e-6 * s;
                let fd = (g_eps(&spec, &prm, eps, r, s + h).unwrap()
                    - g_eps(&spec, &prm, eps, r, s - h).unwrap())
                    / (2.0 * h);
                assert!((d - fd).abs() < 1e-5 * d.abs().max(1e-8), "r={r} s={s}");
            }
        }
    }
}
