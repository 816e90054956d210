//! Problem data: dimension, exponent, radial potentials, the region Lambda,
//! the concentration function and the standing assumptions (K) and (A).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothstep ascending from 0 at t=0 to 1 at t=1, C^2 at both ends.
pub(crate) fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Radial potential families. Evaluation is pure and deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Potential {
    Constant {
        value: f64,
    },
    /// q(r) * cutoff(r; r_on, r_off) with q a polynomial in r and the cutoff a
    /// C^2 bump equal to 1 for r <= r_on and 0 for r >= r_off.
    Plateau {
        poly: Vec<f64>,
        r_on: f64,
        r_off: f64,
    },
    /// m (1 + r)^{-alpha}
    PowerDecay {
        m: f64,
        alpha: f64,
    },
    /// Piecewise-linear interpolation of radial samples; constant extrapolation.
    Tabulated {
        radii: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Potential {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Potential::Constant { value } => *value,
            Potential::Plateau { poly, r_on, r_off } => {
                if r >= *r_off {
                    return 0.0;
                }
                let q: f64 = poly.iter().rev().fold(0.0, |acc, c| acc * r + c);
                let cut = if r <= *r_on {
                    1.0
                } else {
                    1.0 - smoothstep((r - r_on) / (r_off - r_on))
                };
                q * cut
            }
            Potential::PowerDecay { m, alpha } => m * (1.0 + r).powf(-alpha),
            Potential::Tabulated { radii, values } => {
                if radii.is_empty() {
                    return 0.0;
                }
                if r <= radii[0] {
                    return values[0];
                }
                if r >= *radii.last().unwrap() {
                    return *values.last().unwrap();
                }
                let j = radii.partition_point(|&x| x < r);
                let (r0, r1) = (radii[j - 1], radii[j]);
                let t = (r - r0) / (r1 - r0);
                values[j - 1] * (1.0 - t) + values[j] * t
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Potential::Constant { value } => {
                if *value < 0.0 {
                    return Err(Error::Config("constant potential must be nonnegative".into()));
                }
            }
            Potential::Plateau { poly, r_on, r_off } => {
                if poly.is_empty() || !(*r_on >= 0.0) || !(*r_off > *r_on) {
                    return Err(Error::Config("plateau potential needs poly and 0 <= r_on < r_off".into()));
                }
                for i in 0..=1000 {
                    let r = r_off * i as f64 / 1000.0;
                    if self.eval(r) < 0.0 {
                        return Err(Error::Config(format!("plateau potential negative at r = {r}")));
                    }
                }
            }
            Potential::PowerDecay { m, .. } => {
                if *m < 0.0 {
                    return Err(Error::Config("power decay potential must be nonnegative".into()));
                }
            }
            Potential::Tabulated { radii, values } => {
                if radii.len() != values.len() || radii.is_empty() {
                    return Err(Error::Config("tabulated potential needs matching nonempty radii/values".into()));
                }
                if !radii.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::Config("tabulated radii must be strictly increasing".into()));
                }
                if values.iter().any(|v| *v < 0.0) {
                    return Err(Error::Config("tabulated potential must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }
}

/// The bounded open region Lambda around which solutions concentrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainLambda {
    Ball { radius: f64 },
    Annulus { r_inner: f64, r_outer: f64 },
}

impl DomainLambda {
    pub fn contains(&self, r: f64) -> bool {
        match self {
            DomainLambda::Ball { radius } => r < *radius,
            DomainLambda::Annulus { r_inner, r_outer } => r > *r_inner && r < *r_outer,
        }
    }

    /// Indicator chi_Lambda.
    pub fn chi(&self, r: f64) -> f64 {
        if self.contains(r) {
            1.0
        } else {
            0.0
        }
    }

    /// Radius of the largest ball B(0, rho) with closure inside Lambda;
    /// zero when the origin is not an interior point.
    pub fn inradius_at_origin(&self) -> f64 {
        match self {
            DomainLambda::Ball { radius } => *radius,
            DomainLambda::Annulus { .. } => 0.0,
        }
    }

    pub fn boundary_radii(&self) -> Vec<f64> {
        match self {
            DomainLambda::Ball { radius } => vec![*radius],
            DomainLambda::Annulus { r_inner, r_outer } => vec![*r_inner, *r_outer],
        }
    }

    /// Outer radius: Lambda is contained in B(0, outer_radius).
    pub fn outer_radius(&self) -> f64 {
        match self {
            DomainLambda::Ball { radius } => *radius,
            DomainLambda::Annulus { r_outer, .. } => *r_outer,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DomainLambda::Ball { radius } if *radius > 0.0 => Ok(()),
            DomainLambda::Annulus { r_inner, r_outer } if *r_inner >= 0.0 && *r_outer > *r_inner => Ok(()),
            _ => Err(Error::InvalidRegion("Lambda must be a ball of positive radius or a proper annulus".into())),
        }
    }
}

/// Full problem data for -eps^2 Delta u + V u = K u^p with radial V, K.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(rename = "N")]
    pub n_dim: u32,
    pub p: f64,
    pub epsilons: Vec<f64>,
    #[serde(rename = "V")]
    pub v: Potential,
    #[serde(rename = "K")]
    pub k: Potential,
    #[serde(rename = "Lambda")]
    pub lambda: DomainLambda,
    pub sigma: f64,
    #[serde(rename = "M")]
    pub m_bound: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_dim < 2 {
            return Err(Error::DimensionUnsupported(self.n_dim, "N >= 2 required".into()));
        }
        if self.p <= 1.0 {
            return Err(Error::Domain(format!("p = {} must exceed 1", self.p)));
        }
        if self.n_dim >= 3 {
            let critical = (self.n_dim as f64 + 2.0) / (self.n_dim as f64 - 2.0);
            if self.p >= critical {
                return Err(Error::Domain(format!(
                    "p = {} must be subcritical (< {critical}) for N = {}",
                    self.p, self.n_dim
                )));
            }
            if self.sigma >= (self.n_dim as f64 - 2.0) * self.p - self.n_dim as f64 {
                return Err(Error::Domain(format!(
                    "sigma = {} must satisfy sigma < (N-2)p - N = {}",
                    self.sigma,
                    (self.n_dim as f64 - 2.0) * self.p - self.n_dim as f64
                )));
            }
        } else if self.sigma >= -2.0 {
            return Err(Error::Domain(format!("sigma = {} must be < -2 for N = 2", self.sigma)));
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Domain("all epsilon values must be positive".into()));
        }
        if self.m_bound <= 0.0 {
            return Err(Error::Domain("M must be positive".into()));
        }
        self.v.validate()?;
        self.k.validate()?;
        self.lambda.validate()
    }

    /// Whether p sits inside the fast-decay existence range (N/(N-2), (N+2)/(N-2)).
    pub fn fast_decay_admissible(&self) -> bool {
        match self.n_dim {
            2 => self.p > 1.0,
            n => {
                let n = n as f64;
                self.p > n / (n - 2.0) && self.p < (n + 2.0) / (n - 2.0)
            }
        }
    }
}

/// Admissible exponent range (N/(N-2), (N+2)/(N-2)) for N >= 3.
pub fn admissible_p_range(n_dim: u32) -> Result<(f64, f64)> {
    if n_dim < 3 {
        return Err(Error::DimensionUnsupported(
            n_dim,
            "admissible range defined for N >= 3; the 2D range is (1, inf)".into(),
        ));
    }
    let n = n_dim as f64;
    Ok((n / (n - 2.0), (n + 2.0) / (n - 2.0)))
}

/// Exponent of V in the concentration function: (p+1)/(p-1) - N/2.
pub fn concentration_v_exponent(n_dim: u32, p: f64) -> f64 {
    (p + 1.0) / (p - 1.0) - n_dim as f64 / 2.0
}

/// A(x) = V(x)^{(p+1)/(p-1) - N/2} / K(x)^{2/(p-1)} at radius r.
pub fn eval_concentration(spec: &ProblemSpec, r: f64) -> Result<f64> {
    let v = spec.v.eval(r);
    let k = spec.k.eval(r);
    if v <= 0.0 || k <= 0.0 {
        return Err(Error::UndefinedConcentration(r));
    }
    Ok(v.powf(concentration_v_exponent(spec.n_dim, spec.p)) / k.powf(2.0 / (spec.p - 1.0)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionKReport {
    pub holds: bool,
    /// max over samples of K(r) / (M (1+r)^sigma)
    pub worst_ratio: f64,
    /// whether the weaker (K') bound with log factor holds at the samples
    pub holds_log_variant: bool,
}

/// Verify K(x) <= M (1+|x|)^sigma at the sampled radii; also report the
/// log-weakened variant K <= M (1+|x|)^{(N-2)p-N} / log(|x|+3)^{1+beta}.
pub fn check_assumption_k(spec: &ProblemSpec, sample_radii: &[f64]) -> Result<AssumptionKReport> {
    if sample_radii.is_empty() || sample_radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Domain("sample radii must be nonempty and positive".into()));
    }
    let mut worst: f64 = 0.0;
    let mut log_ok = true;
    let n = spec.n_dim as f64;
    for &r in sample_radii {
        let k = spec.k.eval(r);
        let bound = spec.m_bound * (1.0 + r).powf(spec.sigma);
        worst = worst.max(k / bound);
        let log_bound = spec.m_bound * (1.0 + r).powf((n - 2.0) * spec.p - n) / (r + 3.0).ln().powf(2.0);
        if k > log_bound {
            log_ok = false;
        }
    }
    Ok(AssumptionKReport {
        holds: worst <= 1.0,
        worst_ratio: worst,
        holds_log_variant: log_ok,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionAReport {
    pub holds: bool,
    pub inf_interior: f64,
    pub inf_boundary: f64,
    pub argmin_radius: f64,
    /// sampling resolution in radius used for the scan
    pub resolution: f64,
}

const A_SCAN_SAMPLES: usize = 10_000;
const GOLDEN_TOL: f64 = 1e-10;

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Verify assumption (A): 0 < inf_Lambda A < inf_{boundary Lambda} A, by dense
/// radial sampling with golden-section refinement around the best sample.
pub fn check_assumption_a(spec: &ProblemSpec) -> Result<AssumptionAReport> {
    let (r_lo, r_hi) = match spec.lambda {
        DomainLambda::Ball { radius } => (0.0, radius),
        DomainLambda::Annulus { r_inner, r_outer } => (r_inner, r_outer),
    };
    let a_of = |r: f64| eval_concentration(spec, r);
    // boundary infimum
    let mut inf_boundary = f64::INFINITY;
    for rb in spec.lambda.boundary_radii() {
        inf_boundary = inf_boundary.min(a_of(rb)?);
    }
    // interior scan
    let h = (r_hi - r_lo) / A_SCAN_SAMPLES as f64;
    let mut best_r = r_lo;
    let mut best_a = f64::INFINITY;
    for i in 0..=A_SCAN_SAMPLES {
        let r = r_lo + h * i as f64;
        let a = a_of(r)?;
        if a < best_a {
            best_a = a;
            best_r = r;
        }
    }
    let (lo, hi) = ((best_r - h).max(r_lo), (best_r + h).min(r_hi));
    let (argmin, inf_interior) = golden_min(|r| a_of(r).unwrap_or(f64::INFINITY), lo, hi);
    // distance from the argmin to the actual boundary of Lambda; for a ball
    // r = 0 is the center, not a boundary point
    let interior_margin = spec
        .lambda
        .boundary_radii()
        .iter()
        .map(|rb| (argmin - rb).abs())
        .fold(f64::INFINITY, f64::min);
    let holds = inf_interior > 0.0 && inf_interior < inf_boundary && interior_margin > h;
    Ok(AssumptionAReport {
        holds,
        inf_interior,
        inf_boundary,
        argmin_radius: argmin,
        resolution: h,
    })
}
