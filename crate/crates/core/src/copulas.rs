//! Classical bivariate copulas with normal-score helpers and Spearman inversion.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normal;
use crate::optimize::brent_root;
use crate::quadrature::composite_gauss_legendre;

/// Plackett parameters this close to 1 are treated as independence.
pub const PLACKETT_INDEPENDENCE_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Clayton,
    Frank,
    Gumbel,
    Plackett,
    Gauss,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Clayton, Family::Frank, Family::Gumbel, Family::Plackett, Family::Gauss];

    pub fn name(self) -> &'static str {
        match self {
            Family::Clayton => "clayton",
            Family::Frank => "frank",
            Family::Gumbel => "gumbel",
            Family::Plackett => "plackett",
            Family::Gauss => "gauss",
        }
    }

    /// Parameter interval searched by Spearman inversion.
    fn spearman_bracket(self) -> (f64, f64) {
        match self {
            Family::Clayton => (1e-6, 200.0),
            Family::Frank => (-200.0, 200.0),
            Family::Gumbel => (1.0, 200.0),
            Family::Plackett => (1e-6, 1e6),
            Family::Gauss => (-1.0 + 1e-12, 1.0 - 1e-12),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clayton" => Ok(Family::Clayton),
            "frank" => Ok(Family::Frank),
            "gumbel" => Ok(Family::Gumbel),
            "plackett" | "placett" => Ok(Family::Plackett),
            "gauss" | "gaussian" | "normal" => Ok(Family::Gauss),
            other => Err(Error::InvalidInput(format!("unknown copula family '{other}'"))),
        }
    }
}

/// A classical one-parameter copula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalCopula {
    family: Family,
    theta: f64,
}

/// A probability given together with its complement, both to full precision.
#[derive(Debug, Clone, Copy)]
struct Prob {
    p: f64,
    q: f64,
}

impl Prob {
    fn of(u: f64) -> Self {
        Self { p: u, q: 1.0 - u }
    }

    fn from_score(x: f64) -> Self {
        Self { p: normal::cdf(x), q: normal::cdf(-x) }
    }

    fn ln_p(self) -> f64 {
        if self.p > 0.5 { (-self.q).ln_1p() } else { self.p.ln() }
    }
}

impl ClassicalCopula {
    pub fn new(family: Family, theta: f64) -> Result<Self> {
        let ok = theta.is_finite()
            && match family {
                Family::Clayton => theta > 0.0,
                Family::Frank => theta != 0.0,
                Family::Gumbel => theta >= 1.0,
                Family::Plackett => theta > 0.0,
                Family::Gauss => theta > -1.0 && theta < 1.0,
            };
        if !ok {
            let reason = match family {
                Family::Clayton => "Clayton needs theta > 0",
                Family::Frank => "Frank needs theta != 0",
                Family::Gumbel => "Gumbel needs theta >= 1",
                Family::Plackett => "Plackett needs theta > 0",
                Family::Gauss => "Gauss needs -1 < theta < 1",
            };
            return Err(invalid("theta", theta, reason));
        }
        Ok(Self { family, theta })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn is_plackett_independent(&self) -> bool {
        self.family == Family::Plackett && (self.theta - 1.0).abs() < PLACKETT_INDEPENDENCE_BAND
    }

    /// Copula CDF; arguments are clamped to `[0, 1]`.
    pub fn cdf(&self, u1: f64, u2: f64) -> f64 {
        let (u1, u2) = (u1.clamp(0.0, 1.0), u2.clamp(0.0, 1.0));
        if u1 == 0.0 || u2 == 0.0 {
            return 0.0;
        }
        if u1 == 1.0 {
            return u2;
        }
        if u2 == 1.0 {
            return u1;
        }
        let c = self.cdf_prob(Prob::of(u1), Prob::of(u2));
        c.clamp((u1 + u2 - 1.0).max(0.0), u1.min(u2))
    }

    fn cdf_prob(&self, a: Prob, b: Prob) -> f64 {
        let t = self.theta;
        match self.family {
            Family::Clayton => {
                let l = clayton_log_sum(a.ln_p(), b.ln_p(), t);
                (-l / t).exp()
            }
            Family::Frank => {
                if t > 0.0 { frank_cdf_pos(a.p, b.p, t) } else { frank_cdf_neg(a.p, b.p, -t) }
            }
            Family::Gumbel => {
                let (x, y) = (-a.ln_p(), -b.ln_p());
                (-(x.powf(t) + y.powf(t)).powf(1.0 / t)).exp()
            }
            Family::Plackett => {
                if self.is_plackett_independent() {
                    return a.p * b.p;
                }
                let s = 1.0 + (t - 1.0) * (a.p + b.p);
                let disc = (s * s - 4.0 * t * (t - 1.0) * a.p * b.p).max(0.0);
                2.0 * t * a.p * b.p / (s + disc.sqrt())
            }
            Family::Gauss => normal::bivariate_cdf(normal::quantile(a.p), normal::quantile(b.p), t),
        }
    }

    /// Copula density at an interior point.
    pub fn density(&self, u1: f64, u2: f64) -> f64 {
        self.density_prob(Prob::of(u1), Prob::of(u2))
    }

    fn density_prob(&self, a: Prob, b: Prob) -> f64 {
        let t = self.theta;
        match self.family {
            Family::Clayton => {
                let (la, lb) = (a.ln_p(), b.ln_p());
                let l = clayton_log_sum(la, lb, t);
                ((1.0 + t).ln() - (t + 1.0) * (la + lb) - (2.0 + 1.0 / t) * l).exp()
            }
            Family::Frank => {
                if t > 0.0 {
                    frank_density_pos(a.p, b.p, t)
                } else {
                    frank_density_pos(a.p, b.q, -t)
                }
            }
            Family::Gumbel => {
                let (x, y) = (-a.ln_p(), -b.ln_p());
                let big_a = x.powf(t) + y.powf(t);
                let a_root = big_a.powf(1.0 / t);
                let ln_c = -a_root + x + y + (t - 1.0) * (x.ln() + y.ln()) + (1.0 / t - 2.0) * big_a.ln()
                    + (a_root + t - 1.0).ln();
                ln_c.exp()
            }
            Family::Plackett => {
                if self.is_plackett_independent() {
                    return 1.0;
                }
                let (u, v) = (a.p, b.p);
                let s = 1.0 + (t - 1.0) * (u + v);
                let disc = s * s - 4.0 * t * (t - 1.0) * u * v;
                t * (1.0 + (t - 1.0) * (u + v - 2.0 * u * v)) / disc.powf(1.5)
            }
            Family::Gauss => {
                let (x, y) = (quantile_prob(a), quantile_prob(b));
                gauss_density_scores(x, y, t)
            }
        }
    }

    /// Joint density of `(X1, X2)` whose copula is `self` and whose marginals
    /// are standard normal.
    pub fn joint_density_normal(&self, x1: f64, x2: f64) -> f64 {
        if self.family == Family::Gauss {
            return normal::bivariate_pdf(x1, x2, self.theta);
        }
        let c = self.density_prob(Prob::from_score(x1), Prob::from_score(x2));
        c * normal::pdf(x1) * normal::pdf(x2)
    }

    /// Spearman's rank correlation `12 * int C - 3`.
    pub fn spearman(&self) -> f64 {
        if self.family == Family::Gauss {
            return 6.0 / std::f64::consts::PI * (0.5 * self.theta).asin();
        }
        spearman_quadrature(self)
    }
}

fn quantile_prob(a: Prob) -> f64 {
    if a.p > 0.5 { -normal::quantile(a.q) } else { normal::quantile(a.p) }
}

fn gauss_density_scores(x: f64, y: f64, r: f64) -> f64 {
    let det = 1.0 - r * r;
    (-(r * r * (x * x + y * y) - 2.0 * r * x * y) / (2.0 * det)).exp() / det.sqrt()
}

// ln(u^-t + v^-t - 1) from ln u, ln v without overflow
fn clayton_log_sum(lu: f64, lv: f64, t: f64) -> f64 {
    let (a, b) = (-t * lu, -t * lv);
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
}

fn frank_cdf_pos(u: f64, v: f64, t: f64) -> f64 {
    let num = (-t * u).exp_m1() * (-t * v).exp_m1();
    -(num / (-t).exp_m1()).ln_1p() / t
}

/// `ln(e^x - 1)` for `x > 0`.
fn ln_expm1(x: f64) -> f64 {
    x + (-(-x).exp_m1()).ln()
}

/// Frank CDF at `theta = -t`, `t > 0`: `ln(1 + (e^{tu} - 1)(e^{tv} - 1) / (e^t - 1)) / t` in log space.
fn frank_cdf_neg(u: f64, v: f64, t: f64) -> f64 {
    let s = ln_expm1(t * u) + ln_expm1(t * v) - ln_expm1(t);
    if s < 0.0 { s.exp().ln_1p() / t } else { (s + (-s).exp().ln_1p()) / t }
}

fn frank_density_pos(u: f64, v: f64, t: f64) -> f64 {
    // theta (1 - e^-t) e^{t(u+v)} / (e^{tu} + e^{tv} - 1 - e^{t(u+v-1)})^2
    let one_minus = -(-t).exp_m1();
    let d = (t * u).exp() + (t * v).exp() - 1.0 - (t * (u + v - 1.0)).exp();
    t * one_minus * (t * (u + v)).exp() / (d * d)
}

fn spearman_quadrature(c: &ClassicalCopula) -> f64 {
    let (x, w) = composite_gauss_legendre(16, 8, 0.0, 1.0);
    let mut s = 0.0;
    for (u, wu) in x.iter().zip(&w) {
        let mut row = 0.0;
        for (v, wv) in x.iter().zip(&w) {
            row += wv * c.cdf(*u, *v);
        }
        s += wu * row;
    }
    12.0 * s - 3.0
}

/// Checked copula CDF.
pub fn copula_cdf(c: &ClassicalCopula, u1: f64, u2: f64) -> Result<f64> {
    for (name, u) in [("u1", u1), ("u2", u2)] {
        if !(0.0..=1.0).contains(&u) {
            return Err(invalid(name, u, "must lie in [0, 1]"));
        }
    }
    Ok(c.cdf(u1, u2))
}

/// Checked copula density; the boundary of the unit square is rejected.
pub fn copula_density(c: &ClassicalCopula, u1: f64, u2: f64) -> Result<f64> {
    for (name, u) in [("u1", u1), ("u2", u2)] {
        if !(u > 0.0 && u < 1.0) {
            return Err(invalid(name, u, "density needs a point strictly inside (0, 1)"));
        }
    }
    Ok(c.density(u1, u2))
}

pub fn joint_density_normal_marginals(c: &ClassicalCopula, x1: f64, x2: f64) -> f64 {
    c.joint_density_normal(x1, x2)
}

/// Parameter whose Spearman rank correlation equals `rho_s`.
pub fn spearman_to_theta(family: Family, rho_s: f64) -> Result<f64> {
    if !(rho_s > -1.0 && rho_s < 1.0) {
        return Err(invalid("rho_s", rho_s, "must lie in (-1, 1)"));
    }
    if family == Family::Gauss {
        return Ok(2.0 * (std::f64::consts::PI * rho_s / 6.0).sin());
    }
    let (lo, hi) = family.spearman_bracket();
    let (lo, hi) = match family {
        Family::Clayton | Family::Gumbel if rho_s <= 0.0 => {
            return Err(invalid("rho_s", rho_s, "family only attains positive rank correlation"));
        }
        Family::Frank if rho_s == 0.0 => {
            return Err(invalid("rho_s", rho_s, "Frank excludes independence"));
        }
        Family::Frank if rho_s > 0.0 => (1e-6, hi),
        Family::Frank => (lo, -1e-6),
        Family::Plackett if rho_s > 0.0 => (1.0 + 2.0 * PLACKETT_INDEPENDENCE_BAND, hi),
        Family::Plackett if rho_s < 0.0 => (lo, 1.0 - 2.0 * PLACKETT_INDEPENDENCE_BAND),
        Family::Plackett => return Ok(1.0),
        _ => (lo, hi),
    };
    let f = |t: f64| match ClassicalCopula::new(family, t) {
        Ok(c) => spearman_quadrature(&c) - rho_s,
        Err(_) => f64::NAN,
    };
    brent_root(f, lo, hi, 1e-10, 200).map_err(|_| unattainable(family, rho_s))
}

fn unattainable(family: Family, rho_s: f64) -> Error {
    Error::InvalidInput(format!("Spearman correlation {rho_s} is not attainable by the {family} copula"))
}
