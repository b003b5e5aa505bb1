//! FX smile pillars, Black formulas, and arbitrage-free smile curves with
//! their risk-neutral log-rate distribution.
//!
//! The curve interpolates implied vol in log-moneyness `k = ln(K/F)` with a
//! natural cubic spline through the five pillars, joined C2 by quintic pieces
//! to a constant vol one pillar gap beyond each 10-delta strike, so both
//! far wings are exactly lognormal.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normal;

/// Wing quantile at which the curve's table is truncated.
pub const TAIL_PROB: f64 = 1e-6;

/// Default number of table points.
pub const DEFAULT_GRID_SIZE: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pillar {
    Atm,
    C25,
    P25,
    C10,
    P10,
}

impl Pillar {
    /// CSV column order.
    pub const ALL: [Pillar; 5] = [Pillar::Atm, Pillar::C25, Pillar::P25, Pillar::C10, Pillar::P10];

    pub fn name(self) -> &'static str {
        match self {
            Pillar::Atm => "atm",
            Pillar::C25 => "c25",
            Pillar::P25 => "p25",
            Pillar::C10 => "c10",
            Pillar::P10 => "p10",
        }
    }

    /// Absolute forward delta of the pillar (ATM reported as 0.5).
    pub fn delta(self) -> f64 {
        match self {
            Pillar::Atm => 0.5,
            Pillar::C25 | Pillar::P25 => 0.25,
            Pillar::C10 | Pillar::P10 => 0.10,
        }
    }

    pub fn is_call(self) -> bool {
        matches!(self, Pillar::C25 | Pillar::C10)
    }
}

/// Five-point smile quote for one tenor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmilePillars {
    pub tenor: f64,
    pub forward: f64,
    /// Discount factor of the quote (domestic) currency.
    pub df_dom: f64,
    /// Discount factor of the base (foreign) currency.
    pub df_for: f64,
    pub atm: f64,
    pub c25: f64,
    pub p25: f64,
    pub c10: f64,
    pub p10: f64,
}

impl SmilePillars {
    /// Flat smile.
    pub fn flat(tenor: f64, forward: f64, df_dom: f64, df_for: f64, vol: f64) -> Self {
        Self { tenor, forward, df_dom, df_for, atm: vol, c25: vol, p25: vol, c10: vol, p10: vol }
    }

    pub fn vol(&self, p: Pillar) -> f64 {
        match p {
            Pillar::Atm => self.atm,
            Pillar::C25 => self.c25,
            Pillar::P25 => self.p25,
            Pillar::C10 => self.c10,
            Pillar::P10 => self.p10,
        }
    }

    pub fn set_vol(&mut self, p: Pillar, v: f64) {
        match p {
            Pillar::Atm => self.atm = v,
            Pillar::C25 => self.c25 = v,
            Pillar::P25 => self.p25 = v,
            Pillar::C10 => self.c10 = v,
            Pillar::P10 => self.p10 = v,
        }
    }

    pub fn vols(&self) -> [f64; 5] {
        Pillar::ALL.map(|p| self.vol(p))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tenor > 0.0 && self.tenor.is_finite()) {
            return Err(invalid("tenor", self.tenor, "must be positive"));
        }
        if !(self.forward > 0.0 && self.forward.is_finite()) {
            return Err(invalid("forward", self.forward, "must be positive"));
        }
        for (name, d) in [("df_dom", self.df_dom), ("df_for", self.df_for)] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid(name, d, "discount factor must be positive"));
            }
        }
        for p in Pillar::ALL {
            let v = self.vol(p);
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(p.name(), v, "vol must be positive"));
            }
        }
        Ok(())
    }
}

/// Strike of a pillar under the forward-delta, no-premium convention
/// (ATM is the delta-neutral straddle).
pub fn strike_for(pillar: Pillar, forward: f64, tenor: f64, sigma: f64) -> f64 {
    let sd = sigma * tenor.sqrt();
    let half_var = 0.5 * sigma * sigma * tenor;
    match pillar {
        Pillar::Atm => forward * half_var.exp(),
        p if p.is_call() => forward * (-sd * normal::quantile(p.delta()) + half_var).exp(),
        p => forward * (sd * normal::quantile(p.delta()) + half_var).exp(),
    }
}

pub fn delta_to_strike(p: &SmilePillars, pillar: Pillar) -> f64 {
    strike_for(pillar, p.forward, p.tenor, p.vol(pillar))
}

/// Forward delta of a call (`true`) or put.
pub fn forward_delta(call: bool, strike: f64, forward: f64, sigma: f64, tenor: f64) -> f64 {
    let sd = sigma * tenor.sqrt();
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    if call { normal::cdf(d1) } else { -normal::cdf(-d1) }
}

/// Discounted Black call.
pub fn black_call(strike: f64, forward: f64, sigma: f64, tenor: f64, df: f64) -> f64 {
    let sd = sigma * tenor.sqrt();
    if sd <= 0.0 {
        return df * (forward - strike).max(0.0);
    }
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    df * (forward * normal::cdf(d1) - strike * normal::cdf(d2))
}

/// Discounted Black put.
pub fn black_put(strike: f64, forward: f64, sigma: f64, tenor: f64, df: f64) -> f64 {
    let sd = sigma * tenor.sqrt();
    if sd <= 0.0 {
        return df * (strike - forward).max(0.0);
    }
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    df * (strike * normal::cdf(-d2) - forward * normal::cdf(-d1))
}

/// Black implied vol of a discounted call or put price.
pub fn implied_vol(price: f64, strike: f64, forward: f64, tenor: f64, df: f64, call: bool) -> Result<f64> {
    if !(strike > 0.0 && forward > 0.0 && tenor > 0.0 && df > 0.0) {
        return Err(Error::InvalidInput("implied vol needs positive strike, forward, tenor and discount".into()));
    }
    // work with the undiscounted out-of-the-money option
    let undisc = price / df;
    let otm_call = strike >= forward;
    let otm = match (call, otm_call) {
        (true, true) | (false, false) => undisc,
        (true, false) => undisc - (forward - strike),
        (false, true) => undisc - (strike - forward),
    };
    let upper = if otm_call { forward } else { strike };
    if !(otm > 0.0 && otm < upper) || !otm.is_finite() {
        return Err(Error::InvalidInput(format!(
            "price {price} outside no-arbitrage bounds for strike {strike}, forward {forward}"
        )));
    }
    let f = |s: f64| {
        if otm_call { black_call(strike, forward, s, tenor, 1.0) } else { black_put(strike, forward, s, tenor, 1.0) }
    };
    let (mut lo, mut hi) = (1e-9f64, 1.0f64);
    while f(hi) < otm {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::NonConvergence("implied vol above 1000".into()));
        }
    }
    // Newton in sigma safeguarded by the bracket
    let x = (forward / strike).ln();
    let mut s = (2.0 * x.abs() / tenor).sqrt().clamp(lo.max(0.05), hi);
    for _ in 0..100 {
        let v = f(s) - otm;
        if v > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let sd = s * tenor.sqrt();
        let d1 = (x + 0.5 * sd * sd) / sd;
        let vega = forward * normal::pdf(d1) * tenor.sqrt();
        let mut next = if vega > 0.0 { s - v / vega } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-15 * s.max(1e-3) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        s = next;
    }
    Ok(s)
}

// quintic piece in t = (k - k0) / h
#[derive(Debug, Clone, Copy, PartialEq)]
struct Quintic {
    k0: f64,
    h: f64,
    a: [f64; 6],
}

impl Quintic {
    fn new(k0: f64, k1: f64, y: [f64; 2], s: [f64; 2], c: [f64; 2]) -> Self {
        let h = k1 - k0;
        let (a0, a1, a2) = (y[0], h * s[0], 0.5 * h * h * c[0]);
        let yy = y[1] - (a0 + a1 + a2);
        let ss = h * s[1] - (a1 + 2.0 * a2);
        let cc = h * h * c[1] - 2.0 * a2;
        let a3 = 10.0 * yy - 4.0 * ss + 0.5 * cc;
        let a4 = -15.0 * yy + 7.0 * ss - cc;
        let a5 = 6.0 * yy - 3.0 * ss + 0.5 * cc;
        Self { k0, h, a: [a0, a1, a2, a3, a4, a5] }
    }

    /// Value, first and second derivative in k.
    fn eval(&self, k: f64) -> (f64, f64, f64) {
        let t = (k - self.k0) / self.h;
        let a = &self.a;
        let v = a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * (a[4] + t * a[5]))));
        let d = a[1] + t * (2.0 * a[2] + t * (3.0 * a[3] + t * (4.0 * a[4] + t * 5.0 * a[5])));
        let dd = 2.0 * a[2] + t * (6.0 * a[3] + t * (12.0 * a[4] + t * 20.0 * a[5]));
        (v, d / self.h, dd / (self.h * self.h))
    }
}

/// Second derivatives of the natural cubic spline.
fn natural_spline_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let m = n - 2;
    let mut diag: Vec<f64> = (0..m).map(|i| (h[i] + h[i + 1]) / 3.0).collect();
    let mut rhs: Vec<f64> =
        (0..m).map(|i| (y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]).collect();
    for i in 1..m {
        let f = (h[i] / 6.0) / diag[i - 1];
        diag[i] -= f * h[i] / 6.0;
        rhs[i] -= f * rhs[i - 1];
    }
    out[m] = rhs[m - 1] / diag[m - 1];
    for i in (0..m - 1).rev() {
        out[i + 1] = (rhs[i] - h[i + 1] / 6.0 * out[i + 2]) / diag[i];
    }
    out
}

/// A C2 arbitrage-free smile with its risk-neutral log-rate distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SmileCurve {
    pillars: SmilePillars,
    knots: Vec<f64>,
    knot_vols: Vec<f64>,
    pillar_knots: Vec<f64>,
    pieces: Vec<Quintic>,
    ln_f: f64,
    sqrt_t: f64,
    x_grid: Vec<f64>,
    cdf_grid: Vec<f64>,
    score_grid: Vec<f64>,
    density_grid: Vec<f64>,
    call_grid: Vec<f64>,
    log_mean: f64,
    log_sd: f64,
}

impl SmileCurve {
    pub fn pillars(&self) -> &SmilePillars {
        &self.pillars
    }

    pub fn tenor(&self) -> f64 {
        self.pillars.tenor
    }

    pub fn forward(&self) -> f64 {
        self.pillars.forward
    }

    /// Pillar strikes in ascending order.
    pub fn pillar_strikes(&self) -> Vec<f64> {
        self.pillar_knots.iter().map(|k| self.pillars.forward * k.exp()).collect()
    }

    /// Vol, d vol / dk and d2 vol / dk2 at log-moneyness `k`.
    pub fn vol_derivs(&self, k: f64) -> (f64, f64, f64) {
        let n = self.knots.len();
        if k <= self.knots[0] {
            return (self.knot_vols[0], 0.0, 0.0);
        }
        if k >= self.knots[n - 1] {
            return (self.knot_vols[n - 1], 0.0, 0.0);
        }
        let j = self.knots.partition_point(|x| *x <= k).clamp(1, n - 1) - 1;
        self.pieces[j].eval(k)
    }

    /// Implied vol at a strike.
    pub fn vol(&self, strike: f64) -> f64 {
        self.vol_derivs((strike / self.pillars.forward).ln()).0
    }

    pub fn call(&self, strike: f64) -> f64 {
        black_call(strike, self.pillars.forward, self.vol(strike), self.pillars.tenor, self.pillars.df_dom)
    }

    pub fn put(&self, strike: f64) -> f64 {
        black_put(strike, self.pillars.forward, self.vol(strike), self.pillars.tenor, self.pillars.df_dom)
    }

    /// `(d2, sqrt(w))` at log-moneyness `k` for vol `s`.
    fn d2(&self, k: f64, s: f64) -> (f64, f64) {
        let sw = s * self.sqrt_t;
        (-k / sw - 0.5 * sw, sw)
    }

    /// Risk-neutral density of the log-rate `x = ln S_T`.
    pub fn density(&self, x: f64) -> f64 {
        let k = x - self.ln_f;
        let (s, s1, s2) = self.vol_derivs(k);
        let t = self.pillars.tenor;
        let w = s * s * t;
        let w1 = 2.0 * s * s1 * t;
        let w2 = 2.0 * t * (s1 * s1 + s * s2);
        let g = (1.0 - k * w1 / (2.0 * w)).powi(2) - 0.25 * w1 * w1 * (0.25 + 1.0 / w) + 0.5 * w2;
        let (d2, sw) = self.d2(k, s);
        g * normal::pdf(d2) / sw
    }

    /// Risk-neutral CDF of the log-rate.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = x - self.ln_f;
        let (s, s1, _) = self.vol_derivs(k);
        let (d2, _) = self.d2(k, s);
        let v = if s1 == 0.0 { normal::cdf(-d2) } else { normal::cdf(-d2) + normal::pdf(d2) * self.sqrt_t * s1 };
        v.clamp(0.0, 1.0)
    }

    /// Inverse of [`SmileCurve::cdf`] for `u` in `(0, 1)` (clamped like the
    /// normal quantile).
    pub fn quantile(&self, u: f64) -> f64 {
        self.quantile_score(normal::quantile(u))
    }

    /// Quantile at the normal score `z`, i.e. `x` with `cdf(x) = Phi(z)`.
    pub fn quantile_score(&self, z: f64) -> f64 {
        let n = self.x_grid.len();
        let zs = &self.score_grid;
        if z <= zs[0] {
            let s = self.knot_vols[0] * self.sqrt_t;
            return self.ln_f - 0.5 * s * s + s * z;
        }
        if z >= zs[n - 1] {
            let s = self.knot_vols[self.knot_vols.len() - 1] * self.sqrt_t;
            return self.ln_f - 0.5 * s * s + s * z;
        }
        let j = zs.partition_point(|v| *v <= z).clamp(1, n - 1) - 1;
        let (z0, z1) = (zs[j], zs[j + 1]);
        let (x0, x1) = (self.x_grid[j], self.x_grid[j + 1]);
        let h = z1 - z0;
        if !(h > 0.0) {
            return x0;
        }
        // cubic Hermite in z with dx/dz = phi(z) / p(x)
        let dx0 = normal::pdf(z0) / self.density_grid[j].max(1e-300);
        let dx1 = normal::pdf(z1) / self.density_grid[j + 1].max(1e-300);
        let t = (z - z0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let guess = (2.0 * t3 - 3.0 * t2 + 1.0) * x0
            + (t3 - 2.0 * t2 + t) * h * dx0
            + (-2.0 * t3 + 3.0 * t2) * x1
            + (t3 - t2) * h * dx1;
        if guess > x0 && guess < x1 { guess } else { x0 + t * (x1 - x0) }
    }

    /// Mean of the log-rate under the curve's distribution.
    pub fn log_mean(&self) -> f64 {
        self.log_mean
    }

    /// Standard deviation of the log-rate.
    pub fn log_sd(&self) -> f64 {
        self.log_sd
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x_grid[0], self.x_grid[self.x_grid.len() - 1])
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn cdf_grid(&self) -> &[f64] {
        &self.cdf_grid
    }

    pub fn density_grid(&self) -> &[f64] {
        &self.density_grid
    }

    /// Discounted call prices at the strikes `exp(x_grid)`.
    pub fn call_grid(&self) -> &[f64] {
        &self.call_grid
    }

    /// `E[f(x)]` over the table by Simpson's rule (tails beyond the domain
    /// are dropped).
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let n = self.x_grid.len();
        let h = self.x_grid[1] - self.x_grid[0];
        let mut s = 0.0;
        for i in 0..n {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * f(self.x_grid[i]) * self.density_grid[i];
        }
        s * h / 3.0
    }
}

/// Builds the arbitrage-free curve through the five pillars.
pub fn build_curve(p: &SmilePillars, grid_size: usize) -> Result<SmileCurve> {
    p.validate()?;
    let grid_size = if grid_size % 2 == 0 { grid_size + 1 } else { grid_size }.max(101);
    let order = [Pillar::P10, Pillar::P25, Pillar::Atm, Pillar::C25, Pillar::C10];
    let strikes: Vec<f64> = order.iter().map(|q| delta_to_strike(p, *q)).collect();
    for w in order.windows(2).zip(strikes.windows(2)) {
        if !(w.1[1] > w.1[0]) {
            return Err(Error::Arbitrage(format!(
                "pillar strikes out of order: {} at {} vs {} at {}",
                w.0[0].name(),
                w.1[0],
                w.0[1].name(),
                w.1[1]
            )));
        }
    }
    // convexity of pillar call prices
    let calls: Vec<f64> = order
        .iter()
        .zip(&strikes)
        .map(|(q, k)| black_call(*k, p.forward, p.vol(*q), p.tenor, p.df_dom))
        .collect();
    let slopes: Vec<f64> = (0..4).map(|i| (calls[i + 1] - calls[i]) / (strikes[i + 1] - strikes[i])).collect();
    for i in 0..4 {
        if !(slopes[i] <= 0.0 && slopes[i] >= -p.df_dom) {
            return Err(Error::Arbitrage(format!(
                "call spread between {} and {} violates monotonicity",
                order[i].name(),
                order[i + 1].name()
            )));
        }
    }
    for i in 0..3 {
        if slopes[i + 1] < slopes[i] - 1e-14 * p.forward {
            return Err(Error::Arbitrage(format!(
                "butterfly around {} is negative ({} then {})",
                order[i + 1].name(),
                order[i].name(),
                order[i + 2].name()
            )));
        }
    }
    let pillar_knots: Vec<f64> = strikes.iter().map(|k| (k / p.forward).ln()).collect();
    let pillar_vols: Vec<f64> = order.iter().map(|q| p.vol(*q)).collect();
    let m2 = natural_spline_second_derivatives(&pillar_knots, &pillar_vols);
    let n = pillar_knots.len();
    let slope: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < n {
                let h = pillar_knots[i + 1] - pillar_knots[i];
                (pillar_vols[i + 1] - pillar_vols[i]) / h - h * (2.0 * m2[i] + m2[i + 1]) / 6.0
            } else {
                let h = pillar_knots[i] - pillar_knots[i - 1];
                (pillar_vols[i] - pillar_vols[i - 1]) / h + h * (m2[i - 1] + 2.0 * m2[i]) / 6.0
            }
        })
        .collect();
    // transitions to flat vol over one pillar gap beyond each 10-delta strike
    let left_gap = pillar_knots[1] - pillar_knots[0];
    let right_gap = pillar_knots[n - 1] - pillar_knots[n - 2];
    let left_vol = pillar_vols[0] - 0.5 * slope[0] * left_gap;
    let right_vol = pillar_vols[n - 1] + 0.5 * slope[n - 1] * right_gap;
    if !(left_vol > 0.0 && right_vol > 0.0) {
        return Err(Error::Arbitrage("extrapolated wing vol is not positive".into()));
    }
    let mut knots = vec![pillar_knots[0] - left_gap];
    knots.extend(&pillar_knots);
    knots.push(pillar_knots[n - 1] + right_gap);
    let mut vols = vec![left_vol];
    vols.extend(&pillar_vols);
    vols.push(right_vol);
    let mut slopes = vec![0.0];
    slopes.extend(&slope);
    slopes.push(0.0);
    let mut curv = vec![0.0];
    curv.extend(&m2);
    curv.push(0.0);
    let pieces: Vec<Quintic> = (0..knots.len() - 1)
        .map(|i| {
            Quintic::new(
                knots[i],
                knots[i + 1],
                [vols[i], vols[i + 1]],
                [slopes[i], slopes[i + 1]],
                [curv[i], curv[i + 1]],
            )
        })
        .collect();
    let ln_f = p.forward.ln();
    let sqrt_t = p.tenor.sqrt();
    let mut curve = SmileCurve {
        pillars: *p,
        knots,
        knot_vols: vols,
        pillar_knots,
        pieces,
        ln_f,
        sqrt_t,
        x_grid: Vec::new(),
        cdf_grid: Vec::new(),
        score_grid: Vec::new(),
        density_grid: Vec::new(),
        call_grid: Vec::new(),
        log_mean: 0.0,
        log_sd: 0.0,
    };
    // domain at the wing lognormal quantiles
    let z_tail = normal::quantile(TAIL_PROB);
    let (sl, sr) = (left_vol * sqrt_t, right_vol * sqrt_t);
    let x_lo = ln_f - 0.5 * sl * sl + sl * z_tail;
    let x_hi = ln_f - 0.5 * sr * sr - sr * z_tail;
    let h = (x_hi - x_lo) / (grid_size - 1) as f64;
    curve.x_grid = (0..grid_size).map(|i| x_lo + i as f64 * h).collect();
    curve.density_grid = curve.x_grid.iter().map(|x| curve.density(*x)).collect();
    if let Some(i) = curve.density_grid.iter().position(|d| !(*d >= 0.0)) {
        return Err(Error::Arbitrage(format!(
            "interpolated smile implies negative density at strike {}",
            curve.x_grid[i].exp()
        )));
    }
    curve.cdf_grid = curve.x_grid.iter().map(|x| curve.cdf(*x)).collect();
    if curve.cdf_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Arbitrage("interpolated smile implies a decreasing CDF".into()));
    }
    curve.score_grid = curve.cdf_grid.iter().map(|u| normal::quantile(*u)).collect();
    // keep the score table strictly monotone where the CDF saturates
    for i in 1..grid_size {
        if curve.score_grid[i] <= curve.score_grid[i - 1] {
            curve.score_grid[i] = curve.score_grid[i - 1] + 1e-12;
        }
    }
    curve.call_grid = curve.x_grid.iter().map(|x| curve.call(x.exp())).collect();
    let mean = curve.expect(|x| x);
    let var = curve.expect(|x| (x - mean) * (x - mean));
    curve.log_mean = mean;
    curve.log_sd = var.sqrt();
    Ok(curve)
}

pub fn rn_cdf(curve: &SmileCurve, x: f64) -> f64 {
    curve.cdf(x)
}

pub fn rn_quantile(curve: &SmileCurve, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(invalid("u", u, "must lie in (0, 1)"));
    }
    Ok(curve.quantile(u))
}

/// Pillars of the inverse pair: reciprocal forward, calls and puts swapped,
/// discount factors swapped.
pub fn invert_pair(p: &SmilePillars) -> SmilePillars {
    SmilePillars {
        tenor: p.tenor,
        forward: 1.0 / p.forward,
        df_dom: p.df_for,
        df_for: p.df_dom,
        atm: p.atm,
        c25: p.p25,
        p25: p.c25,
        c10: p.p10,
        p10: p.c10,
    }
}

/// One row of a pillar CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PillarRecord {
    pub date: String,
    pub pair: String,
    pub tenor: String,
    pub pillars: SmilePillars,
}

/// Year fraction of a tenor label such as `1W`, `3M`, `1Y`, or a plain number of years.
pub fn parse_tenor(label: &str) -> Result<f64> {
    let s = label.trim().to_ascii_uppercase();
    if let Ok(v) = s.parse::<f64>() {
        return if v > 0.0 { Ok(v) } else { Err(invalid("tenor", v, "must be positive")) };
    }
    let (num, unit) = s.split_at(s.len().saturating_sub(1));
    let n: f64 = num.parse().map_err(|_| Error::InvalidInput(format!("unrecognised tenor '{label}'")))?;
    let years = match unit {
        "D" => n / 365.0,
        "W" => 7.0 * n / 365.0,
        "M" => n / 12.0,
        "Y" => n,
        _ => return Err(Error::InvalidInput(format!("unrecognised tenor '{label}'"))),
    };
    if years > 0.0 { Ok(years) } else { Err(invalid("tenor", years, "must be positive")) }
}

pub const PILLAR_HEADER: [&str; 11] = ["date", "pair", "tenor", "F", "D_dom", "D_for", "atm", "c25", "p25", "c10", "p10"];

pub fn read_pillar_csv(path: &Path) -> Result<Vec<PillarRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { row: 1, message: format!("missing column '{name}'") })
    };
    let idx: Vec<usize> = PILLAR_HEADER.iter().map(|h| col(h)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            field(k).parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("column '{}' is not a number: '{}'", PILLAR_HEADER[k], field(k)),
            })
        };
        let tenor = field(2).to_string();
        let t = parse_tenor(&tenor).map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let pillars = SmilePillars {
            tenor: t,
            forward: num(3)?,
            df_dom: num(4)?,
            df_for: num(5)?,
            atm: num(6)?,
            c25: num(7)?,
            p25: num(8)?,
            c10: num(9)?,
            p10: num(10)?,
        };
        pillars.validate().map_err(|e| Error::Parse { row, message: e.to_string() })?;
        out.push(PillarRecord { date: field(0).to_string(), pair: field(1).to_string(), tenor, pillars });
    }
    Ok(out)
}

pub fn write_pillar_csv(path: &Path, records: &[PillarRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PILLAR_HEADER)?;
    for r in records {
        let p = &r.pillars;
        let nums = [p.forward, p.df_dom, p.df_for, p.atm, p.c25, p.p25, p.c10, p.p10].map(|v| format!("{v}"));
        let mut row = vec![r.date.clone(), r.pair.clone(), r.tenor.clone()];
        row.extend(nums);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
