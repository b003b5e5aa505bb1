//! Copulas built from corrected grid densities: rebuilt marginals, their
//! inverses, copula CDF/density, and integration against external marginals.

use crate::correction::{correct_expansion, DykstraOptions, DykstraReport};
use crate::error::{invalid, Error, Result};
use crate::expansion::ExpansionModel;
use crate::quadrature::{CartesianGrid, GridDensity};

/// Largest tolerated deviation of the input mass from 1.
pub const MASS_TOL: f64 = 1e-3;

/// A marginal with piecewise-constant density on a midpoint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMarginal {
    lo: f64,
    delta: f64,
    density: Vec<f64>,
    // CDF at the cell edges lo + j * delta, j = 0..=cells
    edges: Vec<f64>,
}

impl DiscreteMarginal {
    /// From per-cell density values; the CDF is renormalized to end at 1.
    pub fn new(lo: f64, hi: f64, density: Vec<f64>) -> Result<Self> {
        if !(lo < hi) || density.len() < 2 {
            return Err(Error::InvalidInput("marginal needs a proper interval and >= 2 cells".into()));
        }
        if density.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidInput("marginal density must be non-negative".into()));
        }
        let delta = (hi - lo) / density.len() as f64;
        let mut edges = Vec::with_capacity(density.len() + 1);
        edges.push(0.0);
        let mut acc = 0.0;
        for d in &density {
            acc += d * delta;
            edges.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidInput("marginal has zero mass".into()));
        }
        edges.iter_mut().for_each(|e| *e /= acc);
        let density = density.iter().map(|d| d / acc).collect();
        Ok(Self { lo, delta, density, edges })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.delta * self.density.len() as f64
    }

    pub fn spacing(&self) -> f64 {
        self.delta
    }

    pub fn density_values(&self) -> &[f64] {
        &self.density
    }

    /// CDF at the cell edges.
    pub fn edge_cdf(&self) -> &[f64] {
        &self.edges
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.density.len()).map(|j| self.lo + (j as f64 + 0.5) * self.delta).collect()
    }

    /// Piecewise-linear CDF; 0 below and 1 above the grid.
    pub fn cdf(&self, x: f64) -> f64 {
        let t = (x - self.lo) / self.delta;
        if t <= 0.0 {
            return 0.0;
        }
        let m = self.density.len();
        if t >= m as f64 {
            return 1.0;
        }
        let j = t as usize;
        let f = t - j as f64;
        self.edges[j] + f * (self.edges[j + 1] - self.edges[j])
    }

    pub fn density_at(&self, x: f64) -> f64 {
        let t = (x - self.lo) / self.delta;
        if t < 0.0 || t >= self.density.len() as f64 {
            return 0.0;
        }
        self.density[t as usize]
    }

    /// Monotone inverse of [`DiscreteMarginal::cdf`] for `u` in `(0, 1)`.
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(invalid("u", u, "must lie in (0, 1)"));
        }
        Ok(self.quantile(u))
    }

    /// Inverse CDF with `u` clamped to `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        // first edge with cdf >= u
        let k = self.edges.partition_point(|e| *e < u);
        if k == 0 {
            return self.lo;
        }
        if k >= self.edges.len() {
            return self.hi();
        }
        let (a, b) = (self.edges[k - 1], self.edges[k]);
        let f = if b > a { (u - a) / (b - a) } else { 0.0 };
        self.lo + (k as f64 - 1.0 + f) * self.delta
    }

    /// `E[X^k]` with the midpoint rule.
    pub fn moment(&self, k: u32) -> f64 {
        self.coords().iter().zip(&self.density).map(|(x, d)| x.powi(k as i32) * d * self.delta).sum()
    }
}

/// Per-axis marginals of a 2-D grid density.
pub fn marginals_from_density(density: &GridDensity) -> Result<[DiscreteMarginal; 2]> {
    let g = &density.grid;
    if g.dim() != 2 {
        return Err(Error::InvalidInput("marginals need a 2-D density".into()));
    }
    let abs = density.absolute();
    let mass = g.weight() * abs.iter().sum::<f64>();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidInput(format!("density integrates to {mass}, not 1")));
    }
    let (m1, m2) = (g.sections()[0], g.sections()[1]);
    let (d1, d2) = (g.spacing(0), g.spacing(1));
    let mut g1 = vec![0.0; m1];
    let mut g2 = vec![0.0; m2];
    for a in 0..m1 {
        for b in 0..m2 {
            let v = abs[a * m2 + b].max(0.0);
            g1[a] += v * d2;
            g2[b] += v * d1;
        }
    }
    let b = g.bounds();
    Ok([DiscreteMarginal::new(b[0][0], b[0][1], g1)?, DiscreteMarginal::new(b[1][0], b[1][1], g2)?])
}

pub fn inverse_cdf(m: &DiscreteMarginal, u: f64) -> Result<f64> {
    m.inverse_cdf(u)
}

/// The copula of a corrected expansion density on a correlated-coordinate grid.
#[derive(Debug, Clone)]
pub struct HermiteCopula {
    model: ExpansionModel,
    density: GridDensity,
    abs: Vec<f64>,
    marginals: [DiscreteMarginal; 2],
    // joint CDF at cell corners, (m1 + 1) x (m2 + 1)
    corners: Vec<f64>,
    report: Option<DykstraReport>,
}

impl HermiteCopula {
    /// Evaluates, corrects, and wraps `model` on `grid`.
    pub fn build(model: &ExpansionModel, grid: &CartesianGrid, opts: &DykstraOptions) -> Result<Self> {
        let (density, report) = correct_expansion(model, grid, opts)?;
        let mut c = Self::from_density(model.clone(), density)?;
        c.report = Some(report);
        Ok(c)
    }

    /// Wraps an already corrected, non-negative, normalized density.
    pub fn from_density(model: ExpansionModel, density: GridDensity) -> Result<Self> {
        let g = density.grid.clone();
        if g.dim() != 2 {
            return Err(Error::InvalidInput("copula needs a 2-D density".into()));
        }
        let mut abs = density.absolute();
        let peak = abs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if abs.iter().any(|v| *v < -1e-12 * peak.max(1.0)) {
            return Err(Error::InvalidInput("copula density has negative nodes; correct it first".into()));
        }
        abs.iter_mut().for_each(|v| *v = v.max(0.0));
        let marginals = marginals_from_density(&density)?;
        let (m1, m2) = (g.sections()[0], g.sections()[1]);
        let w = g.weight();
        let total: f64 = w * abs.iter().sum::<f64>();
        let mut corners = vec![0.0; (m1 + 1) * (m2 + 1)];
        for a in 0..m1 {
            let mut row = 0.0;
            for b in 0..m2 {
                row += abs[a * m2 + b] * w / total;
                corners[(a + 1) * (m2 + 1) + b + 1] = corners[a * (m2 + 1) + b + 1] + row;
            }
        }
        Ok(Self { model, density, abs, marginals, corners, report: None })
    }

    pub fn model(&self) -> &ExpansionModel {
        &self.model
    }

    pub fn density_grid(&self) -> &GridDensity {
        &self.density
    }

    pub fn marginal(&self, axis: usize) -> &DiscreteMarginal {
        &self.marginals[axis]
    }

    pub fn report(&self) -> Option<&DykstraReport> {
        self.report.as_ref()
    }

    /// Joint CDF in correlated coordinates, bilinear between cell corners.
    pub fn joint_cdf(&self, x1: f64, x2: f64) -> f64 {
        let g = &self.density.grid;
        let (m1, m2) = (g.sections()[0], g.sections()[1]);
        let locate = |x: f64, axis: usize, m: usize| -> (usize, f64) {
            let t = ((x - g.bounds()[axis][0]) / g.spacing(axis)).clamp(0.0, m as f64);
            let j = (t as usize).min(m - 1);
            (j, t - j as f64)
        };
        let (a, fa) = locate(x1, 0, m1);
        let (b, fb) = locate(x2, 1, m2);
        let at = |i: usize, j: usize| self.corners[i * (m2 + 1) + j];
        (1.0 - fa) * ((1.0 - fb) * at(a, b) + fb * at(a, b + 1)) + fa * ((1.0 - fb) * at(a + 1, b) + fb * at(a + 1, b + 1))
    }

    /// Copula CDF `P(G1^-1(u1), G2^-1(u2))`; arguments are clamped to `[0, 1]`.
    pub fn cdf(&self, u1: f64, u2: f64) -> f64 {
        let x1 = self.marginals[0].quantile(u1);
        let x2 = self.marginals[1].quantile(u2);
        self.joint_cdf(x1, x2)
    }

    /// Copula density `p(x1, x2) / (g1(x1) g2(x2))` at the mapped point.
    pub fn density(&self, u1: f64, u2: f64) -> f64 {
        let x1 = self.marginals[0].quantile(u1);
        let x2 = self.marginals[1].quantile(u2);
        let g = &self.density.grid;
        let cell = |x: f64, axis: usize| -> usize {
            let t = (x - g.bounds()[axis][0]) / g.spacing(axis);
            (t.max(0.0) as usize).min(g.sections()[axis] - 1)
        };
        let (a, b) = (cell(x1, 0), cell(x2, 1));
        let p = self.abs[a * g.sections()[1] + b];
        let d = self.marginals[0].density_values()[a] * self.marginals[1].density_values()[b];
        if d > 0.0 { p / d } else { 0.0 }
    }
}

pub fn copula_cdf(c: &HermiteCopula, u1: f64, u2: f64) -> Result<f64> {
    for (name, u) in [("u1", u1), ("u2", u2)] {
        if !(u > 0.0 && u < 1.0) {
            return Err(invalid(name, u, "must lie in (0, 1)"));
        }
    }
    Ok(c.cdf(u1, u2))
}

pub fn copula_density(c: &HermiteCopula, u1: f64, u2: f64) -> Result<f64> {
    for (name, u) in [("u1", u1), ("u2", u2)] {
        if !(u > 0.0 && u < 1.0) {
            return Err(invalid(name, u, "must lie in (0, 1)"));
        }
    }
    Ok(c.density(u1, u2))
}

/// Sub-points per cell and axis used by [`integrate_with_copula`].
pub const SUBCELLS: usize = 10;

/// `E[h(Y1, Y2)]` where `(Y1, Y2)` has copula `c` and marginal quantile
/// functions `q1`, `q2`.
///
/// Each cell's corrected mass is spread uniformly over the cell (the same
/// model as the bilinear CDF) and sampled on a `SUBCELLS x SUBCELLS` lattice
/// whose points are mapped through `Q_i(G_i(x_i))`.
pub fn integrate_with_copula<H, Q1, Q2>(c: &HermiteCopula, payoff: H, q1: Q1, q2: Q2) -> Result<f64>
where
    H: Fn(f64, f64) -> f64,
    Q1: Fn(f64) -> f64,
    Q2: Fn(f64) -> f64,
{
    let g = &c.density.grid;
    let w = g.weight();
    let s = SUBCELLS;
    let (m1, m2) = (g.sections()[0], g.sections()[1]);
    let sub = |axis: usize, q: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let (lo, d) = (g.bounds()[axis][0], g.spacing(axis));
        (0..g.sections()[axis] * s)
            .map(|k| q(c.marginals[axis].cdf(lo + (k as f64 + 0.5) * d / s as f64)))
            .collect()
    };
    let y1 = sub(0, &q1);
    let y2 = sub(1, &q2);
    let inv = 1.0 / (s * s) as f64;
    let mut total = 0.0;
    for a in 0..m1 {
        let mut row = 0.0;
        for b in 0..m2 {
            let p = c.abs[a * m2 + b];
            if p == 0.0 {
                continue;
            }
            let mut cell = 0.0;
            for ya in &y1[a * s..(a + 1) * s] {
                for yb in &y2[b * s..(b + 1) * s] {
                    let h = payoff(*ya, *yb);
                    if !h.is_finite() {
                        return Err(Error::InvalidInput(format!("payoff not finite at ({ya}, {yb})")));
                    }
                    cell += h;
                }
            }
            row += p * cell * inv;
        }
        total += row;
    }
    Ok(w * total)
}
