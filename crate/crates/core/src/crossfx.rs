//! Cross-pair option pricing from two straight-pair smiles joined by a copula.
//!
//! Currencies are `X`, `Y` and the common quote currency `Z`. The log-rates
//! `y1 = ln S_XZ(T)` and `y2 = ln S_YZ(T)` have the risk-neutral marginals of
//! the two smile curves; a cross call paying `(S_XY(T) - K)+` in `Y` is worth
//! `D_Z E[(e^y1 - K e^y2)+]` in `Z`.
//!
//! Two independent quadratures are provided. Hermite copulas are integrated
//! on the rotated grid of independent Gaussian coordinates `v` that also
//! carries the Dykstra correction; classical copulas are integrated with
//! composite Gauss-Legendre rules in normal-score space.

use serde::{Deserialize, Serialize};

use crate::copulas::ClassicalCopula;
use crate::correction::{correct_1d_factor, correct_expansion, DykstraOptions, DykstraReport};
use crate::error::{invalid, Error, Result};
use crate::expansion::ExpansionModel;
use crate::normal;
use crate::polybasis::{hermite_orthonormal_all, hermite_shift_expand, rotation_factors, Mixing};
use crate::quadrature::{gauss_legendre_nodes, CartesianGrid};
use crate::smile::{implied_vol, strike_for, Pillar, SmileCurve, SmilePillars};

/// Dependence between the two log-rates.
#[derive(Debug, Clone, PartialEq)]
pub enum CopulaModel {
    Classical(ClassicalCopula),
    Hermite(ExpansionModel),
}

impl CopulaModel {
    pub fn name(&self) -> String {
        match self {
            CopulaModel::Classical(c) => c.family().name().to_string(),
            CopulaModel::Hermite(_) => "hermite".to_string(),
        }
    }
}

/// Rotated-grid settings for Hermite copulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// The grid is `[-bound, bound]^2` in `v`.
    pub bound: f64,
    pub sections: usize,
    /// Cells crossed by the payoff kink are resampled on this many points per axis.
    pub kink_subdivisions: usize,
    /// Points of the tabulated marginal maps.
    pub map_points: usize,
    pub dykstra: DykstraOptions,
    /// Price diagonal models on the full two-dimensional grid as well.
    #[serde(default)]
    pub full_grid: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { bound: 6.0, sections: 200, kink_subdivisions: 8, map_points: 801, dykstra: DykstraOptions::default(), full_grid: false }
    }
}

/// Normal-score quadrature settings for classical copulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalOptions {
    pub bound: f64,
    pub panels: usize,
    pub order: usize,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        Self { bound: 8.0, panels: 100, order: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PricingOptions {
    pub grid: GridOptions,
    pub classical: ClassicalOptions,
}

/// Two straight-pair curves quoted in `Z` and the copula joining them.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSetup {
    pub curve_xz: SmileCurve,
    pub curve_yz: SmileCurve,
    pub copula: CopulaModel,
    pub df_z: f64,
    pub df_y: f64,
    pub df_x: f64,
    pub spot_yz: f64,
    pub options: PricingOptions,
}

impl CrossSetup {
    /// Discount factors come from the curves: `D_Z` is the quote discount of
    /// both, `D_X` and `D_Y` their base discounts; `S_YZ(0) = F_YZ D_Z / D_Y`.
    pub fn new(curve_xz: SmileCurve, curve_yz: SmileCurve, copula: CopulaModel) -> Result<Self> {
        let (a, b) = (curve_xz.pillars(), curve_yz.pillars());
        if (a.tenor - b.tenor).abs() > 1e-12 * a.tenor.max(1.0) {
            return Err(Error::InvalidInput(format!("curves have different tenors {} and {}", a.tenor, b.tenor)));
        }
        if (a.df_dom - b.df_dom).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "curves disagree on the quote-currency discount ({} vs {})",
                a.df_dom, b.df_dom
            )));
        }
        let spot_yz = b.forward * a.df_dom / b.df_for;
        Ok(Self {
            df_z: a.df_dom,
            df_y: b.df_for,
            df_x: a.df_for,
            spot_yz,
            curve_xz,
            curve_yz,
            copula,
            options: PricingOptions::default(),
        })
    }

    pub fn with_copula(&self, copula: CopulaModel) -> Self {
        Self { copula, ..self.clone() }
    }

    pub fn with_options(mut self, options: PricingOptions) -> Self {
        self.options = options;
        self
    }

    pub fn tenor(&self) -> f64 {
        self.curve_xz.tenor()
    }

    /// `F_XY = F_XZ / F_YZ`.
    pub fn cross_forward(&self) -> f64 {
        self.curve_xz.forward() / self.curve_yz.forward()
    }
}

/// `y = Q(G(x))` tabulated with its derivative and evaluated by cubic Hermite interpolation.
#[derive(Debug, Clone)]
struct MarginalMap {
    lo: f64,
    step: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
}

impl MarginalMap {
    /// `cdf(x)` returns `(G, 1 - G, density)` at `x`.
    fn build<F: Fn(f64) -> (f64, f64, f64)>(lo: f64, hi: f64, points: usize, curve: &SmileCurve, cdf: F) -> Self {
        let step = (hi - lo) / (points - 1) as f64;
        let mut y = Vec::with_capacity(points);
        let mut dens = Vec::with_capacity(points);
        for k in 0..points {
            let x = lo + k as f64 * step;
            let (g, s, d) = cdf(x);
            let z = if g < 0.5 { normal::quantile(g) } else { -normal::quantile(s) };
            y.push(curve.quantile_score(z));
            dens.push(d);
        }
        // enforce monotonicity where the scores saturate
        for k in 1..points {
            if y[k] < y[k - 1] {
                y[k] = y[k - 1];
            }
        }
        let dy = (0..points)
            .map(|k| {
                let p = curve.density(y[k]);
                let exact = dens[k] / p;
                if p > 1e-200 && dens[k] > 1e-200 && exact.is_finite() {
                    exact
                } else {
                    let (a, b) = (k.saturating_sub(1), (k + 1).min(points - 1));
                    (y[b] - y[a]) / ((b - a) as f64 * step)
                }
            })
            .collect();
        Self { lo, step, y, dy }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let s = (x - self.lo) / self.step;
        let j = (s.floor().max(0.0) as usize).min(n - 2);
        let t = s - j as f64;
        let (t2, t3) = (t * t, t * t * t);
        let h = self.step;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[j]
            + (t3 - 2.0 * t2 + t) * h * self.dy[j]
            + (-2.0 * t3 + 3.0 * t2) * self.y[j + 1]
            + (t3 - t2) * h * self.dy[j + 1]
    }
}

/// CDF of `a U1 + b U2` with `U1, U2` uniform on `(-1/2, 1/2)`, and its density.
fn trapezoid(t: f64, a: f64, b: f64) -> (f64, f64) {
    let (p, q) = if a >= b { (a, b) } else { (b, a) };
    let lo = -(p + q) / 2.0;
    let s = t - lo;
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    if s >= p + q {
        return (1.0, 0.0);
    }
    let area = p * q;
    if q == 0.0 {
        return (s / p, 1.0 / p);
    }
    if s < q {
        (0.5 * s * s / area, s / area)
    } else if s <= p {
        ((0.5 * q * q + (s - q) * q) / area, 1.0 / p)
    } else {
        let r = p + q - s;
        (1.0 - 0.5 * r * r / area, r / area)
    }
}

/// Rotated-grid engine for Hermite copulas.
#[derive(Debug, Clone)]
struct GridEngine {
    n: usize,
    lo: f64,
    h: f64,
    alpha: [f64; 2],
    subdiv: usize,
    maps: [MarginalMap; 2],
    /// Node masses, `v1` index major.
    mass: Vec<f64>,
    e1: Vec<f64>,
    e2: Vec<f64>,
    /// Values at the `(n + 1)^2` cell corners.
    c1: Vec<f64>,
    c2: Vec<f64>,
    report: DykstraReport,
}

impl GridEngine {
    fn new(model: &ExpansionModel, curves: [&SmileCurve; 2], opts: &GridOptions) -> Result<Self> {
        let rf = rotation_factors(model.rho())?;
        let (a1, a2) = (rf.alpha1, rf.alpha2);
        let n = opts.sections;
        let grid = CartesianGrid::uniform(1, -opts.bound, opts.bound, n)?;
        let h = grid.spacing(0);
        let lo = -opts.bound;
        let vs = grid.axis_points(0);
        let xb = opts.bound * (a1 + a2) + 2.0 * h;
        let points = opts.map_points.max(101);
        let (mass, maps, report) = {
            let mut vmodel = ExpansionModel::new(model.n_max(), Mixing::cholesky(0.0)?)?;
            for (k, i, c) in model.entries() {
                if c != 0.0 {
                    vmodel.set_coefficient(k, i, c)?;
                }
            }
            let vgrid = CartesianGrid::uniform(2, lo, opts.bound, n)?;
            let (corrected, report) = correct_expansion(&vmodel, &vgrid, &opts.dykstra)?;
            let w = vgrid.weight();
            let mut mass: Vec<f64> = corrected
                .values
                .iter()
                .zip(&corrected.weight_density)
                .map(|(r, p)| (r * p * w).max(0.0))
                .collect();
            let total: f64 = mass.iter().sum();
            mass.iter_mut().for_each(|m| *m /= total);
            let m1 = Self::spread_marginal(&mass, &vs, [a1, -a2], h, xb, points, curves[0]);
            let m2 = Self::spread_marginal(&mass, &vs, [a1, a2], h, xb, points, curves[1]);
            (mass, [m1, m2], report)
        };
        let mut e1 = vec![0.0; n * n];
        let mut e2 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (x1, x2) = (a1 * vs[i] - a2 * vs[j], a1 * vs[i] + a2 * vs[j]);
                e1[i * n + j] = maps[0].eval(x1).exp();
                e2[i * n + j] = maps[1].eval(x2).exp();
            }
        }
        let m = n + 1;
        let mut c1 = vec![0.0; m * m];
        let mut c2 = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let (v1, v2) = (lo + i as f64 * h, lo + j as f64 * h);
                c1[i * m + j] = maps[0].eval(a1 * v1 - a2 * v2).exp();
                c2[i * m + j] = maps[1].eval(a1 * v1 + a2 * v2).exp();
            }
        }
        Ok(Self { n, lo, h, alpha: [a1, a2], subdiv: opts.kink_subdivisions.max(1), maps, mass, e1, e2, c1, c2, report })
    }

    /// Marginal map of `x = c1 v1 + c2 v2` when each cell's mass is spread
    /// uniformly over the cell.
    fn spread_marginal(
        mass: &[f64],
        vs: &[f64],
        c: [f64; 2],
        h: f64,
        xb: f64,
        points: usize,
        curve: &SmileCurve,
    ) -> MarginalMap {
        let n = vs.len();
        let step = 2.0 * xb / (points - 1) as f64;
        let (a, b) = (c[0].abs() * h, c[1].abs() * h);
        let half = 0.5 * (a + b);
        let mut below = vec![0.0; points + 1];
        let mut partial = vec![0.0; points];
        let mut dens = vec![0.0; points];
        for i in 0..n {
            for j in 0..n {
                let m = mass[i * n + j];
                if m == 0.0 {
                    continue;
                }
                let x0 = c[0] * vs[i] + c[1] * vs[j];
                let first = (((x0 - half + xb) / step).ceil().max(0.0) as usize).min(points);
                let last = (((x0 + half + xb) / step).floor().max(-1.0) + 1.0) as usize;
                let last = last.min(points);
                for k in first..last.max(first) {
                    let (g, d) = trapezoid(-xb + k as f64 * step - x0, a, b);
                    partial[k] += m * g;
                    dens[k] += m * d;
                }
                below[last.max(first)] += m;
            }
        }
        let mut cum = 0.0;
        let total: f64 = mass.iter().sum();
        let mut table = Vec::with_capacity(points);
        for k in 0..points {
            cum += below[k];
            let g = cum + partial[k];
            table.push((g, (total - g).max(0.0), dens[k]));
        }
        MarginalMap::build(-xb, xb, points, curve, |x| table[(((x + xb) / step).round() as usize).min(points - 1)])
    }

    /// `E[(e^y1 - K e^y2)+]`.
    fn expected_call(&self, k: f64) -> f64 {
        let n = self.n;
        let m = n + 1;
        let sign: Vec<bool> = self.c1.iter().zip(&self.c2).map(|(a, b)| a - k * b > 0.0).collect();
        let mut total = 0.0;
        let s = self.subdiv;
        let inv = 1.0 / (s * s) as f64;
        let [a1, a2] = self.alpha;
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let w = self.mass[idx];
                if w == 0.0 {
                    continue;
                }
                let f = self.e1[idx] - k * self.e2[idx];
                let corners = [sign[i * m + j], sign[i * m + j + 1], sign[(i + 1) * m + j], sign[(i + 1) * m + j + 1]];
                let all = corners.iter().all(|c| *c) && f > 0.0;
                let none = corners.iter().all(|c| !*c) && f <= 0.0;
                if all {
                    total += w * f;
                } else if !none {
                    let mut acc = 0.0;
                    for p in 0..s {
                        let v1 = self.lo + (i as f64 + (p as f64 + 0.5) / s as f64) * self.h;
                        for q in 0..s {
                            let v2 = self.lo + (j as f64 + (q as f64 + 0.5) / s as f64) * self.h;
                            let y1 = self.maps[0].eval(a1 * v1 - a2 * v2);
                            let y2 = self.maps[1].eval(a1 * v1 + a2 * v2);
                            acc += (y1.exp() - k * y2.exp()).max(0.0);
                        }
                    }
                    total += w * acc * inv;
                }
            }
        }
        total
    }

    fn means(&self) -> (f64, f64, f64) {
        let mut m = (0.0, 0.0, 0.0);
        for ((w, a), b) in self.mass.iter().zip(&self.e1).zip(&self.e2) {
            m.0 += w;
            m.1 += w * a;
            m.2 += w * b;
        }
        m
    }
}

/// Engine for diagonal Hermite models: the corrected factor lives on the
/// `v2` grid and `v1` stays exactly Gaussian, so each `v2` row is integrated
/// in `v1` by Gauss-Legendre panels split at the payoff kink.
#[derive(Debug, Clone)]
struct ProductEngine {
    alpha: [f64; 2],
    maps: [MarginalMap; 2],
    v2: Vec<f64>,
    q: Vec<f64>,
    edges: Vec<f64>,
    ref_nodes: (Vec<f64>, Vec<f64>),
    /// Per row and panel node: `phi(v1) w`, `e^y1`, `e^y2`.
    node_w: Vec<f64>,
    node_e1: Vec<f64>,
    node_e2: Vec<f64>,
    /// Per row and panel edge: `y1 - y2`.
    edge_gap: Vec<f64>,
    report: DykstraReport,
    mass: f64,
    mean1: f64,
    mean2: f64,
}

const V1_BOUND: f64 = 8.5;
const V1_PANELS: usize = 68;
const V1_ORDER: usize = 6;

impl ProductEngine {
    fn new(model: &ExpansionModel, curves: [&SmileCurve; 2], opts: &GridOptions) -> Result<Self> {
        let rf = rotation_factors(model.rho())?;
        let (a1, a2) = (rf.alpha1, rf.alpha2);
        let grid = CartesianGrid::uniform(1, -opts.bound, opts.bound, opts.sections)?;
        let h = grid.spacing(0);
        let vs = grid.axis_points(0);
        let m: Vec<f64> = (1..=model.n_max()).map(|k| model.coefficient(k, 0)).collect();
        let (ratio, report) = correct_1d_factor(&m, &grid, &opts.dykstra)?;
        let q: Vec<f64> = ratio.iter().zip(&vs).map(|(r, v)| r * normal::pdf(*v) * h).collect();
        let total: f64 = q.iter().sum();
        let (v2, q): (Vec<f64>, Vec<f64>) =
            vs.iter().zip(&q).filter(|(_, w)| **w > 0.0).map(|(v, w)| (*v, *w / total)).unzip();
        let xb = V1_BOUND * a1 + opts.bound * a2 + 0.1;
        let points = opts.map_points.max(101);
        let mixture = |x: f64, sign: f64| {
            let (mut g, mut s, mut d) = (0.0, 0.0, 0.0);
            for (v, w) in v2.iter().zip(&q) {
                let z = (x + sign * a2 * v) / a1;
                g += w * normal::cdf(z);
                s += w * normal::cdf(-z);
                d += w * normal::pdf(z);
            }
            (g, s, d / a1)
        };
        let maps = [
            MarginalMap::build(-xb, xb, points, curves[0], |x| mixture(x, 1.0)),
            MarginalMap::build(-xb, xb, points, curves[1], |x| mixture(x, -1.0)),
        ];
        let ph = 2.0 * V1_BOUND / V1_PANELS as f64;
        let edges: Vec<f64> = (0..=V1_PANELS).map(|p| -V1_BOUND + p as f64 * ph).collect();
        let ref_nodes = gauss_legendre_nodes(V1_ORDER, -1.0, 1.0);
        let per_row = V1_PANELS * V1_ORDER;
        let mut node_w = Vec::with_capacity(per_row * v2.len());
        let mut node_e1 = Vec::with_capacity(per_row * v2.len());
        let mut node_e2 = Vec::with_capacity(per_row * v2.len());
        let mut edge_gap = Vec::with_capacity((V1_PANELS + 1) * v2.len());
        let (mut mass, mut mean1, mut mean2) = (0.0, 0.0, 0.0);
        for (j, &v) in v2.iter().enumerate() {
            for p in 0..V1_PANELS {
                for (t, wt) in ref_nodes.0.iter().zip(&ref_nodes.1) {
                    let v1 = edges[p] + 0.5 * ph * (1.0 + t);
                    let w = normal::pdf(v1) * 0.5 * ph * wt;
                    let e1 = maps[0].eval(a1 * v1 - a2 * v).exp();
                    let e2 = maps[1].eval(a1 * v1 + a2 * v).exp();
                    node_w.push(w);
                    node_e1.push(e1);
                    node_e2.push(e2);
                    mass += q[j] * w;
                    mean1 += q[j] * w * e1;
                    mean2 += q[j] * w * e2;
                }
            }
            for e in &edges {
                edge_gap.push(maps[0].eval(a1 * e - a2 * v) - maps[1].eval(a1 * e + a2 * v));
            }
        }
        Ok(Self {
            alpha: [a1, a2],
            maps,
            v2,
            q,
            edges,
            ref_nodes,
            node_w,
            node_e1,
            node_e2,
            edge_gap,
            report,
            mass,
            mean1,
            mean2,
        })
    }

    #[inline]
    fn gap(&self, v1: f64, v2: f64) -> f64 {
        let [a1, a2] = self.alpha;
        self.maps[0].eval(a1 * v1 - a2 * v2) - self.maps[1].eval(a1 * v1 + a2 * v2)
    }

    /// `int phi(v1) (e^y1 - K e^y2)+` over `[a, b]` with one Gauss-Legendre panel.
    fn panel(&self, a: f64, b: f64, v2: f64, k: f64) -> f64 {
        let [a1, a2] = self.alpha;
        let mut s = 0.0;
        for (t, wt) in self.ref_nodes.0.iter().zip(&self.ref_nodes.1) {
            let v1 = 0.5 * (a + b) + 0.5 * (b - a) * t;
            let f = self.maps[0].eval(a1 * v1 - a2 * v2).exp() - k * self.maps[1].eval(a1 * v1 + a2 * v2).exp();
            s += normal::pdf(v1) * 0.5 * (b - a) * wt * f.max(0.0);
        }
        s
    }

    fn expected_call(&self, k: f64) -> f64 {
        let lnk = k.ln();
        let panels = self.edges.len() - 1;
        let per_row = panels * V1_ORDER;
        let mut total = 0.0;
        for (j, &v2) in self.v2.iter().enumerate() {
            let gaps = &self.edge_gap[j * (panels + 1)..(j + 1) * (panels + 1)];
            let base = j * per_row;
            let mut row = 0.0;
            for p in 0..panels {
                let (ga, gb) = (gaps[p] - lnk, gaps[p + 1] - lnk);
                if ga > 0.0 && gb > 0.0 {
                    for i in base + p * V1_ORDER..base + (p + 1) * V1_ORDER {
                        row += self.node_w[i] * (self.node_e1[i] - k * self.node_e2[i]).max(0.0);
                    }
                } else if ga <= 0.0 && gb <= 0.0 {
                    continue;
                } else {
                    // bisection for the kink, then integrate the positive side exactly
                    let (mut lo, mut hi) = (self.edges[p], self.edges[p + 1]);
                    let rising = gb > ga;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let g = self.gap(mid, v2) - lnk;
                        if (g > 0.0) == rising {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                        if hi - lo < 1e-13 {
                            break;
                        }
                    }
                    let root = 0.5 * (lo + hi);
                    row += if rising {
                        self.panel(root, self.edges[p + 1], v2, k)
                    } else {
                        self.panel(self.edges[p], root, v2, k)
                    };
                }
            }
            total += self.q[j] * row;
        }
        total
    }
}

/// Normal-score Gauss-Legendre engine for classical copulas.
#[derive(Debug, Clone)]
struct ClassicalEngine {
    copula: ClassicalCopula,
    curve1: SmileCurve,
    /// Panel edges on the `z1` axis.
    edges: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    y2: Vec<f64>,
    e2: Vec<f64>,
    /// `suffix_mass[j * (panels + 1) + p]`: mass of row `j` in panels `p..`.
    suffix_mass: Vec<f64>,
    suffix_e1: Vec<f64>,
    ref_nodes: (Vec<f64>, Vec<f64>),
    mass: f64,
    mean1: f64,
    mean2: f64,
}

impl ClassicalEngine {
    fn new(copula: ClassicalCopula, curves: [&SmileCurve; 2], opts: &ClassicalOptions) -> Result<Self> {
        if opts.panels == 0 || opts.order == 0 || !(opts.bound > 0.0) {
            return Err(Error::InvalidInput("classical quadrature needs panels, order and bound > 0".into()));
        }
        let (panels, order) = (opts.panels, opts.order);
        let h = 2.0 * opts.bound / panels as f64;
        let edges: Vec<f64> = (0..=panels).map(|p| -opts.bound + p as f64 * h).collect();
        let ref_nodes = gauss_legendre_nodes(order, -1.0, 1.0);
        let mut z = Vec::with_capacity(panels * order);
        let mut w = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let (a, b) = (edges[p], edges[p + 1]);
            for (t, wt) in ref_nodes.0.iter().zip(&ref_nodes.1) {
                z.push(0.5 * (a + b) + 0.5 * (b - a) * t);
                w.push(0.5 * (b - a) * wt);
            }
        }
        let e1: Vec<f64> = z.iter().map(|v| curves[0].quantile_score(*v).exp()).collect();
        let y2: Vec<f64> = z.iter().map(|v| curves[1].quantile_score(*v)).collect();
        let e2: Vec<f64> = y2.iter().map(|v| v.exp()).collect();
        let m = z.len();
        let mut suffix_mass = vec![0.0; m * (panels + 1)];
        let mut suffix_e1 = vec![0.0; m * (panels + 1)];
        let (mut mass, mut mean1, mut mean2) = (0.0, 0.0, 0.0);
        let mut row = vec![0.0; m];
        for j in 0..m {
            for i in 0..m {
                row[i] = copula.joint_density_normal(z[i], z[j]) * w[i] * w[j];
            }
            let base = j * (panels + 1);
            for p in (0..panels).rev() {
                let (mut sm, mut se) = (0.0, 0.0);
                for i in p * order..(p + 1) * order {
                    sm += row[i];
                    se += row[i] * e1[i];
                }
                suffix_mass[base + p] = suffix_mass[base + p + 1] + sm;
                suffix_e1[base + p] = suffix_e1[base + p + 1] + se;
            }
            mass += suffix_mass[base];
            mean1 += suffix_e1[base];
            mean2 += suffix_mass[base] * e2[j];
        }
        Ok(Self {
            copula,
            curve1: curves[0].clone(),
            edges,
            z,
            w,
            y2,
            e2,
            suffix_mass,
            suffix_e1,
            ref_nodes,
            mass,
            mean1,
            mean2,
        })
    }

    /// `E[(e^y1 - K e^y2)+]`, integrating each `z2` row from the exact kink.
    fn expected_call(&self, k: f64) -> f64 {
        let panels = self.edges.len() - 1;
        let (lo, hi) = (self.edges[0], self.edges[panels]);
        let width = self.edges[1] - self.edges[0];
        let lnk = k.ln();
        let mut total = 0.0;
        for j in 0..self.z.len() {
            let base = j * (panels + 1);
            let u = self.curve1.cdf(lnk + self.y2[j]);
            let zk = if u < 0.5 { normal::quantile(u) } else { -normal::quantile(1.0 - u) };
            if zk >= hi {
                continue;
            }
            if zk <= lo {
                total += self.suffix_e1[base] - k * self.e2[j] * self.suffix_mass[base];
                continue;
            }
            let p = (((zk - lo) / width).floor() as usize).min(panels - 1);
            let mut row = self.suffix_e1[base + p + 1] - k * self.e2[j] * self.suffix_mass[base + p + 1];
            let (a, b) = (zk, self.edges[p + 1]);
            for (t, wt) in self.ref_nodes.0.iter().zip(&self.ref_nodes.1) {
                let z1 = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let d = self.copula.joint_density_normal(z1, self.z[j]) * 0.5 * (b - a) * wt * self.w[j];
                row += d * (self.curve1.quantile_score(z1).exp() - k * self.e2[j]).max(0.0);
            }
            total += row;
        }
        total
    }
}

#[derive(Debug, Clone)]
enum Engine {
    Product(Box<ProductEngine>),
    Grid(Box<GridEngine>),
    Classical(Box<ClassicalEngine>),
}

/// A setup with its quadrature precomputed, for pricing many strikes.
#[derive(Debug, Clone)]
pub struct CrossPricer {
    setup: CrossSetup,
    engine: Engine,
    mass: f64,
    mean1: f64,
    mean2: f64,
}

impl CrossPricer {
    pub fn new(setup: &CrossSetup) -> Result<Self> {
        let curves = [&setup.curve_xz, &setup.curve_yz];
        let (engine, mass, mean1, mean2) = match &setup.copula {
            CopulaModel::Hermite(model) if model.is_diagonal() && !setup.options.grid.full_grid => {
                let e = ProductEngine::new(model, curves, &setup.options.grid)?;
                let (m, a, b) = (e.mass, e.mean1, e.mean2);
                (Engine::Product(Box::new(e)), m, a, b)
            }
            CopulaModel::Hermite(model) => {
                let g = GridEngine::new(model, curves, &setup.options.grid)?;
                let (m, a, b) = g.means();
                (Engine::Grid(Box::new(g)), m, a, b)
            }
            CopulaModel::Classical(c) => {
                let e = ClassicalEngine::new(*c, curves, &setup.options.classical)?;
                let (m, a, b) = (e.mass, e.mean1, e.mean2);
                (Engine::Classical(Box::new(e)), m, a, b)
            }
        };
        if !(mass > 0.5 && mean1 > 0.0 && mean2 > 0.0) {
            return Err(Error::NonConvergence(format!("cross quadrature lost its mass ({mass})")));
        }
        Ok(Self { setup: setup.clone(), engine, mass, mean1, mean2 })
    }

    pub fn setup(&self) -> &CrossSetup {
        &self.setup
    }

    /// Dykstra report of the Hermite correction, if any.
    pub fn correction_report(&self) -> Option<&DykstraReport> {
        match &self.engine {
            Engine::Product(e) => Some(&e.report),
            Engine::Grid(g) => Some(&g.report),
            Engine::Classical(_) => None,
        }
    }

    /// Total probability captured by the quadrature.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    fn expected_call(&self, k: f64) -> f64 {
        match &self.engine {
            Engine::Product(e) => e.expected_call(k),
            Engine::Grid(g) => g.expected_call(k),
            Engine::Classical(c) => c.expected_call(k),
        }
    }

    /// Call price in `Z`.
    pub fn call(&self, strike: f64) -> Result<f64> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(invalid("strike", strike, "must be positive"));
        }
        Ok(self.setup.df_z * self.expected_call(strike))
    }

    /// Put price in `Z`, by parity under the same quadrature.
    pub fn put(&self, strike: f64) -> Result<f64> {
        let c = self.call(strike)?;
        Ok(c - self.setup.df_z * (self.mean1 - strike * self.mean2))
    }

    /// `E[e^y1]` and `E[e^y2]` under the quadrature.
    pub fn forwards(&self) -> (f64, f64) {
        (self.mean1, self.mean2)
    }

    /// Cross forward implied by the quadrature.
    pub fn numeric_cross_forward(&self) -> f64 {
        self.mean1 / self.mean2
    }

    /// Relative error of the `Y` forward identity.
    pub fn forward_consistency(&self) -> f64 {
        let s = &self.setup;
        let lhs = s.df_z * self.mean2;
        let rhs = s.spot_yz * s.df_y;
        (lhs - rhs).abs() / rhs
    }

    /// Black vol of the cross at `strike`, inverted from the out-of-the-money side.
    pub fn implied_vol(&self, strike: f64) -> Result<f64> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(invalid("strike", strike, "must be positive"));
        }
        let fwd = self.numeric_cross_forward();
        let c = self.expected_call(strike);
        let call = strike >= fwd;
        // undiscounted price in Y per unit notional
        let undisc = if call { c } else { c - (self.mean1 - strike * self.mean2) } / self.mean2;
        implied_vol(undisc, strike, fwd, self.setup.tenor(), 1.0, call)
    }

    /// Vol and strike of a pillar on the cross smile, solved by fixed point.
    pub fn pillar(&self, pillar: Pillar, start: f64) -> Result<(f64, f64)> {
        let fwd = self.numeric_cross_forward();
        let t = self.setup.tenor();
        let mut sigma = start;
        let mut prev: Option<(f64, f64)> = None;
        for _ in 0..20 {
            let k = strike_for(pillar, fwd, t, sigma);
            let g = self.implied_vol(k)?;
            if (g - sigma).abs() < 1e-10 {
                return Ok((g, strike_for(pillar, fwd, t, g)));
            }
            // secant on sigma -> g(sigma) - sigma once two iterates exist
            let next = match prev {
                Some((s0, g0)) if ((g - sigma) - (g0 - s0)).abs() > 1e-300 => {
                    let r1 = g - sigma;
                    let r0 = g0 - s0;
                    let cand = sigma - r1 * (sigma - s0) / (r1 - r0);
                    if cand > 0.0 && cand.is_finite() { cand } else { g }
                }
                _ => g,
            };
            prev = Some((sigma, g));
            sigma = next;
        }
        Err(Error::NonConvergence(format!("cross {} strike did not converge in 20 iterations", pillar.name())))
    }

    /// The five cross pillars.
    pub fn smile_pillars(&self) -> Result<SmilePillars> {
        let s = &self.setup;
        let fwd = self.numeric_cross_forward();
        let start = self.implied_vol(fwd)?;
        let atm = self.pillar(Pillar::Atm, start)?.0;
        let mut out = SmilePillars::flat(s.tenor(), s.cross_forward(), s.df_y, s.df_x, atm);
        for p in [Pillar::C25, Pillar::P25, Pillar::C10, Pillar::P10] {
            out.set_vol(p, self.pillar(p, atm)?.0);
        }
        Ok(out)
    }
}

pub fn price_cross_call(s: &CrossSetup, strike: f64) -> Result<f64> {
    CrossPricer::new(s)?.call(strike)
}

pub fn cross_implied_vol(s: &CrossSetup, strike: f64) -> Result<f64> {
    CrossPricer::new(s)?.implied_vol(strike)
}

pub fn cross_smile_pillars(s: &CrossSetup) -> Result<SmilePillars> {
    CrossPricer::new(s)?.smile_pillars()
}

pub fn forward_consistency(s: &CrossSetup) -> Result<f64> {
    Ok(CrossPricer::new(s)?.forward_consistency())
}

/// Hermite expansion of the approximate cross density for standardised
/// marginals with a common vol `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaDiagnostic {
    pub sigma: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub nu_xz: f64,
    pub nu_yz: f64,
    /// `exp(nu_yz + sigma^2 / 2)`.
    pub prefactor: f64,
    /// Coefficient of `He~_k(v)` in `Lambda(v) / prefactor`, starting at `k = 0`.
    pub coefficients: Vec<f64>,
}

impl LambdaDiagnostic {
    pub fn lambda(&self, v: f64) -> f64 {
        let mut h = vec![0.0; self.coefficients.len()];
        hermite_orthonormal_all(v, &mut h);
        self.prefactor * self.coefficients.iter().zip(&h).map(|(c, h)| c * h).sum::<f64>()
    }

    /// `int Lambda(v) phi(v) dv`.
    pub fn normalizer(&self) -> f64 {
        self.prefactor * self.coefficients[0]
    }

    /// Normalised density of `v2`.
    pub fn density(&self, v2: f64) -> f64 {
        let u = v2 - self.sigma * self.alpha2;
        self.lambda(u) * normal::pdf(u) / self.normalizer()
    }

    /// Approximate cross log-rate at `v2`.
    pub fn log_cross(&self, v2: f64) -> f64 {
        self.nu_xz - self.nu_yz - 2.0 * self.sigma * self.alpha2 * v2
    }

    /// Central moments `(mean, variance, third)` of `v2` under [`LambdaDiagnostic::density`].
    pub fn v2_moments(&self) -> (f64, f64, f64) {
        let (lo, hi, n) = (-12.0, 12.0, 4800);
        let h = (hi - lo) / n as f64;
        let pts: Vec<(f64, f64)> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).map(|v| (v, self.density(v) * h)).collect();
        let mean: f64 = pts.iter().map(|(v, w)| v * w).sum();
        let var: f64 = pts.iter().map(|(v, w)| (v - mean).powi(2) * w).sum();
        let third: f64 = pts.iter().map(|(v, w)| (v - mean).powi(3) * w).sum();
        (mean, var, third)
    }
}

pub fn lambda_diagnostic(model: &ExpansionModel, sigma: f64, nu_xz: f64, nu_yz: f64) -> Result<LambdaDiagnostic> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", sigma, "must be positive"));
    }
    let rf = rotation_factors(model.rho())?;
    let (a1, a2) = (rf.alpha1, rf.alpha2);
    let mut coefficients = vec![0.0; model.n_max() + 1];
    coefficients[0] = 1.0;
    let fact = |k: usize| (1..=k).fold(1.0, |acc, j| acc * j as f64);
    for (n, i, m) in model.entries() {
        if m == 0.0 {
            continue;
        }
        let lead = m * (sigma * a1).powi(i as i32) / fact(i).sqrt();
        for (k, c) in hermite_shift_expand(n - i, sigma * a2).iter().enumerate() {
            coefficients[k] += lead * c;
        }
    }
    Ok(LambdaDiagnostic {
        sigma,
        alpha1: a1,
        alpha2: a2,
        nu_xz,
        nu_yz,
        prefactor: (nu_yz + 0.5 * sigma * sigma * (a1 * a1 + a2 * a2)).exp(),
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::Family;
    use crate::smile::{build_curve, SmilePillars, DEFAULT_GRID_SIZE};

    fn flat_setup(copula: CopulaModel, s1: f64, s2: f64) -> CrossSetup {
        let a = build_curve(&SmilePillars::flat(1.0, 1.15, 0.99, 0.995, s1), DEFAULT_GRID_SIZE).unwrap();
        let b = build_curve(&SmilePillars::flat(1.0, 0.0088, 0.99, 0.999, s2), DEFAULT_GRID_SIZE).unwrap();
        CrossSetup::new(a, b, copula).unwrap()
    }

    fn closed_form(s1: f64, s2: f64, rho: f64) -> f64 {
        (s1 * s1 + s2 * s2 - 2.0 * rho * s1 * s2).sqrt()
    }

    #[test]
    fn trapezoid_cdf() {
        let (a, b) = (0.3, 0.1);
        let n = 20000;
        let mut acc = 0.0;
        let lo = -0.2;
        let h = 0.4 / n as f64;
        for i in 0..n {
            let t = lo + (i as f64 + 0.5) * h;
            acc += trapezoid(t, a, b).1 * h;
            let want = trapezoid(t + 0.5 * h, a, b).0;
            assert!((acc - want).abs() < 1e-6, "{t}");
        }
        assert_eq!(trapezoid(0.3, a, b).0, 1.0);
    }

    #[test]
    fn gauss_flat_closed_form_both_paths() {
        let (s1, s2, rho) = (0.10, 0.12, 0.4);
        let want = closed_form(s1, s2, rho);
        let hermite = flat_setup(CopulaModel::Hermite(ExpansionModel::zero(4, rho).unwrap()), s1, s2);
        let classical = hermite.with_copula(CopulaModel::Classical(ClassicalCopula::new(Family::Gauss, rho).unwrap()));
        for s in [&hermite, &classical] {
            let p = CrossPricer::new(s).unwrap();
            let pillars = p.smile_pillars().unwrap();
            for v in pillars.vols() {
                assert!((v - want).abs() < 1e-3, "{} {v} vs {want}", s.copula.name());
            }
            assert!(p.forward_consistency() < 2e-3);
        }
    }

    #[test]
    fn hermite_zero_matches_gauss_prices() {
        let rho = 0.3;
        let hermite = flat_setup(CopulaModel::Hermite(ExpansionModel::zero(4, rho).unwrap()), 0.09, 0.11);
        let classical = hermite.with_copula(CopulaModel::Classical(ClassicalCopula::new(Family::Gauss, rho).unwrap()));
        let (ph, pc) = (CrossPricer::new(&hermite).unwrap(), CrossPricer::new(&classical).unwrap());
        let f = hermite.cross_forward();
        for m in [0.85, 0.95, 1.0, 1.05, 1.2] {
            let (a, b) = (ph.call(f * m).unwrap(), pc.call(f * m).unwrap());
            assert!((a - b).abs() < 5e-4 * b, "{m}: {a} vs {b}");
        }
    }

    #[test]
    fn degenerate_strike_gives_forward() {
        let s = flat_setup(CopulaModel::Classical(ClassicalCopula::new(Family::Frank, 3.0).unwrap()), 0.1, 0.12);
        let p = CrossPricer::new(&s).unwrap();
        let f_xz = s.curve_xz.forward();
        let c = p.call(1e-9 * s.cross_forward()).unwrap();
        assert!((c - s.df_z * f_xz).abs() < 1e-3 * s.df_z * f_xz);
    }

    #[test]
    fn parity_monotone_convex() {
        let s = flat_setup(CopulaModel::Classical(ClassicalCopula::new(Family::Clayton, 1.5).unwrap()), 0.1, 0.12);
        let p = CrossPricer::new(&s).unwrap();
        let f = s.cross_forward();
        let ks: Vec<f64> = (0..41).map(|i| f * (0.7 + 0.015 * i as f64)).collect();
        let cs: Vec<f64> = ks.iter().map(|k| p.call(*k).unwrap()).collect();
        for w in cs.windows(3) {
            assert!(w[1] <= w[0] && w[2] <= w[1]);
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-12);
        }
        let (fx, fy) = (s.curve_xz.forward(), s.curve_yz.forward());
        for k in [0.9 * f, f, 1.1 * f] {
            let lhs = p.call(k).unwrap() - p.put(k).unwrap();
            let rhs = s.df_z * (fx - k * fy);
            assert!((lhs - rhs).abs() < 1e-3 * rhs.abs().max(s.df_z * fx * 1e-2));
        }
    }

    #[test]
    fn forward_error_is_copula_free() {
        let base = flat_setup(CopulaModel::Hermite(ExpansionModel::zero(4, 0.2).unwrap()), 0.1, 0.12);
        let e0 = CrossPricer::new(&base).unwrap().forward_consistency();
        for rho in [-0.5, 0.0, 0.6] {
            let s = base.with_copula(CopulaModel::Hermite(ExpansionModel::zero(4, rho).unwrap()));
            let e = CrossPricer::new(&s).unwrap().forward_consistency();
            assert!(e < 1e-3);
            assert!((e - e0).abs() < 1e-6, "{e} vs {e0}");
        }
        for fam in Family::ALL {
            let theta = crate::copulas::spearman_to_theta(fam, 0.4).unwrap();
            let s = base.with_copula(CopulaModel::Classical(ClassicalCopula::new(fam, theta).unwrap()));
            assert!(CrossPricer::new(&s).unwrap().forward_consistency() < 1e-3, "{fam:?}");
        }
    }

    #[test]
    fn perfectly_correlated_identical_legs() {
        let s = flat_setup(CopulaModel::Hermite(ExpansionModel::zero(4, 0.9999).unwrap()), 0.1, 0.1);
        let p = CrossPricer::new(&s).unwrap();
        let v = p.implied_vol(p.numeric_cross_forward()).unwrap();
        assert!(v < 0.1 * (2.0f64 * 1e-4).sqrt() + 5e-4, "{v}");
    }

    #[test]
    fn diagonal_and_full_paths_agree() {
        let mut m = ExpansionModel::zero(4, 0.35).unwrap();
        m.set_coefficient(3, 0, -0.05).unwrap();
        m.set_coefficient(4, 0, 0.04).unwrap();
        let s = flat_setup(CopulaModel::Hermite(m.clone()), 0.1, 0.12);
        let diag = CrossPricer::new(&s).unwrap();
        // a negligible off-diagonal term forces the 2-D route
        m.set_coefficient(4, 2, 1e-12).unwrap();
        let full = CrossPricer::new(&s.with_copula(CopulaModel::Hermite(m))).unwrap();
        let f = s.cross_forward();
        for x in [0.9, 1.0, 1.1] {
            let (a, b) = (diag.implied_vol(f * x).unwrap(), full.implied_vol(f * x).unwrap());
            assert!((a - b).abs() < 2e-4, "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn lambda_matches_triple_sum() {
        let mut m = ExpansionModel::zero(6, 0.5).unwrap();
        let vals = [(3, 0, 0.3), (4, 0, -0.1), (5, 0, 0.05), (6, 0, -0.02), (3, 1, 0.2), (4, 2, 0.1), (6, 3, -0.04)];
        for (n, i, v) in vals {
            m.set_coefficient(n, i, v).unwrap();
        }
        let sigma = 0.3;
        let d = lambda_diagnostic(&m, sigma, 0.1, -0.2).unwrap();
        let rf = rotation_factors(0.5).unwrap();
        let (a1, a2) = (rf.alpha1, rf.alpha2);
        let f = |k: usize| (1..=k).fold(1.0, |acc, j| acc * j as f64);
        for k in 0..=6 {
            let mut c = if k == 0 { 1.0 } else { 0.0 };
            for n in 3.max(k)..=6 {
                for i in 0..=(n - k) {
                    let mh = m.coefficient(n, i);
                    c += mh * (f(n - i) / (f(i) * f(k))).sqrt() * sigma.powi((n - k) as i32) * a1.powi(i as i32)
                        * a2.powi((n - i - k) as i32)
                        / f(n - i - k);
                }
            }
            assert!((c - d.coefficients[k]).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn lambda_matches_inner_integral() {
        let mut m = ExpansionModel::zero(4, 0.5).unwrap();
        m.set_coefficient(3, 0, 0.2).unwrap();
        m.set_coefficient(3, 1, 0.1).unwrap();
        m.set_coefficient(4, 2, -0.05).unwrap();
        let (sigma, nu) = (0.25, 0.03);
        let d = lambda_diagnostic(&m, sigma, 0.0, nu).unwrap();
        let (a1, a2) = (d.alpha1, d.alpha2);
        let (z, w) = crate::quadrature::gauss_hermite_nodes(40).unwrap();
        let mut h1 = vec![0.0; 5];
        let mut h2 = vec![0.0; 5];
        for v2 in [-1.5, 0.0, 0.7, 2.0] {
            let inner: f64 = z
                .iter()
                .zip(&w)
                .map(|(v1, wt)| {
                    wt * (nu + sigma * (a1 * v1 + a2 * v2)).exp() * m.ratio_at_independent(*v1, v2, &mut h1, &mut h2)
                })
                .sum();
            let lhs = inner * normal::pdf(v2);
            let u = v2 - sigma * a2;
            let rhs = d.lambda(u) * normal::pdf(u);
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0), "{v2}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn lambda_gauss_and_skew() {
        let g = lambda_diagnostic(&ExpansionModel::zero(4, 0.5).unwrap(), 0.1, 0.0, 0.0).unwrap();
        assert!(g.coefficients[1..].iter().all(|c| *c == 0.0));
        for v in [-2.0, 0.3, 1.0] {
            let u = v - g.sigma * g.alpha2;
            assert!((g.density(v) - normal::pdf(u)).abs() < 1e-14);
        }
        let mut m = ExpansionModel::zero(4, 0.5).unwrap();
        m.set_coefficient(3, 0, 1.0 / 6f64.sqrt()).unwrap();
        let d = lambda_diagnostic(&m, 0.1, 0.0, 0.0).unwrap();
        let (_, var, third) = d.v2_moments();
        // positive skew in v2 is negative skew of the cross log-rate
        assert!(third / var.powf(1.5) > 0.1);
    }
}
