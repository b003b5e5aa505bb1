//! Midpoint Cartesian grids, discrete inner products, and Gauss rules.
//!
//! Nodes are stored row-major: the flat index of `(j_0, .., j_{N-1})` is
//! `((j_0 * M_1 + j_1) * M_2 + j_2) ...`, so the last axis varies fastest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normal;

/// Largest supported grid dimension.
pub const MAX_DIM: usize = 4;

/// An equally spaced midpoint grid on a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartesianGrid {
    bounds: Vec<[f64; 2]>,
    sections: Vec<usize>,
}

impl CartesianGrid {
    pub fn new(bounds: &[[f64; 2]], sections: &[usize]) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > MAX_DIM {
            return Err(Error::InvalidInput(format!(
                "grid dimension must be 1..={MAX_DIM}, got {}",
                bounds.len()
            )));
        }
        if bounds.len() != sections.len() {
            return Err(Error::ShapeMismatch {
                expected: bounds.len(),
                got: sections.len(),
            });
        }
        for (b, &m) in bounds.iter().zip(sections) {
            if !(b[0].is_finite() && b[1].is_finite()) || b[0] >= b[1] {
                return Err(Error::InvalidInput(format!("degenerate bounds [{}, {}]", b[0], b[1])));
            }
            if m < 2 {
                return Err(invalid("sections", m as f64, "need at least 2 sections per axis"));
            }
        }
        Ok(Self {
            bounds: bounds.to_vec(),
            sections: sections.to_vec(),
        })
    }

    /// `[lo, hi]^dim` with `sections` cells per axis.
    pub fn uniform(dim: usize, lo: f64, hi: f64, sections: usize) -> Result<Self> {
        Self::new(&vec![[lo, hi]; dim], &vec![sections; dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn sections(&self) -> &[usize] {
        &self.sections
    }

    pub fn len(&self) -> usize {
        self.sections.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.bounds[axis][1] - self.bounds[axis][0]) / self.sections[axis] as f64
    }

    /// Cell volume, the common quadrature weight of every node.
    pub fn weight(&self) -> f64 {
        (0..self.dim()).map(|d| self.spacing(d)).product()
    }

    /// Midpoint `j` on `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, j: usize) -> f64 {
        self.bounds[axis][0] + (j as f64 + 0.5) * self.spacing(axis)
    }

    pub fn axis_points(&self, axis: usize) -> Vec<f64> {
        (0..self.sections[axis]).map(|j| self.coord(axis, j)).collect()
    }

    /// Multi-index of a flat node index.
    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for d in (0..self.dim()).rev() {
            out[d] = idx % self.sections[d];
            idx /= self.sections[d];
        }
    }

    /// Coordinates of a flat node index.
    pub fn node(&self, idx: usize, out: &mut [f64]) {
        let mut rem = idx;
        for d in (0..self.dim()).rev() {
            let j = rem % self.sections[d];
            rem /= self.sections[d];
            out[d] = self.coord(d, j);
        }
    }

    /// Evaluates `f` at every node in storage order.
    pub fn map_nodes<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        (0..self.len())
            .map(|i| {
                self.node(i, &mut x);
                f(&x)
            })
            .collect()
    }

    /// Stride of `axis` in the flat layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.sections[axis + 1..].iter().product()
    }
}

/// `build_grid`: midpoint grid on the given per-axis bounds.
pub fn build_grid(bounds: &[[f64; 2]], sections: &[usize]) -> Result<CartesianGrid> {
    CartesianGrid::new(bounds, sections)
}

/// Deterministic pairwise sum of `f(i)` for `i in lo..hi`.
pub fn pairwise_sum<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
    const BLOCK: usize = 128;
    if hi - lo <= BLOCK {
        let mut s = 0.0;
        for i in lo..hi {
            s += f(i);
        }
        s
    } else {
        let mid = lo + (hi - lo) / 2;
        pairwise_sum(lo, mid, f) + pairwise_sum(mid, hi, f)
    }
}

/// `<f, g>_mu ~= sum_i w f(x_i) g(x_i) p_mu(x_i)` on a midpoint grid.
pub fn inner_product(f: &[f64], g: &[f64], weight_density: &[f64], grid: &CartesianGrid) -> Result<f64> {
    let n = grid.len();
    for len in [f.len(), g.len(), weight_density.len()] {
        if len != n {
            return Err(Error::ShapeMismatch { expected: n, got: len });
        }
    }
    Ok(grid.weight() * pairwise_sum(0, n, &|i| f[i] * g[i] * weight_density[i]))
}

/// Unchecked weighted inner product used on hot paths.
#[inline]
pub(crate) fn dot_weighted(f: &[f64], g: &[f64], p: &[f64], w: f64) -> f64 {
    w * pairwise_sum(0, f.len(), &|i| f[i] * g[i] * p[i])
}

/// Gauss-Hermite rule for the standard normal weight (weights sum to 1).
pub fn gauss_hermite_nodes(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=64).contains(&n) {
        return Err(invalid("n", n as f64, "Gauss-Hermite node count must be 1..=64"));
    }
    // Newton on the physicists' orthonormal recurrence, then rescale.
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64 + 1.0;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let scale = std::f64::consts::SQRT_2;
    let norm = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(&w).map(|(x, w)| (x * scale, w / norm)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre_nodes(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let xm = 0.5 * (b + a);
    let xl = 0.5 * (b - a);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        x[i] = xm - xl * z;
        x[n - 1 - i] = xm + xl * z;
        w[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre: `panels` equal panels of `order` nodes each.
pub fn composite_gauss_legendre(panels: usize, order: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre_nodes(order, -1.0, 1.0);
    let h = (b - a) / panels as f64;
    let mut x = Vec::with_capacity(panels * order);
    let mut w = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (xi, wi) in xs.iter().zip(&ws) {
            x.push(mid + 0.5 * h * xi);
            w.push(0.5 * h * wi);
        }
    }
    (x, w)
}

/// Bivariate standard normal density with correlation `rho` at every node.
pub fn gaussian_weight_2d(grid: &CartesianGrid, rho: f64) -> Result<Vec<f64>> {
    if grid.dim() != 2 {
        return Err(Error::InvalidInput("gaussian_weight_2d needs a 2-D grid".into()));
    }
    if !(rho.abs() < 1.0) {
        return Err(invalid("rho", rho, "must satisfy |rho| < 1"));
    }
    Ok(grid.map_nodes(|x| normal::bivariate_pdf(x[0], x[1], rho)))
}

/// Standard normal density with equicorrelation `rho` (all off-diagonal
/// entries equal) at every node of a grid of any dimension.
pub fn gaussian_weight(grid: &CartesianGrid, rho: f64) -> Result<Vec<f64>> {
    let n = grid.dim() as f64;
    if grid.dim() == 1 {
        return Ok(grid.map_nodes(|x| normal::pdf(x[0])));
    }
    if !(rho < 1.0 && rho > -1.0 / (n - 1.0)) {
        return Err(invalid("rho", rho, "equicorrelation matrix is not positive definite"));
    }
    // Sigma^-1 = (I - c J) / (1 - rho), c = rho / (1 + (n-1) rho)
    let c = rho / (1.0 + (n - 1.0) * rho);
    let det = (1.0 - rho).powf(n - 1.0) * (1.0 + (n - 1.0) * rho);
    let norm = ((2.0 * std::f64::consts::PI).powf(n) * det).sqrt();
    Ok(grid.map_nodes(|x| {
        let ss: f64 = x.iter().map(|v| v * v).sum();
        let s: f64 = x.iter().sum();
        let q = (ss - c * s * s) / (1.0 - rho);
        (-0.5 * q).exp() / norm
    }))
}

/// How the values of a [`GridDensity`] are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    /// Ratio `phi = density / weight density`.
    Ratio,
    /// Absolute density.
    Absolute,
}

/// A function sampled on a grid together with the Gaussian weight density.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: CartesianGrid,
    pub values: Vec<f64>,
    pub weight_density: Vec<f64>,
    pub kind: ValueKind,
    /// Correlation of the Gaussian weight.
    pub rho: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    bounds: Vec<[f64; 2]>,
    sections: Vec<usize>,
    rho: f64,
    kind: ValueKind,
}

impl GridDensity {
    /// Wraps values with the equicorrelated Gaussian weight of correlation `rho`.
    pub fn new(grid: CartesianGrid, values: Vec<f64>, rho: f64, kind: ValueKind) -> Result<Self> {
        let weight_density = gaussian_weight(&grid, rho)?;
        Self::with_weight(grid, values, weight_density, rho, kind)
    }

    pub fn with_weight(
        grid: CartesianGrid,
        values: Vec<f64>,
        weight_density: Vec<f64>,
        rho: f64,
        kind: ValueKind,
    ) -> Result<Self> {
        let n = grid.len();
        if values.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: values.len() });
        }
        if weight_density.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: weight_density.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at node {i}")));
        }
        if let Some(i) = weight_density.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput(format!("weight density not positive at node {i}")));
        }
        Ok(Self { grid, values, weight_density, kind, rho })
    }

    /// Absolute density values.
    pub fn absolute(&self) -> Vec<f64> {
        match self.kind {
            ValueKind::Absolute => self.values.clone(),
            ValueKind::Ratio => self.values.iter().zip(&self.weight_density).map(|(v, p)| v * p).collect(),
        }
    }

    /// Ratio values `phi`.
    pub fn ratio(&self) -> Vec<f64> {
        match self.kind {
            ValueKind::Ratio => self.values.clone(),
            ValueKind::Absolute => self.values.iter().zip(&self.weight_density).map(|(v, p)| v / p).collect(),
        }
    }

    pub fn to_kind(&self, kind: ValueKind) -> Self {
        let values = match kind {
            ValueKind::Ratio => self.ratio(),
            ValueKind::Absolute => self.absolute(),
        };
        Self { values, kind, ..self.clone() }
    }

    /// Grid integral of the absolute density.
    pub fn total_mass(&self) -> f64 {
        let abs = self.absolute();
        self.grid.weight() * pairwise_sum(0, abs.len(), &|i| abs[i])
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Grid moment `E[prod_d x_d^{powers[d]}]` of the absolute density.
    pub fn moment(&self, powers: &[u32]) -> f64 {
        let abs = self.absolute();
        let g = &self.grid;
        let axes: Vec<Vec<f64>> = (0..g.dim()).map(|d| g.axis_points(d)).collect();
        let f = |i: usize| {
            let mut idx = [0usize; MAX_DIM];
            g.multi_index(i, &mut idx[..g.dim()]);
            let mut m = abs[i];
            for (d, &p) in powers.iter().enumerate() {
                m *= axes[d][idx[d]].powi(p as i32);
            }
            m
        };
        g.weight() * pairwise_sum(0, abs.len(), &f)
    }

    /// Writes `path` as CSV `x1,..,xN,value` and `path` with a `.json`
    /// extension as the grid sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.grid.dim()).map(|d| format!("x{d}")).collect();
        header.push("value".into());
        wtr.write_record(&header)?;
        let mut x = vec![0.0; self.grid.dim()];
        for (i, v) in self.values.iter().enumerate() {
            self.grid.node(i, &mut x);
            let mut rec: Vec<String> = x.iter().map(|c| format!("{c:.17e}")).collect();
            rec.push(format!("{v:.17e}"));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        let side = Sidecar {
            bounds: self.grid.bounds.clone(),
            sections: self.grid.sections.clone(),
            rho: self.rho,
            kind: self.kind,
        };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    /// Reads a density written by [`GridDensity::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let grid = CartesianGrid::new(&side.bounds, &side.sections)?;
        let dim = grid.dim();
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() != dim + 1 {
            return Err(Error::Parse {
                row: 1,
                message: format!("expected {} columns, header has {}", dim + 1, headers.len()),
            });
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut x = vec![0.0; dim];
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
            if i >= grid.len() {
                return Err(Error::Parse { row, message: "more rows than grid nodes".into() });
            }
            if rec.len() != dim + 1 {
                return Err(Error::Parse { row, message: format!("expected {} fields", dim + 1) });
            }
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
            let parsed = parsed.map_err(|e| Error::Parse { row, message: e.to_string() })?;
            grid.node(i, &mut x);
            for d in 0..dim {
                if (parsed[d] - x[d]).abs() > 1e-9 * (1.0 + x[d].abs()) {
                    return Err(Error::Parse {
                        row,
                        message: format!("coordinate x{} = {} does not match grid node {}", d + 1, parsed[d], x[d]),
                    });
                }
            }
            if !parsed[dim].is_finite() {
                return Err(Error::Parse { row, message: "non-finite value".into() });
            }
            values.push(parsed[dim]);
        }
        if values.len() != grid.len() {
            return Err(Error::Parse {
                row: values.len() + 2,
                message: format!("expected {} data rows, found {}", grid.len(), values.len()),
            });
        }
        Self::new(grid, values, side.rho, side.kind)
    }
}

pub(crate) fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let g = build_grid(&[[-6.0, 6.0]], &[200]).unwrap();
        assert!((g.spacing(0) - 0.06).abs() < 1e-15);
        assert!((g.coord(0, 0) + 5.97).abs() < 1e-12);
        let g2 = CartesianGrid::uniform(2, -6.0, 6.0, 200).unwrap();
        assert_eq!(g2.len(), 40_000);
        assert!((g2.weight() - 0.0036).abs() < 1e-15);
        let g3 = build_grid(&[[0.0, 1.0]], &[2]).unwrap();
        assert_eq!(g3.axis_points(0), vec![0.25, 0.75]);
        assert_eq!(g3.weight(), 0.5);
    }

    #[test]
    fn degenerate_grids_rejected() {
        assert!(build_grid(&[[1.0, 1.0]], &[10]).is_err());
        assert!(build_grid(&[[2.0, 1.0]], &[10]).is_err());
        assert!(build_grid(&[[0.0, 1.0]], &[1]).is_err());
        assert!(build_grid(&[[0.0, 1.0]], &[4, 4]).is_err());
    }

    #[test]
    fn row_major_layout() {
        let g = build_grid(&[[0.0, 3.0], [0.0, 2.0]], &[3, 2]).unwrap();
        let mut x = [0.0; 2];
        g.node(1, &mut x);
        assert_eq!(x, [0.5, 1.5]);
        g.node(2, &mut x);
        assert_eq!(x, [1.5, 0.5]);
        assert_eq!(g.stride(0), 2);
        assert_eq!(g.stride(1), 1);
    }

    #[test]
    fn standard_normal_inner_products() {
        let g = build_grid(&[[-6.0, 6.0]], &[200]).unwrap();
        let p = gaussian_weight(&g, 0.0).unwrap();
        let one = vec![1.0; g.len()];
        let x = g.axis_points(0);
        let mass = normal::cdf(6.0) - normal::cdf(-6.0);
        assert!((inner_product(&one, &one, &p, &g).unwrap() - mass).abs() < 5e-4);
        // E[X^2; |X| < 6] = mass - 2 * 6 * phi(6)
        let second = mass - 12.0 * normal::pdf(6.0);
        assert!((inner_product(&x, &x, &p, &g).unwrap() - second).abs() < 5e-3);
        assert!(inner_product(&x, &one, &p, &g).unwrap().abs() < 1e-12);
        assert!(matches!(
            inner_product(&x[..10], &one, &p, &g),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn midpoint_error_shrinks_with_refinement() {
        // E[X^4] = 3 for the standard normal
        let err = |m: usize| {
            let g = build_grid(&[[-8.0, 8.0]], &[m]).unwrap();
            let p = gaussian_weight(&g, 0.0).unwrap();
            let x2: Vec<f64> = g.axis_points(0).iter().map(|x| x * x).collect();
            (inner_product(&x2, &x2, &p, &g).unwrap() - 3.0).abs()
        };
        let (e1, e2) = (err(20), err(40));
        assert!(e2 <= 0.5 * e1, "{e1} {e2}");
    }

    #[test]
    fn gauss_hermite_small_rules() {
        let (x, w) = gauss_hermite_nodes(1).unwrap();
        assert!(x[0].abs() < 1e-15 && (w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_hermite_nodes(2).unwrap();
        assert!((x[0] + 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert!((w[0] - 0.5).abs() < 1e-14 && (w[1] - 0.5).abs() < 1e-14);
        let (x, w) = gauss_hermite_nodes(20).unwrap();
        let m8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((m8 - 105.0).abs() < 1e-9);
        assert!(gauss_hermite_nodes(0).is_err());
        assert!(gauss_hermite_nodes(65).is_err());
    }

    #[test]
    fn gauss_hermite_large_rule_is_exact_on_moments() {
        let (x, w) = gauss_hermite_nodes(64).unwrap();
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let m6: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(6)).sum();
        assert!((m6 - 15.0).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_nodes(5, 0.0, 2.0);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((s - 2f64.powi(10) / 10.0).abs() < 1e-10);
        let (x, w) = composite_gauss_legendre(10, 4, -1.0, 3.0);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
        assert!((s - (3f64.exp() - (-1f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn bivariate_weight_values() {
        let g = CartesianGrid::uniform(2, -6.0, 6.0, 200).unwrap();
        let p0 = gaussian_weight_2d(&g, 0.0).unwrap();
        assert!((normal::bivariate_pdf(0.0, 0.0, 0.0) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        let p = gaussian_weight_2d(&g, 0.5).unwrap();
        let expected = 1.0 / (2.0 * std::f64::consts::PI * 0.75f64.sqrt());
        assert!((normal::bivariate_pdf(0.0, 0.0, 0.5) - expected).abs() < 1e-15);
        for w in [&p0, &p] {
            let mass = g.weight() * w.iter().sum::<f64>();
            assert!((mass - 1.0).abs() < 1e-3);
        }
        let pe = gaussian_weight(&g, 0.5).unwrap();
        for (a, b) in p.iter().zip(&pe) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let g = CartesianGrid::uniform(2, -3.0, 3.0, 10).unwrap();
        let values = g.map_nodes(|x| 1.0 + 0.1 * x[0] * x[1]);
        let d = GridDensity::new(g, values, 0.3, ValueKind::Ratio).unwrap();
        d.save(&path).unwrap();
        let back = GridDensity::load(&path).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn load_names_bad_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let g = CartesianGrid::uniform(1, 0.0, 1.0, 4).unwrap();
        let d = GridDensity::new(g, vec![1.0; 4], 0.0, ValueKind::Absolute).unwrap();
        d.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = "0.625,abc";
        fs::write(&path, lines.join("\n")).unwrap();
        match GridDensity::load(&path) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
