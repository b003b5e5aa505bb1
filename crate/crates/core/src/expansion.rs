//! Truncated bivariate Hermite expansion under a correlated Gaussian weight.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::polybasis::{factorial, hermite_orthonormal_all, Mixing, MixingKind, MAX_DEGREE};
use crate::quadrature::{gauss_hermite_nodes, gaussian_weight_2d, pairwise_sum, CartesianGrid, GridDensity, ValueKind};

/// Fewest grid sections per axis accepted for coefficient estimation.
pub const MIN_ESTIMATION_SECTIONS: usize = 50;

/// Orders 2 coefficients are dropped when the weight correlation is within
/// this distance of the target's correlation.
pub const SECOND_ORDER_MATCH_TOL: f64 = 1e-3;

/// `phi~(x) = 1 + sum_{n,i} m_{n,i} e_{n,i}(Gamma^-1 x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionModel {
    n_max: usize,
    mixing: Mixing,
    // m_{n,i} at n (n + 1) / 2 + i; the n = 0 entry is always 1
    coeffs: Vec<f64>,
}

#[inline]
fn slot(n: usize, i: usize) -> usize {
    n * (n + 1) / 2 + i
}

impl ExpansionModel {
    /// All-zero expansion (the Gaussian weight itself).
    pub fn new(n_max: usize, mixing: Mixing) -> Result<Self> {
        if !(2..=MAX_DEGREE).contains(&n_max) {
            return Err(invalid("n_max", n_max as f64, "truncation order must be in 2..=16"));
        }
        let mut coeffs = vec![0.0; slot(n_max + 1, 0)];
        coeffs[0] = 1.0;
        Ok(Self { n_max, mixing, coeffs })
    }

    /// All-zero expansion with the rotation factorization of `rho`.
    pub fn zero(n_max: usize, rho: f64) -> Result<Self> {
        Self::new(n_max, Mixing::rotation(rho)?)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn rho(&self) -> f64 {
        self.mixing.rho
    }

    pub fn mixing(&self) -> &Mixing {
        &self.mixing
    }

    pub fn coefficient(&self, n: usize, i: usize) -> f64 {
        if n > self.n_max || i > n {
            return 0.0;
        }
        self.coeffs[slot(n, i)]
    }

    pub fn set_coefficient(&mut self, n: usize, i: usize, value: f64) -> Result<()> {
        if n == 0 || n > self.n_max || i > n {
            return Err(Error::InvalidInput(format!(
                "coefficient ({n},{i}) outside 1 <= n <= {}, 0 <= i <= n",
                self.n_max
            )));
        }
        if !value.is_finite() {
            return Err(invalid("coefficient", value, "must be finite"));
        }
        if n == 1 && value != 0.0 {
            return Err(invalid("coefficient", value, "first-order coefficients must vanish"));
        }
        self.coeffs[slot(n, i)] = value;
        Ok(())
    }

    /// Same coefficients with a different weight correlation.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Ok(Self { mixing: Mixing::new(rho, self.mixing.kind)?, ..self.clone() })
    }

    /// `(n, i, m_{n,i})` for every stored coefficient with `n >= 1`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (1..=self.n_max).flat_map(move |n| (0..=n).map(move |i| (n, i, self.coeffs[slot(n, i)])))
    }

    /// True when only the `m_{n,0}` coefficients can be nonzero.
    pub fn is_diagonal(&self) -> bool {
        self.entries().all(|(_, i, v)| i == 0 || v == 0.0)
    }

    /// `phi~` at a point, given buffers of length `n_max + 1`.
    pub fn ratio_at(&self, x1: f64, x2: f64, h1: &mut [f64], h2: &mut [f64]) -> f64 {
        let (v1, v2) = self.mixing.to_independent(x1, x2);
        self.ratio_at_independent(v1, v2, h1, h2)
    }

    /// `phi~` at independent coordinates `v = Gamma^-1 x`.
    pub fn ratio_at_independent(&self, v1: f64, v2: f64, h1: &mut [f64], h2: &mut [f64]) -> f64 {
        hermite_orthonormal_all(v1, &mut h1[..=self.n_max]);
        hermite_orthonormal_all(v2, &mut h2[..=self.n_max]);
        let mut s = 1.0;
        for n in 1..=self.n_max {
            for i in 0..=n {
                let m = self.coeffs[slot(n, i)];
                if m != 0.0 {
                    s += m * h1[i] * h2[n - i];
                }
            }
        }
        s
    }

    /// Exact moment `E[X1^a X2^b]` of the (possibly signed) expanded density.
    pub fn moment(&self, a: u32, b: u32) -> f64 {
        let nodes = ((self.n_max as u32 + a + b) / 2 + 2).min(64) as usize;
        let (z, w) = gauss_hermite_nodes(nodes).expect("node count in range");
        let mut h1 = vec![0.0; self.n_max + 1];
        let mut h2 = vec![0.0; self.n_max + 1];
        let mut s = 0.0;
        for (v1, w1) in z.iter().zip(&w) {
            for (v2, w2) in z.iter().zip(&w) {
                let (x1, x2) = self.mixing.to_correlated(*v1, *v2);
                let r = self.ratio_at_independent(*v1, *v2, &mut h1, &mut h2);
                s += w1 * w2 * r * x1.powi(a as i32) * x2.powi(b as i32);
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        Self::try_from(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    n_max: usize,
    rho: f64,
    #[serde(default)]
    mixing: MixingKind,
    coefficients: Vec<(usize, usize, f64)>,
}

impl From<&ExpansionModel> for ModelFile {
    fn from(m: &ExpansionModel) -> Self {
        Self {
            n_max: m.n_max,
            rho: m.rho(),
            mixing: m.mixing.kind,
            coefficients: m.entries().filter(|e| e.2 != 0.0).collect(),
        }
    }
}

impl TryFrom<ModelFile> for ExpansionModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let mut m = ExpansionModel::new(f.n_max, Mixing::new(f.rho, f.mixing)?)?;
        for (n, i, v) in f.coefficients {
            m.set_coefficient(n, i, v)?;
        }
        Ok(m)
    }
}

/// Estimates `m_{n,i} = int e_{n,i}(Gamma^-1 x) p(x) dx` on the target's grid
/// with the rotation factorization of `rho`.
pub fn estimate_coefficients(target: &GridDensity, rho: f64, n_max: usize) -> Result<ExpansionModel> {
    estimate_coefficients_with(target, Mixing::rotation(rho)?, n_max)
}

/// [`estimate_coefficients`] with an explicit factorization.
pub fn estimate_coefficients_with(target: &GridDensity, mixing: Mixing, n_max: usize) -> Result<ExpansionModel> {
    let grid = &target.grid;
    if grid.dim() != 2 {
        return Err(Error::InvalidInput("coefficient estimation needs a 2-D grid".into()));
    }
    if let Some(&m) = grid.sections().iter().find(|&&m| m < MIN_ESTIMATION_SECTIONS) {
        return Err(invalid("sections", m as f64, "grid too coarse for coefficient estimation (need >= 50)"));
    }
    let mut model = ExpansionModel::new(n_max, mixing)?;
    let density = target.absolute();
    let nodes = grid.len();
    // basis values per node, computed once
    let k = n_max + 1;
    let mut h1 = vec![0.0; nodes * k];
    let mut h2 = vec![0.0; nodes * k];
    let mut x = [0.0; 2];
    for idx in 0..nodes {
        grid.node(idx, &mut x);
        let (v1, v2) = mixing.to_independent(x[0], x[1]);
        hermite_orthonormal_all(v1, &mut h1[idx * k..(idx + 1) * k]);
        hermite_orthonormal_all(v2, &mut h2[idx * k..(idx + 1) * k]);
    }
    let w = grid.weight();
    let correlation = target.moment(&[1, 1]) / target.total_mass();
    let drop_second = (mixing.rho - correlation).abs() <= SECOND_ORDER_MATCH_TOL;
    for n in 3.min(n_max + 1)..=n_max {
        for i in 0..=n {
            let m = w * pairwise_sum(0, nodes, &|j| h1[j * k + i] * h2[j * k + n - i] * density[j]);
            model.coeffs[slot(n, i)] = m;
        }
    }
    if !drop_second {
        for i in 0..=2 {
            let m = w * pairwise_sum(0, nodes, &|j| h1[j * k + i] * h2[j * k + 2 - i] * density[j]);
            model.coeffs[slot(2, i)] = m;
        }
    }
    Ok(model)
}

/// Evaluates `phi~` on a grid; values are the ratio to the Gaussian weight.
pub fn evaluate_expansion(model: &ExpansionModel, grid: &CartesianGrid) -> Result<GridDensity> {
    if grid.dim() != 2 {
        return Err(Error::InvalidInput("expansion evaluation needs a 2-D grid".into()));
    }
    let mut h1 = vec![0.0; model.n_max + 1];
    let mut h2 = vec![0.0; model.n_max + 1];
    let values = grid.map_nodes(|x| model.ratio_at(x[0], x[1], &mut h1, &mut h2));
    let weight = gaussian_weight_2d(grid, model.rho())?;
    GridDensity::with_weight(grid.clone(), values, weight, model.rho(), ValueKind::Ratio)
}

/// `m^_i = i! m_{i,0}` for `i = 3..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledCoefficients {
    pub values: Vec<f64>,
}

impl ScaledCoefficients {
    /// `m^_i`, zero outside the stored range.
    pub fn get(&self, i: usize) -> f64 {
        if i < 3 { 0.0 } else { self.values.get(i - 3).copied().unwrap_or(0.0) }
    }
}

pub fn scale_coefficients(model: &ExpansionModel) -> ScaledCoefficients {
    ScaledCoefficients {
        values: (3..=model.n_max).map(|i| factorial(i) * model.coefficient(i, 0)).collect(),
    }
}

/// Rotation-factorized model whose only nonzero coefficients are `m_{i,0} = m^_i / i!`.
pub fn unscale(scaled: &ScaledCoefficients, n_max: usize, rho: f64) -> Result<ExpansionModel> {
    if scaled.values.len() + 2 > n_max {
        return Err(Error::ShapeMismatch { expected: n_max.saturating_sub(2), got: scaled.values.len() });
    }
    let mut m = ExpansionModel::zero(n_max, rho)?;
    for (k, v) in scaled.values.iter().enumerate() {
        m.set_coefficient(k + 3, 0, v / factorial(k + 3))?;
    }
    Ok(m)
}
