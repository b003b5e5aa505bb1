//! Probabilists' Hermite polynomials, their orthonormal versions, and the
//! two-dimensional tensor basis in rotated coordinates.
//!
//! Evaluation always runs the three-term recurrence; coefficient rows are
//! only materialised by [`HermiteTable`] for inspection and exact checks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Highest polynomial degree accepted by model types.
pub const MAX_DEGREE: usize = 16;

/// Smallest distance of a correlation from +-1.
pub const RHO_GUARD: f64 = 1e-6;

/// `He_n(x)` by `He_{n+1} = x He_n - n He_{n-1}`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `He_n(x) / sqrt(n!)`.
///
/// Runs the normalised recurrence directly so large degrees never form `n!`.
pub fn hermite_orthonormal(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[k] = He_k(x)/sqrt(k!)` for `k < out.len()`.
pub fn hermite_orthonormal_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 1..out.len().saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (x * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
    }
}

/// `e_{n,i}(v1, v2) = He~_i(v1) He~_{n-i}(v2)`.
pub fn tensor_basis_2d(n: usize, i: usize, v1: f64, v2: f64) -> Result<f64> {
    if i > n {
        return Err(Error::InvalidInput(format!(
            "tensor basis index {i} exceeds total degree {n}"
        )));
    }
    Ok(hermite_orthonormal(i, v1) * hermite_orthonormal(n - i, v2))
}

/// Coefficients `c_k` with `He~_i(x + shift) = sum_k c_k He~_k(x)`.
pub fn hermite_shift_expand(i: usize, shift: f64) -> Vec<f64> {
    (0..=i)
        .map(|k| {
            let ratio = (ln_factorial(i) - ln_factorial(k)).exp().sqrt();
            ratio * shift.powi((i - k) as i32) / factorial(i - k)
        })
        .collect()
}

/// `E[He~_i(V)]` for `V ~ N(c, 1)`, which equals `c^i / sqrt(i!)`.
pub fn shifted_gaussian_moment(i: usize, c: f64) -> f64 {
    c.powi(i as i32) / factorial(i).sqrt()
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Exact integer coefficient rows of `He_0..He_max`.
///
/// `rows[n][j]` is the coefficient of `x^j` in `He_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HermiteTable {
    rows: Vec<Vec<i64>>,
}

impl HermiteTable {
    pub fn new(max_degree: usize) -> Result<Self> {
        if max_degree > MAX_DEGREE {
            return Err(invalid("max_degree", max_degree as f64, "degree cap is 16"));
        }
        let mut rows: Vec<Vec<i64>> = vec![vec![1]];
        if max_degree >= 1 {
            rows.push(vec![0, 1]);
        }
        for n in 1..max_degree {
            let mut next = vec![0i64; n + 2];
            for (j, &c) in rows[n].iter().enumerate() {
                next[j + 1] += c;
            }
            for (j, &c) in rows[n - 1].iter().enumerate() {
                next[j] -= n as i64 * c;
            }
            rows.push(next);
        }
        Ok(Self { rows })
    }

    pub fn max_degree(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn row(&self, n: usize) -> &[i64] {
        &self.rows[n]
    }

    /// Horner evaluation of the expanded row.
    pub fn eval(&self, n: usize, x: f64) -> f64 {
        self.rows[n].iter().rev().fold(0.0, |acc, &c| acc * x + c as f64)
    }
}

/// Factorisation `Sigma = Gamma Gamma^T` of a 2x2 correlation matrix.
///
/// The rotation form is
/// `Gamma = [[a1, -a2], [a1, a2]]`, `Gamma^-1 = [[b1, b1], [-b2, b2]]`
/// with `a1 = sqrt((1+rho)/2)`, `a2 = sqrt((1-rho)/2)`, `b_k = 1/(2 a_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationFactors {
    pub rho: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Builds [`RotationFactors`] for `|rho| <= 1 - 1e-6`.
pub fn rotation_factors(rho: f64) -> Result<RotationFactors> {
    check_rho(rho)?;
    let alpha1 = ((1.0 + rho) / 2.0).sqrt();
    let alpha2 = ((1.0 - rho) / 2.0).sqrt();
    Ok(RotationFactors {
        rho,
        alpha1,
        alpha2,
        beta1: 0.5 / alpha1,
        beta2: 0.5 / alpha2,
    })
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if !rho.is_finite() || rho.abs() > 1.0 - RHO_GUARD {
        return Err(invalid("rho", rho, "must satisfy |rho| <= 1 - 1e-6"));
    }
    Ok(())
}

impl RotationFactors {
    pub fn gamma(&self) -> [[f64; 2]; 2] {
        [[self.alpha1, -self.alpha2], [self.alpha1, self.alpha2]]
    }

    pub fn gamma_inv(&self) -> [[f64; 2]; 2] {
        [[self.beta1, self.beta1], [-self.beta2, self.beta2]]
    }
}

/// A 2x2 factor `Gamma` of a correlation matrix together with its inverse.
///
/// Pricing always uses [`Mixing::rotation`]; [`Mixing::cholesky`] exists so
/// that an uncorrelated weight can use `Gamma = I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mixing {
    pub rho: f64,
    pub gamma: [[f64; 2]; 2],
    pub gamma_inv: [[f64; 2]; 2],
    pub kind: MixingKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MixingKind {
    #[default]
    Rotation,
    Cholesky,
}

impl Mixing {
    pub fn new(rho: f64, kind: MixingKind) -> Result<Self> {
        match kind {
            MixingKind::Rotation => Self::rotation(rho),
            MixingKind::Cholesky => Self::cholesky(rho),
        }
    }

    pub fn rotation(rho: f64) -> Result<Self> {
        let f = rotation_factors(rho)?;
        Ok(Self {
            rho,
            gamma: f.gamma(),
            gamma_inv: f.gamma_inv(),
            kind: MixingKind::Rotation,
        })
    }

    pub fn cholesky(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        let s = (1.0 - rho * rho).sqrt();
        Ok(Self {
            rho,
            gamma: [[1.0, 0.0], [rho, s]],
            gamma_inv: [[1.0, 0.0], [-rho / s, 1.0 / s]],
            kind: MixingKind::Cholesky,
        })
    }

    /// `v = Gamma^-1 x`.
    #[inline]
    pub fn to_independent(&self, x1: f64, x2: f64) -> (f64, f64) {
        let g = &self.gamma_inv;
        (g[0][0] * x1 + g[0][1] * x2, g[1][0] * x1 + g[1][1] * x2)
    }

    /// `x = Gamma v`.
    #[inline]
    pub fn to_correlated(&self, v1: f64, v2: f64) -> (f64, f64) {
        let g = &self.gamma;
        (g[0][0] * v1 + g[0][1] * v2, g[1][0] * v1 + g[1][1] * v2)
    }
}
