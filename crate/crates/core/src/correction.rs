//! Projection of grid functions onto intersections of convex sets with
//! Dykstra's algorithm, and the one-dimensional product shortcut.
//!
//! Equality and marginal sets are affine: Dykstra's correction for an affine
//! set is always parallel to its normal and cancels inside the projection, so
//! only the non-negativity cone and half-spaces keep correction terms.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expansion::ExpansionModel;
use crate::polybasis::hermite_orthonormal_all;
use crate::quadrature::{dot_weighted, gaussian_weight, gaussian_weight_2d, pairwise_sum, CartesianGrid, GridDensity, ValueKind};

/// A closed convex set in the discrete space of grid functions.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexConstraint {
    /// `<phi, 1> = target`.
    Normalization { target: f64 },
    /// `phi >= 0` at every node.
    NonNegativity,
    /// `<phi, test> = target`; `degree` orders constraints within a sweep.
    MomentMatch { test: Vec<f64>, target: f64, degree: usize },
    /// `<phi, test> <= bound`.
    MomentUpperBound { test: Vec<f64>, bound: f64, degree: usize },
    /// The marginal density along `axis` equals `target` (one value per slice).
    MarginalMatch { axis: usize, target: Vec<f64> },
}

impl ConvexConstraint {
    fn rank(&self) -> (usize, usize) {
        match self {
            ConvexConstraint::Normalization { .. } => (0, 0),
            ConvexConstraint::MomentMatch { degree, .. } | ConvexConstraint::MomentUpperBound { degree, .. } => (1, *degree),
            ConvexConstraint::MarginalMatch { axis, .. } => (2, *axis),
            ConvexConstraint::NonNegativity => (3, 0),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ConvexConstraint::Normalization { .. } => "normalization".into(),
            ConvexConstraint::NonNegativity => "non-negativity".into(),
            ConvexConstraint::MomentMatch { degree, .. } => format!("moment(degree {degree})"),
            ConvexConstraint::MomentUpperBound { degree, .. } => format!("moment bound(degree {degree})"),
            ConvexConstraint::MarginalMatch { axis, .. } => format!("marginal(axis {axis})"),
        }
    }
}

/// Stopping rule for [`dykstra`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DykstraOptions {
    /// Stop when the weighted L2 change over a full sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Violations below this count as feasible.
    pub feasibility_tol: f64,
    /// Sweeps of stalled violation above `feasibility_tol` before giving up.
    pub plateau_sweeps: usize,
}

impl Default for DykstraOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_sweeps: 5000, feasibility_tol: 1e-6, plateau_sweeps: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub constraint: String,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DykstraReport {
    pub iterations: usize,
    pub violations: Vec<ConstraintViolation>,
    pub converged: bool,
    pub last_change: f64,
    /// Largest violation after each sweep.
    pub violation_trace: Vec<f64>,
    /// Violations stalled above tolerance; the intersection may be empty.
    pub infeasible_suspected: bool,
    /// Node-level operations performed, for cost comparisons.
    pub node_updates: u64,
}

impl DykstraReport {
    pub fn max_violation(&self) -> f64 {
        self.violations.iter().fold(0.0, |m, v| m.max(v.violation))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_len(len: usize, grid: &CartesianGrid) -> Result<()> {
    if len != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len(), got: len });
    }
    Ok(())
}

/// Nearest point of `{<phi, test> = target}`.
pub fn project_equality(phi: &[f64], test: &[f64], target: f64, weight: &[f64], grid: &CartesianGrid) -> Result<Vec<f64>> {
    for len in [phi.len(), test.len(), weight.len()] {
        check_len(len, grid)?;
    }
    let w = grid.weight();
    let norm2 = dot_weighted(test, test, weight, w);
    if !(norm2 > 1e-14) {
        return Err(Error::ZeroNorm);
    }
    let coef = (dot_weighted(phi, test, weight, w) - target) / norm2;
    Ok(phi.iter().zip(test).map(|(f, t)| f - coef * t).collect())
}

/// Pointwise `max(phi, 0)`.
pub fn project_nonneg(phi: &[f64]) -> Vec<f64> {
    phi.iter().map(|v| v.max(0.0)).collect()
}

/// Per-slice equality projections making the marginal along `axis` equal
/// `target_slices`.
pub fn project_marginal(
    phi: &[f64],
    axis: usize,
    target_slices: &[f64],
    weight: &[f64],
    grid: &CartesianGrid,
) -> Result<Vec<f64>> {
    for len in [phi.len(), weight.len()] {
        check_len(len, grid)?;
    }
    let mut out = phi.to_vec();
    let m = MarginalPlan::new(axis, target_slices, weight, grid)?;
    m.project(&mut out, weight);
    Ok(out)
}

struct MarginalPlan {
    // slice integral targets c_j = g_j * delta_axis
    targets: Vec<f64>,
    norms: Vec<f64>,
    slice_of: Vec<u32>,
    w: f64,
    delta: f64,
}

impl MarginalPlan {
    fn new(axis: usize, target: &[f64], weight: &[f64], grid: &CartesianGrid) -> Result<Self> {
        if axis >= grid.dim() {
            return Err(invalid("axis", axis as f64, "axis outside grid dimension"));
        }
        let m = grid.sections()[axis];
        if target.len() != m {
            return Err(Error::ShapeMismatch { expected: m, got: target.len() });
        }
        if target.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidInput("marginal target must be non-negative".into()));
        }
        let delta = grid.spacing(axis);
        let mass: f64 = target.iter().sum::<f64>() * delta;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("marginal target integrates to {mass}, not 1")));
        }
        let stride = grid.stride(axis);
        let slice_of: Vec<u32> = (0..grid.len()).map(|i| ((i / stride) % m) as u32).collect();
        let w = grid.weight();
        let mut norms = vec![0.0; m];
        for (i, s) in slice_of.iter().enumerate() {
            norms[*s as usize] += weight[i];
        }
        for (j, n) in norms.iter_mut().enumerate() {
            *n *= w;
            if !(*n > 0.0) {
                return Err(Error::InvalidInput(format!("slice {j} has zero weight mass")));
            }
        }
        Ok(Self { targets: target.iter().map(|g| g * delta).collect(), norms, slice_of, w, delta })
    }

    fn slice_integrals(&self, phi: &[f64], weight: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.targets.len()];
        for (i, j) in self.slice_of.iter().enumerate() {
            s[*j as usize] += phi[i] * weight[i];
        }
        s.iter_mut().for_each(|v| *v *= self.w);
        s
    }

    fn project(&self, phi: &mut [f64], weight: &[f64]) {
        let s = self.slice_integrals(phi, weight);
        let coef: Vec<f64> = s.iter().zip(&self.targets).zip(&self.norms).map(|((s, c), n)| (s - c) / n).collect();
        for (i, j) in self.slice_of.iter().enumerate() {
            phi[i] -= coef[*j as usize];
        }
    }

    fn violation(&self, phi: &[f64], weight: &[f64]) -> f64 {
        let s = self.slice_integrals(phi, weight);
        s.iter().zip(&self.targets).fold(0.0, |m, (s, c)| m.max((s - c).abs() / self.delta))
    }
}

enum Step {
    Equality { test: Vec<f64>, tp: Vec<f64>, target: f64, norm2: f64 },
    Upper { test: Vec<f64>, tp: Vec<f64>, bound: f64, norm2: f64 },
    Marginal(MarginalPlan),
    NonNeg,
}

struct Prepared {
    label: String,
    step: Step,
}

fn prepare(constraints: &[ConvexConstraint], weight: &[f64], grid: &CartesianGrid) -> Result<Vec<Prepared>> {
    let n = grid.len();
    let w = grid.weight();
    let mut sorted: Vec<&ConvexConstraint> = constraints.iter().collect();
    sorted.sort_by_key(|c| c.rank());
    sorted
        .into_iter()
        .map(|c| {
            let step = match c {
                ConvexConstraint::Normalization { target } => {
                    let test = vec![1.0; n];
                    let norm2 = w * pairwise_sum(0, n, &|i| weight[i]);
                    Step::Equality { tp: weight.to_vec(), test, target: *target, norm2 }
                }
                ConvexConstraint::MomentMatch { test, target, .. } | ConvexConstraint::MomentUpperBound { test, bound: target, .. } => {
                    check_len(test.len(), grid)?;
                    let norm2 = dot_weighted(test, test, weight, w);
                    if !(norm2 > 1e-14) {
                        return Err(Error::ZeroNorm);
                    }
                    let tp: Vec<f64> = test.iter().zip(weight).map(|(t, p)| t * p).collect();
                    if matches!(c, ConvexConstraint::MomentMatch { .. }) {
                        Step::Equality { test: test.clone(), tp, target: *target, norm2 }
                    } else {
                        Step::Upper { test: test.clone(), tp, bound: *target, norm2 }
                    }
                }
                ConvexConstraint::MarginalMatch { axis, target } => Step::Marginal(MarginalPlan::new(*axis, target, weight, grid)?),
                ConvexConstraint::NonNegativity => Step::NonNeg,
            };
            Ok(Prepared { label: c.label(), step })
        })
        .collect()
}

#[inline]
fn dot_plain(a: &[f64], b: &[f64], w: f64) -> f64 {
    w * pairwise_sum(0, a.len(), &|i| a[i] * b[i])
}

fn violation(p: &Prepared, phi: &[f64], weight: &[f64], w: f64) -> f64 {
    match &p.step {
        Step::Equality { tp, target, .. } => (dot_plain(phi, tp, w) - target).abs(),
        Step::Upper { tp, bound, .. } => (dot_plain(phi, tp, w) - bound).max(0.0),
        Step::Marginal(m) => m.violation(phi, weight),
        Step::NonNeg => phi.iter().fold(0.0f64, |m, v| m.max(-v)),
    }
}

/// Cyclic Dykstra projections onto the intersection of `constraints`.
///
/// Constraints are applied in the order normalization, moments (ascending
/// degree), marginals, non-negativity regardless of their order in the slice.
pub fn dykstra(
    phi0: &[f64],
    constraints: &[ConvexConstraint],
    weight: &[f64],
    grid: &CartesianGrid,
    opts: &DykstraOptions,
) -> Result<(Vec<f64>, DykstraReport)> {
    check_len(phi0.len(), grid)?;
    check_len(weight.len(), grid)?;
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", opts.tol, "must be positive"));
    }
    let steps = prepare(constraints, weight, grid)?;
    let n = grid.len();
    let w = grid.weight();
    let mut phi = phi0.to_vec();
    let mut start = vec![0.0; n];
    // corrections: a node vector for the cone, a scalar multiple of the test for half-spaces
    let mut cone_corr: Vec<Vec<f64>> = steps.iter().map(|s| if matches!(s.step, Step::NonNeg) { vec![0.0; n] } else { Vec::new() }).collect();
    let mut half_corr = vec![0.0; steps.len()];
    let mut trace = Vec::new();
    let mut node_updates: u64 = 0;
    let mut last_change = f64::INFINITY;
    let mut sweeps = 0;
    let mut best_violation = f64::INFINITY;
    let mut stalled = 0;
    let mut infeasible_suspected = false;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        start.copy_from_slice(&phi);
        for (k, s) in steps.iter().enumerate() {
            match &s.step {
                Step::Equality { test, tp, target, norm2 } => {
                    let coef = (dot_plain(&phi, tp, w) - target) / norm2;
                    if coef != 0.0 {
                        phi.iter_mut().zip(test).for_each(|(f, t)| *f -= coef * t);
                    }
                    node_updates += 2 * n as u64;
                }
                Step::Upper { test, tp, bound, norm2 } => {
                    let a = half_corr[k];
                    // y = phi + a t ; <y, t> = <phi, t> + a |t|^2
                    let excess = dot_plain(&phi, tp, w) + a * norm2 - bound;
                    let shift = excess.max(0.0) / norm2;
                    let delta = a - shift;
                    if delta != 0.0 {
                        phi.iter_mut().zip(test).for_each(|(f, t)| *f += delta * t);
                    }
                    half_corr[k] = shift;
                    node_updates += 2 * n as u64;
                }
                Step::Marginal(m) => {
                    m.project(&mut phi, weight);
                    node_updates += 2 * n as u64;
                }
                Step::NonNeg => {
                    let e = &mut cone_corr[k];
                    for (f, c) in phi.iter_mut().zip(e.iter_mut()) {
                        let y = *f + *c;
                        let p = y.max(0.0);
                        *c = y - p;
                        *f = p;
                    }
                    node_updates += n as u64;
                }
            }
        }
        last_change = (w * pairwise_sum(0, n, &|i| {
            let d = phi[i] - start[i];
            d * d * weight[i]
        }))
        .sqrt();
        let worst = steps.iter().map(|s| violation(s, &phi, weight, w)).fold(0.0, f64::max);
        trace.push(worst);
        if last_change < opts.tol {
            break;
        }
        if worst > opts.feasibility_tol {
            if worst < 0.99 * best_violation {
                best_violation = worst;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= opts.plateau_sweeps {
                    infeasible_suspected = true;
                    break;
                }
            }
        }
    }
    let violations: Vec<ConstraintViolation> = steps
        .iter()
        .map(|s| ConstraintViolation { constraint: s.label.clone(), violation: violation(s, &phi, weight, w) })
        .collect();
    let feasible = violations.iter().all(|v| v.violation <= opts.feasibility_tol);
    let report = DykstraReport {
        iterations: sweeps,
        converged: last_change < opts.tol && feasible,
        violations,
        last_change,
        violation_trace: trace,
        infeasible_suspected,
        node_updates,
    };
    Ok((phi, report))
}

/// Test functions `e_{n,i}(Gamma^-1 x)` of a model on a grid, with targets.
pub fn moment_constraints(model: &ExpansionModel, grid: &CartesianGrid) -> Vec<ConvexConstraint> {
    let k = model.n_max() + 1;
    let mut h1 = vec![0.0; k];
    let mut h2 = vec![0.0; k];
    let mut tests: Vec<Vec<f64>> = Vec::new();
    let mut keys = Vec::new();
    for n in 1..=model.n_max() {
        for i in 0..=n {
            keys.push((n, i));
            tests.push(Vec::with_capacity(grid.len()));
        }
    }
    let mut x = [0.0; 2];
    for idx in 0..grid.len() {
        grid.node(idx, &mut x);
        let (v1, v2) = model.mixing().to_independent(x[0], x[1]);
        hermite_orthonormal_all(v1, &mut h1);
        hermite_orthonormal_all(v2, &mut h2);
        for (t, (n, i)) in tests.iter_mut().zip(&keys) {
            t.push(h1[*i] * h2[n - i]);
        }
    }
    tests
        .into_iter()
        .zip(keys)
        .map(|(test, (n, i))| ConvexConstraint::MomentMatch { test, target: model.coefficient(n, i), degree: n })
        .collect()
}

/// The full constraint set for a truncated expansion: normalization, every
/// `e_{n,i}` moment for `1 <= n <= n_max` (zeros included) and non-negativity.
pub fn expansion_constraints(model: &ExpansionModel, grid: &CartesianGrid) -> Vec<ConvexConstraint> {
    let mut c = vec![ConvexConstraint::Normalization { target: 1.0 }];
    c.extend(moment_constraints(model, grid));
    c.push(ConvexConstraint::NonNegativity);
    c
}

/// Evaluates a model on `grid` and corrects it onto its full constraint set.
pub fn correct_expansion(model: &ExpansionModel, grid: &CartesianGrid, opts: &DykstraOptions) -> Result<(GridDensity, DykstraReport)> {
    let raw = crate::expansion::evaluate_expansion(model, grid)?;
    let constraints = expansion_constraints(model, grid);
    let (phi, report) = dykstra(&raw.values, &constraints, &raw.weight_density, grid, opts)?;
    let corrected = GridDensity::with_weight(grid.clone(), phi, raw.weight_density, model.rho(), ValueKind::Ratio)?;
    Ok((corrected, report))
}

/// Corrects a grid density (ratio or absolute) onto normalization and
/// non-negativity under its own Gaussian weight.
pub fn correct_density(density: &GridDensity, extra: &[ConvexConstraint], opts: &DykstraOptions) -> Result<(GridDensity, DykstraReport)> {
    let ratio = density.ratio();
    let mut constraints = vec![ConvexConstraint::Normalization { target: 1.0 }, ConvexConstraint::NonNegativity];
    constraints.extend_from_slice(extra);
    let (phi, report) = dykstra(&ratio, &constraints, &density.weight_density, &density.grid, opts)?;
    let out = GridDensity::with_weight(density.grid.clone(), phi, density.weight_density.clone(), density.rho, ValueKind::Ratio)?;
    Ok((out.to_kind(density.kind), report))
}

/// Corrects each univariate factor `1 + sum_j m_j He~_j` independently under
/// the standard normal weight on its own 1-D grid.
///
/// `factors[k][j - 1]` holds `m_j`; the returned arrays are the corrected
/// factor values at the grid nodes.
pub fn correct_1d_product(
    factors: &[Vec<f64>],
    grids: &[CartesianGrid],
    opts: &DykstraOptions,
) -> Result<Vec<(Vec<f64>, DykstraReport)>> {
    if factors.len() != grids.len() {
        return Err(Error::ShapeMismatch { expected: factors.len(), got: grids.len() });
    }
    factors.iter().zip(grids).map(|(m, g)| correct_1d_factor(m, g, opts)).collect()
}

/// Dykstra correction of one univariate factor.
pub fn correct_1d_factor(m: &[f64], grid: &CartesianGrid, opts: &DykstraOptions) -> Result<(Vec<f64>, DykstraReport)> {
    if grid.dim() != 1 {
        return Err(Error::InvalidInput("factor grids must be one-dimensional".into()));
    }
    let weight = gaussian_weight(grid, 0.0)?;
    let deg = m.len();
    let mut h = vec![0.0; deg + 1];
    let mut tests = vec![Vec::with_capacity(grid.len()); deg];
    let mut values = Vec::with_capacity(grid.len());
    for x in grid.axis_points(0) {
        hermite_orthonormal_all(x, &mut h);
        let mut v = 1.0;
        for j in 1..=deg {
            v += m[j - 1] * h[j];
            tests[j - 1].push(h[j]);
        }
        values.push(v);
    }
    let mut constraints = vec![ConvexConstraint::Normalization { target: 1.0 }];
    for (j, t) in tests.into_iter().enumerate() {
        constraints.push(ConvexConstraint::MomentMatch { test: t, target: m[j], degree: j + 1 });
    }
    constraints.push(ConvexConstraint::NonNegativity);
    dykstra(&values, &constraints, &weight, grid, opts)
}

/// Bivariate Gaussian weight for a model's correlation on a grid.
pub fn model_weight(model: &ExpansionModel, grid: &CartesianGrid) -> Result<Vec<f64>> {
    gaussian_weight_2d(grid, model.rho())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> CartesianGrid {
        CartesianGrid::uniform(1, -6.0, 6.0, 200).unwrap()
    }

    #[test]
    fn equality_projection_properties() {
        let g = grid1();
        let p = gaussian_weight(&g, 0.0).unwrap();
        let x = g.axis_points(0);
        let phi: Vec<f64> = x.iter().map(|x| 1.0 + 0.3 * x + 0.1 * (3.0 * x).sin()).collect();
        let test: Vec<f64> = x.iter().map(|x| x * x - 1.0).collect();
        let out = project_equality(&phi, &test, 0.25, &p, &g).unwrap();
        let w = g.weight();
        assert!((dot_weighted(&out, &test, &p, w) - 0.25).abs() < 1e-12);
        // difference is parallel to the test function
        let ratio = (out[10] - phi[10]) / test[10];
        for i in 0..g.len() {
            assert!(((out[i] - phi[i]) - ratio * test[i]).abs() < 1e-12);
        }
        let again = project_equality(&out, &test, 0.25, &p, &g).unwrap();
        assert!(again.iter().zip(&out).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!(matches!(project_equality(&phi, &vec![0.0; g.len()], 1.0, &p, &g), Err(Error::ZeroNorm)));
    }

    #[test]
    fn constant_normalization() {
        let g = grid1();
        let p = gaussian_weight(&g, 0.0).unwrap();
        let ones = vec![1.0; g.len()];
        let mass = dot_weighted(&ones, &ones, &p, g.weight());
        let c = 2.5;
        let out = project_equality(&vec![c; g.len()], &ones, 1.0, &p, &g).unwrap();
        let expected = c - (c * mass - 1.0) / mass;
        assert!(out.iter().all(|v| (v - expected).abs() < 1e-12));
        assert!((expected - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nonneg_projection() {
        assert_eq!(project_nonneg(&[1.0, 0.0, 2.0]), vec![1.0, 0.0, 2.0]);
        assert_eq!(project_nonneg(&[-1.0, -1.0]), vec![0.0, 0.0]);
        assert_eq!(project_nonneg(&[-0.5, 0.3, -2.0, 4.0]), vec![0.0, 0.3, 0.0, 4.0]);
    }

    #[test]
    fn marginal_projection() {
        let g = CartesianGrid::uniform(2, -6.0, 6.0, 80).unwrap();
        let p = gaussian_weight_2d(&g, 0.0).unwrap();
        let ones = vec![1.0; g.len()];
        let xs = g.axis_points(0);
        let std: Vec<f64> = xs.iter().map(|x| crate::normal::pdf(*x)).collect();
        let sum: f64 = std.iter().sum::<f64>() * g.spacing(0);
        let target: Vec<f64> = std.iter().map(|v| v / sum).collect();
        let out = project_marginal(&ones, 0, &target, &p, &g).unwrap();
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-6));

        let phi = g.map_nodes(|x| 1.0 + 0.2 * x[0] * x[1] + 0.1 * x[0]);
        let mix: Vec<f64> = xs
            .iter()
            .map(|x| 0.6 * crate::normal::pdf((x + 0.3) / 0.8) / 0.8 + 0.4 * crate::normal::pdf((x - 0.45) / 1.1) / 1.1)
            .collect();
        let total: f64 = mix.iter().sum::<f64>() * g.spacing(1);
        let skew: Vec<f64> = mix.iter().map(|v| v / total).collect();
        let out = project_marginal(&phi, 1, &skew, &p, &g).unwrap();
        let plan = MarginalPlan::new(1, &skew, &p, &g).unwrap();
        assert!(plan.violation(&out, &p) < 1e-10);
    }

    #[test]
    fn feasible_input_returns_itself() {
        let g = grid1();
        let p = gaussian_weight(&g, 0.0).unwrap();
        let ones = vec![1.0; g.len()];
        let mass = dot_weighted(&ones, &ones, &p, g.weight());
        let phi = vec![1.0 / mass; g.len()];
        let cons = [ConvexConstraint::Normalization { target: 1.0 }, ConvexConstraint::NonNegativity];
        let (out, rep) = dykstra(&phi, &cons, &p, &g, &DykstraOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert!(out.iter().zip(&phi).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn negative_constant_converges_to_one() {
        let g = grid1();
        let p = gaussian_weight(&g, 0.0).unwrap();
        let ones = vec![1.0; g.len()];
        let mass = dot_weighted(&ones, &ones, &p, g.weight());
        let cons = [ConvexConstraint::NonNegativity, ConvexConstraint::Normalization { target: 1.0 }];
        let (out, rep) = dykstra(&vec![-0.5; g.len()], &cons, &p, &g, &DykstraOptions::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        // the nearest density to a constant is the constant 1 (up to grid mass)
        assert!(out.iter().all(|v| (v - 1.0 / mass).abs() < 1e-10));
    }

    #[test]
    fn one_dimensional_factor() {
        let g = grid1();
        let m = vec![0.0, 0.0, 0.8];
        let (vals, rep) = correct_1d_factor(&m, &g, &DykstraOptions::default()).unwrap();
        assert!(rep.converged, "{:?}", rep.violations);
        assert!(vals.iter().all(|v| *v >= -1e-12));
        let p = gaussian_weight(&g, 0.0).unwrap();
        let he3: Vec<f64> = g.axis_points(0).iter().map(|x| crate::polybasis::hermite_orthonormal(3, *x)).collect();
        assert!((dot_weighted(&vals, &he3, &p, g.weight()) - 0.8).abs() < 1e-8);
        let (vals, _) = correct_1d_factor(&[0.0; 4], &g, &DykstraOptions::default()).unwrap();
        // the truncated grid moves the far tails slightly; measure in the weighted norm
        let diff: Vec<f64> = vals.iter().map(|v| v - 1.0).collect();
        let dist = dot_weighted(&diff, &diff, &p, g.weight()).sqrt();
        assert!(dist < 1e-6, "{dist:e}");
    }

    #[test]
    fn upper_bound_constraint() {
        let g = grid1();
        let p = gaussian_weight(&g, 0.0).unwrap();
        let x = g.axis_points(0);
        let phi: Vec<f64> = x.iter().map(|x| 1.0 + 0.5 * x).collect();
        let cons = [ConvexConstraint::MomentUpperBound { test: x.clone(), bound: 0.1, degree: 1 }];
        let (out, rep) = dykstra(&phi, &cons, &p, &g, &DykstraOptions::default()).unwrap();
        assert!(rep.converged);
        assert!((dot_weighted(&out, &x, &p, g.weight()) - 0.1).abs() < 1e-10);
        let cons = [ConvexConstraint::MomentUpperBound { test: x.clone(), bound: 0.9, degree: 1 }];
        let (out, _) = dykstra(&phi, &cons, &p, &g, &DykstraOptions::default()).unwrap();
        assert!(out.iter().zip(&phi).all(|(a, b)| a == b));
    }
}
