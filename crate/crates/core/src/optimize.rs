//! Scalar root finding, scalar minimization, and BFGS.

use crate::error::{invalid, Error, Result};

/// Brent's root finder on a sign-changing bracket.
pub fn brent_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::InvalidInput(format!("invalid bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::NonConvergence("objective not finite at bracket ends".into()));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NonConvergence(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    let (mut c, mut fc) = (b, fb);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::NonConvergence(format!("objective not finite at {b}")));
        }
    }
    Err(Error::NonConvergence(format!("root finder exhausted {max_iter} iterations")))
}

/// Result of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Brent's parabolic/golden-section minimizer on `[lo, hi]`, returning `(x, f(x))`.
pub fn brent_minimize<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!("invalid bracket [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", tol, "must be positive"));
    }
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    const ZEPS: f64 = 1e-12;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + ZEPS;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            w = x;
            x = u;
            fv = fw;
            fw = fx;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                w = u;
                fv = fw;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    // the interior search never evaluates the end points
    let (flo, fhi) = (f(lo), f(hi));
    if flo < fx {
        return Ok((lo, flo));
    }
    if fhi < fx {
        return Ok((hi, fhi));
    }
    Ok((x, fx))
}

/// Central-difference gradient with step `rel_step * max(|x_i|, 1)`.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], rel_step: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Options for [`bfgs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    /// Stop when the largest gradient component falls below this.
    pub gtol: f64,
    /// Stop when an iteration lowers the objective by less than this.
    pub ftol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { gtol: 1e-8, ftol: 0.0, max_iter: 200, fd_step: 1e-5 }
    }
}

/// BFGS with central-difference gradients, `tol` on the gradient.
pub fn quasi_newton_minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], tol: f64, max_iter: usize) -> Result<Minimum> {
    bfgs(f, x0, BfgsOptions { gtol: tol, max_iter, ..Default::default() })
}

/// BFGS on the inverse Hessian with a strong-Wolfe line search.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: BfgsOptions) -> Result<Minimum> {
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty parameter vector".into()));
    }
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::NonConvergence("objective not finite at the start point".into()));
    }
    let mut g = numeric_gradient(&mut f, &x, opts.fd_step);
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if max_abs(&g) <= opts.gtol {
            return Ok(Minimum { x, f: fx, iterations, converged: true });
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i][j] * g[j]).sum::<f64>()).collect();
        if dot(&g, &d) >= 0.0 {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
        }
        let Some(step) = wolfe_search(&mut f, &x, fx, &g, &d, opts.fd_step) else {
            if fresh {
                return Ok(Minimum { x, f: fx, iterations, converged: false });
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        let x_new: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + step.alpha * d).collect();
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let decrease = fx - step.f;
        x = x_new;
        fx = step.f;
        g = step.grad;
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if fresh {
                // scale the initial inverse Hessian to the observed curvature
                let gamma = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut().enumerate().for_each(|(i, r)| r[i] = gamma);
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        }
        if opts.ftol > 0.0 && decrease <= opts.ftol {
            return Ok(Minimum { x, f: fx, iterations, converged: true });
        }
    }
    let converged = max_abs(&g) <= opts.gtol;
    Ok(Minimum { x, f: fx, iterations, converged })
}

struct Step {
    alpha: f64,
    f: f64,
    grad: Vec<f64>,
}

fn wolfe_search<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    fd_step: f64,
) -> Option<Step> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let dphi0 = dot(g0, d);
    let point = |a: f64| -> Vec<f64> { x.iter().zip(d).map(|(x, d)| x + a * d).collect() };
    let armijo = |a: f64, fa: f64| fa.is_finite() && fa <= f0 + C1 * a * dphi0;

    // start from the minimizer of the quadratic through f0, f'(0), f(1)
    let mut a = 1.0;
    let f1 = f(&point(1.0));
    let mut fa = f1;
    if f1.is_finite() {
        let curv = f1 - f0 - dphi0;
        if curv > 0.0 {
            let aq = -dphi0 / (2.0 * curv);
            if (1e-2..=1e2).contains(&aq) && (aq - 1.0).abs() > 1e-10 {
                let fq = f(&point(aq));
                if fq.is_finite() && fq < f1 {
                    a = aq;
                    fa = fq;
                }
            }
        }
    }

    let (mut a_prev, mut f_prev, mut dphi_prev) = (0.0, f0, dphi0);
    for i in 0..30 {
        if i > 0 {
            fa = f(&point(a));
        }
        if !armijo(a, fa) || (i > 0 && fa >= f_prev) {
            return zoom(f, &point, d, f0, dphi0, (a_prev, f_prev, dphi_prev), (a, fa), fd_step);
        }
        let grad = numeric_gradient(f, &point(a), fd_step);
        let dphi = dot(&grad, d);
        if dphi.abs() <= -C2 * dphi0 {
            return Some(Step { alpha: a, f: fa, grad });
        }
        if dphi >= 0.0 {
            return zoom(f, &point, d, f0, dphi0, (a, fa, dphi), (a_prev, f_prev), fd_step);
        }
        a_prev = a;
        f_prev = fa;
        dphi_prev = dphi;
        a *= 2.0;
    }
    None
}

fn zoom<F: FnMut(&[f64]) -> f64, P: Fn(f64) -> Vec<f64>>(
    f: &mut F,
    point: &P,
    d: &[f64],
    f0: f64,
    dphi0: f64,
    lo: (f64, f64, f64),
    hi: (f64, f64),
    fd_step: f64,
) -> Option<Step> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let (mut a_lo, mut f_lo, mut d_lo) = lo;
    let (mut a_hi, mut f_hi) = hi;
    for _ in 0..50 {
        let width = a_hi - a_lo;
        if width.abs() < 1e-16 * a_lo.abs().max(1e-8) {
            break;
        }
        // quadratic through (a_lo, f_lo, d_lo) and (a_hi, f_hi), safeguarded
        let curv = (f_hi - f_lo - d_lo * width) / (width * width);
        let mut a = if f_hi.is_finite() && curv > 0.0 { a_lo - d_lo / (2.0 * curv) } else { a_lo + 0.5 * width };
        let (l, u) = if width > 0.0 { (a_lo + 0.1 * width, a_hi - 0.1 * width) } else { (a_hi - 0.1 * width, a_lo + 0.1 * width) };
        if !(a >= l && a <= u) {
            a = a_lo + 0.5 * width;
        }
        let fa = f(&point(a));
        if !(fa.is_finite() && fa <= f0 + C1 * a * dphi0) || fa >= f_lo {
            a_hi = a;
            f_hi = fa;
            continue;
        }
        let grad = numeric_gradient(f, &point(a), fd_step);
        let dphi = dot(&grad, d);
        if dphi.abs() <= -C2 * dphi0 {
            return Some(Step { alpha: a, f: fa, grad });
        }
        if dphi * (a_hi - a_lo) >= 0.0 {
            a_hi = a_lo;
            f_hi = f_lo;
        }
        a_lo = a;
        f_lo = fa;
        d_lo = dphi;
    }
    // accept the best Armijo point found, if it improved
    if a_lo > 0.0 && f_lo < f0 {
        let grad = numeric_gradient(f, &point(a_lo), fd_step);
        return Some(Step { alpha: a_lo, f: f_lo, grad });
    }
    None
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_of_cubic() {
        let r = brent_root(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14, 100).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
        assert!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_err());
        assert!(brent_root(|x| x, 1.0, -1.0, 1e-12, 100).is_err());
    }

    #[test]
    fn brent_minimize_simple() {
        let (x, _) = brent_minimize(|x| (x - 2.0).powi(2), 0.0, 5.0, 1e-10).unwrap();
        assert!((x - 2.0).abs() < 1e-8);
        // cos(x) rounds to -1 for |x - pi| < 1.05e-8, so that is the attainable resolution
        let (x, fx) = brent_minimize(f64::cos, 2.0, 4.0, 1e-10).unwrap();
        assert_eq!(fx, -1.0);
        assert!((x - std::f64::consts::PI).abs() < 1.1e-8);
        assert!(brent_minimize(|x| x, 1.0, 0.0, 1e-8).is_err());
    }

    #[test]
    fn brent_minimize_boundary_minimum() {
        let (x, _) = brent_minimize(|x| x, 1.0, 3.0, 1e-10).unwrap();
        assert_eq!(x, 1.0);
    }

    #[test]
    fn rosenbrock() {
        let f = |p: &[f64]| 100.0 * (p[1] - p[0] * p[0]).powi(2) + (1.0 - p[0]).powi(2);
        let m = quasi_newton_minimize(f, &[-1.2, 1.0], 1e-9, 500).unwrap();
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn quadratic_terminates_quickly() {
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = [1.0, -2.0, 0.5];
        let f = |p: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += 0.5 * p[i] * a[i][j] * p[j];
                }
                s -= b[i] * p[i];
            }
            s
        };
        // solve A x = b by Cramer's rule
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(a);
        let exact: Vec<f64> = (0..3)
            .map(|k| {
                let mut m = a;
                for i in 0..3 {
                    m[i][k] = b[i];
                }
                det(m) / d
            })
            .collect();
        let m = quasi_newton_minimize(f, &[0.0; 3], 1e-9, 100).unwrap();
        assert!(m.iterations <= 5, "iterations {}", m.iterations);
        for (x, e) in m.x.iter().zip(&exact) {
            assert!((x - e).abs() < 1e-8);
        }
    }
}
