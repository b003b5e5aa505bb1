//! Randomised invariants of the copula families, the Hermite basis and the smile tools.

use hermicop::calibration::mean_square;
use hermicop::polybasis::hermite_orthonormal_all;
use hermicop::quadrature::{gauss_hermite_nodes, gaussian_weight_2d, inner_product};
use hermicop::smile::{black_call, black_put, implied_vol, invert_pair};
use hermicop::{CartesianGrid, ClassicalCopula, Family, Mixing, SmilePillars};
use proptest::prelude::*;

fn family_and_theta() -> impl Strategy<Value = ClassicalCopula> {
    prop_oneof![
        (0.01f64..20.0).prop_map(|t| (Family::Clayton, t)),
        prop_oneof![-30.0f64..-0.01, 0.01f64..30.0].prop_map(|t| (Family::Frank, t)),
        (1.0f64..15.0).prop_map(|t| (Family::Gumbel, t)),
        (0.01f64..50.0).prop_map(|t| (Family::Plackett, t)),
        (-0.95f64..0.95).prop_map(|t| (Family::Gauss, t)),
    ]
    .prop_map(|(f, t)| ClassicalCopula::new(f, t).unwrap())
}

fn unit() -> impl Strategy<Value = f64> {
    0.001f64..0.999
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn frechet_bounds_and_exchangeability(c in family_and_theta(), u1 in unit(), u2 in unit()) {
        let v = c.cdf(u1, u2);
        prop_assert!(v >= (u1 + u2 - 1.0).max(0.0) - 1e-12, "{c:?} C({u1},{u2}) = {v}");
        prop_assert!(v <= u1.min(u2) + 1e-12, "{c:?} C({u1},{u2}) = {v}");
        prop_assert!((v - c.cdf(u2, u1)).abs() < 1e-12);
    }

    #[test]
    fn rectangles_have_nonnegative_mass(c in family_and_theta(), a in (unit(), unit()), b in (unit(), unit())) {
        let (a1, b1) = (a.0.min(b.0), a.0.max(b.0));
        let (a2, b2) = (a.1.min(b.1), a.1.max(b.1));
        let mass = c.cdf(b1, b2) - c.cdf(a1, b2) - c.cdf(b1, a2) + c.cdf(a1, a2);
        prop_assert!(mass >= -1e-12, "{c:?} rectangle mass {mass}");
    }

    #[test]
    fn mixing_round_trips(rho in -0.99f64..0.99, x1 in -6.0f64..6.0, x2 in -6.0f64..6.0) {
        for m in [Mixing::rotation(rho).unwrap(), Mixing::cholesky(rho).unwrap()] {
            let (v1, v2) = m.to_independent(x1, x2);
            let (y1, y2) = m.to_correlated(v1, v2);
            prop_assert!((y1 - x1).abs() < 1e-10 && (y2 - x2).abs() < 1e-10);
            // the Mahalanobis form becomes the Euclidean one
            let q = (x1 * x1 - 2.0 * rho * x1 * x2 + x2 * x2) / (1.0 - rho * rho);
            prop_assert!((v1 * v1 + v2 * v2 - q).abs() < 1e-9 * q.max(1.0));
        }
    }

    #[test]
    fn inverting_a_pair_twice_is_the_identity(
        fwd in 0.005f64..200.0, dd in 0.8f64..1.1, df in 0.8f64..1.1,
        atm in 0.03f64..0.3, skew in -0.01f64..0.01, fly in 0.0f64..0.01,
    ) {
        let p = SmilePillars {
            tenor: 1.0, forward: fwd, df_dom: dd, df_for: df,
            atm, c25: atm + fly + skew / 2.0, p25: atm + fly - skew / 2.0,
            c10: atm + 2.5 * fly + skew, p10: atm + 2.5 * fly - skew,
        };
        let back = invert_pair(&invert_pair(&p));
        prop_assert!((back.forward - fwd).abs() < 1e-12 * fwd);
        prop_assert_eq!((back.df_dom, back.df_for), (dd, df));
        for (a, b) in back.vols().iter().zip(p.vols()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
        let inv = invert_pair(&p);
        prop_assert_eq!((inv.atm, inv.c25, inv.p25), (p.atm, p.p25, p.c25));
    }

    #[test]
    fn black_parity_and_vol_round_trip(
        fwd in 0.5f64..2.0, m in -0.5f64..0.5, sigma in 0.02f64..0.8, t in 0.1f64..5.0, df in 0.5f64..1.0,
    ) {
        let k = fwd * m.exp();
        let c = black_call(k, fwd, sigma, t, df);
        let p = black_put(k, fwd, sigma, t, df);
        prop_assert!((c - p - df * (fwd - k)).abs() < 1e-12);
        let call = k >= fwd;
        let price = if call { c } else { p };
        // deep wings carry too little time value to pin the vol
        prop_assume!(price > 1e-9 * df * fwd);
        let back = implied_vol(price, k, fwd, t, df, call).unwrap();
        prop_assert!((back - sigma).abs() < 1e-6, "{back} vs {sigma}");
    }

    #[test]
    fn mean_square_is_nonnegative_and_vanishes_only_at_zero(r in prop::collection::vec(-0.1f64..0.1, 5)) {
        let v = mean_square(&r);
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v == 0.0, r.iter().all(|x| *x == 0.0));
        prop_assert_eq!(mean_square(&[0.0; 5]), 0.0);
    }
}

/// Monomials `x1^a x2^b` with `a + b <= 4`.
fn poly(c: &[f64], x1: f64, x2: f64) -> f64 {
    let mut s = 0.0;
    let mut k = 0;
    for t in 0..=4 {
        for a in 0..=t {
            s += c[k] * x1.powi(a) * x2.powi(t - a);
            k += 1;
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn inner_products_survive_the_change_of_variables(
        rho_idx in 0usize..4,
        f in prop::collection::vec(-1.0f64..1.0, 15),
        g in prop::collection::vec(-1.0f64..1.0, 15),
    ) {
        let rho = [-0.9, 0.0, 0.5, 0.9][rho_idx];
        let grid = CartesianGrid::uniform(2, -10.0, 10.0, 400).unwrap();
        let weight = gaussian_weight_2d(&grid, rho).unwrap();
        let fv = grid.map_nodes(|x| poly(&f, x[0], x[1]));
        let gv = grid.map_nodes(|x| poly(&g, x[0], x[1]));
        let correlated = inner_product(&fv, &gv, &weight, &grid).unwrap();
        let mix = Mixing::rotation(rho).unwrap();
        let (nodes, weights) = gauss_hermite_nodes(12).unwrap();
        let mut independent = 0.0;
        for (v1, w1) in nodes.iter().zip(&weights) {
            for (v2, w2) in nodes.iter().zip(&weights) {
                let (x1, x2) = mix.to_correlated(*v1, *v2);
                independent += w1 * w2 * poly(&f, x1, x2) * poly(&g, x1, x2);
            }
        }
        prop_assert!((correlated - independent).abs() < 1e-6 * independent.abs().max(1.0), "{correlated} vs {independent}");
    }
}

#[test]
fn tensor_basis_is_orthonormal_under_correlated_weights() {
    let grid = CartesianGrid::uniform(2, -10.0, 10.0, 400).unwrap();
    for rho in [-0.9, 0.0, 0.5, 0.9] {
        let weight = gaussian_weight_2d(&grid, rho).unwrap();
        let mix = Mixing::rotation(rho).unwrap();
        let keys: Vec<(usize, usize)> = (0..=4).flat_map(|n| (0..=n).map(move |i| (n, i))).collect();
        let mut h1 = [0.0; 5];
        let mut h2 = [0.0; 5];
        let mut basis: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); keys.len()];
        let mut x = [0.0; 2];
        for idx in 0..grid.len() {
            grid.node(idx, &mut x);
            let (v1, v2) = mix.to_independent(x[0], x[1]);
            hermite_orthonormal_all(v1, &mut h1);
            hermite_orthonormal_all(v2, &mut h2);
            for (b, (n, i)) in basis.iter_mut().zip(&keys) {
                b.push(h1[*i] * h2[n - i]);
            }
        }
        for p in 0..keys.len() {
            for q in 0..keys.len() {
                let ip = inner_product(&basis[p], &basis[q], &weight, &grid).unwrap();
                let want = if p == q { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-6, "rho {rho} {:?}.{:?} = {ip}", keys[p], keys[q]);
            }
        }
    }
}
