use fasthla_core::surface::{eval_spline, fit_cubic, SplineError};
use fasthla_oracles::spline::{eval_dense, horner, natural_spline_dense};
use proptest::prelude::*;
use rand::Rng;

mod common;

fn random_knots(rng: &mut impl Rng, n: usize) -> Vec<(f64, f64)> {
    let mut x = rng.gen_range(-5.0..5.0);
    (0..n)
        .map(|_| {
            x += rng.gen_range(0.1..3.0);
            (x, rng.gen_range(-10.0..10.0))
        })
        .collect()
}

#[test]
fn six_knots_match_dense_solve() {
    let mut rng = common::rng(7);
    for _ in 0..50 {
        let pts = random_knots(&mut rng, 6);
        let s = fit_cubic(&pts).unwrap();
        let dense = natural_spline_dense(&pts);
        for (got, want) in s.local_coeffs().iter().zip(&dense) {
            for k in 0..4 {
                assert!((got[k] - want[k]).abs() < 1e-9, "{got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn interior_points_match_horner() {
    let mut rng = common::rng(11);
    let pts = random_knots(&mut rng, 8);
    let s = fit_cubic(&pts).unwrap();
    let dense = natural_spline_dense(&pts);
    let (lo, hi) = (pts[0].0, pts[7].0);
    for _ in 0..50 {
        let x = rng.gen_range(lo..hi);
        let got = eval_spline(&s, x).unwrap();
        let want = eval_dense(&pts, &dense, x);
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "x={x}: {got} vs {want}");
        // Horner on the spline's own coefficients too.
        let i = pts.iter().rposition(|p| p.0 <= x).unwrap().min(6);
        let own = horner(&s.local_coeffs()[i], x - pts[i].0);
        assert!((got - own).abs() < 1e-12 * own.abs().max(1.0));
    }
}

#[test]
fn worked_examples() {
    let s = fit_cubic(&[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]).unwrap();
    assert_eq!(eval_spline(&s, 1.5).unwrap(), 3.0);
    let s = fit_cubic(&[(1.0, 5.0), (2.0, 7.0), (4.0, 6.0)]).unwrap();
    assert_eq!(eval_spline(&s, 2.0).unwrap(), 7.0);
    assert!(matches!(eval_spline(&s, 4.5), Err(SplineError::Extrapolation { .. })));
    assert_eq!(fit_cubic(&[(1.0, 1.0), (1.0, 2.0)]), Err(SplineError::DuplicateKnot(1.0)));
    assert_eq!(fit_cubic(&[(1.0, 1.0)]), Err(SplineError::InsufficientData(1)));
}

proptest! {
    #[test]
    fn spline_constraints_hold(
        steps in prop::collection::vec(0.05f64..4.0, 1..12),
        ys in prop::collection::vec(-100f64..100.0, 13),
        start in -50f64..50.0,
    ) {
        let mut x = start;
        let mut pts = vec![(x, ys[0])];
        for (i, h) in steps.iter().enumerate() {
            x += h;
            pts.push((x, ys[i + 1]));
        }
        let s = fit_cubic(&pts).unwrap();
        let n = pts.len();
        for (i, &(xi, yi)) in pts.iter().enumerate() {
            prop_assert!((eval_spline(&s, xi).unwrap() - yi).abs() < 1e-9);
            if i > 0 && i < n - 1 {
                prop_assert!((s.value_of_piece(i - 1, xi) - yi).abs() < 1e-9 * yi.abs().max(1.0));
                let left = s.second_derivative_of_piece(i - 1, xi);
                let right = s.second_derivative_of_piece(i, xi);
                prop_assert!((left - right).abs() < 1e-9 * left.abs().max(1.0));
            }
        }
        prop_assert!(s.second_derivative_of_piece(0, pts[0].0).abs() < 1e-9);
        let last = s.second_derivative_of_piece(n - 2, pts[n - 1].0);
        prop_assert!(last.abs() < 1e-9 * s.moments().iter().fold(1.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn affine_data_is_reproduced(a in -10f64..10.0, b in -10f64..10.0, x in 0f64..5.0) {
        let pts: Vec<_> = (0..6).map(|i| (i as f64, a + b * i as f64)).collect();
        let s = fit_cubic(&pts).unwrap();
        prop_assert!((eval_spline(&s, x).unwrap() - (a + b * x)).abs() < 1e-9);
    }
}
