use fasthla_core::corelog::ParamSetting;
use fasthla_core::surface::{fit_surface, ENERGY_FLOOR};
use fasthla_oracles::spline::{eval_dense, natural_spline_dense, tensor_interp};
use rand::Rng;

mod common;

fn axes() -> [Vec<f64>; 3] {
    [
        (0..6).map(f64::from).collect(),
        (0..6).map(f64::from).collect(),
        (0..7).map(f64::from).collect(),
    ]
}

#[test]
fn off_lattice_matches_tensor_oracle() {
    let mut rng = common::rng(3);
    let samples = common::random_lattice(&mut rng);
    let s = fit_surface(&samples).unwrap();
    // Lattice order is (cc, p, bs) lexicographic, i.e. the oracle's layout.
    let th: Vec<f64> = samples.iter().map(|x| x.1).collect();
    let e: Vec<f64> = samples.iter().map(|x| x.2).collect();
    for _ in 0..20 {
        let x = [rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0), rng.gen_range(0.0..6.0)];
        let (got_th, got_e) = s.eval_log2(x).unwrap();
        let want_th = tensor_interp(&axes(), &th, x);
        let want_e = tensor_interp(&axes(), &e, x);
        assert!((got_th - want_th).abs() < 1e-9, "{x:?}: {got_th} vs {want_th}");
        assert!((got_e - want_e.max(ENERGY_FLOOR)).abs() < 1e-9, "{x:?}: {got_e} vs {want_e}");
    }
}

#[test]
fn nodes_are_reproduced() {
    let mut rng = common::rng(4);
    let samples = common::random_lattice(&mut rng);
    let s = fit_surface(&samples).unwrap();
    for (t, th, e) in &samples {
        let (a, b) = s.eval_at(t).unwrap();
        assert!((a - th).abs() < 1e-9 && (b - e).abs() < 1e-9);
    }
}

#[test]
fn log2_linear_surface() {
    let samples: Vec<_> = ParamSetting::lattice()
        .filter(|t| t.bs_kib() == 8)
        .map(|t| {
            let v = f64::from(t.cc()).log2() + f64::from(t.p()).log2();
            (t, v, 1.0)
        })
        .collect();
    let s = fit_surface(&samples).unwrap();
    let (th, _) = s.eval(3.0, 1.0, 8192.0).unwrap();
    assert!((th - 3f64.log2()).abs() < 1e-9);
}

/// Finds a line of positive energies whose spline dips below zero, then
/// scales it so the dip is exactly -0.5 at a known point.
fn overshooting_line() -> (Vec<f64>, f64) {
    let xs: Vec<f64> = (0..6).map(f64::from).collect();
    let shapes: [[f64; 6]; 3] = [
        [1.0, 1.0, 0.0, 1.0, 1.0, 1.0],
        [1.0, 0.0, 1.0, 1.0, 1.0, 1.0],
        [3.0, 3.0, 0.0, 0.0, 3.0, 3.0],
    ];
    for shape in shapes {
        let pts: Vec<(f64, f64)> = xs.iter().copied().zip(shape).collect();
        let c = natural_spline_dense(&pts);
        let (x_min, u_min) = (0..=5000)
            .map(|i| {
                let x = i as f64 * 5.0 / 5000.0;
                (x, eval_dense(&pts, &c, x))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if u_min < -1e-6 {
            // value(x) = floor + scale * shape(x); solve for value(x_min) = -0.5.
            let floor = 0.01;
            let scale = (-0.5 - floor) / u_min;
            return (shape.iter().map(|u| floor + scale * u).collect(), x_min);
        }
    }
    panic!("no overshooting shape found");
}

#[test]
fn energy_overshoot_is_clamped() {
    let (energies, x) = overshooting_line();
    assert!(energies.iter().all(|&e| e > 0.0));
    let pts: Vec<(f64, f64)> = (0..6).map(|i| (f64::from(i), energies[i as usize])).collect();
    let c = natural_spline_dense(&pts);
    assert!((eval_dense(&pts, &c, x) + 0.5).abs() < 1e-9);

    let samples: Vec<_> = ParamSetting::lattice()
        .filter(|t| t.p() == 1 && t.bs_kib() == 8)
        .map(|t| (t, 10.0, energies[t.indices()[0]]))
        .collect();
    let s = fit_surface(&samples).unwrap();
    let (_, e) = s.eval_log2([x, 0.0, 3.0]).unwrap();
    assert_eq!(e, ENERGY_FLOOR);
}
