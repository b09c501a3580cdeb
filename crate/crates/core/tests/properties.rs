use css_lattice::continuation::{scale_solution, scaled_potential_residual, scaled_system_residual};
use css_lattice::dynamics::{balance_residual, integrate_fixed};
use css_lattice::fieldio::{read_complex_field, read_real_field, write_complex_field, write_real_field};
use css_lattice::gauge::{reconstruct_a2, reconstruct_g, reconstruct_g_real};
use css_lattice::lattice::{covariant_minus, covariant_plus, discrete_laplacian, gauge_transform, GaugeTriple};
use css_lattice::stationary::{
    scalar_root_double, scalar_root_single, solve_from_seed, stationary_jacobian, stationary_residual, NewtonOptions,
    SeedSpec,
};
use css_lattice::verify::product_identity_defect;
use css_lattice::{ComplexField, LatticeWindow, ModelParams, RealField, C64};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

/// Fixed seed unless `PROPTEST_RNG_SEED` overrides it, so runs are reproducible.
fn config(cases: u32) -> ProptestConfig {
    let mut config = ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    };
    if config.rng_seed == RngSeed::Random {
        config.rng_seed = RngSeed::Fixed(20240917);
    }
    config
}

fn complex_values(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<C64>> {
    vec(
        (-2.0..2.0_f64, -2.0..2.0_f64).prop_map(|(re, im)| C64::new(re, im)),
        len,
    )
}

fn window(len: usize, h: f64) -> LatticeWindow {
    LatticeWindow::new(-3, len as i64 - 4, h).unwrap()
}

fn linf(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn covariant_differences_are_gauge_covariant(
        phi in complex_values(3..30),
        h in 0.1..5.0_f64,
        seed in any::<u64>(),
    ) {
        let n = phi.len();
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let a1: Vec<f64> = (0..n - 1).map(|_| next()).collect();
        let chi: Vec<f64> = (0..n).map(|_| 3.0 * next()).collect();
        let field = ComplexField::new(window(n, h), phi.clone()).unwrap();
        let gauge = GaugeTriple::new(vec![0.0; n], a1.clone(), vec![0.0; n], 0.0, 0.0).unwrap();
        let (phi2, gauge2) = gauge_transform(&field, &gauge, &chi, &vec![0.0; n]).unwrap();
        let rotate = |v: Vec<C64>| -> Vec<C64> {
            v.iter().zip(&chi).map(|(z, c)| C64::from_polar(1.0, *c) * z).collect()
        };
        for (op, name) in [(covariant_plus as fn(&[C64], &[f64], f64) -> Vec<C64>, "D+"), (covariant_minus, "D-")] {
            let lhs = op(phi2.values(), &gauge2.a1, h);
            let rhs = rotate(op(&phi, &a1, h));
            let dev: Vec<C64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            prop_assert!(linf(&dev) < 1e-12 * (1.0 + linf(&rhs)), "{} deviation {}", name, linf(&dev));
        }
    }

    #[test]
    fn product_identity_holds(phi in complex_values(1..40), h in 0.1..5.0_f64) {
        let scale = linf(&phi).powi(2) / (h * h);
        prop_assert!(product_identity_defect(&phi, h) <= 1e-13 * (1.0 + scale));
    }

    #[test]
    fn laplacian_l1_bound(f in vec(-5.0..5.0_f64, 1..50), h in 0.05..10.0_f64) {
        let lap = discrete_laplacian(&f, h);
        let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
        prop_assert!(l1(&lap) <= 4.0 / (h * h) * l1(&f) * (1.0 + 1e-12));
    }

    #[test]
    fn reconstructed_potentials_are_bounded(
        phi in complex_values(1..60),
        h in 0.05..5.0_f64,
        beta in -2.0..2.0_f64,
        gamma in -2.0..2.0_f64,
    ) {
        let m = h * phi.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let peak = phi.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        let tol = 1e-12 * (1.0 + m);
        let a2 = reconstruct_a2(&phi, beta, h);
        prop_assert!(a2.windows(2).all(|w| w[1] >= w[0] - tol));
        prop_assert!(a2.iter().all(|&a| a <= beta + tol && a >= beta - 0.5 * m - tol));

        let g = reconstruct_g(&phi, gamma, h);
        let bound = gamma + 0.25 * h * m * peak;
        let gtol = 1e-12 * (1.0 + bound.abs());
        prop_assert!(g.windows(2).all(|w| w[1] <= w[0] + gtol));
        prop_assert!(g.iter().all(|&x| x >= gamma - gtol && x <= bound + gtol));
    }

    #[test]
    fn jacobian_matches_central_differences(
        u in vec(-1.5..1.5_f64, 3..25),
        h in 0.3..8.0_f64,
        p in prop::sample::select(vec![0.5, 1.0, 1.5, 2.0, 3.0]),
        omega in 0.5..3.0_f64,
    ) {
        let prm = ModelParams::new(1.0, p, omega, h).unwrap();
        let jac = stationary_jacobian(&u, &prm);
        let scale = jac.amax();
        for j in 0..u.len() {
            let step = 1e-6 * u[j].abs().max(1.0);
            let (mut up, mut dn) = (u.clone(), u.clone());
            up[j] += step;
            dn[j] -= step;
            let (fu, fd) = (stationary_residual(&up, &prm), stationary_residual(&dn, &prm));
            for i in 0..u.len() {
                let approx = (fu[i] - fd[i]) / (2.0 * step);
                prop_assert!((jac[(i, j)] - approx).abs() <= 1e-6 * scale, "entry ({}, {})", i, j);
            }
        }
    }

    #[test]
    fn scalar_roots_solve_and_decrease(
        p in 0.2..3.5_f64,
        omega in 0.1..10.0_f64,
        h in 0.01..1e3_f64,
        factor in 1.01..10.0_f64,
    ) {
        let prm = ModelParams::new(1.0, p, omega, h).unwrap();
        let u = scalar_root_single(&prm);
        let res = u.powf(2.0 * p) + 0.25 * h * h * u.powi(4) - omega;
        prop_assert!(u > 0.0 && res.abs() <= 1e-12 * omega);
        let w = scalar_root_double(&prm, u);
        let wres = w.powf(2.0 * p) + 0.25 * h * h * w.powi(4) - u.powf(2.0 * p);
        prop_assert!(w > 0.0 && w < u && wres.abs() <= 1e-12 * omega);
        let further = scalar_root_single(&prm.with_h(h * factor).unwrap());
        prop_assert!(further < u);
    }

    #[test]
    fn cubic_scaling_maps_residuals(
        u in vec(-2.0..2.0_f64, 2..30),
        h in 0.1..10.0_f64,
        omega in 0.1..5.0_f64,
        gamma in -1.0..1.0_f64,
    ) {
        let prm = ModelParams::new(1.0, 1.0, omega, h).unwrap().with_gamma(gamma).unwrap();
        let g = reconstruct_g_real(&u, gamma, h);
        let (ut, gt) = scale_solution(&u, &g, h, 1.0);
        let scaled = scaled_system_residual(&ut, &gt, &prm, 1.0);
        let original = stationary_residual(&u, &prm);
        for (s, r) in scaled.iter().zip(&original) {
            prop_assert!((s - h.powi(3) * r).abs() <= 1e-9 * (1.0 + (h.powi(3) * r).abs()));
        }
        let pot = scaled_potential_residual(&ut, &gt, h * h * gamma);
        let pscale = gt.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        prop_assert!(pot.iter().all(|r| r.abs() <= 1e-12 * pscale));
    }

    #[test]
    fn field_files_round_trip_bitwise(
        values in vec((any::<f64>(), any::<f64>()), 3..40),
        n_min in -50..50_i64,
        h in 1e-3..1e3_f64,
    ) {
        let values: Vec<C64> = values
            .into_iter()
            .map(|(a, b)| C64::new(if a.is_finite() { a } else { 0.0 }, if b.is_finite() { b } else { 0.0 }))
            .collect();
        let w = LatticeWindow::new(n_min, n_min + values.len() as i64 - 1, h).unwrap();
        let field = ComplexField::new(w, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.csv");
        write_complex_field(&path, &field).unwrap();
        let back = read_complex_field(&path).unwrap();
        prop_assert_eq!(back.window().h.to_bits(), h.to_bits());
        for (a, b) in back.values().iter().zip(field.values()) {
            prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
            prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
        }

        let real = RealField::new(w, field.values().iter().map(|z| z.re).collect()).unwrap();
        let rpath = dir.path().join("u.csv");
        write_real_field(&rpath, &real).unwrap();
        let rback = read_real_field(&rpath).unwrap();
        for (a, b) in rback.values().iter().zip(real.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn newton_converges_from_site_seeds_at_large_h(
        p in 0.3..1.6_f64,
        omega in 0.5..3.0_f64,
        h in 30.0..200.0_f64,
        double in any::<bool>(),
    ) {
        // Towards p = 2 the states at moderate h are far from the site seeds
        // (reachable by continuation from larger h only). The double-site left
        // tail decays like lambda W^{2p} h^2 ~ h^{2 - p(p+2)/2} per site, which
        // stops localising past p = sqrt(5) - 1; keep clear of both.
        let p = if double { p.min(1.2) } else { p };
        let prm = ModelParams::new(1.0, p, omega, h).unwrap();
        let seed = if double { SeedSpec::DoubleSite { center: 0 } } else { SeedSpec::SingleSite { center: 0 } };
        let s = solve_from_seed(&seed, LatticeWindow::centered(20, h).unwrap(), &prm, &NewtonOptions::default()).unwrap();
        prop_assert!(s.converged, "{:?}", s.failure);
        prop_assert!(s.residual_linf <= 1e-12);
        // the largest site sits near the single-site root for either seed
        let root = scalar_root_single(&prm);
        prop_assert!((s.u.linf() - root).abs() <= 0.1 * root);
    }
}

#[test]
fn dormand_prince_is_at_least_fourth_order() {
    let h = 1.0;
    let prm = ModelParams::new(1.0, 1.0, 1.0, h).unwrap();
    let w = LatticeWindow::centered(10, h).unwrap();
    let phi0 = ComplexField::from_fn(w, |n| {
        let x = n as f64 * 0.4;
        C64::new((-x * x).exp(), 0.3 * x * (-x * x).exp())
    })
    .unwrap();
    let t = 0.4;
    let reference = integrate_fixed(&phi0, &prm, t / 512.0, 512).unwrap();
    let err = |steps: usize| {
        let approx = integrate_fixed(&phi0, &prm, t / steps as f64, steps).unwrap();
        approx
            .values()
            .iter()
            .zip(reference.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (err(8), err(16));
    let order = (coarse / fine).log2();
    assert!(order >= 4.0, "observed order {order}");
}

#[test]
fn balance_law_residual_is_first_order_in_the_step() {
    let h = 0.8;
    let prm = ModelParams::new(1.0, 1.0, 1.0, h).unwrap();
    let w = LatticeWindow::centered(12, h).unwrap();
    let phi0 = ComplexField::from_fn(w, |n| {
        let x = n as f64 * h;
        C64::from_polar((-0.3 * x * x).exp(), 0.7 * x)
    })
    .unwrap();
    let residual = |dt: f64| {
        let after = integrate_fixed(&phi0, &prm, dt, 1).unwrap();
        balance_residual(phi0.values(), after.values(), dt, h)
    };
    let ratio = residual(1e-3) / residual(5e-4);
    assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
}
