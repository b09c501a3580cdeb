//! Self-check suites bundled behind the `verify` subcommand.
//!
//! Each suite measures one deviation and compares it with a tolerance; a
//! single override replaces every default tolerance, which is how
//! over-tight settings are exercised.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{integrate, EvolutionConfig};
use crate::lattice::{
    covariant_minus, covariant_plus, discrete_laplacian, forward_difference, gauge_transform, system_residual,
    ComplexField, GaugeRates, GaugeTriple, LatticeWindow, ModelParams, C64,
};
use crate::stationary::{
    continuum_soliton, scalar_root_double, scalar_root_single, solve_from_seed, stationary_jacobian,
    stationary_residual, NewtonOptions, SeedSpec,
};

pub type JacobianFn = dyn Fn(&[f64], &ModelParams) -> DMatrix<f64> + Sync;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub params: ModelParams,
    pub seed: u64,
    pub tolerance: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            params: ModelParams::new(1.0, 1.0, 1.0, 1.0).expect("default parameters are valid"),
            seed: 20240917,
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn failing(&self) -> Vec<&'static str> {
        self.suites.iter().filter(|s| !s.passed).map(|s| s.name).collect()
    }
}

pub fn random_complex_field(rng: &mut impl Rng, window: LatticeWindow, amplitude: f64) -> ComplexField {
    ComplexField::from_fn(window, |_| {
        C64::new(
            rng.random_range(-amplitude..amplitude),
            rng.random_range(-amplitude..amplitude),
        )
    })
    .expect("finite random values")
}

fn random_vec(rng: &mut impl Rng, len: usize, amplitude: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-amplitude..amplitude)).collect()
}

fn max_dev(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// One randomised covariance check: largest deviation of
/// `D+-(e^{i chi} phi; a1 + grad+ chi) = e^{i chi} D+-(phi; a1)` and of the
/// sitewise residual moduli of the full system under the transformation.
pub fn gauge_covariance_deviation(rng: &mut impl Rng, window: LatticeWindow, params: &ModelParams) -> f64 {
    let n = window.len();
    let h = window.h;
    let phi = random_complex_field(rng, window, 1.0);
    let phi_t: Vec<C64> = random_complex_field(rng, window, 1.0).into_values();
    let gauge = GaugeTriple::new(
        random_vec(rng, n, 1.0),
        random_vec(rng, n - 1, 1.0),
        random_vec(rng, n, 1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .expect("finite gauge");
    let rates = GaugeRates {
        a1_t: random_vec(rng, n - 1, 1.0),
        a2_t: random_vec(rng, n, 1.0),
    };
    let chi = random_vec(rng, n, std::f64::consts::PI);
    let chi_dot = random_vec(rng, n, 1.0);

    let (phi2, gauge2) = gauge_transform(&phi, &gauge, &chi, &chi_dot).expect("matching lengths");
    let phase: Vec<C64> = chi.iter().map(|&c| C64::from_polar(1.0, c)).collect();
    let rotate = |v: Vec<C64>| -> Vec<C64> { v.into_iter().zip(&phase).map(|(z, e)| e * z).collect() };

    let mut dev = 0.0_f64;
    dev = dev.max(max_dev(
        &covariant_plus(phi2.values(), &gauge2.a1, h),
        &rotate(covariant_plus(phi.values(), &gauge.a1, h)),
    ));
    dev = dev.max(max_dev(
        &covariant_minus(phi2.values(), &gauge2.a1, h),
        &rotate(covariant_minus(phi.values(), &gauge.a1, h)),
    ));

    let (phi2_t, rates2) = crate::lattice::gauge_transform_rates(phi.values(), &phi_t, &rates, &chi, &chi_dot, h);
    let r1 = system_residual(&phi, &phi_t, &gauge, &rates, params).expect("lengths");
    let r2 = system_residual(&phi2, &phi2_t, &gauge2, &rates2, params).expect("lengths");
    let modulus = |v: &[C64]| -> Vec<f64> { v.iter().map(|z| z.norm()).collect() };
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    dev = dev.max(diff(&modulus(&r1.scalar), &modulus(&r2.scalar)));
    dev = dev.max(diff(&r1.bond, &r2.bond));
    dev = dev.max(diff(&r1.current, &r2.current));
    dev = dev.max(diff(&r1.constraint, &r2.constraint));
    dev
}

/// Sitewise defect of `grad+(conj(phi) D+ phi)(n) = |D+ phi(n)|^2 + conj(phi(n+1)) D- D+ phi(n+1)`
/// with `a1 = 0`, on the zero-extended lattice.
pub fn product_identity_defect(phi: &[C64], h: f64) -> f64 {
    let mut z = vec![C64::default(); 2];
    z.extend_from_slice(phi);
    z.extend([C64::default(); 2]);
    let dplus = forward_difference(&z, h);
    let current: Vec<C64> = z.iter().zip(&dplus).map(|(a, d)| a.conj() * d).collect();
    let lhs = forward_difference(&current, h);
    let lap = discrete_laplacian(&z, h);
    (0..z.len() - 1)
        .map(|i| (lhs[i] - (dplus[i].norm_sqr() + z[i + 1].conj() * lap[i + 1])).norm())
        .fold(0.0, f64::max)
}

/// Central-difference Jacobian of the stationary residual.
pub fn finite_difference_jacobian(u: &[f64], params: &ModelParams) -> DMatrix<f64> {
    let n = u.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut work = u.to_vec();
    for j in 0..n {
        let step = 1e-6 * u[j].abs().max(1.0);
        work[j] = u[j] + step;
        let plus = stationary_residual(&work, params);
        work[j] = u[j] - step;
        let minus = stationary_residual(&work, params);
        work[j] = u[j];
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    jac
}

/// `max |J - J_fd| / max |J_fd|`.
pub fn jacobian_mismatch(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    let scale = fd.amax().max(f64::MIN_POSITIVE);
    (analytic - fd).amax() / scale
}

struct Suite {
    name: &'static str,
    tolerance: f64,
    measured: f64,
    detail: String,
}

pub fn run_verify(options: &VerifyOptions) -> VerifyReport {
    run_verify_with(options, &stationary_jacobian)
}

/// [`run_verify`] with a replaceable analytic Jacobian.
pub fn run_verify_with(options: &VerifyOptions, jacobian: &JacobianFn) -> VerifyReport {
    let params = options.params;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut suites = Vec::new();

    let window = LatticeWindow::centered(8, params.h).expect("valid window");
    let cov = (0..200)
        .map(|_| gauge_covariance_deviation(&mut rng, window, &params))
        .fold(0.0, f64::max);
    suites.push(Suite {
        name: "gauge_covariance",
        tolerance: 1e-12,
        measured: cov,
        detail: "200 random fields, transforms and potentials".into(),
    });

    let ident = (0..100)
        .map(|_| {
            let phi = random_complex_field(&mut rng, window, 1.0);
            let scale = phi.linf().powi(2) / (params.h * params.h);
            product_identity_defect(phi.values(), params.h) / scale
        })
        .fold(0.0, f64::max);
    suites.push(Suite {
        name: "product_identity",
        tolerance: 1e-13,
        measured: ident,
        detail: "relative to max|phi|^2/h^2, 100 random fields".into(),
    });

    let evo_window = LatticeWindow::centered(20, params.h).expect("valid window");
    let phi0 = random_complex_field(&mut rng, evo_window, 0.5);
    let config = EvolutionConfig {
        t_end: 1.0,
        record_every: 0.25,
        ..EvolutionConfig::default()
    };
    let (measured, detail) = match integrate(&phi0, &params, &config) {
        Ok(trace) => {
            let peak = trace
                .snapshots
                .iter()
                .map(|(_, f)| f.linf().powi(2))
                .fold(0.0, f64::max);
            let worst = trace
                .constraint_series
                .iter()
                .chain(&trace.evolved_constraint_series)
                .fold(0.0_f64, |m, v| m.max(*v));
            (worst / peak, format!("t = 1, mass drift {:e}", trace.mass_drift()))
        }
        Err(e) => (f64::INFINITY, format!("evolution failed: {e}")),
    };
    suites.push(Suite {
        name: "constraint_preservation",
        tolerance: 1e-8,
        measured,
        detail,
    });

    let jac_window = LatticeWindow::centered(10, params.h).expect("valid window");
    let jac = (0..10)
        .map(|_| {
            let u: Vec<f64> = random_vec(&mut rng, jac_window.len(), 1.0);
            jacobian_mismatch(&jacobian(&u, &params), &finite_difference_jacobian(&u, &params))
        })
        .fold(0.0, f64::max);
    suites.push(Suite {
        name: "jacobian_finite_difference",
        tolerance: 1e-6,
        measured: jac,
        detail: "10 random fields, central differences".into(),
    });

    let mut root = 0.0_f64;
    for p in [0.5, 1.0, 1.5, 2.0, 3.0] {
        for h in [0.1, 1.0, 10.0, 1e3, 1e5] {
            let prm = ModelParams { p, h, ..params };
            let u = scalar_root_single(&prm);
            let single = prm.lambda * u.powf(2.0 * p) + 0.25 * h * h * u.powi(4) - prm.omega;
            let w = scalar_root_double(&prm, u);
            let target = prm.lambda * u.powf(2.0 * p);
            let double = prm.lambda * w.powf(2.0 * p) + 0.25 * h * h * w.powi(4) - target;
            root = root.max((single / prm.omega).abs()).max((double / target).abs());
        }
    }
    suites.push(Suite {
        name: "scalar_roots",
        tolerance: 1e-12,
        measured: root,
        detail: "relative residuals, p in {0.5,1,1.5,2,3}, h in [0.1, 1e5]".into(),
    });

    let solve_prm = ModelParams { h: 10.0, ..params };
    let (measured, detail) = match solve_from_seed(
        &SeedSpec::SingleSite { center: 0 },
        LatticeWindow::centered(10, solve_prm.h).expect("valid window"),
        &solve_prm,
        &NewtonOptions::default(),
    ) {
        Ok(state) if state.converged => {
            let tc = state.tail_constraint();
            (
                tc.combination.abs(),
                format!("single-site state at h = 10, residual {:e}", state.residual_linf),
            )
        }
        Ok(state) => (f64::INFINITY, format!("newton failed: {:?}", state.failure)),
        Err(e) => (f64::INFINITY, e.to_string()),
    };
    suites.push(Suite {
        name: "tail_constraint",
        tolerance: 1e-10,
        measured,
        detail,
    });

    let dx = 1e-3;
    let ode = (-4000..=4000)
        .map(|k| {
            let x = k as f64 * 2.5e-3;
            let q = |y: f64| continuum_soliton(y, &params);
            let second = (q(x + dx) - 2.0 * q(x) + q(x - dx)) / (dx * dx);
            (second - params.omega * q(x) + params.lambda * q(x).powf(2.0 * params.p + 1.0)).abs()
        })
        .fold(0.0, f64::max);
    suites.push(Suite {
        name: "soliton_ode",
        tolerance: 1e-5,
        measured: ode,
        detail: "central second difference, step 1e-3, x in [-10, 10]".into(),
    });

    let suites: Vec<SuiteResult> = suites
        .into_iter()
        .map(|s| {
            let tolerance = options.tolerance.unwrap_or(s.tolerance);
            SuiteResult {
                name: s.name,
                passed: s.measured <= tolerance,
                measured: s.measured,
                tolerance,
                detail: s.detail,
            }
        })
        .collect();
    VerifyReport {
        passed: suites.iter().all(|s| s.passed),
        seed: options.seed,
        suites,
    }
}
