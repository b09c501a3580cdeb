//! Stationary bound states `phi(t, n) = e^{i Omega t} U_n`.
//!
//! A real profile `U` is a stationary state when
//!
//! ```text
//! F_n(U, h) = (lambda |U_n|^{2p} - Omega + G_n) U_n + (U_{n+1} - 2 U_n + U_{n-1}) / h^2 = 0,
//! G_n       = gamma + (h^2/4) sum_{k >= n} U_k^4,
//! ```
//!
//! which is solved by damped Newton iteration with the analytic Jacobian.
//! Seeds come from the decoupled (`h -> inf`) limit, where a single excited
//! site carries the root of `lambda x^{2p} + (h^2/4) x^4 = Omega`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};
use crate::gauge::reconstruct_g_real;
use crate::lattice::{abs_pow, boundary_ratio, LatticeWindow, ModelParams, RealField};

/// Unique positive root of a strictly increasing `f` with `f(lo) < 0 <= f(hi)`.
fn increasing_root(f: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // polish inside the final bracket
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let (value, slope) = f(x);
        if slope <= 0.0 || value == 0.0 {
            break;
        }
        let next = x - value / slope;
        if next < lo || next > hi {
            break;
        }
        x = next;
    }
    x
}

/// `lambda x^{2p} + (h^2/4) x^4 - target` and its derivative.
fn local_map(params: &ModelParams, target: f64) -> impl Fn(f64) -> (f64, f64) + '_ {
    let q = 0.25 * params.h * params.h;
    move |x: f64| {
        let pow = x.powf(2.0 * params.p);
        let value = params.lambda * pow + q * x.powi(4) - target;
        let slope = 2.0 * params.p * params.lambda * pow / x + 4.0 * q * x.powi(3);
        (value, slope)
    }
}

/// Single-site amplitude: the positive root of `lambda U^{2p} + (h^2/4) U^4 = Omega`.
pub fn scalar_root_single(params: &ModelParams) -> f64 {
    let omega = params.omega - params.gamma;
    if omega <= 0.0 {
        return 0.0;
    }
    let hi = (omega / params.lambda)
        .powf(0.5 / params.p)
        .min((4.0 * omega / (params.h * params.h)).powf(0.25));
    increasing_root(local_map(params, omega), 0.0, hi)
}

/// Double-site companion amplitude: the positive root of
/// `lambda W^{2p} + (h^2/4) W^4 = lambda U^{2p}`; always `0 < W < U`.
pub fn scalar_root_double(params: &ModelParams, u_single: f64) -> f64 {
    let target = params.lambda * u_single.powf(2.0 * params.p);
    increasing_root(local_map(params, target), 0.0, u_single)
}

/// `F(U, h)` componentwise on the window, with zero padding outside.
pub fn stationary_residual(u: &[f64], params: &ModelParams) -> Vec<f64> {
    let h2 = params.h * params.h;
    let g = reconstruct_g_real(u, params.gamma, params.h);
    let n = u.len();
    (0..n)
        .map(|i| {
            let prev = if i > 0 { u[i - 1] } else { 0.0 };
            let next = if i + 1 < n { u[i + 1] } else { 0.0 };
            let local = params.lambda * abs_pow(u[i] * u[i], params.p) - params.omega + g[i];
            local * u[i] + (next - 2.0 * u[i] + prev) / h2
        })
        .collect()
}

/// `dF/dh` at fixed `U`.
pub fn residual_h_derivative(u: &[f64], params: &ModelParams) -> Vec<f64> {
    let h = params.h;
    let g = reconstruct_g_real(u, params.gamma, h);
    let n = u.len();
    (0..n)
        .map(|i| {
            let prev = if i > 0 { u[i - 1] } else { 0.0 };
            let next = if i + 1 < n { u[i + 1] } else { 0.0 };
            2.0 * (g[i] - params.gamma) / h * u[i] - 2.0 * (next - 2.0 * u[i] + prev) / h.powi(3)
        })
        .collect()
}

/// Analytic Jacobian `dF/dU`: tridiagonal coupling plus the upper-triangular
/// block `h^2 U_m^3 U_n` (`m > n`) coming from the tail sum in `G_n`.
pub fn stationary_jacobian(u: &[f64], params: &ModelParams) -> DMatrix<f64> {
    let n = u.len();
    let h2 = params.h * params.h;
    let inv_h2 = 1.0 / h2;
    let g = reconstruct_g_real(u, params.gamma, params.h);
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let local = (2.0 * params.p + 1.0) * params.lambda * abs_pow(u[i] * u[i], params.p);
        jac[(i, i)] = local - params.omega + g[i] + h2 * u[i].powi(4) - 2.0 * inv_h2;
        if i > 0 {
            jac[(i, i - 1)] += inv_h2;
        }
        if i + 1 < n {
            jac[(i, i + 1)] += inv_h2;
        }
        let ui = u[i];
        if ui != 0.0 {
            for m in i + 1..n {
                jac[(i, m)] += h2 * u[m].powi(3) * ui;
            }
        }
    }
    jac
}

/// Dense LU solve of `a x = b`; `None` when the pivot spread exceeds `limit`.
pub(crate) fn solve_dense(a: DMatrix<f64>, b: &[f64], limit: f64) -> std::result::Result<Vec<f64>, f64> {
    let lu = a.lu();
    let diag = lu.u().diagonal();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for d in diag.iter() {
        lo = lo.min(d.abs());
        hi = hi.max(d.abs());
    }
    let ratio = if lo == 0.0 { f64::INFINITY } else { hi / lo };
    if ratio.is_nan() || ratio > limit {
        return Err(ratio);
    }
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.as_slice().to_vec())
        .ok_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    SingleSite,
    DoubleSite,
    External,
}

impl std::fmt::Display for SeedKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SeedKind::SingleSite => "single_site",
            SeedKind::DoubleSite => "double_site",
            SeedKind::External => "external",
        })
    }
}

/// Initial guess for Newton iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedSpec {
    /// `U(h)` at `center`.
    SingleSite {
        center: i64,
    },
    /// `W(h)` at `center`, `U(h)` at `center + 1`.
    DoubleSite {
        center: i64,
    },
    External(RealField),
}

impl SeedSpec {
    pub fn kind(&self) -> SeedKind {
        match self {
            SeedSpec::SingleSite { .. } => SeedKind::SingleSite,
            SeedSpec::DoubleSite { .. } => SeedKind::DoubleSite,
            SeedSpec::External(_) => SeedKind::External,
        }
    }

    pub fn build(&self, window: LatticeWindow, params: &ModelParams) -> Result<RealField> {
        let window = window.with_spacing(params.h)?;
        let check_center = |c: i64, extra: i64| {
            if c - 2 < window.n_min || c + extra + 2 > window.n_max {
                Err(LatticeError::Parameter {
                    name: "center",
                    value: c as f64,
                    reason: "seed needs a margin of 2 sites inside the window",
                })
            } else {
                Ok(())
            }
        };
        match self {
            SeedSpec::SingleSite { center } => {
                check_center(*center, 0)?;
                let u = scalar_root_single(params);
                RealField::from_fn(window, |n| if n == *center { u } else { 0.0 })
            }
            SeedSpec::DoubleSite { center } => {
                check_center(*center, 1)?;
                let u = scalar_root_single(params);
                let w = scalar_root_double(params, u);
                RealField::from_fn(window, |n| match n - center {
                    0 => w,
                    1 => u,
                    _ => 0.0,
                })
            }
            SeedSpec::External(field) => field.with_spacing(params.h),
        }
    }

    /// The site seeds with geometric tails from the linearisation about the
    /// anti-continuum state: left of the excited sites the local coefficient is
    /// `-lambda U^{2p}` of the leftmost amplitude, right of them `-(Omega - gamma)`.
    /// Other seeds are returned as [`SeedSpec::build`] gives them.
    pub fn build_dressed(&self, window: LatticeWindow, params: &ModelParams) -> Result<RealField> {
        let bare = self.build(window, params)?;
        let (center, width) = match self {
            SeedSpec::SingleSite { center } => (*center, 0),
            SeedSpec::DoubleSite { center } => (*center, 1),
            SeedSpec::External(_) => return Ok(bare),
        };
        let h2 = params.h * params.h;
        let ratio = |kappa: f64| {
            let b = 2.0 + kappa;
            // decaying root of r + 1/r = 2 + kappa
            (b - (b * b - 4.0).max(0.0).sqrt()) / 2.0
        };
        let left_amp = bare.at(center);
        let right_amp = bare.at(center + width);
        let r_left = ratio(h2 * params.lambda * abs_pow(left_amp * left_amp, params.p));
        let r_right = ratio(h2 * (params.omega - params.gamma));
        let dressed = bare
            .window()
            .sites()
            .zip(bare.values())
            .map(|(n, &u)| {
                if n < center {
                    left_amp * r_left.powi((center - n) as i32)
                } else if n > center + width {
                    right_amp * r_right.powi((n - center - width) as i32)
                } else {
                    u
                }
            })
            .collect();
        RealField::new(bare.window(), dressed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Largest accepted ratio of LU pivot moduli before the Jacobian is
    /// treated as singular.
    pub pivot_ratio_limit: f64,
    pub expand_window: bool,
    pub boundary_threshold: f64,
    pub max_sites: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 60,
            max_halvings: 30,
            pivot_ratio_limit: 1e14,
            expand_window: true,
            boundary_threshold: 1e-10,
            max_sites: 2001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NewtonFailure {
    SingularJacobian { iteration: usize, pivot_ratio: f64 },
    Diverged { iteration: usize, residual: f64 },
    MaxIterations { residual: f64 },
    WindowLimit { sites: usize },
}

impl std::fmt::Display for NewtonFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NewtonFailure::SingularJacobian { iteration, pivot_ratio } => write!(
                f,
                "singular Jacobian at iteration {iteration} (pivot ratio {pivot_ratio:e})"
            ),
            NewtonFailure::Diverged { iteration, residual } => write!(
                f,
                "no descent after full backtracking at iteration {iteration} (residual {residual:e})"
            ),
            NewtonFailure::MaxIterations { residual } => {
                write!(f, "iteration limit reached (residual {residual:e})")
            }
            NewtonFailure::WindowLimit { sites } => {
                write!(f, "tails still large at the window limit of {sites} sites")
            }
        }
    }
}

/// Result of a stationary solve; non-convergence is reported, not raised.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryState {
    pub u: RealField,
    pub g: Vec<f64>,
    pub params: ModelParams,
    pub residual_linf: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failure: Option<NewtonFailure>,
}

impl StationaryState {
    /// Wrap a profile, computing `G` and the residual.
    pub fn evaluate(u: RealField, params: ModelParams, iterations: usize, tol: f64) -> Self {
        let residual_linf = linf(&stationary_residual(u.values(), &params));
        let g = reconstruct_g_real(u.values(), params.gamma, params.h);
        Self {
            u,
            g,
            params,
            residual_linf,
            iterations,
            converged: residual_linf <= tol,
            failure: None,
        }
    }

    pub fn mass(&self) -> f64 {
        self.u.mass()
    }

    pub fn tail_constraint(&self) -> TailConstraint {
        asymmetric_tail_check(self.u.values(), &self.params)
    }

    pub fn boundary_ratio(&self) -> f64 {
        boundary_ratio(self.u.values())
    }
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct NewtonRun {
    u: Vec<f64>,
    residual: f64,
    iterations: usize,
    failure: Option<NewtonFailure>,
}

fn newton_iterate(mut u: Vec<f64>, params: &ModelParams, opts: &NewtonOptions) -> NewtonRun {
    let mut f = stationary_residual(&u, params);
    let mut r = linf(&f);
    for it in 0..opts.max_iter {
        if r <= opts.tol {
            return NewtonRun {
                u,
                residual: r,
                iterations: it,
                failure: None,
            };
        }
        let jac = stationary_jacobian(&u, params);
        let step = match solve_dense(jac, &f, opts.pivot_ratio_limit) {
            Ok(step) => step,
            Err(pivot_ratio) => {
                return NewtonRun {
                    u,
                    residual: r,
                    iterations: it,
                    failure: Some(NewtonFailure::SingularJacobian {
                        iteration: it,
                        pivot_ratio,
                    }),
                }
            }
        };
        // Armijo backtracking on the Euclidean residual
        let base = l2(&f);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(x, d)| x - scale * d).collect();
            let ft = stationary_residual(&trial, params);
            if ft.iter().all(|v| v.is_finite()) && l2(&ft) <= (1.0 - 1e-4 * scale) * base {
                accepted = Some((trial, ft));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((trial, ft)) => {
                u = trial;
                f = ft;
                r = linf(&f);
            }
            None if r <= 1e3 * opts.tol => {
                // already at rounding level; no descent left to find
                return NewtonRun {
                    u,
                    residual: r,
                    iterations: it + 1,
                    failure: Some(NewtonFailure::MaxIterations { residual: r }),
                };
            }
            None => {
                return NewtonRun {
                    u,
                    residual: r,
                    iterations: it + 1,
                    failure: Some(NewtonFailure::Diverged {
                        iteration: it,
                        residual: r,
                    }),
                }
            }
        }
    }
    let failure = (r > opts.tol).then_some(NewtonFailure::MaxIterations { residual: r });
    NewtonRun {
        u,
        residual: r,
        iterations: opts.max_iter,
        failure,
    }
}

/// Sites to add on each side so that both edges drop below `threshold`.
pub(crate) fn expansion_needed(u: &[f64], threshold: f64) -> (usize, usize) {
    let peak = linf(u);
    if peak == 0.0 || u.is_empty() {
        return (0, 0);
    }
    let grow = (u.len() / 4).max(8);
    let left = if u[0].abs() > threshold * peak { grow } else { 0 };
    let right = if u[u.len() - 1].abs() > threshold * peak {
        grow
    } else {
        0
    };
    (left, right)
}

/// Damped Newton iteration from `initial` at `params`.
///
/// The window grows while the converged profile has edge amplitudes above
/// `opts.boundary_threshold` of its peak.
pub fn newton_solve(initial: &RealField, params: &ModelParams, opts: &NewtonOptions) -> Result<StationaryState> {
    params.validate()?;
    let mut field = initial.with_spacing(params.h)?;
    let mut total_iterations = 0;
    loop {
        let run = newton_iterate(field.values().to_vec(), params, opts);
        total_iterations += run.iterations;
        let window = field.window();
        field = RealField::new(window, run.u)?;
        let mut state = StationaryState::evaluate(field.clone(), *params, total_iterations, opts.tol);
        state.failure = run.failure;
        state.converged = run.failure.is_none() && run.residual <= opts.tol;
        if !state.converged || !opts.expand_window {
            return Ok(state);
        }
        let (left, right) = expansion_needed(field.values(), opts.boundary_threshold);
        if left + right == 0 {
            return Ok(state);
        }
        if field.len() + left + right > opts.max_sites {
            state.converged = false;
            state.failure = Some(NewtonFailure::WindowLimit { sites: field.len() });
            return Ok(state);
        }
        field = field.padded(left, right);
    }
}

/// Build the seed on `window` and solve; a site seed that fails is retried
/// once with [`SeedSpec::build_dressed`].
pub fn solve_from_seed(
    seed: &SeedSpec,
    window: LatticeWindow,
    params: &ModelParams,
    opts: &NewtonOptions,
) -> Result<StationaryState> {
    let initial = seed.build(window, params)?;
    let state = newton_solve(&initial, params, opts)?;
    if state.converged || matches!(seed, SeedSpec::External(_)) {
        return Ok(state);
    }
    // slowly decaying tails can put the bare seed outside the Newton basin
    let retry = newton_solve(&seed.build_dressed(window, params)?, params, opts)?;
    Ok(if retry.converged || retry.residual_linf < state.residual_linf {
        retry
    } else {
        state
    })
}

/// The two sums of the solvability identity obtained by multiplying
/// `F_n` with `U_{n+1} - U_{n-1}` and summing over the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConstraint {
    /// `sum U_n^5 U_{n+1}`.
    pub quintic_sum: f64,
    /// `sum U_{n+1} U_n (|U_n|^{2p} - |U_{n+1}|^{2p})`.
    pub power_sum: f64,
    /// `(h^2/4) quintic_sum + lambda power_sum`; zero for every solution.
    pub combination: f64,
}

pub fn asymmetric_tail_check(u: &[f64], params: &ModelParams) -> TailConstraint {
    let mut quintic = 0.0;
    let mut power = 0.0;
    // n runs over the window plus the bond to the zero site on each side,
    // which contributes nothing.
    for pair in u.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        quintic += a.powi(5) * b;
        power += b * a * (abs_pow(a * a, params.p) - abs_pow(b * b, params.p));
    }
    TailConstraint {
        quintic_sum: quintic,
        power_sum: power,
        combination: 0.25 * params.h * params.h * quintic + params.lambda * power,
    }
}

/// Continuum soliton `Q(x) = (Omega (p+1)/lambda)^{1/(2p)} sech^{1/p}(p sqrt(Omega) x)`,
/// the even decaying solution of `Q'' - Omega Q + lambda Q^{2p+1} = 0`.
pub fn continuum_soliton(x: f64, params: &ModelParams) -> f64 {
    let amplitude = (params.omega * (params.p + 1.0) / params.lambda).powf(0.5 / params.p);
    let arg = params.p * params.omega.sqrt() * x;
    amplitude * (1.0 / arg.cosh()).powf(1.0 / params.p)
}

/// `Q(h n)` on the window.
pub fn sampled_soliton(window: LatticeWindow, params: &ModelParams) -> Result<RealField> {
    let window = window.with_spacing(params.h)?;
    RealField::from_fn(window, |n| continuum_soliton(params.h * n as f64, params))
}
