//! Continuation of stationary branches in the lattice spacing `h`.
//!
//! Two traversals are provided. [`natural_continue`] steps `h` directly and
//! warm-starts Newton from the previous state; it necessarily stops at a
//! fold. [`arclength_continue`] works on the extended unknown `(U, h)` with a
//! tangent predictor and a corrector bordered by the arclength condition, and
//! walks around folds. Arclength uses the relative inner product
//! `<a, b> = a_U . b_U / |U|^2 + a_h b_h / h^2`, with `|U|` and `h` taken at
//! the base point of each step, so step lengths are dimensionless.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};
use crate::lattice::{ModelParams, RealField};
use crate::stationary::{
    expansion_needed, newton_solve, residual_h_derivative, solve_dense, stationary_jacobian, stationary_residual,
    NewtonOptions, SeedKind, StationaryState,
};

/// Step-size policy shared by both traversals. Natural steps are fractions
/// of the current `h`; arclength steps are lengths in the relative metric,
/// where a pure `h` step of length `s` changes `h` by `s h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub initial_fraction: f64,
    pub min_fraction: f64,
    pub max_fraction: f64,
    /// Double the step after this many consecutive acceptances.
    pub grow_after: usize,
    /// Natural steps are rejected when `|U_new - U_old|_inf` exceeds this
    /// multiple of `|U_old|_inf`.
    pub max_relative_jump: f64,
    /// Arclength steps are rejected when consecutive unit tangents are less
    /// aligned than this cosine.
    pub min_tangent_cos: f64,
    pub corrector_max_iter: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            initial_fraction: 0.1,
            min_fraction: 1e-6,
            max_fraction: 0.25,
            grow_after: 4,
            max_relative_jump: 0.5,
            min_tangent_cos: 0.95,
            corrector_max_iter: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub h: f64,
    pub state: StationaryState,
    pub mass: f64,
    pub arc_param: f64,
    /// `dh/ds` of the unit tangent.
    pub tangent_dh: f64,
    /// `dU/ds` of the unit tangent (same window as `state.u`).
    pub tangent_u: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldSide {
    /// The branch turns back towards larger `h`.
    Lower,
    /// The branch turns back towards smaller `h`.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub h: f64,
    pub mass: f64,
    pub side: FoldSide,
    /// Index of the last branch point before the fold.
    pub after_point: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    ReachedTarget,
    /// Step shrank below the floor without an acceptable solution.
    StepFloor,
    OutOfRange,
    MaxPoints,
    FoldLimit,
    WindowLimit,
    /// Returned to the start state after going round a closed loop.
    ClosedLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub reason: TerminationReason,
    pub h: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub folds: Vec<Fold>,
    pub seed_kind: SeedKind,
    pub params: ModelParams,
    pub termination: Option<Termination>,
}

impl Branch {
    /// First refined fold location.
    pub fn fold_h(&self) -> Option<f64> {
        self.folds.first().map(|f| f.h)
    }

    pub fn h_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.h), hi.max(p.h))
            })
    }

    pub fn last(&self) -> Option<&BranchPoint> {
        self.points.last()
    }
}

fn l2_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Field weight `|U|` used by the arclength metric; 1 for the zero profile.
fn field_scale(u: &[f64]) -> f64 {
    let s = l2_sq(u).sqrt();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Weights of the arclength inner product at a base point.
#[derive(Debug, Clone, Copy)]
struct Metric {
    u: f64,
    h: f64,
}

impl Metric {
    fn at(u: &[f64], h: f64) -> Self {
        Self { u: field_scale(u), h }
    }

    fn dot(&self, au: &[f64], ah: f64, bu: &[f64], bh: f64) -> f64 {
        au.iter().zip(bu).map(|(a, b)| a * b).sum::<f64>() / (self.u * self.u) + ah * bh / (self.h * self.h)
    }

    fn norm(&self, du: &[f64], dh: f64) -> f64 {
        self.dot(du, dh, du, dh).sqrt()
    }
}

fn point(state: StationaryState, arc_param: f64, tangent_u: Vec<f64>, tangent_dh: f64) -> BranchPoint {
    BranchPoint {
        h: state.params.h,
        mass: state.mass(),
        state,
        arc_param,
        tangent_dh,
        tangent_u,
    }
}

/// Step `h` from the start state towards `h_target`, warm-starting Newton
/// from the previous state (secant-extrapolated once two points exist).
pub fn natural_continue(
    start: &StationaryState,
    h_target: f64,
    control: &StepControl,
    newton: &NewtonOptions,
) -> Result<Branch> {
    if !start.converged {
        return Err(LatticeError::Parameter {
            name: "start",
            value: start.residual_linf,
            reason: "continuation needs a converged start state",
        });
    }
    if !(h_target > 0.0 && h_target.is_finite()) {
        return Err(LatticeError::Parameter {
            name: "h_target",
            value: h_target,
            reason: "must be positive and finite",
        });
    }
    let direction = if h_target >= start.params.h { 1.0 } else { -1.0 };
    let mut branch = Branch {
        points: vec![point(start.clone(), 0.0, vec![0.0; start.u.len()], direction)],
        folds: Vec::new(),
        seed_kind: SeedKind::External,
        params: start.params,
        termination: None,
    };
    let mut current = start.clone();
    let mut previous: Option<StationaryState> = None;
    let mut step = control.initial_fraction * current.params.h;
    let mut streak = 0;
    let mut arc = 0.0;

    loop {
        let h = current.params.h;
        if (h_target - h).abs() <= 1e-14 * h {
            branch.termination = Some(Termination {
                reason: TerminationReason::ReachedTarget,
                h,
                detail: "target reached".into(),
            });
            return Ok(branch);
        }
        let dh = direction * step.min((h_target - h).abs());
        let h_new = h + dh;
        let params = current.params.with_h(h_new)?;
        let guess = match &previous {
            Some(prev) if prev.u.len() == current.u.len() && prev.u.window().n_min == current.u.window().n_min => {
                let ratio = dh / (h - prev.params.h);
                let vals = current
                    .u
                    .values()
                    .iter()
                    .zip(prev.u.values())
                    .map(|(c, p)| c + ratio * (c - p))
                    .collect();
                RealField::new(current.u.window(), vals)?
            }
            _ => current.u.clone(),
        };
        let candidate = newton_solve(&guess, &params, newton)?;
        let accepted = candidate.converged && {
            let base = current.u.padded(
                (current.u.window().n_min - candidate.u.window().n_min) as usize,
                (candidate.u.window().n_max - current.u.window().n_max) as usize,
            );
            let jump: Vec<f64> = candidate
                .u
                .values()
                .iter()
                .zip(base.values())
                .map(|(a, b)| a - b)
                .collect();
            linf(&jump) <= control.max_relative_jump * current.u.linf().max(f64::MIN_POSITIVE)
        };
        if accepted {
            let base = current.u.padded(
                (current.u.window().n_min - candidate.u.window().n_min) as usize,
                (candidate.u.window().n_max - current.u.window().n_max) as usize,
            );
            let du: Vec<f64> = candidate
                .u
                .values()
                .iter()
                .zip(base.values())
                .map(|(a, b)| a - b)
                .collect();
            let ds = Metric::at(base.values(), h).norm(&du, dh);
            arc += ds;
            let tangent_u = du.iter().map(|d| d / ds).collect();
            branch.points.push(point(candidate.clone(), arc, tangent_u, dh / ds));
            // a grown window restarts the extrapolation
            previous = (base.len() == current.u.len()).then_some(current);
            current = candidate;
            streak += 1;
            if streak >= control.grow_after {
                step *= 2.0;
                streak = 0;
            }
            step = step.min(control.max_fraction * current.params.h);
        } else {
            step *= 0.5;
            streak = 0;
            if step < control.min_fraction * h {
                let detail = match candidate.failure {
                    Some(f) => format!("newton failed near h = {h_new}: {f}"),
                    None => format!("solution jumped near h = {h_new}"),
                };
                branch.termination = Some(Termination {
                    reason: TerminationReason::StepFloor,
                    h,
                    detail,
                });
                return Ok(branch);
            }
        }
    }
}

/// Direction of the initial arclength tangent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    DecreasingH,
    IncreasingH,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::DecreasingH => -1.0,
            Direction::IncreasingH => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArclengthOptions {
    pub direction: Direction,
    pub h_min: f64,
    pub h_max: f64,
    pub max_points: usize,
    /// Stop once this many folds have been passed.
    pub max_folds: Option<usize>,
}

impl Default for ArclengthOptions {
    fn default() -> Self {
        Self {
            direction: Direction::DecreasingH,
            h_min: 1e-3,
            h_max: 1e3,
            max_points: 2000,
            max_folds: None,
        }
    }
}

/// Unit tangent at `(u, h)`: null direction of `[J | F_h]`, fixed by the
/// bordering row `(border_u, border_h)`, a direction in physical units.
/// Normalised in `metric`.
fn tangent_at(
    u: &[f64],
    params: &ModelParams,
    metric: Metric,
    border_u: &[f64],
    border_h: f64,
    pivot_limit: f64,
) -> Option<(Vec<f64>, f64)> {
    let n = u.len();
    let jac = stationary_jacobian(u, params);
    let fh = residual_h_derivative(u, params);
    let mut m = DMatrix::zeros(n + 1, n + 1);
    // scaled unknowns z = U / metric.u, eta = h / metric.h
    m.view_mut((0, 0), (n, n)).copy_from(&(jac * metric.u));
    for i in 0..n {
        m[(i, n)] = fh[i] * metric.h;
        m[(n, i)] = border_u[i] / metric.u;
    }
    m[(n, n)] = border_h / metric.h;
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = 1.0;
    let t = solve_dense(m, &rhs, pivot_limit).ok()?;
    let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    let along = t[..n].iter().zip(border_u).map(|(a, b)| a * b / metric.u).sum::<f64>() + t[n] * border_h / metric.h;
    let sign = if along < 0.0 { -1.0 } else { 1.0 };
    let tu = t[..n].iter().map(|x| sign * x * metric.u / norm).collect();
    Some((tu, sign * t[n] * metric.h / norm))
}

struct Corrected {
    u: Vec<f64>,
    h: f64,
    residual: f64,
}

/// Newton corrector for `F(U, h) = 0` plus the arclength condition
/// `<tau, (U, h) - base> = ds`, starting from the tangent predictor.
#[allow(clippy::too_many_arguments)]
fn correct(
    base_u: &[f64],
    base_h: f64,
    params: &ModelParams,
    tau_u: &[f64],
    tau_h: f64,
    metric: Metric,
    ds: f64,
    newton: &NewtonOptions,
    max_iter: usize,
) -> Option<Corrected> {
    let n = base_u.len();
    let mut u: Vec<f64> = base_u.iter().zip(tau_u).map(|(b, t)| b + ds * t).collect();
    let mut h = base_h + ds * tau_h;
    let inv_u2 = 1.0 / (metric.u * metric.u);
    let inv_h2 = 1.0 / (metric.h * metric.h);
    for _ in 0..=max_iter {
        if h.is_nan() || h <= 0.0 {
            return None;
        }
        let prm = ModelParams { h, ..*params };
        let f = stationary_residual(&u, &prm);
        let arc = u
            .iter()
            .zip(base_u)
            .zip(tau_u)
            .map(|((x, b), t)| (x - b) * t * inv_u2)
            .sum::<f64>()
            + (h - base_h) * tau_h * inv_h2
            - ds;
        let r = linf(&f);
        if !r.is_finite() {
            return None;
        }
        if r <= newton.tol && arc.abs() <= 1e-12 * ds.abs().max(1e-12) {
            return Some(Corrected { u, h, residual: r });
        }
        let jac = stationary_jacobian(&u, &prm);
        let fh = residual_h_derivative(&u, &prm);
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&jac);
        for i in 0..n {
            m[(i, n)] = fh[i];
            m[(n, i)] = tau_u[i] * inv_u2;
        }
        m[(n, n)] = tau_h * inv_h2;
        let mut rhs = f;
        rhs.push(arc);
        let delta = solve_dense(m, &rhs, newton.pivot_ratio_limit).ok()?;
        for (x, d) in u.iter_mut().zip(&delta) {
            *x -= d;
        }
        h -= delta[n];
    }
    None
}

/// Refine a fold between `base` and the next branch point by bisection on
/// the sign of `dh/ds` along the arclength, to relative accuracy `rel_tol` in `h`.
fn refine_fold(
    base: &BranchPoint,
    ds_total: f64,
    params: &ModelParams,
    newton: &NewtonOptions,
    control: &StepControl,
    rel_tol: f64,
) -> Option<(f64, f64)> {
    let u0 = base.state.u.values();
    let metric = Metric::at(u0, base.h);
    let tau_u = &base.tangent_u;
    let sign0 = base.tangent_dh.signum();
    let (mut lo, mut hi) = (0.0, ds_total);
    let mut last = (base.h, base.mass);
    let mut h_lo = base.h;
    let mut h_hi = f64::NAN;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let c = correct(
            u0,
            base.h,
            params,
            tau_u,
            base.tangent_dh,
            metric,
            mid,
            newton,
            control.corrector_max_iter * 2,
        )?;
        let prm = ModelParams { h: c.h, ..*params };
        let (_, th) = tangent_at(&c.u, &prm, metric, tau_u, base.tangent_dh, newton.pivot_ratio_limit)?;
        last = (c.h, prm.h * l2_sq(&c.u));
        if th.signum() == sign0 {
            lo = mid;
            h_lo = c.h;
        } else {
            hi = mid;
            h_hi = c.h;
        }
        if h_hi.is_finite() && (h_hi - h_lo).abs() <= rel_tol * c.h && hi - lo <= 1e-6 * ds_total {
            break;
        }
    }
    Some(last)
}

/// Pseudo-arclength continuation from a converged state.
pub fn arclength_continue(
    start: &StationaryState,
    options: &ArclengthOptions,
    control: &StepControl,
    newton: &NewtonOptions,
) -> Result<Branch> {
    if !start.converged {
        return Err(LatticeError::Parameter {
            name: "start",
            value: start.residual_linf,
            reason: "continuation needs a converged start state",
        });
    }
    let params = start.params;
    let mut branch = Branch {
        points: Vec::new(),
        folds: Vec::new(),
        seed_kind: SeedKind::External,
        params,
        termination: None,
    };
    let u0 = start.u.values();
    let initial = tangent_at(
        u0,
        &params,
        Metric::at(u0, params.h),
        &vec![0.0; u0.len()],
        options.direction.sign(),
        newton.pivot_ratio_limit,
    );
    let Some((tu, th)) = initial else {
        branch.points.push(point(start.clone(), 0.0, vec![0.0; u0.len()], 0.0));
        branch.termination = Some(Termination {
            reason: TerminationReason::StepFloor,
            h: params.h,
            detail: "no tangent at the start state (singular bordered system)".into(),
        });
        return Ok(branch);
    };
    branch.points.push(point(start.clone(), 0.0, tu, th));

    let mut ds = control.initial_fraction;
    let mut streak = 0;
    let stop = |branch: &mut Branch, reason: TerminationReason, detail: String| {
        let h = branch.last().map_or(params.h, |p| p.h);
        branch.termination = Some(Termination { reason, h, detail });
    };

    loop {
        let base = branch.points.last().expect("branch has a start point").clone();
        if branch.points.len() >= options.max_points {
            let detail = format!("{} points", branch.points.len());
            stop(&mut branch, TerminationReason::MaxPoints, detail);
            return Ok(branch);
        }
        ds = ds.min(control.max_fraction);
        let base_u = base.state.u.values();
        let metric = Metric::at(base_u, base.h);

        let attempt = correct(
            base_u,
            base.h,
            &params,
            &base.tangent_u,
            base.tangent_dh,
            metric,
            ds,
            newton,
            control.corrector_max_iter,
        )
        .and_then(|c| {
            let prm = ModelParams { h: c.h, ..params };
            let (tu, th) = tangent_at(
                &c.u,
                &prm,
                metric,
                &base.tangent_u,
                base.tangent_dh,
                newton.pivot_ratio_limit,
            )?;
            let cos = metric.dot(&tu, th, &base.tangent_u, base.tangent_dh);
            (cos >= control.min_tangent_cos).then_some((c, tu, th))
        });

        let Some((c, tu, th)) = attempt else {
            ds *= 0.5;
            streak = 0;
            if ds < control.min_fraction {
                stop(
                    &mut branch,
                    TerminationReason::StepFloor,
                    format!("corrector failed below the step floor near h = {}", base.h),
                );
                return Ok(branch);
            }
            continue;
        };

        let prm = ModelParams { h: c.h, ..params };
        let mut field = RealField::new(base.state.u.window().with_spacing(c.h)?, c.u)?;
        let mut tangent_u = tu;
        // renormalise for the new point's own metric
        let norm = Metric::at(field.values(), c.h).norm(&tangent_u, th);
        tangent_u.iter_mut().for_each(|t| *t /= norm);
        let tangent_dh = th / norm;

        let (left, right) = if newton.expand_window {
            expansion_needed(field.values(), newton.boundary_threshold)
        } else {
            (0, 0)
        };
        if left + right > 0 {
            if field.len() + left + right > newton.max_sites {
                stop(
                    &mut branch,
                    TerminationReason::WindowLimit,
                    format!("window limit of {} sites", newton.max_sites),
                );
                return Ok(branch);
            }
            field = field.padded(left, right);
            let mut padded = vec![0.0; left];
            padded.extend_from_slice(&tangent_u);
            padded.extend(std::iter::repeat_n(0.0, right));
            tangent_u = padded;
        }
        let state = if left + right > 0 {
            // zero padding perturbs the edges; polish at fixed h
            let fixed = NewtonOptions {
                expand_window: false,
                ..*newton
            };
            newton_solve(&field, &prm, &fixed)?
        } else {
            let mut state = StationaryState::evaluate(field, prm, 0, newton.tol);
            state.converged = state.residual_linf <= newton.tol.max(c.residual);
            state
        };
        let arc = base.arc_param + ds;
        branch.points.push(point(state, arc, tangent_u, tangent_dh));

        if tangent_dh.signum() != base.tangent_dh.signum() {
            let side = if base.tangent_dh < 0.0 {
                FoldSide::Lower
            } else {
                FoldSide::Upper
            };
            let (h_fold, mass) = refine_fold(&base, ds, &params, newton, control, 1e-8)
                .unwrap_or((c.h, branch.points.last().map_or(0.0, |p| p.mass)));
            branch.folds.push(Fold {
                h: h_fold,
                mass,
                side,
                after_point: branch.points.len() - 2,
            });
            if options.max_folds.is_some_and(|m| branch.folds.len() >= m) {
                let detail = format!("{} folds passed", branch.folds.len());
                stop(&mut branch, TerminationReason::FoldLimit, detail);
                return Ok(branch);
            }
        }
        if branch.folds.len() >= 2 && returned_to_start(&branch) {
            let detail = format!("loop closed after {} folds", branch.folds.len());
            stop(&mut branch, TerminationReason::ClosedLoop, detail);
            return Ok(branch);
        }
        if c.h < options.h_min || c.h > options.h_max {
            stop(
                &mut branch,
                TerminationReason::OutOfRange,
                format!("h = {} left [{}, {}]", c.h, options.h_min, options.h_max),
            );
            return Ok(branch);
        }
        streak += 1;
        if streak >= control.grow_after {
            ds *= 2.0;
            streak = 0;
        }
    }
}

/// Whether the last segment passes back through the start point in the
/// start direction; mass and peak are interpolated linearly in `h`.
fn returned_to_start(branch: &Branch) -> bool {
    let [first, ..] = branch.points.as_slice() else {
        return false;
    };
    let [.., a, b] = branch.points.as_slice() else {
        return false;
    };
    let h0 = first.h;
    if (a.h - h0) * (b.h - h0) > 0.0 || b.tangent_dh.signum() != first.tangent_dh.signum() {
        return false;
    }
    let t = if b.h == a.h { 0.0 } else { (h0 - a.h) / (b.h - a.h) };
    let lerp = |x: f64, y: f64| x + t * (y - x);
    let peak = |p: &BranchPoint| p.state.u.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-2 * y.abs().max(1e-12);
    close(lerp(a.mass, b.mass), first.mass) && close(lerp(peak(a), peak(b)), peak(first))
}

/// First fold of each side on two branches, and whether they coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMatch {
    pub side: FoldSide,
    pub first: Option<f64>,
    pub second: Option<f64>,
    pub matched: bool,
}

/// Do two branches meet at the same folds? Branches that truly connect
/// share their fold locations; a mismatch on one side means at least one of
/// them turns onto some other family of states there.
pub fn compare_folds(a: &Branch, b: &Branch, rel_tol: f64) -> [FoldMatch; 2] {
    [FoldSide::Lower, FoldSide::Upper].map(|side| {
        let first_on = |br: &Branch| br.folds.iter().find(|f| f.side == side).map(|f| f.h);
        let (first, second) = (first_on(a), first_on(b));
        let matched = match (first, second) {
            (Some(x), Some(y)) => (x - y).abs() <= rel_tol * x.abs().max(y.abs()),
            _ => false,
        };
        FoldMatch {
            side,
            first,
            second,
            matched,
        }
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FoldError {
    #[error("branch has no sign change of dh/ds")]
    NoFold,
    #[error("fold refinement failed between points {0} and {1}")]
    Refinement(usize, usize),
}

/// Critical `h` of the first fold on `branch`.
///
/// Uses the refined folds recorded during traversal; otherwise scans the
/// branch for a sign change of `dh/ds` and refines it.
pub fn locate_fold(branch: &Branch, newton: &NewtonOptions) -> std::result::Result<f64, FoldError> {
    if let Some(h) = branch.fold_h() {
        return Ok(h);
    }
    let i = branch
        .points
        .windows(2)
        .position(|w| w[0].tangent_dh.signum() != w[1].tangent_dh.signum())
        .ok_or(FoldError::NoFold)?;
    let (a, b) = (&branch.points[i], &branch.points[i + 1]);
    refine_fold(
        a,
        b.arc_param - a.arc_param,
        &branch.params,
        newton,
        &StepControl::default(),
        1e-8,
    )
    .map(|(h, _)| h)
    .ok_or(FoldError::Refinement(i, i + 1))
}

/// Named choices of the scaling exponent `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingPreset {
    /// `a = 1/(2 - p)`: both nonlinear terms scale alike (`p != 2`).
    Critical,
    /// `a = 1`.
    Unit,
    /// `a = -1`.
    Inverse,
}

impl ScalingPreset {
    pub fn exponent(self, p: f64) -> Result<f64> {
        match self {
            ScalingPreset::Critical if p == 2.0 => Err(LatticeError::Parameter {
                name: "p",
                value: p,
                reason: "critical scaling exponent undefined at p = 2",
            }),
            ScalingPreset::Critical => Ok(1.0 / (2.0 - p)),
            ScalingPreset::Unit => Ok(1.0),
            ScalingPreset::Inverse => Ok(-1.0),
        }
    }
}

/// Coefficients of the rescaled stationary equation
/// `c_lap (U~_{n+1} - 2U~_n + U~_{n-1}) - Omega~ U~_n + c_pot G~_n U~_n + lambda |U~_n|^{2p} U~_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledCoefficients {
    pub laplacian: f64,
    pub omega: f64,
    pub potential: f64,
}

pub fn scaled_coefficients(params: &ModelParams, a: f64) -> ScaledCoefficients {
    let (h, p) = (params.h, params.p);
    ScaledCoefficients {
        laplacian: h.powf(-2.0 * (1.0 - a * p)),
        omega: h.powf(2.0 * a * p) * params.omega,
        potential: h.powf(2.0 + 2.0 * a * (p - 2.0)),
    }
}

/// `U~ = h^a U`, `G~ = h^{4a-2} G`.
pub fn scale_solution(u: &[f64], g: &[f64], h: f64, a: f64) -> (Vec<f64>, Vec<f64>) {
    let su = h.powf(a);
    let sg = h.powf(4.0 * a - 2.0);
    (u.iter().map(|x| su * x).collect(), g.iter().map(|x| sg * x).collect())
}

/// Residual of the rescaled first equation for given `U~`, `G~`.
pub fn scaled_system_residual(u_tilde: &[f64], g_tilde: &[f64], params: &ModelParams, a: f64) -> Vec<f64> {
    let c = scaled_coefficients(params, a);
    let n = u_tilde.len();
    (0..n)
        .map(|i| {
            let prev = if i > 0 { u_tilde[i - 1] } else { 0.0 };
            let next = if i + 1 < n { u_tilde[i + 1] } else { 0.0 };
            let x = u_tilde[i];
            c.laplacian * (next - 2.0 * x + prev) - c.omega * x
                + c.potential * g_tilde[i] * x
                + params.lambda * crate::lattice::abs_pow(x * x, params.p) * x
        })
        .collect()
}

/// Residual of `G~_{n+1} - G~_n + |U~_n|^4 / 4`, with `G~` tending to `gamma_tilde`.
pub fn scaled_potential_residual(u_tilde: &[f64], g_tilde: &[f64], gamma_tilde: f64) -> Vec<f64> {
    (0..u_tilde.len())
        .map(|i| {
            let next = g_tilde.get(i + 1).copied().unwrap_or(gamma_tilde);
            next - g_tilde[i] + 0.25 * u_tilde[i].powi(4)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeWindow;

    fn synthetic_point(h: f64, dh: f64) -> BranchPoint {
        let prm = ModelParams::new(1.0, 1.0, 1.0, h).unwrap();
        let w = LatticeWindow::centered(3, h).unwrap();
        let state = StationaryState::evaluate(RealField::zeros(w), prm, 0, 1e-12);
        point(state, h, vec![0.0; 7], dh)
    }

    #[test]
    fn monotone_branch_has_no_fold() {
        let prm = ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let branch = Branch {
            points: (1..6).map(|k| synthetic_point(k as f64, 1.0)).collect(),
            folds: vec![],
            seed_kind: SeedKind::SingleSite,
            params: prm,
            termination: None,
        };
        assert_eq!(locate_fold(&branch, &NewtonOptions::default()), Err(FoldError::NoFold));
    }

    #[test]
    fn zero_branch_continues_trivially() {
        let prm = ModelParams::new(1.0, 1.0, 1.0, 2.0).unwrap();
        let w = LatticeWindow::centered(5, 2.0).unwrap();
        let start = StationaryState::evaluate(RealField::zeros(w), prm, 0, 1e-12);
        let branch = natural_continue(&start, 0.5, &StepControl::default(), &NewtonOptions::default()).unwrap();
        assert_eq!(
            branch.termination.as_ref().unwrap().reason,
            TerminationReason::ReachedTarget
        );
        assert!(branch.points.iter().all(|p| p.mass == 0.0));
        assert!((branch.last().unwrap().h - 0.5).abs() < 1e-12);
    }

    #[test]
    fn critical_exponent_undefined_at_two() {
        assert!(ScalingPreset::Critical.exponent(2.0).is_err());
        assert_eq!(ScalingPreset::Critical.exponent(1.5).unwrap(), 2.0);
    }

    #[test]
    fn unit_scaling_cubic_is_plain_lattice() {
        let prm = ModelParams::new(1.0, 1.0, 3.0, 2.5).unwrap();
        let c = scaled_coefficients(&prm, 1.0);
        assert_eq!(c.laplacian, 1.0);
        assert_eq!(c.potential, 1.0);
        assert!((c.omega - 2.5 * 2.5 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn quintic_coefficient_patterns() {
        let h = 1.7_f64;
        let prm = ModelParams::new(1.0, 2.0, 1.0, h).unwrap();
        let unit = scaled_coefficients(&prm, 1.0);
        assert!((unit.laplacian - h * h).abs() < 1e-12);
        assert!((unit.potential - h * h).abs() < 1e-12);
        let inverse = scaled_coefficients(&prm, -1.0);
        assert!((inverse.laplacian - h.powi(-6)).abs() < 1e-12);
        assert!((inverse.potential - h * h).abs() < 1e-12);
        let prm = ModelParams::new(1.0, 1.5, 1.0, h).unwrap();
        let crit = scaled_coefficients(&prm, ScalingPreset::Critical.exponent(1.5).unwrap());
        assert!((crit.laplacian - h.powf(4.0 * 0.5 / 0.5)).abs() < 1e-12);
        assert!((crit.potential - 1.0).abs() < 1e-12);
    }
}
