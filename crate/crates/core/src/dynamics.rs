//! Time evolution of the reduced system
//! `i d_t phi + D- D+ phi + g phi + lambda |phi|^{2p} phi = 0`, where `g` is
//! rebuilt from `phi` at every stage.
//!
//! Alongside `phi` the integrator carries `a2` driven by its own evolution
//! equation `d_t a2(n) = -Im(conj(phi(n-1)) D+ phi(n-1))`. The constraint
//! `grad+ a2 = |phi|^2 / 2` is then an honest output of the flow rather than
//! an identity of the reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::EvolutionError;
use crate::gauge::{reconstruct_a2, reconstruct_g};
use crate::lattice::{
    abs_pow, discrete_laplacian, forward_difference_with_tail, linf_norm, mass, ComplexField, ModelParams, C64,
};

/// Adaptive integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub t_end: f64,
    pub dt_initial: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub record_every: f64,
    /// Cap `dt <= stability_factor * h^2`.
    #[serde(default = "default_stability_factor")]
    pub stability_factor: f64,
}

fn default_stability_factor() -> f64 {
    0.5
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            dt_initial: 1e-3,
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            record_every: 0.5,
            stability_factor: default_stability_factor(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.t_end) {
            return Err(EvolutionError::Config("t_end must be positive"));
        }
        if !ok(self.dt_initial) {
            return Err(EvolutionError::Config("dt_initial must be positive"));
        }
        if !ok(self.abs_tol) || !ok(self.rel_tol) {
            return Err(EvolutionError::Config("tolerances must be positive"));
        }
        if !ok(self.record_every) {
            return Err(EvolutionError::Config("record_every must be positive"));
        }
        if !ok(self.stability_factor) {
            return Err(EvolutionError::Config("stability_factor must be positive"));
        }
        Ok(())
    }
}

/// Diagnostics sampled every `record_every`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub mass_series: Vec<f64>,
    /// l-inf of `grad+ a2 - |phi|^2/2` with `a2` reconstructed from the snapshot.
    pub constraint_series: Vec<f64>,
    /// Same residual with `a2` carried by its own evolution equation.
    pub evolved_constraint_series: Vec<f64>,
    pub snapshots: Vec<(f64, ComplexField)>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl EvolutionTrace {
    /// `max_t |M(t) - M(0)| / M(0)`; absolute drift when `M(0) = 0`.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.mass_series.first().copied().unwrap_or(0.0);
        let scale = if m0 > 0.0 { m0 } else { 1.0 };
        self.mass_series
            .iter()
            .map(|m| (m - m0).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn final_state(&self) -> Option<&ComplexField> {
        self.snapshots.last().map(|(_, f)| f)
    }
}

/// `d_t phi = i (D- D+ phi + g phi + lambda |phi|^{2p} phi)` with `a1 = 0`.
pub fn rhs(phi: &[C64], params: &ModelParams) -> Vec<C64> {
    let h = params.h;
    let lap = discrete_laplacian(phi, h);
    let g = reconstruct_g(phi, params.gamma, h);
    phi.iter()
        .zip(lap.iter().zip(&g))
        .map(|(&z, (&l, &gn))| {
            let local = gn + params.lambda * abs_pow(z.norm_sqr(), params.p);
            C64::i() * (l + z * local)
        })
        .collect()
}

/// `d_t a2(n) = -Im(conj(phi(n-1)) phi(n)) / h` in the spatial gauge.
fn a2_rate(phi: &[C64], h: f64) -> Vec<f64> {
    (0..phi.len())
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                -(phi[i - 1].conj() * phi[i]).im / h
            }
        })
        .collect()
}

/// l-inf of `grad+ a2 - |phi|^2 / 2`.
pub fn density_constraint_linf(phi: &[C64], a2: &[f64], beta: f64, h: f64) -> f64 {
    forward_difference_with_tail(a2, beta, h)
        .iter()
        .zip(phi)
        .map(|(d, z)| (d - 0.5 * z.norm_sqr()).abs())
        .fold(0.0, f64::max)
}

/// Integration state: the scalar field and the independently evolved `a2`.
#[derive(Clone)]
struct State {
    phi: Vec<C64>,
    a2: Vec<f64>,
}

impl State {
    fn derivative(&self, params: &ModelParams) -> State {
        State {
            phi: rhs(&self.phi, params),
            a2: a2_rate(&self.phi, params.h),
        }
    }

    fn combine(&self, dt: f64, stages: &[State], weights: &[f64]) -> State {
        let mut out = self.clone();
        for (k, &w) in stages.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let s = dt * w;
            for (o, d) in out.phi.iter_mut().zip(&k.phi) {
                *o += d * s;
            }
            for (o, d) in out.a2.iter_mut().zip(&k.a2) {
                *o += d * s;
            }
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.phi.iter().all(|z| z.re.is_finite() && z.im.is_finite()) && self.a2.iter().all(|v| v.is_finite())
    }
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand-Prince step; returns the 5th-order state and the embedded error estimate.
fn dp_step(y: &State, dt: f64, params: &ModelParams) -> (State, State) {
    let mut stages: Vec<State> = Vec::with_capacity(7);
    stages.push(y.derivative(params));
    for row in A.iter().skip(1) {
        let stage = y.combine(dt, &stages, row);
        stages.push(stage.derivative(params));
    }
    let next = y.combine(dt, &stages, &B5);
    let weights: Vec<f64> = B5.iter().zip(&B4).map(|(a, b)| a - b).collect();
    let zero = State {
        phi: vec![C64::default(); y.phi.len()],
        a2: vec![0.0; y.a2.len()],
    };
    let err = zero.combine(dt, &stages, &weights);
    (next, err)
}

fn error_norm(err: &State, y0: &State, y1: &State, cfg: &EvolutionConfig) -> f64 {
    let phi = err
        .phi
        .iter()
        .zip(y0.phi.iter().zip(&y1.phi))
        .map(|(e, (a, b))| e.norm() / (cfg.abs_tol + cfg.rel_tol * a.norm().max(b.norm())));
    let a2 = err
        .a2
        .iter()
        .zip(y0.a2.iter().zip(&y1.a2))
        .map(|(e, (a, b))| e.abs() / (cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs())));
    phi.chain(a2).fold(0.0, f64::max)
}

/// Adaptive Dormand-Prince integration from `phi0` to `config.t_end`.
pub fn integrate(
    phi0: &ComplexField,
    params: &ModelParams,
    config: &EvolutionConfig,
) -> Result<EvolutionTrace, EvolutionError> {
    config.validate()?;
    params.validate()?;
    let h = params.h;
    let window = phi0.window().with_spacing(h)?;
    let beta = 0.0;
    let mut y = State {
        phi: phi0.values().to_vec(),
        a2: reconstruct_a2(phi0.values(), beta, h),
    };
    let dt_cap = config.stability_factor * h * h;
    let mut dt = config.dt_initial.min(dt_cap);
    let mut t = 0.0;

    let mut trace = EvolutionTrace {
        times: Vec::new(),
        mass_series: Vec::new(),
        constraint_series: Vec::new(),
        evolved_constraint_series: Vec::new(),
        snapshots: Vec::new(),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let record = |t: f64, y: &State, trace: &mut EvolutionTrace| -> Result<(), EvolutionError> {
        let recon = reconstruct_a2(&y.phi, beta, h);
        trace.times.push(t);
        trace.mass_series.push(mass(&y.phi, h));
        trace
            .constraint_series
            .push(density_constraint_linf(&y.phi, &recon, beta, h));
        trace
            .evolved_constraint_series
            .push(density_constraint_linf(&y.phi, &y.a2, beta, h));
        trace.snapshots.push((t, ComplexField::new(window, y.phi.clone())?));
        Ok(())
    };
    record(0.0, &y, &mut trace)?;

    let mut next_record = config.record_every.min(config.t_end);
    while t < config.t_end {
        let target = next_record.min(config.t_end);
        let step = dt.min(target - t);
        let (candidate, err) = dp_step(&y, step, params);
        if !candidate.is_finite() {
            return Err(EvolutionError::NonFinite(t));
        }
        let norm = error_norm(&err, &y, &candidate, config);
        if norm <= 1.0 {
            t = if step == target - t { target } else { t + step };
            y = candidate;
            trace.accepted_steps += 1;
            if t >= target {
                record(t, &y, &mut trace)?;
                next_record = (target + config.record_every).min(config.t_end);
            }
        } else {
            trace.rejected_steps += 1;
        }
        let factor = if norm == 0.0 {
            5.0
        } else {
            (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        // a shortened landing step says nothing about the natural step size
        if norm > 1.0 || step >= dt {
            dt = (step * factor).min(dt_cap);
        }
        if dt < 1e-14 * t.abs().max(1.0) {
            return Err(EvolutionError::StepUnderflow { t, dt });
        }
    }
    Ok(trace)
}

/// Fixed-step integration with the 5th-order Dormand-Prince solution.
pub fn integrate_fixed(
    phi0: &ComplexField,
    params: &ModelParams,
    dt: f64,
    steps: usize,
) -> Result<ComplexField, EvolutionError> {
    params.validate()?;
    let mut y = State {
        phi: phi0.values().to_vec(),
        a2: vec![0.0; phi0.len()],
    };
    for k in 0..steps {
        y = dp_step(&y, dt, params).0;
        if !y.is_finite() {
            return Err(EvolutionError::NonFinite(k as f64 * dt));
        }
    }
    Ok(ComplexField::new(phi0.window(), y.phi)?)
}

/// l-inf over sites of the discrete balance law
/// `1/2 d_t |phi|^2 + grad+ Im(conj(phi(n-1)) D+ phi(n-1)) = 0`, with the time
/// derivative replaced by a forward difference between two snapshots.
pub fn balance_residual(before: &[C64], after: &[C64], dt: f64, h: f64) -> f64 {
    let n = before.len();
    let flux: Vec<f64> = (0..n)
        .map(|i| {
            let next = if i + 1 < n { before[i + 1] } else { C64::default() };
            (before[i].conj() * (next - before[i]) / h).im
        })
        .collect();
    let residual: Vec<f64> = (0..n)
        .map(|i| {
            let dens = (after[i].norm_sqr() - before[i].norm_sqr()) / (2.0 * dt);
            let prev = if i > 0 { flux[i - 1] } else { 0.0 };
            dens + (flux[i] - prev) / h
        })
        .collect();
    linf_norm(&residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeWindow;

    fn params(h: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, h).unwrap()
    }

    #[test]
    fn rhs_zero_field() {
        let phi = vec![C64::default(); 7];
        assert!(rhs(&phi, &params(1.0)).iter().all(|z| *z == C64::default()));
    }

    #[test]
    fn rhs_single_site_hand_values() {
        let a: f64 = 0.9;
        let mut phi = vec![C64::default(); 5];
        phi[2] = C64::new(a, 0.0);
        let d = rhs(&phi, &params(1.0));
        let centre = -2.0 * a + a.powi(4) / 4.0 * a + a.powi(3);
        assert!((d[2] - C64::new(0.0, centre)).norm() < 1e-15);
        assert!((d[1] - C64::new(0.0, a)).norm() < 1e-15);
        assert!((d[3] - C64::new(0.0, a)).norm() < 1e-15);
        assert_eq!(d[0], C64::default());
    }

    #[test]
    fn zero_field_stays_zero() {
        let w = LatticeWindow::centered(5, 1.0).unwrap();
        let cfg = EvolutionConfig {
            t_end: 2.0,
            ..Default::default()
        };
        let trace = integrate(&ComplexField::zeros(w), &params(1.0), &cfg).unwrap();
        assert!(trace
            .snapshots
            .iter()
            .all(|(_, f)| f.values().iter().all(|z| *z == C64::default())));
        assert_eq!(trace.mass_drift(), 0.0);
    }

    #[test]
    fn trace_times_strictly_increase_and_hit_end() {
        let w = LatticeWindow::centered(6, 1.0).unwrap();
        let phi = ComplexField::from_fn(w, |n| C64::new((-(n * n) as f64 / 4.0).exp(), 0.0)).unwrap();
        let cfg = EvolutionConfig {
            t_end: 1.3,
            record_every: 0.5,
            ..Default::default()
        };
        let trace = integrate(&phi, &params(1.0), &cfg).unwrap();
        assert_eq!(trace.times, vec![0.0, 0.5, 1.0, 1.3]);
        assert_eq!(trace.mass_series.len(), trace.times.len());
        assert_eq!(trace.constraint_series.len(), trace.times.len());
        assert!(trace.mass_drift() < 1e-9);
    }

    #[test]
    fn invalid_config_rejected() {
        let w = LatticeWindow::centered(3, 1.0).unwrap();
        let cfg = EvolutionConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&ComplexField::zeros(w), &params(1.0), &cfg),
            Err(EvolutionError::Config(_))
        ));
    }

    #[test]
    fn balance_residual_zero_field() {
        let z = vec![C64::default(); 4];
        assert_eq!(balance_residual(&z, &z, 0.1, 1.0), 0.0);
    }

    #[test]
    fn a2_rate_zero_for_real_field() {
        let phi: Vec<C64> = (0..5).map(|k| C64::new(k as f64, 0.0)).collect();
        assert!(a2_rate(&phi, 0.5).iter().all(|&v| v == 0.0));
    }
}
