//! Lattice fields on a finite window and the discrete operators acting on them.
//!
//! The infinite lattice is truncated to sites `n_min..=n_max`; everything
//! outside the window is exactly zero. The half-site potential `a1` is stored
//! per bond, aligned with the left site of the bond, so `a1[k]` lives between
//! sites `n_min + k` and `n_min + k + 1` and a window of `N` sites carries
//! `N - 1` bond values. Gauge fields that tend to a nonzero limit at `+inf`
//! (`a0 -> alpha`, `a2 -> beta`) are padded with that limit instead of zero.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};

pub type C64 = Complex64;

/// Index range and spacing of a truncated lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeWindow {
    pub n_min: i64,
    pub n_max: i64,
    pub h: f64,
}

impl LatticeWindow {
    pub fn new(n_min: i64, n_max: i64, h: f64) -> Result<Self> {
        if n_max - n_min < 2 {
            return Err(LatticeError::Window { n_min, n_max });
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(LatticeError::Spacing(h));
        }
        Ok(Self { n_min, n_max, h })
    }

    /// Symmetric window `[-half_width, half_width]`.
    pub fn centered(half_width: i64, h: f64) -> Result<Self> {
        Self::new(-half_width, half_width, h)
    }

    pub fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn site(&self, index: usize) -> i64 {
        self.n_min + index as i64
    }

    pub fn index(&self, n: i64) -> Option<usize> {
        (self.n_min..=self.n_max)
            .contains(&n)
            .then(|| (n - self.n_min) as usize)
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.n_min..=self.n_max
    }

    pub fn with_spacing(self, h: f64) -> Result<Self> {
        Self::new(self.n_min, self.n_max, h)
    }

    /// Grow the window by `left` sites below and `right` sites above.
    pub fn padded(self, left: usize, right: usize) -> Self {
        Self {
            n_min: self.n_min - left as i64,
            n_max: self.n_max + right as i64,
            h: self.h,
        }
    }
}

/// Scalar types a field may hold.
pub trait FieldValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn is_finite_value(&self) -> bool;
    fn modulus(&self) -> f64;
}

impl FieldValue for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
    fn modulus(&self) -> f64 {
        self.abs()
    }
}

impl FieldValue for C64 {
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn modulus(&self) -> f64 {
        self.norm()
    }
}

/// Values on the sites of a [`LatticeWindow`]; zero outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    window: LatticeWindow,
    values: Vec<T>,
}

pub type ComplexField = Field<C64>;
pub type RealField = Field<f64>;

impl<T: FieldValue> Field<T> {
    pub fn new(window: LatticeWindow, values: Vec<T>) -> Result<Self> {
        if values.len() != window.len() {
            return Err(LatticeError::Length {
                expected: window.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite_value()) {
            return Err(LatticeError::NonFinite(window.site(i)));
        }
        Ok(Self { window, values })
    }

    pub fn zeros(window: LatticeWindow) -> Self {
        Self {
            window,
            values: vec![T::default(); window.len()],
        }
    }

    pub fn from_fn(window: LatticeWindow, mut f: impl FnMut(i64) -> T) -> Result<Self> {
        let values = window.sites().map(&mut f).collect();
        Self::new(window, values)
    }

    pub fn window(&self) -> LatticeWindow {
        self.window
    }

    pub fn h(&self) -> f64 {
        self.window.h
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at site `n`, zero outside the window.
    pub fn at(&self, n: i64) -> T {
        self.window.index(n).map_or_else(T::default, |i| self.values[i])
    }

    /// Zero-pad the field onto a larger window.
    pub fn padded(&self, left: usize, right: usize) -> Self {
        let window = self.window.padded(left, right);
        let mut values = vec![T::default(); window.len()];
        values[left..left + self.values.len()].copy_from_slice(&self.values);
        Self { window, values }
    }

    pub fn with_spacing(&self, h: f64) -> Result<Self> {
        Ok(Self {
            window: self.window.with_spacing(h)?,
            values: self.values.clone(),
        })
    }

    pub fn linf(&self) -> f64 {
        linf_norm(&self.values)
    }

    pub fn l1(&self) -> f64 {
        l1_norm(&self.values)
    }

    pub fn forward_difference(&self) -> Self {
        Self {
            window: self.window,
            values: forward_difference(&self.values, self.window.h),
        }
    }

    pub fn backward_difference(&self) -> Self {
        Self {
            window: self.window,
            values: backward_difference(&self.values, self.window.h),
        }
    }

    pub fn laplacian(&self) -> Self {
        Self {
            window: self.window,
            values: discrete_laplacian(&self.values, self.window.h),
        }
    }
}

impl ComplexField {
    pub fn mass(&self) -> f64 {
        mass(&self.values, self.window.h)
    }

    pub fn from_real(field: &RealField) -> Self {
        Self {
            window: field.window,
            values: field.values.iter().map(|&u| C64::new(u, 0.0)).collect(),
        }
    }
}

impl RealField {
    pub fn mass(&self) -> f64 {
        self.window.h * self.values.iter().map(|u| u * u).sum::<f64>()
    }
}

pub fn l1_norm<T: FieldValue>(values: &[T]) -> f64 {
    values.iter().map(FieldValue::modulus).sum()
}

pub fn linf_norm<T: FieldValue>(values: &[T]) -> f64 {
    values.iter().map(FieldValue::modulus).fold(0.0, f64::max)
}

/// Both norms the analysis works with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub l1: f64,
    pub linf: f64,
}

impl ResidualNorms {
    pub fn of<T: FieldValue>(values: &[T]) -> Self {
        Self {
            l1: l1_norm(values),
            linf: linf_norm(values),
        }
    }
}

/// Ratio of the largest edge modulus to the largest modulus in the window.
pub fn boundary_ratio<T: FieldValue>(values: &[T]) -> f64 {
    let peak = linf_norm(values);
    if peak == 0.0 || values.is_empty() {
        return 0.0;
    }
    let edge = values[0].modulus().max(values[values.len() - 1].modulus());
    edge / peak
}

/// `(f(n+1) - f(n)) / h`, zero beyond the upper edge.
pub fn forward_difference<T: FieldValue>(f: &[T], h: f64) -> Vec<T> {
    forward_difference_with_tail(f, T::default(), h)
}

/// Forward difference for a field that equals `tail` beyond the upper edge.
pub fn forward_difference_with_tail<T: FieldValue>(f: &[T], tail: T, h: f64) -> Vec<T> {
    let inv_h = 1.0 / h;
    (0..f.len())
        .map(|i| {
            let next = f.get(i + 1).copied().unwrap_or(tail);
            (next - f[i]) * inv_h
        })
        .collect()
}

/// `(f(n) - f(n-1)) / h`, zero below the lower edge.
pub fn backward_difference<T: FieldValue>(f: &[T], h: f64) -> Vec<T> {
    let inv_h = 1.0 / h;
    (0..f.len())
        .map(|i| {
            let prev = if i > 0 { f[i - 1] } else { T::default() };
            (f[i] - prev) * inv_h
        })
        .collect()
}

/// `(f(n+1) - 2 f(n) + f(n-1)) / h^2` with zero Dirichlet padding.
pub fn discrete_laplacian<T: FieldValue>(f: &[T], h: f64) -> Vec<T> {
    let inv_h2 = 1.0 / (h * h);
    let n = f.len();
    (0..n)
        .map(|i| {
            let prev = if i > 0 { f[i - 1] } else { T::default() };
            let next = if i + 1 < n { f[i + 1] } else { T::default() };
            (next - f[i] * 2.0 + prev) * inv_h2
        })
        .collect()
}

fn bond(a1: &[f64], k: Option<usize>) -> f64 {
    k.and_then(|k| a1.get(k)).copied().unwrap_or(0.0)
}

/// `D+ phi(n) = (exp(-i h a1(n+1/2)) phi(n+1) - phi(n)) / h`.
pub fn covariant_plus(phi: &[C64], a1: &[f64], h: f64) -> Vec<C64> {
    let n = phi.len();
    (0..n)
        .map(|i| {
            let next = if i + 1 < n { phi[i + 1] } else { C64::default() };
            let link = C64::from_polar(1.0, -h * bond(a1, Some(i)));
            (link * next - phi[i]) / h
        })
        .collect()
}

/// `D- phi(n) = (phi(n) - exp(i h a1(n-1/2)) phi(n-1)) / h`.
pub fn covariant_minus(phi: &[C64], a1: &[f64], h: f64) -> Vec<C64> {
    (0..phi.len())
        .map(|i| {
            let (prev, k) = if i > 0 {
                (phi[i - 1], Some(i - 1))
            } else {
                (C64::default(), None)
            };
            let link = C64::from_polar(1.0, h * bond(a1, k));
            (phi[i] - link * prev) / h
        })
        .collect()
}

/// `D- D+ phi` on the truncated lattice.
///
/// Composing [`covariant_minus`] with [`covariant_plus`] on window arrays
/// drops the ghost value `D+ phi(n_min - 1)`, so the stencil is applied
/// directly instead.
pub fn covariant_laplacian(phi: &[C64], a1: &[f64], h: f64) -> Vec<C64> {
    let n = phi.len();
    let inv_h2 = 1.0 / (h * h);
    (0..n)
        .map(|i| {
            let next = if i + 1 < n {
                C64::from_polar(1.0, -h * bond(a1, Some(i))) * phi[i + 1]
            } else {
                C64::default()
            };
            let prev = if i > 0 {
                C64::from_polar(1.0, h * bond(a1, Some(i - 1))) * phi[i - 1]
            } else {
                C64::default()
            };
            (next - phi[i] * 2.0 + prev) * inv_h2
        })
        .collect()
}

/// `M = h * sum |phi(n)|^2`.
pub fn mass(phi: &[C64], h: f64) -> f64 {
    h * phi.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// `|z|^(2p) z` evaluated from `|z|^2`, with the removable value 0 at `z = 0`.
pub fn abs_pow(modulus_sqr: f64, p: f64) -> f64 {
    if modulus_sqr == 0.0 {
        0.0
    } else {
        modulus_sqr.powf(p)
    }
}

/// Coupling, nonlinearity power, frequency, spacing and the `+inf` limit of `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub p: f64,
    pub omega: f64,
    pub h: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, p: f64, omega: f64, h: f64) -> Result<Self> {
        let params = Self {
            lambda,
            p,
            omega,
            h,
            gamma: 0.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_h(mut self, h: f64) -> Result<Self> {
        self.h = h;
        self.validate()?;
        Ok(self)
    }

    pub fn with_omega(mut self, omega: f64) -> Result<Self> {
        self.omega = omega;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        positive("lambda", self.lambda)?;
        positive("p", self.p)?;
        positive("omega", self.omega)?;
        positive("h", self.h)?;
        if !self.gamma.is_finite() {
            return Err(LatticeError::Parameter {
                name: "gamma",
                value: self.gamma,
                reason: "must be finite",
            });
        }
        Ok(())
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(LatticeError::Parameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

/// Gauge potentials: `a0`, `a2` on sites, `a1` on the `N - 1` interior bonds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeTriple {
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl GaugeTriple {
    pub fn new(a0: Vec<f64>, a1: Vec<f64>, a2: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        let n = a0.len();
        if a2.len() != n {
            return Err(LatticeError::Length {
                expected: n,
                got: a2.len(),
            });
        }
        if a1.len() + 1 != n {
            return Err(LatticeError::Length {
                expected: n.saturating_sub(1),
                got: a1.len(),
            });
        }
        let all = a0.iter().chain(&a1).chain(&a2).chain([&alpha, &beta]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(LatticeError::Parameter {
                name: "gauge",
                value: f64::NAN,
                reason: "all gauge entries must be finite",
            });
        }
        Ok(Self {
            a0,
            a1,
            a2,
            alpha,
            beta,
        })
    }

    /// Constant potentials `a0 = alpha`, `a2 = beta`, `a1 = 0` on `len` sites.
    pub fn constant(len: usize, alpha: f64, beta: f64) -> Self {
        Self {
            a0: vec![alpha; len],
            a1: vec![0.0; len.saturating_sub(1)],
            a2: vec![beta; len],
            alpha,
            beta,
        }
    }

    pub fn ensure_spatial_gauge(&self) -> Result<()> {
        match self.a1.iter().position(|&v| v != 0.0) {
            Some(bond) => Err(LatticeError::GaugeNotFixed {
                bond,
                value: self.a1[bond],
            }),
            None => Ok(()),
        }
    }
}

/// Time derivatives of the gauge potentials entering the evolution equations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeRates {
    pub a1_t: Vec<f64>,
    pub a2_t: Vec<f64>,
}

/// Apply the gauge transformation generated by `chi` (with time derivative
/// `chi_dot`): `phi -> e^{i chi} phi`, `a0 -> a0 + chi_dot`,
/// `a1 -> a1 + grad+ chi`, `a2 -> a2`.
///
/// `chi_dot` is taken to vanish beyond the window, so `alpha` and `beta`
/// are unchanged.
pub fn gauge_transform(
    phi: &ComplexField,
    gauge: &GaugeTriple,
    chi: &[f64],
    chi_dot: &[f64],
) -> Result<(ComplexField, GaugeTriple)> {
    let n = phi.len();
    check_len(n, chi.len())?;
    check_len(n, chi_dot.len())?;
    check_len(n, gauge.a0.len())?;
    let h = phi.h();
    let values = phi
        .values()
        .iter()
        .zip(chi)
        .map(|(z, &c)| C64::from_polar(1.0, c) * z)
        .collect();
    let a0 = gauge.a0.iter().zip(chi_dot).map(|(a, c)| a + c).collect();
    let a1 = gauge
        .a1
        .iter()
        .enumerate()
        .map(|(k, a)| a + (chi[k + 1] - chi[k]) / h)
        .collect();
    let transformed = GaugeTriple::new(a0, a1, gauge.a2.clone(), gauge.alpha, gauge.beta)?;
    Ok((ComplexField::new(phi.window(), values)?, transformed))
}

/// Transform the time derivatives consistently with [`gauge_transform`]:
/// `phi_t -> e^{i chi} (phi_t + i chi_dot phi)`, `a1_t -> a1_t + grad+ chi_dot`.
pub fn gauge_transform_rates(
    phi: &[C64],
    phi_t: &[C64],
    rates: &GaugeRates,
    chi: &[f64],
    chi_dot: &[f64],
    h: f64,
) -> (Vec<C64>, GaugeRates) {
    let phi_t = phi
        .iter()
        .zip(phi_t)
        .zip(chi.iter().zip(chi_dot))
        .map(|((z, zt), (&c, &cd))| C64::from_polar(1.0, c) * (zt + C64::i() * cd * z))
        .collect();
    let a1_t = rates
        .a1_t
        .iter()
        .enumerate()
        .map(|(k, a)| a + (chi_dot[k + 1] - chi_dot[k]) / h)
        .collect();
    (
        phi_t,
        GaugeRates {
            a1_t,
            a2_t: rates.a2_t.clone(),
        },
    )
}

/// Residuals of the four equations of the full gauge-invariant system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemResidual {
    /// `i D0 phi + D- D+ phi - a2^2 phi + lambda |phi|^{2p} phi`, per site.
    pub scalar: Vec<C64>,
    /// `d_t a1 - grad+ a0 + a2 |phi|^2`, per interior bond.
    pub bond: Vec<f64>,
    /// `d_t a2 + Im(conj(phi(n-1)) D+ phi(n-1))`, per site.
    pub current: Vec<f64>,
    /// `grad+ a2 - |phi|^2 / 2`, per site.
    pub constraint: Vec<f64>,
}

impl SystemResidual {
    pub fn norms(&self) -> [ResidualNorms; 4] {
        [
            ResidualNorms::of(&self.scalar),
            ResidualNorms::of(&self.bond),
            ResidualNorms::of(&self.current),
            ResidualNorms::of(&self.constraint),
        ]
    }
}

pub fn system_residual(
    phi: &ComplexField,
    phi_t: &[C64],
    gauge: &GaugeTriple,
    rates: &GaugeRates,
    params: &ModelParams,
) -> Result<SystemResidual> {
    let n = phi.len();
    check_len(n, phi_t.len())?;
    check_len(n, gauge.a0.len())?;
    check_len(n, rates.a2_t.len())?;
    check_len(n.saturating_sub(1), rates.a1_t.len())?;
    let h = phi.h();
    let z = phi.values();
    let lap = covariant_laplacian(z, &gauge.a1, h);
    let scalar = (0..n)
        .map(|i| {
            let d0 = phi_t[i] - C64::i() * gauge.a0[i] * z[i];
            let rho = z[i].norm_sqr();
            C64::i() * d0 + lap[i] - gauge.a2[i].powi(2) * z[i] + params.lambda * abs_pow(rho, params.p) * z[i]
        })
        .collect();
    let bond = (0..n - 1)
        .map(|i| rates.a1_t[i] - (gauge.a0[i + 1] - gauge.a0[i]) / h + gauge.a2[i] * z[i].norm_sqr())
        .collect();
    let dplus = covariant_plus(z, &gauge.a1, h);
    let current = (0..n)
        .map(|i| {
            let flux = if i > 0 {
                (z[i - 1].conj() * dplus[i - 1]).im
            } else {
                0.0
            };
            rates.a2_t[i] + flux
        })
        .collect();
    let grad_a2 = forward_difference_with_tail(&gauge.a2, gauge.beta, h);
    let constraint = grad_a2.iter().zip(z).map(|(g, zi)| g - 0.5 * zi.norm_sqr()).collect();
    Ok(SystemResidual {
        scalar,
        bond,
        current,
        constraint,
    })
}

/// Residuals of the two static constraints in the spatial gauge:
/// `r0 = grad+ a0 - a2 |phi|^2` and `r2 = grad+ a2 - |phi|^2 / 2`.
pub fn constraint_residuals(phi: &ComplexField, gauge: &GaugeTriple, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(phi.len(), gauge.a0.len())?;
    check_len(phi.len(), gauge.a2.len())?;
    gauge.ensure_spatial_gauge()?;
    let rho: Vec<f64> = phi.values().iter().map(|z| z.norm_sqr()).collect();
    let r0 = forward_difference_with_tail(&gauge.a0, gauge.alpha, h)
        .iter()
        .zip(&gauge.a2)
        .zip(&rho)
        .map(|((d, a2), r)| d - a2 * r)
        .collect();
    let r2 = forward_difference_with_tail(&gauge.a2, gauge.beta, h)
        .iter()
        .zip(&rho)
        .map(|(d, r)| d - 0.5 * r)
        .collect();
    Ok((r0, r2))
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(LatticeError::Length { expected, got })
    }
}
