//! Quantum Fisher information of single-mode Gaussian families and its exact
//! rate of change under the thermal flow.
//!
//! For a family with covariance `σ`, tangent `σ'`, mean tangent `r'` and
//! purity `μ = Det(σ)^(-1/2)`:
//!
//! ```text
//! I = ½ Tr[(σ⁻¹σ')²] / (1 + μ²) + 2 μ'² / (1 - μ⁴) + 2 r'ᵀ σ⁻¹ r',
//! μ' = -(μ/2) Tr[σ⁻¹σ'].
//! ```

use serde::{Deserialize, Serialize};

use crate::dynamics::{FamilyKind, StateFamily, ThermalChannel};
use crate::error::{Error, Result};
use crate::symplectic::{cm_from_normal_form, rotation, sigma_x, sigma_z, GaussianState, Mat2, NormalForm, Vec2};

/// Purities at or above `1 - PURE_THRESHOLD` are treated as pure.
pub const PURE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfiReport {
    pub qfi: f64,
    /// `½ Tr[(σ⁻¹σ')²] / (1 + μ²)`
    pub term_cov: f64,
    /// `2 μ'² / (1 - μ⁴)`
    pub term_purity: f64,
    /// `2 r'ᵀ σ⁻¹ r'`
    pub term_mean: f64,
}

impl QfiReport {
    /// Quantum Cramér-Rao bound on the standard deviation after `n` samples.
    pub fn crb_stddev(&self, n: u64) -> Result<f64> {
        crb(self.qfi, n)
    }
}

pub fn crb(qfi: f64, n: u64) -> Result<f64> {
    if !(qfi.is_finite() && qfi > 0.0) {
        return Err(Error::NoInformation(qfi));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    Ok(1.0 / (n as f64 * qfi).sqrt())
}

fn inverse(m: &Mat2) -> Mat2 {
    let det = m.determinant();
    Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det
}

/// Trace quantities shared by the QFI and its rate.
struct Traces {
    inv: Mat2,
    det: f64,
    mu: f64,
    /// `σ⁻¹σ'`
    a: Mat2,
    /// `Tr[σ⁻¹σ']`
    t1: f64,
    /// `Tr[(σ⁻¹σ')²]`
    t2: f64,
}

impl Traces {
    fn of(f: &StateFamily) -> Self {
        let det = f.state.cov.determinant();
        let inv = inverse(&f.state.cov);
        let a = inv * f.d_cov;
        Self { inv, det, mu: 1.0 / det.sqrt(), a, t1: a.trace(), t2: (a * a).trace() }
    }

    fn is_pure(&self) -> bool {
        self.mu >= 1.0 - PURE_THRESHOLD
    }

    /// Whether `Tr[σ⁻¹σ']` vanishes up to roundoff.
    fn trace_vanishes(&self) -> bool {
        self.t1.abs() <= 1e-9 * (1.0 + self.a.abs().max())
    }

    /// `1 - μ⁴`, evaluated as `(D - 1)(D + 1) / D²` for accuracy near purity.
    fn one_minus_mu4(&self) -> f64 {
        (self.det - 1.0) * (self.det + 1.0) / (self.det * self.det)
    }
}

pub fn gaussian_qfi(f: &StateFamily) -> Result<QfiReport> {
    let tr = Traces::of(f);
    let mu2 = tr.mu * tr.mu;
    let term_cov = 0.5 * tr.t2 / (1.0 + mu2);
    let term_purity = if tr.is_pure() {
        if !tr.trace_vanishes() {
            return Err(Error::SingularPurity { mu: tr.mu, trace: tr.t1 });
        }
        0.0
    } else {
        let d_mu = -0.5 * tr.mu * tr.t1;
        2.0 * d_mu * d_mu / tr.one_minus_mu4()
    };
    let term_mean = 2.0 * f.d_mean.dot(&(tr.inv * f.d_mean));
    Ok(QfiReport { qfi: term_cov + term_purity + term_mean, term_cov, term_purity, term_mean })
}

/// Exact time derivative of [`gaussian_qfi`] along the thermal flow.
///
/// For pure states the terms carrying `(1 - μ⁴)⁻¹` are only defined when
/// `Tr[σ⁻¹σ']` vanishes; they are then set to zero, which is their value
/// along families whose determinant does not depend on the parameter. Pure
/// states with a non-vanishing trace give [`Error::SingularPurity`].
pub fn qfi_rate(f: &StateFamily, ch: &ThermalChannel) -> Result<f64> {
    let n = ch.noise();
    let tr = Traces::of(f);
    let mu2 = tr.mu * tr.mu;
    let tr_inv = tr.inv.trace();
    let drift = n * tr_inv - 2.0;

    let mut rate = mu2 * tr.t2 * drift / (2.0 * (1.0 + mu2).powi(2))
        - n * (tr.a * tr.a * tr.inv).trace() / (1.0 + mu2);

    if tr.is_pure() {
        if !tr.trace_vanishes() {
            return Err(Error::SingularPurity { mu: tr.mu, trace: tr.t1 });
        }
    } else {
        let denom = tr.one_minus_mu4();
        let inv2_dcov = (tr.inv * tr.inv * f.d_cov).trace();
        rate -= mu2 * tr.t1 * (drift * tr.t1 + 2.0 * n * inv2_dcov) / (2.0 * denom);
        rate += mu2 * mu2 * mu2 / (denom * denom) * tr.t1 * tr.t1 * (-drift);
    }

    rate -= 2.0 * n * f.d_mean.dot(&(tr.inv * tr.inv * f.d_mean));
    Ok(rate)
}

/// Rate for an angle family whose covariance has symplectic eigenvalue `nu`
/// and `Tr σ⁻¹ = sigma_inv_trace`, after any symplectic control:
/// `-(1/y² - y²)² ν² (2 + N ν² Tr σ⁻¹) / (ν² + 1)²`.
pub fn reduced_rate_angle(y: f64, nu: f64, n: f64, sigma_inv_trace: f64) -> f64 {
    let c = 1.0 / (y * y) - y * y;
    c * c * reduced_rate_strength(nu, n, sigma_inv_trace)
}

/// Rate for a strength family: `-ν² (2 + N ν² Tr σ⁻¹) / (ν² + 1)²`.
pub fn reduced_rate_strength(nu: f64, n: f64, sigma_inv_trace: f64) -> f64 {
    let nu2 = nu * nu;
    -nu2 * (2.0 + n * nu2 * sigma_inv_trace) / ((nu2 + 1.0) * (nu2 + 1.0))
}

/// Rotated squeezed thermal state `ν R(θ̄) diag(y², 1/y²) R(-θ̄)` with the
/// squeezing angle as parameter. The tangent is
/// `ν (1/y² - y²) R(θ̄) σ_x R(-θ̄)`.
pub fn angle_family(y: f64, nu: f64, theta_bar: f64) -> Result<StateFamily> {
    if !(y.is_finite() && y >= 1.0) {
        return Err(Error::InvalidParameter(format!("squeezing y = {y} must be >= 1")));
    }
    let cov = cm_from_normal_form(&NormalForm { nu, y, theta: theta_bar })?;
    let r = rotation(theta_bar);
    let d_cov = r * sigma_x() * r.transpose() * (nu * (1.0 / (y * y) - y * y));
    StateFamily::new(GaussianState::new(Vec2::zeros(), cov)?, d_cov, Vec2::zeros(), FamilyKind::Angle)
}

/// Squeezed thermal state `ν e^{r σ_z}` with the strength `r` as parameter
/// (so `y² = e^r`); the tangent is `ν e^{r σ_z} σ_z`.
pub fn strength_family(r_param: f64, nu: f64) -> Result<StateFamily> {
    if !(r_param.is_finite() && r_param >= 0.0) {
        return Err(Error::InvalidParameter(format!("strength r = {r_param} must be >= 0")));
    }
    if !(nu.is_finite() && nu >= 1.0) {
        return Err(Error::UnphysicalState(format!("symplectic eigenvalue {nu} below 1")));
    }
    let cov = Mat2::new(nu * r_param.exp(), 0.0, 0.0, nu * (-r_param).exp());
    let d_cov = cov * sigma_z();
    StateFamily::new(GaussianState::new(Vec2::zeros(), cov)?, d_cov, Vec2::zeros(), FamilyKind::Strength)
}

/// Strength family expressed through the squeezing `y >= 1` (`r = 2 ln y`).
pub fn strength_family_from_y(y: f64, nu: f64) -> Result<StateFamily> {
    if !(y.is_finite() && y >= 1.0) {
        return Err(Error::InvalidParameter(format!("squeezing y = {y} must be >= 1")));
    }
    strength_family(2.0 * y.ln(), nu)
}
