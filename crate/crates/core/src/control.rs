//! Time-local control of the QFI rate.
//!
//! A control is an instantaneous symplectic map applied covariantly to the
//! family. The QFI itself is unchanged by it; its rate under the thermal flow
//! is not, and the controls here maximise that rate. The analytic optimum for
//! the canonical families removes all squeezing, leaving a covariance matrix
//! proportional to the identity (minimal `Tr σ⁻¹ = 2/ν`).
//!
//! The optimal control depends on the true parameter value `θ̄`, which has to
//! be supplied (in practice, from a prior uncontrolled estimate).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_family, FamilyKind, StateFamily, ThermalChannel};
use crate::error::{Error, Result};
use crate::qfi::{angle_family, gaussian_qfi, qfi_rate, strength_family_from_y};
use crate::symplectic::{normal_form, Mat2, SymplecticControl};

/// Rate gain below which the identity counts as optimal.
pub const SINGLE_CONTROL_TOLERANCE: f64 = 1e-9;

pub fn controlled_rate(f: &StateFamily, c: &SymplecticControl, ch: &ThermalChannel) -> Result<f64> {
    qfi_rate(&f.apply_control(c)?, ch)
}

/// Control mapping `cov` onto `ν·1`: undo the rotation, then the squeezing.
pub fn unsqueezing_control(cov: &Mat2) -> Result<SymplecticControl> {
    let nf = normal_form(cov)?;
    SymplecticControl::new(-nf.theta, 1.0 / nf.y, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Grid points over `phi ∈ [0, π)`.
    pub phi_points: usize,
    /// Grid points over `ln z ∈ [-log_z_max, log_z_max]`.
    pub z_points: usize,
    pub log_z_max: f64,
    /// Stop once a full coordinate sweep improves the rate by less than this.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { phi_points: 64, z_points: 64, log_z_max: 3.0, tolerance: 1e-10, max_sweeps: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    /// Best control, reported with `phi ∈ [0, π)` and `chi = 0`.
    pub control: SymplecticControl,
    pub rate: f64,
    /// Best rate on the coarse grid.
    pub grid_rate: f64,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a maximum of `f` on `[a, b]`.
fn golden_max(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, xtol: f64) -> Result<(f64, f64)> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc > fd { (c, fc) } else { (d, fd) })
}

/// Maximises the controlled rate over `(phi, z)` with `chi = 0`: a coarse
/// grid followed by coordinate ascent with golden-section line searches.
pub fn optimize_control(f: &StateFamily, ch: &ThermalChannel, settings: &OptimizerSettings) -> Result<Optimum> {
    if settings.phi_points == 0 || settings.z_points < 2 || !(settings.log_z_max > 0.0) {
        return Err(Error::InvalidParameter("optimizer grid must be non-empty".into()));
    }
    let mut evaluations = 0usize;
    let mut objective = |phi: f64, log_z: f64| -> Result<f64> {
        evaluations += 1;
        let c = SymplecticControl::new(phi, log_z.exp(), 0.0)?;
        controlled_rate(f, &c, ch)
    };

    let d_phi = PI / settings.phi_points as f64;
    let d_u = 2.0 * settings.log_z_max / (settings.z_points - 1) as f64;
    let mut best = (0.0, 0.0, objective(0.0, 0.0)?);
    for i in 0..settings.phi_points {
        let phi = i as f64 * d_phi;
        for j in 0..settings.z_points {
            let u = -settings.log_z_max + j as f64 * d_u;
            let rate = objective(phi, u)?;
            if rate > best.2 {
                best = (phi, u, rate);
            }
        }
    }
    let grid_rate = best.2;

    let (mut phi, mut u, mut rate) = best;
    let (mut h_phi, mut h_u) = (d_phi, d_u);
    for _ in 0..settings.max_sweeps {
        let start = rate;

        let (p, r) = golden_max(|x| objective(x, u), phi - h_phi, phi + h_phi, 1e-12)?;
        let moved_phi = if r > rate {
            let m = (p - phi).abs();
            phi = p;
            rate = r;
            m
        } else {
            0.0
        };
        let (v, r) = golden_max(|x| objective(phi, x), u - h_u, u + h_u, 1e-12)?;
        let moved_u = if r > rate {
            let m = (v - u).abs();
            u = v;
            rate = r;
            m
        } else {
            0.0
        };

        if rate - start < settings.tolerance {
            break;
        }
        // keep the bracket wide while the iterate is still travelling
        h_phi = (4.0 * moved_phi).clamp(1e-9, d_phi.max(2.0 * h_phi));
        h_u = (4.0 * moved_u).clamp(1e-9, d_u.max(2.0 * h_u));
    }

    let control = SymplecticControl::new(phi.rem_euclid(PI), u.exp(), 0.0)?;
    Ok(Optimum { control, rate, grid_rate, evaluations })
}

fn check_protocol_params(y: f64, n: f64, t_c: f64, t: f64) -> Result<()> {
    if !(y.is_finite() && y >= 1.0) {
        return Err(Error::InvalidParameter(format!("squeezing y = {y} must be >= 1")));
    }
    if !(n.is_finite() && n >= 1.0) {
        return Err(Error::InvalidParameter(format!("thermal noise N = {n} must be >= 1")));
    }
    if t_c.is_nan() || t_c < 0.0 {
        return Err(Error::InvalidTime(t_c));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidTime(t));
    }
    Ok(())
}

/// Diagonal of the uncontrolled covariance at time `t` for an initially pure
/// state `diag(y², 1/y²)`.
fn free_diagonal(y: f64, n: f64, t: f64) -> (f64, f64) {
    let e = (-t).exp();
    let bath = -(-t).exp_m1() * n;
    (e * y * y + bath, e / (y * y) + bath)
}

/// Symplectic eigenvalue at `t_c` of an initially pure state squeezed by `y`.
pub fn nu_c(y: f64, n: f64, t_c: f64) -> Result<f64> {
    check_protocol_params(y, n, t_c, 0.0)?;
    if t_c.is_infinite() {
        return Ok(n);
    }
    let (a, b) = free_diagonal(y, n, t_c);
    Ok((a * b).sqrt())
}

/// Covariance scale `ν(t)` after unsqueezing at `t_c`.
fn controlled_scale(nu_at_control: f64, n: f64, tau: f64) -> f64 {
    let e = (-tau).exp();
    e * nu_at_control + (1.0 - e) * n
}

/// QFI of the squeezing angle for an initially pure state, optimally
/// unsqueezed at `t_c` (`f64::INFINITY` for no control).
pub fn controlled_qfi_angle(y: f64, n: f64, t_c: f64, t: f64) -> Result<f64> {
    check_protocol_params(y, n, t_c, t)?;
    let c = 1.0 / (y * y) - y * y;
    let det = if t < t_c {
        let (a, b) = free_diagonal(y, n, t);
        a * b
    } else {
        let m = controlled_scale(nu_c(y, n, t_c)?, n, t - t_c);
        m * m
    };
    Ok((-2.0 * t).exp() * c * c / (det + 1.0))
}

/// QFI from the scalar invariants of a zero-mean family.
fn qfi_from_traces(t1: f64, t2: f64, det: f64) -> f64 {
    let cov_term = 0.5 * t2 * det / (det + 1.0);
    let purity_term = if det - 1.0 <= 1e-12 { 0.0 } else { det * t1 * t1 / (2.0 * (det * det - 1.0)) };
    cov_term + purity_term
}

/// QFI of the squeezing strength `r` (`y² = e^r`) for an initially pure
/// state, unsqueezed at `t_c` (`f64::INFINITY` for no control).
///
/// The loss channel changes the determinant of the covariance matrix at a
/// rate that depends on `r`, so for `t > 0` the purity term contributes and
/// `Tr[σ⁻¹σ']` is non-zero. Starting at `1/2`, the curve reduces to
/// `e^{-2t} / (ν(t)² + 1)` only when the control acts at `t_c = 0` (or `y = 1`).
pub fn controlled_qfi_strength(y: f64, n: f64, t_c: f64, t: f64) -> Result<f64> {
    check_protocol_params(y, n, t_c, t)?;
    let y2 = y * y;
    if t < t_c {
        let e = (-t).exp();
        let (a, b) = free_diagonal(y, n, t);
        let t1 = e * (y2 / a - 1.0 / (y2 * b));
        let t2 = e * e * (y2 * y2 / (a * a) + 1.0 / (y2 * y2 * b * b));
        return Ok(qfi_from_traces(t1, t2, a * b));
    }
    let e_c = (-t_c).exp();
    let (a_c, b_c) = free_diagonal(y, n, t_c);
    let nu = (a_c * b_c).sqrt();
    // tangent diag(alpha, -beta) right after the unsqueezing control
    let alpha = e_c * y2 * nu / a_c;
    let beta = e_c * nu / (y2 * b_c);
    let tau = t - t_c;
    let e = (-tau).exp();
    let m = controlled_scale(nu, n, tau);
    let t1 = e * (alpha - beta) / m;
    let t2 = e * e * (alpha * alpha + beta * beta) / (m * m);
    Ok(qfi_from_traces(t1, t2, m * m))
}

/// The paper-style delayed-control experiment: an initially pure squeezed
/// state, a single control at `t_c`, then free evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlProtocol {
    pub family: FamilyKind,
    pub y: f64,
    /// True parameter value; only used by the angle family.
    pub theta_bar: f64,
    pub n: f64,
    /// Control time; `f64::INFINITY` means no control.
    pub t_c: f64,
    /// `None` selects the unsqueezing control computed at `t_c`.
    pub control: Option<SymplecticControl>,
}

impl ControlProtocol {
    pub fn new(family: FamilyKind, y: f64, theta_bar: f64, n: f64, t_c: f64) -> Result<Self> {
        if family == FamilyKind::Custom {
            return Err(Error::InvalidParameter("protocols need the angle or strength family".into()));
        }
        check_protocol_params(y, n, t_c, 0.0)?;
        if !theta_bar.is_finite() {
            return Err(Error::InvalidParameter("theta_bar must be finite".into()));
        }
        Ok(Self { family, y, theta_bar, n, t_c, control: None })
    }

    pub fn with_control(mut self, control: SymplecticControl) -> Self {
        self.control = Some(control);
        self
    }

    pub fn channel(&self) -> Result<ThermalChannel> {
        ThermalChannel::new(self.n)
    }

    pub fn initial_family(&self) -> Result<StateFamily> {
        match self.family {
            FamilyKind::Angle => angle_family(self.y, 1.0, self.theta_bar),
            FamilyKind::Strength => strength_family_from_y(self.y, 1.0),
            FamilyKind::Custom => Err(Error::InvalidParameter("custom family has no protocol".into())),
        }
    }

    /// The control enacted at `t_c`.
    pub fn control_at_tc(&self) -> Result<SymplecticControl> {
        match self.control {
            Some(c) => Ok(c),
            None => {
                let f = evolve_family(&self.initial_family()?, self.t_c, &self.channel()?)?;
                unsqueezing_control(&f.state.cov)
            }
        }
    }

    /// Family right after the control at `t_c`.
    pub fn controlled_family(&self) -> Result<StateFamily> {
        let ch = self.channel()?;
        let f = evolve_family(&self.initial_family()?, self.t_c, &ch)?;
        f.apply_control(&self.control_at_tc()?)
    }

    pub fn family_at(&self, t: f64) -> Result<StateFamily> {
        let ch = self.channel()?;
        if t < self.t_c {
            evolve_family(&self.initial_family()?, t, &ch)
        } else {
            evolve_family(&self.controlled_family()?, t - self.t_c, &ch)
        }
    }

    /// Closed-form QFI at `t` (unsqueezing control only).
    pub fn closed_form_qfi(&self, t: f64) -> Result<f64> {
        match self.family {
            FamilyKind::Angle => controlled_qfi_angle(self.y, self.n, self.t_c, t),
            FamilyKind::Strength => controlled_qfi_strength(self.y, self.n, self.t_c, t),
            FamilyKind::Custom => Err(Error::InvalidParameter("custom family has no closed form".into())),
        }
    }
}

/// Propagates the protocol's moments and evaluates the Gaussian QFI on each
/// grid point.
pub fn simulate_protocol(p: &ControlProtocol, t_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let ch = p.channel()?;
    let initial = p.initial_family()?;
    let controlled = if p.t_c.is_finite() && t_grid.iter().any(|&t| t >= p.t_c) {
        Some(p.controlled_family()?)
    } else {
        None
    };
    t_grid
        .iter()
        .map(|&t| {
            let f = match &controlled {
                Some(g) if t >= p.t_c => evolve_family(g, t - p.t_c, &ch)?,
                _ => evolve_family(&initial, t, &ch)?,
            };
            Ok((t, gaussian_qfi(&f)?.qfi))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleControlCheck {
    /// True when re-optimising gains at most [`SINGLE_CONTROL_TOLERANCE`].
    pub optimal: bool,
    pub identity_rate: f64,
    pub optimized_rate: f64,
    pub gain: f64,
    pub best_control: SymplecticControl,
}

/// Re-optimises the control at `t_probe > t_c` and reports whether doing
/// nothing is already optimal.
pub fn single_control_suffices_check(
    p: &ControlProtocol,
    t_probe: f64,
    settings: &OptimizerSettings,
) -> Result<SingleControlCheck> {
    if !(t_probe.is_finite() && t_probe > p.t_c) {
        return Err(Error::InvalidTime(t_probe));
    }
    let ch = p.channel()?;
    let f = p.family_at(t_probe)?;
    let identity_rate = qfi_rate(&f, &ch)?;
    let opt = optimize_control(&f, &ch, settings)?;
    let gain = opt.rate - identity_rate;
    Ok(SingleControlCheck {
        optimal: gain <= SINGLE_CONTROL_TOLERANCE,
        identity_rate,
        optimized_rate: opt.rate,
        gain,
        best_control: opt.control,
    })
}
