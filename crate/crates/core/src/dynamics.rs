//! Propagation of Gaussian moments and their parameter derivatives under the
//! thermal attenuator `d cov/dt = -cov + N·1`, `d mean/dt = -mean/2`.
//!
//! Time is measured in units of the inverse loss rate. The closed-form
//! solution is the production path; [`ode_integrate`] is a fourth-order
//! Runge-Kutta reference used by the verification suites.
//!
//! The master equation generating this flow is the thermal dissipator with
//! the conventional one-half in front of the anticommutator; see
//! [`crate::fock::lindblad_evolve`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symplectic::{apply_symplectic, compose_control, GaussianState, Mat2, SymplecticControl, Vec2};

pub const DEFAULT_STEP: f64 = 1e-3;

/// Thermal environment described by `N = 2 n̄ + 1 >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalChannel {
    n: f64,
}

impl ThermalChannel {
    pub fn new(n: f64) -> Result<Self> {
        if n.is_finite() && n >= 1.0 {
            Ok(Self { n })
        } else {
            Err(Error::InvalidParameter(format!("thermal noise N = {n} must be >= 1")))
        }
    }

    pub fn from_mean_photons(n_bar: f64) -> Result<Self> {
        Self::new(2.0 * n_bar + 1.0)
    }

    pub fn pure_loss() -> Self {
        Self { n: 1.0 }
    }

    pub fn noise(&self) -> f64 {
        self.n
    }

    pub fn mean_photons(&self) -> f64 {
        0.5 * (self.n - 1.0)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTime(t))
    }
}

pub fn evolve_cm(cov: &Mat2, t: f64, ch: &ThermalChannel) -> Result<Mat2> {
    check_time(t)?;
    let fixed = Mat2::identity() * ch.n;
    Ok(fixed + (cov - fixed) * (-t).exp())
}

pub fn evolve_mean(mean: &Vec2, t: f64) -> Result<Vec2> {
    check_time(t)?;
    Ok(mean * (-0.5 * t).exp())
}

pub fn evolve_state(state: &GaussianState, t: f64, ch: &ThermalChannel) -> Result<GaussianState> {
    Ok(GaussianState { mean: evolve_mean(&state.mean, t)?, cov: evolve_cm(&state.cov, t, ch)? })
}

/// Which parameter a [`StateFamily`] encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    /// Squeezing angle (optical phase).
    Angle,
    /// Squeezing strength `r` with `y^2 = e^r`.
    Strength,
    Custom,
}

/// A Gaussian state at the true parameter value together with the
/// derivatives of its moments with respect to the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFamily {
    pub state: GaussianState,
    pub d_cov: Mat2,
    pub d_mean: Vec2,
    pub kind: FamilyKind,
}

impl StateFamily {
    pub fn new(state: GaussianState, d_cov: Mat2, d_mean: Vec2, kind: FamilyKind) -> Result<Self> {
        if d_cov.iter().chain(d_mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite tangent".into()));
        }
        let scale = d_cov.abs().max().max(1.0);
        if (d_cov[(0, 1)] - d_cov[(1, 0)]).abs() > 1e-12 * scale {
            return Err(Error::InvalidParameter("d_cov must be symmetric".into()));
        }
        let off = 0.5 * (d_cov[(0, 1)] + d_cov[(1, 0)]);
        let d_cov = Mat2::new(d_cov[(0, 0)], off, off, d_cov[(1, 1)]);
        Ok(Self { state, d_cov, d_mean, kind })
    }

    pub fn purity(&self) -> f64 {
        self.state.purity()
    }

    /// Acts with a Gaussian unitary on the state and, covariantly, on the
    /// tangent: `d_cov -> S d_cov S^T`, `d_mean -> S d_mean`.
    pub fn apply_symplectic(&self, s: &Mat2) -> Result<Self> {
        let state = apply_symplectic(&self.state, s)?;
        let d_cov = s * self.d_cov * s.transpose();
        let d_cov = 0.5 * (d_cov + d_cov.transpose());
        Ok(Self { state, d_cov, d_mean: s * self.d_mean, kind: self.kind })
    }

    pub fn apply_control(&self, c: &SymplecticControl) -> Result<Self> {
        self.apply_symplectic(&compose_control(c)?)
    }
}

/// Evolves a family; the tangent obeys `d(d_cov)/dt = -d_cov`,
/// `d(d_mean)/dt = -d_mean/2`.
pub fn evolve_family(f: &StateFamily, t: f64, ch: &ThermalChannel) -> Result<StateFamily> {
    check_time(t)?;
    Ok(StateFamily {
        state: evolve_state(&f.state, t, ch)?,
        d_cov: f.d_cov * (-t).exp(),
        d_mean: f.d_mean * (-0.5 * t).exp(),
        kind: f.kind,
    })
}

pub fn apply_control_then_evolve(
    f: &StateFamily,
    c: &SymplecticControl,
    t_after: f64,
    ch: &ThermalChannel,
) -> Result<StateFamily> {
    check_time(t_after)?;
    evolve_family(&f.apply_control(c)?, t_after, ch)
}

/// Classical RK4 integration of the moment equations from 0 to `t`.
///
/// The number of steps is `ceil(t / dt)`, with the step shrunk to land
/// exactly on `t`.
pub fn ode_integrate(cov: &Mat2, mean: &Vec2, t: f64, ch: &ThermalChannel, dt: f64) -> Result<(Mat2, Vec2)> {
    check_time(t)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidStep(dt));
    }
    if t == 0.0 {
        return Ok((*cov, *mean));
    }
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let noise = Mat2::identity() * ch.n;
    let f_cov = |s: &Mat2| noise - s;
    let f_mean = |r: &Vec2| -0.5 * r;

    let (mut s, mut r) = (*cov, *mean);
    for _ in 0..steps {
        let k1 = f_cov(&s);
        let k2 = f_cov(&(s + k1 * (0.5 * h)));
        let k3 = f_cov(&(s + k2 * (0.5 * h)));
        let k4 = f_cov(&(s + k3 * h));
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);

        let m1 = f_mean(&r);
        let m2 = f_mean(&(r + m1 * (0.5 * h)));
        let m3 = f_mean(&(r + m2 * (0.5 * h)));
        let m4 = f_mean(&(r + m3 * h));
        r += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (h / 6.0);
    }
    Ok((s, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qfi::{angle_family, gaussian_qfi, strength_family};
    use crate::symplectic::{cm_from_normal_form, rotation, sigma_x, NormalForm};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn evolve_cm_examples() {
        let ch = ThermalChannel::new(2.5).unwrap();
        let cov = Mat2::new(3.0, 0.4, 0.4, 0.8);
        assert_eq!(evolve_cm(&cov, 0.0, &ch).unwrap(), cov);
        assert_abs_diff_eq!(evolve_cm(&cov, 50.0, &ch).unwrap(), Mat2::identity() * 2.5, epsilon = 1e-10);

        let sq = Mat2::new(9.0, 0.0, 0.0, 1.0 / 9.0);
        let closed = evolve_cm(&sq, LN_2, &ThermalChannel::pure_loss()).unwrap();
        assert_abs_diff_eq!(closed, Mat2::new(5.0, 0.0, 0.0, 5.0 / 9.0), epsilon = 1e-14);
        let (rk, _) = ode_integrate(&sq, &Vec2::zeros(), LN_2, &ThermalChannel::pure_loss(), 1e-3).unwrap();
        assert_abs_diff_eq!(rk, Mat2::new(5.0, 0.0, 0.0, 5.0 / 9.0), epsilon = 1e-10);
    }

    #[test]
    fn negative_time_is_rejected() {
        let ch = ThermalChannel::pure_loss();
        assert_eq!(evolve_cm(&Mat2::identity(), -0.1, &ch), Err(Error::InvalidTime(-0.1)));
        assert_eq!(evolve_mean(&Vec2::zeros(), -1.0), Err(Error::InvalidTime(-1.0)));
        assert!(ode_integrate(&Mat2::identity(), &Vec2::zeros(), 1.0, &ch, 0.0).is_err());
        assert!(ThermalChannel::new(0.9).is_err());
    }

    #[test]
    fn evolve_mean_examples() {
        assert_eq!(evolve_mean(&Vec2::zeros(), 3.0).unwrap(), Vec2::zeros());
        let r = Vec2::new(2.0, -0.5);
        assert_eq!(evolve_mean(&r, 0.0).unwrap(), r);
        assert_abs_diff_eq!(evolve_mean(&Vec2::new(2.0, 0.0), 2.0 * LN_2).unwrap(), Vec2::new(1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let ch = ThermalChannel::new(1.7).unwrap();
        let cov = Mat2::new(6.0, 1.5, 1.5, 0.9);
        let mean = Vec2::new(1.0, -2.0);
        let exact = evolve_cm(&cov, 1.0, &ch).unwrap();
        let err = |dt| (ode_integrate(&cov, &mean, 1.0, &ch, dt).unwrap().0 - exact).abs().max();
        assert!(err(1e-3) <= 1e-10);
        let (coarse, fine) = (err(0.1), err(0.05));
        let ratio = coarse / fine;
        assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
        assert_eq!(ode_integrate(&cov, &mean, 0.0, &ch, 1e-3).unwrap(), (cov, mean));
    }

    #[test]
    fn thermal_state_is_a_fixed_point() {
        let ch = ThermalChannel::new(3.0).unwrap();
        for t in [0.0, 0.3, 1.0, 7.0, 40.0] {
            assert_eq!(evolve_cm(&(Mat2::identity() * 3.0), t, &ch).unwrap(), Mat2::identity() * 3.0);
        }
    }

    #[test]
    fn angle_family_tangent_commutes_with_evolution() {
        // d/dθ̄ of the evolved CM, by central differences, against the evolved tangent.
        let (y, theta_bar, t) = (3.0, 0.45, LN_2);
        let ch = ThermalChannel::pure_loss();
        let f = evolve_family(&angle_family(y, 1.0, theta_bar).unwrap(), t, &ch).unwrap();
        let h = 1e-6;
        let cm_at = |th| {
            let cov = cm_from_normal_form(&NormalForm { nu: 1.0, y, theta: th }).unwrap();
            evolve_cm(&cov, t, &ch).unwrap()
        };
        let fd = (cm_at(theta_bar + h) - cm_at(theta_bar - h)) / (2.0 * h);
        assert_abs_diff_eq!(f.d_cov, fd, epsilon = 1e-8);
        let expected = rotation(theta_bar) * sigma_x() * rotation(-theta_bar) * (0.5 * (1.0 / 9.0 - 9.0));
        assert_abs_diff_eq!(f.d_cov, expected, epsilon = 1e-13);
    }

    #[test]
    fn strength_tangent_scales_by_decay() {
        let ch = ThermalChannel::new(2.0).unwrap();
        let f = strength_family(0.8, 1.3).unwrap();
        let g = evolve_family(&f, 0.7, &ch).unwrap();
        assert_abs_diff_eq!(g.d_cov.norm() / f.d_cov.norm(), (-0.7f64).exp(), epsilon = 1e-15);
        assert_eq!(evolve_family(&f, 0.0, &ch).unwrap(), f);
    }

    #[test]
    fn determinant_matches_product_form() {
        let (y, n) = (2.3f64, 1.8);
        let ch = ThermalChannel::new(n).unwrap();
        let cov = cm_from_normal_form(&NormalForm { nu: 1.0, y, theta: 0.9 }).unwrap();
        for t in [0.0, 0.2, 0.9, 2.5] {
            let det = evolve_cm(&cov, t, &ch).unwrap().determinant();
            let nu_c = crate::control::nu_c(y, n, t).unwrap();
            assert_abs_diff_eq!(det, nu_c * nu_c, epsilon = 1e-12 * det);
        }
    }

    #[test]
    fn identity_control_matches_plain_evolution() {
        let ch = ThermalChannel::new(1.4).unwrap();
        let f = angle_family(2.0, 1.1, 0.3).unwrap();
        let a = apply_control_then_evolve(&f, &SymplecticControl::identity(), 0.6, &ch).unwrap();
        let b = evolve_family(&f, 0.6, &ch).unwrap();
        assert_abs_diff_eq!(a.state.cov, b.state.cov, epsilon = 1e-15);
        assert_abs_diff_eq!(a.d_cov, b.d_cov, epsilon = 1e-15);
    }

    #[test]
    fn analytic_control_unsqueezes_angle_family() {
        let ch = ThermalChannel::pure_loss();
        let f = angle_family(3.0, 1.0, 0.3).unwrap();
        let c = SymplecticControl::new(-0.3, 1.0 / 3.0, 0.0).unwrap();
        let g = apply_control_then_evolve(&f, &c, 0.0, &ch).unwrap();
        assert_abs_diff_eq!(g.state.cov, Mat2::identity(), epsilon = 1e-12);
    }

    fn cm_strategy() -> impl Strategy<Value = Mat2> {
        (1.0f64..3.0, 1.0f64..3.0, 0.0..std::f64::consts::PI)
            .prop_map(|(nu, y, theta)| cm_from_normal_form(&NormalForm { nu, y, theta }).unwrap())
    }

    proptest! {
        #[test]
        fn closed_form_matches_rk4(
            cov in cm_strategy(),
            x in -3.0f64..3.0, p in -3.0f64..3.0,
            n in 1.0f64..5.0, t in 0.0f64..3.0,
        ) {
            let ch = ThermalChannel::new(n).unwrap();
            let mean = Vec2::new(x, p);
            let (rk_cov, rk_mean) = ode_integrate(&cov, &mean, t, &ch, 1e-3).unwrap();
            let dev = (rk_cov - evolve_cm(&cov, t, &ch).unwrap()).abs().max()
                .max((rk_mean - evolve_mean(&mean, t).unwrap()).abs().max());
            prop_assert!(dev <= 1e-8);
        }

        #[test]
        fn evolution_is_a_semigroup(cov in cm_strategy(), n in 1.0f64..5.0, t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
            let ch = ThermalChannel::new(n).unwrap();
            let two_step = evolve_cm(&evolve_cm(&cov, t1, &ch).unwrap(), t2, &ch).unwrap();
            let one_step = evolve_cm(&cov, t1 + t2, &ch).unwrap();
            prop_assert!((two_step - one_step).abs().max() <= 1e-12 * cov.abs().max().max(n));
        }

        #[test]
        fn control_is_qfi_neutral_at_the_instant(
            phi in 0.0f64..6.28, lz in -2.0f64..2.0, chi in 0.0f64..6.28,
            y in 1.0f64..3.0, nu in 1.01f64..2.0, th in 0.0f64..3.14,
        ) {
            let ch = ThermalChannel::new(1.5).unwrap();
            let f = angle_family(y, nu, th).unwrap();
            let c = SymplecticControl::new(phi, lz.exp(), chi).unwrap();
            let before = gaussian_qfi(&f).unwrap().qfi;
            let after = gaussian_qfi(&apply_control_then_evolve(&f, &c, 0.0, &ch).unwrap()).unwrap().qfi;
            prop_assert!((after - before).abs() <= 1e-10 * before.max(1.0));
        }
    }
}
