//! Single-mode phase-space algebra.
//!
//! Quadratures are ordered `(x, p)` with `hbar = 1` and the vacuum has the
//! identity as covariance matrix. A Gaussian unitary acts on moments as
//! `cov -> S cov S^T`, `mean -> S mean`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

/// Accepted shortfall of `Det cov` below 1 before a state is rejected.
pub const DET_TOLERANCE: f64 = 1e-9;
/// Relative asymmetry accepted (and removed) on covariance input.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Maximum `|S Ω S^T - Ω|` entry accepted as symplectic.
pub const SYMPLECTIC_TOLERANCE: f64 = 1e-9;

/// The symplectic form `[[0, 1], [-1, 0]]`.
pub fn omega() -> Mat2 {
    Mat2::new(0.0, 1.0, -1.0, 0.0)
}

pub fn sigma_x() -> Mat2 {
    Mat2::new(0.0, 1.0, 1.0, 0.0)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(1.0, 0.0, 0.0, -1.0)
}

/// Phase-space rotation `[[cos t, sin t], [-sin t, cos t]]`.
pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, s, -s, c)
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Largest entry of `S Ω S^T - Ω`.
pub fn symplectic_deviation(s: &Mat2) -> f64 {
    (s * omega() * s.transpose() - omega()).abs().max()
}

pub fn is_symplectic(s: &Mat2, tol: f64) -> bool {
    symplectic_deviation(s) <= tol
}

fn check_symplectic(s: &Mat2) -> Result<()> {
    let deviation = symplectic_deviation(s);
    if deviation.is_finite() && deviation <= SYMPLECTIC_TOLERANCE {
        Ok(())
    } else {
        Err(Error::InvalidMatrix { deviation })
    }
}

/// Checks that `cov` is a physical covariance matrix and returns its
/// symmetrised form.
///
/// Determinants in `[1 - DET_TOLERANCE, 1)` are rescaled onto the pure-state
/// boundary `Det cov = 1`.
pub fn validate_cm(cov: &Mat2) -> Result<Mat2> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::UnphysicalState("non-finite covariance entry".into()));
    }
    let scale = cov.abs().max().max(1.0);
    let asym = (cov[(0, 1)] - cov[(1, 0)]).abs();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::UnphysicalState(format!(
            "covariance matrix not symmetric (asymmetry {asym:.3e})"
        )));
    }
    let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    let sym = Mat2::new(cov[(0, 0)], off, off, cov[(1, 1)]);
    if sym.trace() <= 0.0 {
        return Err(Error::UnphysicalState("covariance trace must be positive".into()));
    }
    let det = sym.determinant();
    if det >= 1.0 {
        Ok(sym)
    } else if det >= 1.0 - DET_TOLERANCE {
        Ok(sym / det.sqrt())
    } else {
        Err(Error::UnphysicalState(format!(
            "Det cov = {det} violates the uncertainty relation"
        )))
    }
}

/// First and second moments of a single bosonic mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub mean: Vec2,
    pub cov: Mat2,
}

impl GaussianState {
    pub fn new(mean: Vec2, cov: Mat2) -> Result<Self> {
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::UnphysicalState("non-finite mean".into()));
        }
        Ok(Self { mean, cov: validate_cm(&cov)? })
    }

    pub fn vacuum() -> Self {
        Self { mean: Vec2::zeros(), cov: Mat2::identity() }
    }

    /// Zero-mean thermal state with `cov = n * identity`.
    pub fn thermal(n: f64) -> Result<Self> {
        Self::new(Vec2::zeros(), Mat2::identity() * n)
    }

    pub fn purity(&self) -> f64 {
        1.0 / self.cov.determinant().sqrt()
    }

    pub fn symplectic_eigenvalue(&self) -> f64 {
        self.cov.determinant().sqrt()
    }
}

/// Euler decomposition of a single-mode symplectic matrix,
/// `S = R(chi) · diag(z, 1/z) · R(phi)`.
///
/// `phi` is the rotation that acts first on the state and `chi` the one that
/// acts last. Because the thermal flow commutes with rotations, `chi` never
/// affects the QFI rate. `z` may be any positive value; decomposition returns
/// the branch `z >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymplecticControl {
    pub phi: f64,
    pub z: f64,
    pub chi: f64,
}

impl SymplecticControl {
    pub fn new(phi: f64, z: f64, chi: f64) -> Result<Self> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::InvalidControl(format!("squeezing z = {z} must be positive")));
        }
        if !phi.is_finite() || !chi.is_finite() {
            return Err(Error::InvalidControl("non-finite angle".into()));
        }
        Ok(Self { phi: normalize_angle(phi), z, chi: normalize_angle(chi) })
    }

    pub fn identity() -> Self {
        Self { phi: 0.0, z: 1.0, chi: 0.0 }
    }

    pub fn matrix(&self) -> Result<Mat2> {
        compose_control(self)
    }
}

impl Default for SymplecticControl {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn compose_control(c: &SymplecticControl) -> Result<Mat2> {
    if !(c.z.is_finite() && c.z > 0.0) {
        return Err(Error::InvalidControl(format!("squeezing z = {} must be positive", c.z)));
    }
    let squeeze = Mat2::new(c.z, 0.0, 0.0, 1.0 / c.z);
    Ok(rotation(c.chi) * squeeze * rotation(c.phi))
}

pub fn decompose_symplectic(s: &Mat2) -> Result<SymplecticControl> {
    check_symplectic(s)?;
    // S^T S = R(-phi) diag(z^2, 1/z^2) R(phi): the squeezed part of its normal form.
    let gram = s.transpose() * s;
    let (z_sq, theta) = squeeze_and_angle(&(gram / gram.determinant().sqrt()));
    let z = z_sq.sqrt();
    if z - 1.0 <= 1e-12 {
        let chi = 0.0;
        let phi = normalize_angle(s[(0, 1)].atan2(s[(0, 0)]));
        return Ok(SymplecticControl { phi, z: 1.0, chi });
    }
    let phi = (-theta).rem_euclid(PI);
    let inv_squeeze = Mat2::new(1.0 / z, 0.0, 0.0, z);
    let r_chi = s * rotation(phi).transpose() * inv_squeeze;
    let chi = normalize_angle(r_chi[(0, 1)].atan2(r_chi[(0, 0)]));
    Ok(SymplecticControl { phi: normalize_angle(phi), z, chi })
}

/// Thermal-squeezed parametrisation `cov = nu R(theta) diag(y^2, 1/y^2) R(-theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalForm {
    pub nu: f64,
    pub y: f64,
    pub theta: f64,
}

pub fn cm_from_normal_form(nf: &NormalForm) -> Result<Mat2> {
    if !(nf.nu.is_finite() && nf.nu >= 1.0 - DET_TOLERANCE) {
        return Err(Error::UnphysicalState(format!(
            "symplectic eigenvalue {} below 1",
            nf.nu
        )));
    }
    if !(nf.y.is_finite() && nf.y > 0.0) {
        return Err(Error::InvalidParameter(format!("squeezing y = {} must be positive", nf.y)));
    }
    let y2 = nf.y * nf.y;
    let r = rotation(nf.theta);
    Ok(r * Mat2::new(y2, 0.0, 0.0, 1.0 / y2) * r.transpose() * nf.nu.max(1.0))
}

/// For a positive matrix `m` with unit determinant, returns the larger
/// eigenvalue and the angle `theta` in `[0, π)` such that
/// `m = R(theta) diag(l, 1/l) R(-theta)`.
fn squeeze_and_angle(m: &Mat2) -> (f64, f64) {
    let diff = m[(0, 0)] - m[(1, 1)];
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let gap = (diff * diff + 4.0 * off * off).sqrt();
    let tr = m.trace();
    if gap <= 1e-15 * tr {
        return (1.0, 0.0);
    }
    let large = 0.5 * (tr + gap);
    let theta = (0.5 * (-2.0 * off).atan2(diff)).rem_euclid(PI);
    (large, if theta >= PI { 0.0 } else { theta })
}

pub fn normal_form(cov: &Mat2) -> Result<NormalForm> {
    let cov = validate_cm(cov)?;
    let nu = cov.determinant().sqrt().max(1.0);
    let (y_sq, theta) = squeeze_and_angle(&(cov / nu));
    Ok(NormalForm { nu, y: y_sq.sqrt().max(1.0), theta })
}

pub fn apply_symplectic(state: &GaussianState, s: &Mat2) -> Result<GaussianState> {
    check_symplectic(s)?;
    let cov = s * state.cov * s.transpose();
    let cov = 0.5 * (cov + cov.transpose());
    Ok(GaussianState { mean: s * state.mean, cov })
}

/// `mu = (Det cov)^(-1/2)`.
pub fn purity(cov: &Mat2) -> Result<f64> {
    let cov = validate_cm(cov)?;
    Ok(1.0 / cov.determinant().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rotation_special_values() {
        assert_abs_diff_eq!(rotation(0.0), Mat2::identity(), epsilon = 1e-15);
        assert_abs_diff_eq!(rotation(FRAC_PI_2), omega(), epsilon = 1e-15);
        let half = rotation(PI / 6.0);
        assert_abs_diff_eq!(rotation(PI / 3.0), half * half, epsilon = 1e-15);
    }

    #[test]
    fn rotation_commutes_with_omega_and_is_orthogonal() {
        for k in 0..17 {
            let r = rotation(0.37 * k as f64);
            assert_abs_diff_eq!(r * omega(), omega() * r, epsilon = 1e-15);
            assert_abs_diff_eq!(r * r.transpose(), Mat2::identity(), epsilon = 1e-15);
        }
    }

    #[test]
    fn compose_examples() {
        let id = compose_control(&SymplecticControl::identity()).unwrap();
        assert_abs_diff_eq!(id, Mat2::identity(), epsilon = 1e-15);
        let sq = compose_control(&SymplecticControl::new(0.0, 2.0, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(sq, Mat2::new(2.0, 0.0, 0.0, 0.5), epsilon = 1e-15);
        assert!((sq.determinant() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn compose_rejects_nonpositive_squeezing() {
        let bad = SymplecticControl { phi: 0.0, z: 0.0, chi: 0.0 };
        assert!(matches!(compose_control(&bad), Err(Error::InvalidControl(_))));
        assert!(SymplecticControl::new(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn decompose_examples() {
        let c = decompose_symplectic(&Mat2::identity()).unwrap();
        assert_eq!((c.phi, c.z, c.chi), (0.0, 1.0, 0.0));

        let c = decompose_symplectic(&Mat2::new(3.0, 0.0, 0.0, 1.0 / 3.0)).unwrap();
        assert_abs_diff_eq!(c.z, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.phi, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.chi, 0.0, epsilon = 1e-12);

        let s = rotation(0.7) * Mat2::new(1.8, 0.0, 0.0, 1.0 / 1.8) * rotation(0.2);
        let c = decompose_symplectic(&s).unwrap();
        assert_abs_diff_eq!(c.chi, 0.7, epsilon = 1e-9);
        assert_abs_diff_eq!(c.z, 1.8, epsilon = 1e-9);
        assert_abs_diff_eq!(c.phi, 0.2, epsilon = 1e-9);
    }

    #[test]
    fn decompose_rejects_non_symplectic() {
        let err = decompose_symplectic(&Mat2::new(2.0, 0.0, 0.0, 2.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidMatrix { .. }));
    }

    #[test]
    fn decompose_pure_rotation_uses_chi_zero() {
        let c = decompose_symplectic(&rotation(1.3)).unwrap();
        assert_eq!(c.chi, 0.0);
        assert_eq!(c.z, 1.0);
        assert_abs_diff_eq!(c.phi, 1.3, epsilon = 1e-12);
    }

    #[test]
    fn normal_form_examples() {
        let cm = |nu, y, theta| cm_from_normal_form(&NormalForm { nu, y, theta }).unwrap();
        assert_abs_diff_eq!(cm(1.0, 1.0, 0.8), Mat2::identity(), epsilon = 1e-15);
        assert_abs_diff_eq!(cm(1.0, 2.0, FRAC_PI_2), Mat2::new(0.25, 0.0, 0.0, 4.0), epsilon = 1e-14);
        assert_abs_diff_eq!(cm(1.3, 1.7, 0.4).determinant(), 1.69, epsilon = 1e-12);

        let nf = normal_form(&Mat2::identity()).unwrap();
        assert_eq!((nf.nu, nf.y, nf.theta), (1.0, 1.0, 0.0));
        let nf = normal_form(&Mat2::new(4.0, 0.0, 0.0, 0.25)).unwrap();
        assert_abs_diff_eq!(nf.nu, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nf.y, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nf.theta, 0.0, epsilon = 1e-15);
        let nf = normal_form(&(Mat2::identity() * 2.0)).unwrap();
        assert_eq!((nf.nu, nf.y, nf.theta), (2.0, 1.0, 0.0));
    }

    #[test]
    fn unphysical_inputs_are_rejected() {
        assert!(matches!(
            cm_from_normal_form(&NormalForm { nu: 0.5, y: 1.0, theta: 0.0 }),
            Err(Error::UnphysicalState(_))
        ));
        assert!(matches!(normal_form(&(Mat2::identity() * 0.5)), Err(Error::UnphysicalState(_))));
        assert!(GaussianState::new(Vec2::zeros(), Mat2::new(1.0, 0.5, 0.4, 1.0)).is_err());
    }

    #[test]
    fn slightly_sub_unit_determinant_is_clamped() {
        let cov = Mat2::new(4.0, 0.0, 0.0, 0.25 * (1.0 - 5e-10));
        let state = GaussianState::new(Vec2::zeros(), cov).unwrap();
        assert_abs_diff_eq!(state.cov.determinant(), 1.0, epsilon = 1e-14);
        let cov = Mat2::new(4.0, 0.0, 0.0, 0.25 * (1.0 - 1e-8));
        assert!(GaussianState::new(Vec2::zeros(), cov).is_err());
    }

    #[test]
    fn apply_symplectic_examples() {
        let state = GaussianState::new(Vec2::new(0.3, -1.0), Mat2::new(2.0, 0.3, 0.3, 1.5)).unwrap();
        assert_eq!(apply_symplectic(&state, &Mat2::identity()).unwrap(), state);
        let sq = apply_symplectic(&GaussianState::vacuum(), &Mat2::new(2.0, 0.0, 0.0, 0.5)).unwrap();
        assert_abs_diff_eq!(sq.cov, Mat2::new(4.0, 0.0, 0.0, 0.25), epsilon = 1e-15);
        assert!(apply_symplectic(&state, &(Mat2::identity() * 1.1)).is_err());
    }

    #[test]
    fn purity_examples() {
        assert_eq!(purity(&Mat2::identity()).unwrap(), 1.0);
        assert_eq!(purity(&(Mat2::identity() * 2.0)).unwrap(), 0.5);
        assert_abs_diff_eq!(purity(&Mat2::new(5.0, 0.0, 0.0, 5.0 / 9.0)).unwrap(), 0.6, epsilon = 1e-15);
    }

    fn control_strategy() -> impl Strategy<Value = SymplecticControl> {
        (0.0..TAU, -3.0f64..3.0, 0.0..TAU)
            .prop_map(|(phi, lz, chi)| SymplecticControl::new(phi, lz.exp(), chi).unwrap())
    }

    fn state_strategy() -> impl Strategy<Value = GaussianState> {
        (1.0f64..4.0, 1.0f64..4.0, 0.0..PI, -2.0f64..2.0, -2.0f64..2.0).prop_map(
            |(nu, y, theta, x, p)| {
                let cov = cm_from_normal_form(&NormalForm { nu, y, theta }).unwrap();
                GaussianState::new(Vec2::new(x, p), cov).unwrap()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn composed_controls_are_symplectic(c in control_strategy()) {
            let s = compose_control(&c).unwrap();
            prop_assert!(symplectic_deviation(&s) <= 1e-12 * s.abs().max().powi(2).max(1.0));
        }

        #[test]
        fn decompose_inverts_compose(phi in 0.0..PI, lz in 0.01f64..3.0, chi in 0.0..TAU) {
            let c = SymplecticControl::new(phi, lz.exp(), chi).unwrap();
            let s = compose_control(&c).unwrap();
            let back = decompose_symplectic(&s).unwrap();
            prop_assert!((back.phi - c.phi).abs() < 1e-9);
            prop_assert!((back.z - c.z).abs() < 1e-9 * c.z);
            let dchi = (back.chi - c.chi).abs();
            prop_assert!(dchi.min(TAU - dchi) < 1e-9);
            let again = compose_control(&back).unwrap();
            prop_assert!((again - s).abs().max() < 1e-9 * s.abs().max());
        }

        #[test]
        fn decompose_reconstructs_any_control(c in control_strategy()) {
            let s = compose_control(&c).unwrap();
            let back = decompose_symplectic(&s).unwrap();
            prop_assert!(back.z >= 1.0);
            let again = compose_control(&back).unwrap();
            prop_assert!((again - s).abs().max() < 1e-9 * s.abs().max());
        }

        #[test]
        fn normal_form_round_trip(nu in 1.0f64..5.0, y in 1.0f64..6.0, theta in 0.0..PI) {
            let cov = cm_from_normal_form(&NormalForm { nu, y, theta }).unwrap();
            let nf = normal_form(&cov).unwrap();
            let back = cm_from_normal_form(&nf).unwrap();
            prop_assert!((back - cov).abs().max() < 1e-10 * cov.abs().max());
            prop_assert!((nf.nu - nu).abs() < 1e-10 * nu);
        }

        #[test]
        fn symplectic_action_preserves_eigenvalue(
            state in state_strategy(),
            c in control_strategy(),
        ) {
            let s = compose_control(&c).unwrap();
            let out = apply_symplectic(&state, &s).unwrap();
            let before = state.symplectic_eigenvalue();
            let after = out.symplectic_eigenvalue();
            prop_assert!((after - before).abs() <= 1e-10 * before * out.cov.abs().max().max(1.0));
        }
    }
}
