//! Brute-force oracle in a truncated Fock basis.
//!
//! States are dense density matrices, the thermal attenuator is integrated as
//! a Lindblad master equation, and the QFI is recovered from the Uhlmann
//! fidelity of neighbouring states. Nothing here reuses the phase-space
//! formulas except to pick the state to prepare.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::dynamics::{ThermalChannel, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::symplectic::{normal_form, GaussianState, Mat2, SymplecticControl, Vec2};

pub type CMatrix = DMatrix<Complex64>;

pub const DEFAULT_DIM: usize = 60;
/// Largest population tolerated in the top tenth of the Fock levels.
pub const TAIL_LIMIT: f64 = 1e-6;
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;
pub const TRACE_TOLERANCE: f64 = 1e-8;
pub const EIGEN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    matrix: CMatrix,
}

fn tail_levels(dim: usize) -> usize {
    dim.div_ceil(10)
}

impl FockDensityMatrix {
    /// Validates Hermiticity, trace and positivity. The tail guard is separate,
    /// see [`FockDensityMatrix::check_tail`].
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let dim = matrix.nrows();
        if dim == 0 || matrix.ncols() != dim {
            return Err(Error::InvalidState("density matrix must be square and non-empty".into()));
        }
        let herm = (&matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(herm <= HERMITIAN_TOLERANCE) {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:.3e})")));
        }
        let trace = matrix.trace().re;
        if !(trace >= 1.0 - TRACE_TOLERANCE && trace <= 1.0 + 1e-12) {
            return Err(Error::InvalidState(format!("trace {trace} outside [1 - 1e-8, 1]")));
        }
        let rho = Self { matrix };
        let min = rho.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if min < -EIGEN_TOLERANCE {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(rho)
    }

    fn from_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        Self::number_state(0, dim)
    }

    pub fn number_state(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return Err(Error::InvalidParameter(format!("level {n} outside dimension {dim}")));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(n, n)] = Complex64::new(1.0, 0.0);
        Ok(Self { matrix: m })
    }

    /// Thermal state with mean occupation `n_bar`, populations truncated at `dim`.
    pub fn thermal(n_bar: f64, dim: usize) -> Result<Self> {
        if !(n_bar.is_finite() && n_bar >= 0.0) || dim == 0 {
            return Err(Error::InvalidParameter(format!("thermal occupation {n_bar}")));
        }
        let rho = Self { matrix: CMatrix::from_diagonal(&thermal_populations(n_bar, dim).map(Complex64::from)) };
        rho.check_tail()?;
        Ok(rho)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    /// Population of the top 10% of levels.
    pub fn tail_mass(&self) -> f64 {
        let d = self.dim();
        (d - tail_levels(d)..d).map(|k| self.matrix[(k, k)].re).sum()
    }

    pub fn check_tail(&self) -> Result<()> {
        let tail = self.tail_mass();
        if tail > TAIL_LIMIT {
            Err(Error::TruncationTooSmall { dim: self.dim(), tail })
        } else {
            Ok(())
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.hermitian_part()).eigenvalues.iter().copied().collect()
    }

    fn hermitian_part(&self) -> CMatrix {
        (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0)
    }

    /// Maximum deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Occupations below this are rounding noise in `ν - 1`.
const MIN_OCCUPATION: f64 = 1e-14;

fn thermal_populations(n_bar: f64, dim: usize) -> nalgebra::DVector<f64> {
    if n_bar < MIN_OCCUPATION {
        let mut p = nalgebra::DVector::zeros(dim);
        p[0] = 1.0;
        return p;
    }
    let q = n_bar / (n_bar + 1.0);
    nalgebra::DVector::from_fn(dim, |k, _| flush(q.powi(k as i32) / (n_bar + 1.0)))
}

/// Entries this small are far below what the fidelity can resolve, but the
/// underflow they cause inside the Givens rotations stalls or poisons the
/// eigen- and singular-value iterations.
const NEGLIGIBLE: f64 = 1e-30;

fn flush(x: f64) -> f64 {
    if x.abs() < NEGLIGIBLE {
        0.0
    } else {
        x
    }
}

fn flush_matrix(m: &CMatrix) -> CMatrix {
    m.map(|z| Complex64::new(flush(z.re), flush(z.im)))
}

/// `exp(s/2 (a†² - a²))`, which maps `x -> e^s x` and `p -> e^{-s} p`.
fn squeeze_unitary(s: f64, dim: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(dim, dim);
    for n in 0..dim.saturating_sub(2) {
        let v = 0.5 * s * (((n + 1) * (n + 2)) as f64).sqrt();
        g[(n + 2, n)] = v;
        g[(n, n + 2)] = -v;
    }
    g.exp()
}

/// `e^{-iθ n} ρ e^{iθ n}`, the phase-space rotation `R_θ` on the moments.
fn rotate(m: &mut CMatrix, theta: f64) {
    if theta == 0.0 {
        return;
    }
    let d = m.nrows();
    for j in 0..d {
        for i in 0..d {
            m[(i, j)] *= Complex64::from_polar(1.0, -theta * (i as f64 - j as f64));
        }
    }
}

/// Squeezes by `z` in a working space twice as large, then truncates back.
fn squeeze(m: &CMatrix, z: f64) -> CMatrix {
    if z == 1.0 {
        return m.clone();
    }
    let d = m.nrows();
    let w = 2 * d;
    let u = squeeze_unitary(z.ln(), w).map(Complex64::from);
    let mut big = CMatrix::zeros(w, w);
    big.view_mut((0, 0), (d, d)).copy_from(m);
    let out = &u * big * u.adjoint();
    out.view((0, 0), (d, d)).into_owned()
}

/// Density matrix of the zero-mean Gaussian state with covariance `state.cov`.
///
/// The thermal state with the right symplectic eigenvalue is squeezed and
/// rotated so that its covariance matrix matches the target exactly; no
/// squeezing-parameter convention is involved.
pub fn gaussian_to_fock(state: &GaussianState, dim: usize) -> Result<FockDensityMatrix> {
    if state.mean.norm() > 1e-12 {
        return Err(Error::InvalidParameter("the Fock oracle only handles zero-mean states".into()));
    }
    if dim < 2 {
        return Err(Error::InvalidParameter("Fock dimension must be at least 2".into()));
    }
    let nf = normal_form(&state.cov)?;
    let w = 2 * dim;
    let n_bar = 0.5 * (nf.nu - 1.0).max(0.0);
    let thermal = CMatrix::from_diagonal(&thermal_populations(n_bar, w).map(Complex64::from));
    let u = squeeze_unitary(nf.y.ln(), w).map(Complex64::from);
    let squeezed = &u * thermal * u.adjoint();
    let mut m = squeezed.view((0, 0), (dim, dim)).into_owned();
    rotate(&mut m, nf.theta);
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let rho = FockDensityMatrix::from_unchecked(m);
    rho.check_tail()?;
    Ok(rho)
}

/// First and second moments, with the covariance in the anticommutator
/// convention (vacuum has covariance `1`).
pub fn cm_from_density(rho: &FockDensityMatrix) -> (Vec2, Mat2) {
    let m = rho.matrix();
    let d = rho.dim();
    let norm = rho.trace();
    let mut a = Complex64::new(0.0, 0.0);
    let mut a2 = Complex64::new(0.0, 0.0);
    let mut n = 0.0;
    for k in 0..d {
        n += k as f64 * m[(k, k)].re;
        if k + 1 < d {
            a += m[(k + 1, k)] * ((k + 1) as f64).sqrt();
        }
        if k + 2 < d {
            a2 += m[(k + 2, k)] * (((k + 1) * (k + 2)) as f64).sqrt();
        }
    }
    let (a, a2, n) = (a / norm, a2 / norm, n / norm);
    let sxx = 2.0 * a2.re + 2.0 * n + 1.0 - 4.0 * a.re * a.re;
    let spp = -2.0 * a2.re + 2.0 * n + 1.0 - 4.0 * a.im * a.im;
    let sxp = 2.0 * a2.im - 4.0 * a.re * a.im;
    let mean = Vec2::new(2f64.sqrt() * a.re, 2f64.sqrt() * a.im);
    (mean, Mat2::new(sxx, sxp, sxp, spp))
}

/// Right-hand side of the thermal master equation
/// `(n̄+1) D[a] ρ + n̄ D[a†] ρ` with `D[L]ρ = LρL† - ½{L†L, ρ}`.
///
/// `aa†` is the product of the truncated operators (zero on the top level),
/// which keeps the trace exactly conserved.
fn lindblad_rhs(rho: &CMatrix, n_bar: f64, out: &mut CMatrix) {
    let d = rho.nrows();
    let down = n_bar + 1.0;
    let up = n_bar;
    let diag_up = |k: usize| if k + 1 < d { (k + 1) as f64 } else { 0.0 };
    for j in 0..d {
        for i in 0..d {
            let mut v = -0.5 * (down * (i + j) as f64 + up * (diag_up(i) + diag_up(j))) * rho[(i, j)];
            if i + 1 < d && j + 1 < d {
                v += down * (((i + 1) * (j + 1)) as f64).sqrt() * rho[(i + 1, j + 1)];
            }
            if i > 0 && j > 0 {
                v += up * ((i * j) as f64).sqrt() * rho[(i - 1, j - 1)];
            }
            out[(i, j)] = v;
        }
    }
}

/// Integrates the master equation with classic RK4 and fixed step `dt`.
pub fn lindblad_evolve(rho: &FockDensityMatrix, t: f64, ch: &ThermalChannel, dt: f64) -> Result<FockDensityMatrix> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidTime(t));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidStep(dt));
    }
    if t == 0.0 {
        return Ok(rho.clone());
    }
    let n_bar = ch.mean_photons();
    let d = rho.dim();
    let steps = (t / dt).ceil() as usize;
    let h = Complex64::from(t / steps as f64);
    let mut x = rho.matrix().clone();
    let (mut k1, mut k2, mut k3, mut k4) =
        (CMatrix::zeros(d, d), CMatrix::zeros(d, d), CMatrix::zeros(d, d), CMatrix::zeros(d, d));
    let half = Complex64::from(0.5);
    for _ in 0..steps {
        lindblad_rhs(&x, n_bar, &mut k1);
        lindblad_rhs(&(&x + &k1 * (h * half)), n_bar, &mut k2);
        lindblad_rhs(&(&x + &k2 * (h * half)), n_bar, &mut k3);
        lindblad_rhs(&(&x + &k3 * h), n_bar, &mut k4);
        x += (&k1 + &k2 * Complex64::from(2.0) + &k3 * Complex64::from(2.0) + &k4) * (h / 6.0);
    }
    let out = FockDensityMatrix::from_unchecked(x);
    out.check_tail()?;
    Ok(out)
}

/// `(√M, clamp)` for a Hermitian PSD matrix, where `clamp` is the most
/// negative eigenvalue that had to be set to zero.
fn psd_sqrt(m: &CMatrix) -> Result<(CMatrix, f64)> {
    let eig = SymmetricEigen::new(flush_matrix(m));
    let min = eig.eigenvalues.iter().copied().fold(0.0, f64::min);
    if min < -EIGEN_TOLERANCE {
        return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
    }
    let roots = eig.eigenvalues.map(|l| Complex64::from(l.max(0.0).sqrt()));
    let v = &eig.eigenvectors;
    Ok((v * CMatrix::from_diagonal(&roots) * v.adjoint(), min))
}

const SVD_MAX_ITERATIONS: usize = 10_000;

/// Sum of singular values. The unbounded SVD iteration can stall on
/// near-rank-one products, so it is capped and retried on the adjoint.
fn nuclear_norm(m: &CMatrix) -> Result<f64> {
    for candidate in [m.clone(), m.adjoint()] {
        if let Some(svd) = candidate.try_svd(false, false, f64::EPSILON, SVD_MAX_ITERATIONS) {
            return Ok(svd.singular_values.iter().sum());
        }
        log::debug!("SVD did not converge, retrying on the adjoint");
    }
    Err(Error::InvalidState("singular value decomposition did not converge".into()))
}

/// Uhlmann fidelity `‖√ρ √τ‖₁`, computed as the sum of singular values.
pub fn fidelity(rho: &FockDensityMatrix, tau: &FockDensityMatrix) -> Result<f64> {
    if rho.dim() != tau.dim() {
        return Err(Error::InvalidParameter(format!("dimension mismatch {} vs {}", rho.dim(), tau.dim())));
    }
    let (sr, cr) = psd_sqrt(&rho.hermitian_part())?;
    let (st, ct) = psd_sqrt(&tau.hermitian_part())?;
    let (sr, st) = (flush_matrix(&sr), flush_matrix(&st));
    let clamp = cr.min(ct);
    if clamp < 0.0 {
        log::debug!("fidelity: clamped eigenvalues down to {clamp:.3e}");
    }
    let f = nuclear_norm(&flush_matrix(&(sr * st)))?;
    Ok(f.clamp(0.0, 1.0))
}

/// Largest `1 - F` accepted for the coarse step of [`fidelity_qfi`].
pub const MAX_INFIDELITY: f64 = 1e-4;
const MAX_STEP_HALVINGS: usize = 30;

/// `8 (1 - F[ρ(θ̄), ρ(θ̄+ε)]) / ε²`, Richardson-extrapolated over `ε` and `ε/2`.
/// The step is halved until `1 - F <= MAX_INFIDELITY`.
pub fn fidelity_qfi<F>(family: F, theta_bar: f64, eps: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<FockDensityMatrix>,
{
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step {eps} must be positive")));
    }
    let center = family(theta_bar)?;
    let infidelity = |h: f64| -> Result<f64> { Ok(1.0 - fidelity(&center, &family(theta_bar + h)?)?) };
    // strongly informative families leave the quadratic regime early
    let mut eps = eps;
    let mut coarse = infidelity(eps)?;
    for _ in 0..MAX_STEP_HALVINGS {
        if coarse <= MAX_INFIDELITY {
            break;
        }
        eps *= 0.5;
        coarse = infidelity(eps)?;
    }
    let fine = infidelity(0.5 * eps)?;
    let coarse = 8.0 * coarse / (eps * eps);
    let fine = 32.0 * fine / (eps * eps);
    Ok(((4.0 * fine - coarse) / 3.0).max(0.0))
}

/// Step for [`fidelity_qfi`]: pure families need a larger one because
/// `1 - F` is then computed from nearly parallel vectors.
pub fn default_eps(nu: f64) -> f64 {
    if nu - 1.0 < 1e-9 {
        1e-2
    } else {
        1e-3
    }
}

/// Applies the Gaussian unitary of `c` (rotation by `phi`, squeeze, rotation
/// by `chi`) to a density matrix.
pub fn apply_control(rho: &FockDensityMatrix, c: &SymplecticControl) -> Result<FockDensityMatrix> {
    let mut m = rho.matrix().clone();
    rotate(&mut m, c.phi);
    let mut m = squeeze(&m, c.z);
    rotate(&mut m, c.chi);
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let out = FockDensityMatrix::from_unchecked(m);
    out.check_tail()?;
    Ok(out)
}

/// Truncation policy for the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub dim: usize,
    pub max_dim: usize,
    /// States squeezed beyond this are rejected instead of inflating `dim`.
    pub max_y: f64,
    pub max_nu: f64,
    pub dt: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM, max_dim: 4 * DEFAULT_DIM, max_y: 2.5, max_nu: 2.0, dt: DEFAULT_STEP }
    }
}

impl OracleSettings {
    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self.max_dim = self.max_dim.max(dim);
        self
    }

    pub fn check_limits(&self, state: &GaussianState) -> Result<()> {
        let nf = normal_form(&state.cov)?;
        if nf.y > self.max_y || nf.nu > self.max_nu {
            return Err(Error::InvalidParameter(format!(
                "state (y = {:.3}, nu = {:.3}) outside the oracle range y <= {}, nu <= {}",
                nf.y, nf.nu, self.max_y, self.max_nu
            )));
        }
        Ok(())
    }

    /// Smallest dimension `dim · 2^k <= max_dim` for which `build` succeeds.
    fn grow<B>(&self, build: &B, theta: f64) -> Result<(usize, FockDensityMatrix)>
    where
        B: Fn(f64, usize) -> Result<FockDensityMatrix>,
    {
        let mut dim = self.dim;
        loop {
            match build(theta, dim) {
                Err(Error::TruncationTooSmall { .. }) if 2 * dim <= self.max_dim => {
                    log::debug!("Fock truncation {dim} too small, doubling");
                    dim *= 2;
                }
                other => return other.map(|rho| (dim, rho)),
            }
        }
    }

    /// Prepares `state` and evolves it for `t`, doubling the dimension while
    /// the tail guard trips.
    pub fn prepare_evolved(&self, state: &GaussianState, t: f64, ch: &ThermalChannel) -> Result<FockDensityMatrix> {
        self.check_limits(state)?;
        let build = |_: f64, dim: usize| lindblad_evolve(&gaussian_to_fock(state, dim)?, t, ch, self.dt);
        Ok(self.grow(&build, 0.0)?.1)
    }

    /// Fidelity QFI of `build(θ, dim)`, with the dimension fixed by the
    /// state at `theta_bar`.
    pub fn family_qfi<B>(&self, build: B, theta_bar: f64, eps: f64) -> Result<f64>
    where
        B: Fn(f64, usize) -> Result<FockDensityMatrix>,
    {
        let (dim, _) = self.grow(&build, theta_bar)?;
        fidelity_qfi(|th| build(th, dim), theta_bar, eps)
    }

    /// Fidelity QFI of a one-parameter family of initial states evolved for `t`.
    pub fn evolved_qfi<F>(&self, family: F, theta_bar: f64, t: f64, ch: &ThermalChannel) -> Result<f64>
    where
        F: Fn(f64) -> Result<GaussianState>,
    {
        let center = family(theta_bar)?;
        let eps = default_eps(crate::dynamics::evolve_state(&center, t, ch)?.symplectic_eigenvalue());
        let build = |th: f64, dim: usize| {
            let s = family(th)?;
            self.check_limits(&s)?;
            lindblad_evolve(&gaussian_to_fock(&s, dim)?, t, ch, self.dt)
        };
        self.family_qfi(build, theta_bar, eps)
    }
}
