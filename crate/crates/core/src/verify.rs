//! Seeded verification suites.
//!
//! Each check draws its samples from a ChaCha stream derived from the seed
//! and the sample index, so results do not depend on thread scheduling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlProtocol;
use crate::dynamics::{evolve_cm, evolve_family, evolve_state, ode_integrate, FamilyKind, StateFamily, ThermalChannel};
use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::fock::{self, apply_control, cm_from_density, default_eps, gaussian_to_fock, lindblad_evolve, OracleSettings};
use crate::qfi::{angle_family, gaussian_qfi, qfi_rate, strength_family};
use crate::symplectic::{apply_symplectic, cm_from_normal_form, GaussianState, Mat2, NormalForm, SymplecticControl, Vec2};

pub const RK4_TOLERANCE: f64 = 1e-8;
pub const FD_TOLERANCE: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-5;
pub const INVARIANCE_TOLERANCE: f64 = 1e-10;
pub const ORACLE_CM_TOLERANCE: f64 = 1e-5;
pub const ORACLE_QFI_TOLERANCE: f64 = 1e-3;
/// Largest purity of the random families used for derivative checks.
pub const MAX_PURITY: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    Dynamics,
    QfiDerivative,
    Oracle,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamics" => Ok(Suite::Dynamics),
            "qfi-derivative" => Ok(Suite::QfiDerivative),
            "oracle" => Ok(Suite::Oracle),
            "all" => Ok(Suite::All),
            _ => Err(Error::InvalidConfig(format!(
                "unknown suite '{s}' (expected dynamics, qfi-derivative, oracle or all)"
            ))),
        }
    }
}

/// Aggregate of one check over many samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: usize,
    pub total: usize,
    /// Largest error seen, in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    /// First failing sample, if any.
    pub failure: Option<String>,
}

impl CheckOutcome {
    pub fn ok(&self) -> bool {
        self.total > 0 && self.passed == self.total
    }

    /// Builds an outcome from per-sample `(error, description)` pairs; an
    /// `Err` sample counts as a failure.
    pub fn collect(name: &str, tolerance: f64, samples: Vec<Result<(f64, String)>>) -> Self {
        let total = samples.len();
        let mut passed = 0;
        let mut worst: f64 = 0.0;
        let mut failure = None;
        for s in samples {
            match s {
                Ok((err, _)) if err <= tolerance => {
                    passed += 1;
                    worst = worst.max(err);
                }
                Ok((err, what)) => {
                    worst = worst.max(err);
                    failure.get_or_insert(format!("{what}: error {err:.3e}"));
                }
                Err(e) => {
                    worst = f64::INFINITY;
                    failure.get_or_insert(e.to_string());
                }
            }
        }
        Self { name: name.to_string(), passed, total, worst, tolerance, failure }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}/{} within {:.0e} (worst {:.3e})",
            if self.ok() { "PASS" } else { "FAIL" },
            self.name,
            self.passed,
            self.total,
            self.tolerance,
            self.worst
        )?;
        if let Some(msg) = &self.failure {
            write!(f, "; first failure: {msg}")?;
        }
        Ok(())
    }
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn random_cm<R: Rng>(rng: &mut R, nu_min: f64, nu_max: f64, y_max: f64) -> Mat2 {
    let nf = NormalForm {
        nu: rng.random_range(nu_min..=nu_max),
        y: rng.random_range(1.0..=y_max),
        theta: rng.random_range(0.0..PI),
    };
    cm_from_normal_form(&nf).expect("normal form parameters are valid")
}

pub fn random_control<R: Rng>(rng: &mut R) -> SymplecticControl {
    let z = rng.random_range(-1.5f64..1.5).exp();
    SymplecticControl::new(rng.random_range(0.0..2.0 * PI), z, rng.random_range(0.0..2.0 * PI))
        .expect("random control is valid")
}

/// Random family with purity at most [`MAX_PURITY`], arbitrary tangents and a
/// non-zero mean derivative.
pub fn random_family<R: Rng>(rng: &mut R) -> StateFamily {
    let cov = random_cm(rng, 1.0 / MAX_PURITY, 3.0, 3.0);
    let mean = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let (a, b, c) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let d_mean = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    StateFamily::new(
        GaussianState::new(mean, cov).expect("sampled state is physical"),
        Mat2::new(a, b, b, c),
        d_mean,
        FamilyKind::Custom,
    )
    .expect("sampled tangent is symmetric")
}

fn par_samples<F>(seed: u64, samples: usize, f: F) -> Vec<Result<(f64, String)>>
where
    F: Fn(&mut ChaCha8Rng, usize) -> Result<(f64, String)> + Sync,
{
    (0..samples).into_par_iter().map(|i| f(&mut rng_for(seed, i as u64), i)).collect()
}

/// Closed-form moments against RK4 with `dt = 1e-3`, `t ∈ [0, 3]`.
pub fn check_dynamics(seed: u64, samples: usize) -> CheckOutcome {
    let results = par_samples(seed, samples, |rng, i| {
        let cov = random_cm(rng, 1.0, 3.0, 3.0);
        let mean = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let ch = ThermalChannel::new(rng.random_range(1.0..4.0))?;
        let t = rng.random_range(0.0..=3.0);
        let (c_rk, m_rk) = ode_integrate(&cov, &mean, t, &ch, crate::dynamics::DEFAULT_STEP)?;
        let exact = evolve_state(&GaussianState::new(mean, cov)?, t, &ch)?;
        let err = (c_rk - exact.cov).abs().max().max((m_rk - exact.mean).abs().max());
        Ok((err, format!("sample {i}, t = {t:.3}")))
    });
    CheckOutcome::collect("dynamics/rk4-vs-closed-form", RK4_TOLERANCE, results)
}

/// Analytic QFI rate against the centred difference
/// `[I(2δ) - I(0)] / 2δ`, evaluated at the midpoint `δ` of the flow.
pub fn check_rate_derivative(seed: u64, samples: usize) -> CheckOutcome {
    let results = par_samples(seed, samples, |rng, i| {
        let f = random_family(rng);
        let ch = ThermalChannel::new(rng.random_range(1.0..4.0))?;
        let mid = evolve_family(&f, FD_STEP, &ch)?;
        let rate = qfi_rate(&mid, &ch)?;
        let plus = gaussian_qfi(&evolve_family(&f, 2.0 * FD_STEP, &ch)?)?.qfi;
        let minus = gaussian_qfi(&f)?.qfi;
        let fd = (plus - minus) / (2.0 * FD_STEP);
        Ok(((rate - fd).abs() / rate.abs().max(f64::MIN_POSITIVE), format!("sample {i}, rate {rate:.6e}")))
    });
    CheckOutcome::collect("qfi-derivative/finite-difference", FD_TOLERANCE, results)
}

/// QFI and its first-moment term under random covariant symplectic actions.
pub fn check_symplectic_invariance(seed: u64, samples: usize) -> Vec<CheckOutcome> {
    let results: Vec<(Result<(f64, String)>, Result<(f64, String)>)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            let f = random_family(&mut rng);
            let s = random_control(&mut rng).matrix().expect("valid control");
            let pair = gaussian_qfi(&f).and_then(|a| Ok((a, gaussian_qfi(&f.apply_symplectic(&s)?)?)));
            match pair {
                Ok((a, b)) => (
                    Ok(((a.qfi - b.qfi).abs() / a.qfi.max(1.0), format!("sample {i}"))),
                    Ok(((a.term_mean - b.term_mean).abs() / a.term_mean.max(1.0), format!("sample {i}"))),
                ),
                Err(e) => (Err(e.clone()), Err(e)),
            }
        })
        .collect();
    let (qfi, mean): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    vec![
        CheckOutcome::collect("qfi/symplectic-invariance", INVARIANCE_TOLERANCE, qfi),
        CheckOutcome::collect("qfi/mean-term-invariance", INVARIANCE_TOLERANCE, mean),
    ]
}

/// Parameter value and initial-state builder of a canonical family.
fn family_states(family: FamilyKind, y: f64, nu: f64, theta_bar: f64) -> Result<(f64, impl Fn(f64) -> Result<GaussianState>)> {
    let center = match family {
        FamilyKind::Angle => theta_bar,
        FamilyKind::Strength => 2.0 * y.ln(),
        FamilyKind::Custom => return Err(Error::InvalidParameter("custom family has no oracle builder".into())),
    };
    let build = move |p: f64| -> Result<GaussianState> {
        match family {
            FamilyKind::Angle => Ok(angle_family(y, nu, p)?.state),
            _ => Ok(strength_family(p, nu)?.state),
        }
    };
    Ok((center, build))
}

fn canonical_family(family: FamilyKind, y: f64, nu: f64, theta_bar: f64) -> Result<StateFamily> {
    match family {
        FamilyKind::Angle => angle_family(y, nu, theta_bar),
        _ => strength_family(2.0 * y.ln(), nu),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleComparison {
    pub cm_error: f64,
    pub qfi_oracle: f64,
    pub qfi_gaussian: f64,
}

impl OracleComparison {
    pub fn qfi_relative_error(&self) -> f64 {
        (self.qfi_oracle - self.qfi_gaussian).abs() / self.qfi_gaussian.abs().max(f64::MIN_POSITIVE)
    }
}

/// Fock-space evolution and fidelity QFI for a canonical family with
/// initial symplectic eigenvalue `nu`, compared to the Gaussian results.
pub fn oracle_compare(
    family: FamilyKind,
    y: f64,
    nu: f64,
    theta_bar: f64,
    n: f64,
    t: f64,
    settings: &OracleSettings,
) -> Result<OracleComparison> {
    let ch = ThermalChannel::new(n)?;
    let (center, build) = family_states(family, y, nu, theta_bar)?;
    let initial = build(center)?;
    let rho = settings.prepare_evolved(&initial, t, &ch)?;
    let cm_error = (cm_from_density(&rho).1 - evolve_cm(&initial.cov, t, &ch)?).abs().max();
    let qfi_oracle = settings.evolved_qfi(&build, center, t, &ch)?;
    let qfi_gaussian = gaussian_qfi(&evolve_family(&canonical_family(family, y, nu, theta_bar)?, t, &ch)?)?.qfi;
    Ok(OracleComparison { cm_error, qfi_oracle, qfi_gaussian })
}

/// Fidelity QFI of a delayed-control protocol at time `t`.
///
/// When the initial squeezing is within the oracle range the whole history
/// runs in Fock space: preparation, master equation up to `t_c`, the control
/// unitary, master equation again. Otherwise the state right after the
/// control is taken from the phase-space solution and only the remaining
/// evolution is simulated.
pub fn oracle_protocol_qfi(p: &ControlProtocol, t: f64, settings: &OracleSettings) -> Result<f64> {
    let ch = p.channel()?;
    let (center, build) = family_states(p.family, p.y, 1.0, p.theta_bar)?;
    let exact_nu = p.family_at(t)?.state.symplectic_eigenvalue();
    let eps = default_eps(exact_nu);
    if t < p.t_c {
        return settings.evolved_qfi(&build, center, t, &ch);
    }
    let control = p.control_at_tc()?;
    let tau = t - p.t_c;
    if settings.check_limits(&build(center)?).is_ok() {
        let fock_route = |th: f64, dim: usize| -> Result<fock::FockDensityMatrix> {
            let rho = lindblad_evolve(&gaussian_to_fock(&build(th)?, dim)?, p.t_c, &ch, settings.dt)?;
            lindblad_evolve(&apply_control(&rho, &control)?, tau, &ch, settings.dt)
        };
        return settings.family_qfi(fock_route, center, eps);
    }
    let s = control.matrix()?;
    let hybrid_route = |th: f64, dim: usize| -> Result<fock::FockDensityMatrix> {
        let st = apply_symplectic(&evolve_state(&build(th)?, p.t_c, &ch)?, &s)?;
        settings.check_limits(&st)?;
        lindblad_evolve(&gaussian_to_fock(&st, dim)?, tau, &ch, settings.dt)
    };
    settings.family_qfi(hybrid_route, center, eps)
}

/// The parameter box `y ∈ {1.2, 1.5, 2}`, `ν ∈ {1, 1.2}`, `N ∈ {1, 2}`,
/// `t ∈ {0, 0.3, 0.6}` for both families; `θ̄` is drawn from the seed.
pub fn oracle_box(seed: u64) -> Vec<(FamilyKind, f64, f64, f64, f64, f64)> {
    let mut out = Vec::new();
    let mut rng = rng_for(seed, u64::MAX);
    for family in [FamilyKind::Angle, FamilyKind::Strength] {
        for y in [1.2, 1.5, 2.0] {
            for nu in [1.0, 1.2] {
                for n in [1.0, 2.0] {
                    for t in [0.0, 0.3, 0.6] {
                        out.push((family, y, nu, rng.random_range(0.0..PI), n, t));
                    }
                }
            }
        }
    }
    out
}

pub fn check_oracle(seed: u64, settings: &OracleSettings) -> Vec<CheckOutcome> {
    let cases = oracle_box(seed);
    let results: Vec<Result<(OracleComparison, String)>> = cases
        .par_iter()
        .map(|&(family, y, nu, th, n, t)| {
            let what = format!("{family:?} y={y} nu={nu} N={n} t={t}");
            oracle_compare(family, y, nu, th, n, t, settings).map(|c| (c, what))
        })
        .collect();
    let cm = results.iter().map(|r| r.clone().map(|(c, w)| (c.cm_error, w))).collect();
    let qfi = results.into_iter().map(|r| r.map(|(c, w)| (c.qfi_relative_error(), w))).collect();
    vec![
        CheckOutcome::collect("oracle/evolved-cm", ORACLE_CM_TOLERANCE, cm),
        CheckOutcome::collect("oracle/fidelity-qfi", ORACLE_QFI_TOLERANCE, qfi),
    ]
}

/// True when the state at `θ̄` is still pure at `t > 0` while its neighbours
/// have become mixed (vacuum after an unsqueezing control, pure loss). The
/// fidelity QFI then includes the limit of the purity term, which the
/// Gaussian formula drops, so the two legitimately differ.
pub fn rank_changes(p: &ControlProtocol, t: f64) -> bool {
    t > 0.0 && p.family_at(t).map_or(false, |f| f.state.symplectic_eigenvalue() - 1.0 < 1e-12)
}

/// Oracle cross-check of a curve bundle at `points` evenly spaced grid
/// points per curve. Points whose states fall outside the oracle range, or
/// where [`rank_changes`] holds, are skipped; the second value counts them.
pub fn check_curve_oracle(cfg: &ExperimentConfig, points: usize) -> Result<(CheckOutcome, usize)> {
    cfg.validate()?;
    let settings = OracleSettings::default().with_dim(cfg.oracle_dim);
    let grid = cfg.t_grid();
    let step = (grid.len() - 1) as f64 / (points.max(2) - 1) as f64;
    let picks: Vec<f64> = (0..points.max(2)).map(|k| grid[(k as f64 * step).round() as usize]).collect();
    let jobs: Vec<(f64, f64)> = cfg.curve_labels().into_iter().flat_map(|tc| picks.iter().map(move |&t| (tc, t))).collect();
    let results: Vec<Option<Result<(f64, String)>>> = jobs
        .par_iter()
        .map(|&(tc, t)| {
            let what = format!("tc={tc} t={t}");
            let p = match ControlProtocol::new(cfg.family, cfg.y, cfg.theta_bar, cfg.big_n, tc) {
                Ok(p) => p,
                Err(e) => return Some(Err(e)),
            };
            if rank_changes(&p, t) {
                return None;
            }
            match oracle_protocol_qfi(&p, t, &settings) {
                Err(Error::InvalidParameter(msg)) if msg.contains("oracle range") => None,
                Err(e) => Some(Err(e)),
                Ok(q) => Some(p.closed_form_qfi(t).map(|exact| ((q - exact).abs() / exact.max(f64::MIN_POSITIVE), what))),
            }
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let outcome = CheckOutcome::collect("oracle/curve", ORACLE_QFI_TOLERANCE, results.into_iter().flatten().collect());
    Ok((outcome, skipped))
}

pub fn run_suite(suite: Suite, seed: u64, samples: usize) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Dynamics | Suite::All) {
        out.push(check_dynamics(seed, samples));
    }
    if matches!(suite, Suite::QfiDerivative | Suite::All) {
        out.push(check_rate_derivative(seed, samples));
        out.extend(check_symplectic_invariance(seed, samples));
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        out.extend(check_oracle(seed, &OracleSettings::default()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_parse() {
        assert_eq!("qfi-derivative".parse::<Suite>().unwrap(), Suite::QfiDerivative);
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn streams_are_reproducible() {
        let a: f64 = rng_for(7, 3).random();
        let b: f64 = rng_for(7, 3).random();
        let c: f64 = rng_for(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn random_families_respect_purity_bound() {
        let mut rng = rng_for(1, 0);
        for _ in 0..200 {
            assert!(random_family(&mut rng).purity() <= MAX_PURITY + 1e-12);
        }
    }

    #[test]
    fn small_suites_pass() {
        for check in run_suite(Suite::Dynamics, 11, 20).into_iter().chain(run_suite(Suite::QfiDerivative, 11, 20)) {
            assert!(check.ok(), "{check}");
        }
    }

    #[test]
    fn outcome_reports_failures() {
        let c = CheckOutcome::collect(
            "x",
            1e-3,
            vec![Ok((1e-4, "a".into())), Ok((1e-2, "b".into())), Err(Error::InvalidTime(-1.0))],
        );
        assert!(!c.ok());
        assert_eq!((c.passed, c.total), (1, 3));
        assert!(c.to_string().starts_with("FAIL x: 1/3"));
        assert!(c.failure.unwrap().starts_with("b"));
        assert!(!CheckOutcome::collect("empty", 1.0, vec![]).ok());
    }

    #[test]
    fn oracle_sees_purity_limit_when_rank_changes() {
        // vacuum after the control stays pure under pure loss, its neighbours do not
        let p = ControlProtocol::new(FamilyKind::Angle, 2.0, 0.4, 1.0, 0.0).unwrap();
        let c2 = (0.25f64 - 4.0).powi(2);
        let settings = OracleSettings::default();
        for t in [0.2, 0.6] {
            assert!(rank_changes(&p, t));
            let q = oracle_protocol_qfi(&p, t, &settings).unwrap();
            let limit_term = c2 * ((-t).exp() - (-2.0 * t).exp());
            let expected = p.closed_form_qfi(t).unwrap() + limit_term;
            assert!((q - expected).abs() <= 1e-4 * expected, "t={t}: {q} vs {expected}");
        }
        assert!(!rank_changes(&p, 0.0));
        let mixed = ControlProtocol::new(FamilyKind::Angle, 2.0, 0.4, 1.5, 0.0).unwrap();
        assert!(!rank_changes(&mixed, 0.3));
    }

    #[test]
    fn protocol_oracle_full_fock_route() {
        let p = ControlProtocol::new(FamilyKind::Angle, 1.5, 0.4, 1.0, 0.1).unwrap();
        let settings = OracleSettings::default();
        for t in [0.05, 0.1, 0.4] {
            let q = oracle_protocol_qfi(&p, t, &settings).unwrap();
            let exact = p.closed_form_qfi(t).unwrap();
            assert!((q - exact).abs() <= ORACLE_QFI_TOLERANCE * exact, "t={t}: {q} vs {exact}");
        }
    }
}
