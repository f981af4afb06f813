//! Paired runs toward the two endpoints of the angle range: a CGL trajectory
//! at angle `theta` co-evolved in lockstep with its heat (`theta = 0`) or
//! Schrodinger (`theta = pi/2`) reference, tracking the `H^1` difference and
//! fitting the decay of `sup_t ||difference||` against the angular gap.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsError};
use crate::grid::{
    self, min_image_dist_sq, mode_k2, to_spectral, Complex64, Field, GridSpec,
};
use crate::ground_state::{self, AdmissibilityReport};
use crate::semiflow::{
    ground_state_constants_cached, EquationSpec, SemiflowError, Stepper, StepperConfig, Trajectory,
};

/// Relative mass allowed outside `|x - c| < L/4` for localized data.
pub const TAIL_MASS_LIMIT: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LimitsError {
    #[error("invalid initial data: {0}")]
    InvalidData(String),
    #[error("initial data not concentrated: mass fraction {fraction:.3e} outside |x - c| < L/4 exceeds {limit:.0e}")]
    TailMass { fraction: f64, limit: f64 },
    #[error("pair target mismatch: {0}")]
    WrongTarget(String),
    #[error("inviscid pairs require d = 4, mu = -1; set the exploratory flag to deviate")]
    NotTheoremSetting,
    #[error("sweep needs at least 3 theta values, got {0}")]
    TooFewThetas(usize),
    #[error("angular gap must be positive, got {0:.3e} at theta = {1}")]
    NonPositiveGap(f64, f64),
    #[error("degenerate fit: the gaps have no spread")]
    DegenerateFit,
    #[error(transparent)]
    Semiflow(#[from] SemiflowError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Grid(#[from] grid::GridError),
    #[error(transparent)]
    GroundState(#[from] ground_state::GroundStateError),
}

/// Initial-data descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum DataKind {
    /// `a exp(-|x - c|^2 / sigma^2)` with the minimum-image distance.
    Gaussian { a: f64, center: Vec<f64>, sigma: f64 },
    /// Gaussian times a plane-wave phase `e^{i m x_1}`.
    ModulatedGaussian {
        a: f64,
        center: Vec<f64>,
        sigma: f64,
        m: f64,
    },
    /// `a` times the rescaled ground state (d = 3, 4 only).
    ScaledGroundState {
        a: f64,
        lambda: f64,
        center: Vec<f64>,
    },
}

fn check_center(center: &[f64], grid: &GridSpec) -> Result<(), LimitsError> {
    if center.len() != grid.d {
        return Err(LimitsError::InvalidData(format!(
            "center has {} coordinates for a {}-dimensional grid",
            center.len(),
            grid.d
        )));
    }
    if center.iter().any(|c| !c.is_finite()) {
        return Err(LimitsError::InvalidData("non-finite center".into()));
    }
    Ok(())
}

fn tail_mass_fraction(f: &Field, center: &[f64]) -> f64 {
    let quarter = f.grid.length / 4.0;
    let q2 = quarter * quarter;
    let mut total = 0.0;
    let mut tail = 0.0;
    for (idx, v) in f.values.iter().enumerate() {
        let p = v.norm_sqr();
        total += p;
        if min_image_dist_sq(&f.grid.coords(idx), center, f.grid.length) >= q2 {
            tail += p;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

/// Build the initial field for `kind` on `grid`. Gaussian kinds are gated on
/// the tail-mass localization rule; the ground-state kind is exempt because
/// its power-law tail is part of the profile being studied.
pub fn initial_data(kind: &DataKind, grid: &GridSpec) -> Result<Field, LimitsError> {
    match kind {
        DataKind::Gaussian { a, center, sigma } | DataKind::ModulatedGaussian {
            a,
            center,
            sigma,
            ..
        } => {
            check_center(center, grid)?;
            if !(*sigma > 0.0) || !sigma.is_finite() {
                return Err(LimitsError::InvalidData(format!("sigma must be positive, got {sigma}")));
            }
            if !a.is_finite() {
                return Err(LimitsError::InvalidData(format!("non-finite amplitude {a}")));
            }
            let m = match kind {
                DataKind::ModulatedGaussian { m, .. } => *m,
                _ => 0.0,
            };
            let s2 = sigma * sigma;
            let f = Field::from_fn(*grid, |x| {
                let r2 = min_image_dist_sq(x, center, grid.length);
                let env = a * (-r2 / s2).exp();
                env * Complex64::new(0.0, m * x[0]).exp()
            });
            let fraction = tail_mass_fraction(&f, center);
            if fraction > TAIL_MASS_LIMIT {
                return Err(LimitsError::TailMass {
                    fraction,
                    limit: TAIL_MASS_LIMIT,
                });
            }
            Ok(f)
        }
        DataKind::ScaledGroundState { a, lambda, center } => {
            check_center(center, grid)?;
            if !a.is_finite() {
                return Err(LimitsError::InvalidData(format!("non-finite amplitude {a}")));
            }
            let w = ground_state::sample_ground_state(*grid, center, *lambda)?;
            Ok(w.scale(Complex64::new(*a, 0.0)))
        }
    }
}

/// Which endpoint the pair compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitTarget {
    Heat,
    Schrodinger,
}

impl LimitTarget {
    pub fn reference_theta(&self) -> f64 {
        match self {
            LimitTarget::Heat => 0.0,
            LimitTarget::Schrodinger => FRAC_PI_2,
        }
    }

    /// `g(theta)`: distance of `e^{i theta}` from the endpoint coefficient.
    pub fn gap(&self, theta: f64) -> f64 {
        let rot = Complex64::new(theta.cos(), theta.sin());
        let endpoint = match self {
            LimitTarget::Heat => Complex64::new(1.0, 0.0),
            LimitTarget::Schrodinger => Complex64::new(0.0, 1.0),
        };
        (rot - endpoint).norm()
    }
}

#[derive(Debug, Clone)]
pub struct PairRunConfig {
    pub grid: GridSpec,
    pub target: LimitTarget,
    pub theta: f64,
    pub mu: i8,
    pub data: DataKind,
    /// Added to the CGL run's data only, so `v_0^theta != u_0`.
    pub perturbation: Option<DataKind>,
    pub horizon: f64,
    pub stepper: StepperConfig,
    /// Allow settings outside the focusing d = 4 inviscid theorem.
    pub exploratory: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub theta: f64,
    pub target: LimitTarget,
    /// `g(theta)` at the run's angle.
    pub gap: f64,
    pub times: Vec<f64>,
    pub h1_series: Vec<f64>,
    pub l2_series: Vec<f64>,
    pub sup_h1: f64,
    pub sup_l2: f64,
    /// Measured `||v_0^theta - u_0||_{H^1}` (0 without perturbation).
    pub epsilon: f64,
    /// Reports for (CGL data, reference data); kept only for focusing runs.
    pub admissibility: Option<(AdmissibilityReport, AdmissibilityReport)>,
    pub cgl: Trajectory,
    pub reference: Trajectory,
}

fn spectral_distances(a: &[Complex64], b: &[Complex64], grid: &GridSpec) -> (f64, f64) {
    let k2 = mode_k2(grid);
    let vol = grid.volume();
    let (mut s0, mut s1) = (0.0, 0.0);
    for ((&x, &y), &k2) in a.iter().zip(b).zip(&k2) {
        let p = (x - y).norm_sqr();
        s0 += p;
        s1 += k2 * p;
    }
    ((vol * (s0 + s1)).sqrt(), (vol * s0).sqrt())
}

/// Co-evolve the CGL run and its endpoint reference in lockstep on the shared
/// grid and step size, recording the spectral `H^1`/`L^2` distance at every
/// sample time.
fn run_pair(cfg: &PairRunConfig, reference_theta: f64) -> Result<PairResult, LimitsError> {
    cfg.stepper.validate()?;
    let grid = cfg.grid;
    let spec_cgl = EquationSpec::new(cfg.theta, cfg.mu, grid.d)?;
    let spec_ref = EquationSpec::new(reference_theta, cfg.mu, grid.d)?;

    let u0 = initial_data(&cfg.data, &grid)?;
    let v0 = match &cfg.perturbation {
        Some(p) => u0.add(&initial_data(p, &grid)?)?,
        None => u0.clone(),
    };
    let epsilon = diagnostics::h1_distance(&v0, &u0)?;

    let mut admissibility = None;
    if cfg.mu == -1 && (grid.d == 3 || grid.d == 4) {
        let consts = ground_state_constants_cached(grid.d)?;
        let rep_v = ground_state::admissibility(&v0, cfg.mu, &consts)?;
        let rep_u = ground_state::admissibility(&u0, cfg.mu, &consts)?;
        if !(rep_v.admissible && rep_u.admissible) && !cfg.exploratory {
            let worst = if rep_v.energy_margin <= rep_u.energy_margin {
                &rep_v
            } else {
                &rep_u
            };
            return Err(LimitsError::Semiflow(SemiflowError::NotAdmissible {
                energy_margin: worst.energy_margin,
                kinetic_margin: worst.kinetic_margin,
            }));
        }
        admissibility = Some((rep_v, rep_u));
    }

    // theorem-window warning uses the measured perturbation size as epsilon
    let gap = cfg.target.gap(cfg.theta);
    if epsilon > 0.0 && gap > 0.0 {
        let window = match cfg.target {
            LimitTarget::Heat => epsilon * epsilon / (gap * gap),
            LimitTarget::Schrodinger => epsilon / gap,
        };
        if cfg.horizon >= window {
            eprintln!(
                "warning: horizon {} reaches the theorem window {:.3e} for epsilon = {:.3e}, gap = {:.3e}",
                cfg.horizon, window, epsilon, gap
            );
        }
    }

    if !(cfg.horizon > 0.0) || !cfg.horizon.is_finite() {
        return Err(LimitsError::Semiflow(SemiflowError::InvalidHorizon(
            cfg.horizon,
        )));
    }

    let dt = cfg.stepper.dt;
    let nsteps = ((cfg.horizon / dt).ceil() as usize).max(1);
    let dt_last = cfg.horizon - (nsteps - 1) as f64 * dt;
    let short_last = (dt_last - dt).abs() > 1e-12 * dt;

    let make = |theta_spec: &EquationSpec, step_dt: f64| {
        Stepper::with_dt(grid, *theta_spec, cfg.stepper, step_dt)
    };
    let step_v = make(&spec_cgl, dt)?;
    let step_u = make(&spec_ref, dt)?;
    let (last_v, last_u) = if short_last {
        (Some(make(&spec_cgl, dt_last)?), Some(make(&spec_ref, dt_last)?))
    } else {
        (None, None)
    };

    let mut traj_v = Trajectory::empty(spec_cgl, grid, &cfg.stepper);
    let mut traj_u = Trajectory::empty(spec_ref, grid, &cfg.stepper);
    let mut sv = to_spectral(&v0)?.coeffs;
    let mut su = to_spectral(&u0)?.coeffs;

    let mut times = Vec::new();
    let mut h1_series = Vec::new();
    let mut l2_series = Vec::new();

    let mut sample = |sv: &[Complex64],
                      su: &[Complex64],
                      t: f64,
                      traj_v: &mut Trajectory,
                      traj_u: &mut Trajectory|
     -> Result<(), LimitsError> {
        let rv = diagnostics::record_spectral(sv, &grid, &spec_cgl, cfg.stepper.dealias_factor, t)?;
        let ru = diagnostics::record_spectral(su, &grid, &spec_ref, cfg.stepper.dealias_factor, t)?;
        if !rv.is_finite() || !ru.is_finite() {
            return Err(LimitsError::Semiflow(SemiflowError::Instability {
                t,
                trajectory: Box::new(traj_v.clone()),
            }));
        }
        traj_v.records.push(rv);
        traj_u.records.push(ru);
        let (h1, l2) = spectral_distances(sv, su, &grid);
        times.push(t);
        h1_series.push(h1);
        l2_series.push(l2);
        Ok(())
    };

    sample(&sv, &su, 0.0, &mut traj_v, &mut traj_u)?;
    for i in 1..=nsteps {
        let t_prev = (i - 1) as f64 * dt;
        let (av, au): (&Stepper, &Stepper) = if i == nsteps && short_last {
            (last_v.as_ref().unwrap(), last_u.as_ref().unwrap())
        } else {
            (&step_v, &step_u)
        };
        sv = av.step_spectral(t_prev, &sv);
        su = au.step_spectral(t_prev, &su);
        let t = if i == nsteps { cfg.horizon } else { i as f64 * dt };
        let finite = |s: &[Complex64]| s.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        if !finite(&sv) || !finite(&su) {
            return Err(LimitsError::Semiflow(SemiflowError::Instability {
                t,
                trajectory: Box::new(traj_v),
            }));
        }
        if i % cfg.stepper.sample_stride == 0 || i == nsteps {
            sample(&sv, &su, t, &mut traj_v, &mut traj_u)?;
        }
    }

    let sup_h1 = h1_series.iter().cloned().fold(0.0, f64::max);
    let sup_l2 = l2_series.iter().cloned().fold(0.0, f64::max);
    Ok(PairResult {
        theta: cfg.theta,
        target: cfg.target,
        gap,
        times,
        h1_series,
        l2_series,
        sup_h1,
        sup_l2,
        epsilon,
        admissibility,
        cgl: traj_v,
        reference: traj_u,
    })
}

/// Theta-to-zero pair: CGL at `cfg.theta` against the heat reference.
pub fn run_zero_dispersion_pair(cfg: &PairRunConfig) -> Result<PairResult, LimitsError> {
    if cfg.target != LimitTarget::Heat {
        return Err(LimitsError::WrongTarget(
            "run_zero_dispersion_pair needs target = heat".into(),
        ));
    }
    run_pair(cfg, 0.0)
}

/// Theta-to-pi/2 pair: CGL against the NLS reference. The theorem setting is
/// d = 4, mu = -1; anything else needs the exploratory flag.
pub fn run_inviscid_pair(cfg: &PairRunConfig) -> Result<PairResult, LimitsError> {
    if cfg.target != LimitTarget::Schrodinger {
        return Err(LimitsError::WrongTarget(
            "run_inviscid_pair needs target = schrodinger".into(),
        ));
    }
    if !(cfg.grid.d == 4 && cfg.mu == -1) && !cfg.exploratory {
        return Err(LimitsError::NotTheoremSetting);
    }
    run_pair(cfg, FRAC_PI_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Dispersion,
    Inviscid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub mode: SweepMode,
    /// `(theta, gap, sup_h1, sup_l2)` per member, in input order.
    pub points: Vec<(f64, f64, f64, f64)>,
    pub slope: f64,
    pub constant: f64,
    /// RMS residual of `log(sup_h1)` about the fitted line.
    pub fit_residual: f64,
}

/// Least squares of `y = slope x + intercept`; returns `(slope, intercept,
/// rms residual)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64), LimitsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(LimitsError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    Ok((slope, intercept, (rss / n).sqrt()))
}

/// Fit `log(sup_h1) = slope log(gap) + log(constant)` from measured points.
pub fn fit_points(
    mode: SweepMode,
    points: Vec<(f64, f64, f64, f64)>,
) -> Result<SweepResult, LimitsError> {
    if points.len() < 3 {
        return Err(LimitsError::TooFewThetas(points.len()));
    }
    for &(theta, gap, _, _) in &points {
        if !(gap > 0.0) {
            return Err(LimitsError::NonPositiveGap(gap, theta));
        }
    }
    let x: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.2.max(1e-300).ln()).collect();
    let (slope, intercept, fit_residual) = linear_fit(&x, &y)?;
    Ok(SweepResult {
        mode,
        points,
        slope,
        constant: intercept.exp(),
        fit_residual,
    })
}

/// Run one pair per theta (in parallel; each member owns its fields) and fit
/// the decay law. Members share grid, data, dt, and horizon from `base`.
pub fn sweep_and_fit(
    base: &PairRunConfig,
    thetas: &[f64],
    mode: SweepMode,
) -> Result<(SweepResult, Vec<PairResult>), LimitsError> {
    if thetas.len() < 3 {
        return Err(LimitsError::TooFewThetas(thetas.len()));
    }
    let results: Vec<Result<PairResult, LimitsError>> = thetas
        .par_iter()
        .map(|&theta| {
            let member = PairRunConfig {
                theta,
                target: match mode {
                    SweepMode::Dispersion => LimitTarget::Heat,
                    SweepMode::Inviscid => LimitTarget::Schrodinger,
                },
                ..base.clone()
            };
            match mode {
                SweepMode::Dispersion => run_zero_dispersion_pair(&member),
                SweepMode::Inviscid => run_inviscid_pair(&member),
            }
        })
        .collect();
    let mut members = Vec::with_capacity(results.len());
    for r in results {
        members.push(r?);
    }
    let points = members
        .iter()
        .map(|m| (m.theta, m.gap, m.sup_h1, m.sup_l2))
        .collect();
    let sweep = fit_points(mode, points)?;
    Ok((sweep, members))
}
