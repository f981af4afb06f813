//! Time integration of `v_t = e^{i theta} (laplacian v - mu |v|^{4/(d-2)} v)`
//! with ETDRK4: the linear semigroup is applied exactly per mode, so one code
//! path covers the stiff parabolic regime (theta near 0) and the oscillatory
//! regime (theta near pi/2) without switching integrators mid-sweep.
//!
//! For d = 1, 2 the critical exponent is singular; those dimensions run a
//! cubic smoke mode for integrator tests and are excluded from the
//! theorem-facing experiments.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::diagnostics::{self, DiagnosticRecord};
use crate::fft;
use crate::grid::{self, from_spectral, mode_k2, to_spectral, Complex64, Field, GridSpec};
use crate::ground_state::{self, GroundStateConstants};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Error)]
pub enum SemiflowError {
    #[error("theta {0} outside [-pi/2, pi/2]")]
    ThetaOutOfRange(f64),
    #[error("NLS endpoint |theta| = pi/2 requires mu = -1, d = 4 or mu = +1")]
    InvalidNlsEndpoint,
    #[error("mu must be +1 or -1, got {0}")]
    InvalidMu(i8),
    #[error("dimension {0} out of range 1..=4")]
    DimensionOutOfRange(usize),
    #[error("time step {0} must be positive")]
    InvalidDt(f64),
    #[error("sample stride must be >= 1")]
    InvalidStride,
    #[error("final time {0} must be positive")]
    InvalidHorizon(f64),
    #[error("initial data not admissible (energy margin {energy_margin:.6e}, kinetic margin {kinetic_margin:.6e}); pass the override to force the run")]
    NotAdmissible {
        energy_margin: f64,
        kinetic_margin: f64,
    },
    #[error("instability: non-finite field at t = {t}")]
    Instability { t: f64, trajectory: Box<Trajectory> },
    #[error("threshold exit: kinetic energy crossed ||grad W||^2 at t = {t}")]
    ThresholdExit { t: f64, trajectory: Box<Trajectory> },
    #[error(transparent)]
    Grid(#[from] grid::GridError),
    #[error("ground-state constants unavailable: {0}")]
    GroundState(#[from] ground_state::GroundStateError),
}

/// Which member of the CGL family: angle, focusing sign, dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquationSpec {
    pub theta: f64,
    pub mu: i8,
    pub d: usize,
}

impl EquationSpec {
    pub fn new(theta: f64, mu: i8, d: usize) -> Result<Self, SemiflowError> {
        if !(1..=4).contains(&d) {
            return Err(SemiflowError::DimensionOutOfRange(d));
        }
        if mu != 1 && mu != -1 {
            return Err(SemiflowError::InvalidMu(mu));
        }
        if !theta.is_finite() || theta.abs() > FRAC_PI_2 {
            return Err(SemiflowError::ThetaOutOfRange(theta));
        }
        let spec = EquationSpec { theta, mu, d };
        if spec.is_nls_endpoint() && mu == -1 && d != 4 {
            return Err(SemiflowError::InvalidNlsEndpoint);
        }
        Ok(spec)
    }

    /// `|theta| = pi/2`: zero dissipation.
    pub fn is_nls_endpoint(&self) -> bool {
        (self.theta.abs() - FRAC_PI_2).abs() < 1e-12
    }

    /// `e^{i theta}`
    pub fn rotation(&self) -> Complex64 {
        Complex64::new(self.theta.cos(), self.theta.sin())
    }

    /// Exponent `q` in `f(v) = |v|^q v`: `4/(d-2)` for d = 3, 4, cubic smoke
    /// mode (`q = 2`) for d = 1, 2.
    pub fn amp_exponent(&self) -> u32 {
        match self.d {
            3 => 4,
            _ => 2,
        }
    }

    /// Exponent of the energy potential term, `2d/(d-2)` in the critical
    /// dimensions (equals `amp_exponent + 2`).
    pub fn potential_exponent(&self) -> u32 {
        self.amp_exponent() + 2
    }

    /// Exponent of the dissipation term `||v||^{2(d+2)/(d-2)}`
    /// (equals `2 amp_exponent + 2`).
    pub fn hi_exponent(&self) -> u32 {
        2 * self.amp_exponent() + 2
    }

    /// Pointwise nonlinearity `f(v) = |v|^q v`.
    #[inline]
    pub fn nonlin_pointwise(&self, v: Complex64) -> Complex64 {
        let a2 = v.norm_sqr();
        match self.amp_exponent() {
            2 => v * a2,
            4 => v * (a2 * a2),
            _ => unreachable!(),
        }
    }
}

/// Zero-padding factor for dealiased nonlinearity evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DealiasFactor {
    One,
    ThreeHalves,
    Two,
    Three,
}

impl DealiasFactor {
    pub fn padded_n(&self, n: usize) -> usize {
        match self {
            DealiasFactor::One => n,
            DealiasFactor::ThreeHalves => 3 * n / 2,
            DealiasFactor::Two => 2 * n,
            DealiasFactor::Three => 3 * n,
        }
    }

    /// Exact factor for the dimension's nonlinearity: cubic needs 2,
    /// quintic needs 3.
    pub fn default_for(d: usize) -> Self {
        match d {
            3 => DealiasFactor::Three,
            _ => DealiasFactor::Two,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            DealiasFactor::One => 1.0,
            DealiasFactor::ThreeHalves => 1.5,
            DealiasFactor::Two => 2.0,
            DealiasFactor::Three => 3.0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "1" => Some(DealiasFactor::One),
            "3/2" | "1.5" => Some(DealiasFactor::ThreeHalves),
            "2" => Some(DealiasFactor::Two),
            "3" => Some(DealiasFactor::Three),
            _ => None,
        }
    }
}

/// Default step size: parabolic-style bound away from the NLS endpoint,
/// accuracy-style bound near it, clipped to `[1e-5, 1e-2]`.
pub fn default_dt(grid: &GridSpec, theta: f64) -> f64 {
    let dx = grid.dx();
    let parabolic = 0.5 * dx * dx / (4.0 * theta.cos() + 0.1);
    parabolic.min(0.05 * dx).clamp(1e-5, 1e-2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub dealias_factor: DealiasFactor,
    /// `|z|` below which the ETD coefficients use the Taylor series.
    pub coefficient_switch_radius: f64,
    pub sample_stride: usize,
    /// Disable the nonlinear term (exact semigroup runs).
    pub linear_only: bool,
}

impl StepperConfig {
    pub fn default_for(grid: &GridSpec, spec: &EquationSpec) -> Self {
        StepperConfig {
            dt: default_dt(grid, spec.theta),
            dealias_factor: DealiasFactor::default_for(spec.d),
            coefficient_switch_radius: 2.0,
            sample_stride: 10,
            linear_only: false,
        }
    }

    pub fn validate(&self) -> Result<(), SemiflowError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SemiflowError::InvalidDt(self.dt));
        }
        if self.sample_stride < 1 {
            return Err(SemiflowError::InvalidStride);
        }
        Ok(())
    }
}

/// Per-mode ETDRK4 coefficient arrays (Cox-Matthews tableau).
#[derive(Debug, Clone)]
pub struct EtdCoefficients {
    pub e_full: Vec<Complex64>,
    pub e_half: Vec<Complex64>,
    /// `h (e^{z/2}-1)/z` stage propagator weight
    pub q: Vec<Complex64>,
    /// `h (phi1 - 3 phi2 + 4 phi3)`
    pub f1: Vec<Complex64>,
    /// `h (phi2 - 2 phi3)` (enters the update doubled)
    pub f2: Vec<Complex64>,
    /// `h (4 phi3 - phi2)`
    pub f3: Vec<Complex64>,
    pub dt: f64,
}

/// `phi_k(z) = sum_j z^j / (j+k)!` by Taylor series; converges without
/// cancellation for moderate `|z|`.
fn phi_series(z: Complex64, k: u32) -> Complex64 {
    let mut term = Complex64::new(1.0, 0.0);
    let mut fact = 1.0f64;
    for j in 1..=k {
        fact *= j as f64;
    }
    term /= fact;
    let mut sum = term;
    for j in 1..=60u32 {
        term = term * z / (j + k) as f64;
        sum += term;
        if term.norm() < 1e-20 * sum.norm().max(1e-300) {
            break;
        }
    }
    sum
}

/// Direct rational formulas; only safe away from `z = 0`.
fn coeff_direct(z: Complex64) -> [Complex64; 4] {
    let ez = z.exp();
    let z3 = z * z * z;
    let q = ((z / 2.0).exp() - 1.0) / z;
    let f1 = (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
    let f2 = (2.0 + z + ez * (z - 2.0)) / z3;
    let f3 = (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
    [q, f1, f2, f3]
}

/// Cancellation-safe evaluation: mean over a radius-1 contour circle about
/// `z` (the coefficients are entire, so the mean equals the value).
fn coeff_contour(z: Complex64) -> [Complex64; 4] {
    const M: usize = 64;
    let mut acc = [Complex64::default(); 4];
    for j in 0..M {
        let phase = std::f64::consts::PI * (2.0 * j as f64 + 1.0) / M as f64;
        let zp = z + Complex64::new(phase.cos(), phase.sin());
        let v = coeff_direct(zp);
        for i in 0..4 {
            acc[i] += v[i];
        }
    }
    for a in acc.iter_mut() {
        *a /= M as f64;
    }
    acc
}

fn coeff_series(z: Complex64) -> [Complex64; 4] {
    let p1 = phi_series(z, 1);
    let p2 = phi_series(z, 2);
    let p3 = phi_series(z, 3);
    let q = phi_series(z / 2.0, 1) / 2.0;
    [q, p1 - 3.0 * p2 + 4.0 * p3, p2 - 2.0 * p3, 4.0 * p3 - p2]
}

/// ETDRK4 coefficients for the per-mode symbols `z = dt * lambda(k)`.
pub fn etd_coefficients(symbol: &[Complex64], dt: f64, switch_radius: f64) -> EtdCoefficients {
    let m = symbol.len();
    let mut out = EtdCoefficients {
        e_full: Vec::with_capacity(m),
        e_half: Vec::with_capacity(m),
        q: Vec::with_capacity(m),
        f1: Vec::with_capacity(m),
        f2: Vec::with_capacity(m),
        f3: Vec::with_capacity(m),
        dt,
    };
    for &z in symbol {
        out.e_full.push(z.exp());
        out.e_half.push((z / 2.0).exp());
        let c = if z.norm() < switch_radius {
            coeff_series(z)
        } else {
            coeff_contour(z)
        };
        out.q.push(dt * c[0]);
        out.f1.push(dt * c[1]);
        out.f2.push(dt * c[2]);
        out.f3.push(dt * c[3]);
    }
    out
}

/// Per-mode linear symbol `e^{i theta} (-|k|^2)`.
pub fn linear_symbol(grid: &GridSpec, spec: &EquationSpec) -> Vec<Complex64> {
    let rot = spec.rotation();
    mode_k2(grid).iter().map(|&k2| rot * (-k2)).collect()
}

/// Spectral interpolation of coefficients onto the `np`-point padded grid
/// (physical values on the fine grid).
pub(crate) fn fine_values(
    coeffs: &[Complex64],
    grid: &GridSpec,
    np: usize,
) -> Vec<Complex64> {
    let mut vals = grid::pad_spectrum(coeffs, grid.d, grid.n, np);
    fft::inverse_cube(&mut vals, grid.d, np);
    vals
}

/// Dealiased truncated spectrum of `f(v)` given the spectrum of `v`.
pub(crate) fn nonlin_spectral(
    coeffs: &[Complex64],
    grid: &GridSpec,
    spec: &EquationSpec,
    dealias: DealiasFactor,
) -> Vec<Complex64> {
    let np = dealias.padded_n(grid.n);
    let mut vals = fine_values(coeffs, grid, np);
    for v in vals.iter_mut() {
        *v = spec.nonlin_pointwise(*v);
    }
    fft::forward_cube(&mut vals, grid.d, np);
    grid::truncate_spectrum(&vals, grid.d, grid.n, np)
}

/// Pointwise `|v|^{4/(d-2)} v` evaluated on the zero-padded grid, truncated
/// back to the field's grid.
pub fn nonlinearity(
    f: &Field,
    spec: &EquationSpec,
    dealias: DealiasFactor,
) -> Result<Field, SemiflowError> {
    let g = to_spectral(f)?;
    let out = nonlin_spectral(&g.coeffs, &f.grid, spec, dealias);
    Ok(from_spectral(&grid::SpectralField {
        grid: f.grid,
        coeffs: out,
    })?)
}

/// Optional external forcing, added to `v_t` (used by manufactured-solution
/// order checks).
pub type Forcing<'a> = &'a dyn Fn(f64, &GridSpec) -> Field;

pub struct Stepper<'a> {
    pub grid: GridSpec,
    pub spec: EquationSpec,
    pub cfg: StepperConfig,
    coeffs: EtdCoefficients,
    forcing: Option<Forcing<'a>>,
}

impl<'a> Stepper<'a> {
    pub fn new(grid: GridSpec, spec: EquationSpec, cfg: StepperConfig) -> Result<Self, SemiflowError> {
        cfg.validate()?;
        Self::with_dt(grid, spec, cfg, cfg.dt)
    }

    pub fn with_dt(
        grid: GridSpec,
        spec: EquationSpec,
        cfg: StepperConfig,
        dt: f64,
    ) -> Result<Self, SemiflowError> {
        let symbol: Vec<Complex64> = linear_symbol(&grid, &spec)
            .iter()
            .map(|&z| z * dt)
            .collect();
        let coeffs = etd_coefficients(&symbol, dt, cfg.coefficient_switch_radius);
        Ok(Stepper {
            grid,
            spec,
            cfg,
            coeffs,
            forcing: None,
        })
    }

    pub fn set_forcing(&mut self, forcing: Option<Forcing<'a>>) {
        self.forcing = forcing;
    }

    pub fn dt(&self) -> f64 {
        self.coeffs.dt
    }

    /// `N(t, v) = -mu e^{i theta} f(v) + F(t)` in spectral space.
    fn eval_n(&self, t: f64, state: &[Complex64]) -> Vec<Complex64> {
        let mut n = if self.cfg.linear_only {
            vec![Complex64::default(); state.len()]
        } else {
            let scale = -(self.spec.mu as f64) * self.spec.rotation();
            let mut f = nonlin_spectral(state, &self.grid, &self.spec, self.cfg.dealias_factor);
            for v in f.iter_mut() {
                *v *= scale;
            }
            f
        };
        if let Some(forcing) = self.forcing {
            let fld = forcing(t, &self.grid);
            let fhat = to_spectral(&fld).expect("forcing must be finite");
            for (a, b) in n.iter_mut().zip(&fhat.coeffs) {
                *a += b;
            }
        }
        n
    }

    /// One Cox-Matthews ETDRK4 step of the spectral state at time `t`.
    pub fn step_spectral(&self, t: f64, u: &[Complex64]) -> Vec<Complex64> {
        let c = &self.coeffs;
        let h = c.dt;
        let nu = self.eval_n(t, u);
        let m = u.len();
        let mut a = vec![Complex64::default(); m];
        for i in 0..m {
            a[i] = c.e_half[i] * u[i] + c.q[i] * nu[i];
        }
        let na = self.eval_n(t + h / 2.0, &a);
        let mut b = vec![Complex64::default(); m];
        for i in 0..m {
            b[i] = c.e_half[i] * u[i] + c.q[i] * na[i];
        }
        let nb = self.eval_n(t + h / 2.0, &b);
        let mut cc = vec![Complex64::default(); m];
        for i in 0..m {
            cc[i] = c.e_half[i] * a[i] + c.q[i] * (2.0 * nb[i] - nu[i]);
        }
        let nc = self.eval_n(t + h, &cc);
        let mut out = vec![Complex64::default(); m];
        for i in 0..m {
            out[i] = c.e_full[i] * u[i]
                + c.f1[i] * nu[i]
                + 2.0 * c.f2[i] * (na[i] + nb[i])
                + c.f3[i] * nc[i];
        }
        out
    }
}

/// One ETDRK4 step of a physical-space field (convenience wrapper).
pub fn step(
    state: &Field,
    spec: &EquationSpec,
    cfg: &StepperConfig,
    t: f64,
) -> Result<Field, SemiflowError> {
    let stepper = Stepper::new(state.grid, *spec, *cfg)?;
    let u = to_spectral(state)?;
    let out = stepper.step_spectral(t, &u.coeffs);
    let f = from_spectral(&grid::SpectralField {
        grid: state.grid,
        coeffs: out,
    })?;
    if !f.is_finite() {
        return Err(SemiflowError::Instability {
            t: t + cfg.dt,
            trajectory: Box::new(Trajectory::empty(*spec, state.grid, cfg)),
        });
    }
    Ok(f)
}

/// Per-sample-time dissipation ledger plus optional snapshots of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub spec: EquationSpec,
    pub grid: GridSpec,
    /// Copy of the stepper's nonlinearity switch; residual checks drop the
    /// potential terms for linear runs.
    pub linear_only: bool,
    pub dealias_factor: DealiasFactor,
    pub records: Vec<DiagnosticRecord>,
    pub snapshots: Vec<(f64, Field)>,
}

impl Trajectory {
    pub(crate) fn empty(spec: EquationSpec, grid: GridSpec, cfg: &StepperConfig) -> Self {
        Trajectory {
            spec,
            grid,
            linear_only: cfg.linear_only,
            dealias_factor: cfg.dealias_factor,
            records: Vec::new(),
            snapshots: Vec::new(),
        }
    }
}

/// Evolution switches that are not part of the numerical configuration.
#[derive(Default)]
pub struct EvolveOptions<'a> {
    /// Keep `(t, field)` snapshots at `t = 0` and `t = T`.
    pub snapshots: bool,
    /// Skip the focusing admissibility gate.
    pub admissibility_override: bool,
    pub forcing: Option<Forcing<'a>>,
}

/// Integrate from `initial` to time `T`, recording diagnostics every
/// `sample_stride` steps (plus `t = 0` and `t = T`).
///
/// Focusing runs in d = 3, 4 are gated on sub-threshold admissibility and
/// abort with a threshold-exit error if the kinetic energy crosses
/// `||grad W||^2` at any sample.
pub fn evolve(
    initial: &Field,
    spec: &EquationSpec,
    horizon: f64,
    cfg: &StepperConfig,
    opts: EvolveOptions<'_>,
) -> Result<Trajectory, SemiflowError> {
    cfg.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(SemiflowError::InvalidHorizon(horizon));
    }
    let grid = initial.grid;

    let mut threshold: Option<GroundStateConstants> = None;
    if spec.mu == -1 && (spec.d == 3 || spec.d == 4) && !cfg.linear_only {
        let consts = ground_state_constants_cached(spec.d)?;
        if !opts.admissibility_override {
            let rep = ground_state::admissibility(initial, spec.mu, &consts)?;
            if !rep.admissible {
                return Err(SemiflowError::NotAdmissible {
                    energy_margin: rep.energy_margin,
                    kinetic_margin: rep.kinetic_margin,
                });
            }
        }
        threshold = Some(consts);
    }

    if spec.d == 3 && cfg.dealias_factor != DealiasFactor::Three && !cfg.linear_only {
        eprintln!(
            "warning: quintic nonlinearity with dealias factor {} (< 3) is not exact",
            cfg.dealias_factor.as_f64()
        );
    }

    let dt = cfg.dt;
    let nsteps = (horizon / dt).ceil() as usize;
    let nsteps = nsteps.max(1);
    let dt_last = horizon - (nsteps - 1) as f64 * dt;

    let stepper = {
        let mut s = Stepper::new(grid, *spec, *cfg)?;
        s.set_forcing(opts.forcing);
        s
    };
    // short final step lands exactly on T
    let last_stepper = if (dt_last - dt).abs() > 1e-12 * dt {
        let mut s = Stepper::with_dt(grid, *spec, *cfg, dt_last)?;
        s.set_forcing(opts.forcing);
        Some(s)
    } else {
        None
    };

    let mut traj = Trajectory::empty(*spec, grid, cfg);
    let mut state = to_spectral(initial)?.coeffs;

    let push_record = |traj: &mut Trajectory,
                           state: &[Complex64],
                           t: f64|
     -> Result<(), SemiflowError> {
        let rec = diagnostics::record_spectral(state, &grid, spec, cfg.dealias_factor, t)
            .map_err(|_| SemiflowError::Instability {
                t,
                trajectory: Box::new(traj.clone()),
            })?;
        if !rec.is_finite() {
            return Err(SemiflowError::Instability {
                t,
                trajectory: Box::new(traj.clone()),
            });
        }
        if let Some(consts) = &threshold {
            if rec.kinetic >= consts.kinetic {
                traj.records.push(rec);
                return Err(SemiflowError::ThresholdExit {
                    t,
                    trajectory: Box::new(traj.clone()),
                });
            }
        }
        traj.records.push(rec);
        Ok(())
    };

    push_record(&mut traj, &state, 0.0)?;
    if opts.snapshots {
        traj.snapshots.push((0.0, initial.clone()));
    }

    for i in 1..=nsteps {
        let (t_prev, active): (f64, &Stepper) = if i == nsteps {
            match &last_stepper {
                Some(s) => ((i - 1) as f64 * dt, s),
                None => ((i - 1) as f64 * dt, &stepper),
            }
        } else {
            ((i - 1) as f64 * dt, &stepper)
        };
        state = active.step_spectral(t_prev, &state);
        let t = if i == nsteps { horizon } else { i as f64 * dt };
        if !state.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(SemiflowError::Instability {
                t,
                trajectory: Box::new(traj),
            });
        }
        if i % cfg.sample_stride == 0 || i == nsteps {
            push_record(&mut traj, &state, t)?;
        }
    }

    if opts.snapshots {
        let f = from_spectral(&grid::SpectralField {
            grid,
            coeffs: state,
        })?;
        traj.snapshots.push((horizon, f));
    }
    Ok(traj)
}

/// Final field of a trajectory-producing run without keeping snapshots.
pub fn evolve_final(
    initial: &Field,
    spec: &EquationSpec,
    horizon: f64,
    cfg: &StepperConfig,
    opts: EvolveOptions<'_>,
) -> Result<(Trajectory, Field), SemiflowError> {
    let traj = evolve(
        initial,
        spec,
        horizon,
        cfg,
        EvolveOptions {
            snapshots: true,
            ..opts
        },
    )?;
    let last = traj.snapshots.last().expect("snapshots enabled").1.clone();
    let mut traj = traj;
    traj.snapshots.clear();
    Ok((traj, last))
}

use once_cell::sync::Lazy;
use std::sync::Mutex;

static CONSTS_CACHE: Lazy<Mutex<[Option<GroundStateConstants>; 5]>> =
    Lazy::new(|| Mutex::new([None; 5]));

/// Memoized variational constants (the quadrature is deterministic).
pub fn ground_state_constants_cached(
    d: usize,
) -> Result<GroundStateConstants, ground_state::GroundStateError> {
    if let Some(c) = CONSTS_CACHE.lock().unwrap()[d] {
        return Ok(c);
    }
    let c = ground_state::ground_state_constants(d, QuadratureSpec::default())?;
    CONSTS_CACHE.lock().unwrap()[d] = Some(c);
    Ok(c)
}
