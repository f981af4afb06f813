//! The dissipation ledger: per-sample integral quantities and residual
//! checks of the mass and energy balance laws, plus the space-time `S`-norm.
//!
//! The energy balance is checked in the compact form
//! `E'(t) + cos(theta) ||lap v - mu f(v)||^2 = 0`, whose algebraic expansion
//! `||lap v||^2 - 2 mu Re<f(v), lap v> + mu^2 ||v||_{hi}^{hi}` ties it back to
//! the term-by-term chain; the mass balance uses
//! `M'(t) + 2 cos(theta) ||grad v||^2 + 2 mu cos(theta) ||v||_p^p = 0`.
//!
//! Pointwise powers are evaluated on the dealiased padded grid, so the
//! recorded integrals match the truncated-Galerkin dynamics exactly and the
//! residuals see only time-discretization error.

use thiserror::Error;

use crate::fft;
use crate::grid::{
    self, mode_k2, sobolev_norms, sobolev_norms_parts, to_spectral, Complex64, Field, GridSpec,
};
use crate::ground_state::GroundStateConstants;
use crate::semiflow::{fine_values, DealiasFactor, EquationSpec, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("trajectory needs at least 3 records, got {0}")]
    TooFewRecords(usize),
    #[error("interval [{0}, {1}] outside recorded range")]
    IntervalOutOfRange(f64, f64),
    #[error("record contains non-finite values at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Grid(#[from] grid::GridError),
}

/// One row of the dissipation ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRecord {
    pub t: f64,
    /// `||v||^2_{L^2}`
    pub mass: f64,
    /// `||grad v||^2_{L^2}`
    pub kinetic: f64,
    /// `||v||^p_{L^p}`, `p = 2d/(d-2)`
    pub potential: f64,
    pub energy: f64,
    /// `||v||^s_{L^s}`, `s = 2(d+2)/(d-2)`
    pub hi_potential: f64,
    /// `||lap v||^2_{L^2}`
    pub lap: f64,
    /// `Re integral conj(f(v)) lap v dx`
    pub cross: f64,
    /// `||lap v - mu f(v)||^2_{L^2}` with the dealiased `f`
    pub grad_flow_sq: f64,
    pub h2: f64,
    pub h3: f64,
}

impl DiagnosticRecord {
    pub fn zero(t: f64) -> Self {
        DiagnosticRecord {
            t,
            mass: 0.0,
            kinetic: 0.0,
            potential: 0.0,
            energy: 0.0,
            hi_potential: 0.0,
            lap: 0.0,
            cross: 0.0,
            grad_flow_sq: 0.0,
            h2: 0.0,
            h3: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.mass,
            self.kinetic,
            self.potential,
            self.energy,
            self.hi_potential,
            self.lap,
            self.cross,
            self.grad_flow_sq,
            self.h2,
            self.h3,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Assemble a record from the spectral state.
pub(crate) fn record_spectral(
    coeffs: &[Complex64],
    grid: &GridSpec,
    spec: &EquationSpec,
    dealias: DealiasFactor,
    t: f64,
) -> Result<DiagnosticRecord, DiagnosticsError> {
    let vol = grid.volume();
    let k2 = mode_k2(grid);
    let norms = sobolev_norms_parts(coeffs, grid);

    let mut lap_sum = 0.0;
    let mut lap_coeffs = vec![Complex64::default(); coeffs.len()];
    for i in 0..coeffs.len() {
        lap_coeffs[i] = coeffs[i] * (-k2[i]);
        lap_sum += lap_coeffs[i].norm_sqr();
    }
    let lap = vol * lap_sum;

    let np = dealias.padded_n(grid.n);
    let dxf = (grid.length / np as f64).powi(grid.d as i32);
    let v_fine = fine_values(coeffs, grid, np);
    let lap_fine = fine_values(&lap_coeffs, grid, np);

    let p_half = (spec.potential_exponent() / 2) as i32;
    let hi_half = (spec.hi_exponent() / 2) as i32;
    let mut potential = 0.0;
    let mut hi_potential = 0.0;
    let mut cross = 0.0;
    let mut f_fine = vec![Complex64::default(); v_fine.len()];
    for i in 0..v_fine.len() {
        let a2 = v_fine[i].norm_sqr();
        potential += a2.powi(p_half);
        hi_potential += a2.powi(hi_half);
        let f = spec.nonlin_pointwise(v_fine[i]);
        cross += (f.conj() * lap_fine[i]).re;
        f_fine[i] = f;
    }
    potential *= dxf;
    hi_potential *= dxf;
    cross *= dxf;

    // truncated (Galerkin) gradient-flow residual
    fft::forward_cube(&mut f_fine, grid.d, np);
    let f_trunc = grid::truncate_spectrum(&f_fine, grid.d, grid.n, np);
    let mu = spec.mu as f64;
    let mut gf_sum = 0.0;
    for i in 0..coeffs.len() {
        gf_sum += (lap_coeffs[i] - mu * f_trunc[i]).norm_sqr();
    }
    let grad_flow_sq = vol * gf_sum;

    let kinetic = norms.grad_l2 * norms.grad_l2;
    let energy = kinetic / 2.0 + mu / spec.potential_exponent() as f64 * potential;

    let rec = DiagnosticRecord {
        t,
        mass: norms.l2 * norms.l2,
        kinetic,
        potential,
        energy,
        hi_potential,
        lap,
        cross,
        grad_flow_sq,
        h2: norms.h2,
        h3: norms.h3,
    };
    if !rec.is_finite() {
        return Err(DiagnosticsError::NonFinite(t));
    }
    Ok(rec)
}

/// Record the dissipation ledger of a field at time `t`, with the exact
/// dealiasing factor for the dimension.
pub fn record(
    f: &Field,
    spec: &EquationSpec,
    t: f64,
) -> Result<DiagnosticRecord, DiagnosticsError> {
    let g = to_spectral(f)?;
    record_spectral(
        &g.coeffs,
        &f.grid,
        spec,
        DealiasFactor::default_for(spec.d),
        t,
    )
}

/// Per-interval residual series, normalized by the initial value with a
/// floor of `1e-14`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    /// Midpoint-free trapezoidal residual of each adjacent record pair.
    pub residuals: Vec<f64>,
    pub max_abs: f64,
}

const RESIDUAL_FLOOR: f64 = 1e-14;

fn residual_series(
    traj: &Trajectory,
    value: impl Fn(&DiagnosticRecord) -> f64,
    flux: impl Fn(&DiagnosticRecord) -> f64,
) -> Result<ResidualSeries, DiagnosticsError> {
    if traj.records.len() < 3 {
        return Err(DiagnosticsError::TooFewRecords(traj.records.len()));
    }
    let scale = value(&traj.records[0]).abs().max(RESIDUAL_FLOOR);
    let mut residuals = Vec::with_capacity(traj.records.len() - 1);
    let mut max_abs = 0.0f64;
    for w in traj.records.windows(2) {
        let (r1, r2) = (&w[0], &w[1]);
        let dt = r2.t - r1.t;
        let res = (value(r2) - value(r1) + 0.5 * (flux(r1) + flux(r2)) * dt) / scale;
        max_abs = max_abs.max(res.abs());
        residuals.push(res);
    }
    Ok(ResidualSeries { residuals, max_abs })
}

/// Residual of `M'(t) + 2 cos(theta) ||grad v||^2
/// + 2 mu cos(theta) ||v||_p^p = 0` with trapezoidal time quadrature.
/// At `|theta| = pi/2` this collapses to a mass-conservation check; for
/// linear runs the potential term is dropped.
pub fn mass_balance_residual(traj: &Trajectory) -> Result<ResidualSeries, DiagnosticsError> {
    let cos = traj.spec.theta.cos();
    let mu = traj.spec.mu as f64;
    let linear = traj.linear_only;
    residual_series(
        traj,
        |r| r.mass,
        move |r| {
            if linear {
                2.0 * cos * r.kinetic
            } else {
                2.0 * cos * r.kinetic + 2.0 * mu * cos * r.potential
            }
        },
    )
}

/// Residual of `E'(t) + cos(theta) ||lap v - mu f(v)||^2 = 0`; for linear
/// runs the energy reduces to `||grad v||^2 / 2` and the dissipation to
/// `cos(theta) ||lap v||^2`.
pub fn energy_balance_residual(traj: &Trajectory) -> Result<ResidualSeries, DiagnosticsError> {
    let cos = traj.spec.theta.cos();
    let linear = traj.linear_only;
    residual_series(
        traj,
        move |r| if linear { r.kinetic / 2.0 } else { r.energy },
        move |r| cos * if linear { r.lap } else { r.grad_flow_sq },
    )
}

/// `S([t1, t2])`-norm: `(integral of ||v||_{hi}^{hi} dt)^((d-2)/(2(d+2)))`
/// with trapezoidal quadrature over the records (linear interpolation at the
/// interval endpoints).
pub fn s_norm(traj: &Trajectory, t1: f64, t2: f64) -> Result<f64, DiagnosticsError> {
    let recs = &traj.records;
    if recs.is_empty() {
        return Err(DiagnosticsError::IntervalOutOfRange(t1, t2));
    }
    let (lo, hi) = (recs[0].t, recs[recs.len() - 1].t);
    let eps = 1e-12 * (hi - lo).abs().max(1.0);
    if t1 < lo - eps || t2 > hi + eps || t1 > t2 {
        return Err(DiagnosticsError::IntervalOutOfRange(t1, t2));
    }
    let value_at = |t: f64| -> f64 {
        // linear interpolation between bracketing records
        if t <= recs[0].t {
            return recs[0].hi_potential;
        }
        for w in recs.windows(2) {
            if t <= w[1].t {
                let f = (t - w[0].t) / (w[1].t - w[0].t).max(1e-300);
                return w[0].hi_potential * (1.0 - f) + w[1].hi_potential * f;
            }
        }
        recs[recs.len() - 1].hi_potential
    };
    let mut integral = 0.0;
    let mut prev_t = t1;
    let mut prev_v = value_at(t1);
    for r in recs.iter() {
        if r.t <= t1 {
            continue;
        }
        if r.t >= t2 {
            break;
        }
        integral += 0.5 * (prev_v + r.hi_potential) * (r.t - prev_t);
        prev_t = r.t;
        prev_v = r.hi_potential;
    }
    let end_v = value_at(t2);
    integral += 0.5 * (prev_v + end_v) * (t2 - prev_t);
    Ok(integral.max(0.0).powf(1.0 / traj.spec.hi_exponent() as f64))
}

/// `||a - b||_{H^1}`
pub fn h1_distance(a: &Field, b: &Field) -> Result<f64, DiagnosticsError> {
    let diff = a.sub(b).map_err(DiagnosticsError::Grid)?;
    Ok(sobolev_norms(&diff)?.h1)
}

/// Empirical energy-trapping report for a focusing trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrappingReport {
    /// `max_t kinetic / ||grad W||^2`; `None` for an all-zero trajectory.
    pub max_kinetic_ratio: Option<f64>,
    pub energy_kinetic_min: Option<f64>,
    pub energy_kinetic_max: Option<f64>,
    /// Kinetic ratio reached 1 at some record.
    pub violated: bool,
}

/// Monitor the variational trapping region: along a sub-threshold focusing
/// flow the kinetic energy must stay below `||grad W||^2`, and the
/// energy/kinetic comparability ratio is reported empirically.
pub fn energy_trapping_monitor(traj: &Trajectory, consts: &GroundStateConstants) -> TrappingReport {
    let mut max_ratio: Option<f64> = None;
    let mut ek_min: Option<f64> = None;
    let mut ek_max: Option<f64> = None;
    for r in &traj.records {
        if r.kinetic <= 0.0 {
            continue;
        }
        let ratio = r.kinetic / consts.kinetic;
        max_ratio = Some(max_ratio.map_or(ratio, |m: f64| m.max(ratio)));
        let ek = r.energy / r.kinetic;
        ek_min = Some(ek_min.map_or(ek, |m: f64| m.min(ek)));
        ek_max = Some(ek_max.map_or(ek, |m: f64| m.max(ek)));
    }
    TrappingReport {
        max_kinetic_ratio: max_ratio,
        energy_kinetic_min: ek_min,
        energy_kinetic_max: ek_max,
        violated: max_ratio.map_or(false, |m| m >= 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::ground_state::{ground_state_constants, sample_ground_state};
    use crate::quadrature::QuadratureSpec;
    use crate::semiflow::StepperConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Band-limited random field: modes with max-norm index <= `mmax`.
    fn low_mode_field(grid: GridSpec, mmax: i64, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = vec![Complex64::default(); grid.total_points()];
        let n = grid.n as i64;
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let mut rem = idx;
            let mut ok = true;
            for _ in 0..grid.d {
                let i = (rem % grid.n) as i64;
                rem /= grid.n;
                let m = if i < n / 2 { i } else { i - n };
                if m.abs() > mmax {
                    ok = false;
                }
            }
            if ok {
                *c = Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            }
        }
        crate::grid::from_spectral(&crate::grid::SpectralField { grid, coeffs }).unwrap()
    }

    fn synthetic_trajectory(spec: EquationSpec, grid: GridSpec, records: Vec<DiagnosticRecord>) -> Trajectory {
        Trajectory {
            spec,
            grid,
            linear_only: false,
            dealias_factor: DealiasFactor::default_for(spec.d),
            records,
            snapshots: Vec::new(),
        }
    }

    #[test]
    fn zero_field_record_is_zero() {
        let grid = make_grid(4, 8, 10.0).unwrap();
        let spec = EquationSpec::new(0.3, 1, 4).unwrap();
        let r = record(&Field::zeros(grid), &spec, 1.5).unwrap();
        assert_eq!(r.mass, 0.0);
        assert_eq!(r.energy, 0.0);
        assert_eq!(r.grad_flow_sq, 0.0);
        assert_eq!(r.t, 1.5);
    }

    #[test]
    fn constant_field_record() {
        // d = 4, mu = +1: energy = |a|^4 L^4 / 4, kinetic = 0
        let grid = make_grid(4, 8, 3.0).unwrap();
        let spec = EquationSpec::new(0.0, 1, 4).unwrap();
        let a = Complex64::new(0.8, 0.6); // |a| = 1
        let f = Field::from_fn(grid, |_| a);
        let r = record(&f, &spec, 0.0).unwrap();
        let expect = a.norm().powi(4) * grid.volume() / 4.0;
        assert!((r.energy - expect).abs() < 1e-10 * expect);
        assert!(r.kinetic < 1e-10);
        assert!((r.mass - a.norm_sqr() * grid.volume()).abs() < 1e-10 * grid.volume());
    }

    #[test]
    fn half_ground_state_energy_matches_constants() {
        let consts = ground_state_constants(4, QuadratureSpec::default()).unwrap();
        let grid = make_grid(4, 32, 40.0).unwrap();
        let spec = EquationSpec::new(0.0, -1, 4).unwrap();
        let w = sample_ground_state(grid, &grid.center(), 1.0).unwrap();
        let f = w.scale(Complex64::new(0.5, 0.0));
        let r = record(&f, &spec, 0.0).unwrap();
        let a: f64 = 0.5;
        let exact = consts.kinetic * (a * a / 2.0 - a.powi(4) / 4.0);
        // combined box-truncation tolerance
        assert!(
            (r.energy - exact).abs() < 0.05 * consts.energy,
            "energy {} vs {}",
            r.energy,
            exact
        );
    }

    #[test]
    fn record_internal_consistency_on_resolved_fields() {
        // band-limited data keeps every integral exactly representable
        for (d, n, mmax) in [(4usize, 16usize, 2i64), (3, 16, 1), (2, 16, 2)] {
            let grid = make_grid(d, n, 11.0).unwrap();
            let f = low_mode_field(grid, mmax, 42 + d as u64);
            for &mu in &[1i8, -1] {
                let spec = EquationSpec::new(0.4, mu, d).unwrap();
                let r = record(&f, &spec, 0.0).unwrap();
                let p = spec.potential_exponent() as f64;
                let energy_expect = r.kinetic / 2.0 + mu as f64 / p * r.potential;
                assert!((r.energy - energy_expect).abs() <= 1e-10 * r.energy.abs().max(1.0));
                let expand = r.lap - 2.0 * mu as f64 * r.cross
                    + (mu as f64).powi(2) * r.hi_potential;
                assert!(
                    (r.grad_flow_sq - expand).abs() <= 1e-8 * r.grad_flow_sq.max(1.0),
                    "d={d} mu={mu}: {} vs {}",
                    r.grad_flow_sq,
                    expand
                );
            }
        }
    }

    #[test]
    fn residuals_require_three_records() {
        let grid = make_grid(2, 8, 5.0).unwrap();
        let spec = EquationSpec::new(0.0, 1, 2).unwrap();
        let traj = synthetic_trajectory(
            spec,
            grid,
            vec![DiagnosticRecord::zero(0.0), DiagnosticRecord::zero(1.0)],
        );
        assert_eq!(
            mass_balance_residual(&traj).unwrap_err(),
            DiagnosticsError::TooFewRecords(2)
        );
        assert_eq!(
            energy_balance_residual(&traj).unwrap_err(),
            DiagnosticsError::TooFewRecords(2)
        );
    }

    #[test]
    fn zero_trajectory_residuals_are_zero() {
        let grid = make_grid(2, 8, 5.0).unwrap();
        let spec = EquationSpec::new(0.2, 1, 2).unwrap();
        let records = (0..5).map(|i| DiagnosticRecord::zero(i as f64 * 0.1)).collect();
        let traj = synthetic_trajectory(spec, grid, records);
        assert_eq!(energy_balance_residual(&traj).unwrap().max_abs, 0.0);
        assert_eq!(mass_balance_residual(&traj).unwrap().max_abs, 0.0);
    }

    #[test]
    fn s_norm_examples() {
        let grid = make_grid(4, 8, 3.0).unwrap();
        let spec = EquationSpec::new(0.0, 1, 4).unwrap();

        // zero trajectory
        let records: Vec<_> = (0..5).map(|i| DiagnosticRecord::zero(i as f64 * 0.25)).collect();
        let traj = synthetic_trajectory(spec, grid, records);
        assert_eq!(s_norm(&traj, 0.0, 1.0).unwrap(), 0.0);

        // constant-in-time field a over [0, tau]:
        // (|a|^6 L^4 tau)^(1/6) for d = 4
        let a = Complex64::new(1.2, -0.4);
        let f = Field::from_fn(grid, |_| a);
        let rec = record(&f, &spec, 0.0).unwrap();
        let records: Vec<_> = (0..5)
            .map(|i| {
                let mut r = rec;
                r.t = i as f64 * 0.25;
                r
            })
            .collect();
        let traj = synthetic_trajectory(spec, grid, records);
        let tau = 0.8;
        let expect = (a.norm().powi(6) * grid.volume() * tau).powf(1.0 / 6.0);
        let got = s_norm(&traj, 0.0, tau).unwrap();
        assert!((got - expect).abs() < 1e-10 * expect, "{got} vs {expect}");

        // monotone in the interval
        let s_small = s_norm(&traj, 0.2, 0.6).unwrap();
        let s_big = s_norm(&traj, 0.0, 1.0).unwrap();
        assert!(s_small <= s_big);

        // out of range
        assert!(matches!(
            s_norm(&traj, -0.5, 0.5),
            Err(DiagnosticsError::IntervalOutOfRange(_, _))
        ));
    }

    #[test]
    fn h1_distance_properties() {
        let grid = make_grid(2, 16, 4.0).unwrap();
        let a = low_mode_field(grid, 3, 1);
        let b = low_mode_field(grid, 3, 2);
        let c = low_mode_field(grid, 3, 3);
        assert_eq!(h1_distance(&a, &a).unwrap(), 0.0);
        let z = Field::zeros(grid);
        let na = sobolev_norms(&a).unwrap().h1;
        assert!((h1_distance(&a, &z).unwrap() - na).abs() < 1e-12 * na);
        // triangle inequality
        let ab = h1_distance(&a, &b).unwrap();
        let bc = h1_distance(&b, &c).unwrap();
        let ac = h1_distance(&a, &c).unwrap();
        assert!(ac <= ab + bc + 1e-12 * ac.max(1.0));
        // grid mismatch
        let other = Field::zeros(make_grid(2, 8, 4.0).unwrap());
        assert!(h1_distance(&a, &other).is_err());
    }

    #[test]
    fn trapping_monitor_cases() {
        let consts = ground_state_constants(4, QuadratureSpec::default()).unwrap();
        let grid = make_grid(4, 8, 10.0).unwrap();
        let spec = EquationSpec::new(0.1, -1, 4).unwrap();

        // zero trajectory: not applicable, not violated
        let records = (0..4).map(|i| DiagnosticRecord::zero(i as f64)).collect();
        let traj = synthetic_trajectory(spec, grid, records);
        let rep = energy_trapping_monitor(&traj, &consts);
        assert_eq!(rep.max_kinetic_ratio, None);
        assert!(!rep.violated);

        // one record crossing the kinetic threshold
        let mut bad = DiagnosticRecord::zero(1.0);
        bad.kinetic = 1.01 * consts.kinetic;
        bad.energy = 1.0;
        let records = vec![DiagnosticRecord::zero(0.0), bad];
        let traj = synthetic_trajectory(spec, grid, records);
        let rep = energy_trapping_monitor(&traj, &consts);
        assert!(rep.violated);
        assert!(rep.max_kinetic_ratio.unwrap() > 1.0);
    }

    #[test]
    fn nonlinear_defocusing_run_residuals_shrink_with_dt() {
        // d = 2 cubic smoke mode, theta = pi/4: quadrature-dominated decay
        let grid = make_grid(2, 16, 10.0).unwrap();
        let spec = EquationSpec::new(std::f64::consts::FRAC_PI_4, 1, 2).unwrap();
        let f = low_mode_field(grid, 2, 5);
        let mut maxes = Vec::new();
        for &dt in &[0.01f64, 0.005] {
            let cfg = StepperConfig {
                dt,
                sample_stride: 5,
                ..StepperConfig::default_for(&grid, &spec)
            };
            let traj = crate::semiflow::evolve(
                &f,
                &spec,
                0.5,
                &cfg,
                crate::semiflow::EvolveOptions::default(),
            )
            .unwrap();
            maxes.push(mass_balance_residual(&traj).unwrap().max_abs);
        }
        assert!(maxes[0] / maxes[1] > 3.0, "mass residuals {maxes:?}");
    }
}
