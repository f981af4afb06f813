//! Batch driver: run configurations from flat key-value files, emit CSV and
//! snapshot artifacts plus a manifest that doubles as the config of an
//! identical rerun.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure (instability or threshold exit), 3 tolerance failure in a check.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use cgl_lab::config::{parse_config, Config};
use cgl_lab::diagnostics;
use cgl_lab::grid::{self, make_grid};
use cgl_lab::ground_state;
use cgl_lab::io::{self, RunManifest, SnapshotMeta};
use cgl_lab::limits::{self, LimitsError, PairRunConfig, SweepMode};
use cgl_lab::quadrature::QuadratureSpec;
use cgl_lab::semiflow::{self, EvolveOptions, SemiflowError};
use cgl_lab::{Complex64, Field};

#[derive(Parser)]
#[command(name = "cgl-lab", version, about = "Spectral laboratory for the energy-critical complex Ginzburg-Landau family")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One evolution run; writes the diagnostics CSV (and optional snapshots).
    Simulate(ConfigArgs),
    /// Evolution run plus mass/energy dissipation-identity residual report.
    CheckIdentities {
        #[command(flatten)]
        config: ConfigArgs,
        /// Maximum allowed interval residual.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Ground-state variational constants table for d = 3, 4.
    GroundState(OutputArgs),
    /// Zero-dispersion sweep: pairs against the heat endpoint over sweep.thetas.
    SweepTheta(ConfigArgs),
    /// Inviscid sweep: pairs against the Schrodinger endpoint over sweep.thetas.
    SweepInviscid(ConfigArgs),
    /// Fast built-in example battery.
    Selftest(OutputArgs),
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Path to the flat key = value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the configuration's output.dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Output directory for the manifest and tables.
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
}

enum AppError {
    Usage(String),
    Numerical(String),
    Tolerance(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Numerical(_) => 2,
            AppError::Tolerance(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Numerical(m) | AppError::Tolerance(m) => m,
        }
    }
}

impl From<io::IoError> for AppError {
    fn from(e: io::IoError) -> Self {
        AppError::Usage(e.to_string())
    }
}

impl From<SemiflowError> for AppError {
    fn from(e: SemiflowError) -> Self {
        match e {
            SemiflowError::Instability { .. } | SemiflowError::ThresholdExit { .. } => {
                AppError::Numerical(e.to_string())
            }
            other => AppError::Usage(other.to_string()),
        }
    }
}

impl From<LimitsError> for AppError {
    fn from(e: LimitsError) -> Self {
        match e {
            LimitsError::Semiflow(inner) => AppError::from(inner),
            other => AppError::Usage(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap prints help/version through the error display
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cmd: Command) -> Result<(), AppError> {
    match cmd {
        Command::Simulate(args) => simulate(&args),
        Command::CheckIdentities { config, tol } => check_identities(&config, tol),
        Command::GroundState(args) => ground_state_table(&args.output_dir),
        Command::SweepTheta(args) => sweep(&args, SweepMode::Dispersion),
        Command::SweepInviscid(args) => sweep(&args, SweepMode::Inviscid),
        Command::Selftest(args) => selftest(&args.output_dir),
    }
}

fn load_config(args: &ConfigArgs) -> Result<Config, AppError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| AppError::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| AppError::Usage(e.to_string()))?;
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.display().to_string();
    }
    Ok(cfg)
}

fn prepare_output_dir(dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AppError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn finish_manifest(
    command: &str,
    config_text: String,
    outputs: Vec<PathBuf>,
    dir: &Path,
    started: Instant,
) -> Result<(), AppError> {
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        duration_seconds: started.elapsed().as_secs_f64(),
        config_text,
        outputs: outputs
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    };
    io::write_manifest(&manifest, &dir.join("manifest.txt"))?;
    Ok(())
}

fn evolve_from_config(cfg: &Config) -> Result<cgl_lab::Trajectory, AppError> {
    let grid = cfg.grid().map_err(|e| AppError::Usage(e.to_string()))?;
    let spec = cfg.equation().map_err(AppError::from)?;
    let data = limits::initial_data(&cfg.data, &grid)?;
    let initial = match &cfg.perturbation {
        Some(p) => data
            .add(&limits::initial_data(p, &grid)?)
            .map_err(|e| AppError::Usage(e.to_string()))?,
        None => data,
    };
    let opts = EvolveOptions {
        snapshots: cfg.snapshots_enabled,
        admissibility_override: cfg.exploratory,
        forcing: None,
    };
    semiflow::evolve(&initial, &spec, cfg.horizon, &cfg.stepper(), opts).map_err(AppError::from)
}

fn simulate(args: &ConfigArgs) -> Result<(), AppError> {
    let started = Instant::now();
    let cfg = load_config(args)?;
    let dir = PathBuf::from(&cfg.output_dir);
    prepare_output_dir(&dir)?;

    let traj = evolve_from_config(&cfg)?;
    let mut outputs = Vec::new();

    let csv = dir.join("diagnostics.csv");
    io::write_diagnostics_csv(&traj.records, &csv)?;
    outputs.push(csv);

    for (t, field) in &traj.snapshots {
        let name = if *t == 0.0 { "initial.cglf" } else { "final.cglf" };
        let path = dir.join(name);
        io::write_snapshot(
            field,
            &SnapshotMeta {
                theta: cfg.theta,
                t: *t,
                mu: cfg.mu,
            },
            &path,
        )?;
        outputs.push(path);
    }

    let last = traj.records.last().expect("at least the initial record");
    println!(
        "simulate: {} records to t = {}; final mass {:.6e}, energy {:.6e}",
        traj.records.len(),
        last.t,
        last.mass,
        last.energy
    );
    finish_manifest("simulate", cfg.to_text(), outputs, &dir, started)
}

fn check_identities(args: &ConfigArgs, tol: f64) -> Result<(), AppError> {
    let started = Instant::now();
    let cfg = load_config(args)?;
    let dir = PathBuf::from(&cfg.output_dir);
    prepare_output_dir(&dir)?;

    let traj = evolve_from_config(&cfg)?;
    let mass = diagnostics::mass_balance_residual(&traj)
        .map_err(|e| AppError::Numerical(e.to_string()))?;
    let energy = diagnostics::energy_balance_residual(&traj)
        .map_err(|e| AppError::Numerical(e.to_string()))?;

    let csv = dir.join("diagnostics.csv");
    io::write_diagnostics_csv(&traj.records, &csv)?;
    finish_manifest("check-identities", cfg.to_text(), vec![csv], &dir, started)?;

    println!("mass balance:   max residual {:.6e} (tol {:.1e})", mass.max_abs, tol);
    println!("energy balance: max residual {:.6e} (tol {:.1e})", energy.max_abs, tol);
    if mass.max_abs > tol || energy.max_abs > tol {
        return Err(AppError::Tolerance(format!(
            "identity residuals exceed tolerance {tol:.1e}: mass {:.3e}, energy {:.3e}",
            mass.max_abs, energy.max_abs
        )));
    }
    println!("identities: PASS");
    Ok(())
}

fn ground_state_table(dir: &Path) -> Result<(), AppError> {
    let started = Instant::now();
    prepare_output_dir(dir)?;
    let path = dir.join("ground_state.csv");
    let mut rows = String::from("d,kinetic,potential,energy,quadrature_error\n");
    for d in [3usize, 4] {
        let c = ground_state::ground_state_constants(d, QuadratureSpec::default())
            .map_err(|e| AppError::Numerical(e.to_string()))?;
        rows.push_str(&format!(
            "{d},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            c.kinetic, c.potential, c.energy, c.quadrature_error
        ));
    }
    std::fs::write(&path, &rows)
        .map_err(|e| AppError::Usage(format!("cannot write {}: {e}", path.display())))?;
    print!("{rows}");
    let default_cfg = parse_config("").expect("empty config is valid");
    finish_manifest(
        "ground-state",
        default_cfg.to_text(),
        vec![path],
        dir,
        started,
    )
}

fn sweep(args: &ConfigArgs, mode: SweepMode) -> Result<(), AppError> {
    let started = Instant::now();
    let cfg = load_config(args)?;
    let dir = PathBuf::from(&cfg.output_dir);
    prepare_output_dir(&dir)?;
    if cfg.sweep_thetas.len() < 3 {
        return Err(AppError::Usage(format!(
            "sweep.thetas needs at least 3 values, got {}",
            cfg.sweep_thetas.len()
        )));
    }

    let grid = cfg.grid().map_err(|e| AppError::Usage(e.to_string()))?;
    let base = PairRunConfig {
        grid,
        target: match mode {
            SweepMode::Dispersion => limits::LimitTarget::Heat,
            SweepMode::Inviscid => limits::LimitTarget::Schrodinger,
        },
        theta: cfg.theta,
        mu: cfg.mu,
        data: cfg.data.clone(),
        perturbation: cfg.perturbation.clone(),
        horizon: cfg.horizon,
        stepper: cfg.stepper(),
        exploratory: cfg.exploratory,
    };
    let (sweep, members) = limits::sweep_and_fit(&base, &cfg.sweep_thetas, mode)?;

    let mut outputs = Vec::new();
    let agg = dir.join("sweep.csv");
    io::write_sweep_csv(&sweep, &agg)?;
    outputs.push(agg);
    for (i, member) in members.iter().enumerate() {
        let p = dir.join(format!("member_{i}_cgl.csv"));
        io::write_diagnostics_csv(&member.cgl.records, &p)?;
        outputs.push(p);
        let p = dir.join(format!("member_{i}_reference.csv"));
        io::write_diagnostics_csv(&member.reference.records, &p)?;
        outputs.push(p);
    }

    let command = match mode {
        SweepMode::Dispersion => "sweep-theta",
        SweepMode::Inviscid => "sweep-inviscid",
    };
    println!(
        "{command}: {} members; slope {:.4}, constant {:.4e}, fit residual {:.3e}",
        sweep.points.len(),
        sweep.slope,
        sweep.constant,
        sweep.fit_residual
    );
    finish_manifest(command, cfg.to_text(), outputs, &dir, started)
}

fn selftest(dir: &Path) -> Result<(), AppError> {
    let started = Instant::now();
    prepare_output_dir(dir)?;
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("selftest {name}: {}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // transform examples
    {
        let grid = make_grid(2, 16, 5.0).unwrap();
        let a = Complex64::new(0.3, -0.7);
        let f = Field::from_fn(grid, |_| a);
        let g = grid::to_spectral(&f).unwrap();
        check(
            "constant-field transform",
            (g.coeffs[0] - a).norm() < 1e-13
                && g.coeffs[1..].iter().all(|c| c.norm() < 1e-13),
        );
        let back = grid::from_spectral(&g).unwrap();
        check(
            "transform round-trip",
            f.values
                .iter()
                .zip(&back.values)
                .all(|(x, y)| (x - y).norm() < 1e-12),
        );
    }

    // laplacian eigenvalue on a pure mode
    {
        let grid = make_grid(1, 32, 5.0).unwrap();
        let k = 2.0 * std::f64::consts::PI * 3.0 / grid.length;
        let f = Field::from_fn(grid, |x| Complex64::new(0.0, k * x[0]).exp());
        let lap = grid::from_spectral(&grid::apply_laplacian(&grid::to_spectral(&f).unwrap()))
            .unwrap();
        check(
            "laplacian eigenvalue",
            f.values
                .iter()
                .zip(&lap.values)
                .all(|(v, l)| (l + k * k * v).norm() < 1e-10),
        );
    }

    // ground-state profile point values
    {
        let w3 = |r2: f64| (1.0 + r2 / 3.0).powf(-0.5);
        check("ground-state d=3 center", (w3(0.0) - 1.0).abs() < 1e-15);
        check(
            "ground-state d=3 at r2=3",
            (w3(3.0) - 0.5f64.sqrt()).abs() < 1e-12,
        );
        let w4 = |r2: f64| 1.0 / (1.0 + r2 / 8.0);
        check("ground-state d=4 at r2=8", (w4(8.0) - 0.5).abs() < 1e-15);
    }

    // variational identities
    for d in [3usize, 4] {
        match ground_state::ground_state_constants(d, QuadratureSpec::default()) {
            Ok(c) => {
                check(
                    &format!("constants pairing d={d}"),
                    (c.potential / c.kinetic - 1.0).abs() < 1e-9
                        && (c.energy * d as f64 / c.kinetic - 1.0).abs() < 1e-9,
                );
            }
            Err(_) => check(&format!("constants pairing d={d}"), false),
        }
    }

    // endpoint gap values
    {
        let g = limits::LimitTarget::Heat.gap(0.4);
        check(
            "heat gap formula",
            (g - 2.0 * (0.2f64).sin()).abs() < 1e-15,
        );
        check(
            "schrodinger gap at endpoint",
            limits::LimitTarget::Schrodinger.gap(std::f64::consts::FRAC_PI_2) < 1e-15,
        );
    }

    // zero-field admissibility
    {
        let grid = make_grid(4, 8, 20.0).unwrap();
        let consts =
            ground_state::ground_state_constants(4, QuadratureSpec::default()).unwrap();
        let rep = ground_state::admissibility(&Field::zeros(grid), -1, &consts).unwrap();
        check(
            "zero-field admissible",
            rep.admissible
                && (rep.energy_margin - consts.energy).abs() < 1e-12
                && (rep.kinetic_margin - consts.kinetic).abs() < 1e-12,
        );
    }

    // config examples
    {
        check(
            "config defaults",
            parse_config("d = 4\nn = 16\nL = 40\ntheta = 0.2\nmu = -1").is_ok(),
        );
        check("config rejects d=7", parse_config("d = 7").is_err());
        check(
            "config rejects unknown key",
            matches!(
                parse_config("thetaa = 0.2"),
                Err(cgl_lab::config::ConfigError::UnknownKey { .. })
            ),
        );
    }

    // snapshot round-trip in the output dir
    {
        let grid = make_grid(2, 8, 5.0).unwrap();
        let f = Field::from_fn(grid, |x| Complex64::new(x[0], -x[1]));
        let meta = SnapshotMeta {
            theta: 0.1,
            t: 0.5,
            mu: 1,
        };
        let p = dir.join("selftest.cglf");
        let ok = io::write_snapshot(&f, &meta, &p).is_ok()
            && match io::read_snapshot(&p) {
                Ok((g, m)) => m == meta && g.values == f.values,
                Err(_) => false,
            };
        check("snapshot round-trip", ok);
        let _ = std::fs::remove_file(&p);
    }

    // csv zero record
    {
        let p = dir.join("selftest.csv");
        let ok = io::write_diagnostics_csv(&[cgl_lab::DiagnosticRecord::zero(0.0)], &p).is_ok()
            && match io::read_diagnostics_csv(&p) {
                Ok(rs) => rs.len() == 1 && rs[0] == cgl_lab::DiagnosticRecord::zero(0.0),
                Err(_) => false,
            };
        check("diagnostics csv round-trip", ok);
        let _ = std::fs::remove_file(&p);
    }

    let default_cfg = parse_config("").expect("empty config is valid");
    finish_manifest("selftest", default_cfg.to_text(), Vec::new(), dir, started)?;

    if failures > 0 {
        return Err(AppError::Tolerance(format!("{failures} selftest checks failed")));
    }
    println!("selftest: all checks passed");
    Ok(())
}
