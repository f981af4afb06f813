//! Flat `key = value` run configuration: parsing with defaults, and a
//! resolved echo whose re-parse reproduces the configuration bitwise.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::grid::{make_grid, GridSpec};
use crate::limits::{DataKind, SweepMode};
use crate::semiflow::{default_dt, DealiasFactor, EquationSpec, SemiflowError, StepperConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: key `{key}`: expected {expected}, got `{value}`")]
    TypeMismatch {
        key: String,
        line: usize,
        expected: &'static str,
        value: String,
    },
    #[error("line {line}: key `{key}`: {message}")]
    Constraint {
        key: String,
        line: usize,
        message: String,
    },
    #[error("line {line}: expected `key = value`, got `{0}`", .text)]
    Malformed { text: String, line: usize },
}

/// Fully resolved run configuration; every field has a concrete value.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub d: usize,
    pub n: usize,
    pub length: f64,
    pub theta: f64,
    pub mu: i8,
    pub horizon: f64,
    pub dt: f64,
    pub dealias_factor: DealiasFactor,
    pub sample_stride: usize,
    pub data: DataKind,
    pub perturbation: Option<DataKind>,
    pub sweep_thetas: Vec<f64>,
    pub sweep_mode: SweepMode,
    pub output_dir: String,
    pub snapshots_enabled: bool,
    pub exploratory: bool,
}

impl Config {
    pub fn grid(&self) -> Result<GridSpec, crate::grid::GridError> {
        make_grid(self.d, self.n, self.length)
    }

    pub fn equation(&self) -> Result<EquationSpec, SemiflowError> {
        EquationSpec::new(self.theta, self.mu, self.d)
    }

    pub fn stepper(&self) -> StepperConfig {
        StepperConfig {
            dt: self.dt,
            dealias_factor: self.dealias_factor,
            coefficient_switch_radius: 2.0,
            sample_stride: self.sample_stride,
            linear_only: false,
        }
    }

    /// Echo of the resolved configuration; parsing the echo reproduces this
    /// configuration bitwise (floats printed with 17 significant digits).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let kv = |out: &mut String, k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        let f = |x: f64| format!("{x:.16e}");
        kv(&mut out, "d", self.d.to_string());
        kv(&mut out, "n", self.n.to_string());
        kv(&mut out, "L", f(self.length));
        kv(&mut out, "theta", f(self.theta));
        kv(&mut out, "mu", self.mu.to_string());
        kv(&mut out, "T", f(self.horizon));
        kv(&mut out, "dt", f(self.dt));
        kv(
            &mut out,
            "dealias_factor",
            match self.dealias_factor {
                DealiasFactor::One => "1",
                DealiasFactor::ThreeHalves => "3/2",
                DealiasFactor::Two => "2",
                DealiasFactor::Three => "3",
            }
            .to_string(),
        );
        kv(&mut out, "sample_stride", self.sample_stride.to_string());
        let data_block = |out: &mut String, prefix: &str, data: &DataKind| {
            let join = |c: &[f64]| {
                c.iter()
                    .map(|&v| format!("{v:.16e}"))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            match data {
                DataKind::Gaussian { a, center, sigma } => {
                    kv(out, &format!("{prefix}.kind"), "gaussian".into());
                    kv(out, &format!("{prefix}.a"), f(*a));
                    kv(out, &format!("{prefix}.c"), join(center));
                    kv(out, &format!("{prefix}.sigma"), f(*sigma));
                }
                DataKind::ModulatedGaussian {
                    a,
                    center,
                    sigma,
                    m,
                } => {
                    kv(out, &format!("{prefix}.kind"), "modulated_gaussian".into());
                    kv(out, &format!("{prefix}.a"), f(*a));
                    kv(out, &format!("{prefix}.c"), join(center));
                    kv(out, &format!("{prefix}.sigma"), f(*sigma));
                    kv(out, &format!("{prefix}.m"), f(*m));
                }
                DataKind::ScaledGroundState { a, lambda, center } => {
                    kv(out, &format!("{prefix}.kind"), "scaled_ground_state".into());
                    kv(out, &format!("{prefix}.a"), f(*a));
                    kv(out, &format!("{prefix}.c"), join(center));
                    kv(out, &format!("{prefix}.lambda"), f(*lambda));
                }
            }
        };
        data_block(&mut out, "data", &self.data);
        if let Some(p) = &self.perturbation {
            data_block(&mut out, "perturbation", p);
        }
        if !self.sweep_thetas.is_empty() {
            kv(
                &mut out,
                "sweep.thetas",
                self.sweep_thetas
                    .iter()
                    .map(|&v| format!("{v:.16e}"))
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        kv(
            &mut out,
            "sweep.mode",
            match self.sweep_mode {
                SweepMode::Dispersion => "dispersion",
                SweepMode::Inviscid => "inviscid",
            }
            .to_string(),
        );
        kv(&mut out, "output.dir", self.output_dir.clone());
        kv(
            &mut out,
            "snapshots.enabled",
            self.snapshots_enabled.to_string(),
        );
        kv(&mut out, "exploratory", self.exploratory.to_string());
        out
    }
}

const KNOWN_KEYS: &[&str] = &[
    "d",
    "n",
    "L",
    "theta",
    "mu",
    "T",
    "dt",
    "dealias_factor",
    "sample_stride",
    "data.kind",
    "data.a",
    "data.c",
    "data.sigma",
    "data.m",
    "data.lambda",
    "perturbation.kind",
    "perturbation.a",
    "perturbation.c",
    "perturbation.sigma",
    "perturbation.m",
    "perturbation.lambda",
    "sweep.thetas",
    "sweep.mode",
    "output.dir",
    "snapshots.enabled",
    "exploratory",
];

struct Raw {
    // key -> (value, 1-based line); duplicates keep the last occurrence
    map: BTreeMap<String, (String, usize)>,
}

impl Raw {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }
}

fn parse_lines(text: &str) -> Result<Raw, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let body = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        };
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        let Some(eq) = body.find('=') else {
            return Err(ConfigError::Malformed {
                text: body.to_string(),
                line: line_no,
            });
        };
        let key = body[..eq].trim().to_string();
        let value = body[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Malformed {
                text: body.to_string(),
                line: line_no,
            });
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { key, line: line_no });
        }
        map.insert(key, (value, line_no));
    }
    Ok(Raw { map })
}

fn parse_f64(key: &str, v: &str, line: usize) -> Result<f64, ConfigError> {
    v.parse::<f64>().map_err(|_| ConfigError::TypeMismatch {
        key: key.into(),
        line,
        expected: "a real number",
        value: v.into(),
    })
}

fn parse_usize(key: &str, v: &str, line: usize) -> Result<usize, ConfigError> {
    v.parse::<usize>().map_err(|_| ConfigError::TypeMismatch {
        key: key.into(),
        line,
        expected: "a nonnegative integer",
        value: v.into(),
    })
}

fn parse_bool(key: &str, v: &str, line: usize) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::TypeMismatch {
            key: key.into(),
            line,
            expected: "true or false",
            value: v.into(),
        }),
    }
}

fn parse_f64_list(key: &str, v: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(|s| parse_f64(key, s.trim(), line))
        .collect()
}

fn constraint(key: &str, line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        key: key.into(),
        line,
        message: message.into(),
    }
}

fn parse_data_block(
    raw: &mut Raw,
    prefix: &str,
    d: usize,
    length: f64,
    required: bool,
) -> Result<Option<DataKind>, ConfigError> {
    let kind_key = format!("{prefix}.kind");
    let a_key = format!("{prefix}.a");
    let c_key = format!("{prefix}.c");
    let sigma_key = format!("{prefix}.sigma");
    let m_key = format!("{prefix}.m");
    let lambda_key = format!("{prefix}.lambda");

    let kind = raw.take(&kind_key);
    let a = raw.take(&a_key);
    let c = raw.take(&c_key);
    let sigma = raw.take(&sigma_key);
    let m = raw.take(&m_key);
    let lambda = raw.take(&lambda_key);

    let any_set = kind.is_some()
        || a.is_some()
        || c.is_some()
        || sigma.is_some()
        || m.is_some()
        || lambda.is_some();
    if !required && !any_set {
        return Ok(None);
    }

    let kind_name = match &kind {
        Some((v, _)) => v.clone(),
        None => "gaussian".to_string(),
    };
    let kind_line = kind.map(|(_, l)| l).unwrap_or(0);

    let a_val = match &a {
        Some((v, l)) => parse_f64(&a_key, v, *l)?,
        None => 1.0,
    };
    let center = match &c {
        Some((v, l)) => {
            let coords = parse_f64_list(&c_key, v, *l)?;
            if coords.len() != d {
                return Err(constraint(
                    &c_key,
                    *l,
                    format!("needs {d} comma-separated coordinates"),
                ));
            }
            coords
        }
        None => vec![length / 2.0; d],
    };
    let sigma_val = match &sigma {
        Some((v, l)) => parse_f64(&sigma_key, v, *l)?,
        None => 2.0,
    };
    let m_val = match &m {
        Some((v, l)) => parse_f64(&m_key, v, *l)?,
        None => 1.0,
    };
    let lambda_val = match &lambda {
        Some((v, l)) => parse_f64(&lambda_key, v, *l)?,
        None => 1.0,
    };

    let data = match kind_name.as_str() {
        "gaussian" => {
            if let Some((_, l)) = lambda {
                return Err(constraint(&lambda_key, l, "only valid for scaled_ground_state"));
            }
            if let Some((_, l)) = m {
                return Err(constraint(&m_key, l, "only valid for modulated_gaussian"));
            }
            DataKind::Gaussian {
                a: a_val,
                center,
                sigma: sigma_val,
            }
        }
        "modulated_gaussian" => {
            if let Some((_, l)) = lambda {
                return Err(constraint(&lambda_key, l, "only valid for scaled_ground_state"));
            }
            DataKind::ModulatedGaussian {
                a: a_val,
                center,
                sigma: sigma_val,
                m: m_val,
            }
        }
        "scaled_ground_state" => {
            if let Some((_, l)) = sigma {
                return Err(constraint(&sigma_key, l, "only valid for gaussian kinds"));
            }
            if let Some((_, l)) = m {
                return Err(constraint(&m_key, l, "only valid for modulated_gaussian"));
            }
            DataKind::ScaledGroundState {
                a: a_val,
                lambda: lambda_val,
                center,
            }
        }
        other => {
            return Err(ConfigError::TypeMismatch {
                key: kind_key,
                line: kind_line,
                expected: "gaussian, modulated_gaussian, or scaled_ground_state",
                value: other.into(),
            })
        }
    };
    Ok(Some(data))
}

/// Parse a configuration file and apply defaults for every absent key.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut raw = parse_lines(text)?;

    let d = match raw.take("d") {
        Some((v, l)) => {
            let d = parse_usize("d", &v, l)?;
            if !(1..=4).contains(&d) {
                return Err(constraint("d", l, "must be in 1..4"));
            }
            d
        }
        None => 4,
    };
    let n = match raw.take("n") {
        Some((v, l)) => {
            let n = parse_usize("n", &v, l)?;
            if n < 8 || !n.is_power_of_two() {
                return Err(constraint("n", l, "must be a power of two >= 8"));
            }
            n
        }
        None => 16,
    };
    let length = match raw.take("L") {
        Some((v, l)) => {
            let x = parse_f64("L", &v, l)?;
            if !(x > 0.0) || !x.is_finite() {
                return Err(constraint("L", l, "must be positive and finite"));
            }
            x
        }
        None => 40.0,
    };
    let theta = match raw.take("theta") {
        Some((v, l)) => {
            let x = parse_f64("theta", &v, l)?;
            if !x.is_finite() || x.abs() > std::f64::consts::FRAC_PI_2 {
                return Err(constraint("theta", l, "must lie in [-pi/2, pi/2]"));
            }
            x
        }
        None => 0.0,
    };
    let mu = match raw.take("mu") {
        Some((v, l)) => match v.as_str() {
            "1" | "+1" => 1i8,
            "-1" => -1i8,
            _ => {
                return Err(ConfigError::TypeMismatch {
                    key: "mu".into(),
                    line: l,
                    expected: "+1 or -1",
                    value: v,
                })
            }
        },
        None => 1,
    };
    let horizon = match raw.take("T") {
        Some((v, l)) => {
            let x = parse_f64("T", &v, l)?;
            if !(x > 0.0) || !x.is_finite() {
                return Err(constraint("T", l, "must be positive and finite"));
            }
            x
        }
        None => 1.0,
    };
    let grid = make_grid(d, n, length).expect("validated above");
    let dt = match raw.take("dt") {
        Some((v, l)) => {
            let x = parse_f64("dt", &v, l)?;
            if !(x > 0.0) || !x.is_finite() {
                return Err(constraint("dt", l, "must be positive and finite"));
            }
            x
        }
        None => default_dt(&grid, theta),
    };
    let dealias_factor = match raw.take("dealias_factor") {
        Some((v, l)) => DealiasFactor::parse(&v).ok_or_else(|| ConfigError::TypeMismatch {
            key: "dealias_factor".into(),
            line: l,
            expected: "1, 3/2, 2, or 3",
            value: v.clone(),
        })?,
        None => DealiasFactor::default_for(d),
    };
    let sample_stride = match raw.take("sample_stride") {
        Some((v, l)) => {
            let s = parse_usize("sample_stride", &v, l)?;
            if s == 0 {
                return Err(constraint("sample_stride", l, "must be >= 1"));
            }
            s
        }
        None => 10,
    };

    let data = parse_data_block(&mut raw, "data", d, length, true)?.expect("required");
    let perturbation = parse_data_block(&mut raw, "perturbation", d, length, false)?;

    let sweep_thetas = match raw.take("sweep.thetas") {
        Some((v, l)) => parse_f64_list("sweep.thetas", &v, l)?,
        None => Vec::new(),
    };
    let sweep_mode = match raw.take("sweep.mode") {
        Some((v, l)) => match v.as_str() {
            "dispersion" => SweepMode::Dispersion,
            "inviscid" => SweepMode::Inviscid,
            _ => {
                return Err(ConfigError::TypeMismatch {
                    key: "sweep.mode".into(),
                    line: l,
                    expected: "dispersion or inviscid",
                    value: v,
                })
            }
        },
        None => SweepMode::Dispersion,
    };
    let output_dir = match raw.take("output.dir") {
        Some((v, _)) => v,
        None => "out".to_string(),
    };
    let snapshots_enabled = match raw.take("snapshots.enabled") {
        Some((v, l)) => parse_bool("snapshots.enabled", &v, l)?,
        None => false,
    };
    let exploratory = match raw.take("exploratory") {
        Some((v, l)) => parse_bool("exploratory", &v, l)?,
        None => false,
    };

    debug_assert!(raw.map.is_empty(), "all known keys consumed");
    Ok(Config {
        d,
        n,
        length,
        theta,
        mu,
        horizon,
        dt,
        dealias_factor,
        sample_stride,
        data,
        perturbation,
        sweep_thetas,
        sweep_mode,
        output_dir,
        snapshots_enabled,
        exploratory,
    })
}
