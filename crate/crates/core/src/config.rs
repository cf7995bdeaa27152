//! Flat `section.key = value` experiment files.
//!
//! Blank lines and `#` comments are ignored. Every key may appear once;
//! unknown keys are rejected with the line they appear on.

use crate::controller::ControllerSpec;
use crate::gains::{BetaSpec, GainSpec};
use crate::plant::{PlantSpec, SectorFn, SectorKind, TabulatedSector, Topology};
use crate::simcore::{Method, SimConfig};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    /// 1-based line, `None` for problems not tied to one line (missing keys).
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub csv: String,
    pub svg: Option<String>,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    pub sim: SimConfig,
    pub y0: f64,
    pub u0: f64,
    pub q0: f64,
    /// Tail bound used by the verdict classifier.
    pub converge_tol: f64,
    pub tail_fraction: f64,
    pub ell_factor: f64,
    pub output: OutputPaths,
}

pub const KEYS: &[&str] = &[
    "plant.family",
    "plant.alpha",
    "plant.a",
    "plant.b_amp",
    "plant.samples",
    "plant.alpha0",
    "plant.alpha1",
    "plant.alpha2",
    "plant.b",
    "plant.epsilon",
    "plant.topology",
    "controller.kind",
    "controller.lambda",
    "controller.beta",
    "controller.p",
    "controller.c1",
    "controller.c2",
    "sim.method",
    "sim.dt",
    "sim.t_end",
    "sim.rel_tol",
    "sim.abs_tol",
    "sim.dt_min",
    "sim.dt_max",
    "sim.divergence_threshold",
    "sim.sample_stride",
    "sim.record_interval",
    "sim.converge_tol",
    "sim.tail_fraction",
    "init.y0",
    "init.u0",
    "init.q0",
    "certify.ell_factor",
    "output.csv",
    "output.svg",
    "output.report",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    used: std::cell::RefCell<Vec<String>>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::at(
                    line,
                    format!("expected `key = value`, got `{content}`"),
                ));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::at(line, format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line, format!("`{key}` has no value")));
            }
            if let Some((first, _)) = map.get(key) {
                return Err(ConfigError::at(
                    line,
                    format!("duplicate key `{key}` (first set on line {first})"),
                ));
            }
            map.insert(key.to_string(), (line, value.to_string()));
        }
        Ok(Self {
            map,
            used: Default::default(),
        })
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.used.borrow_mut().push(key.to_string());
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn required_str(&self, key: &str) -> Result<(usize, &str), ConfigError> {
        self.raw(key)
            .ok_or_else(|| ConfigError::global(format!("missing required key `{key}`")))
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        let x: f64 = v
            .parse()
            .map_err(|_| ConfigError::at(line, format!("`{key}`: `{v}` is not a number")))?;
        if !x.is_finite() {
            return Err(ConfigError::at(line, format!("`{key}` must be finite")));
        }
        Ok(Some(x))
    }

    fn required(&self, key: &str) -> Result<f64, ConfigError> {
        self.number(key)?
            .ok_or_else(|| ConfigError::global(format!("missing required key `{key}`")))
    }

    fn or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|(l, _)| *l)
    }

    /// Keys that were set but never read by the chosen plant and controller
    /// families, e.g. `controller.p` next to `controller.beta = identity`.
    fn unused(&self) -> Option<(usize, String)> {
        let used = self.used.borrow();
        self.map
            .iter()
            .filter(|(k, _)| !used.iter().any(|u| u == *k))
            .map(|(k, (l, _))| (*l, k.clone()))
            .min()
    }
}

/// Attaches the line of `key` (when present) to a validation failure.
fn invalid(entries: &Entries, key: &str, err: impl fmt::Display) -> ConfigError {
    ConfigError {
        line: entries.line_of(key),
        message: err.to_string(),
    }
}

fn parse_samples(line: usize, text: &str) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
    let mut ys = Vec::new();
    let mut fs = Vec::new();
    for pair in text.split(',') {
        let Some((y, f)) = pair.split_once(':') else {
            return Err(ConfigError::at(
                line,
                format!("sample `{}` is not `y:f`", pair.trim()),
            ));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| ConfigError::at(line, format!("`{}` is not a number", s.trim())))
        };
        ys.push(parse(y)?);
        fs.push(parse(f)?);
    }
    Ok((ys, fs))
}

fn parse_plant(e: &Entries) -> Result<PlantSpec, ConfigError> {
    let (line, family) = e.required_str("plant.family")?;
    let alpha1 = e.number("plant.alpha1")?;
    let alpha2 = e.number("plant.alpha2")?;
    let default_sector = match family {
        "linear" => SectorFn::linear(e.required("plant.alpha")?),
        "sinexp" => SectorFn::sin_exp(e.required("plant.a")?, e.required("plant.b_amp")?),
        "tabulated" => {
            let (sl, text) = e.required_str("plant.samples")?;
            let (ys, fs) = parse_samples(sl, text)?;
            let table = TabulatedSector::new(ys, fs, e.number("plant.alpha0")?)
                .map_err(|err| ConfigError::at(sl, err.to_string()))?;
            let (Some(a1), Some(a2)) = (alpha1, alpha2) else {
                return Err(ConfigError::at(
                    line,
                    "tabulated plants need plant.alpha1 and plant.alpha2",
                ));
            };
            SectorFn {
                kind: SectorKind::Tabulated(table),
                alpha1: a1,
                alpha2: a2,
            }
        }
        other => {
            return Err(ConfigError::at(
                line,
                format!("unknown plant.family `{other}` (linear, sinexp, tabulated)"),
            ))
        }
    };
    let sector = SectorFn::new(
        default_sector.kind,
        alpha1.unwrap_or(default_sector.alpha1),
        alpha2.unwrap_or(default_sector.alpha2),
    )
    .map_err(|err| invalid(e, "plant.alpha1", err))?;
    let topology = match e.raw("plant.topology") {
        None | Some((_, "perturbed")) => Topology::ActuatorPerturbed,
        Some((_, "nominal")) => Topology::Nominal,
        Some((l, other)) => {
            return Err(ConfigError::at(
                l,
                format!("unknown plant.topology `{other}` (perturbed, nominal)"),
            ))
        }
    };
    let b = e.required("plant.b")?;
    let epsilon = e.required("plant.epsilon")?;
    PlantSpec::new(sector, b, epsilon, topology).map_err(|err| {
        let key = if b == 0.0 { "plant.b" } else { "plant.epsilon" };
        invalid(e, key, err)
    })
}

fn parse_controller(e: &Entries) -> Result<ControllerSpec, ConfigError> {
    let (line, kind) = e.required_str("controller.kind")?;
    let lambda = e.required("controller.lambda")?;
    let spec = match kind {
        "ng" => ControllerSpec::NussbaumGain { lambda },
        "npi" => {
            let (bl, beta) = e.required_str("controller.beta")?;
            let beta = match beta {
                "identity" => BetaSpec::Identity,
                "power" => BetaSpec::Power {
                    p: e.required("controller.p")?,
                },
                "expquad" => BetaSpec::ExpQuadratic {
                    c1: e.required("controller.c1")?,
                    c2: e.required("controller.c2")?,
                },
                other => {
                    return Err(ConfigError::at(
                        bl,
                        format!("unknown controller.beta `{other}` (identity, power, expquad)"),
                    ))
                }
            };
            beta.validate()
                .map_err(|err| ConfigError::at(bl, err.to_string()))?;
            ControllerSpec::NonlinearPi {
                lambda,
                gain: GainSpec::BetaCos(beta),
            }
        }
        other => {
            return Err(ConfigError::at(
                line,
                format!("unknown controller.kind `{other}` (npi, ng)"),
            ))
        }
    };
    spec.validate()
        .map_err(|err| invalid(e, "controller.lambda", err))?;
    Ok(spec)
}

fn parse_sim(e: &Entries, plant: &PlantSpec) -> Result<SimConfig, ConfigError> {
    let defaults = SimConfig::default();
    let method = match e.raw("sim.method") {
        None | Some((_, "rk4")) => Method::Rk4,
        Some((_, "rkf45")) => {
            let Method::Rkf45 {
                rel_tol,
                abs_tol,
                dt_min,
                dt_max,
            } = Method::rkf45_default()
            else {
                unreachable!()
            };
            Method::Rkf45 {
                rel_tol: e.or("sim.rel_tol", rel_tol)?,
                abs_tol: e.or("sim.abs_tol", abs_tol)?,
                dt_min: e.or("sim.dt_min", dt_min)?,
                dt_max: e.or("sim.dt_max", dt_max)?,
            }
        }
        Some((l, other)) => {
            return Err(ConfigError::at(
                l,
                format!("unknown sim.method `{other}` (rk4, rkf45)"),
            ))
        }
    };
    let stride = e.or("sim.sample_stride", defaults.sample_stride as f64)?;
    if stride < 1.0 || stride.fract() != 0.0 {
        return Err(invalid(
            e,
            "sim.sample_stride",
            "sim.sample_stride must be a positive integer",
        ));
    }
    let cfg = SimConfig {
        dt: e.or("sim.dt", defaults.dt)?,
        t_end: e.or("sim.t_end", defaults.t_end)?,
        method,
        divergence_threshold: e.or("sim.divergence_threshold", defaults.divergence_threshold)?,
        sample_stride: stride as usize,
        record_interval: e.number("sim.record_interval")?,
    };
    cfg.validate(plant)
        .map_err(|err| ConfigError::global(err.to_string()))?;
    Ok(cfg)
}

pub const DEFAULT_CONVERGE_TOL: f64 = 1e-2;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.1;
pub const DEFAULT_ELL_FACTOR: f64 = 1.01;

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let e = Entries::parse(text)?;
    let plant = parse_plant(&e)?;
    let controller = parse_controller(&e)?;
    let sim = parse_sim(&e, &plant)?;
    let converge_tol = e.or("sim.converge_tol", DEFAULT_CONVERGE_TOL)?;
    if converge_tol <= 0.0 {
        return Err(invalid(
            &e,
            "sim.converge_tol",
            "sim.converge_tol must be positive",
        ));
    }
    let tail_fraction = e.or("sim.tail_fraction", DEFAULT_TAIL_FRACTION)?;
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(invalid(
            &e,
            "sim.tail_fraction",
            "sim.tail_fraction must lie in (0, 1]",
        ));
    }
    let ell_factor = e.or("certify.ell_factor", DEFAULT_ELL_FACTOR)?;
    if ell_factor <= 1.0 {
        return Err(invalid(
            &e,
            "certify.ell_factor",
            "certify.ell_factor must exceed 1",
        ));
    }
    let y0 = e.or("init.y0", 0.0)?;
    let u0 = e.or("init.u0", 0.0)?;
    let q0 = e.or("init.q0", 0.0)?;
    if q0 < 0.0 {
        return Err(invalid(&e, "init.q0", "init.q0 must be nonnegative"));
    }
    let output = OutputPaths {
        csv: e
            .raw("output.csv")
            .map_or("trajectory.csv", |(_, v)| v)
            .to_string(),
        svg: e.raw("output.svg").map(|(_, v)| v.to_string()),
        report: e
            .raw("output.report")
            .map_or("certificate.txt", |(_, v)| v)
            .to_string(),
    };
    if let Some((line, key)) = e.unused() {
        return Err(ConfigError::at(
            line,
            format!("`{key}` does not apply to this plant or controller family"),
        ));
    }
    Ok(ExperimentConfig {
        plant,
        controller,
        sim,
        y0,
        u0,
        q0,
        converge_tol,
        tail_fraction,
        ell_factor,
        output,
    })
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: String, source: ConfigError },
}

pub fn load(path: &Path) -> Result<ExperimentConfig, LoadError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: shown.clone(),
        source,
    })?;
    parse(&text).map_err(|source| LoadError::Parse {
        path: shown,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG5: &str = "\
# closed loop with a sign-varying sector
plant.family = sinexp
plant.a = 3
plant.b_amp = 2
plant.b = 1
plant.epsilon = 0.1

controller.kind = npi
controller.lambda = 0.5
controller.beta = expquad
controller.c1 = 1
controller.c2 = 0.1

init.y0 = 5   # output
";

    #[test]
    fn parses_full_config() {
        let cfg = parse(FIG5).unwrap();
        assert_eq!(
            (cfg.plant.sector.alpha1, cfg.plant.sector.alpha2),
            (-3.0, 9.0)
        );
        assert_eq!(cfg.plant.topology, Topology::ActuatorPerturbed);
        assert_eq!(cfg.controller.lambda(), 0.5);
        assert_eq!(cfg.y0, 5.0);
        assert_eq!(cfg.sim, SimConfig::default());
        assert_eq!(cfg.output.csv, "trajectory.csv");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = FIG5.replace("plant.b = 1", "plant.b = one");
        assert_eq!(parse(&bad).unwrap_err().line, Some(5));
        let bad = FIG5.replace("plant.b = 1", "plant.bee = 1");
        let err = parse(&bad).unwrap_err();
        assert_eq!(err.line, Some(5));
        assert!(err.to_string().contains("unknown key"));
        let bad = format!("{FIG5}init.y0 = 4\n");
        assert_eq!(parse(&bad).unwrap_err().line, Some(15));
        let bad = FIG5.replace("plant.epsilon = 0.1", "plant.epsilon = -0.1");
        assert_eq!(parse(&bad).unwrap_err().line, Some(6));
        let bad = FIG5.replace("controller.c2 = 0.1", "controller.p = 2");
        assert_eq!(parse(&bad).unwrap_err().line, None);
    }

    #[test]
    fn rejects_inapplicable_keys() {
        let bad = format!("{FIG5}controller.p = 2\n");
        let err = parse(&bad).unwrap_err();
        assert_eq!(err.line, Some(15));
    }

    #[test]
    fn rk4_step_limit_is_enforced() {
        let bad = format!("{FIG5}sim.dt = 0.05\n");
        assert!(parse(&bad).unwrap_err().message.contains("dt"));
    }

    #[test]
    fn tabulated_family() {
        let text = "\
plant.family = tabulated
plant.samples = -2:-2, 0:0, 2:2
plant.alpha0 = 1
plant.alpha1 = 1
plant.alpha2 = 1
plant.b = 1
plant.epsilon = 0.1
controller.kind = ng
controller.lambda = 0.1
";
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.plant.sector.eval(1.0).unwrap(), 1.0);
        let missing = text.replace("plant.alpha0 = 1\n", "");
        assert_eq!(parse(&missing).unwrap_err().line, Some(2));
    }
}
