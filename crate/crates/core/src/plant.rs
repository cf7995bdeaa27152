//! Scalar plants `ẏ = f(y) + b·u` with a sector nonlinearity `f(y) = α(y)·y`,
//! optionally behind a first-order actuator lag `ε·u̇ = u_nom − u`.

use thiserror::Error;

/// Below this `|y|` the ratio `f(y)/y` is replaced by the analytic `α(0)`.
pub const RATIO_GUARD: f64 = 1e-9;

/// Tolerance when comparing sampled `α(y)` with the declared bounds.
pub const SECTOR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid sector: {0}")]
    InvalidSector(String),
    #[error("invalid plant: {0}")]
    InvalidPlant(String),
    #[error("y = {y} outside the tabulated sector range")]
    OutOfRange { y: f64 },
    #[error("non-finite plant state or derivative")]
    NonFinite,
}

/// Linear interpolant of `f` through `(y, f)` samples, plus the value
/// `α(0)` used for the ratio at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSector {
    y: Vec<f64>,
    f: Vec<f64>,
    alpha_at_zero: Option<f64>,
}

impl TabulatedSector {
    pub fn new(y: Vec<f64>, f: Vec<f64>, alpha_at_zero: Option<f64>) -> Result<Self, PlantError> {
        if y.len() != f.len() || y.len() < 2 {
            return Err(PlantError::InvalidSector(
                "tabulated sector needs at least two (y, f) pairs".into(),
            ));
        }
        if y.iter().chain(&f).any(|v| !v.is_finite()) {
            return Err(PlantError::InvalidSector("samples must be finite".into()));
        }
        if y.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PlantError::InvalidSector(
                "sample abscissae must be strictly increasing".into(),
            ));
        }
        if let Some(i) = y.iter().position(|&v| v == 0.0) {
            if f[i] != 0.0 {
                return Err(PlantError::InvalidSector(format!(
                    "sample at y = 0 has f = {}, sector form requires f(0) = 0",
                    f[i]
                )));
            }
            if alpha_at_zero.is_none() {
                return Err(PlantError::InvalidSector(
                    "sample at y = 0 needs an explicit alpha value".into(),
                ));
            }
        }
        Ok(Self {
            y,
            f,
            alpha_at_zero,
        })
    }

    fn eval(&self, y: f64) -> Result<f64, PlantError> {
        let (first, last) = (self.y[0], self.y[self.y.len() - 1]);
        if !(first..=last).contains(&y) {
            return Err(PlantError::OutOfRange { y });
        }
        let hi = self.y.partition_point(|&s| s < y).max(1);
        let lo = hi - 1;
        let w = (y - self.y[lo]) / (self.y[hi] - self.y[lo]);
        Ok(self.f[lo] + w * (self.f[hi] - self.f[lo]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectorKind {
    /// `f(y) = α·y`.
    Linear {
        alpha: f64,
    },
    /// `f(y) = a·[1 + b_amp·sin(exp(y))]·y`.
    SinExp {
        a: f64,
        b_amp: f64,
    },
    Tabulated(TabulatedSector),
}

/// Sector nonlinearity with its declared bounds `α₁ ≤ α(y) ≤ α₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorFn {
    pub kind: SectorKind,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl SectorFn {
    pub fn new(kind: SectorKind, alpha1: f64, alpha2: f64) -> Result<Self, PlantError> {
        if !(alpha1.is_finite() && alpha2.is_finite()) || alpha1 > alpha2 {
            return Err(PlantError::InvalidSector(format!(
                "declared bounds must satisfy alpha1 <= alpha2, got [{alpha1}, {alpha2}]"
            )));
        }
        Ok(Self {
            kind,
            alpha1,
            alpha2,
        })
    }

    /// Linear sector with tight bounds `[α, α]`.
    pub fn linear(alpha: f64) -> Self {
        Self {
            kind: SectorKind::Linear { alpha },
            alpha1: alpha,
            alpha2: alpha,
        }
    }

    /// `a·[1 + b_amp·sin(exp(y))]·y` with bounds `a(1 ∓ |b_amp|)`, ordered.
    pub fn sin_exp(a: f64, b_amp: f64) -> Self {
        let lo = a * (1.0 - b_amp.abs());
        let hi = a * (1.0 + b_amp.abs());
        Self {
            kind: SectorKind::SinExp { a, b_amp },
            alpha1: lo.min(hi),
            alpha2: lo.max(hi),
        }
    }

    pub fn eval(&self, y: f64) -> Result<f64, PlantError> {
        eval_f(self, y)
    }

    /// `α(y)`, using the analytic form where one exists.
    pub fn alpha(&self, y: f64) -> Result<f64, PlantError> {
        match &self.kind {
            SectorKind::Linear { alpha } => Ok(*alpha),
            SectorKind::SinExp { a, b_amp } => Ok(a * (1.0 + b_amp * y.exp().sin())),
            SectorKind::Tabulated(t) => {
                if y.abs() < RATIO_GUARD {
                    t.alpha_at_zero
                        .ok_or_else(|| PlantError::InvalidSector("no alpha value at y = 0".into()))
                } else {
                    Ok(t.eval(y)? / y)
                }
            }
        }
    }

    /// `α(0)`, needed where the ratio `f(y)/y` is undefined.
    fn alpha_at_origin(&self) -> Option<f64> {
        match &self.kind {
            SectorKind::Tabulated(t) => t.alpha_at_zero,
            _ => self.alpha(0.0).ok(),
        }
    }

    pub fn is_linear(&self) -> Option<f64> {
        match self.kind {
            SectorKind::Linear { alpha } => Some(alpha),
            _ => None,
        }
    }
}

pub fn eval_f(sector: &SectorFn, y: f64) -> Result<f64, PlantError> {
    match &sector.kind {
        SectorKind::Linear { alpha } => Ok(alpha * y),
        SectorKind::SinExp { a, b_amp } => Ok(a * (1.0 + b_amp * y.exp().sin()) * y),
        SectorKind::Tabulated(t) => t.eval(y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorViolation {
    pub y: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorCheck {
    pub ok: bool,
    pub violations: Vec<SectorViolation>,
    /// Sampled extrema of `α(y)`.
    pub observed_min: f64,
    pub observed_max: f64,
}

/// Samples `α(y) = f(y)/y` on `n` uniform points of `[y_min, y_max]` and
/// compares against the declared bounds.
pub fn verify_sector_bounds(
    sector: &SectorFn,
    y_min: f64,
    y_max: f64,
    n: usize,
) -> Result<SectorCheck, PlantError> {
    if !(y_min < y_max) || n < 2 {
        return Err(PlantError::InvalidSector(format!(
            "need y_min < y_max and n >= 2, got [{y_min}, {y_max}] with n = {n}"
        )));
    }
    let h = (y_max - y_min) / (n - 1) as f64;
    let mut violations = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let y = y_min + h * i as f64;
        let alpha = if y.abs() < RATIO_GUARD {
            match sector.alpha_at_origin() {
                Some(a) => a,
                None => continue,
            }
        } else {
            eval_f(sector, y)? / y
        };
        if !alpha.is_finite() {
            return Err(PlantError::NonFinite);
        }
        lo = lo.min(alpha);
        hi = hi.max(alpha);
        if alpha < sector.alpha1 - SECTOR_TOLERANCE || alpha > sector.alpha2 + SECTOR_TOLERANCE {
            violations.push(SectorViolation { y, alpha });
        }
    }
    Ok(SectorCheck {
        ok: violations.is_empty(),
        violations,
        observed_min: lo,
        observed_max: hi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// `ẏ = f(y) + b·u_nom`.
    Nominal,
    /// `ẏ = f(y) + b·u`, `ε·u̇ = u_nom − u`.
    ActuatorPerturbed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub sector: SectorFn,
    pub b: f64,
    pub epsilon: f64,
    pub topology: Topology,
}

impl PlantSpec {
    pub fn new(
        sector: SectorFn,
        b: f64,
        epsilon: f64,
        topology: Topology,
    ) -> Result<Self, PlantError> {
        let plant = Self {
            sector,
            b,
            epsilon,
            topology,
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.b.is_finite() && self.b != 0.0) {
            return Err(PlantError::InvalidPlant(format!(
                "input gain b must be finite and nonzero, got {}",
                self.b
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(PlantError::InvalidPlant(format!(
                "actuator time constant must be positive, got {}",
                self.epsilon
            )));
        }
        if self.sector.alpha1 > self.sector.alpha2 {
            return Err(PlantError::InvalidSector(
                "declared bounds out of order".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantRates {
    pub dy: f64,
    /// `None` for the nominal topology, which has no actuator state.
    pub du: Option<f64>,
}

pub fn plant_rhs(plant: &PlantSpec, y: f64, u: f64, u_nom: f64) -> Result<PlantRates, PlantError> {
    if !(y.is_finite() && u.is_finite() && u_nom.is_finite()) {
        return Err(PlantError::NonFinite);
    }
    let f = eval_f(&plant.sector, y)?;
    let rates = match plant.topology {
        Topology::ActuatorPerturbed => PlantRates {
            dy: f + plant.b * u,
            du: Some((u_nom - u) / plant.epsilon),
        },
        Topology::Nominal => PlantRates {
            dy: f + plant.b * u_nom,
            du: None,
        },
    };
    if !rates.dy.is_finite() || rates.du.is_some_and(|d| !d.is_finite()) {
        return Err(PlantError::NonFinite);
    }
    Ok(rates)
}
