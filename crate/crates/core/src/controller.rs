//! Nonlinear PI and Nussbaum-gain controllers.
//!
//! Both controllers integrate the same quantity `q̇ = λ·y²`. The nonlinear PI
//! law reads its gain argument as `z = ½y² + q`, so `q` is the integral part
//! of `z`; the Nussbaum-gain law uses `ζ = q` directly.

use crate::gains::{eval_kappa, GainError, GainSpec};
use crate::plant::{PlantError, PlantSpec};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("the identity check applies to the nonlinear PI controller only")]
    NotNonlinearPi,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    /// `u_nom = κ(z)·y`, `z = ½y² + λ∫y²`.
    NonlinearPi { lambda: f64, gain: GainSpec },
    /// `u_nom = ζ²·cos(ζ)·y`, `ζ̇ = λ·y²`.
    NussbaumGain { lambda: f64 },
}

impl ControllerSpec {
    pub fn lambda(&self) -> f64 {
        match self {
            ControllerSpec::NonlinearPi { lambda, .. }
            | ControllerSpec::NussbaumGain { lambda } => *lambda,
        }
    }

    pub fn gain(&self) -> Option<&GainSpec> {
        match self {
            ControllerSpec::NonlinearPi { gain, .. } => Some(gain),
            ControllerSpec::NussbaumGain { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let lambda = self.lambda();
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(ControllerError::InvalidLambda(lambda));
        }
        if let Some(gain) = self.gain() {
            gain.validate()?;
        }
        Ok(())
    }
}

/// Integrator state. For the nonlinear PI controller `q = λ∫₀ᵗ y²`; for the
/// Nussbaum-gain controller `q = ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState {
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerOutput {
    pub u_nom: f64,
    /// `z` for the nonlinear PI controller, `ζ` for the Nussbaum-gain one.
    pub z: f64,
}

pub fn controller_output(
    spec: &ControllerSpec,
    state: ControllerState,
    y: f64,
) -> Result<ControllerOutput, GainError> {
    match spec {
        ControllerSpec::NonlinearPi { gain, .. } => {
            let z = 0.5 * y * y + state.q;
            let u_nom = eval_kappa(gain, z)? * y;
            if !u_nom.is_finite() {
                return Err(GainError::Overflow { z });
            }
            Ok(ControllerOutput { u_nom, z })
        }
        ControllerSpec::NussbaumGain { .. } => {
            let zeta = state.q;
            let u_nom = zeta * zeta * zeta.cos() * y;
            if !u_nom.is_finite() {
                return Err(GainError::Overflow { z: zeta });
            }
            Ok(ControllerOutput { u_nom, z: zeta })
        }
    }
}

/// `q̇ = λ·y²`, shared by both controllers.
pub fn controller_rhs(spec: &ControllerSpec, y: f64) -> f64 {
    spec.lambda() * y * y
}

/// Residual of `y·ẏ + λy² = b·y·u + (α(y) + λ)·y²`, which holds identically
/// along the perturbed closed loop.
pub fn z_dot_identity_check(
    plant: &PlantSpec,
    spec: &ControllerSpec,
    y: f64,
    u: f64,
) -> Result<f64, ControllerError> {
    let ControllerSpec::NonlinearPi { lambda, .. } = spec else {
        return Err(ControllerError::NotNonlinearPi);
    };
    let y_dot = plant.sector.eval(y)? + plant.b * u;
    let lhs = y * y_dot + lambda * y * y;
    let rhs = plant.b * y * u + (plant.sector.alpha(y)? + lambda) * y * y;
    Ok((lhs - rhs).abs())
}
