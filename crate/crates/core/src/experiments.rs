//! Reference closed loops and the (ε, λ) robustness sweep.
//!
//! The reference runs use the adaptive integrator. The fixed-step RK4 scheme
//! at `dt = 1e-3` overflows on the sign-varying sector loop within the first
//! step, and it converges spuriously on the `z·cos z` loop, so neither
//! reference verdict is reliable under it.

use crate::config::ExperimentConfig;
use crate::controller::ControllerSpec;
use crate::gains::{BetaSpec, GainSpec};
use crate::plant::{PlantSpec, SectorFn, Topology};
use crate::simcore::{
    classify, integrate, Method, SimConfig, SimError, Trajectory, Verdict, VerdictClass,
};
use rayon::prelude::*;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: &'static str,
    pub label: &'static str,
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    pub sim: SimConfig,
    pub y0: f64,
    pub u0: f64,
    pub q0: f64,
    pub expected: VerdictClass,
    pub converge_tol: f64,
    pub tail_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub trajectory: Trajectory,
    pub verdict: Verdict,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn as_expected(&self, expected: VerdictClass) -> bool {
        self.verdict.class == expected
    }
}

impl Experiment {
    pub fn run(&self) -> Result<Outcome, SimError> {
        let start = Instant::now();
        let trajectory = integrate(
            &self.plant,
            &self.controller,
            self.y0,
            self.u0,
            self.q0,
            &self.sim,
        )?;
        let elapsed = start.elapsed();
        let verdict = classify(&trajectory, self.converge_tol, self.tail_fraction);
        Ok(Outcome {
            trajectory,
            verdict,
            elapsed,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            name: "simulate",
            label: "simulate",
            plant: cfg.plant.clone(),
            controller: cfg.controller.clone(),
            sim: cfg.sim,
            y0: cfg.y0,
            u0: cfg.u0,
            q0: cfg.q0,
            expected: VerdictClass::Converged,
            converge_tol: cfg.converge_tol,
            tail_fraction: cfg.tail_fraction,
        }
    }
}

/// Tolerance on the tail of `max(|y|, |u|, |u_nom|)` for a Converged verdict.
pub const CONVERGE_TOL: f64 = 1e-2;
pub const TAIL_FRACTION: f64 = 0.1;

pub const FIG4_T_END: f64 = 100.0;
pub const FIG5_T_END: f64 = 30.0;

pub fn fig4_plant() -> PlantSpec {
    PlantSpec {
        sector: SectorFn::linear(0.8),
        b: 0.05,
        epsilon: 0.1,
        topology: Topology::ActuatorPerturbed,
    }
}

pub fn fig4_sim() -> SimConfig {
    SimConfig {
        dt: 1e-3,
        t_end: FIG4_T_END,
        method: Method::Rkf45 {
            rel_tol: 1e-7,
            abs_tol: 1e-9,
            dt_min: 1e-12,
            dt_max: 1e-2,
        },
        divergence_threshold: 1e3,
        sample_stride: 1,
        record_interval: Some(1e-2),
    }
}

/// The three linear-plant runs: Nussbaum gain, `z·cos z` and `z²·cos z`.
pub fn fig4_experiments() -> Vec<Experiment> {
    let base = |name, label, controller, expected| Experiment {
        name,
        label,
        plant: fig4_plant(),
        controller,
        sim: fig4_sim(),
        y0: 5.0,
        u0: 0.0,
        q0: 0.0,
        expected,
        converge_tol: CONVERGE_TOL,
        tail_fraction: TAIL_FRACTION,
    };
    let npi = |p| ControllerSpec::NonlinearPi {
        lambda: 0.15,
        gain: GainSpec::BetaCos(BetaSpec::Power { p }),
    };
    vec![
        base(
            "ng",
            "NG: zeta^2 cos(zeta)",
            ControllerSpec::NussbaumGain { lambda: 0.15 },
            VerdictClass::Diverged,
        ),
        base("npi", "nPI: z cos(z)", npi(1.0), VerdictClass::Diverged),
        base(
            "npi_n",
            "nPI-N: z^2 cos(z)",
            npi(2.0),
            VerdictClass::Converged,
        ),
    ]
}

pub fn fig5_plant(epsilon: f64) -> PlantSpec {
    PlantSpec {
        sector: SectorFn::sin_exp(3.0, 2.0),
        b: 1.0,
        epsilon,
        topology: Topology::ActuatorPerturbed,
    }
}

pub fn fig5_controller() -> ControllerSpec {
    ControllerSpec::NonlinearPi {
        lambda: 0.5,
        gain: GainSpec::BetaCos(BetaSpec::ExpQuadratic { c1: 1.0, c2: 0.1 }),
    }
}

pub fn fig5_sim() -> SimConfig {
    SimConfig {
        dt: 1e-3,
        t_end: FIG5_T_END,
        method: Method::Rkf45 {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            dt_min: 1e-12,
            dt_max: 1e-2,
        },
        divergence_threshold: 1e3,
        sample_stride: 1,
        record_interval: Some(1e-3),
    }
}

pub fn fig5_experiment() -> Experiment {
    Experiment {
        name: "fig5",
        label: "nPI: (exp(z^2/10) - 1) cos(z)",
        plant: fig5_plant(0.1),
        controller: fig5_controller(),
        sim: fig5_sim(),
        y0: 5.0,
        u0: 0.0,
        q0: 0.0,
        expected: VerdictClass::Converged,
        converge_tol: CONVERGE_TOL,
        tail_fraction: TAIL_FRACTION,
    }
}

pub const MAX_SWEEP_CELLS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub epsilon: f64,
    pub lambda: f64,
    pub verdict: VerdictClass,
    pub tail_max_abs_y: f64,
    /// `1 − ε(λ + α₂)`.
    pub margin: f64,
}

pub const SWEEP_HEADER: &str = "epsilon,lambda,verdict,tail_max_abs_y,margin";

fn with_lambda(ctrl: &ControllerSpec, lambda: f64) -> ControllerSpec {
    match ctrl {
        ControllerSpec::NonlinearPi { gain, .. } => ControllerSpec::NonlinearPi {
            lambda,
            gain: gain.clone(),
        },
        ControllerSpec::NussbaumGain { .. } => ControllerSpec::NussbaumGain { lambda },
    }
}

/// Cells for `base` with ε and λ replaced. All cells are validated before any
/// runs; a cell that overflows is recorded as Diverged.
pub fn sweep(
    base: &Experiment,
    epsilons: &[f64],
    lambdas: &[f64],
) -> Result<Vec<SweepCell>, SimError> {
    let cells = epsilons.len() * lambdas.len();
    if cells > MAX_SWEEP_CELLS {
        return Err(SimError::Config(format!(
            "sweep has {cells} cells, the limit is {MAX_SWEEP_CELLS}"
        )));
    }
    let mut jobs = Vec::with_capacity(cells);
    for &epsilon in epsilons {
        for &lambda in lambdas {
            let mut e = base.clone();
            e.plant.epsilon = epsilon;
            e.controller = with_lambda(&base.controller, lambda);
            e.plant.validate()?;
            e.controller.validate()?;
            e.sim.validate(&e.plant)?;
            jobs.push(e);
        }
    }
    jobs.par_iter()
        .map(|e| {
            let out = e.run()?;
            Ok(SweepCell {
                epsilon: e.plant.epsilon,
                lambda: e.controller.lambda(),
                verdict: out.verdict.class,
                tail_max_abs_y: out.verdict.tail_max_abs_y,
                margin: 1.0 - e.plant.epsilon * (e.controller.lambda() + e.plant.sector.alpha2),
            })
        })
        .collect()
}

pub fn verdict_name(v: VerdictClass) -> &'static str {
    match v {
        VerdictClass::Converged => "Converged",
        VerdictClass::BoundedNonConverged => "BoundedNonConverged",
        VerdictClass::Diverged => "Diverged",
    }
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    use crate::output::fmt_sig17;
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig17(c.epsilon),
            fmt_sig17(c.lambda),
            verdict_name(c.verdict),
            fmt_sig17(c.tail_max_abs_y),
            fmt_sig17(c.margin)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_setups_validate() {
        for e in fig4_experiments().iter().chain([fig5_experiment()].iter()) {
            e.plant.validate().unwrap();
            e.controller.validate().unwrap();
            e.sim.validate(&e.plant).unwrap();
        }
    }

    #[test]
    fn equilibrium_variant_stays_at_zero() {
        let mut e = fig5_experiment();
        e.y0 = 0.0;
        e.sim.t_end = 1.0;
        let out = e.run().unwrap();
        assert!(out
            .trajectory
            .y
            .iter()
            .chain(&out.trajectory.u)
            .all(|&v| v == 0.0));
        assert_eq!(out.verdict.class, VerdictClass::Converged);
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let cells = sweep(&fig5_experiment(), &[], &[0.5]).unwrap();
        assert!(cells.is_empty());
        assert_eq!(sweep_csv(&cells), format!("{SWEEP_HEADER}\n"));
    }

    #[test]
    fn oversized_sweep_is_rejected() {
        let grid: Vec<f64> = (1..=101).map(|i| i as f64 * 1e-3).collect();
        assert!(sweep(&fig5_experiment(), &grid, &grid).is_err());
    }
}
