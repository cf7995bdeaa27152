//! Joint integration of plant and controller, trajectory recording and
//! terminal classification.
//!
//! The integrated state is `(y, u, q)`: output, applied input and the
//! controller's integrator. The nominal topology has no actuator state, so
//! its `u` component is held fixed and the recorded `u` equals `u_nom`.

use crate::controller::{
    controller_output, controller_rhs, ControllerError, ControllerSpec, ControllerState,
};
use crate::plant::{plant_rhs, PlantError, PlantSpec, Topology};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// A stage evaluation produced a non-finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("non-finite value during integration step")]
pub struct StepOverflow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classical fixed-step fourth-order Runge–Kutta with step `dt`.
    Rk4,
    /// Runge–Kutta–Fehlberg 4(5) with error control; `dt` is the first trial
    /// step.
    Rkf45 {
        rel_tol: f64,
        abs_tol: f64,
        dt_min: f64,
        dt_max: f64,
    },
}

impl Method {
    pub fn rkf45_default() -> Self {
        Method::Rkf45 {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            dt_min: 1e-12,
            dt_max: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub method: Method,
    pub divergence_threshold: f64,
    /// Record every `sample_stride`-th step (accepted steps for RKF45).
    pub sample_stride: usize,
    /// When set, a stride-selected step is recorded only if at least this
    /// much simulated time has passed since the previous record. Keeps
    /// adaptive runs with millions of steps to a manageable size.
    pub record_interval: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 30.0,
            method: Method::Rk4,
            divergence_threshold: 1e3,
            sample_stride: 1,
            record_interval: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, plant: &PlantSpec) -> Result<(), SimError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::Config(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("dt", self.dt)?;
        positive("t_end", self.t_end)?;
        positive("divergence_threshold", self.divergence_threshold)?;
        if self.sample_stride == 0 {
            return Err(SimError::Config("sample_stride must be at least 1".into()));
        }
        if let Some(interval) = self.record_interval {
            positive("record_interval", interval)?;
        }
        match self.method {
            Method::Rk4 => {
                if plant.topology == Topology::ActuatorPerturbed && self.dt > plant.epsilon / 5.0 {
                    return Err(SimError::Config(format!(
                        "RK4 step {} does not resolve the actuator lag: need dt <= epsilon/5 = {}",
                        self.dt,
                        plant.epsilon / 5.0
                    )));
                }
            }
            Method::Rkf45 {
                rel_tol,
                abs_tol,
                dt_min,
                dt_max,
            } => {
                positive("rel_tol", rel_tol)?;
                positive("abs_tol", abs_tol)?;
                positive("dt_min", dt_min)?;
                positive("dt_max", dt_max)?;
                if dt_min >= dt_max {
                    return Err(SimError::Config(format!(
                        "dt_min ({dt_min}) must be below dt_max ({dt_max})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    /// `|y|` reached the divergence threshold at time `t`.
    Diverged {
        t: f64,
    },
    /// A state, derivative or gain became non-finite at time `t`.
    Overflow {
        t: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub u_nom: Vec<f64>,
    pub z: Vec<f64>,
    /// Integrator state; not part of the CSV schema.
    pub q: Vec<f64>,
    pub termination: Termination,
    pub config: SimConfig,
    /// Accepted integration steps.
    pub steps: usize,
    /// Rejected RKF45 trial steps.
    pub rejected: usize,
}

impl Trajectory {
    fn with_capacity(config: SimConfig, n: usize) -> Self {
        Self {
            t: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            u_nom: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            termination: Termination::Completed,
            config,
            steps: 0,
            rejected: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn push(&mut self, t: f64, s: &[f64; 3], out: &Sample) {
        self.t.push(t);
        self.y.push(s[0]);
        self.u.push(out.u_applied);
        self.u_nom.push(out.u_nom);
        self.z.push(out.z);
        self.q.push(s[2]);
    }

    /// Final `(y, u, z)`.
    pub fn final_state(&self) -> Option<(f64, f64, f64)> {
        let i = self.len().checked_sub(1)?;
        Some((self.y[i], self.u[i], self.z[i]))
    }
}

/// Controller output at a state, with the input actually applied to the plant.
struct Sample {
    u_nom: f64,
    u_applied: f64,
    z: f64,
}

struct ClosedLoop<'a> {
    plant: &'a PlantSpec,
    ctrl: &'a ControllerSpec,
}

impl ClosedLoop<'_> {
    fn sample(&self, s: &[f64; 3]) -> Result<Sample, StepOverflow> {
        let out = controller_output(self.ctrl, ControllerState { q: s[2] }, s[0])
            .map_err(|_| StepOverflow)?;
        let u_applied = match self.plant.topology {
            Topology::ActuatorPerturbed => s[1],
            Topology::Nominal => out.u_nom,
        };
        Ok(Sample {
            u_nom: out.u_nom,
            u_applied,
            z: out.z,
        })
    }

    fn rhs(&self, s: &[f64; 3]) -> Result<[f64; 3], StepOverflow> {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(StepOverflow);
        }
        let out = self.sample(s)?;
        let rates = plant_rhs(self.plant, s[0], s[1], out.u_nom).map_err(|_| StepOverflow)?;
        let dq = controller_rhs(self.ctrl, s[0]);
        let d = [rates.dy, rates.du.unwrap_or(0.0), dq];
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(StepOverflow)
        }
    }
}

/// One classical RK4 step; a non-finite stage aborts the step.
pub fn step_rk4<const N: usize, F>(
    mut rhs: F,
    state: &[f64; N],
    dt: f64,
) -> Result<[f64; N], StepOverflow>
where
    F: FnMut(&[f64; N]) -> Result<[f64; N], StepOverflow>,
{
    let axpy = |a: f64, k: &[f64; N]| -> [f64; N] { std::array::from_fn(|i| state[i] + a * k[i]) };
    let k1 = rhs(state)?;
    let k2 = rhs(&axpy(0.5 * dt, &k1))?;
    let k3 = rhs(&axpy(0.5 * dt, &k2))?;
    let k4 = rhs(&axpy(dt, &k3))?;
    let next: [f64; N] =
        std::array::from_fn(|i| state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(StepOverflow)
    }
}

// Fehlberg 4(5) tableau.
const RKF_A: [[f64; 5]; 5] = [
    [1.0 / 4.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [
        -8.0 / 27.0,
        2.0,
        -3544.0 / 2565.0,
        1859.0 / 4104.0,
        -11.0 / 40.0,
    ],
];
const RKF_B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];
const RKF_B4: [f64; 6] = [
    25.0 / 216.0,
    0.0,
    1408.0 / 2565.0,
    2197.0 / 4104.0,
    -1.0 / 5.0,
    0.0,
];

/// One embedded RKF45 step. Returns the fifth-order solution and the
/// difference between the fifth- and fourth-order solutions.
pub fn step_rkf45<const N: usize, F>(
    mut rhs: F,
    state: &[f64; N],
    dt: f64,
) -> Result<([f64; N], [f64; N]), StepOverflow>
where
    F: FnMut(&[f64; N]) -> Result<[f64; N], StepOverflow>,
{
    let mut k = [[0.0; N]; 6];
    k[0] = rhs(state)?;
    for stage in 1..6 {
        let row = &RKF_A[stage - 1];
        let trial: [f64; N] = std::array::from_fn(|i| {
            state[i] + dt * (0..stage).map(|j| row[j] * k[j][i]).sum::<f64>()
        });
        k[stage] = rhs(&trial)?;
    }
    let high: [f64; N] =
        std::array::from_fn(|i| state[i] + dt * (0..6).map(|j| RKF_B5[j] * k[j][i]).sum::<f64>());
    let err: [f64; N] = std::array::from_fn(|i| {
        dt * (0..6)
            .map(|j| (RKF_B5[j] - RKF_B4[j]) * k[j][i])
            .sum::<f64>()
    });
    if high.iter().chain(&err).all(|v| v.is_finite()) {
        Ok((high, err))
    } else {
        Err(StepOverflow)
    }
}

/// Integrates the closed loop from `(y0, u0, q0)`.
pub fn integrate(
    plant: &PlantSpec,
    ctrl: &ControllerSpec,
    y0: f64,
    u0: f64,
    q0: f64,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    plant.validate()?;
    ctrl.validate()?;
    cfg.validate(plant)?;
    if !(y0.is_finite() && u0.is_finite() && q0.is_finite()) {
        return Err(SimError::Config("initial conditions must be finite".into()));
    }
    if q0 < 0.0 {
        return Err(SimError::Config(format!(
            "integrator state q0 must be nonnegative, got {q0}"
        )));
    }
    let u0 = match plant.topology {
        Topology::ActuatorPerturbed => u0,
        Topology::Nominal => 0.0,
    };
    let sys = ClosedLoop { plant, ctrl };
    let state = [y0, u0, q0];
    match cfg.method {
        Method::Rk4 => Ok(run_rk4(&sys, state, cfg)),
        Method::Rkf45 {
            rel_tol,
            abs_tol,
            dt_min,
            dt_max,
        } => Ok(run_rkf45(
            &sys, state, cfg, rel_tol, abs_tol, dt_min, dt_max,
        )),
    }
}

/// Shared bookkeeping for both steppers.
struct Recorder {
    traj: Trajectory,
    stride: usize,
    interval: f64,
    threshold: f64,
    last_recorded_step: usize,
    last_recorded_t: f64,
}

impl Recorder {
    fn new(cfg: &SimConfig, capacity: usize) -> Self {
        Self {
            traj: Trajectory::with_capacity(*cfg, capacity),
            stride: cfg.sample_stride,
            interval: cfg.record_interval.unwrap_or(0.0),
            threshold: cfg.divergence_threshold,
            last_recorded_step: 0,
            last_recorded_t: 0.0,
        }
    }

    /// Records the initial state. Returns false if the run is already over.
    fn start(&mut self, sys: &ClosedLoop, s: &[f64; 3]) -> bool {
        match sys.sample(s) {
            Ok(out) => {
                self.traj.push(0.0, s, &out);
                if s[0].abs() >= self.threshold {
                    self.traj.termination = Termination::Diverged { t: 0.0 };
                    return false;
                }
                true
            }
            Err(_) => {
                self.traj.termination = Termination::Overflow { t: 0.0 };
                false
            }
        }
    }

    /// Handles an accepted step. Returns false once the run terminates.
    fn accept(&mut self, sys: &ClosedLoop, step: usize, t: f64, s: &[f64; 3], last: bool) -> bool {
        self.traj.steps = step;
        let out = match sys.sample(s) {
            Ok(out) => out,
            Err(_) => {
                self.traj.termination = Termination::Overflow { t };
                return false;
            }
        };
        let diverged = s[0].abs() >= self.threshold;
        let due = step.is_multiple_of(self.stride) && t - self.last_recorded_t >= self.interval;
        if last || diverged || due {
            self.traj.push(t, s, &out);
            self.last_recorded_step = step;
            self.last_recorded_t = t;
        }
        if diverged {
            self.traj.termination = Termination::Diverged { t };
            return false;
        }
        true
    }

    /// Marks an overflow while stepping away from the state recorded last;
    /// the last finite state is appended if the stride skipped it.
    fn overflow(&mut self, sys: &ClosedLoop, step: usize, t_prev: f64, s: &[f64; 3], t_fail: f64) {
        if self.last_recorded_step != step {
            if let Ok(out) = sys.sample(s) {
                self.traj.push(t_prev, s, &out);
                self.last_recorded_step = step;
                self.last_recorded_t = t_prev;
            }
        }
        self.traj.termination = Termination::Overflow { t: t_fail };
    }
}

fn run_rk4(sys: &ClosedLoop, mut s: [f64; 3], cfg: &SimConfig) -> Trajectory {
    let ratio = cfg.t_end / cfg.dt;
    let mut n_steps = (ratio - 1e-9).ceil().max(1.0) as usize;
    if (ratio - ratio.round()).abs() < 1e-9 {
        n_steps = ratio.round() as usize;
    }
    let mut rec = Recorder::new(cfg, n_steps / cfg.sample_stride + 2);
    if !rec.start(sys, &s) {
        return rec.traj;
    }
    let mut t = 0.0;
    for step in 1..=n_steps {
        let t_next = if step == n_steps {
            cfg.t_end
        } else {
            step as f64 * cfg.dt
        };
        match step_rk4(|x| sys.rhs(x), &s, t_next - t) {
            Ok(next) => s = next,
            Err(StepOverflow) => {
                rec.overflow(sys, step - 1, t, &s, t_next);
                return rec.traj;
            }
        }
        t = t_next;
        if !rec.accept(sys, step, t, &s, step == n_steps) {
            return rec.traj;
        }
    }
    rec.traj
}

fn run_rkf45(
    sys: &ClosedLoop,
    mut s: [f64; 3],
    cfg: &SimConfig,
    rel_tol: f64,
    abs_tol: f64,
    dt_min: f64,
    dt_max: f64,
) -> Trajectory {
    const SAFETY: f64 = 0.9;
    let mut rec = Recorder::new(cfg, 1024);
    if !rec.start(sys, &s) {
        return rec.traj;
    }
    let mut t = 0.0;
    let mut h = cfg.dt.clamp(dt_min, dt_max);
    let mut step = 0;
    while t < cfg.t_end {
        let last = t + h >= cfg.t_end * (1.0 - 1e-15);
        let h_try = if last { cfg.t_end - t } else { h };
        match step_rkf45(|x| sys.rhs(x), &s, h_try) {
            Ok((next, err)) => {
                let norm = err
                    .iter()
                    .zip(s.iter().zip(&next))
                    .map(|(e, (a, b))| e.abs() / (abs_tol + rel_tol * a.abs().max(b.abs())))
                    .fold(0.0, f64::max);
                if norm <= 1.0 || h_try <= dt_min {
                    step += 1;
                    t = if last { cfg.t_end } else { t + h_try };
                    s = next;
                    if !rec.accept(sys, step, t, &s, last) {
                        return rec.traj;
                    }
                    let grow = if norm == 0.0 {
                        5.0
                    } else {
                        (SAFETY * norm.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    // keep the pre-clip step when the last step was shortened
                    h = (h.max(h_try) * grow).clamp(dt_min, dt_max);
                } else {
                    rec.traj.rejected += 1;
                    h = (h_try * (SAFETY * norm.powf(-0.25)).clamp(0.1, 0.5)).max(dt_min);
                }
            }
            Err(StepOverflow) => {
                if h_try <= dt_min {
                    rec.overflow(sys, step, t, &s, t + h_try);
                    return rec.traj;
                }
                rec.traj.rejected += 1;
                h = (h_try * 0.25).max(dt_min);
            }
        }
    }
    rec.traj
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictClass {
    Converged,
    BoundedNonConverged,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub class: VerdictClass,
    pub tail_max_abs_y: f64,
    /// Tail maximum of `max(|y|, |u|, |u_nom|)`.
    pub tail_max_abs: f64,
    /// Final `(|y|, |u|, |u_nom|)`.
    pub final_abs: (f64, f64, f64),
}

/// Classifies a trajectory from its trailing `tail_fraction` of simulated
/// time. Sampling is uniform for RK4, so this equals the trailing fraction of
/// samples there.
pub fn classify(traj: &Trajectory, tol: f64, tail_fraction: f64) -> Verdict {
    let n = traj.len();
    if n == 0 {
        return Verdict {
            class: VerdictClass::Diverged,
            tail_max_abs_y: f64::NAN,
            tail_max_abs: f64::NAN,
            final_abs: (f64::NAN, f64::NAN, f64::NAN),
        };
    }
    let last = n - 1;
    let final_abs = (
        traj.y[last].abs(),
        traj.u[last].abs(),
        traj.u_nom[last].abs(),
    );
    let t0 = traj.t[0];
    let t_cut = traj.t[last] - tail_fraction * (traj.t[last] - t0);
    let start = traj.t.partition_point(|&t| t < t_cut).min(last);
    let (mut max_y, mut max_all) = (0.0_f64, 0.0_f64);
    for i in start..n {
        let ay = traj.y[i].abs();
        max_y = max_y.max(ay);
        max_all = max_all
            .max(ay)
            .max(traj.u[i].abs())
            .max(traj.u_nom[i].abs());
    }
    let class = match traj.termination {
        Termination::Diverged { .. } | Termination::Overflow { .. } => VerdictClass::Diverged,
        Termination::Completed if max_all < tol => VerdictClass::Converged,
        Termination::Completed => VerdictClass::BoundedNonConverged,
    };
    Verdict {
        class,
        tail_max_abs_y: max_y,
        tail_max_abs: max_all,
        final_abs,
    }
}
