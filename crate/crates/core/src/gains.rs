//! Gain functions `κ(z) = β(z)·cos(z)` and numerical probes of the Nussbaum
//! property and of the β growth subclass.
//!
//! The Nussbaum probe works on running averages `(1/ζ)∫₀^ζ N(s) ds` computed
//! by cumulative trapezoid quadrature. A finite horizon can never prove
//! unbounded growth, so the result is a heuristic [`NussbaumClass`] rather
//! than a theorem.

use thiserror::Error;

/// `ln(f64::MAX)`; exponents above this overflow.
const LN_MAX: f64 = 709.782_712_893_384;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GainError {
    #[error("gain overflow at z = {z}")]
    Overflow { z: f64 },
    #[error("z = {z} outside the gain domain: {reason}")]
    Domain { z: f64, reason: &'static str },
    #[error("invalid gain parameter: {0}")]
    InvalidParameter(String),
}

/// Class-K∞ amplitude β of a `β(z)·cos(z)` gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSpec {
    /// `β(z) = z^p`, defined for `z ≥ 0`.
    Power { p: f64 },
    /// `β(z) = c1·[exp(c2·z²) − 1]`.
    ExpQuadratic { c1: f64, c2: f64 },
    /// `β(z) = z`.
    Identity,
}

impl BetaSpec {
    pub fn validate(&self) -> Result<(), GainError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GainError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        match *self {
            BetaSpec::Power { p } => positive("p", p),
            BetaSpec::ExpQuadratic { c1, c2 } => positive("c1", c1).and(positive("c2", c2)),
            BetaSpec::Identity => Ok(()),
        }
    }

    /// Evaluates β at `z`. The Power family rejects negative `z`.
    pub fn eval(&self, z: f64) -> Result<f64, GainError> {
        if !z.is_finite() {
            return Err(GainError::Domain {
                z,
                reason: "non-finite argument",
            });
        }
        match *self {
            BetaSpec::Power { p } => {
                if z < 0.0 {
                    return Err(GainError::Domain {
                        z,
                        reason: "power family is defined for z >= 0 only",
                    });
                }
                finite_or_overflow(z.powf(p), z)
            }
            BetaSpec::ExpQuadratic { c1, c2 } => {
                let exponent = c2 * z * z;
                if exponent > LN_MAX {
                    return Err(GainError::Overflow { z });
                }
                finite_or_overflow(c1 * exponent.exp_m1(), z)
            }
            BetaSpec::Identity => Ok(z),
        }
    }

    /// Evaluates the defining formula on the whole real line: integer powers
    /// of negative arguments are accepted here, fractional ones are not.
    pub fn eval_real_line(&self, z: f64) -> Result<f64, GainError> {
        match *self {
            BetaSpec::Power { p } if z < 0.0 => {
                if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
                    finite_or_overflow(z.powi(p as i32), z)
                } else {
                    Err(GainError::Domain {
                        z,
                        reason: "fractional power of a negative argument",
                    })
                }
            }
            _ => self.eval(z),
        }
    }

    /// `ln β(z)` for `z > 0`, finite well past the point where β itself
    /// overflows.
    pub fn ln_eval(&self, z: f64) -> Result<f64, GainError> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(GainError::Domain {
                z,
                reason: "log-space evaluation needs z > 0",
            });
        }
        Ok(match *self {
            BetaSpec::Power { p } => p * z.ln(),
            BetaSpec::ExpQuadratic { c1, c2 } => c1.ln() + ln_exp_m1(c2 * z * z),
            BetaSpec::Identity => z.ln(),
        })
    }
}

fn finite_or_overflow(v: f64, z: f64) -> Result<f64, GainError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GainError::Overflow { z })
    }
}

/// `ln(e^x − 1)` for `x > 0` without overflowing.
fn ln_exp_m1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Piecewise-linear gain through `(z, value)` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedGain {
    z: Vec<f64>,
    value: Vec<f64>,
}

impl TabulatedGain {
    pub fn new(z: Vec<f64>, value: Vec<f64>) -> Result<Self, GainError> {
        if z.len() != value.len() || z.len() < 2 {
            return Err(GainError::InvalidParameter(
                "tabulated gain needs at least two (z, value) pairs".into(),
            ));
        }
        if z.iter().chain(&value).any(|v| !v.is_finite()) {
            return Err(GainError::InvalidParameter(
                "tabulated gain samples must be finite".into(),
            ));
        }
        if z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GainError::InvalidParameter(
                "tabulated gain abscissae must be strictly increasing".into(),
            ));
        }
        Ok(Self { z, value })
    }

    /// Samples `f` on `n` uniformly spaced points of `[lo, hi]`.
    pub fn sample<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> Result<Self, GainError> {
        let n = n.max(2);
        let h = (hi - lo) / (n - 1) as f64;
        let z: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let value = z.iter().map(|&s| f(s)).collect();
        Self::new(z, value)
    }

    pub fn eval(&self, z: f64) -> Result<f64, GainError> {
        let (first, last) = (self.z[0], self.z[self.z.len() - 1]);
        if !(first..=last).contains(&z) {
            return Err(GainError::Domain {
                z,
                reason: "outside the tabulated range",
            });
        }
        let hi = self.z.partition_point(|&s| s < z).max(1);
        let lo = hi - 1;
        let w = (z - self.z[lo]) / (self.z[hi] - self.z[lo]);
        Ok(self.value[lo] + w * (self.value[hi] - self.value[lo]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainSpec {
    /// `κ(z) = β(z)·cos(z)`.
    BetaCos(BetaSpec),
    RawTabulated(TabulatedGain),
}

impl GainSpec {
    pub fn validate(&self) -> Result<(), GainError> {
        match self {
            GainSpec::BetaCos(beta) => beta.validate(),
            GainSpec::RawTabulated(_) => Ok(()),
        }
    }

    pub fn beta(&self) -> Option<BetaSpec> {
        match self {
            GainSpec::BetaCos(beta) => Some(*beta),
            GainSpec::RawTabulated(_) => None,
        }
    }

    /// Same as [`eval_kappa`].
    pub fn eval(&self, z: f64) -> Result<f64, GainError> {
        eval_kappa(self, z)
    }

    /// Evaluation used by the Nussbaum probe, which needs negative arguments.
    pub fn eval_real_line(&self, z: f64) -> Result<f64, GainError> {
        match self {
            GainSpec::BetaCos(beta) => Ok(beta.eval_real_line(z)? * z.cos()),
            GainSpec::RawTabulated(t) => t.eval(z),
        }
    }
}

/// `κ(z) = β(z)·cos(z)`; a tabulated gain is interpolated.
pub fn eval_kappa(gain: &GainSpec, z: f64) -> Result<f64, GainError> {
    match gain {
        GainSpec::BetaCos(beta) => Ok(beta.eval(z)? * z.cos()),
        GainSpec::RawTabulated(t) => t.eval(z),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NussbaumClass {
    LikelyNussbaum,
    NotNussbaumWitness,
    Inconclusive,
}

/// Window end and the running extremum of the average up to that point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowExtreme {
    pub zeta_end: f64,
    pub value: f64,
}

/// Running extrema of `(1/ζ)∫₀^ζ N` along one direction of ζ.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DirectionWindows {
    pub windowed_sup: Vec<WindowExtreme>,
    pub windowed_inf: Vec<WindowExtreme>,
}

impl DirectionWindows {
    pub fn final_sup(&self) -> f64 {
        self.windowed_sup.last().map_or(f64::NAN, |w| w.value)
    }

    pub fn final_inf(&self) -> f64 {
        self.windowed_inf.last().map_or(f64::NAN, |w| w.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NussbaumVerdict {
    /// ζ → +∞.
    pub positive: DirectionWindows,
    /// ζ → −∞; window ends are negative.
    pub negative: DirectionWindows,
    pub classification: NussbaumClass,
    /// Largest magnitude reached by a stalled extremum, when one stalled.
    pub witness_bound: Option<f64>,
    pub growth_gate: f64,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NussbaumOptions {
    /// Both extrema must pass `±growth_gate` in both directions.
    pub growth_gate: f64,
    pub windows: usize,
    /// Relative change between the half-range and final extremum below which
    /// the extremum counts as stalled.
    pub stall_tolerance: f64,
}

impl Default for NussbaumOptions {
    fn default() -> Self {
        Self {
            growth_gate: 1e3,
            windows: 20,
            stall_tolerance: 0.05,
        }
    }
}

/// Probes the Nussbaum property of `gain` on `[−zeta_max, zeta_max]` with the
/// default growth gate and window count.
pub fn nussbaum_index(
    gain: &GainSpec,
    zeta_max: f64,
    n_grid: usize,
) -> Result<NussbaumVerdict, GainError> {
    nussbaum_index_with(
        |s| gain.eval_real_line(s),
        zeta_max,
        n_grid,
        &NussbaumOptions::default(),
    )
}

/// Probes an arbitrary function. `n_grid` is the number of quadrature
/// intervals per direction.
pub fn nussbaum_index_with<F>(
    gain: F,
    zeta_max: f64,
    n_grid: usize,
    opts: &NussbaumOptions,
) -> Result<NussbaumVerdict, GainError>
where
    F: Fn(f64) -> Result<f64, GainError>,
{
    if !(zeta_max > 0.0 && zeta_max.is_finite()) {
        return Err(GainError::InvalidParameter(format!(
            "zeta_max must be positive, got {zeta_max}"
        )));
    }
    if n_grid < 100 {
        return Err(GainError::InvalidParameter(format!(
            "n_grid must be at least 100, got {n_grid}"
        )));
    }
    if opts.windows == 0 || !(opts.growth_gate > 0.0) {
        return Err(GainError::InvalidParameter(
            "need at least one window and a positive growth gate".into(),
        ));
    }

    let mut diagnostic = None;
    let mut directions = Vec::with_capacity(2);
    for sign in [1.0, -1.0] {
        match running_averages(&gain, sign * zeta_max, n_grid) {
            Ok(avg) => directions.push(window_extrema(&avg, sign * zeta_max, n_grid, opts.windows)),
            Err(e) => {
                let side = if sign > 0.0 { "+" } else { "-" };
                diagnostic = Some(format!("quadrature failed toward {side}infinity: {e}"));
                directions.push(DirectionWindows::default());
            }
        }
    }
    let negative = directions.pop().unwrap_or_default();
    let positive = directions.pop().unwrap_or_default();

    let gate = opts.growth_gate;
    let (classification, witness_bound) = if diagnostic.is_some() {
        (NussbaumClass::Inconclusive, None)
    } else {
        let grows = |d: &DirectionWindows| d.final_sup() > gate && d.final_inf() < -gate;
        if grows(&positive) && grows(&negative) {
            (NussbaumClass::LikelyNussbaum, None)
        } else {
            let stalled: Vec<f64> = [&positive, &negative]
                .into_iter()
                .flat_map(|d| [&d.windowed_sup, &d.windowed_inf])
                .filter_map(|w| stalled_extremum(w, opts.stall_tolerance, gate))
                .collect();
            if stalled.is_empty() {
                (NussbaumClass::Inconclusive, None)
            } else {
                let bound = stalled.into_iter().fold(0.0_f64, f64::max);
                (NussbaumClass::NotNussbaumWitness, Some(bound))
            }
        }
    };

    Ok(NussbaumVerdict {
        positive,
        negative,
        classification,
        witness_bound,
        growth_gate: gate,
        diagnostic,
    })
}

/// Averages `(1/ζ_k)∫₀^{ζ_k} N` at the nodes `ζ_k = k·end/n`, `k = 1..=n`.
fn running_averages<F>(gain: &F, end: f64, n: usize) -> Result<Vec<f64>, GainError>
where
    F: Fn(f64) -> Result<f64, GainError>,
{
    let h = end / n as f64;
    let mut prev = gain(0.0)?;
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let zeta = h * k as f64;
        let cur = gain(zeta)?;
        integral += 0.5 * h * (prev + cur);
        let avg = integral / zeta;
        if !avg.is_finite() {
            return Err(GainError::Overflow { z: zeta });
        }
        out.push(avg);
        prev = cur;
    }
    Ok(out)
}

fn window_extrema(avg: &[f64], end: f64, n: usize, windows: usize) -> DirectionWindows {
    let mut out = DirectionWindows::default();
    let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut idx = 0;
    for w in 1..=windows {
        let last = (n * w) / windows;
        while idx < last {
            sup = sup.max(avg[idx]);
            inf = inf.min(avg[idx]);
            idx += 1;
        }
        let zeta_end = end * w as f64 / windows as f64;
        out.windowed_sup.push(WindowExtreme {
            zeta_end,
            value: sup,
        });
        out.windowed_inf.push(WindowExtreme {
            zeta_end,
            value: inf,
        });
    }
    out
}

/// Magnitude of an extremum that stopped moving over the second half of the
/// range and stayed inside the gate.
fn stalled_extremum(w: &[WindowExtreme], tol: f64, gate: f64) -> Option<f64> {
    let half = w.get(w.len().saturating_sub(1) / 2)?.value;
    let last = w.last()?.value;
    let moved = (last - half).abs() > tol * half.abs().max(1.0);
    (!moved && last.abs() < gate).then_some(last.abs())
}

/// One sample of `g(z) = β(z+δ)/z − c·β(z)`, stored as sign and `ln|g|`
/// because β may be far beyond `f64::MAX`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthSample {
    pub z: f64,
    pub sign: f64,
    pub ln_abs: f64,
}

impl GrowthSample {
    /// `g(z)` as a plain float; saturates to ±∞ past the overflow knee.
    pub fn value(&self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }

    fn key(&self) -> (i8, f64) {
        // total order on signed-log values
        match self.sign {
            s if s > 0.0 => (1, self.ln_abs),
            s if s < 0.0 => (-1, -self.ln_abs),
            _ => (0, 0.0),
        }
    }

    fn greater_than(&self, other: &GrowthSample) -> bool {
        let (a, b) = (self.key(), other.key());
        a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaGrowth {
    pub passes: bool,
    pub values: Vec<GrowthSample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaGrowthOptions {
    /// `g` must exceed this at the last grid point.
    pub divergence_gate: f64,
    /// Fraction of trailing grid points over which `g` must increase.
    pub tail_fraction: f64,
}

impl Default for BetaGrowthOptions {
    fn default() -> Self {
        Self {
            divergence_gate: 1e6,
            tail_fraction: 0.1,
        }
    }
}

/// Geometric grid from 1 to 10⁶, wide enough for the slow crossover of
/// `ExpQuadratic` with small `c2·δ`.
pub fn default_growth_grid() -> Vec<f64> {
    let n = 400;
    (0..n)
        .map(|i| 10f64.powf(6.0 * i as f64 / (n - 1) as f64))
        .collect()
}

pub fn check_beta_growth(
    beta: &BetaSpec,
    c: f64,
    delta: f64,
    z_grid: &[f64],
) -> Result<BetaGrowth, GainError> {
    check_beta_growth_with(beta, c, delta, z_grid, &BetaGrowthOptions::default())
}

pub fn check_beta_growth_with(
    beta: &BetaSpec,
    c: f64,
    delta: f64,
    z_grid: &[f64],
    opts: &BetaGrowthOptions,
) -> Result<BetaGrowth, GainError> {
    beta.validate()?;
    if !(c > 0.0 && delta > 0.0 && c.is_finite() && delta.is_finite()) {
        return Err(GainError::InvalidParameter(format!(
            "c and delta must be positive, got c = {c}, delta = {delta}"
        )));
    }
    if z_grid.len() < 2 || z_grid[0] <= 0.0 || z_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GainError::InvalidParameter(
            "z grid must be positive and strictly increasing with at least two points".into(),
        ));
    }

    let ln_c = c.ln();
    let values = z_grid
        .iter()
        .map(|&z| {
            let ln_beta = beta.ln_eval(z)?;
            // g = β(z)·[β(z+δ)/(z·β(z)) − c]
            let r = beta.ln_eval(z + delta)? - ln_beta - z.ln();
            let (sign, ln_bracket) = if r > ln_c + 40.0 {
                (1.0, r + (-(ln_c - r).exp()).ln_1p())
            } else if r < ln_c - 40.0 {
                (-1.0, ln_c + (-(r - ln_c).exp()).ln_1p())
            } else {
                let bracket = r.exp() - c;
                (sign_of(bracket), bracket.abs().ln())
            };
            Ok(GrowthSample {
                z,
                sign,
                ln_abs: ln_beta + ln_bracket,
            })
        })
        .collect::<Result<Vec<_>, GainError>>()?;

    let tail = ((values.len() as f64 * opts.tail_fraction).ceil() as usize).clamp(2, values.len());
    let increasing = values[values.len() - tail..]
        .windows(2)
        .all(|w| w[1].greater_than(&w[0]));
    let last = values[values.len() - 1];
    let above_gate = last.sign > 0.0 && last.ln_abs > opts.divergence_gate.ln();

    Ok(BetaGrowth {
        passes: increasing && above_gate,
        values,
    })
}

fn sign_of(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
