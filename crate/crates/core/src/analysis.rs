//! Numerical checks of the robustness certificate for the perturbed loop:
//! the fast-actuator condition `ε(λ+α₂) < 1`, the storage function
//! `S(u, y)`, the dissipation matrix `Λ(y)` and the β growth subclass.
//!
//! `S ≥ 0` and `Λ(y) ≻ 0` are checked twice: on grids, and through the
//! closed-form 2×2 determinant conditions. `Λ` depends on `α(y)` only through
//! `(1 − εα)²`, which is convex in `α`, so checking the endpoints of
//! `[α₁, α₂]` is exact.

use crate::controller::ControllerSpec;
use crate::gains::{
    check_beta_growth, default_growth_grid, nussbaum_index, BetaSpec, GainError, GainSpec,
    NussbaumClass,
};
use crate::plant::PlantSpec;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("threshold undefined: condition (i) fails with margin {margin}")]
    UndefinedThreshold { margin: f64 },
    #[error("invalid certificate parameters: {0}")]
    InvalidParams(String),
    #[error("certification needs the nonlinear PI controller")]
    NotNonlinearPi,
    #[error(transparent)]
    Gain(#[from] GainError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateParams {
    pub epsilon: f64,
    pub lambda: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub b: f64,
    /// Weight of `y²` in `S`; irrelevant for [`ell_threshold`].
    pub ell: f64,
}

impl CertificateParams {
    pub fn from_loop(plant: &PlantSpec, lambda: f64, ell: f64) -> Self {
        Self {
            epsilon: plant.epsilon,
            lambda,
            alpha1: plant.sector.alpha1,
            alpha2: plant.sector.alpha2,
            b: plant.b,
            ell,
        }
    }

    /// `1 − ε(λ + α₂)`.
    pub fn margin(&self) -> f64 {
        1.0 - self.epsilon * (self.lambda + self.alpha2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionI {
    pub holds: bool,
    /// `1 − ε(λ + α₂)`.
    pub margin: f64,
    /// Largest admissible actuator time constant `1/(λ + α₂)`; infinite when
    /// `λ + α₂ ≤ 0`.
    pub epsilon_bound: f64,
}

pub fn check_condition_i(epsilon: f64, lambda: f64, alpha2: f64) -> ConditionI {
    let margin = 1.0 - epsilon * (lambda + alpha2);
    let sum = lambda + alpha2;
    ConditionI {
        holds: margin > 0.0,
        margin,
        epsilon_bound: if sum > 0.0 { 1.0 / sum } else { f64::INFINITY },
    }
}

/// Lower bound on `ℓ` above which `S ≥ 0` and `Λ(y) ≻ 0`:
/// `((α₂+λ)/b)² · max{ε, (1−εα₁)² / (4λ[1−ε(λ+α₂)])}`.
pub fn ell_threshold(p: &CertificateParams) -> Result<f64, AnalysisError> {
    if !(p.b.is_finite() && p.b != 0.0) || !(p.lambda > 0.0) || !(p.epsilon > 0.0) {
        return Err(AnalysisError::InvalidParams(format!(
            "need b != 0, lambda > 0, epsilon > 0 (b = {}, lambda = {}, epsilon = {})",
            p.b, p.lambda, p.epsilon
        )));
    }
    let margin = p.margin();
    if !(margin > 0.0) {
        return Err(AnalysisError::UndefinedThreshold { margin });
    }
    let prefactor = ((p.alpha2 + p.lambda) / p.b).powi(2);
    let coupling = (1.0 - p.epsilon * p.alpha1).powi(2) / (4.0 * p.lambda * margin);
    Ok(prefactor * p.epsilon.max(coupling))
}

/// `S(u, y) = (ε/2)u² + (ε(α₂+λ)/b)·u·y + (ℓ/2)y²`.
pub fn s_value(u: f64, y: f64, p: &CertificateParams) -> f64 {
    0.5 * p.epsilon * u * u + p.epsilon * (p.alpha2 + p.lambda) / p.b * u * y + 0.5 * p.ell * y * y
}

/// `Λ` at a probe value `α = α(y)`.
pub fn lambda_matrix(y_alpha: f64, p: &CertificateParams) -> [[f64; 2]; 2] {
    let off = (p.lambda + p.alpha2) * (1.0 - p.epsilon * y_alpha) / (2.0 * p.b);
    [[p.margin(), off], [off, p.lambda * p.ell]]
}

/// Smaller eigenvalue of a symmetric 2×2 matrix.
pub fn min_eig_sym2(m: &[[f64; 2]; 2]) -> f64 {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half_gap = 0.5 * (m[0][0] - m[1][1]);
    mean - half_gap.hypot(m[0][1])
}

pub fn lambda_matrix_min_eig(y_alpha: f64, p: &CertificateParams) -> f64 {
    min_eig_sym2(&lambda_matrix(y_alpha, p))
}

/// Closed-form positive-definiteness of `Λ` at one `α`:
/// diagonal positive and `4·(1−ε(λ+α₂))·λℓ > [(λ+α₂)(1−εα)/b]²`.
pub fn lambda_pd_closed_form(y_alpha: f64, p: &CertificateParams) -> bool {
    let margin = p.margin();
    let off = (p.lambda + p.alpha2) * (1.0 - p.epsilon * y_alpha) / p.b;
    margin > 0.0 && p.lambda * p.ell > 0.0 && 4.0 * margin * p.lambda * p.ell > off * off
}

/// Closed-form `S ≥ 0` for all `(u, y)`: `ℓ ≥ ε(α₂+λ)²/b²`.
pub fn s_nonneg_closed_form(p: &CertificateParams) -> bool {
    p.epsilon > 0.0 && p.ell >= p.epsilon * ((p.alpha2 + p.lambda) / p.b).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SCheck {
    pub ok: bool,
    pub closed_form_ok: bool,
    /// Grid point with the smallest `S`: `(u, y, S)`.
    pub worst: (f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaCheck {
    pub ok: bool,
    pub closed_form_ok: bool,
    pub worst_alpha: f64,
    pub min_eig: f64,
}

/// Grid sweep of `S` over `[-extent, extent]²` with `n × n` points.
pub fn sweep_s(p: &CertificateParams, extent: f64, n: usize) -> SCheck {
    let n = n.max(2);
    let h = 2.0 * extent / (n - 1) as f64;
    let mut worst = (0.0, 0.0, f64::INFINITY);
    for i in 0..n {
        let u = -extent + h * i as f64;
        for j in 0..n {
            let y = -extent + h * j as f64;
            let s = s_value(u, y, p);
            if s < worst.2 {
                worst = (u, y, s);
            }
        }
    }
    SCheck {
        ok: worst.2 >= 0.0,
        closed_form_ok: s_nonneg_closed_form(p),
        worst,
    }
}

/// Sweep of the smallest eigenvalue of `Λ` over `n` points of `[α₁, α₂]`.
pub fn sweep_lambda(p: &CertificateParams, n: usize) -> LambdaCheck {
    let n = n.max(2);
    let h = (p.alpha2 - p.alpha1) / (n - 1) as f64;
    let (mut worst_alpha, mut min_eig) = (p.alpha1, f64::INFINITY);
    for i in 0..n {
        let a = p.alpha1 + h * i as f64;
        let e = lambda_matrix_min_eig(a, p);
        if e < min_eig {
            (worst_alpha, min_eig) = (a, e);
        }
    }
    let mut probes = vec![p.alpha1, p.alpha2];
    let vertex = 1.0 / p.epsilon;
    if (p.alpha1..=p.alpha2).contains(&vertex) {
        probes.push(vertex);
    }
    LambdaCheck {
        ok: min_eig > 0.0,
        closed_form_ok: probes.iter().all(|&a| lambda_pd_closed_form(a, p)),
        worst_alpha,
        min_eig,
    }
}

/// `(c, δ)` pairs at which the β growth property is sampled.
pub const GROWTH_C: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
pub const GROWTH_DELTA: [f64; 7] = [0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0];

#[derive(Debug, Clone, PartialEq)]
pub struct BetaGrowthSummary {
    pub passes: bool,
    /// `(c, δ)` pairs that failed.
    pub failures: Vec<(f64, f64)>,
    pub cases: usize,
}

pub fn beta_growth_summary(beta: &BetaSpec) -> Result<BetaGrowthSummary, GainError> {
    let grid = default_growth_grid();
    let mut failures = Vec::new();
    let mut cases = 0;
    for &c in &GROWTH_C {
        for &delta in &GROWTH_DELTA {
            cases += 1;
            if !check_beta_growth(beta, c, delta, &grid)?.passes {
                failures.push((c, delta));
            }
        }
    }
    Ok(BetaGrowthSummary {
        passes: failures.is_empty(),
        failures,
        cases,
    })
}

/// Horizon and resolution of the Nussbaum probe used for linear plants.
pub const COROLLARY_ZETA_MAX: f64 = 2000.0;
pub const COROLLARY_GRID: usize = 200_000;

/// Linear-plant route: `ε(λ+α) < 1` plus a Nussbaum gain replaces the β
/// growth requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryCheck {
    pub condition_holds: bool,
    pub nussbaum: NussbaumClass,
    pub holds: bool,
}

pub fn corollary_linear_check(
    epsilon: f64,
    lambda: f64,
    alpha: f64,
    gain: &GainSpec,
) -> Result<CorollaryCheck, GainError> {
    let condition_holds = epsilon * (lambda + alpha) < 1.0;
    let nussbaum = nussbaum_index(gain, COROLLARY_ZETA_MAX, COROLLARY_GRID)?.classification;
    Ok(CorollaryCheck {
        condition_holds,
        nussbaum,
        holds: condition_holds && nussbaum == NussbaumClass::LikelyNussbaum,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub params: CertificateParams,
    pub condition_i: ConditionI,
    /// `None` when condition (i) fails.
    pub ell_threshold: Option<f64>,
    pub s_nonneg: Option<SCheck>,
    pub lambda_pd: Option<LambdaCheck>,
    /// `None` for tabulated gains, which carry no β.
    pub beta_growth: Option<BetaGrowthSummary>,
    /// Present for linear plants only.
    pub corollary_linear: Option<CorollaryCheck>,
}

impl CertificateReport {
    /// Condition (i), `S ≥ 0`, `Λ ≻ 0`, and either the β growth property or,
    /// for a linear plant, the Nussbaum route.
    pub fn passes(&self) -> bool {
        let certificate = self.condition_i.holds
            && self.s_nonneg.is_some_and(|s| s.ok && s.closed_form_ok)
            && self.lambda_pd.is_some_and(|l| l.ok && l.closed_form_ok);
        let gain_ok = self.beta_growth.as_ref().is_some_and(|b| b.passes)
            || self.corollary_linear.as_ref().is_some_and(|c| c.holds);
        certificate && gain_ok
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "certificate report");
        let _ = writeln!(
            out,
            "  parameters: epsilon={} lambda={} alpha1={} alpha2={} b={}",
            p.epsilon, p.lambda, p.alpha1, p.alpha2, p.b
        );
        let c = &self.condition_i;
        let _ = writeln!(
            out,
            "  condition (i)  epsilon*(lambda+alpha2) < 1: {} (margin {:.6}, epsilon bound {:.6})",
            verdict(c.holds),
            c.margin,
            c.epsilon_bound
        );
        match self.ell_threshold {
            Some(t) => {
                let _ = writeln!(out, "  ell threshold: {t:.9} (ell used: {:.9})", p.ell);
            }
            None => {
                let _ = writeln!(out, "  ell threshold: undefined, remaining checks skipped");
            }
        }
        if let Some(s) = &self.s_nonneg {
            let _ = writeln!(
                out,
                "  S(u,y) >= 0: {} (closed form {}, grid minimum {:.6e} at u={}, y={})",
                verdict(s.ok),
                verdict(s.closed_form_ok),
                s.worst.2,
                s.worst.0,
                s.worst.1
            );
        }
        if let Some(l) = &self.lambda_pd {
            let _ = writeln!(
                out,
                "  Lambda positive definite: {} (closed form {}, min eigenvalue {:.6e} at alpha={})",
                verdict(l.ok),
                verdict(l.closed_form_ok),
                l.min_eig,
                l.worst_alpha
            );
        }
        match &self.beta_growth {
            Some(b) => {
                let _ = writeln!(
                    out,
                    "  beta growth: {} ({} of {} (c, delta) cases failed)",
                    verdict(b.passes),
                    b.failures.len(),
                    b.cases
                );
            }
            None => {
                let _ = writeln!(out, "  beta growth: not applicable");
            }
        }
        if let Some(cor) = &self.corollary_linear {
            let _ = writeln!(
                out,
                "  linear-plant route: {} (condition {}, Nussbaum probe {:?})",
                verdict(cor.holds),
                verdict(cor.condition_holds),
                cor.nussbaum
            );
        }
        let _ = writeln!(out, "  overall: {}", verdict(self.passes()));
        out
    }

    /// `key = value` lines in the same dialect as the config files.
    pub fn to_key_values(&self) -> String {
        let p = &self.params;
        let mut kv: Vec<(String, String)> = vec![
            ("params.epsilon".into(), p.epsilon.to_string()),
            ("params.lambda".into(), p.lambda.to_string()),
            ("params.alpha1".into(), p.alpha1.to_string()),
            ("params.alpha2".into(), p.alpha2.to_string()),
            ("params.b".into(), p.b.to_string()),
            ("params.ell".into(), p.ell.to_string()),
            (
                "condition_i.holds".into(),
                self.condition_i.holds.to_string(),
            ),
            (
                "condition_i.margin".into(),
                self.condition_i.margin.to_string(),
            ),
            (
                "condition_i.epsilon_bound".into(),
                self.condition_i.epsilon_bound.to_string(),
            ),
        ];
        if let Some(t) = self.ell_threshold {
            kv.push(("ell.threshold".into(), t.to_string()));
        }
        if let Some(s) = &self.s_nonneg {
            kv.push(("s_nonneg.ok".into(), s.ok.to_string()));
            kv.push((
                "s_nonneg.closed_form_ok".into(),
                s.closed_form_ok.to_string(),
            ));
            kv.push(("s_nonneg.worst_u".into(), s.worst.0.to_string()));
            kv.push(("s_nonneg.worst_y".into(), s.worst.1.to_string()));
            kv.push(("s_nonneg.worst_s".into(), s.worst.2.to_string()));
        }
        if let Some(l) = &self.lambda_pd {
            kv.push(("lambda_pd.ok".into(), l.ok.to_string()));
            kv.push((
                "lambda_pd.closed_form_ok".into(),
                l.closed_form_ok.to_string(),
            ));
            kv.push(("lambda_pd.worst_alpha".into(), l.worst_alpha.to_string()));
            kv.push(("lambda_pd.min_eig".into(), l.min_eig.to_string()));
        }
        if let Some(b) = &self.beta_growth {
            kv.push(("beta_growth.passes".into(), b.passes.to_string()));
            kv.push(("beta_growth.cases".into(), b.cases.to_string()));
            kv.push(("beta_growth.failures".into(), b.failures.len().to_string()));
        }
        if let Some(c) = &self.corollary_linear {
            kv.push(("corollary_linear.holds".into(), c.holds.to_string()));
            kv.push((
                "corollary_linear.condition_holds".into(),
                c.condition_holds.to_string(),
            ));
            kv.push((
                "corollary_linear.nussbaum".into(),
                format!("{:?}", c.nussbaum),
            ));
        }
        kv.push(("overall.passes".into(), self.passes().to_string()));
        kv.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Grid sizes used by [`certify`].
pub const S_GRID_EXTENT: f64 = 100.0;
pub const S_GRID_POINTS: usize = 201;
pub const LAMBDA_GRID_POINTS: usize = 1000;

pub fn certify(
    plant: &PlantSpec,
    ctrl: &ControllerSpec,
    ell_factor: f64,
) -> Result<CertificateReport, AnalysisError> {
    let ControllerSpec::NonlinearPi { lambda, gain } = ctrl else {
        return Err(AnalysisError::NotNonlinearPi);
    };
    if !(ell_factor > 1.0 && ell_factor.is_finite()) {
        return Err(AnalysisError::InvalidParams(format!(
            "ell_factor must exceed 1, got {ell_factor}"
        )));
    }
    let mut params = CertificateParams::from_loop(plant, *lambda, 0.0);
    let condition_i = check_condition_i(params.epsilon, params.lambda, params.alpha2);
    let beta_growth = gain.beta().map(|b| beta_growth_summary(&b)).transpose()?;
    let linear_alpha = plant
        .sector
        .is_linear()
        .filter(|_| plant.sector.alpha1 == plant.sector.alpha2);
    let corollary_linear = linear_alpha
        .map(|alpha| corollary_linear_check(params.epsilon, params.lambda, alpha, gain))
        .transpose()?;

    if !condition_i.holds {
        return Ok(CertificateReport {
            params,
            condition_i,
            ell_threshold: None,
            s_nonneg: None,
            lambda_pd: None,
            beta_growth,
            corollary_linear,
        });
    }
    let threshold = ell_threshold(&params)?;
    params.ell = ell_factor * threshold;
    Ok(CertificateReport {
        params,
        condition_i,
        ell_threshold: Some(threshold),
        s_nonneg: Some(sweep_s(&params, S_GRID_EXTENT, S_GRID_POINTS)),
        lambda_pd: Some(sweep_lambda(&params, LAMBDA_GRID_POINTS)),
        beta_growth,
        corollary_linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sign_varying_params(ell: f64) -> CertificateParams {
        CertificateParams {
            epsilon: 0.1,
            lambda: 0.5,
            alpha1: -3.0,
            alpha2: 9.0,
            b: 1.0,
            ell,
        }
    }

    #[test]
    fn condition_i_examples() {
        let c = check_condition_i(0.1, 0.15, 0.8);
        assert!(c.holds);
        assert!((c.margin - 0.905).abs() < 1e-12);
        let c = check_condition_i(0.1, 0.5, 9.0);
        assert!(c.holds);
        assert!((c.margin - 0.05).abs() < 1e-12);
        let c = check_condition_i(0.2, 0.5, 9.0);
        assert!(!c.holds);
        assert!((c.margin + 0.9).abs() < 1e-12);
    }

    #[test]
    fn ell_threshold_examples() {
        let t = ell_threshold(&sign_varying_params(0.0)).unwrap();
        assert!((t - 1525.225).abs() < 1e-9 * 1525.225);

        let p = CertificateParams {
            epsilon: 0.1,
            lambda: 0.15,
            alpha1: 0.8,
            alpha2: 0.8,
            b: 0.05,
            ell: 0.0,
        };
        // 361 · 0.8464 / 0.543
        let by_hand = 361.0 * (0.92 * 0.92) / (4.0 * 0.15 * 0.905);
        assert!((ell_threshold(&p).unwrap() - by_hand).abs() < 1e-9);
        assert!((by_hand - 562.7079).abs() < 1e-3);

        let big_b = CertificateParams {
            b: 1e9,
            ..sign_varying_params(0.0)
        };
        assert!(ell_threshold(&big_b).unwrap() < 1e-12);
    }

    #[test]
    fn ell_threshold_needs_condition_i() {
        let p = CertificateParams {
            epsilon: 0.2,
            ..sign_varying_params(0.0)
        };
        assert!(matches!(
            ell_threshold(&p),
            Err(AnalysisError::UndefinedThreshold { .. })
        ));
    }

    #[test]
    fn s_value_examples() {
        let p = sign_varying_params(1526.0);
        assert_eq!(s_value(0.0, 0.0, &p), 0.0);
        assert!((s_value(1.0, 0.0, &p) - 0.05).abs() < 1e-15);
        assert!((s_value(1.0, 1.0, &p) - 764.0).abs() < 1e-9);
    }

    #[test]
    fn lambda_matrix_examples() {
        let p = CertificateParams {
            epsilon: 0.0,
            lambda: 1.0,
            alpha1: 0.0,
            alpha2: 0.0,
            b: 1.0,
            ell: 1.0,
        };
        assert_eq!(lambda_matrix(0.0, &p), [[1.0, 0.5], [0.5, 1.0]]);
        assert!((lambda_matrix_min_eig(0.0, &p) - 0.5).abs() < 1e-15);

        let degenerate = CertificateParams { ell: 0.0, ..p };
        assert!(lambda_matrix_min_eig(0.0, &degenerate) <= 0.0);
        assert!(!lambda_pd_closed_form(0.0, &degenerate));
    }

    #[test]
    fn sign_varying_certificate_objects_are_positive() {
        let t = ell_threshold(&sign_varying_params(0.0)).unwrap();
        let p = sign_varying_params(1.01 * t);
        let s = sweep_s(&p, 100.0, 201);
        assert!(s.ok && s.closed_form_ok);
        let l = sweep_lambda(&p, 1000);
        assert!(l.ok && l.closed_form_ok, "{l:?}");
    }

    #[test]
    fn min_eig_matches_characteristic_polynomial() {
        let m = [[3.0, -1.2], [-1.2, 0.7]];
        let e = min_eig_sym2(&m);
        let det = (m[0][0] - e) * (m[1][1] - e) - m[0][1] * m[1][0];
        assert!(det.abs() < 1e-12);
        assert!(e < m[0][0].min(m[1][1]));
    }

    #[test]
    fn report_serialisations_mention_every_check() {
        let plant = PlantSpec::new(
            crate::plant::SectorFn::sin_exp(3.0, 2.0),
            1.0,
            0.1,
            crate::plant::Topology::ActuatorPerturbed,
        )
        .unwrap();
        let ctrl = ControllerSpec::NonlinearPi {
            lambda: 0.5,
            gain: GainSpec::BetaCos(BetaSpec::ExpQuadratic { c1: 1.0, c2: 0.1 }),
        };
        let r = certify(&plant, &ctrl, 1.01).unwrap();
        let kv = r.to_key_values();
        for key in [
            "condition_i.margin",
            "ell.threshold",
            "s_nonneg.ok",
            "lambda_pd.min_eig",
            "beta_growth.passes",
            "overall.passes = true",
        ] {
            assert!(kv.contains(key), "missing {key}");
        }
        assert!(r.to_text().contains("overall: PASS"));
        assert!(certify(&plant, &ctrl, 1.0).is_err());
        let ng = ControllerSpec::NussbaumGain { lambda: 0.5 };
        assert_eq!(
            certify(&plant, &ng, 1.01),
            Err(AnalysisError::NotNonlinearPi)
        );
    }
}
