//! Singular intensity families and their localization scales.
//!
//! Two families are supported:
//!
//! * **cusp** — `λ(θ,t) = a|t−θ|^κ + h(t)` with `κ ∈ (0, ½)`; the Hurst
//!   exponent of the limit experiment is `H = κ + ½`.
//! * **jump** — `λ(θ,t) = λ(t−θ)` where the shape `λ(·)` is smooth except for
//!   a jump at `t*`, with one-sided limits `λ₊ = λ(t*+)`, `λ₋ = λ(t*−)` and
//!   ratio `ρ = λ₋/λ₊`.
//!
//! Intensities follow the càdlàg convention at the discontinuity: the value at
//! `t = t* + θ` is the right limit. [`IntensityModel::intensity_left`] gives the
//! left limit.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::quad;

/// Grid size used to check positivity of the intensity at construction.
pub const POSITIVITY_GRID: usize = 10_000;
const THETA_GRID: usize = 64;
const ENVELOPE_SAFETY: f64 = 1.001;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelClass {
    Cusp,
    Jump,
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelClass::Cusp => write!(f, "cusp"),
            ModelClass::Jump => write!(f, "jump"),
        }
    }
}

/// Smooth positive baseline `h(t)` of the cusp family.
#[derive(Clone)]
pub enum Baseline {
    Constant(f64),
    /// A callable, optionally with a closed-form antiderivative `H` (any
    /// constant of integration). Without one, `∫h` is computed by adaptive
    /// quadrature.
    Custom {
        f: RealFn,
        antiderivative: Option<RealFn>,
        label: String,
    },
}

impl Baseline {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Baseline::Constant(c) => *c,
            Baseline::Custom { f, .. } => f(t),
        }
    }

    /// `∫_a^b h(t) dt`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Baseline::Constant(c) => c * (b - a),
            Baseline::Custom {
                antiderivative: Some(big_h),
                ..
            } => big_h(b) - big_h(a),
            Baseline::Custom { f, .. } => quad::integrate(|t| f(t), a, b, 1e-12),
        }
    }

    fn label(&self) -> String {
        match self {
            Baseline::Constant(c) => format!("h_const={c}"),
            Baseline::Custom { label, .. } => format!("h={label}"),
        }
    }
}

impl fmt::Debug for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `∫_0^s |r|^κ dr` with sign, i.e. an antiderivative of `|s|^κ`.
fn signed_power_antiderivative(s: f64, kappa: f64) -> f64 {
    s.signum() * s.abs().powf(kappa + 1.0) / (kappa + 1.0)
}

#[derive(Debug, Clone)]
pub struct CuspModel {
    a: f64,
    kappa: f64,
    baseline: Baseline,
    theta1: f64,
    b: f64,
    tau: f64,
    envelope: f64,
}

impl CuspModel {
    pub fn new(a: f64, kappa: f64, baseline: Baseline, theta1: f64, b: f64, tau: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 0.5) {
            return Err(Error::InvalidModel(format!("cusp order kappa = {kappa} must lie in (0, 1/2)")));
        }
        if a == 0.0 || !a.is_finite() {
            return Err(Error::InvalidModel(format!("cusp amplitude a = {a} must be finite and nonzero")));
        }
        if !(0.0 < theta1 && theta1 < b && b <= tau) {
            return Err(Error::InvalidModel(format!(
                "need 0 < theta1 < b <= tau, got theta1 = {theta1}, b = {b}, tau = {tau}"
            )));
        }
        let mut model = CuspModel {
            a,
            kappa,
            baseline,
            theta1,
            b,
            tau,
            envelope: 0.0,
        };
        let sup = scan_positive(|th, t| model.rate(th, t), theta1, b, tau)?;
        model.envelope = sup * ENVELOPE_SAFETY;
        Ok(model)
    }

    /// `λ(θ,t) = 2 − |t−θ|^0.4` on `[0,2]`, `Θ = [1.5, 2)`.
    pub fn example() -> Self {
        CuspModel::new(-1.0, 0.4, Baseline::Constant(2.0), 1.5, 2.0, 2.0).expect("valid built-in model")
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn hurst(&self) -> f64 {
        self.kappa + 0.5
    }
    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    fn rate(&self, theta: f64, t: f64) -> f64 {
        self.a * (t - theta).abs().powf(self.kappa) + self.baseline.value(t)
    }

    fn cumulative(&self, theta: f64, t: f64) -> f64 {
        let k = self.kappa;
        self.baseline.integral(0.0, t)
            + self.a * (signed_power_antiderivative(t - theta, k) - signed_power_antiderivative(-theta, k))
    }

    /// `Γ²_{θ₁} = 2a² B(κ+1, κ+1) / h(θ₁) · [1/cos(πκ) − 1]`.
    pub fn gamma_sq(&self) -> f64 {
        let k = self.kappa;
        let cos = (PI * k).cos();
        assert!(cos > 0.0, "cos(pi kappa) must be positive for kappa < 1/2");
        let beta = ln_beta(k + 1.0, k + 1.0).exp();
        2.0 * self.a * self.a * beta / self.baseline.value(self.theta1) * (1.0 / cos - 1.0)
    }
}

/// Shape `s ↦ λ(s)` of the jump family.
#[derive(Clone)]
pub enum JumpShape {
    /// `λ(s) = 3 − 2cos²(s)·1{s ≥ 0}`, jump at `t* = 0` from 3 down to 1.
    Cos2,
    /// Piecewise-linear interpolation of two tables meeting at `t*`.
    /// `left` covers `s < t*` and ends at `t*`; `right` starts at `t*`.
    Tabulated {
        t_star: f64,
        left: Vec<(f64, f64)>,
        right: Vec<(f64, f64)>,
    },
    /// An arbitrary callable with the jump at `t_star`; its value at `t_star`
    /// must be the right limit and `left_limit` supplies the left one.
    Custom {
        f: RealFn,
        t_star: f64,
        left_limit: f64,
        label: String,
    },
}

impl fmt::Debug for JumpShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpShape::Cos2 => f.write_str("cos2"),
            JumpShape::Tabulated { t_star, left, right } => write!(
                f,
                "tabulated(t*={t_star}, {} left knots, {} right knots)",
                left.len(),
                right.len()
            ),
            JumpShape::Custom { label, t_star, .. } => write!(f, "custom({label}, t*={t_star})"),
        }
    }
}

fn interp(table: &[(f64, f64)], s: f64) -> f64 {
    let i = table.partition_point(|&(x, _)| x <= s);
    if i == 0 {
        return table[0].1;
    }
    if i == table.len() {
        return table[table.len() - 1].1;
    }
    let (x0, y0) = table[i - 1];
    let (x1, y1) = table[i];
    y0 + (y1 - y0) * (s - x0) / (x1 - x0)
}

/// Exact `∫_a^b` of the linear interpolant of `table` (flat beyond its ends).
fn interp_integral(table: &[(f64, f64)], a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut cuts: Vec<f64> = table.iter().map(|&(x, _)| x).filter(|&x| x > a && x < b).collect();
    cuts.insert(0, a);
    cuts.push(b);
    cuts.windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * (interp(table, w[0]) + interp(table, w[1])))
        .sum()
}

impl JumpShape {
    pub fn t_star(&self) -> f64 {
        match self {
            JumpShape::Cos2 => 0.0,
            JumpShape::Tabulated { t_star, .. } | JumpShape::Custom { t_star, .. } => *t_star,
        }
    }

    /// Right-continuous value.
    pub fn value(&self, s: f64) -> f64 {
        match self {
            JumpShape::Cos2 => {
                if s >= 0.0 {
                    let c = s.cos();
                    3.0 - 2.0 * c * c
                } else {
                    3.0
                }
            }
            JumpShape::Tabulated { t_star, left, right } => {
                if s >= *t_star {
                    interp(right, s)
                } else {
                    interp(left, s)
                }
            }
            JumpShape::Custom { f, .. } => f(s),
        }
    }

    /// Left limit; differs from [`JumpShape::value`] only at `t*`.
    pub fn value_left(&self, s: f64) -> f64 {
        if s != self.t_star() {
            return self.value(s);
        }
        match self {
            JumpShape::Cos2 => 3.0,
            JumpShape::Tabulated { left, t_star, .. } => interp(left, *t_star),
            JumpShape::Custom { left_limit, .. } => *left_limit,
        }
    }

    /// `∫_a^b λ(s) ds`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        match self {
            JumpShape::Cos2 => {
                let left = (b.min(0.0) - a.min(0.0)) * 3.0;
                // ∫ (3 − 2cos² s) ds = 2s − sin(2s)/2
                let anti = |s: f64| 2.0 * s - (2.0 * s).sin() / 2.0;
                let right = anti(b.max(0.0)) - anti(a.max(0.0));
                left + right
            }
            JumpShape::Tabulated { t_star, left, right } => {
                interp_integral(left, a, b.min(*t_star)) + interp_integral(right, a.max(*t_star), b)
            }
            JumpShape::Custom { f, t_star, .. } => quad::integrate_split(|s| f(s), a, b, &[*t_star], 1e-12),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JumpModel {
    shape: JumpShape,
    theta1: f64,
    b: f64,
    tau: f64,
    lambda_plus: f64,
    lambda_minus: f64,
    envelope: f64,
}

impl JumpModel {
    pub fn new(shape: JumpShape, theta1: f64, b: f64, tau: f64) -> Result<Self> {
        if !(0.0 < theta1 && theta1 < b && b <= tau) {
            return Err(Error::InvalidModel(format!(
                "need 0 < theta1 < b <= tau, got theta1 = {theta1}, b = {b}, tau = {tau}"
            )));
        }
        if let JumpShape::Tabulated { t_star, left, right } = &shape {
            let sorted = |v: &[(f64, f64)]| v.windows(2).all(|w| w[0].0 < w[1].0);
            if left.len() < 2 || right.len() < 2 || !sorted(left) || !sorted(right) {
                return Err(Error::InvalidModel(
                    "tabulated shape needs two strictly increasing tables of at least two knots".into(),
                ));
            }
            if left[left.len() - 1].0 != *t_star || right[0].0 != *t_star {
                return Err(Error::InvalidModel("tables must meet exactly at t*".into()));
            }
            if left[0].0 > -b || right[right.len() - 1].0 < tau - theta1 {
                return Err(Error::InvalidModel(format!(
                    "tables must cover [-b, tau - theta1] = [{}, {}]",
                    -b,
                    tau - theta1
                )));
            }
        }
        let t_star = shape.t_star();
        // t* + θ must stay inside (0, τ) for every θ ∈ [θ₁, b); b itself is excluded.
        if !(t_star > -theta1 && t_star + b <= tau) {
            return Err(Error::InvalidModel(format!(
                "jump location t* = {t_star} must satisfy -theta1 < t* <= tau - b"
            )));
        }
        let lambda_plus = shape.value(t_star);
        let lambda_minus = shape.value_left(t_star);
        if !(lambda_plus > 0.0 && lambda_minus > 0.0) {
            return Err(Error::InvalidModel(format!(
                "one-sided limits must be positive, got lambda+ = {lambda_plus}, lambda- = {lambda_minus}"
            )));
        }
        if lambda_plus == lambda_minus {
            return Err(Error::InvalidModel("shape has no jump at t* (rho = 1)".into()));
        }
        if lambda_minus < lambda_plus {
            log::warn!("jump model with rho = {} < 1; analytic thresholds are unavailable", lambda_minus / lambda_plus);
        }
        let mut model = JumpModel {
            shape,
            theta1,
            b,
            tau,
            lambda_plus,
            lambda_minus,
            envelope: 0.0,
        };
        let sup = scan_positive(|th, t| model.shape.value(t - th), theta1, b, tau)?;
        model.envelope = sup.max(lambda_minus) * ENVELOPE_SAFETY;
        Ok(model)
    }

    /// `λ(t−θ) = 3 − 2cos²(t−θ)·1{t ≥ θ}`: `λ₊ = 1`, `λ₋ = 3`, `ρ = 3`.
    pub fn cos2(theta1: f64, b: f64, tau: f64) -> Result<Self> {
        JumpModel::new(JumpShape::Cos2, theta1, b, tau)
    }

    /// The cos² model on `[0,4]` with `Θ = [3,4)`.
    pub fn example() -> Self {
        JumpModel::cos2(3.0, 4.0, 4.0).expect("valid built-in model")
    }

    pub fn shape(&self) -> &JumpShape {
        &self.shape
    }
    pub fn t_star(&self) -> f64 {
        self.shape.t_star()
    }
    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }
    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }
    pub fn rho(&self) -> f64 {
        self.lambda_minus / self.lambda_plus
    }
}

/// Checks `λ > 0` on a `THETA_GRID × POSITIVITY_GRID` grid and returns the
/// largest value seen.
fn scan_positive<F: Fn(f64, f64) -> f64>(rate: F, theta1: f64, b: f64, tau: f64) -> Result<f64> {
    let mut sup = f64::NEG_INFINITY;
    for i in 0..=THETA_GRID {
        let theta = theta1 + (b - theta1) * i as f64 / THETA_GRID as f64;
        for j in 0..=POSITIVITY_GRID {
            let t = tau * j as f64 / POSITIVITY_GRID as f64;
            let v = rate(theta, t);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "intensity is not positive: lambda({theta}, {t}) = {v}"
                )));
            }
            sup = sup.max(v);
        }
    }
    Ok(sup)
}

/// Normalization `φ_n` linking `θ = θ₁ + φ_n u` to the local parameter `u`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LocalizationScale {
    pub phi_n: f64,
    pub n: usize,
    pub model_class: ModelClass,
    /// `Γ_{θ₁}` (cusp only).
    pub gamma_theta1: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum IntensityModel {
    Cusp(CuspModel),
    Jump(JumpModel),
}

impl From<CuspModel> for IntensityModel {
    fn from(m: CuspModel) -> Self {
        IntensityModel::Cusp(m)
    }
}

impl From<JumpModel> for IntensityModel {
    fn from(m: JumpModel) -> Self {
        IntensityModel::Jump(m)
    }
}

impl IntensityModel {
    pub fn class(&self) -> ModelClass {
        match self {
            IntensityModel::Cusp(_) => ModelClass::Cusp,
            IntensityModel::Jump(_) => ModelClass::Jump,
        }
    }

    pub fn theta1(&self) -> f64 {
        match self {
            IntensityModel::Cusp(m) => m.theta1,
            IntensityModel::Jump(m) => m.theta1,
        }
    }

    /// Right end of `Θ = [θ₁, b)`.
    pub fn b(&self) -> f64 {
        match self {
            IntensityModel::Cusp(m) => m.b,
            IntensityModel::Jump(m) => m.b,
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            IntensityModel::Cusp(m) => m.tau,
            IntensityModel::Jump(m) => m.tau,
        }
    }

    /// Upper bound on `λ(θ,t)` over `Θ × [0,τ]`, used as the thinning envelope.
    pub fn envelope(&self) -> f64 {
        match self {
            IntensityModel::Cusp(m) => m.envelope,
            IntensityModel::Jump(m) => m.envelope,
        }
    }

    /// Time at which `λ(θ,·)` is singular: `θ` (cusp) or `t* + θ` (jump).
    pub fn singular_time(&self, theta: f64) -> f64 {
        match self {
            IntensityModel::Cusp(_) => theta,
            IntensityModel::Jump(m) => m.t_star() + theta,
        }
    }

    /// `ρ` for the jump family.
    pub fn rho(&self) -> Option<f64> {
        match self {
            IntensityModel::Cusp(_) => None,
            IntensityModel::Jump(m) => Some(m.rho()),
        }
    }

    /// `H` for the cusp family.
    pub fn hurst(&self) -> Option<f64> {
        match self {
            IntensityModel::Cusp(m) => Some(m.hurst()),
            IntensityModel::Jump(_) => None,
        }
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if theta >= self.theta1() && theta < self.b() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "theta = {theta} outside [{}, {})",
                self.theta1(),
                self.b()
            )))
        }
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if (0.0..=self.tau()).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain(format!("t = {t} outside [0, {}]", self.tau())))
        }
    }

    /// `λ(θ,t)` with the right limit at a discontinuity.
    pub fn intensity(&self, theta: f64, t: f64) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_t(t)?;
        Ok(self.rate(theta, t))
    }

    /// `λ(θ,t−)`.
    pub fn intensity_left(&self, theta: f64, t: f64) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_t(t)?;
        Ok(self.rate_left(theta, t))
    }

    /// `Λ(θ,t) = ∫_0^t λ(θ,s) ds`.
    pub fn cumulative_intensity(&self, theta: f64, t: f64) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_t(t)?;
        Ok(self.cumulative(theta, t))
    }

    /// Unchecked `λ(θ,t)`; valid on the closure of `Θ`.
    pub(crate) fn rate(&self, theta: f64, t: f64) -> f64 {
        match self {
            IntensityModel::Cusp(m) => m.rate(theta, t),
            IntensityModel::Jump(m) => m.shape.value(t - theta),
        }
    }

    pub(crate) fn rate_left(&self, theta: f64, t: f64) -> f64 {
        match self {
            IntensityModel::Cusp(m) => m.rate(theta, t),
            IntensityModel::Jump(m) => m.shape.value_left(t - theta),
        }
    }

    pub(crate) fn cumulative(&self, theta: f64, t: f64) -> f64 {
        match self {
            IntensityModel::Cusp(m) => m.cumulative(theta, t),
            IntensityModel::Jump(m) => m.shape.integral(-theta, t - theta),
        }
    }

    /// Events earlier than this time have a rate that does not depend on
    /// `θ ∈ Θ`, so they cancel from every likelihood ratio.
    pub(crate) fn theta_free_before(&self) -> f64 {
        match self {
            IntensityModel::Jump(m) if matches!(m.shape, JumpShape::Cos2) => m.theta1 + m.t_star(),
            _ => f64::NEG_INFINITY,
        }
    }

    /// `φ_n = n^{−1/(2H)} Γ_{θ₁}^{−1/H}` (cusp) or `1/(nλ₊)` (jump).
    pub fn localization_scale(&self, n: usize) -> Result<LocalizationScale> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample size n must be at least 1".into()));
        }
        let nf = n as f64;
        Ok(match self {
            IntensityModel::Cusp(m) => {
                let h = m.hurst();
                let gamma = m.gamma_sq().sqrt();
                LocalizationScale {
                    phi_n: nf.powf(-1.0 / (2.0 * h)) * gamma.powf(-1.0 / h),
                    n,
                    model_class: ModelClass::Cusp,
                    gamma_theta1: Some(gamma),
                }
            }
            IntensityModel::Jump(m) => LocalizationScale {
                phi_n: 1.0 / (nf * m.lambda_plus),
                n,
                model_class: ModelClass::Jump,
                gamma_theta1: None,
            },
        })
    }

    /// Largest `u` with `θ₁ + φ_n u` still in the closure of `Θ`.
    pub fn max_local_u(&self, scale: &LocalizationScale) -> f64 {
        (self.b() - self.theta1()) / scale.phi_n
    }

    /// `θ₁ + φ_n u*`, rejected when it leaves `Θ`.
    pub fn local_alternative(&self, scale: &LocalizationScale, u_star: f64) -> Result<f64> {
        if !(u_star >= 0.0) {
            return Err(Error::InvalidParameter(format!("u* = {u_star} must be nonnegative")));
        }
        let theta = self.theta1() + scale.phi_n * u_star;
        if theta < self.b() {
            Ok(theta)
        } else {
            Err(Error::Range {
                u_star,
                max_u_star: self.max_local_u(scale),
            })
        }
    }

    /// Canonical one-line description, stable across runs.
    pub fn describe(&self) -> String {
        match self {
            IntensityModel::Cusp(m) => format!(
                "cusp{{a={},kappa={},{},theta1={},b={},tau={}}}",
                m.a,
                m.kappa,
                m.baseline.label(),
                m.theta1,
                m.b,
                m.tau
            ),
            IntensityModel::Jump(m) => match &m.shape {
                JumpShape::Cos2 => format!("jump_cos2{{theta1={},b={},tau={}}}", m.theta1, m.b, m.tau),
                JumpShape::Tabulated { t_star, left, right } => format!(
                    "jump_custom{{t_star={t_star},left={left:?},right={right:?},theta1={},b={},tau={}}}",
                    m.theta1, m.b, m.tau
                ),
                JumpShape::Custom { label, t_star, .. } => format!(
                    "jump_fn{{{label},t_star={t_star},theta1={},b={},tau={}}}",
                    m.theta1, m.b, m.tau
                ),
            },
        }
    }

    /// First 16 hex digits of the SHA-256 of [`IntensityModel::describe`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.describe().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cusp() -> IntensityModel {
        CuspModel::example().into()
    }

    fn jump() -> IntensityModel {
        JumpModel::example().into()
    }

    #[test]
    fn cusp_intensity_values() {
        let m = cusp();
        assert_eq!(m.intensity(1.5, 1.5).unwrap(), 2.0);
        assert_relative_eq!(m.intensity(1.5, 0.5).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn jump_intensity_before_and_at_jump() {
        let m = jump();
        assert_eq!(m.intensity(3.0, 2.9).unwrap(), 3.0);
        // càdlàg: right limit 3 − 2cos²(0) = 1 at the jump, left limit 3
        assert_eq!(m.intensity(3.0, 3.0).unwrap(), 1.0);
        assert_eq!(m.intensity_left(3.0, 3.0).unwrap(), 3.0);
    }

    #[test]
    fn domain_errors() {
        let m = cusp();
        assert!(matches!(m.intensity(1.4, 1.0), Err(Error::Domain(_))));
        assert!(matches!(m.intensity(2.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(m.intensity(1.6, 2.1), Err(Error::Domain(_))));
        assert!(matches!(m.cumulative_intensity(1.6, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn cumulative_closed_forms() {
        let m = cusp();
        assert_eq!(m.cumulative_intensity(1.5, 0.0).unwrap(), 0.0);
        let expect = 4.0 - (1.5f64.powf(1.4) + 0.5f64.powf(1.4)) / 1.4;
        assert_relative_eq!(m.cumulative_intensity(1.5, 2.0).unwrap(), expect, epsilon = 1e-12);

        let j = jump();
        assert_eq!(j.cumulative_intensity(3.0, 0.0).unwrap(), 0.0);
        let on_jump_side = j.cumulative_intensity(3.0, 4.0).unwrap() - j.cumulative_intensity(3.0, 3.0).unwrap();
        assert_relative_eq!(on_jump_side, 2.0 - 2f64.sin() / 2.0, epsilon = 1e-13);
        assert_relative_eq!(j.cumulative_intensity(3.0, 4.0).unwrap(), 11.0 - 2f64.sin() / 2.0, epsilon = 1e-13);
    }

    #[test]
    fn cumulative_matches_quadrature() {
        for m in [cusp(), jump()] {
            for &theta in &[m.theta1(), 0.5 * (m.theta1() + m.b())] {
                let tau = m.tau();
                let sing = m.singular_time(theta);
                let q = quad::integrate_split(|t| m.rate(theta, t), 0.0, tau, &[sing], 1e-12);
                assert!((m.cumulative(theta, tau) - q).abs() < 1e-10, "{} {theta}", m.describe());
            }
        }
    }

    #[test]
    fn custom_baseline_uses_quadrature() {
        let f: RealFn = Arc::new(|t: f64| 2.0 + 0.1 * t.sin());
        let base = Baseline::Custom {
            f,
            antiderivative: None,
            label: "2+0.1sin".into(),
        };
        let m: IntensityModel = CuspModel::new(-1.0, 0.4, base, 1.5, 2.0, 2.0).unwrap().into();
        let q = quad::integrate_split(|t| m.rate(1.7, t), 0.0, 1.3, &[1.7], 1e-13);
        assert!((m.cumulative(1.7, 1.3) - q).abs() < 1e-10);
    }

    #[test]
    fn gamma_and_phi() {
        let m = cusp();
        let IntensityModel::Cusp(c) = &m else { unreachable!() };
        // B(1.4,1.4)·[1/cos(0.4π) − 1]; the factor 2a²/h(θ₁) equals 1 here
        assert_relative_eq!(c.gamma_sq(), 1.050_000_180_3, epsilon = 1e-9);
        let s = m.localization_scale(1000).unwrap();
        assert_relative_eq!(s.phi_n, 0.020_968_214_905, epsilon = 1e-10);

        let j = jump();
        assert_relative_eq!(j.localization_scale(100).unwrap().phi_n, 0.01, epsilon = 1e-16);
        assert!(matches!(j.localization_scale(0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn gamma_sq_agrees_with_beta_quadrature() {
        let IntensityModel::Cusp(c) = cusp() else { unreachable!() };
        let k = c.kappa();
        // B(k+1,k+1) = 2∫_0^{1/2} x^k (1−x)^k dx; substitute x = y^{1/(k+1)} to remove the endpoint singularity.
        let p = 1.0 / (k + 1.0);
        let half = quad::integrate(
            |y: f64| {
                let x = y.powf(p);
                (1.0 - x).powf(k) * p
            },
            0.0,
            0.5f64.powf(k + 1.0),
            1e-15,
        );
        let beta = 2.0 * half;
        let by_quad = 2.0 * c.a() * c.a() * beta / 2.0 * (1.0 / (PI * k).cos() - 1.0);
        assert_relative_eq!(by_quad, c.gamma_sq(), max_relative = 1e-10);
    }

    #[test]
    fn phi_scaling_invariant() {
        let m = cusp();
        let h = m.hurst().unwrap();
        let c0 = m.localization_scale(1).unwrap().phi_n;
        let mut prev = f64::INFINITY;
        for n in [1usize, 10, 100, 1000, 10_000] {
            let phi = m.localization_scale(n).unwrap().phi_n;
            assert!(phi < prev);
            prev = phi;
            assert_relative_eq!(phi * (n as f64).powf(1.0 / (2.0 * h)), c0, max_relative = 1e-12);
        }
    }

    #[test]
    fn local_alternatives() {
        let j = jump();
        let s = j.localization_scale(100).unwrap();
        assert_eq!(j.local_alternative(&s, 0.0).unwrap(), 3.0);
        assert_relative_eq!(j.local_alternative(&s, 5.0).unwrap(), 3.05, epsilon = 1e-15);
        match j.local_alternative(&s, 100.0) {
            Err(Error::Range { max_u_star, .. }) => assert_relative_eq!(max_u_star, 100.0, epsilon = 1e-9),
            other => panic!("expected range error, got {other:?}"),
        }

        let c = cusp();
        let s = c.localization_scale(1000).unwrap();
        let ok = 1.5 + 25.0 * s.phi_n < 2.0;
        assert_eq!(c.local_alternative(&s, 25.0).is_ok(), ok);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(CuspModel::new(-1.0, 0.5, Baseline::Constant(2.0), 1.5, 2.0, 2.0).is_err());
        assert!(CuspModel::new(0.0, 0.4, Baseline::Constant(2.0), 1.5, 2.0, 2.0).is_err());
        assert!(CuspModel::new(-1.0, 0.4, Baseline::Constant(2.0), 1.5, 2.5, 2.0).is_err());
        // 1 − |t−θ|^0.4 hits zero on [0,2]
        assert!(CuspModel::new(-1.0, 0.4, Baseline::Constant(1.0), 1.5, 2.0, 2.0).is_err());
        // jump would leave (0, τ)
        assert!(JumpModel::cos2(3.0, 4.0, 3.5).is_err());
    }

    #[test]
    fn tabulated_shape_matches_cos2_roughly() {
        let t_star = 0.0;
        let left = vec![(-4.0, 3.0), (0.0, 3.0)];
        let right: Vec<(f64, f64)> = (0..=100)
            .map(|i| {
                let s = i as f64 * 0.01;
                (s, 3.0 - 2.0 * s.cos().powi(2))
            })
            .collect();
        let m: IntensityModel =
            JumpModel::new(JumpShape::Tabulated { t_star, left, right }, 3.0, 4.0, 4.0).unwrap().into();
        assert_eq!(m.rho(), Some(3.0));
        let exact: IntensityModel = jump();
        let a = m.cumulative_intensity(3.2, 4.0).unwrap();
        let b = exact.cumulative_intensity(3.2, 4.0).unwrap();
        assert!((a - b).abs() < 1e-4);
    }

    #[test]
    fn jump_cumulative_continuous_across_jump() {
        let j = jump();
        let t0 = j.singular_time(3.3);
        let below = j.cumulative(3.3, t0 - 1e-12);
        let above = j.cumulative(3.3, t0 + 1e-12);
        assert!((above - below).abs() < 1e-10);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(cusp().hash(), cusp().hash());
        assert_ne!(cusp().hash(), jump().hash());
        assert_eq!(cusp().hash().len(), 16);
    }
}
