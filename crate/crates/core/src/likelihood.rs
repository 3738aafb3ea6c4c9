//! Finite-sample log-likelihood ratio field `u ↦ ln Z_n(u)` and the
//! estimators built on it.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{IntensityModel, LocalizationScale, ModelClass, RealFn};
use crate::quad;
use crate::simulate::Dataset;

pub const DEFAULT_DU: f64 = 0.005;
pub const DEFAULT_U_MAX: f64 = 20.0;

/// Default range of `u`: `min(20, U_n⁺)`.
pub fn default_u_max(model: &IntensityModel, scale: &LocalizationScale) -> f64 {
    DEFAULT_U_MAX.min(model.max_local_u(scale))
}

fn check_closure(model: &IntensityModel, theta: f64) -> Result<()> {
    if theta >= model.theta1() && theta <= model.b() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "theta = {theta} outside [{}, {}]",
            model.theta1(),
            model.b()
        )))
    }
}

/// Events of the dataset that can move the likelihood ratio, with
/// `ln λ(θ_ref, t)` cached per event.
struct Evaluator<'a> {
    model: &'a IntensityModel,
    events: Vec<f64>,
    base: Vec<f64>,
    n: f64,
    comp_ref: f64,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a IntensityModel, dataset: &Dataset, theta_ref: f64) -> Self {
        let cut = model.theta_free_before();
        let events: Vec<f64> = dataset.pooled_events().into_iter().filter(|&t| t >= cut).collect();
        let base = events.iter().map(|&t| model.rate(theta_ref, t).ln()).collect();
        Evaluator {
            model,
            events,
            base,
            n: dataset.n as f64,
            comp_ref: model.cumulative(theta_ref, model.tau()),
        }
    }

    /// `ln L(θ)/L(θ_ref)`; `rate_override` replaces the rate of one event,
    /// which is how the one-sided limits at a jump are taken.
    fn eval(&self, theta: f64, rate_override: Option<(usize, f64)>) -> f64 {
        let mut s = 0.0;
        for (i, (&t, &b)) in self.events.iter().zip(&self.base).enumerate() {
            let lam = match rate_override {
                Some((j, r)) if j == i => r,
                _ => self.model.rate(theta, t),
            };
            s += lam.ln() - b;
        }
        s - self.n * (self.model.cumulative(theta, self.model.tau()) - self.comp_ref)
    }
}

/// `ln L(θ, X^n) − ln L(θ_ref, X^n)`.
///
/// An event exactly on a discontinuity uses the right-continuous rate.
pub fn log_lr(model: &IntensityModel, dataset: &Dataset, theta: f64, theta_ref: f64) -> Result<f64> {
    check_closure(model, theta)?;
    check_closure(model, theta_ref)?;
    if theta == theta_ref {
        return Ok(0.0);
    }
    if model.class() == ModelClass::Jump {
        for th in [theta, theta_ref] {
            let s = model.singular_time(th);
            if dataset.paths.iter().any(|p| p.events().contains(&s)) {
                log::info!("event on the discontinuity at t = {s}; using the right limit");
            }
        }
    }
    let cut = model.theta_free_before();
    let mut s = 0.0;
    for p in &dataset.paths {
        for &t in p.events().iter().filter(|&&t| t >= cut) {
            s += (model.rate(theta, t) / model.rate(theta_ref, t)).ln();
        }
    }
    let tau = model.tau();
    Ok(s - dataset.n as f64 * (model.cumulative(theta, tau) - model.cumulative(theta_ref, tau)))
}

/// Prior density on `[θ₁, b)`.
#[derive(Clone)]
pub enum Prior {
    Uniform,
    Custom { density: RealFn, label: String },
}

impl std::fmt::Debug for Prior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Prior::Uniform => f.write_str("uniform"),
            Prior::Custom { label, .. } => write!(f, "custom({label})"),
        }
    }
}

impl Prior {
    /// Validates that `density` integrates to one on `[θ₁, b)` and is positive
    /// there, including at `θ₁` where the averaged likelihood ratio divides by it.
    pub fn custom<F>(density: F, label: &str, theta1: f64, b: f64) -> Result<Prior>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mass = quad::integrate(&density, theta1, b, 1e-13);
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "prior {label} integrates to {mass} on [{theta1}, {b}), not 1"
            )));
        }
        for i in 0..1000 {
            let th = theta1 + (b - theta1) * i as f64 / 1000.0;
            if !(density(th) > 0.0) {
                return Err(Error::InvalidParameter(format!("prior {label} is not positive at {th}")));
            }
        }
        Ok(Prior::Custom {
            density: Arc::new(density),
            label: label.to_string(),
        })
    }

    pub fn density(&self, theta: f64, theta1: f64, b: f64) -> f64 {
        match self {
            Prior::Uniform => {
                if (theta1..=b).contains(&theta) {
                    1.0 / (b - theta1)
                } else {
                    0.0
                }
            }
            Prior::Custom { density, .. } => density(theta),
        }
    }
}

/// `ln Z_n(u)` on a uniform grid plus the singular points of the field.
///
/// Nodes are sorted by `u`. At a jump of the field the same `u` appears twice:
/// first with the left limit, then with the right limit.
#[derive(Debug, Clone)]
pub struct LogLRField {
    u: Vec<f64>,
    ln_z: Vec<f64>,
    phi_n: f64,
    theta1: f64,
    b: f64,
    u_max: f64,
    du: f64,
}

impl LogLRField {
    /// A field from explicit values, mainly for injecting known shapes.
    pub fn from_values(u: Vec<f64>, ln_z: Vec<f64>, phi_n: f64, theta1: f64, b: f64) -> Result<Self> {
        if u.len() != ln_z.len() || u.is_empty() {
            return Err(Error::InvalidParameter("field needs matching, nonempty u and ln Z".into()));
        }
        if u[0] != 0.0 || u.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("field nodes must start at 0 and be sorted".into()));
        }
        if ln_z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field values must be finite".into()));
        }
        let u_max = u[u.len() - 1];
        let du = if u.len() > 1 { u_max / (u.len() - 1) as f64 } else { 0.0 };
        Ok(LogLRField {
            u,
            ln_z,
            phi_n,
            theta1,
            b,
            u_max,
            du,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.u
    }
    pub fn values(&self) -> &[f64] {
        &self.ln_z
    }
    pub fn phi_n(&self) -> f64 {
        self.phi_n
    }
    pub fn theta1(&self) -> f64 {
        self.theta1
    }
    pub fn u_max(&self) -> f64 {
        self.u_max
    }
    pub fn du(&self) -> f64 {
        self.du
    }

    pub fn theta_of(&self, u: f64) -> f64 {
        self.theta1 + self.phi_n * u
    }

    /// `ln Z_n(u)`: the stored value when `u` is a node (the left limit at a
    /// jump), otherwise linear interpolation between neighbours.
    pub fn ln_z_at(&self, u: f64) -> f64 {
        let i = self.u.partition_point(|&x| x < u);
        if i < self.u.len() && self.u[i] == u {
            return self.ln_z[i];
        }
        if i == 0 {
            return self.ln_z[0];
        }
        if i == self.u.len() {
            return self.ln_z[i - 1];
        }
        let (u0, u1) = (self.u[i - 1], self.u[i]);
        let (z0, z1) = (self.ln_z[i - 1], self.ln_z[i]);
        z0 + (z1 - z0) * (u - u0) / (u1 - u0)
    }
}

/// Evaluates the field on `[0, u_max]` with step `du`, at every singular
/// point, and at each `u` in `extra` (exactly).
pub fn build_field_with_points(
    model: &IntensityModel,
    dataset: &Dataset,
    scale: &LocalizationScale,
    u_max: f64,
    du: f64,
    extra: &[f64],
) -> Result<LogLRField> {
    if !(du > 0.0) {
        return Err(Error::InvalidParameter(format!("du = {du} must be positive")));
    }
    let limit = model.max_local_u(scale);
    if u_max > limit * (1.0 + 1e-12) || !(u_max > 0.0) {
        return Err(Error::Range {
            u_star: u_max,
            max_u_star: limit,
        });
    }
    if dataset.model_hash != model.hash() {
        return Err(Error::InvalidParameter(format!(
            "dataset was drawn from model {} but the field uses {}",
            dataset.model_hash,
            model.hash()
        )));
    }
    let theta1 = model.theta1();
    let phi = scale.phi_n;
    let ev = Evaluator::new(model, dataset, theta1);

    // (u, θ, override) triples; θ is carried separately so candidates sit
    // exactly on the event that creates them.
    let steps = (u_max / du + 1e-9).floor() as usize;
    let mut jobs: Vec<(f64, f64, Option<(usize, f64)>)> = (0..=steps)
        .map(|i| {
            let u = i as f64 * du;
            (u, theta1 + phi * u, None)
        })
        .collect();
    if steps as f64 * du < u_max {
        jobs.push((u_max, theta1 + phi * u_max, None));
    }
    for &u in extra {
        if (0.0..=u_max).contains(&u) {
            jobs.push((u, theta1 + phi * u, None));
        }
    }
    let hi = theta1 + phi * u_max;
    match model {
        IntensityModel::Cusp(_) => {
            for &t in &ev.events {
                if t > theta1 && t <= hi {
                    jobs.push(((t - theta1) / phi, t, None));
                }
            }
        }
        IntensityModel::Jump(m) => {
            let t_star = m.t_star();
            for (i, &t) in ev.events.iter().enumerate() {
                let theta = t - t_star;
                if theta > theta1 && theta <= hi {
                    let u = (theta - theta1) / phi;
                    // Just below u the event lies right of the jump, just above it lies left.
                    jobs.push((u, theta, Some((i, m.lambda_plus()))));
                    jobs.push((u, theta, Some((i, m.lambda_minus()))));
                }
            }
        }
    }
    // Stable sort keeps the left/right order of candidate pairs.
    jobs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let ln_z: Vec<f64> = jobs
        .par_iter()
        .map(|&(u, theta, ov)| if u == 0.0 { 0.0 } else { ev.eval(theta, ov) })
        .collect();
    Ok(LogLRField {
        u: jobs.iter().map(|j| j.0).collect(),
        ln_z,
        phi_n: phi,
        theta1,
        b: model.b(),
        u_max,
        du,
    })
}

pub fn build_field(
    model: &IntensityModel,
    dataset: &Dataset,
    scale: &LocalizationScale,
    u_max: f64,
    du: f64,
) -> Result<LogLRField> {
    build_field_with_points(model, dataset, scale, u_max, du, &[])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mle {
    pub theta_hat: f64,
    pub u_hat: f64,
    /// `ln sup Z_n`.
    pub ln_sup: f64,
}

/// Maximizer over all nodes, both one-sided limits included; ties go to the
/// smallest `u`.
pub fn mle(field: &LogLRField) -> Mle {
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
    for (&u, &v) in field.u.iter().zip(&field.ln_z) {
        if v > best {
            best = v;
            arg = u;
        }
    }
    Mle {
        theta_hat: field.theta_of(arg),
        u_hat: arg,
        ln_sup: best,
    }
}

/// Trapezoid sums `(ln ∫ w e^{ℓ}, ∫ v w e^{ℓ} / ∫ w e^{ℓ})` over the field,
/// with weights `w(u)` and max-subtraction.
fn weighted_moments(field: &LogLRField, weight: impl Fn(f64) -> f64) -> (f64, f64) {
    let top = field.ln_z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let g: Vec<f64> = field
        .u
        .iter()
        .zip(&field.ln_z)
        .map(|(&u, &l)| weight(u) * (l - top).exp())
        .collect();
    let (mut m0, mut m1) = (0.0, 0.0);
    for i in 1..g.len() {
        let h = field.u[i] - field.u[i - 1];
        m0 += 0.5 * h * (g[i] + g[i - 1]);
        m1 += 0.5 * h * (g[i] * field.u[i] + g[i - 1] * field.u[i - 1]);
    }
    (m0.ln() + top, m1 / m0)
}

/// Posterior mean `θ̃_n` under `prior`, restricted to the range of the field.
pub fn bayes_estimator(field: &LogLRField, prior: &Prior) -> f64 {
    let (_, u_tilde) = weighted_moments(field, |u| prior.density(field.theta_of(u), field.theta1, field.b));
    field.theta_of(u_tilde)
}

/// `ln R_n` with `R_n = ∫ Z_n(v) p(θ₁ + φ_n v)/p(θ₁) dv`.
pub fn ln_averaged_lr(field: &LogLRField, prior: &Prior) -> f64 {
    let p1 = prior.density(field.theta1, field.theta1, field.b);
    let (ln_m0, _) = weighted_moments(field, |u| prior.density(field.theta_of(u), field.theta1, field.b) / p1);
    ln_m0
}

/// `R_n`; may overflow to infinity for strong signals, see [`ln_averaged_lr`].
pub fn averaged_lr(field: &LogLRField, prior: &Prior) -> f64 {
    ln_averaged_lr(field, prior).exp()
}
