//! The five tests as decision rules on a score field.
//!
//! A score field is anything that exposes `ln Z` as a function of the local
//! parameter `u`: a finite-sample [`LogLRField`] or a [`LimitTrajectory`].
//! Every test reads one functional of it:
//!
//! | test | statistic | rejects when |
//! |------|-----------|--------------|
//! | GLRT | `ln sup Z` | `> ln h_ε` |
//! | WT   | `û` (argmax) | `> g_ε` |
//! | BT1  | `ũ` (posterior mean) | `> k_ε` |
//! | BT2  | `ln ∫Z` | `> ln m_ε` |
//! | N-PT | `ln Z(u*)` | `> ln d_ε`, randomized with `q_ε` at equality (jump) |

use std::fmt;

use rayon::prelude::*;

use crate::analytic::{cusp_npt, jump_npt};
use crate::error::{Error, Result};
use crate::likelihood::{self, build_field_with_points, LogLRField, Prior};
use crate::limits::{functional_suite, Functionals, LimitClass, LimitTrajectory};
use crate::models::IntensityModel;
use crate::rng::{derive_seed, Purpose};
use crate::simulate::sample_dataset;
use crate::stats::{wilson, Z95};

/// Distance from the critical count within which the jump N-PT randomizes.
const NPT_TIE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestKind {
    Glrt,
    Wald,
    Bayes1,
    Bayes2,
    NeymanPearson { u_star: f64 },
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestKind::Glrt => write!(f, "GLRT"),
            TestKind::Wald => write!(f, "WT"),
            TestKind::Bayes1 => write!(f, "BT1"),
            TestKind::Bayes2 => write!(f, "BT2"),
            TestKind::NeymanPearson { u_star } => write!(f, "NPT({u_star})"),
        }
    }
}

impl TestKind {
    /// Parses `GLRT`, `WT`, `BT1`, `BT2`; the N-PT needs its `u*` separately.
    pub fn parse(name: &str) -> Result<TestKind> {
        match name.to_ascii_uppercase().as_str() {
            "GLRT" => Ok(TestKind::Glrt),
            "WT" | "WALD" => Ok(TestKind::Wald),
            "BT1" => Ok(TestKind::Bayes1),
            "BT2" => Ok(TestKind::Bayes2),
            other => Err(Error::Parse(format!("unknown test {other:?}"))),
        }
    }

    /// Short name without the `u*` of the N-PT.
    pub fn label(&self) -> &'static str {
        match self {
            TestKind::Glrt => "GLRT",
            TestKind::Wald => "WT",
            TestKind::Bayes1 => "BT1",
            TestKind::Bayes2 => "BT2",
            TestKind::NeymanPearson { .. } => "NPT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestSpec {
    pub kind: TestKind,
    pub eps: f64,
}

impl TestSpec {
    pub fn new(kind: TestKind, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!("level eps = {eps} must lie in (0, 1)")));
        }
        if let TestKind::NeymanPearson { u_star } = kind {
            if !(u_star > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "the Neyman-Pearson test needs a fixed u* > 0, got {u_star}"
                )));
            }
        }
        Ok(TestSpec { kind, eps })
    }

    /// GLRT, WT, BT1 and BT2 at level `eps`.
    pub fn standard(eps: f64) -> Result<Vec<TestSpec>> {
        [TestKind::Glrt, TestKind::Wald, TestKind::Bayes1, TestKind::Bayes2]
            .into_iter()
            .map(|k| TestSpec::new(k, eps))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Copied from a published table.
    Published,
    MonteCarlo,
    Analytic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Published => "published",
            Provenance::MonteCarlo => "mc_calibrated",
            Provenance::Analytic => "analytic",
        })
    }
}

impl Provenance {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "published" => Ok(Provenance::Published),
            "mc_calibrated" => Ok(Provenance::MonteCarlo),
            "analytic" => Ok(Provenance::Analytic),
            other => Err(Error::Parse(format!("unknown provenance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub ci: Option<(f64, f64)>,
    pub stderr: Option<f64>,
    pub provenance: Provenance,
}

impl Threshold {
    pub fn exact(value: f64, provenance: Provenance) -> Self {
        Threshold {
            value,
            ci: None,
            stderr: None,
            provenance,
        }
    }
}

/// Critical values of the N-PT at one `u*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NptEntry {
    pub u_star: f64,
    pub ln_d: f64,
    /// `(D_ε, q_ε)` for the jump class.
    pub count_and_q: Option<(u64, f64)>,
}

/// All thresholds for one limit class and one `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    pub class: LimitClass,
    pub eps: f64,
    /// GLRT, on the log scale.
    pub ln_h: Option<Threshold>,
    pub g: Option<Threshold>,
    pub k: Option<Threshold>,
    /// BT2, on the log scale.
    pub ln_m: Option<Threshold>,
    npt: Vec<NptEntry>,
}

impl ThresholdSet {
    pub fn new(class: LimitClass, eps: f64) -> Self {
        ThresholdSet {
            class,
            eps,
            ln_h: None,
            g: None,
            k: None,
            ln_m: None,
            npt: Vec::new(),
        }
    }

    pub fn npt_entries(&self) -> &[NptEntry] {
        &self.npt
    }

    pub fn npt(&self, u_star: f64) -> Option<&NptEntry> {
        self.npt.iter().find(|e| e.u_star == u_star)
    }

    /// Adds the closed-form N-PT constants for `u*` (no-op if present).
    pub fn add_npt(&mut self, u_star: f64) -> Result<&NptEntry> {
        if let Some(i) = self.npt.iter().position(|e| e.u_star == u_star) {
            return Ok(&self.npt[i]);
        }
        let entry = match self.class {
            LimitClass::Cusp { hurst } => {
                let r = cusp_npt(self.eps, u_star, hurst)?;
                NptEntry {
                    u_star,
                    ln_d: r.ln_d_eps,
                    count_and_q: None,
                }
            }
            LimitClass::Jump { rho } => {
                let r = jump_npt(self.eps, u_star, rho)?;
                NptEntry {
                    u_star,
                    ln_d: r.ln_d_eps,
                    count_and_q: Some((r.d_count, r.q_eps)),
                }
            }
        };
        self.npt.push(entry);
        self.npt.sort_by(|a, b| a.u_star.total_cmp(&b.u_star));
        Ok(self.npt.iter().find(|e| e.u_star == u_star).expect("just inserted"))
    }

    fn missing(&self, kind: &TestKind) -> Error {
        Error::MissingThreshold {
            test: kind.to_string(),
            eps: self.eps,
        }
    }

    /// The threshold `spec` compares its statistic against.
    pub fn for_kind(&self, kind: &TestKind) -> Result<f64> {
        let t = match kind {
            TestKind::Glrt => self.ln_h,
            TestKind::Wald => self.g,
            TestKind::Bayes1 => self.k,
            TestKind::Bayes2 => self.ln_m,
            TestKind::NeymanPearson { u_star } => return self.npt(*u_star).map(|e| e.ln_d).ok_or_else(|| self.missing(kind)),
        };
        t.map(|t| t.value).ok_or_else(|| self.missing(kind))
    }
}

/// The set for `eps` among `sets`.
pub fn find_thresholds(sets: &[ThresholdSet], eps: f64) -> Result<&ThresholdSet> {
    sets.iter()
        .find(|s| (s.eps - eps).abs() < 1e-12)
        .ok_or(Error::MissingThreshold {
            test: "any".into(),
            eps,
        })
}

/// Access to `ln Z(u)` and to the functionals the tests read.
pub trait ScoreField {
    fn scores(&self, prior: &Prior) -> Functionals;
    fn ln_z_at(&self, u: f64) -> f64;
}

impl ScoreField for LimitTrajectory {
    fn scores(&self, _prior: &Prior) -> Functionals {
        functional_suite(self)
    }
    fn ln_z_at(&self, u: f64) -> f64 {
        LimitTrajectory::ln_z_at(self, u)
    }
}

impl ScoreField for LogLRField {
    fn scores(&self, prior: &Prior) -> Functionals {
        let est = likelihood::mle(self);
        let theta_tilde = likelihood::bayes_estimator(self, prior);
        Functionals {
            ln_sup: est.ln_sup,
            argmax: est.u_hat,
            ln_integral: likelihood::ln_averaged_lr(self, prior),
            posterior_mean: (theta_tilde - self.theta1()) / self.phi_n(),
            truncated: false,
        }
    }
    fn ln_z_at(&self, u: f64) -> f64 {
        LogLRField::ln_z_at(self, u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// Probability of rejecting the null: 0 or 1, or `q_ε` for a randomized tie.
    pub reject: f64,
    pub statistic: f64,
}

/// Decision from precomputed functionals of `field`.
pub fn decide_scored(
    spec: &TestSpec,
    thresholds: &ThresholdSet,
    scores: &Functionals,
    field: &dyn ScoreField,
) -> Result<Decision> {
    if (thresholds.eps - spec.eps).abs() > 1e-12 {
        return Err(thresholds.missing(&spec.kind));
    }
    let critical = thresholds.for_kind(&spec.kind)?;
    let statistic = match spec.kind {
        TestKind::Glrt => scores.ln_sup,
        TestKind::Wald => scores.argmax,
        TestKind::Bayes1 => scores.posterior_mean,
        TestKind::Bayes2 => scores.ln_integral,
        TestKind::NeymanPearson { u_star } => {
            let ln_z = field.ln_z_at(u_star);
            if let (LimitClass::Jump { rho }, Some(e)) = (thresholds.class, thresholds.npt(u_star)) {
                let (d, q) = e.count_and_q.expect("jump entries carry D and q");
                let count = (ln_z + (rho - 1.0) * u_star) / rho.ln();
                let reject = if (count - d as f64).abs() < NPT_TIE {
                    q
                } else if count > d as f64 {
                    1.0
                } else {
                    0.0
                };
                return Ok(Decision {
                    reject,
                    statistic: ln_z,
                });
            }
            ln_z
        }
    };
    Ok(Decision {
        reject: if statistic > critical { 1.0 } else { 0.0 },
        statistic,
    })
}

pub fn decide(spec: &TestSpec, thresholds: &ThresholdSet, field: &dyn ScoreField, prior: &Prior) -> Result<Decision> {
    decide_scored(spec, thresholds, &field.scores(prior), field)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPoint {
    pub u_star: f64,
    pub power: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub replicates: usize,
}

/// `u* ↦` rejection frequency of one test; `n = None` marks the limit experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCurve {
    pub spec: TestSpec,
    pub n: Option<usize>,
    pub seed_root: u64,
    pub points: Vec<PowerPoint>,
}

impl PowerCurve {
    pub fn at(&self, u_star: f64) -> Option<&PowerPoint> {
        self.points.iter().find(|p| p.u_star == u_star)
    }
}

/// Per-replicate decisions of several tests on common random numbers.
#[derive(Debug, Clone)]
pub struct PowerStudy {
    pub specs: Vec<TestSpec>,
    pub u_stars: Vec<f64>,
    pub n: Option<usize>,
    pub seed_root: u64,
    pub replicates: usize,
    /// Indexed `[replicate][u*][spec]`.
    decisions: Vec<f32>,
    truncated: usize,
}

impl PowerStudy {
    pub(crate) fn from_rows(
        specs: Vec<TestSpec>,
        u_stars: Vec<f64>,
        n: Option<usize>,
        seed_root: u64,
        rows: Vec<(Vec<f32>, usize)>,
    ) -> Self {
        let replicates = rows.len();
        let truncated = rows.iter().map(|r| r.1).sum();
        let decisions = rows.into_iter().flat_map(|r| r.0).collect();
        PowerStudy {
            specs,
            u_stars,
            n,
            seed_root,
            replicates,
            decisions,
            truncated,
        }
    }

    fn idx(&self, rep: usize, u: usize, s: usize) -> usize {
        (rep * self.u_stars.len() + u) * self.specs.len() + s
    }

    pub fn decision(&self, rep: usize, u: usize, s: usize) -> f64 {
        self.decisions[self.idx(rep, u, s)] as f64
    }

    /// Number of trajectories whose integral was flagged as truncated.
    pub fn truncated(&self) -> usize {
        self.truncated
    }

    pub fn spec_index(&self, kind: TestKind, eps: f64) -> Option<usize> {
        self.specs.iter().position(|s| s.kind == kind && (s.eps - eps).abs() < 1e-12)
    }

    pub fn u_index(&self, u_star: f64) -> Option<usize> {
        self.u_stars.iter().position(|&u| u == u_star)
    }

    pub fn power(&self, s: usize, u: usize) -> f64 {
        (0..self.replicates).map(|r| self.decision(r, u, s)).sum::<f64>() / self.replicates as f64
    }

    /// Mean and standard error of the paired difference `power(a) − power(b)`
    /// at `u*` index `u`.
    pub fn paired_difference(&self, a: usize, b: usize, u: usize) -> (f64, f64) {
        let n = self.replicates as f64;
        let diffs: Vec<f64> = (0..self.replicates)
            .map(|r| self.decision(r, u, a) - self.decision(r, u, b))
            .collect();
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }

    pub fn curve(&self, s: usize) -> PowerCurve {
        let points = (0..self.u_stars.len())
            .map(|u| {
                let p = self.power(s, u);
                let (ci_lo, ci_hi) = wilson(p * self.replicates as f64, self.replicates, Z95);
                PowerPoint {
                    u_star: self.u_stars[u],
                    power: p,
                    ci_lo,
                    ci_hi,
                    replicates: self.replicates,
                }
            })
            .collect();
        PowerCurve {
            spec: self.specs[s],
            n: self.n,
            seed_root: self.seed_root,
            points,
        }
    }

    pub fn curves(&self) -> Vec<PowerCurve> {
        (0..self.specs.len()).map(|s| self.curve(s)).collect()
    }

    /// The N-PT "curve" at level `eps`: at each `u*` the power of the N-PT
    /// built for that `u*`. At `u* = 0` any N-PT's null rejection rate is used.
    pub fn npt_curve(&self, eps: f64) -> Option<PowerCurve> {
        let npt: Vec<(usize, f64)> = self
            .specs
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s.kind {
                TestKind::NeymanPearson { u_star } if (s.eps - eps).abs() < 1e-12 => Some((i, u_star)),
                _ => None,
            })
            .collect();
        let first = npt.first()?.0;
        let mut points = Vec::with_capacity(self.u_stars.len());
        for (u, &u_star) in self.u_stars.iter().enumerate() {
            let s = if u_star == 0.0 {
                first
            } else {
                npt.iter().find(|(_, v)| *v == u_star)?.0
            };
            points.push(self.curve(s).points[u]);
        }
        Some(PowerCurve {
            spec: self.specs[first],
            n: self.n,
            seed_root: self.seed_root,
            points,
        })
    }
}

/// Decisions of every spec on one field, in spec order.
pub(crate) fn decide_row(
    specs: &[TestSpec],
    thresholds: &[ThresholdSet],
    field: &dyn ScoreField,
    prior: &Prior,
) -> Result<(Vec<f32>, bool)> {
    let scores = field.scores(prior);
    let mut row = Vec::with_capacity(specs.len());
    for spec in specs {
        let t = find_thresholds(thresholds, spec.eps)?;
        row.push(decide_scored(spec, t, &scores, field)?.reject as f32);
    }
    Ok((row, scores.truncated))
}

/// Settings of a finite-sample power study.
#[derive(Debug, Clone)]
pub struct FiniteNConfig {
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    /// `None`: `min(20, U_n⁺)`.
    pub u_max: Option<f64>,
    pub du: f64,
    pub prior: Prior,
}

/// Finite-sample rejection frequencies at `θ₁ + φ_n u*` for each `u*`.
///
/// Replicate `r` uses the same dataset seed at every `u*`, so curves are
/// driven by common random numbers.
pub fn size_and_power(
    specs: &[TestSpec],
    thresholds: &[ThresholdSet],
    model: &IntensityModel,
    u_stars: &[f64],
    cfg: &FiniteNConfig,
) -> Result<PowerStudy> {
    let scale = model.localization_scale(cfg.n)?;
    let thetas = u_stars
        .iter()
        .map(|&u| model.local_alternative(&scale, u))
        .collect::<Result<Vec<_>>>()?;
    let u_max = cfg.u_max.unwrap_or_else(|| likelihood::default_u_max(model, &scale));
    let extra: Vec<f64> = specs
        .iter()
        .filter_map(|s| match s.kind {
            TestKind::NeymanPearson { u_star } => Some(u_star),
            _ => None,
        })
        .collect();
    for spec in specs {
        let t = find_thresholds(thresholds, spec.eps)?;
        t.for_kind(&spec.kind)?;
    }
    let root = derive_seed(cfg.seed, Purpose::Power, cfg.n as u64);
    let rows = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let data_seed = derive_seed(root, Purpose::DatasetReplicate, r as u64);
            let mut row = Vec::with_capacity(u_stars.len() * specs.len());
            for &theta in &thetas {
                let data = sample_dataset(model, theta, cfg.n, data_seed)?;
                let field = build_field_with_points(model, &data, &scale, u_max, cfg.du, &extra)?;
                row.extend(decide_row(specs, thresholds, &field, &cfg.prior)?.0);
            }
            Ok((row, 0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerStudy::from_rows(
        specs.to_vec(),
        u_stars.to_vec(),
        Some(cfg.n),
        cfg.seed,
        rows,
    ))
}
