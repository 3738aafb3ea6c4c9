//! Monte Carlo thresholds from null limit trajectories, with the closed-form
//! jump values next to them and a diff against the published tables.

use std::fmt;

use rayon::prelude::*;

use crate::analytic::{gamma_of_rho, pyke_quantile, PflugLaw};
use crate::error::{Error, Result};
use crate::limits::{functional_suite, CuspDrift, FbmSynthesizer, Functionals, JumpCrnSample, LimitClass};
use crate::rng::{derive_seed, substream, Purpose};
use crate::stats::{upper_quantile, QuantileEstimate};
use crate::testing::{Provenance, Threshold, ThresholdSet};

/// Width, in standard normal units, of the order-statistic bands.
pub const BAND_Z: f64 = 3.0;
/// Below this many trajectories a warning is logged.
pub const MIN_RECOMMENDED_M: usize = 10_000;

pub const CUSP_U_MAX: f64 = 20.0;
pub const CUSP_DU: f64 = 0.005;
/// Jump trajectories are event driven; past this horizon `Z` decays like
/// `e^{−(ρ−1)u}` and the last piece is integrated in closed form.
pub const JUMP_U_MAX: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub m: usize,
    pub u_max: f64,
    /// Grid step for the cusp class; ignored for jumps.
    pub du: f64,
    pub seed: u64,
}

impl CalibrationConfig {
    pub fn for_class(class: LimitClass, m: usize, seed: u64) -> Self {
        match class {
            LimitClass::Cusp { .. } => CalibrationConfig {
                m,
                u_max: CUSP_U_MAX,
                du: CUSP_DU,
                seed,
            },
            LimitClass::Jump { .. } => CalibrationConfig {
                m,
                u_max: JUMP_U_MAX,
                du: 0.0,
                seed,
            },
        }
    }
}

/// The four statistics of `m` null trajectories, each sorted ascending.
#[derive(Debug, Clone)]
pub struct NullSample {
    pub ln_sup: Vec<f64>,
    pub argmax: Vec<f64>,
    pub posterior_mean: Vec<f64>,
    pub ln_integral: Vec<f64>,
    pub truncated: usize,
}

impl NullSample {
    fn from_functionals(fs: &[Functionals]) -> Self {
        let sorted = |f: fn(&Functionals) -> f64| {
            let mut v: Vec<f64> = fs.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        NullSample {
            ln_sup: sorted(|f| f.ln_sup),
            argmax: sorted(|f| f.argmax),
            posterior_mean: sorted(|f| f.posterior_mean),
            ln_integral: sorted(|f| f.ln_integral),
            truncated: fs.iter().filter(|f| f.truncated).count(),
        }
    }

    pub fn len(&self) -> usize {
        self.ln_sup.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_sup.is_empty()
    }
}

/// Functionals of `cfg.m` independent null trajectories.
pub fn null_functionals(class: LimitClass, cfg: &CalibrationConfig) -> Result<Vec<Functionals>> {
    let root = derive_seed(cfg.seed, Purpose::Calibration, 0);
    match class {
        LimitClass::Cusp { hurst } => {
            if !(cfg.du > 0.0) {
                return Err(Error::InvalidParameter(format!("du = {} must be positive", cfg.du)));
            }
            let n = (cfg.u_max / cfg.du).round() as usize;
            let synth = FbmSynthesizer::new(hurst, n, cfg.du)?;
            let drift = CuspDrift::new(hurst, cfg.du, n);
            let pairs = cfg.m.div_ceil(2);
            let mut out: Vec<Functionals> = (0..pairs)
                .into_par_iter()
                .flat_map_iter(|p| {
                    let (w1, w2) = synth.sample_pair(&mut substream(root, Purpose::Fbm, p as u64));
                    [w1, w2].map(|w| functional_suite(&drift.alternative(&w, 0.0)))
                })
                .collect();
            out.truncate(cfg.m);
            Ok(out)
        }
        LimitClass::Jump { rho } => {
            if !(rho > 0.0 && rho != 1.0) {
                return Err(Error::InvalidParameter(format!("rho = {rho} must be positive and not 1")));
            }
            Ok((0..cfg.m)
                .into_par_iter()
                .map(|i| functional_suite(&JumpCrnSample::draw(rho, 0.0, cfg.u_max, root, i as u64).trajectory(0.0)))
                .collect())
        }
    }
}

/// Closed-form jump thresholds (`ρ > 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticThresholds {
    pub eps: f64,
    /// `ln ρ` times the Pyke quantile.
    pub ln_h: f64,
    /// `γ` times the Pflug quantile of `t̂`.
    pub g: f64,
}

pub fn analytic_thresholds(rho: f64, eps_list: &[f64]) -> Result<Vec<AnalyticThresholds>> {
    if !(rho > 1.0) {
        return Err(Error::Domain(format!("closed-form thresholds need rho > 1, got {rho}")));
    }
    let gamma = gamma_of_rho(rho);
    let pflug = PflugLaw::new(gamma)?;
    eps_list
        .iter()
        .map(|&eps| {
            Ok(AnalyticThresholds {
                eps,
                ln_h: rho.ln() * pyke_quantile(gamma, eps)?.x,
                g: gamma * pflug.upper_quantile(eps)?,
            })
        })
        .collect()
}

/// Calibrated thresholds of one class over a list of levels.
#[derive(Debug, Clone)]
pub struct ThresholdTable {
    pub class: LimitClass,
    pub config: CalibrationConfig,
    pub sets: Vec<ThresholdSet>,
    /// Jump class with `ρ > 1` only.
    pub analytic: Vec<AnalyticThresholds>,
    pub truncated: usize,
}

impl ThresholdTable {
    pub fn set(&self, eps: f64) -> Option<&ThresholdSet> {
        self.sets.iter().find(|s| (s.eps - eps).abs() < 1e-12)
    }

    pub fn analytic(&self, eps: f64) -> Option<&AnalyticThresholds> {
        self.analytic.iter().find(|a| (a.eps - eps).abs() < 1e-12)
    }
}

fn mc(q: QuantileEstimate) -> Threshold {
    Threshold {
        value: q.value,
        ci: Some((q.ci_lo, q.ci_hi)),
        stderr: Some(q.stderr),
        provenance: Provenance::MonteCarlo,
    }
}

/// Thresholds as `⌈(1−ε)M⌉`-th order statistics of the null functionals.
pub fn thresholds_from_sample(class: LimitClass, eps_list: &[f64], sample: &NullSample) -> Vec<ThresholdSet> {
    eps_list
        .iter()
        .map(|&eps| {
            let mut set = ThresholdSet::new(class, eps);
            set.ln_h = Some(mc(upper_quantile(&sample.ln_sup, eps, BAND_Z)));
            set.g = Some(mc(upper_quantile(&sample.argmax, eps, BAND_Z)));
            set.k = Some(mc(upper_quantile(&sample.posterior_mean, eps, BAND_Z)));
            set.ln_m = Some(mc(upper_quantile(&sample.ln_integral, eps, BAND_Z)));
            set
        })
        .collect()
}

pub fn calibrate(class: LimitClass, eps_list: &[f64], cfg: &CalibrationConfig) -> Result<ThresholdTable> {
    let mut eps_list = eps_list.to_vec();
    if eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidParameter(format!("levels {eps_list:?} must lie in (0, 1)")));
    }
    eps_list.sort_by(f64::total_cmp);
    eps_list.dedup();
    if cfg.m == 0 {
        return Err(Error::InvalidParameter("M must be positive".into()));
    }
    if cfg.m < MIN_RECOMMENDED_M {
        log::warn!("calibrating {class} with only M = {} trajectories", cfg.m);
    }
    let functionals = null_functionals(class, cfg)?;
    let sample = NullSample::from_functionals(&functionals);
    if sample.truncated > 0 {
        log::warn!(
            "{} of {} trajectories of {class} carry more than {} of their integral near u = {}; \
             consider a larger U_max",
            sample.truncated,
            sample.len(),
            crate::limits::functionals::TRUNCATION_SHARE,
            cfg.u_max
        );
    }
    let analytic = match class {
        LimitClass::Jump { rho } if rho > 1.0 => analytic_thresholds(rho, &eps_list)?,
        _ => Vec::new(),
    };
    Ok(ThresholdTable {
        class,
        config: *cfg,
        sets: thresholds_from_sample(class, &eps_list, &sample),
        analytic,
        truncated: sample.truncated,
    })
}

// ------------------------------------------------------------ reference tables

/// Levels of the published tables.
pub const REFERENCE_EPS: [f64; 6] = [0.01, 0.05, 0.10, 0.2, 0.4, 0.5];

const CUSP_H09: [[f64; 6]; 3] = [
    [2.959, 1.641, 1.081, 0.559, 0.159, 0.068],
    [3.041, 1.996, 1.521, 0.950, 0.333, 0.166],
    [2.864, 2.0776, 1.720, 1.365, 1.005, 0.885],
];

const JUMP_RHO3: [[f64; 6]; 3] = [
    [4.242, 2.607, 1.922, 1.120, 0.573, 0.191],
    [5.990, 3.556, 2.078, 1.045, 0.329, 0.099],
    [6.669, 3.937, 2.983, 2.132, 1.402, 1.196],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    LnH,
    G,
    K,
    LnM,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Statistic::LnH, Statistic::G, Statistic::K, Statistic::LnM];

    pub fn name(&self) -> &'static str {
        match self {
            Statistic::LnH => "ln_h",
            Statistic::G => "g",
            Statistic::K => "k",
            Statistic::LnM => "ln_m",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Statistic::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown statistic {s:?}")))
    }

    pub fn of(&self, set: &ThresholdSet) -> Option<Threshold> {
        match self {
            Statistic::LnH => set.ln_h,
            Statistic::G => set.g,
            Statistic::K => set.k,
            Statistic::LnM => set.ln_m,
        }
    }

    pub fn slot<'a>(&self, set: &'a mut ThresholdSet) -> &'a mut Option<Threshold> {
        match self {
            Statistic::LnH => &mut set.ln_h,
            Statistic::G => &mut set.g,
            Statistic::K => &mut set.k,
            Statistic::LnM => &mut set.ln_m,
        }
    }
}

/// Which published table matches `class`, if any.
pub fn reference_table(class: LimitClass) -> Option<u8> {
    match class {
        LimitClass::Cusp { hurst } if (hurst - 0.9).abs() < 1e-9 => Some(1),
        LimitClass::Jump { rho } if (rho - 3.0).abs() < 1e-9 => Some(2),
        _ => None,
    }
}

/// Published `ln h`, `g`, `k` at `eps` for table 1 (cusp, `H = 0.9`) or 2 (jump, `ρ = 3`).
pub fn reference_value(table: u8, stat: Statistic, eps: f64) -> Option<f64> {
    let rows = match table {
        1 => &CUSP_H09,
        2 => &JUMP_RHO3,
        _ => return None,
    };
    let row = match stat {
        Statistic::LnH => 0,
        Statistic::G => 1,
        Statistic::K => 2,
        Statistic::LnM => return None,
    };
    let col = REFERENCE_EPS.iter().position(|&e| (e - eps).abs() < 1e-12)?;
    Some(rows[row][col])
}

/// The published thresholds as threshold sets.
pub fn published_sets(table: u8) -> Result<Vec<ThresholdSet>> {
    let class = match table {
        1 => LimitClass::Cusp { hurst: 0.9 },
        2 => LimitClass::Jump { rho: 3.0 },
        other => return Err(Error::InvalidParameter(format!("there is no table {other}"))),
    };
    Ok(REFERENCE_EPS
        .iter()
        .map(|&eps| {
            let mut set = ThresholdSet::new(class, eps);
            for stat in [Statistic::LnH, Statistic::G, Statistic::K] {
                *stat.slot(&mut set) = reference_value(table, stat, eps).map(|v| Threshold::exact(v, Provenance::Published));
            }
            set
        })
        .collect())
}

/// Allowed absolute deviation from the published value.
pub fn tolerance(stat: Statistic, provenance: Provenance) -> f64 {
    match (stat, provenance) {
        (Statistic::LnH, _) => 0.10,
        (Statistic::G, Provenance::Analytic) => 0.20,
        _ => 0.15,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDiff {
    pub eps: f64,
    pub statistic: Statistic,
    pub provenance: Provenance,
    pub reference: f64,
    pub value: f64,
    pub tolerance: f64,
}

impl CellDiff {
    pub fn abs_dev(&self) -> f64 {
        (self.value - self.reference).abs()
    }
    pub fn rel_dev(&self) -> f64 {
        self.abs_dev() / self.reference.abs()
    }
    pub fn within(&self) -> bool {
        self.abs_dev() <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub table: Option<u8>,
    pub cells: Vec<CellDiff>,
    /// Why nothing was compared.
    pub skipped: Option<String>,
}

impl ComparisonReport {
    pub fn all_within(&self) -> bool {
        self.cells.iter().all(CellDiff::within)
    }
    pub fn failures(&self) -> impl Iterator<Item = &CellDiff> {
        self.cells.iter().filter(|c| !c.within())
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(why) = &self.skipped {
            return writeln!(f, "no comparison: {why}");
        }
        writeln!(f, "table {}", self.table.unwrap_or(0))?;
        writeln!(
            f,
            "{:>6} {:>5} {:>13} {:>9} {:>9} {:>8} {:>8} {:>6}  status",
            "eps", "stat", "source", "reference", "value", "abs_dev", "rel_dev", "tol"
        )?;
        for c in &self.cells {
            writeln!(
                f,
                "{:>6} {:>5} {:>13} {:>9.4} {:>9.4} {:>8.4} {:>8.4} {:>6.2}  {}",
                c.eps,
                c.statistic.name(),
                c.provenance.to_string(),
                c.reference,
                c.value,
                c.abs_dev(),
                c.rel_dev(),
                c.tolerance,
                if c.within() { "ok" } else { "OUTSIDE" }
            )?;
        }
        let bad = self.failures().count();
        writeln!(f, "{} cells, {} outside tolerance", self.cells.len(), bad)
    }
}

/// Per-cell deviations of `sets` (and closed-form values) from the published table.
pub fn compare_to_reference(
    class: LimitClass,
    sets: &[ThresholdSet],
    analytic: &[AnalyticThresholds],
) -> ComparisonReport {
    let Some(table) = reference_table(class) else {
        return ComparisonReport {
            table: None,
            cells: Vec::new(),
            skipped: Some(format!("{class} matches no published table (cusp H=0.9 or jump rho=3)")),
        };
    };
    let mut cells = Vec::new();
    for set in sets {
        for stat in [Statistic::LnH, Statistic::G, Statistic::K] {
            if let (Some(t), Some(r)) = (stat.of(set), reference_value(table, stat, set.eps)) {
                cells.push(CellDiff {
                    eps: set.eps,
                    statistic: stat,
                    provenance: t.provenance,
                    reference: r,
                    value: t.value,
                    tolerance: tolerance(stat, t.provenance),
                });
            }
        }
    }
    for a in analytic {
        for (stat, v) in [(Statistic::LnH, a.ln_h), (Statistic::G, a.g)] {
            if let Some(r) = reference_value(table, stat, a.eps) {
                cells.push(CellDiff {
                    eps: a.eps,
                    statistic: stat,
                    provenance: Provenance::Analytic,
                    reference: r,
                    value: v,
                    tolerance: tolerance(stat, Provenance::Analytic),
                });
            }
        }
    }
    ComparisonReport {
        table: Some(table),
        cells,
        skipped: None,
    }
}

pub fn compare_table(table: &ThresholdTable) -> ComparisonReport {
    compare_to_reference(table.class, &table.sets, &table.analytic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn published_values_compare_exactly() {
        let sets = published_sets(1).unwrap();
        let r = compare_to_reference(LimitClass::Cusp { hurst: 0.9 }, &sets, &[]);
        assert_eq!(r.cells.len(), 18);
        assert!(r.cells.iter().all(|c| c.abs_dev() == 0.0));
        assert!(r.all_within());
    }

    #[test]
    fn corrupted_cell_is_flagged() {
        let mut sets = published_sets(1).unwrap();
        sets[1].g.as_mut().unwrap().value += 0.3;
        let r = compare_to_reference(LimitClass::Cusp { hurst: 0.9 }, &sets, &[]);
        let bad: Vec<_> = r.failures().collect();
        assert_eq!(bad.len(), 1);
        assert_eq!((bad[0].eps, bad[0].statistic), (0.05, Statistic::G));
        assert!(r.to_string().contains("OUTSIDE"));
    }

    #[test]
    fn other_parameters_are_skipped() {
        let r = compare_to_reference(LimitClass::Cusp { hurst: 0.75 }, &[], &[]);
        assert!(r.skipped.is_some());
        assert!(r.cells.is_empty());
    }

    #[test]
    fn analytic_jump_thresholds() {
        let a = analytic_thresholds(3.0, &[0.05]).unwrap();
        let gamma = gamma_of_rho(3.0);
        let tail = crate::analytic::pyke_tail(gamma, a[0].ln_h / 3f64.ln()).unwrap();
        assert_abs_diff_eq!(tail, 0.05, epsilon = 1e-8);
        assert_abs_diff_eq!(a[0].ln_h, 2.607, epsilon = 0.10);
        assert!(analytic_thresholds(0.5, &[0.05]).is_err());
    }

    #[test]
    fn small_cusp_calibration_is_monotone_and_reproducible() {
        let class = LimitClass::Cusp { hurst: 0.75 };
        let cfg = CalibrationConfig {
            m: 400,
            u_max: 10.0,
            du: 0.02,
            seed: 5,
        };
        let a = calibrate(class, &[0.5, 0.1, 0.01], &cfg).unwrap();
        let b = calibrate(class, &[0.01, 0.1, 0.5], &cfg).unwrap();
        assert_eq!(a.sets, b.sets);
        for stat in Statistic::ALL {
            let v: Vec<f64> = a.sets.iter().map(|s| stat.of(s).unwrap().value).collect();
            assert!(v.windows(2).all(|w| w[0] >= w[1]), "{stat:?}: {v:?}");
        }
        let t = a.set(0.1).unwrap().ln_h.unwrap();
        let (lo, hi) = t.ci.unwrap();
        assert!(lo <= t.value && t.value <= hi);
    }

    #[test]
    fn jump_calibration_carries_analytic_values() {
        let class = LimitClass::Jump { rho: 3.0 };
        let t = calibrate(class, &[0.1], &CalibrationConfig::for_class(class, 2000, 3)).unwrap();
        assert_eq!(t.analytic.len(), 1);
        let mc = t.sets[0].ln_h.unwrap();
        assert!((mc.value - t.analytic[0].ln_h).abs() < 0.3);
        assert!(calibrate(class, &[1.5], &CalibrationConfig::for_class(class, 10, 3)).is_err());
    }
}
