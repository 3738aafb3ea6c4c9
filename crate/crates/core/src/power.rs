//! Power curves of the limit experiments and their finite-sample
//! counterparts.
//!
//! Replicate `r` is driven by the same random numbers at every `u*` and for
//! every test, so differences between curves are much less noisy than the
//! curves themselves.

use rayon::prelude::*;

use crate::calibrate::{CUSP_DU, CUSP_U_MAX, JUMP_U_MAX};
use crate::error::{Error, Result};
use crate::likelihood::Prior;
use crate::limits::{CuspDrift, FbmSynthesizer, JumpCrnSample, LimitClass};
use crate::models::IntensityModel;
use crate::rng::{derive_seed, substream, Purpose};
use crate::testing::{decide_row, size_and_power, FiniteNConfig, PowerStudy, TestSpec, ThresholdSet};

/// `{0, 0.5, …, 6}`.
pub fn default_cusp_grid() -> Vec<f64> {
    (0..=12).map(|i| i as f64 * 0.5).collect()
}

/// `{0, 1, …, 10}`.
pub fn default_jump_grid() -> Vec<f64> {
    (0..=10).map(f64::from).collect()
}

pub fn default_grid(class: LimitClass) -> Vec<f64> {
    match class {
        LimitClass::Cusp { .. } => default_cusp_grid(),
        LimitClass::Jump { .. } => default_jump_grid(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitPowerConfig {
    pub replicates: usize,
    pub u_max: f64,
    /// Cusp grid step; ignored for jumps.
    pub du: f64,
    pub seed: u64,
}

impl LimitPowerConfig {
    pub fn for_class(class: LimitClass, replicates: usize, seed: u64) -> Self {
        match class {
            LimitClass::Cusp { .. } => LimitPowerConfig {
                replicates,
                u_max: CUSP_U_MAX,
                du: CUSP_DU,
                seed,
            },
            LimitClass::Jump { .. } => LimitPowerConfig {
                replicates,
                u_max: JUMP_U_MAX,
                du: 0.0,
                seed,
            },
        }
    }
}

fn check_grid(u_stars: &[f64], u_max: f64) -> Result<()> {
    for &u in u_stars {
        if !(u >= 0.0 && u < u_max) {
            return Err(Error::InvalidParameter(format!("u* = {u} must lie in [0, {u_max})")));
        }
    }
    Ok(())
}

/// Rejection frequencies of `specs` in the limit experiment at each `u*`.
pub fn limit_power(
    class: LimitClass,
    specs: &[TestSpec],
    thresholds: &[ThresholdSet],
    u_stars: &[f64],
    cfg: &LimitPowerConfig,
) -> Result<PowerStudy> {
    check_grid(u_stars, cfg.u_max)?;
    let root = derive_seed(cfg.seed, Purpose::Power, 0);
    // the limit functionals do not depend on a prior
    let prior = Prior::Uniform;
    let rows: Vec<(Vec<f32>, usize)> = match class {
        LimitClass::Cusp { hurst } => {
            let n = (cfg.u_max / cfg.du).round() as usize;
            let synth = FbmSynthesizer::new(hurst, n, cfg.du)?;
            let drift = CuspDrift::new(hurst, cfg.du, n);
            let pairs = cfg.replicates.div_ceil(2);
            let mut rows = (0..pairs)
                .into_par_iter()
                .map(|p| {
                    let (w1, w2) = synth.sample_pair(&mut substream(root, Purpose::Fbm, p as u64));
                    let mut out = Vec::with_capacity(2);
                    for w in [w1, w2] {
                        let mut row = Vec::with_capacity(u_stars.len() * specs.len());
                        let mut truncated = 0;
                        for &u in u_stars {
                            let (r, t) = decide_row(specs, thresholds, &drift.alternative(&w, u), &prior)?;
                            row.extend(r);
                            truncated += t as usize;
                        }
                        out.push((row, truncated));
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect::<Vec<_>>();
            rows.truncate(cfg.replicates);
            rows
        }
        LimitClass::Jump { rho } => {
            let top = u_stars.iter().copied().fold(0.0, f64::max);
            (0..cfg.replicates)
                .into_par_iter()
                .map(|r| {
                    let crn = JumpCrnSample::draw(rho, top, cfg.u_max, root, r as u64);
                    let mut row = Vec::with_capacity(u_stars.len() * specs.len());
                    let mut truncated = 0;
                    for &u in u_stars {
                        let (d, t) = decide_row(specs, thresholds, &crn.trajectory(u), &prior)?;
                        row.extend(d);
                        truncated += t as usize;
                    }
                    Ok((row, truncated))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(PowerStudy::from_rows(specs.to_vec(), u_stars.to_vec(), None, cfg.seed, rows))
}

/// Finite-sample and limit power side by side.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub n_list: Vec<usize>,
    pub finite: Vec<PowerStudy>,
    pub limit: PowerStudy,
}

impl ConvergenceTable {
    /// `|β_n(u*) − β(u*)|` for spec `s` at `u*` index `u`.
    pub fn gap(&self, n_index: usize, s: usize, u: usize) -> f64 {
        (self.finite[n_index].power(s, u) - self.limit.power(s, u)).abs()
    }

    /// Binomial standard error of that gap, the two studies being independent.
    pub fn gap_sigma(&self, n_index: usize, s: usize, u: usize) -> f64 {
        let var = |st: &PowerStudy| {
            let p = st.power(s, u);
            p * (1.0 - p) / st.replicates as f64
        };
        (var(&self.finite[n_index]) + var(&self.limit)).sqrt()
    }

    /// Largest gap over the `u*` grid for each spec at each `n`, indexed `[n][spec]`.
    pub fn max_gaps(&self) -> Vec<Vec<f64>> {
        (0..self.n_list.len())
            .map(|i| {
                (0..self.limit.specs.len())
                    .map(|s| (0..self.limit.u_stars.len()).map(|u| self.gap(i, s, u)).fold(0.0, f64::max))
                    .collect()
            })
            .collect()
    }
}

/// Runs [`size_and_power`] at each `n` (thresholds from the limit calibration)
/// and [`limit_power`] on the same grid.
#[allow(clippy::too_many_arguments)]
pub fn finite_n_convergence(
    specs: &[TestSpec],
    thresholds: &[ThresholdSet],
    model: &IntensityModel,
    u_stars: &[f64],
    n_list: &[usize],
    finite: &FiniteNConfig,
    limit: &LimitPowerConfig,
) -> Result<ConvergenceTable> {
    let class = LimitClass::of_model(model);
    let mut studies = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let cfg = FiniteNConfig { n, ..finite.clone() };
        studies.push(size_and_power(specs, thresholds, model, u_stars, &cfg)?);
    }
    Ok(ConvergenceTable {
        n_list: n_list.to_vec(),
        finite: studies,
        limit: limit_power(class, specs, thresholds, u_stars, limit)?,
    })
}
