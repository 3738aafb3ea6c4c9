//! Exact simulation of inhomogeneous Poisson paths by thinning.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::IntensityModel;
use crate::rng::{substream, Purpose};

/// Event times of one observed path on `[0, τ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    events: Vec<f64>,
    pub replicate_id: u64,
    pub theta: f64,
}

impl PathSample {
    /// Validates that `events` is strictly increasing and inside `[0, tau]`.
    pub fn new(events: Vec<f64>, replicate_id: u64, theta: f64, tau: f64) -> Result<Self> {
        for w in events.windows(2) {
            if w[1] == w[0] {
                return Err(Error::DuplicateEvent {
                    time: w[0],
                    replicate_id,
                });
            }
            if w[1] < w[0] {
                return Err(Error::Parse(format!(
                    "events of replicate {replicate_id} are not sorted ({} after {})",
                    w[1], w[0]
                )));
            }
        }
        if let Some(&t) = events.iter().find(|&&t| !(0.0..=tau).contains(&t)) {
            return Err(Error::Domain(format!(
                "event time {t} of replicate {replicate_id} outside [0, {tau}]"
            )));
        }
        Ok(PathSample {
            events,
            replicate_id,
            theta,
        })
    }

    pub fn events(&self) -> &[f64] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// `n` independent paths drawn under a common `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub paths: Vec<PathSample>,
    pub n: usize,
    pub seed_root: u64,
    pub theta: f64,
    pub model_hash: String,
}

impl Dataset {
    pub fn total_events(&self) -> usize {
        self.paths.iter().map(PathSample::len).sum()
    }

    /// All event times of all paths, merged and sorted.
    pub fn pooled_events(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.paths.iter().flat_map(|p| p.events.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all
    }
}

/// Thinning with the model's envelope, consuming `rng`.
pub(crate) fn thin<R: Rng + ?Sized>(model: &IntensityModel, theta: f64, rng: &mut R) -> Vec<f64> {
    let tau = model.tau();
    let lam_max = model.envelope();
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / lam_max;
        if t > tau {
            break;
        }
        let lam = model.rate(theta, t);
        assert!(
            lam <= lam_max,
            "thinning envelope {lam_max} exceeded: lambda({theta}, {t}) = {lam}"
        );
        if rng.random::<f64>() * lam_max < lam {
            events.push(t);
        }
    }
    events
}

/// One path, determined by `(seed_root, replicate_id)`.
pub fn sample_path(model: &IntensityModel, theta: f64, replicate_id: u64, seed_root: u64) -> Result<PathSample> {
    model.intensity(theta, 0.0)?;
    let mut rng = substream(seed_root, Purpose::PoissonPath, replicate_id);
    let events = thin(model, theta, &mut rng);
    PathSample::new(events, replicate_id, theta, model.tau())
}

/// `n` paths with replicate ids `0..n`; identical for any worker count.
pub fn sample_dataset(model: &IntensityModel, theta: f64, n: usize, seed_root: u64) -> Result<Dataset> {
    model.intensity(theta, 0.0)?;
    let paths = (0..n as u64)
        .into_par_iter()
        .map(|i| sample_path(model, theta, i, seed_root))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        paths,
        n,
        seed_root,
        theta,
        model_hash: model.hash(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CuspModel, JumpModel};
    use crate::rng::derive_seed;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn jump() -> IntensityModel {
        JumpModel::example().into()
    }

    fn cusp() -> IntensityModel {
        CuspModel::example().into()
    }

    #[test]
    fn deterministic_per_replicate() {
        let m = jump();
        let a = sample_path(&m, 3.2, 5, 11).unwrap();
        let b = sample_path(&m, 3.2, 5, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_path(&m, 3.2, 6, 11).unwrap();
        assert_ne!(a.events(), c.events());
    }

    #[test]
    fn rejects_bad_paths() {
        assert!(matches!(
            PathSample::new(vec![0.1, 0.1], 3, 1.5, 2.0),
            Err(Error::DuplicateEvent { replicate_id: 3, .. })
        ));
        assert!(PathSample::new(vec![0.2, 0.1], 0, 1.5, 2.0).is_err());
        assert!(PathSample::new(vec![2.5], 0, 1.5, 2.0).is_err());
        assert!(sample_path(&cusp(), 1.0, 0, 1).is_err());
    }

    #[test]
    fn mean_count_matches_cumulative_intensity() {
        let m = jump();
        let reps = 10_000u64;
        let counts: Vec<f64> = (0..reps)
            .map(|i| sample_path(&m, 3.0, i, 2024).unwrap().len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let lam = m.cumulative_intensity(3.0, 4.0).unwrap();
        let se = (lam / reps as f64).sqrt();
        assert!((mean - lam).abs() < 3.0 * se, "mean {mean} vs {lam}");
    }

    #[test]
    fn event_density_goodness_of_fit() {
        let m = cusp();
        let theta = 1.7;
        let bins = 40;
        let tau = m.tau();
        let mut observed = vec![0.0f64; bins];
        for i in 0..100_000u64 {
            for &t in sample_path(&m, theta, i, 99).unwrap().events() {
                observed[((t / tau * bins as f64) as usize).min(bins - 1)] += 1.0;
            }
        }
        let total: f64 = observed.iter().sum();
        let big = m.cumulative(theta, tau);
        let chi2: f64 = (0..bins)
            .map(|k| {
                let lo = tau * k as f64 / bins as f64;
                let hi = tau * (k + 1) as f64 / bins as f64;
                let expected = total * (m.cumulative(theta, hi) - m.cumulative(theta, lo)) / big;
                (observed[k] - expected).powi(2) / expected
            })
            .sum();
        let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 1e-3, "chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn disjoint_counts_uncorrelated() {
        let m = jump();
        let n = 20_000u64;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let p = sample_path(&m, 3.5, i, 5).unwrap();
                let a = p.events().iter().filter(|&&t| t < 2.0).count() as f64;
                let b = p.events().iter().filter(|&&t| t >= 2.0).count() as f64;
                (a, b)
            })
            .collect();
        let nf = n as f64;
        let ma = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
        let mb = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
        let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / nf;
        let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / nf;
        let vb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / nf;
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 4.0 / nf.sqrt(), "corr = {corr}");
    }

    #[test]
    fn dataset_total_count() {
        let m = cusp();
        assert_eq!(sample_dataset(&m, 1.5, 0, 1).unwrap().paths.len(), 0);
        let d = sample_dataset(&m, 1.5, 1000, derive_seed(3, Purpose::DatasetReplicate, 0)).unwrap();
        let lam = 1000.0 * m.cumulative(1.5, 2.0);
        assert!((d.total_events() as f64 - lam).abs() < 4.0 * lam.sqrt());
        assert!(d.paths.iter().enumerate().all(|(i, p)| p.replicate_id == i as u64));
    }

    #[test]
    fn dataset_independent_of_thread_count() {
        let m = cusp();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_dataset(&m, 1.6, 200, 8).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
