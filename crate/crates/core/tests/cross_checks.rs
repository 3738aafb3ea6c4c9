//! Monte Carlo against closed forms, finite n against the limit, and
//! reproducibility across worker counts.

use singular_lrt::analytic::{gamma_of_rho, pyke_tail, PflugLaw};
use singular_lrt::calibrate::{calibrate, null_functionals, published_sets, CalibrationConfig};
use singular_lrt::likelihood::{build_field, mle};
use singular_lrt::limits::LimitClass;
use singular_lrt::models::{IntensityModel, JumpModel};
use singular_lrt::power::{limit_power, LimitPowerConfig};
use singular_lrt::rng::{derive_seed, Purpose};
use singular_lrt::simulate::sample_dataset;
use singular_lrt::stats::{ks_pvalue, ks_statistic, ks_two_sample};
use singular_lrt::testing::{TestKind, TestSpec};

use rayon::prelude::*;

const RHO: f64 = 3.0;

fn jump_null(m: usize, seed: u64) -> Vec<singular_lrt::limits::Functionals> {
    let class = LimitClass::Jump { rho: RHO };
    null_functionals(class, &CalibrationConfig::for_class(class, m, seed)).unwrap()
}

#[test]
fn jump_supremum_follows_pyke() {
    let m = 20_000;
    let gamma = gamma_of_rho(RHO);
    let fs = jump_null(m, 31);
    for x in [0.5, 1.0, 2.0] {
        let p = pyke_tail(gamma, x).unwrap();
        let hits = fs.iter().filter(|f| f.ln_sup >= RHO.ln() * x).count() as f64 / m as f64;
        let sigma = (p * (1.0 - p) / m as f64).sqrt();
        assert!((hits - p).abs() < 4.0 * sigma, "x = {x}: MC {hits} vs Pyke {p}");
    }
    let mut sups: Vec<f64> = fs.iter().map(|f| f.ln_sup / RHO.ln()).collect();
    sups.sort_by(f64::total_cmp);
    let cdf = |x: f64| {
        if x <= 0.0 {
            (1.0 - gamma, 0.0)
        } else {
            let f = 1.0 - pyke_tail(gamma, x).unwrap();
            (f, f)
        }
    };
    let d = ks_statistic(&sups, cdf);
    assert!(ks_pvalue(d, m as f64) > 1e-3, "KS distance {d}");
}

#[test]
fn jump_argmax_follows_pflug() {
    let m = 20_000;
    let gamma = gamma_of_rho(RHO);
    let law = PflugLaw::new(gamma).unwrap();
    let fs = jump_null(m, 32);
    let mut t_hat: Vec<f64> = fs.iter().map(|f| f.argmax / gamma).collect();
    t_hat.sort_by(f64::total_cmp);
    let zeros = t_hat.iter().filter(|&&t| t == 0.0).count() as f64 / m as f64;
    let sigma = (gamma * (1.0 - gamma) / m as f64).sqrt();
    assert!((zeros - law.mass_at_zero()).abs() < 4.0 * sigma);
    let d = ks_statistic(&t_hat, |z| if z <= 0.0 { (law.cdf(0.0), 0.0) } else { (law.cdf(z), law.cdf(z)) });
    assert!(ks_pvalue(d, m as f64) > 1e-3, "KS distance {d}");
}

#[test]
fn finite_n_jump_mle_approaches_limit_law() {
    let model: IntensityModel = JumpModel::example().into();
    let n = 1000;
    let reps = 1500;
    let scale = model.localization_scale(n).unwrap();
    let finite: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = sample_dataset(&model, 3.0, n, derive_seed(77, Purpose::DatasetReplicate, r)).unwrap();
            mle(&build_field(&model, &data, &scale, 20.0, 0.05).unwrap()).u_hat
        })
        .collect();
    let limit: Vec<f64> = jump_null(20_000, 33).iter().map(|f| f.argmax).collect();
    let (d, p) = ks_two_sample(&finite, &limit);
    assert!(p > 1e-3, "finite-n argmax differs from the limit: D = {d}, p = {p}");
}

#[test]
fn published_threshold_gives_nominal_size() {
    let class = LimitClass::Cusp { hurst: 0.9 };
    let sets = published_sets(1).unwrap();
    let spec = TestSpec::new(TestKind::Glrt, 0.05).unwrap();
    let m = 20_000;
    let study = limit_power(class, &[spec], &sets, &[0.0], &LimitPowerConfig::for_class(class, m, 34)).unwrap();
    let sigma = (0.05 * 0.95 / m as f64).sqrt();
    assert!((study.power(0, 0) - 0.05).abs() < 4.0 * sigma, "size {}", study.power(0, 0));
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let cusp = LimitClass::Cusp { hurst: 0.75 };
            let cfg = CalibrationConfig {
                m: 300,
                u_max: 5.0,
                du: 0.01,
                seed: 8,
            };
            let table = calibrate(cusp, &[0.1], &cfg).unwrap();
            let jump = LimitClass::Jump { rho: RHO };
            let jump_table = calibrate(jump, &[0.1], &CalibrationConfig::for_class(jump, 400, 8)).unwrap();
            let specs = TestSpec::standard(0.1).unwrap();
            let study =
                limit_power(jump, &specs, &jump_table.sets, &[0.0, 2.0], &LimitPowerConfig::for_class(jump, 500, 9))
                    .unwrap();
            (table.sets, jump_table.sets, study.curves())
        })
    };
    assert_eq!(run(1), run(3));
}
